"""End-to-end staged run on a small synthetic corpus with offline backends:
ingest -> score -> optimize -> anneal -> tournament -> annotate -> analyze.
Everything lands under ./demo_run/ with a resumable manifest.
"""

import csv
import json
from pathlib import Path

from csforge.pipeline import run_pipeline

base = Path("demo_run")
base.mkdir(exist_ok=True)

corpus = base / "corpus.csv"
sentences = [
    "这群人就是社会的蛀虫，全都该滚出去",
    "女人就不该出来工作，回家待着去",
    "他们那种人天生就低人一等",
    "这个地方的人全是骗子，没一个好东西",
    "那些外地人把我们的城市搞得乌烟瘴气",
]
with open(corpus, "w", encoding="utf-8", newline="") as fh:
    writer = csv.writer(fh)
    writer.writerow(["text", "label"])
    for i in range(15):
        writer.writerow([f"第{i:02d}条：{sentences[i % len(sentences)]}", 1])

config = {
    "seed": 7,
    "out_dir": str(base / "out"),
    "mock_backends": True,
    "sources": [{"source": "chsd", "input": str(corpus)}],
    "optimizer": {"size_min": 1, "size_max": 3000, "length_grid": [1], "score_grid": [0]},
    "anneal": {
        "B": 2.0,
        "d": 2,
        "neighbors_per_step": 3,
        "generations_per_neighbor": 3,
        "pool_size": 6,
        "keep_top": 4,
        "max_iterations": 2,
    },
    "keep_top": 4,
    "annotator": "A1",
}
config_path = base / "config.json"
config_path.write_text(json.dumps(config, ensure_ascii=False, indent=2), encoding="utf-8")

code = run_pipeline(config_path)
print(f"\npipeline exit status: {code}")

manifest = json.loads((base / "out" / "run_manifest.json").read_text("utf-8"))
for stage in manifest["stages"]:
    print(f"  {stage['name']:<10} {stage['status']:<10} {stage.get('info', {})}")
print(f"\nartifacts in {base / 'out'}:")
for path in sorted((base / "out").glob("*")):
    print(f"  {path.name}")
print("\nrerunning the same config resumes from the manifest (stages skip).")
