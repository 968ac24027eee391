"""Run the judge-guided search for one hate-speech record with offline mocks
and watch the candidate pool improve.
"""

from csforge.anneal import AnnealConfig, anneal, boltzmann_probabilities
from csforge.backends import MockGenerator, MockJudge
from csforge.records import HateSpeechRecord, Source

hs = HateSpeechRecord(
    id="demo-hs",
    source=Source.CUSTOM,
    text="这群人就是社会的蛀虫，全都该滚出去",
    source_label=1,
)

cfg = AnnealConfig(
    B=2.0,
    d=3,
    neighbors_per_step=3,
    generations_per_neighbor=3,
    pool_size=6,
    keep_top=4,
    max_iterations=4,
    rng_seed=42,
)

generators = [MockGenerator("gen-a"), MockGenerator("gen-b")]
judge = MockJudge()

print("selection sharpness: p = B^E / sum B^E")
for B in (1.5, 2.0, 4.0):
    probs = boltzmann_probabilities([6.0, 5.0, 3.0], B)
    print(f"  B={B}: {[round(p, 3) for p in probs]}")

pool = anneal(hs, cfg, generators, judge)
print(f"\nfinal pool ({len(pool)} candidates, best first):")
for cand in pool:
    print(f"  E={cand.energy:5.2f} it={cand.iteration} [{cand.backend_id}] {cand.text[:40]}")
