"""Score a synthetic corpus with the offline judge, then grid-search the
(min length, min score) thresholds maximizing ln(avg score)*ln(avg length)*n.
"""

import random

from csforge.backends import MockJudge
from csforge.optimize import OptimizerConfig, apply_thresholds, grid_search, score_records
from csforge.records import HateSpeechRecord, Source

rng = random.Random(0)
records = [
    HateSpeechRecord(
        id=f"demo-{i:04d}",
        source=Source.CUSTOM,
        text="示例仇恨语句" * rng.randint(1, 20),
        source_label=1,
    )
    for i in range(2000)
]

judge = MockJudge()
report = score_records(records, judge, max_in_flight=8)
print(f"scored {report.scored} records, {len(report.unscored)} unscored")

cfg = OptimizerConfig(
    size_min=200,
    size_max=1500,
    length_grid=list(range(5, 80)),
    score_grid=list(range(0, 100)),
)
best, heatmap = grid_search(records, cfg)
print(
    f"best cell: min_length={best.min_length} min_score={best.min_score} "
    f"-> {best.subset_size} records, objective {best.objective:.1f} "
    f"(avg score {best.avg_hate_score:.1f}, avg length {best.avg_text_length:.1f})"
)

selected = apply_thresholds(records, best.min_length, best.min_score)
print(f"applying the thresholds keeps {len(selected)} records")

defined = sum(1 for row in heatmap for c in row if c.objective is not None)
print(f"heatmap: {len(heatmap)} x {len(heatmap[0])} cells, {defined} feasible")
