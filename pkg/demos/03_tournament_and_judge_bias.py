"""Round-robin ranking, then a demonstration of judge position on human
answers: an overlap-scoring judge prefers responses that restate the original
statement, so substantive human replies rank significantly below first place.
"""

from csforge.analysis import human_rank_study
from csforge.annotation import AnnotationRecord
from csforge.backends import LengthJudge, OverlapJudge
from csforge.records import CandidateResponse, PairRecord
from csforge.tournament import keep_top, round_robin

hs_text = "外地人都是麻烦制造者，全都该滚出我们的城市"

candidates = [
    CandidateResponse(text="外地人不是麻烦制造者，我们的城市欢迎他们", backend_id="g"),
    CandidateResponse(text="说外地人都该滚出城市并不对", backend_id="g"),
    CandidateResponse(text="请不要以偏概全", backend_id="g"),
    CandidateResponse(text="每个人都值得被尊重", backend_id="g"),
]

result = round_robin(candidates, hs_text, LengthJudge())
print("round robin under a length-scoring judge:")
for cand, avg, rank in zip(result.participants, result.avg_score, result.rank):
    print(f"  rank {rank}  avg {avg:4.1f}  {cand.text}")
print("top 2:", [c.text for c in keep_top(result, 2)])

pairs = {}
annotations = []
for i in range(30):
    hs_id = f"demo-{i:02d}"
    pairs[hs_id] = PairRecord(hs_id=hs_id, hs_text=hs_text, candidates=candidates)
    human = (
        "群体里有好有坏，以偏概全只会带来伤害"
        if i % 6
        else "外地人都是麻烦制造者吗？我们的城市不该这样说"
    )
    annotations.append(
        AnnotationRecord(hs_id=hs_id, annotator_id="A1", hate_label=1, edited_response=human)
    )

study = human_rank_study(annotations, pairs, OverlapJudge(), mu0=1.5)
ranks = study.per_annotator["A1"].ranks
print(f"\noverlap judge: human mean rank {sum(ranks) / len(ranks):.2f} over {len(ranks)} pairs")
if study.combined:
    print(
        f"one-tailed test vs 1.5: t={study.combined.t_statistic:.2f} "
        f"p={study.combined.p_value:.2g} -> ranked significantly below first place"
    )
print("rank histogram:", study.histogram_by_sample)
