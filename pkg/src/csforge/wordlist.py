"""Default word list used to perturb counterspeech candidates.

Neutral, high-frequency Mandarin words: discourse connectives, stance verbs,
and vocabulary common in de-escalating replies. Searches may pass their own
list instead.
"""

DEFAULT_WORDLIST: tuple[str, ...] = (
    "但是",
    "其实",
    "我们",
    "应该",
    "尊重",
    "平等",
    "理解",
    "包容",
    "每个人",
    "不要",
    "偏见",
    "事实",
    "换位思考",
    "善意",
    "沟通",
    "价值",
    "社会",
    "共同",
    "努力",
    "反思",
    "或许",
    "也许",
    "请",
    "不同",
    "观点",
    "倾听",
    "友善",
    "冷静",
    "客观",
    "证据",
    "群体",
    "个人",
)
