"""Corpus filtering, judge-guided counterspeech search, ranking, annotation."""

from .records import CandidateResponse, HateSpeechRecord, Origin, PairRecord, Source

__version__ = "0.1.0"

__all__ = [
    "CandidateResponse",
    "HateSpeechRecord",
    "Origin",
    "PairRecord",
    "Source",
    "__version__",
]
