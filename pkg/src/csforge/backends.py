"""Generator and judge backends.

One HTTP implementation speaks the chat-completions wire format (POST a JSON
body of exactly ``model``, ``messages``, ``temperature``); deterministic mock
implementations cover tests and offline pipeline runs. All backends throttle
to ``max_in_flight`` concurrent requests and record a high-water mark so the
cap is assertable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass

import requests

logger = logging.getLogger(__name__)

PROMPT_VERSION = "v1"

GENERATE_TEMPLATE = (
    "以下是一条仇恨言论：\n{hs}\n\n"
    "参考草稿：{seed}\n\n"
    "请写一条中文反驳言论（counterspeech），礼貌而有力地回应这条仇恨言论，"
    "不要重复其中的侮辱性内容。只输出反驳言论本身。"
)

JUDGE_TEMPLATE = (
    "仇恨言论：\n{hs}\n\n"
    "回应A：{a}\n回应B：{b}\n\n"
    "请从相关性、流畅度和有效性三方面为两条回应分别打分（1到10的数字）。"
    "第一行只输出两个数字，用空格分隔，对应回应A和回应B。"
)

HATE_TEMPLATE = (
    "{examples}请给下面这句话的仇恨程度打分，0表示完全无害，100表示极端仇恨。"
    "只输出一个0到100的数字。\n\n{text}"
)

_SCORE_PAIR_RE = re.compile(
    r"(-?\d+(?:\.\d+)?)\s*(?:[,;:/|]|\s)\s*(-?\d+(?:\.\d+)?)"
)
_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


class BackendError(Exception):
    """Transport or protocol failure after retries are exhausted."""


class ParseError(BackendError):
    """Backend answered, but no usable score/text could be extracted."""


@dataclass
class BackendConfig:
    id: str
    endpoint_url: str
    model_name: str
    api_key_env_var: str = ""
    temperature: float = 0.7
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be positive")


@dataclass
class JudgeVerdict:
    score_a: float
    score_b: float
    raw_text: str

    def __post_init__(self) -> None:
        for s in (self.score_a, self.score_b):
            if not math.isfinite(s):
                raise ValueError("judge scores must be finite")


def parse_score_pair(text: str) -> tuple[float, float]:
    """Extract the first "number separator number" pair, scanning line by line."""
    for line in text.splitlines():
        m = _SCORE_PAIR_RE.search(line)
        if m:
            return float(m.group(1)), float(m.group(2))
    raise ParseError(f"no numeric score pair in judge output: {text!r}")


def parse_hate_score(text: str) -> int:
    """First number in the reply, rounded half up and clamped to [0, 100]."""
    m = _NUMBER_RE.search(text)
    if m is None:
        raise ParseError(f"no numeric hate score in judge output: {text!r}")
    value = math.floor(float(m.group(0)) + 0.5)
    return max(0, min(100, value))


class _Throttled:
    """In-flight request cap shared by every backend implementation."""

    def __init__(self, max_in_flight: int) -> None:
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self._in_flight = 0
        self.concurrent_high_water = 0

    def _enter(self) -> None:
        self._slots.acquire()
        with self._lock:
            self._in_flight += 1
            self.concurrent_high_water = max(self.concurrent_high_water, self._in_flight)

    def _exit(self) -> None:
        with self._lock:
            self._in_flight -= 1
        self._slots.release()


def _format_seed_examples(seed_examples: list[tuple[str, int]] | None) -> str:
    if not seed_examples:
        return ""
    lines = ["以下是一些打分示例："]
    for text, score in seed_examples:
        lines.append(f"句子：{text}  分数：{score}")
    return "\n".join(lines) + "\n\n"


class HttpChatBackend(_Throttled):
    """Chat-completions client with exponential-backoff retries.

    ``sleep`` is injectable so retry behaviour is testable without waiting.
    """

    def __init__(
        self,
        config: BackendConfig,
        session: requests.Session | None = None,
        sleep=time.sleep,
        backoff_base: float = 0.5,
    ) -> None:
        super().__init__(config.max_in_flight)
        self.config = config
        self.id = config.id
        self._session = session or requests.Session()
        self._sleep = sleep
        self._backoff_base = backoff_base

    def build_request(self, prompt: str) -> dict:
        # Exactly the documented wire fields; anything else breaks the contract.
        return {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env_var:
            key = os.environ.get(self.config.api_key_env_var)
            if not key:
                raise BackendError(
                    f"backend {self.id}: environment variable "
                    f"{self.config.api_key_env_var} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, body: dict) -> str:
        resp = self._session.post(
            self.config.endpoint_url,
            json=body,
            headers=self._headers(),
            timeout=self.config.timeout,
        )
        if resp.status_code >= 400:
            raise BackendError(
                f"backend {self.id}: HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            logger.error("backend %s: malformed response body: %r", self.id, resp.text[:500])
            raise ParseError(f"backend {self.id}: malformed response body") from exc

    def _complete(self, prompt: str, parse=lambda text: text):
        """POST, parse, and retry with exponential backoff up to max_retries."""
        body = self.build_request(prompt)
        attempts = self.config.max_retries + 1
        last_exc: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                self._sleep(self._backoff_base * 2 ** (attempt - 1))
            self._enter()
            try:
                return parse(self._post(body))
            except (requests.RequestException, BackendError) as exc:
                last_exc = exc
                logger.warning(
                    "backend %s: attempt %d/%d failed: %s", self.id, attempt + 1, attempts, exc
                )
            finally:
                self._exit()
        raise BackendError(f"backend {self.id}: giving up after {attempts} attempts") from last_exc

    def generate(self, hs_text: str, seed_text: str, n: int) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        prompt = GENERATE_TEMPLATE.format(hs=hs_text, seed=seed_text)
        logger.debug("generate prompt (%s): %s", PROMPT_VERSION, prompt)
        return [self._complete(prompt) for _ in range(n)]

    def judge_pair(self, hs_text: str, answer_a: str, answer_b: str) -> JudgeVerdict:
        if not answer_a or not answer_b:
            raise ValueError("both answers must be non-empty")
        prompt = JUDGE_TEMPLATE.format(hs=hs_text, a=answer_a, b=answer_b)

        def parse(text: str) -> JudgeVerdict:
            a, b = parse_score_pair(text)
            return JudgeVerdict(a, b, text)

        return self._complete(prompt, parse)

    def rate_hate(self, text: str, seed_examples: list[tuple[str, int]] | None = None) -> int:
        prompt = HATE_TEMPLATE.format(examples=_format_seed_examples(seed_examples), text=text)
        return self._complete(prompt, parse_hate_score)


def _digest_float(*parts: str, lo: float, hi: float, decimals: int = 1) -> float:
    """Stable pseudo-random value in [lo, hi] derived from the inputs only."""
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    unit = int.from_bytes(h[:8], "big") / 2**64
    return round(lo + unit * (hi - lo), decimals)


class MockGenerator(_Throttled):
    """Deterministic offline generator.

    Output is a pure function of (hs_text, seed_text, call index): it samples
    words from the built-in Mandarin list with a digest-seeded draw, so two
    runs over the same inputs are byte-identical regardless of scheduling.
    """

    def __init__(self, backend_id: str = "mock-gen", max_in_flight: int = 8) -> None:
        super().__init__(max_in_flight)
        self.id = backend_id
        self.calls = 0
        self._count_lock = threading.Lock()

    def generate(self, hs_text: str, seed_text: str, n: int) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        from .wordlist import DEFAULT_WORDLIST

        out = []
        self._enter()
        try:
            with self._count_lock:
                self.calls += 1
            for i in range(n):
                h = hashlib.sha256(
                    f"{self.id}\x1f{hs_text}\x1f{seed_text}\x1f{i}".encode()
                ).digest()
                words = [DEFAULT_WORDLIST[b % len(DEFAULT_WORDLIST)] for b in h[:6]]
                out.append("".join(["我认为", *words, "。"]))
        finally:
            self._exit()
        return out


class EchoGenerator(_Throttled):
    """Returns n copies of the seed text."""

    def __init__(self, backend_id: str = "echo", max_in_flight: int = 8) -> None:
        super().__init__(max_in_flight)
        self.id = backend_id
        self.calls = 0

    def generate(self, hs_text: str, seed_text: str, n: int) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        self._enter()
        try:
            self.calls += 1
            return [seed_text] * n
        finally:
            self._exit()


class MockJudge(_Throttled):
    """Deterministic offline judge: scores are digests of (hs, answer)."""

    def __init__(self, backend_id: str = "mock-judge", max_in_flight: int = 8) -> None:
        super().__init__(max_in_flight)
        self.id = backend_id
        self.calls = 0
        self._count_lock = threading.Lock()

    def _score(self, hs_text: str, answer: str) -> float:
        return _digest_float(self.id, hs_text, answer, lo=1.0, hi=10.0)

    def judge_pair(self, hs_text: str, answer_a: str, answer_b: str) -> JudgeVerdict:
        if not answer_a or not answer_b:
            raise ValueError("both answers must be non-empty")
        self._enter()
        try:
            with self._count_lock:
                self.calls += 1
            a = self._score(hs_text, answer_a)
            b = self._score(hs_text, answer_b)
            return JudgeVerdict(a, b, f"{a} {b}")
        finally:
            self._exit()

    def rate_hate(self, text: str, seed_examples=None) -> int:
        self._enter()
        try:
            with self._count_lock:
                self.calls += 1
            return int(_digest_float(self.id, "hate", text, lo=0, hi=100, decimals=0))
        finally:
            self._exit()


class ConstantJudge:
    """Always returns the same (score_a, score_b)."""

    def __init__(self, score_a: float, score_b: float, hate: int = 50) -> None:
        self.id = "constant-judge"
        self.score_a = score_a
        self.score_b = score_b
        self.hate = hate
        self.calls = 0

    def judge_pair(self, hs_text: str, answer_a: str, answer_b: str) -> JudgeVerdict:
        self.calls += 1
        return JudgeVerdict(self.score_a, self.score_b, f"{self.score_a} {self.score_b}")

    def rate_hate(self, text: str, seed_examples=None) -> int:
        self.calls += 1
        return self.hate


class LengthJudge:
    """Scores every answer by its character length."""

    def __init__(self) -> None:
        self.id = "length-judge"
        self.calls = 0

    def judge_pair(self, hs_text: str, answer_a: str, answer_b: str) -> JudgeVerdict:
        self.calls += 1
        return JudgeVerdict(float(len(answer_a)), float(len(answer_b)), "")

    def rate_hate(self, text: str, seed_examples=None) -> int:
        self.calls += 1
        return max(0, min(100, len(text)))


class OverlapJudge:
    """Scores an answer by its character overlap with the hate-speech text.

    Mirrors the observed judge failure mode: answers that restate the original
    statement outscore answers that engage with it.
    """

    def __init__(self) -> None:
        self.id = "overlap-judge"
        self.calls = 0

    @staticmethod
    def _score(hs_text: str, answer: str) -> float:
        chars = [c for c in answer if not c.isspace()]
        if not chars:
            return 0.0
        hs_chars = set(hs_text)
        return 10.0 * sum(1 for c in chars if c in hs_chars) / len(chars)

    def judge_pair(self, hs_text: str, answer_a: str, answer_b: str) -> JudgeVerdict:
        self.calls += 1
        return JudgeVerdict(self._score(hs_text, answer_a), self._score(hs_text, answer_b), "")

    def rate_hate(self, text: str, seed_examples=None) -> int:
        self.calls += 1
        return 50


class KeywordHateScorer:
    """rate_hate = 10 points per keyword occurrence, clamped to [0, 100]."""

    def __init__(self, keywords: list[str]) -> None:
        self.id = "keyword-scorer"
        self.keywords = list(keywords)
        self.calls = 0

    def rate_hate(self, text: str, seed_examples=None) -> int:
        self.calls += 1
        hits = sum(text.count(k) for k in self.keywords)
        return max(0, min(100, 10 * hits))


def from_config_file(path) -> list[BackendConfig]:
    """Load a JSON list of backend configs (keys match BackendConfig fields)."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        raw = [raw]
    configs = [BackendConfig(**entry) for entry in raw]
    ids = [c.id for c in configs]
    if len(set(ids)) != len(ids):
        raise ValueError("backend ids must be unique")
    return configs
