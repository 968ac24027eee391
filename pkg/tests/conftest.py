import csv
import random

import pytest

from csforge.records import HateSpeechRecord, Source


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {status}: {name}")

CHINESE_SENTENCES = [
    "这群人就是社会的蛀虫，全都该滚出去",
    "女人就不该出来工作，回家待着去",
    "他们那种人天生就低人一等",
    "这个地方的人全是骗子，没一个好东西",
    "说这种话的人真恶心，都是垃圾",
    "那些外地人把我们的城市搞得乌烟瘴气",
    "这种群体根本不配拥有权利",
    "看到他们就烦，整天装模作样",
    "某些人的素质实在让人无语，丢人现眼",
    "他们就是来抢我们饭碗的，赶紧滚",
]


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


@pytest.fixture
def make_record():
    def factory(i=0, text=None, length=None, score=None, source=Source.CUSTOM):
        if text is None:
            base = CHINESE_SENTENCES[i % len(CHINESE_SENTENCES)]
            text = (base * (length // len(base) + 1))[:length] if length else base
        rec = HateSpeechRecord(
            id=f"r-{i:04d}", source=source, text=text, source_label=1
        )
        rec.hate_score = score
        return rec

    return factory


@pytest.fixture
def rng():
    return random.Random(20240811)
