import pytest

from csforge.ingest import (
    FILTER_RULES,
    load_chsd,
    load_cold,
    load_records,
    load_swsr,
    merge_sources,
)
from csforge.records import Source

from conftest import write_csv


class TestLoadChsd:
    def test_label_zero_dropped(self, tmp_path):
        path = write_csv(tmp_path / "c.csv", ["text", "label"], [["a", 0], ["b", 1]])
        result = load_chsd(path)
        assert [r.text for r in result.records] == ["b"]

    def test_empty_file(self, tmp_path):
        path = write_csv(tmp_path / "c.csv", ["text", "label"], [])
        assert load_chsd(path).records == []

    def test_twenty_row_fixture(self, tmp_path):
        # 7 label-0 rows by construction -> 13 kept.
        rows = [[f"句子{i}", 0 if i < 7 else 1] for i in range(20)]
        path = write_csv(tmp_path / "c.csv", ["text", "label"], rows)
        result = load_chsd(path)
        assert len(result.records) == 13
        assert result.filtered_out == 7

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_chsd(tmp_path / "nope.csv")

    def test_malformed_rows_skipped_with_row_numbers(self, tmp_path):
        path = write_csv(
            tmp_path / "c.csv",
            ["text", "label"],
            [["好的句子", 1], ["坏行", "not-a-number"], ["另一句", 2]],
        )
        result = load_chsd(path)
        assert [r.text for r in result.records] == ["好的句子", "另一句"]
        assert len(result.skipped) == 1
        assert result.skipped[0][0] == 3  # 1-based file row, header is row 1


class TestLoadCold:
    def test_sublabel_two_kept(self, tmp_path):
        path = write_csv(
            tmp_path / "c.csv", ["text", "label", "sublabel"], [["x", 1, 2]]
        )
        assert len(load_cold(path).records) == 1

    def test_sublabel_zero_dropped(self, tmp_path):
        path = write_csv(
            tmp_path / "c.csv", ["text", "label", "sublabel"], [["x", 1, 0]]
        )
        assert load_cold(path).records == []

    def test_enumerated_fixture(self, tmp_path):
        rows = [["a", 1, 1], ["b", 1, 2], ["c", 1, 3], ["d", 0, 1]]
        path = write_csv(tmp_path / "c.csv", ["text", "label", "sublabel"], rows)
        result = load_cold(path)
        assert [r.text for r in result.records] == ["a", "b"]


class TestLoadSwsr:
    def test_kept_and_dropped(self, tmp_path):
        rows = [["a", 1, "SA"], ["b", 1, "MA"], ["c", 0, "SA"]]
        path = write_csv(tmp_path / "c.csv", ["text", "label", "category"], rows)
        result = load_swsr(path)
        assert [r.text for r in result.records] == ["a"]


class TestMergeSources:
    def test_disjoint_union(self, tmp_path):
        p1 = write_csv(tmp_path / "a.csv", ["text", "label"], [[f"x{i}", 1] for i in range(3)])
        p2 = write_csv(tmp_path / "b.csv", ["text", "label"], [[f"y{i}", 1] for i in range(4)])
        a = load_records(Source.CHSD, p1, id_prefix="a")
        b = load_records(Source.CHSD, p2, id_prefix="b")
        assert len(merge_sources(a, b)) == 7

    def test_duplicate_collapse(self, tmp_path):
        p1 = write_csv(tmp_path / "a.csv", ["text", "label"], [["same", 1], ["x", 1]])
        p2 = write_csv(tmp_path / "b.csv", ["text", "label"], [["same", 1], ["y", 1]])
        a = load_records(Source.CHSD, p1, id_prefix="a")
        b = load_records(Source.CHSD, p2, id_prefix="b")
        merged = merge_sources(a, b)
        assert len(merged) == 3
        # first occurrence wins
        assert [r for r in merged if r.text == "same"][0].id.startswith("a-")

    def test_duplicates_verified_by_set_oracle(self, tmp_path):
        texts1 = ["t1", "t2", "t3", "dup1", "dup2"]
        texts2 = ["dup1", "t4", "dup2", "dup3"]
        texts3 = ["dup3", "t5"]
        paths = []
        for name, texts in [("a", texts1), ("b", texts2), ("c", texts3)]:
            paths.append(
                write_csv(tmp_path / f"{name}.csv", ["text", "label"], [[t, 1] for t in texts])
            )
        lists = [
            load_records(Source.CHSD, p, id_prefix=f"s{i}") for i, p in enumerate(paths)
        ]
        merged = merge_sources(*lists)
        assert len(merged) == len(set(texts1 + texts2 + texts3))

    def test_no_duplicate_texts_in_output(self, tmp_path):
        p = write_csv(
            tmp_path / "a.csv", ["text", "label"], [["z", 1], ["z", 1], ["w", 1]]
        )
        merged = merge_sources(load_records(Source.CHSD, p))
        assert len({r.text for r in merged}) == len(merged)


class TestInvariants:
    def test_loaded_records_pass_their_rule(self, tmp_path):
        cold = write_csv(
            tmp_path / "cold.csv",
            ["text", "label", "sublabel"],
            [["a", 1, 1], ["b", 1, 2], ["c", 1, 0], ["d", 0, 2]],
        )
        swsr = write_csv(
            tmp_path / "swsr.csv",
            ["text", "label", "category"],
            [["e", 1, "SA"], ["f", 1, "MA"]],
        )
        for source, path in [(Source.COLD, cold), (Source.SWSR, swsr)]:
            for rec in load_records(source, path).records:
                assert FILTER_RULES[source](rec.source_label, rec.source_sublabel)

    def test_loading_is_deterministic(self, tmp_path):
        rows = [[f"句{i}", 1] for i in range(15)]
        path = write_csv(tmp_path / "c.csv", ["text", "label"], rows)
        first = load_chsd(path).records
        second = load_chsd(path).records
        assert [r.to_dict() for r in first] == [r.to_dict() for r in second]

    def test_char_length_counts_unicode_scalars(self, tmp_path):
        path = write_csv(tmp_path / "c.csv", ["text", "label"], [["你好ok", 1]])
        rec = load_chsd(path).records[0]
        assert rec.char_length == 4

    def test_schema_mapping_override(self, tmp_path):
        path = write_csv(
            tmp_path / "c.csv", ["TEXT", "toxic"], [["内容", 1], ["other", 0]]
        )
        result = load_records(
            Source.CHSD, path, schema={"text": "TEXT", "label": "toxic"}
        )
        assert [r.text for r in result.records] == ["内容"]
