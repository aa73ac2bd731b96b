from __future__ import annotations

import json

import pytest

from dfscreen import synth
from dfscreen.corpus import INCLUDE, curate, load_dataset


class TestSynthReview:
    def test_counts_and_labels(self):
        ds = synth.synth_review("R", 50, 12, k=4, seed=1)
        assert len(ds) == 50
        assert ds.include_count() == 12
        assert all(r.review_id == "R" for r in ds.records)

    def test_ids_and_titles_unique(self):
        ds = synth.synth_review("R", 200, 40, k=5, seed=2)
        ids = [r.id for r in ds.records]
        assert len(set(ids)) == len(ids)
        titles = [r.title.casefold() for r in ds.records]
        assert len(set(titles)) == len(titles)

    def test_deterministic(self):
        a = synth.synth_review("R", 30, 5, seed=9)
        b = synth.synth_review("R", 30, 5, seed=9)
        assert a.records == b.records

    def test_seed_matters(self):
        a = synth.synth_review("R", 30, 5, seed=1)
        b = synth.synth_review("R", 30, 5, seed=2)
        assert a.records != b.records

    def test_curation_is_a_no_op_on_clean_data(self):
        ds = synth.synth_review("R", 80, 20, seed=3)
        curated, report = curate(ds)
        assert report.removed_missing == 0
        assert report.removed_duplicate == 0
        assert curated.records == ds.records

    def test_too_many_includes_rejected(self):
        with pytest.raises(ValueError, match="cannot place"):
            synth.synth_review("R", 5, 6)


class TestRawReviews:
    @pytest.mark.parametrize(
        "shape", synth.BENCHMARK_REVIEWS, ids=lambda s: s.review_id
    )
    def test_curation_lands_on_registry_counts(self, shape):
        raw = synth.synth_raw_review(shape, seed=0)
        assert len(raw) == shape.retrieved
        assert raw.include_count() == shape.retrieved_includes
        curated, report = curate(raw)
        assert report.retrieved == shape.retrieved
        assert report.curated == shape.curated
        assert len(curated) == shape.curated
        assert curated.include_count() == shape.curated_includes
        assert report.removed_missing + report.removed_duplicate == (
            shape.retrieved - shape.curated
        )

    def test_curated_survivors_are_the_core(self):
        shape = synth.BENCHMARK_REVIEWS[0]
        core = synth.synth_review(
            shape.review_id, shape.curated, shape.curated_includes, k=shape.k, seed=0
        )
        raw = synth.synth_raw_review(shape, seed=0)
        curated, _ = curate(raw)
        assert [r.id for r in curated.records] == [r.id for r in core.records]

    def test_registry_shapes_are_internally_consistent(self):
        for shape in synth.BENCHMARK_REVIEWS:
            assert shape.curated <= shape.retrieved
            assert shape.curated_includes <= shape.retrieved_includes
            assert 3 <= shape.k <= 10
        assert len({s.review_id for s in synth.BENCHMARK_REVIEWS}) == 10
        assert synth.K_OVERRIDES["CD011431"] == 5


class TestWorkspace:
    def test_workspace_is_loadable(self, tmp_path):
        out = tmp_path / "ws"
        config_path = synth.write_workspace(str(out), seed=0)
        with open(config_path) as fh:
            config = json.load(fh)
        assert set(config["reviews"]) == {s.review_id for s in synth.BENCHMARK_REVIEWS}
        assert config["strategy"] == "dfsl"
        assert config["threshold"] == 0.9
        # Paths are stored relative to the config file.
        small = min(synth.BENCHMARK_REVIEWS, key=lambda s: s.retrieved)
        entry = config["reviews"][small.review_id]
        assert not entry["dataset"].startswith("/")
        ds = load_dataset(str(out / entry["dataset"]), review_id=small.review_id)
        assert len(ds) == small.retrieved
        criteria = (out / entry["criteria"]).read_text()
        assert "Include" in criteria and "Exclude" in criteria

    def test_cli_entry_point(self, tmp_path, capsys):
        rc = synth.main([str(tmp_path / "demo"), "--seed", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "config.json" in out

    def test_criteria_mentions_both_verdicts(self):
        text = synth.synth_criteria("CD000001")
        assert text.splitlines()[0].startswith("Include")
        assert "Exclude" in text


def test_include_marker_consistency():
    ds = synth.synth_review("R", 40, 10, seed=4)
    flagged = [r for r in ds.records if r.gold_label == INCLUDE]
    assert len(flagged) == 10
