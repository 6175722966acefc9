"""Min-p summaries, ROC curves, AUC and DeLong intervals."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gxesim.assoc import AssocResult
from gxesim.power import (
    AucEstimate,
    NoUsableResultsError,
    ScoreVector,
    auc,
    ingest_external_scores,
    min_p_scores,
    qualitative_label,
    roc,
    summary_min_p,
    write_auc_table,
    write_roc_tsv,
)

scores = st.lists(st.integers(0, 20).map(float) | st.floats(-1e3, 1e3), min_size=1, max_size=40)
int_scores = st.lists(st.integers(-500, 500).map(float), min_size=1, max_size=40)


def pair_count_auc(x, y):
    total = 0.0
    for a in x:
        for b in y:
            total += 1.0 if a < b else 0.5 if a == b else 0.0
    return total / (len(x) * len(y))


def result(p, status="ok"):
    return AssocResult("s", 0.0 if p else None, 1.0 if p else None, p, status=status)


class TestSummaryMinP:
    def test_example(self):
        assert summary_min_p([result(0.5), result(1e-8), result(0.2)]) == pytest.approx(8.0)

    def test_single_snp_region(self):
        rows = [result(0.5), result(0.003), result(1e-9)]
        assert summary_min_p(rows, region=range(1, 2)) == pytest.approx(-math.log10(0.003))

    def test_failed_fits_skipped(self):
        rows = [result(None, "separated"), result(0.01), result(None, "degenerate")]
        assert summary_min_p(rows) == pytest.approx(2.0)

    def test_all_failed(self):
        with pytest.raises(NoUsableResultsError):
            summary_min_p([result(None, "separated"), result(None, "not_converged")])

    def test_interaction_field(self):
        r = AssocResult("s", 0.1, 0.1, 0.5, beta_int=1.0, se_int=0.1, p_int=1e-4)
        assert summary_min_p([r], field="p_int") == pytest.approx(4.0)

    def test_zero_p_finite(self):
        assert math.isfinite(summary_min_p([result(0.0)]))

    def test_vectorized_matches(self):
        p = np.array([0.3, np.nan, 1e-5, 0.02])
        out = min_p_scores(p, {"whole": np.arange(4), "tail": np.array([3])})
        assert out["whole"] == pytest.approx(5.0)
        assert out["tail"] == pytest.approx(-math.log10(0.02))
        with pytest.raises(NoUsableResultsError):
            min_p_scores(p, {"gap": np.array([1])})


class TestRoc:
    def test_perfect(self):
        c = roc([1, 2, 3], [4, 5, 6])
        assert (0.0, 1.0) in c.points
        assert c.points[0] == (0.0, 0.0) and c.points[-1] == (1.0, 1.0)

    def test_identical_on_diagonal(self):
        c = roc([1, 2, 2, 5], [1, 2, 2, 5])
        np.testing.assert_array_equal(c.fpr, c.tpr)

    def test_ties_one_step(self):
        c = roc([1, 1, 1], [1, 1])
        assert c.points == [(0.0, 0.0), (1.0, 1.0)]

    def test_empty(self):
        with pytest.raises(ValueError):
            roc([], [1.0])

    @given(scores, scores)
    @settings(max_examples=200, deadline=None)
    def test_monotone_endpoints(self, x, y):
        c = roc(x, y)
        assert c.points[0] == (0.0, 0.0) and c.points[-1] == (1.0, 1.0)
        assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)


class TestAuc:
    def test_examples(self):
        assert auc([1, 2, 3], [4, 5, 6]).auc == 1.0
        assert auc([1, 3], [2, 4]).auc == 0.75
        assert auc([1, 2, 3], [1, 2, 3]).auc == 0.5

    def test_pair_count_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            x = rng.integers(0, 15, rng.integers(1, 25)).astype(float)
            y = rng.integers(0, 15, rng.integers(1, 25)).astype(float) + rng.integers(0, 3)
            assert abs(auc(x, y).auc - pair_count_auc(x, y)) <= 1e-12

    @given(scores, scores)
    @settings(max_examples=300, deadline=None)
    def test_swap_identity(self, x, y):
        assert auc(x, y).auc + auc(y, x).auc == 1.0

    @given(int_scores, int_scores)
    @settings(max_examples=200, deadline=None)
    def test_monotone_transform(self, x, y):
        f = lambda v: np.arctan(np.asarray(v) / 50.0) * 3 + 7
        assert auc(f(x), f(y)).auc == auc(x, y).auc

    @given(scores, scores)
    @settings(max_examples=300, deadline=None)
    def test_trapezoid_area(self, x, y):
        assert abs(auc(x, y).auc - roc(x, y).trapezoid_area()) <= 1e-12

    @given(scores, scores)
    @settings(max_examples=200, deadline=None)
    def test_interval_brackets(self, x, y):
        est = auc(x, y)
        assert 0.0 <= est.ci_low <= est.auc <= est.ci_high <= 1.0
        assert est.label == qualitative_label(est.auc)

    def test_delong_coverage(self):
        rng = np.random.default_rng(12)
        shift = math.sqrt(2) * 0.6744897501960817  # Phi(shift / sqrt 2) = 0.75
        covered = 0
        for _ in range(500):
            est = auc(rng.standard_normal(200), rng.standard_normal(200) + shift)
            covered += est.ci_low <= 0.75 <= est.ci_high
        assert 0.90 <= covered / 500 <= 0.98

    def test_delong_variance_by_hand(self):
        x, y = np.array([0.1, 0.4, 0.35]), np.array([0.8, 0.3, 0.6, 0.9])
        v10 = np.array([np.mean(np.where(x < b, 1.0, np.where(x == b, 0.5, 0.0))) for b in y])
        v01 = np.array([np.mean(np.where(a < y, 1.0, np.where(a == y, 0.5, 0.0))) for a in x])
        var = v10.var(ddof=1) / len(y) + v01.var(ddof=1) / len(x)
        assert auc(x, y).variance == pytest.approx(var, rel=1e-12)

    def test_accepts_score_vectors(self):
        h0 = ScoreVector("H0", [1.0, 2.0])
        h1 = ScoreVector("H1", [3.0, 0.5])
        assert auc(h0, h1).auc == 0.5

    def test_nonfinite_scores_rejected(self):
        with pytest.raises(ValueError):
            ScoreVector("H0", [1.0, np.nan])


class TestLabels:
    @pytest.mark.parametrize(
        "value,label",
        [(0.6469, "poor"), (0.55, "fail"), (0.95, "excellent"), (0.6, "fail"), (0.7, "poor"),
         (0.75, "fair"), (0.8, "fair"), (0.85, "good"), (0.9, "good"), (1.0, "excellent")],
    )
    def test_thresholds(self, value, label):
        assert qualitative_label(value) == label


class TestExternalScores:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "s.tsv"
        rows = "".join(f"{i}\t{0.01 * i}\n" for i in reversed(range(200)))
        p.write_text("replicate_index\tscore\n" + rows)
        v = ingest_external_scores(p)
        assert len(v) == 200
        assert v.scores[10] == pytest.approx(0.1)

    def test_duplicate(self, tmp_path):
        p = tmp_path / "s.tsv"
        p.write_text("0\t1.0\n1\t2.0\n1\t3.0\n")
        with pytest.raises(ValueError, match="duplicate"):
            ingest_external_scores(p)

    def test_gaps_listed(self, tmp_path):
        p = tmp_path / "s.tsv"
        p.write_text("0\t1.0\n3\t2.0\n")
        with pytest.raises(ValueError, match=r"\[1, 2\]"):
            ingest_external_scores(p)

    def test_expected_size(self, tmp_path):
        p = tmp_path / "s.tsv"
        p.write_text("0\t1.0\n1\t2.0\n")
        with pytest.raises(ValueError, match="missing"):
            ingest_external_scores(p, n_expected=3)

    def test_feeds_auc(self, tmp_path):
        (tmp_path / "h0.tsv").write_text("0\t1\n1\t2\n")
        (tmp_path / "h1.tsv").write_text("0\t3\n1\t4\n")
        est = auc(ingest_external_scores(tmp_path / "h0.tsv", "H0"), ingest_external_scores(tmp_path / "h1.tsv"))
        assert est.auc == 1.0


class TestTables:
    def test_auc_table(self, tmp_path):
        table = {
            ("whole", "snp"): AucEstimate(0.6469, 0.5926, 0.7013, "poor"),
            ("1", "snp"): AucEstimate(1.0, 1.0, 1.0, "excellent"),
        }
        write_auc_table(tmp_path / "a.tsv", table, ["snp", "lmm"], ["whole", "200", "1"])
        lines = (tmp_path / "a.tsv").read_text().splitlines()
        assert lines[0] == "region\tsnp\tlmm"
        assert lines[1] == "whole\t64.69 [59.26-70.13]\tNA"
        assert len(lines) == 4

    def test_roc_tsv(self, tmp_path):
        write_roc_tsv(tmp_path / "r.tsv", {("whole", "snp"): roc([1, 2], [3, 4])})
        lines = (tmp_path / "r.tsv").read_text().splitlines()
        assert lines[0] == "method\tregion\tfpr\ttpr"
        assert lines[1] == "snp\twhole\t0.0\t0.0"
        assert lines[-1] == "snp\twhole\t1.0\t1.0"
