"""Disease model, exact-count conditional sampling and replicate sets."""

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gxesim.genotype_io import MISSING
from gxesim.phenosim import (
    DiseaseModel,
    InfeasibleDesignError,
    ModelValidityError,
    PhenotypeReplicate,
    TailTable,
    brute_force_conditional_law,
    generate_replicates,
    penetrance,
    permute_phenotypes,
    read_replicates,
    waffect_sample,
    waffect_sample_many,
    write_replicates,
)


def gof_pvalue(draws: np.ndarray, law: dict) -> float:
    """Chi-square goodness of fit of sampled configurations to an exact law."""
    keys = list(law)
    index = {k: i for i, k in enumerate(keys)}
    counts = np.zeros(len(keys))
    for row in map(tuple, draws.tolist()):
        counts[index[row]] += 1
    expected = np.array([law[k] for k in keys]) * draws.shape[0]
    keep = expected > 0
    return float(stats.chisquare(counts[keep], expected[keep]).pvalue)


class TestDiseaseModel:
    def test_defaults(self):
        m = DiseaseModel()
        assert (m.baseline_prevalence, m.relative_risk, m.genetic_coding, m.interacting_exposure) == (
            0.01, 50.0, "dominant", "treatment",
        )

    def test_invalid_product(self):
        with pytest.raises(ModelValidityError):
            DiseaseModel(baseline_prevalence=0.01, relative_risk=100.0)

    def test_digest_stable(self):
        assert DiseaseModel().digest() == DiseaseModel().digest()
        assert DiseaseModel().digest() != DiseaseModel(relative_risk=40.0).digest()


class TestPenetrance:
    def test_carrier_treated(self):
        p = penetrance(DiseaseModel(), [1, 2, 0, 1], [1, 1, 1, 0])
        np.testing.assert_allclose(p, [0.51, 0.51, 0.01, 0.01])

    def test_relative_risk_zero(self):
        p = penetrance(DiseaseModel(relative_risk=0.0), [0, 1, 2], [1, 1, 1])
        np.testing.assert_allclose(p, 0.01)

    def test_missing_is_noncarrier(self):
        p = penetrance(DiseaseModel(), [MISSING, np.nan, 1], [1, 1, 1])
        np.testing.assert_allclose(p, [0.01, 0.01, 0.51])

    def test_additive_can_exceed_one(self):
        with pytest.raises(ModelValidityError):
            penetrance(DiseaseModel(relative_risk=60.0, genetic_coding="additive"), [2], [1])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            penetrance(DiseaseModel(), [0, 1], [1])


class TestConditionalLaw:
    def test_enumeration_reference(self):
        law = brute_force_conditional_law([0.5, 0.25, 0.25], 1)
        assert law == pytest.approx({(1, 0, 0): 0.6, (0, 1, 0): 0.2, (0, 0, 1): 0.2})

    def test_uniform_p(self):
        law = brute_force_conditional_law([0.3] * 5, 2)
        assert len(law) == 10
        assert all(v == pytest.approx(0.1) for v in law.values())

    def test_zero_cases(self):
        assert brute_force_conditional_law([0.2, 0.9], 0) == {(0, 0): 1.0}

    def test_refuses_large(self):
        with pytest.raises(ValueError):
            brute_force_conditional_law([0.5] * 21, 3)

    def test_table_total_matches_poisson_binomial(self):
        rng = np.random.default_rng(5)
        p = rng.uniform(0.05, 0.95, 10)
        law_total = 0.0
        for cases in itertools.combinations(range(10), 4):
            y = np.zeros(10, dtype=bool)
            y[list(cases)] = True
            law_total += np.prod(np.where(y, p, 1 - p))
        assert np.exp(TailTable(p, 4).log_total) == pytest.approx(law_total, rel=1e-12)


class TestWaffect:
    def test_symmetric_single_case(self):
        draws = waffect_sample_many([0.2, 0.2, 0.2], 1, 30_000, np.random.default_rng(1))
        freq = draws.mean(axis=0)
        np.testing.assert_allclose(freq, 1 / 3, atol=0.015)

    def test_reference_marginals(self):
        draws = waffect_sample_many([0.5, 0.25, 0.25], 1, 40_000, np.random.default_rng(2))
        np.testing.assert_allclose(draws.mean(axis=0), [0.6, 0.2, 0.2], atol=0.01)

    def test_all_cases(self):
        rep = waffect_sample([0.1, 0.5, 0.9], 3, np.random.default_rng(0))
        np.testing.assert_array_equal(rep.y, [1, 1, 1])

    def test_gof_against_enumeration(self):
        rng = np.random.default_rng(9)
        p = rng.uniform(0.01, 0.99, 8)
        draws = waffect_sample_many(p, 3, 100_000, rng)
        assert np.all(draws.sum(axis=1) == 3)
        assert gof_pvalue(draws, brute_force_conditional_law(p, 3)) > 0.01

    def test_single_draw_path_matches_law(self):
        # the scalar walk (few draws) and the vectorized walk must agree
        p = np.array([0.7, 0.1, 0.4, 0.9, 0.2])
        rng = np.random.default_rng(4)
        table = TailTable(p, 2)
        single = np.vstack([table.sample(rng.random((1, 5))) for _ in range(20_000)])
        assert gof_pvalue(single, brute_force_conditional_law(p, 2)) > 0.01

    def test_relabeling_equivariance(self):
        rng = np.random.default_rng(12)
        p = rng.uniform(0.05, 0.95, 7)
        perm = rng.permutation(7)
        draws = waffect_sample_many(p[perm], 3, 60_000, rng)
        law = brute_force_conditional_law(p, 3)
        permuted_law = {tuple(np.array(k)[perm].tolist()): v for k, v in law.items()}
        assert gof_pvalue(draws, permuted_law) > 0.01

    def test_constant_p_marginals(self):
        n, k, draws = 20, 7, 20_000
        y = waffect_sample_many(np.full(n, 0.3), k, draws, np.random.default_rng(3))
        sigma = np.sqrt(k / n * (1 - k / n) / draws)
        assert np.all(np.abs(y.mean(axis=0) - k / n) < 4 * sigma)

    def test_extreme_penetrances_large_n(self):
        rng = np.random.default_rng(0)
        p = np.exp(rng.uniform(np.log(1e-6), np.log(1 - 1e-6), 10_000))
        rep = waffect_sample(p, 5_000, rng)
        assert rep.y.sum() == 5_000

    def test_infeasible_forced(self):
        with pytest.raises(InfeasibleDesignError):
            waffect_sample([1.0, 1.0, 0.5], 1, np.random.default_rng(0))
        with pytest.raises(InfeasibleDesignError):
            waffect_sample([0.0, 0.0, 0.5], 2, np.random.default_rng(0))

    def test_out_of_range_cases(self):
        with pytest.raises(InfeasibleDesignError):
            waffect_sample([0.5, 0.5], 3, np.random.default_rng(0))

    def test_forced_entries_respected(self):
        y = waffect_sample_many([1.0, 0.0, 0.5, 0.5], 2, 500, np.random.default_rng(0))
        assert np.all(y[:, 0] == 1) and np.all(y[:, 1] == 0)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=30), st.data(), st.integers(0, 2**32 - 1))
    def test_exact_count_property(self, p, data, seed):
        k = data.draw(st.integers(0, len(p)))
        y = waffect_sample_many(p, k, 5, np.random.default_rng(seed))
        assert np.all(y.sum(axis=1) == k)


class TestPermutation:
    def test_positions_uniform(self):
        rng = np.random.default_rng(0)
        y = np.vstack([permute_phenotypes(3, 1, rng).y for _ in range(30_000)])
        np.testing.assert_allclose(y.mean(axis=0), 1 / 3, atol=0.015)

    def test_no_cases(self):
        assert permute_phenotypes(5, 0, np.random.default_rng(0)).y.sum() == 0

    def test_matches_waffect_constant_p(self):
        rng = np.random.default_rng(21)
        law = brute_force_conditional_law([0.4] * 6, 3)
        perm = np.vstack([permute_phenotypes(6, 3, rng).y for _ in range(100_000)])
        waff = waffect_sample_many([0.4] * 6, 3, 100_000, rng)
        assert gof_pvalue(perm, law) > 0.01
        assert gof_pvalue(waff, law) > 0.01

    def test_replicate_count_invariant(self):
        with pytest.raises(AssertionError):
            PhenotypeReplicate(y=np.array([1, 0, 1]), n_cases=1, hypothesis="H0", replicate_index=0, seed=0)


class TestReplicates:
    def _inputs(self, n=60):
        rng = np.random.default_rng(8)
        return rng.integers(0, 3, n), rng.integers(0, 2, n)

    def test_counts_and_labels(self):
        g, e = self._inputs()
        reps = generate_replicates(DiseaseModel(), g, e, n_h0=4, n_h1=3, n_cases=30, seed=5)
        assert len(reps.by_hypothesis("H0")) == 4 and len(reps.by_hypothesis("H1")) == 3
        assert all(r.y.sum() == 30 for r in reps.replicates)
        assert [r.label for r in reps.replicates][:2] == ["H0_0", "H0_1"]

    def test_h0_only(self):
        g, e = self._inputs()
        reps = generate_replicates(DiseaseModel(), g, e, n_h0=3, n_h1=0, n_cases=10)
        assert {r.hypothesis for r in reps.replicates} == {"H0"}

    def test_deterministic(self):
        g, e = self._inputs()
        a = generate_replicates(DiseaseModel(), g, e, n_h0=3, n_h1=3, n_cases=30, seed=5)
        b = generate_replicates(DiseaseModel(), g, e, n_h0=3, n_h1=3, n_cases=30, seed=5)
        for x, y in zip(a.replicates, b.replicates):
            np.testing.assert_array_equal(x.y, y.y)
        assert a.model_hash == b.model_hash

    def test_replicate_stream_independent_of_counts(self):
        g, e = self._inputs()
        a = generate_replicates(DiseaseModel(), g, e, n_h0=2, n_h1=2, n_cases=30, seed=5)
        b = generate_replicates(DiseaseModel(), g, e, n_h0=5, n_h1=6, n_cases=30, seed=5)
        np.testing.assert_array_equal(a.by_hypothesis("H1")[1].y, b.by_hypothesis("H1")[1].y)
        np.testing.assert_array_equal(a.by_hypothesis("H0")[1].y, b.by_hypothesis("H0")[1].y)

    def test_default_design_size(self):
        rng = np.random.default_rng(1)
        g, e = rng.integers(0, 3, 1191), rng.integers(0, 2, 1191)
        reps = generate_replicates(DiseaseModel(), g, e, seed=1)
        assert len(reps) == 400
        assert all(r.y.sum() == 595 for r in reps.replicates)

    def test_h1_enriched_in_exposed_carriers(self):
        rng = np.random.default_rng(2)
        g, e = rng.integers(0, 3, 400), rng.integers(0, 2, 400)
        reps = generate_replicates(DiseaseModel(), g, e, n_h0=20, n_h1=20, n_cases=200, seed=3)
        risk = (g > 0) & (e == 1)
        h1 = np.mean([r.y[risk].mean() for r in reps.by_hypothesis("H1")])
        h0 = np.mean([r.y[risk].mean() for r in reps.by_hypothesis("H0")])
        assert h1 > h0 + 0.1

    def test_persistence(self, tmp_path):
        g, e = self._inputs()
        reps = generate_replicates(DiseaseModel(), g, e, n_h0=2, n_h1=2, n_cases=30, seed=5)
        ids = [f"I{i}" for i in range(60)]
        sidecar = write_replicates(tmp_path / "r.tsv", reps, ids, {"config_hash": "abc"})
        meta = json.loads(sidecar.read_text())
        assert meta["seed"] == 5 and meta["n_cases"] == 30 and meta["config_hash"] == "abc"
        assert meta["model"]["relative_risk"] == 50.0
        back_ids, back = read_replicates(tmp_path / "r.tsv")
        assert back_ids == ids
        assert [r.label for r in back.replicates] == ["H0_0", "H0_1", "H1_0", "H1_1"]
        for x, y in zip(back.replicates, reps.replicates):
            np.testing.assert_array_equal(x.y, y.y)
