"""Binary genotype triplet I/O, allele frequencies, HWE, QC and windows."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from gxesim.genotype_io import (
    MISSING,
    GenotypeFormatError,
    GenotypeMatrix,
    UndefinedFrequencyError,
    decode_bed_block,
    dominant_encode,
    encode_bed_payload,
    filter_snps,
    find_snp,
    hwe_chisq_pvalue,
    hwe_test,
    minor_allele_frequency,
    orient_to_minor,
    read_genotype_triplet,
    read_populations,
    select_region,
    thin_snps,
    window_indices,
    write_genotype_triplet,
)

from conftest import make_samples, make_snps, random_hwe_matrix

M = MISSING


class TestBedCodec:
    def test_decode_byte_0x1b(self):
        # pairs read from the low bits: 11, 10, 01, 00
        np.testing.assert_array_equal(decode_bed_block(bytes([0x1B]), 4), [0, 1, M, 2])

    def test_encode_four_samples(self):
        payload = encode_bed_payload(np.array([[0], [1], [M], [2]], dtype=np.int8))
        assert payload == bytes([0x1B])

    def test_single_sample_padding(self):
        payload = encode_bed_payload(np.array([[0]], dtype=np.int8))
        assert len(payload) == 1
        assert payload[0] >> 2 == 0

    def test_padding_bits_zero_for_partial_block(self):
        payload = encode_bed_payload(np.full((5, 2), 2, dtype=np.int8))
        assert len(payload) == 4
        assert payload[1] == 0 and payload[3] == 0


class TestTripletFiles:
    def test_round_trip_random(self, tmp_path, rng):
        mat = random_hwe_matrix(20, 50, rng, missing_rate=0.1)
        stem = tmp_path / "g"
        write_genotype_triplet(mat, make_samples(20), make_snps(50), stem)
        back, samples, snps = read_genotype_triplet(stem)
        assert back == mat
        assert [s.sex for s in samples[:2]] == ["male", "female"]
        assert snps[3].bp_position == 400

    def test_second_write_byte_identical(self, tmp_path, rng):
        mat = random_hwe_matrix(20, 50, rng, missing_rate=0.1)
        write_genotype_triplet(mat, make_samples(20), make_snps(50), tmp_path / "a")
        back, samples, snps = read_genotype_triplet(tmp_path / "a")
        write_genotype_triplet(back, samples, snps, tmp_path / "b")
        for ext in (".bed", ".bim", ".fam"):
            assert (tmp_path / f"a{ext}").read_bytes() == (tmp_path / f"b{ext}").read_bytes()

    def test_individual_major_rejected(self, tmp_path):
        write_genotype_triplet(GenotypeMatrix([[0]]), make_samples(1), make_snps(1), tmp_path / "g")
        (tmp_path / "g.bed").write_bytes(bytes([0x6C, 0x1B, 0x00, 0x03]))
        with pytest.raises(GenotypeFormatError, match="mode"):
            read_genotype_triplet(tmp_path / "g")

    def test_bad_magic(self, tmp_path):
        write_genotype_triplet(GenotypeMatrix([[0]]), make_samples(1), make_snps(1), tmp_path / "g")
        (tmp_path / "g.bed").write_bytes(bytes([0x00, 0x1B, 0x01, 0x03]))
        with pytest.raises(GenotypeFormatError, match="magic"):
            read_genotype_triplet(tmp_path / "g")

    def test_truncated(self, tmp_path, rng):
        write_genotype_triplet(random_hwe_matrix(9, 4, rng), make_samples(9), make_snps(4), tmp_path / "g")
        data = (tmp_path / "g.bed").read_bytes()
        (tmp_path / "g.bed").write_bytes(data[:-1])
        with pytest.raises(GenotypeFormatError, match="expected 15"):
            read_genotype_triplet(tmp_path / "g")

    def test_bad_row_is_indexed(self, tmp_path):
        write_genotype_triplet(GenotypeMatrix([[0, 1]]), make_samples(1), make_snps(2), tmp_path / "g")
        (tmp_path / "g.bim").write_text("6 rs1 0 100 A G\n6 rs2 0 x A G\n")
        with pytest.raises(GenotypeFormatError, match="row 2"):
            read_genotype_triplet(tmp_path / "g")

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nothere.bed"):
            read_genotype_triplet(tmp_path / "nothere")

    def test_populations_attached(self, tmp_path):
        path = tmp_path / "pops.tsv"
        path.write_text("# comment\nindividual_id\tpopulation\nI0\tCEU\nI1\tYRI\n")
        out = read_populations(path, make_samples(2))
        assert [s.population for s in out] == ["CEU", "YRI"]

    def test_populations_incomplete(self, tmp_path):
        path = tmp_path / "pops.tsv"
        path.write_text("I0\tCEU\n")
        with pytest.raises(GenotypeFormatError, match="1 individuals"):
            read_populations(path, make_samples(2))

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.int8, st.tuples(st.integers(1, 13), st.integers(1, 6)), elements=st.sampled_from([0, 1, 2, -1])))
    def test_round_trip_property(self, tmp_path_factory, values):
        d = tmp_path_factory.mktemp("rt")
        n, m = values.shape
        mat = GenotypeMatrix(values)
        write_genotype_triplet(mat, make_samples(n), make_snps(m), d / "g")
        assert read_genotype_triplet(d / "g")[0] == mat


class TestFrequencies:
    def test_maf_half(self):
        assert minor_allele_frequency([0, 1, 2, 2, 1, 0]) == 0.5

    def test_maf_eighth(self):
        assert minor_allele_frequency([2, 2, 2, 1]) == 0.125

    def test_maf_with_missing(self):
        assert minor_allele_frequency([0, 0, M]) == 0.0

    def test_all_missing_undefined(self):
        with pytest.raises(UndefinedFrequencyError):
            minor_allele_frequency([M, M])

    @given(st.lists(st.sampled_from([0, 1, 2]), min_size=1, max_size=40))
    def test_maf_label_swap_invariant(self, col):
        col = np.array(col)
        assert minor_allele_frequency(col) == pytest.approx(minor_allele_frequency(2 - col), abs=1e-15)


class TestHwe:
    def _column(self, n0, n1, n2):
        return np.repeat([0, 1, 2], [n0, n1, n2])

    def test_equilibrium(self):
        assert hwe_test(self._column(25, 50, 25)) == 1.0

    def test_all_heterozygous(self):
        # chi-square = 25 + 50 + 25
        p = hwe_test(self._column(0, 100, 0))
        assert p < 1e-20
        assert p == pytest.approx(stats.chi2.sf(100.0, 1), rel=1e-12)

    def test_monomorphic(self):
        assert hwe_test(self._column(50, 0, 0)) == 1.0

    def test_null_uniform(self):
        # count discreteness makes this KS check fail for a few percent of seeds
        rng = np.random.default_rng(0)
        f = rng.uniform(0.2, 0.8, size=10_000)
        g = rng.binomial(2, f, size=(500, 10_000))
        n0, n1, n2 = ((g == k).sum(axis=0) for k in range(3))
        p = hwe_chisq_pvalue(n0, n1, n2)
        assert stats.kstest(p, "uniform").pvalue > 0.01


class TestFilter:
    def test_low_maf_removed(self):
        col_low = np.array([1] * 4 + [0] * 46)  # MAF 0.04
        col_ok = np.array([1] * 20 + [0] * 30)
        mat = GenotypeMatrix(np.column_stack([col_low, col_ok]))
        out, rep = filter_snps(mat, maf_min=0.05, hwe_alpha=1e-6)
        assert rep.removed_maf == 1 and rep.removed_hwe == 0 and rep.snps_out == 1
        assert rep.kept_indices == (1,)
        np.testing.assert_array_equal(out.values[:, 0], col_ok)

    def test_identity_filter(self, rng):
        mat = random_hwe_matrix(40, 30, rng)
        out, rep = filter_snps(mat, maf_min=0.0, hwe_alpha=1e-300)
        assert out == mat and rep.snps_out == 30

    def test_both_failures_counted_once(self):
        # rare and all-heterozygous-like: fails MAF and HWE
        both = np.array([2] * 2 + [0] * 98)
        hwe_only = np.array([1] * 100)
        fine = np.array([0, 1, 2, 1] * 25)
        mat = GenotypeMatrix(np.column_stack([both, hwe_only, fine]))
        _, rep = filter_snps(mat, maf_min=0.05, hwe_alpha=1e-6)
        assert (rep.removed_maf, rep.removed_hwe, rep.snps_out) == (1, 1, 1)
        assert rep.snps_out == rep.snps_in - rep.removed_maf - rep.removed_hwe

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.45), st.floats(1e-9, 0.5))
    def test_counts_reconcile(self, seed, maf_min, alpha):
        mat = random_hwe_matrix(30, 25, np.random.default_rng(seed), freq_range=(0.0, 1.0), missing_rate=0.05)
        out, rep = filter_snps(mat, maf_min, alpha)
        assert rep.snps_out == rep.snps_in - rep.removed_maf - rep.removed_hwe == out.m

    def test_bad_thresholds(self, rng):
        mat = random_hwe_matrix(10, 3, rng)
        with pytest.raises(ValueError):
            filter_snps(mat, maf_min=0.5)
        with pytest.raises(ValueError):
            filter_snps(mat, hwe_alpha=0.0)

    def test_orient_to_minor(self):
        mat = GenotypeMatrix(np.array([[2, 0], [2, 1], [1, M], [0, 0]]))
        out, snps = orient_to_minor(mat, make_snps(2))
        np.testing.assert_array_equal(out.values[:, 0], [0, 0, 1, 2])
        np.testing.assert_array_equal(out.values[:, 1], [0, 1, M, 0])
        assert (snps[0].allele1, snps[0].allele2) == ("G", "A")
        assert snps[1].allele1 == "A"


class TestSelection:
    def test_thin_default(self):
        assert thin_snps(5000, 1000) == [0, 1000, 2000, 3000, 4000]

    def test_thin_step_one(self):
        assert thin_snps(make_snps(7), 1) == list(range(7))

    def test_thin_short(self):
        assert thin_snps(999, 1000) == [0]

    def test_window_odd(self):
        assert list(window_indices(10, 5, 3)) == [4, 5, 6]

    def test_window_single(self):
        assert list(window_indices(10, 7, 1)) == [7]

    def test_window_left_edge_keeps_width(self):
        assert list(window_indices(10, 0, 5)) == [0, 1, 2, 3, 4]

    def test_window_right_edge_keeps_width(self):
        assert list(window_indices(10, 9, 4)) == [6, 7, 8, 9]

    def test_window_wider_than_chromosome(self):
        assert list(window_indices(10, 3, 50)) == list(range(10))

    @given(st.integers(1, 300), st.data())
    def test_window_properties(self, m, data):
        c = data.draw(st.integers(0, m - 1))
        w = data.draw(st.integers(1, 400))
        win = list(window_indices(m, c, w))
        assert len(win) == min(w, m)
        assert c in win
        assert win == list(range(win[0], win[0] + len(win)))

    def test_select_region_by_id(self):
        assert list(select_region(make_snps(10), "rs6", 3)) == [4, 5, 6]

    def test_unknown_center(self):
        with pytest.raises(LookupError):
            select_region(make_snps(10), "rs99", 3)

    def test_find_by_position(self):
        assert find_snp(make_snps(10), chromosome="6", position=300) == 2
        with pytest.raises(LookupError):
            find_snp(make_snps(10), chromosome="5", position=300)

    def test_dominant(self):
        np.testing.assert_array_equal(dominant_encode([0, 1, 2]), [0, 1, 1])
        np.testing.assert_array_equal(dominant_encode([0, 0, 0]), [0, 0, 0])
        np.testing.assert_array_equal(dominant_encode([M]), [M])
