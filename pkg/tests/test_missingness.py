import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsedrift.data import SparseMatrix
from sparsedrift.errors import DataError
from sparsedrift.imputation import ImputationMethod, impute
from sparsedrift.missingness import (
    classify_missingness,
    imputation_bias_report,
    runs_test,
)
from sparsedrift.streamgen import SparsityPlan, inject_sparsity


def _bits(text):
    return np.array([int(c) for c in text], dtype=np.int8)


class TestRunsTest:
    # oracle: direct evaluation of mu = 2*n1*n0/n + 1,
    # var = 2*n1*n0*(2*n1*n0 - n) / (n^2 (n-1)), z = (R - mu)/sigma
    # for 1111100000: R=2, mu=6, var=2000/900=2.2222, z=-2.6833, p=0.00730

    def test_two_block_sequence(self):
        with pytest.warns(UserWarning):
            r = runs_test(_bits("1111100000"))
        assert r.runs == 2
        assert r.n_observed == 5 and r.n_missing == 5
        assert r.expected_runs == pytest.approx(6.0)
        assert r.variance == pytest.approx(2.2222222222, abs=1e-9)
        assert r.z == pytest.approx(-2.683, abs=1e-3)
        assert r.p_value == pytest.approx(0.0073, abs=1e-3)
        assert not r.degenerate

    def test_alternating_sequence(self):
        with pytest.warns(UserWarning):
            r = runs_test(_bits("1010101010"))
        assert r.runs == 10
        assert r.z == pytest.approx((10 - 6) / 1.4907, abs=1e-3)
        assert r.z == pytest.approx(2.683, abs=1e-3)

    def test_single_symbol_degenerate(self):
        with pytest.warns(UserWarning):
            r = runs_test(_bits("1111"))
        assert r.degenerate
        assert math.isnan(r.z)
        assert r.runs == 1

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            runs_test(np.array([]))

    def test_short_sequence_warns(self):
        with pytest.warns(UserWarning, match="runs test"):
            runs_test(_bits("10"))

    def test_complement_invariance_on_random_masks(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(20, 200))
            mask = (rng.random(n) < rng.uniform(0.2, 0.8)).astype(np.int8)
            if mask.all() or not mask.any():
                continue
            a = runs_test(mask)
            b = runs_test(1 - mask)
            assert a.runs == b.runs
            assert a.expected_runs == b.expected_runs
            assert a.variance == b.variance
            assert abs(a.z) == abs(b.z)
            assert a.z == b.z  # complement swaps n1/n0, statistics unchanged

    def test_extreme_run_counts(self):
        # strictly alternating maximizes R; two blocks give the minimum R = 2
        alt = runs_test(_bits("10" * 20))
        blocks = runs_test(_bits("1" * 20 + "0" * 20))
        assert alt.runs == 40
        assert blocks.runs == 2
        assert alt.z > 0 > blocks.z


def _matrix_with_mask(mask_column, n_extra_features=1, seed=0):
    rng = np.random.default_rng(seed)
    n = len(mask_column)
    values = rng.normal(size=(n, 1 + n_extra_features))
    m = SparseMatrix(values=values, mask=np.ones_like(values, dtype=bool))
    keep = m.mask.copy()
    keep[:, 0] = np.asarray(mask_column, dtype=bool)
    return SparseMatrix(values=values, mask=keep)


class TestClassifyMissingness:
    def test_blocked_mask_is_mar(self):
        data = _matrix_with_mask(_bits("11111" * 20 + "00000" * 20))
        verdict = classify_missingness(data, alpha=0.05)
        assert verdict.mechanism_of(0) == "MAR"

    def test_short_two_block_mask_is_mar(self):
        # p ~ 0.0073 < 0.05 rejects randomness
        data = _matrix_with_mask(_bits("1111100000"))
        with pytest.warns(UserWarning):
            verdict = classify_missingness(data, alpha=0.05)
        assert verdict.mechanism_of(0) == "MAR"

    def test_random_mask_is_mnar_by_default(self):
        rng = np.random.default_rng(1)
        data = _matrix_with_mask(rng.random(10000) < 0.7)
        verdict = classify_missingness(data, alpha=0.05, allow_mcar=False)
        assert verdict.mechanism_of(0) == "MNAR"

    def test_random_independent_mask_can_be_mcar(self):
        rng = np.random.default_rng(2)
        data = _matrix_with_mask(rng.random(10000) < 0.7, n_extra_features=2)
        verdict = classify_missingness(data, alpha=0.05, allow_mcar=True)
        assert verdict.mechanism_of(0) == "MCAR"

    def test_value_driven_mask_not_mcar(self):
        # missingness driven by another feature: correlation screen rejects MCAR
        rng = np.random.default_rng(3)
        values = rng.normal(size=(5000, 2))
        data = SparseMatrix.from_dense(values)
        out = inject_sparsity(data, SparsityPlan("MAR", 0.3, targets=(0,), driver=1, seed=0))
        verdict = classify_missingness(out, alpha=0.05, allow_mcar=True)
        assert verdict.mechanism_of(0) in ("MNAR", "MAR")
        assert verdict.mechanism_of(0) != "MCAR"

    def test_complete_feature_excluded(self):
        data = _matrix_with_mask(_bits("1" * 100))
        verdict = classify_missingness(data)
        assert verdict.mechanism_of(0) is None
        assert 0 in verdict.complete_features
        assert 1 in verdict.complete_features

    def test_alpha_validated(self):
        data = _matrix_with_mask(_bits("1" * 100))
        with pytest.raises(DataError):
            classify_missingness(data, alpha=0.0)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        data = _matrix_with_mask(rng.random(500) < 0.6)
        a = classify_missingness(data, alpha=0.05, allow_mcar=True)
        b = classify_missingness(data, alpha=0.05, allow_mcar=True)
        assert a == b


class TestImputationBias:
    def test_zero_imputed_column_worked_example(self):
        data = SparseMatrix.from_dense(np.array([[1.0], [2.0], [np.nan], [3.0]]))
        imputed = impute(data, ImputationMethod("zero"))
        report = imputation_bias_report(data, imputed)
        rec = report.records[0]
        assert rec.e1_hat == pytest.approx(2.0)
        assert rec.w1 == pytest.approx(0.75)
        assert rec.w2 == pytest.approx(0.25)
        assert rec.e2_hat == pytest.approx(1.5)
        assert rec.bias == pytest.approx(-0.5)

    def test_no_sparsity_zero_bias(self):
        data = SparseMatrix.from_dense(np.array([[1.0], [2.0], [3.0]]))
        report = imputation_bias_report(data, data.values)
        assert report.records[0].bias == 0.0

    def test_mean_imputation_unbiased(self):
        rng = np.random.default_rng(0)
        values = rng.normal(5, 2, size=(200, 2))
        values[rng.random((200, 2)) < 0.3] = np.nan
        data = SparseMatrix.from_dense(values)
        imputed = impute(data, ImputationMethod("mean"))
        for rec in imputation_bias_report(data, imputed).records:
            assert rec.bias == pytest.approx(0.0, abs=1e-12)

    def test_zero_imputation_bias_identity(self):
        # algebra: e2 = w1*e1, so bias = -w2*e1 exactly
        rng = np.random.default_rng(1)
        values = rng.normal(3, 1, size=(500, 1))
        values[rng.random(500) < 0.4, 0] = np.nan
        data = SparseMatrix.from_dense(values)
        imputed = impute(data, ImputationMethod("zero"))
        rec = imputation_bias_report(data, imputed).records[0]
        assert rec.bias == pytest.approx(-rec.w2 * rec.e1_hat, abs=1e-12)

    def test_fully_missing_feature_flagged(self):
        values = np.array([[np.nan, 1.0], [np.nan, 2.0]])
        data = SparseMatrix.from_dense(values)
        report = imputation_bias_report(data, np.array([[0.0, 1.0], [0.0, 2.0]]))
        assert report.records[0].undefined
        assert not report.records[1].undefined

    def test_incomplete_imputed_rejected(self):
        data = SparseMatrix.from_dense(np.array([[1.0], [np.nan]]))
        with pytest.raises(DataError):
            imputation_bias_report(data, np.array([[1.0], [np.nan]]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=25, max_size=120))
def test_runs_complement_property(bits):
    mask = np.array(bits, dtype=np.int8)
    if mask.all() or not mask.any():
        return
    a = runs_test(mask)
    b = runs_test(1 - mask)
    assert a.runs == b.runs
    assert a.z == b.z
