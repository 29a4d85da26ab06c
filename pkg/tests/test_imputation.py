import numpy as np
import pytest
from scipy import stats as sps

from sparsedrift.data import SparseMatrix
from sparsedrift.errors import (
    DataError,
    ImputationError,
    ParameterError,
    SelectionError,
)
from sparsedrift.imputation import (
    ImputationMethod,
    default_method_for,
    identify_distribution,
    impute,
    rmse,
    select_best_imputer,
)
from sparsedrift.streamgen import (
    DistributionSpec,
    SparsityPlan,
    inject_sparsity,
    sample_distribution,
)


def _col(values):
    return SparseMatrix.from_dense(np.asarray(values, dtype=float).reshape(-1, 1))


class TestImputationMethod:
    def test_parse(self):
        assert ImputationMethod.parse("mean") == ImputationMethod("mean")
        assert ImputationMethod.parse("knn:7") == ImputationMethod("knn", 7)
        assert ImputationMethod.parse("KNN50") == ImputationMethod("knn", 50)
        assert ImputationMethod.parse("knn") == ImputationMethod("knn", 5)

    def test_validation(self):
        with pytest.raises(ParameterError):
            ImputationMethod("mystery")
        with pytest.raises(ParameterError):
            ImputationMethod("knn", 0)
        with pytest.raises(ParameterError):
            ImputationMethod("mean", 3)

    def test_tie_break_order(self):
        methods = [ImputationMethod("knn", 9), ImputationMethod("zero"),
                   ImputationMethod("knn", 3), ImputationMethod("mode"),
                   ImputationMethod("median"), ImputationMethod("mean")]
        ordered = sorted(methods, key=lambda m: m.sort_key())
        assert [m.label for m in ordered] == ["mean", "median", "mode", "zero", "knn3", "knn9"]


class TestImpute:
    def test_univariate_fills(self):
        data = _col([1, 2, np.nan, 3])
        assert impute(data, ImputationMethod("mean")).values[:, 0].tolist() == [1, 2, 2, 3]
        assert impute(data, ImputationMethod("median")).values[:, 0].tolist() == [1, 2, 2, 3]
        assert impute(data, ImputationMethod("zero")).values[:, 0].tolist() == [1, 2, 0, 3]

    def test_mode_uses_histogram_bins(self):
        values = np.concatenate([np.full(50, 4.0), np.linspace(0, 10, 30), [np.nan]])
        filled = impute(_col(values), ImputationMethod("mode"))
        # the dominant value 4.0 lies in the winning bin; fill is that bin's center
        assert abs(filled.values[-1, 0] - 4.0) < 10 / 32

    def test_mode_constant_column(self):
        filled = impute(_col([5.0, 5.0, np.nan]), ImputationMethod("mode"))
        assert filled.values[-1, 0] == 5.0

    def test_knn_nearest_row(self):
        # oracle: brute-force nearest-neighbor scan over co-observed features
        data = SparseMatrix.from_dense(
            np.array([[1.0, 1.0], [1.0, np.nan], [10.0, 10.0]])
        )
        filled = impute(data, ImputationMethod("knn", 1))
        assert filled.values[1, 1] == 1.0

    def test_knn_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(60, 4))
        holes = rng.random((60, 4)) < 0.25
        values[holes] = np.nan
        data = SparseMatrix.from_dense(values)
        k = 3
        filled = impute(data, ImputationMethod("knn", k))

        def oracle_fill(i, j):
            cands = []
            for c in range(60):
                if c == i or np.isnan(values[c, j]):
                    continue
                shared = [
                    f for f in range(4)
                    if not np.isnan(values[i, f]) and not np.isnan(values[c, f])
                ]
                if not shared:
                    continue
                d = sum((values[i, f] - values[c, f]) ** 2 for f in shared) / len(shared)
                cands.append((d, c))
            cands.sort(key=lambda t: (t[0], t[1]))
            chosen = [c for _, c in cands[:k]]
            if not chosen:
                return None
            return float(np.mean([values[c, j] for c in chosen]))

        for i, j in zip(*np.nonzero(holes)):
            expect = oracle_fill(i, j)
            if expect is not None:
                assert filled.values[i, j] == pytest.approx(expect, abs=1e-9)

    def test_no_missing_identity(self):
        data = _col([1.0, 2.0, 3.0])
        for method in ("mean", "median", "mode", "zero"):
            assert np.array_equal(
                impute(data, ImputationMethod(method)).values, data.values
            )
        assert np.array_equal(impute(data, ImputationMethod("knn", 1)).values, data.values)

    def test_observed_cells_preserved_bit_exact(self):
        rng = np.random.default_rng(7)
        values = rng.normal(size=(100, 3))
        values[rng.random((100, 3)) < 0.3] = np.nan
        data = SparseMatrix.from_dense(values)
        for method in [ImputationMethod("mean"), ImputationMethod("median"),
                       ImputationMethod("mode"), ImputationMethod("zero"),
                       ImputationMethod("knn", 4)]:
            filled = impute(data, method)
            assert filled.is_complete()
            assert np.array_equal(filled.values[data.mask], data.values[data.mask])

    def test_fully_missing_feature_errors(self):
        data = _col([np.nan, np.nan])
        for method in ("mean", "median", "mode"):
            with pytest.raises(ImputationError):
                impute(data, ImputationMethod(method))
        # zero imputation has no fit step, so it still completes
        assert impute(data, ImputationMethod("zero")).values[:, 0].tolist() == [0, 0]

    def test_knn_without_coobserved_falls_back(self):
        # rows never co-observe: kNN cannot rank, falls back to the column mean
        values = np.array([[1.0, np.nan], [np.nan, 8.0], [3.0, np.nan]])
        data = SparseMatrix.from_dense(values)
        filled = impute(data, ImputationMethod("knn", 2))
        assert filled.values[0, 1] == 8.0  # single candidate, no shared feature
        assert ("knn_fallback_cells" in filled.meta)

    def test_knn_deterministic(self):
        rng = np.random.default_rng(9)
        values = rng.normal(size=(80, 3))
        values[rng.random((80, 3)) < 0.2] = np.nan
        data = SparseMatrix.from_dense(values)
        a = impute(data, ImputationMethod("knn", 5))
        b = impute(data, ImputationMethod("knn", 5))
        assert np.array_equal(a.values, b.values)

    def test_mean_identity_after_imputation(self):
        rng = np.random.default_rng(11)
        values = rng.normal(7, 3, size=500)
        values[rng.random(500) < 0.4] = np.nan
        data = _col(values)
        observed_mean = np.nanmean(values)
        filled = impute(data, ImputationMethod("mean"))
        assert filled.values[:, 0].mean() == pytest.approx(observed_mean, abs=1e-12)


class TestIdentifyDistribution:
    @pytest.mark.parametrize(
        "spec,family",
        [
            (DistributionSpec.normal(0, 1), "normal"),
            (DistributionSpec.uniform(0, 1), "uniform"),
            (DistributionSpec.cauchy(0, 1), "cauchy"),
            (DistributionSpec.chi_squared(4), "chi_squared"),
        ],
    )
    def test_recovers_family(self, spec, family):
        x = sample_distribution(spec, 5000, seed=21)
        fit = identify_distribution(x)
        assert fit.family == family
        assert not fit.low_confidence

    def test_ks_distance_matches_scipy(self):
        x = sample_distribution(DistributionSpec.normal(2, 3), 400, seed=5)
        fit = identify_distribution(x)
        mean, std = x.mean(), x.std()
        expected = sps.kstest(x, sps.norm(loc=mean, scale=std).cdf).statistic
        normal_d = dict(fit.ranking)["normal"]
        assert normal_d == pytest.approx(expected, abs=1e-12)

    def test_winner_has_minimal_distance(self):
        x = sample_distribution(DistributionSpec.uniform(3, 9), 1000, seed=1)
        fit = identify_distribution(x)
        assert fit.fit_statistic <= min(d for _, d in fit.ranking)

    def test_low_confidence_below_30(self):
        x = sample_distribution(DistributionSpec.normal(0, 1), 20, seed=2)
        assert identify_distribution(x).low_confidence


class TestDefaultMethodFor:
    @pytest.mark.parametrize("family", ["normal", "uniform", "chi_squared"])
    @pytest.mark.parametrize("mechanism", ["MCAR", "MAR", "MNAR"])
    def test_mean_families(self, family, mechanism):
        assert default_method_for(family, mechanism, 0.2).kind == "mean"

    @pytest.mark.parametrize("family", ["cauchy", "binomial"])
    @pytest.mark.parametrize("mechanism", ["MCAR", "MAR", "MNAR"])
    def test_median_families(self, family, mechanism):
        assert default_method_for(family, mechanism, 0.5).kind == "median"

    def test_multivariate_rules(self):
        assert default_method_for("multivariate_normal", "MCAR", 0.2) == ImputationMethod("knn", 50)
        assert default_method_for("multivariate_normal", "MCAR", 0.4) == ImputationMethod("knn", 100)
        assert default_method_for("multivariate_normal", "MAR", 0.1) == ImputationMethod("knn", 100)
        assert default_method_for("multivariate_normal", "MNAR", 0.6) == ImputationMethod("knn", 50)

    def test_unknown_family(self):
        with pytest.raises(SelectionError):
            default_method_for("lognormal", "MCAR", 0.2)


class TestRmse:
    def test_identity(self):
        cells = np.array([[True], [False], [True]])
        assert rmse(np.array([[1.0], [2.0], [3.0]]), np.array([[1.0], [2.0], [3.0]]), cells) == 0.0

    def test_single_cell(self):
        cells = np.array([[True]])
        assert rmse(np.array([[4.0]]), np.array([[1.0]]), cells) == 3.0

    def test_two_cells(self):
        cells = np.array([[True, True]])
        value = rmse(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]), cells)
        assert value == pytest.approx(3.5355339059, abs=1e-9)

    def test_empty_selector(self):
        with pytest.raises(DataError):
            rmse(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2), dtype=bool))


def _sparse_from(spec, n, mechanism, rate, seed, extra=None):
    col = sample_distribution(spec, n, seed=seed)
    cols = [col] if col.ndim == 1 else [col[:, i] for i in range(col.shape[1])]
    if extra is not None:
        cols.append(sample_distribution(extra, n, seed=seed + 1))
    data = SparseMatrix.from_dense(np.column_stack(cols))
    driver = len(cols) - 1 if mechanism == "MAR" else None
    plan = SparsityPlan(mechanism, rate, targets=(0,), driver=driver, seed=seed + 2)
    return data, inject_sparsity(data, plan)


class TestSelectBestImputer:
    def test_mean_beats_zero_on_normal(self):
        wins = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            values = rng.normal(5, 1, size=(500, 2))
            values[rng.random((500, 2)) < 0.2] = np.nan
            report = select_best_imputer(
                SparseMatrix.from_dense(values), ["mean", "zero"], seed=seed
            )
            assert report.rmse[report.winner.label] == min(report.rmse.values())
            wins += report.winner.kind == "mean"
        assert wins >= 9

    def test_median_beats_mean_on_cauchy(self):
        wins = 0
        for seed in range(10):
            col = sample_distribution(DistributionSpec.cauchy(0, 1), 600, seed=seed)
            drv = sample_distribution(DistributionSpec.normal(0, 1), 600, seed=seed + 50)
            values = np.column_stack([col, drv])
            rng = np.random.default_rng(seed + 100)
            values[rng.random(600) < 0.25, 0] = np.nan
            report = select_best_imputer(
                SparseMatrix.from_dense(values), ["mean", "median"], seed=seed
            )
            wins += report.winner.kind == "median"
        assert wins >= 8

    def test_knn_beats_mean_on_correlated_features(self):
        spec = DistributionSpec.multivariate_normal([0, 0], [[1, 0.9], [0.9, 1]])
        wins = 0
        for seed in range(10):
            values = sample_distribution(spec, 800, seed=seed)
            rng = np.random.default_rng(seed + 200)
            values[rng.random(800) < 0.2, 0] = np.nan
            report = select_best_imputer(
                SparseMatrix.from_dense(values), ["mean", "knn:5"], seed=seed
            )
            wins += report.winner.kind == "knn"
        assert wins >= 8

    def test_too_few_complete_rows(self):
        values = np.full((40, 2), 1.0)
        values[:, 0] = np.nan
        with pytest.raises(SelectionError):
            select_best_imputer(SparseMatrix.from_dense(values), ["mean"], seed=0)

    def test_complete_matrix_rejected(self):
        values = np.ones((100, 2))
        with pytest.raises(SelectionError):
            select_best_imputer(SparseMatrix.from_dense(values), ["mean"], seed=0)

    def test_empty_candidates(self):
        with pytest.raises(SelectionError):
            select_best_imputer(SparseMatrix.from_dense(np.ones((100, 2))), [], seed=0)
