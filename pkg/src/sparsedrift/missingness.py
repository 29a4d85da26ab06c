"""Missingness pattern analysis.

Classifies each incomplete feature as MCAR / MAR / MNAR and quantifies how
much an imputer shifts a feature's expected value.

The per-feature classifier applies the Wald-Wolfowitz runs test to the
feature's observation indicator in row order. If the test rejects randomness
the missingness follows a detectable pattern in the stream ordering and the
feature is called MAR. If the test does not reject, the pattern depends on
something we cannot see, so the feature is called MNAR; MCAR is opt-in and
additionally requires the indicator to be uncorrelated with every observed
feature. Run sequences shorter than 20 give a weak normal approximation and
trigger a warning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import t as t_dist

from .data import SparseMatrix
from .errors import DataError

__all__ = [
    "RunsTestResult",
    "FeatureVerdict",
    "MissingnessVerdict",
    "BiasRecord",
    "ImputationBiasReport",
    "runs_test",
    "classify_missingness",
    "imputation_bias_report",
]

MIN_RECOMMENDED_LENGTH = 20


@dataclass(frozen=True)
class RunsTestResult:
    """Wald-Wolfowitz statistics for a binary sequence.

    ``runs`` is the number of maximal same-symbol blocks; ``z`` compares it
    with the count expected under randomness,
    mu = 2*n1*n0/n + 1 and var = 2*n1*n0*(2*n1*n0 - n) / (n^2 * (n - 1)),
    and ``p_value`` is the two-sided normal tail. A sequence with a single
    symbol (or length < 2) has no runs structure: ``degenerate`` is set and
    z / p_value are NaN.
    """

    runs: int
    n_observed: int
    n_missing: int
    expected_runs: float
    variance: float
    z: float
    p_value: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "n_observed": self.n_observed,
            "n_missing": self.n_missing,
            "expected_runs": self.expected_runs,
            "variance": self.variance,
            "z": self.z,
            "p_value": self.p_value,
            "degenerate": self.degenerate,
        }


def runs_test(mask_column) -> RunsTestResult:
    """Runs test for randomness of a binary sequence (1 = observed)."""
    seq = np.asarray(mask_column)
    if seq.ndim != 1:
        raise DataError("runs_test expects a 1-dimensional sequence")
    if seq.size == 0:
        raise DataError("runs_test expects a nonempty sequence")
    bits = seq.astype(bool)
    n = bits.size
    n1 = int(bits.sum())
    n0 = n - n1
    runs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    if n < MIN_RECOMMENDED_LENGTH:
        warnings.warn(
            f"runs test on {n} values: normal approximation is weak below "
            f"{MIN_RECOMMENDED_LENGTH}",
            stacklevel=2,
        )
    if n1 == 0 or n0 == 0 or n < 2:
        return RunsTestResult(
            runs=runs,
            n_observed=n1,
            n_missing=n0,
            expected_runs=float("nan"),
            variance=float("nan"),
            z=float("nan"),
            p_value=float("nan"),
            degenerate=True,
        )
    mu = 2.0 * n1 * n0 / n + 1.0
    var = 2.0 * n1 * n0 * (2.0 * n1 * n0 - n) / (n * n * (n - 1.0))
    if var <= 0.0:  # only at n = 2; the normal approximation collapses
        return RunsTestResult(
            runs=runs,
            n_observed=n1,
            n_missing=n0,
            expected_runs=mu,
            variance=var,
            z=float("nan"),
            p_value=float("nan"),
            degenerate=True,
        )
    z = (runs - mu) / math.sqrt(var)
    p = 2.0 * (1.0 - ndtr(abs(z)))
    return RunsTestResult(
        runs=runs,
        n_observed=n1,
        n_missing=n0,
        expected_runs=mu,
        variance=var,
        z=z,
        p_value=float(p),
    )


@dataclass(frozen=True)
class FeatureVerdict:
    feature: int
    mechanism: str  # "MCAR" | "MAR" | "MNAR"
    sparsity: float
    evidence: RunsTestResult

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "mechanism": self.mechanism,
            "sparsity": self.sparsity,
            "evidence": self.evidence.to_dict(),
        }


@dataclass(frozen=True)
class MissingnessVerdict:
    """Per-feature mechanism verdicts; complete features are listed apart."""

    features: tuple[FeatureVerdict, ...]
    complete_features: tuple[int, ...]
    alpha: float
    allow_mcar: bool

    def mechanism_of(self, feature: int) -> str | None:
        for fv in self.features:
            if fv.feature == feature:
                return fv.mechanism
        return None

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "allow_mcar": self.allow_mcar,
            "complete_features": list(self.complete_features),
            "features": [fv.to_dict() for fv in self.features],
        }


def _point_biserial_p(binary: np.ndarray, values: np.ndarray) -> float:
    """Two-sided p-value for the point-biserial correlation between a 0/1
    vector and a numeric vector."""
    n = binary.size
    if n < 3 or binary.all() or not binary.any():
        return 1.0
    x = values.astype(float)
    if np.std(x) == 0.0:
        return 1.0
    b = binary.astype(float)
    r = np.corrcoef(b, x)[0, 1]
    if not np.isfinite(r):
        return 1.0
    r = min(max(r, -0.999999999), 0.999999999)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * t_dist.sf(abs(t), df=n - 2))


def classify_missingness(
    data: SparseMatrix, alpha: float = 0.05, allow_mcar: bool = False
) -> MissingnessVerdict:
    """Assign a missingness mechanism to every incomplete feature.

    Features with zero sparsity are excluded from the verdict and reported as
    complete. The decision is deterministic given (data, alpha, allow_mcar).
    """
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must be in (0, 1)")
    verdicts = []
    complete = []
    for j in range(data.n_features):
        observed = data.mask[:, j]
        sparsity = 1.0 - float(observed.mean()) if data.n_rows else 0.0
        if sparsity == 0.0:
            complete.append(j)
            continue
        result = runs_test(observed.astype(np.int8))
        if result.degenerate:
            # fully missing feature: no run structure to read, keep the
            # conservative unobserved-dependence verdict
            mechanism = "MNAR"
        elif result.p_value < alpha:
            mechanism = "MAR"
        else:
            mechanism = "MNAR"
            if allow_mcar and _mask_uncorrelated(data, j, alpha):
                mechanism = "MCAR"
        verdicts.append(
            FeatureVerdict(feature=j, mechanism=mechanism, sparsity=sparsity, evidence=result)
        )
    return MissingnessVerdict(
        features=tuple(verdicts),
        complete_features=tuple(complete),
        alpha=alpha,
        allow_mcar=allow_mcar,
    )


def _mask_uncorrelated(data: SparseMatrix, j: int, alpha: float) -> bool:
    """True when feature j's missingness indicator shows no significant
    point-biserial correlation with any other feature's observed values."""
    missing = ~data.mask[:, j]
    for k in range(data.n_features):
        if k == j:
            continue
        rows = data.mask[:, k]
        if rows.sum() < 3:
            continue
        p = _point_biserial_p(missing[rows], data.values[rows, k])
        if p < alpha:
            return False
    return True


@dataclass(frozen=True)
class BiasRecord:
    """Expectation shift of one feature under a given imputation.

    ``e1_hat`` is the mean over observed cells, ``e2_hat`` the weighted mix
    of the observed mean and the mean imputed value over missing cells with
    the empirical weights w1 (observed fraction) and w2 (missing fraction).
    """

    feature: int
    e1_hat: float
    e2_hat: float
    w1: float
    w2: float
    bias: float
    undefined: bool = False

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "e1_hat": self.e1_hat,
            "e2_hat": self.e2_hat,
            "w1": self.w1,
            "w2": self.w2,
            "bias": self.bias,
            "undefined": self.undefined,
        }


@dataclass(frozen=True)
class ImputationBiasReport:
    records: tuple[BiasRecord, ...]

    def to_dict(self) -> dict:
        return {"features": [r.to_dict() for r in self.records]}


def imputation_bias_report(observed: SparseMatrix, imputed) -> ImputationBiasReport:
    """Per-feature expectation shift introduced by an imputation.

    ``imputed`` must be a complete matrix aligned with ``observed``. A fully
    missing feature has no observed expectation; its record is flagged
    undefined.
    """
    if isinstance(imputed, SparseMatrix):
        if not imputed.is_complete():
            raise DataError("imputed matrix still has missing cells")
        imp_values = imputed.values
    else:
        imp_values = np.asarray(imputed, dtype=float)
        if np.isnan(imp_values).any():
            raise DataError("imputed matrix still has missing cells")
    if imp_values.shape != observed.values.shape:
        raise DataError("imputed matrix shape does not match")

    records = []
    n = observed.n_rows
    for j in range(observed.n_features):
        obs = observed.mask[:, j]
        n_obs = int(obs.sum())
        w1 = n_obs / n if n else 0.0
        w2 = 1.0 - w1
        if n_obs == 0:
            records.append(
                BiasRecord(
                    feature=j,
                    e1_hat=float("nan"),
                    e2_hat=float(imp_values[:, j].mean()) if n else float("nan"),
                    w1=w1,
                    w2=w2,
                    bias=float("nan"),
                    undefined=True,
                )
            )
            continue
        e1 = float(observed.values[obs, j].mean())
        if n_obs == n:
            e2 = e1
        else:
            imputed_mean = float(imp_values[~obs, j].mean())
            e2 = w1 * e1 + w2 * imputed_mean
        records.append(
            BiasRecord(feature=j, e1_hat=e1, e2_hat=e2, w1=w1, w2=w2, bias=e2 - e1)
        )
    return ImputationBiasReport(records=tuple(records))
