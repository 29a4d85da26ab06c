"""Synthetic stream generation and sparsity injection.

All generators are pure functions of their inputs and a 64-bit seed. Random
draws use numpy's PCG64 generator, which is platform independent; the same
seed always reproduces the same stream.

Missingness mechanisms follow the standard taxonomy:

* MCAR: each target cell is masked independently with probability ``rate``.
* MAR: cell (i, j) is masked when the driver value x[i, k] ranks in the top
  ``rate`` quantile of column k; the driver column itself is never masked.
* MNAR: cell (i, j) is masked when its own value ranks in the top ``rate``
  quantile of column j.

The quantile mechanisms mask exactly ``round(rate * n)`` cells per target
column (largest values first, ties broken by row index) so that masked versus
observed values are cleanly separated and the realized rate is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import DriftSpec, LabeledStream, SparseMatrix
from .errors import ParameterError, SpecError

__all__ = [
    "DistributionSpec",
    "SparsityPlan",
    "sample_distribution",
    "make_labeled_stream",
    "make_drift_stream",
    "inject_sparsity",
    "shuffle_instances",
]

FAMILIES = ("normal", "uniform", "chi_squared", "cauchy", "binomial", "multivariate_normal")


@dataclass(frozen=True)
class DistributionSpec:
    """A named distribution family with its parameters."""

    family: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}")
        object.__setattr__(self, "params", dict(self.params))
        self.validate()

    # -- constructors ------------------------------------------------------
    @classmethod
    def normal(cls, mean=0.0, std=1.0):
        return cls("normal", {"mean": float(mean), "std": float(std)})

    @classmethod
    def uniform(cls, lower=0.0, upper=1.0):
        return cls("uniform", {"lower": float(lower), "upper": float(upper)})

    @classmethod
    def chi_squared(cls, df=1.0):
        return cls("chi_squared", {"df": float(df)})

    @classmethod
    def cauchy(cls, loc=0.0, scale=1.0):
        return cls("cauchy", {"loc": float(loc), "scale": float(scale)})

    @classmethod
    def binomial(cls, trials=1, probability=0.5):
        return cls("binomial", {"trials": int(trials), "probability": float(probability)})

    @classmethod
    def multivariate_normal(cls, mean, cov):
        return cls(
            "multivariate_normal",
            {"mean": np.asarray(mean, dtype=float), "cov": np.asarray(cov, dtype=float)},
        )

    # -- validation --------------------------------------------------------
    def validate(self) -> None:
        p = self.params
        if self.family == "normal":
            if p["std"] <= 0:
                raise ParameterError("normal std must be > 0")
        elif self.family == "uniform":
            if not p["lower"] < p["upper"]:
                raise ParameterError("uniform requires lower < upper")
        elif self.family == "chi_squared":
            if p["df"] < 1:
                raise ParameterError("chi-squared df must be >= 1")
        elif self.family == "cauchy":
            if p["scale"] <= 0:
                raise ParameterError("cauchy scale must be > 0")
        elif self.family == "binomial":
            if p["trials"] < 1:
                raise ParameterError("binomial trials must be >= 1")
            if not 0.0 <= p["probability"] <= 1.0:
                raise ParameterError("binomial probability must be in [0, 1]")
        elif self.family == "multivariate_normal":
            mean = np.asarray(p["mean"], dtype=float)
            cov = np.asarray(p["cov"], dtype=float)
            if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
                raise ParameterError("mean/covariance dimensions do not match")
            if not np.allclose(cov, cov.T, atol=1e-10):
                raise ParameterError("covariance matrix must be symmetric")
            eigvals = np.linalg.eigvalsh(cov)
            if eigvals.min() < -1e-10 * max(1.0, abs(eigvals.max())):
                raise ParameterError("covariance matrix must be positive semi-definite")


@dataclass(frozen=True)
class SparsityPlan:
    """How to inject missing values into a set of target features."""

    mechanism: str
    rate: float
    targets: tuple[int, ...]
    driver: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mechanism not in ("MCAR", "MAR", "MNAR"):
            raise SpecError(f"unknown mechanism {self.mechanism!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ParameterError(f"rate must be in [0, 1], got {self.rate}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.mechanism == "MAR":
            if self.driver is None:
                raise SpecError("MAR requires a driver feature")
            if self.driver in self.targets:
                raise SpecError("MAR driver must not be a target feature")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sample_distribution(spec: DistributionSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` samples. Univariate families return shape (n,); the
    multivariate normal returns one column per dimension."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    spec.validate()
    rng = _rng(seed)
    p = spec.params
    if spec.family == "normal":
        return rng.normal(p["mean"], p["std"], size=n)
    if spec.family == "uniform":
        return rng.uniform(p["lower"], p["upper"], size=n)
    if spec.family == "chi_squared":
        return rng.chisquare(p["df"], size=n)
    if spec.family == "cauchy":
        # inverse-CDF transform keeps location/scale exact
        u = rng.random(size=n)
        return p["loc"] + p["scale"] * np.tan(np.pi * (u - 0.5))
    if spec.family == "binomial":
        return rng.binomial(p["trials"], p["probability"], size=n).astype(np.float64)
    if spec.family == "multivariate_normal":
        mean = np.asarray(p["mean"], dtype=float)
        cov = np.asarray(p["cov"], dtype=float)
        return rng.multivariate_normal(mean, cov, size=n, method="svd")
    raise ParameterError(f"unknown family {spec.family!r}")  # pragma: no cover


def make_labeled_stream(
    n: int,
    n_features: int = 4,
    *,
    seed: int = 0,
    feature_spec: DistributionSpec | None = None,
    class_sep: float = 4.0,
    balance: float = 0.5,
) -> LabeledStream:
    """Generate a separable binary-labeled stream.

    Features are drawn i.i.d. from ``feature_spec`` (standard normal by
    default, or one multivariate draw per instance); instances with label 1
    are shifted by ``class_sep / sqrt(d)`` along every feature so the total
    Euclidean class separation is ``class_sep`` regardless of dimension.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = _rng(seed)
    labels = (rng.random(n) < balance).astype(np.int8)
    if feature_spec is None:
        feature_spec = DistributionSpec.normal(0.0, 1.0)
    if feature_spec.family == "multivariate_normal":
        features = sample_distribution(feature_spec, n, seed=seed + 1)
        n_features = features.shape[1]
    else:
        cols = [sample_distribution(feature_spec, n, seed=seed + 1 + j) for j in range(n_features)]
        features = np.column_stack(cols)
    shift = class_sep / np.sqrt(n_features)
    features = features + shift * labels[:, None]
    return LabeledStream(features=features, labels=labels, drift=None)


def make_drift_stream(base: LabeledStream, drift: DriftSpec, seed: int = 0) -> LabeledStream:
    """Inject concept drifts into ``base`` by flipping class labels.

    Each drift toggles the active concept. An abrupt drift (width 0) flips
    every label from its position onward relative to the concept before it.
    A gradual drift ramps the flip probability linearly from 0 to 1 across
    ``[position, position + width)``; after the window the new concept holds.
    """
    n = len(base)
    for p, w in zip(drift.positions, drift.widths):
        if p >= n or p + w > n:
            raise SpecError(f"drift at {p} (width {w}) does not fit a stream of length {n}")
    rng = _rng(seed)
    labels = base.labels.astype(np.int8).copy()
    flip = np.zeros(n, dtype=bool)  # whether the active concept is the flipped one
    concept = False
    for p, w in zip(drift.positions, drift.widths):
        new_concept = not concept
        if w == 0:
            flip[p:] = new_concept
        else:
            ramp = (np.arange(p, p + w) - p) / w
            use_new = rng.random(w) < ramp
            flip[p : p + w] = np.where(use_new, new_concept, concept)
            flip[p + w :] = new_concept
        concept = new_concept
    labels[flip] = 1 - labels[flip]
    return LabeledStream(features=base.features.copy(), labels=labels, drift=drift)


def inject_sparsity(data: SparseMatrix, plan: SparsityPlan) -> SparseMatrix:
    """Mask cells of the target features according to the plan.

    Never unmasks a cell and never alters an observed value; deterministic
    for a fixed (data, plan) pair.
    """
    n = data.n_rows
    for t in plan.targets:
        if not 0 <= t < data.n_features:
            raise SpecError(f"target feature {t} out of range")
    if plan.driver is not None and not 0 <= plan.driver < data.n_features:
        raise SpecError(f"driver feature {plan.driver} out of range")

    mask = data.mask.copy()
    if plan.rate == 0.0 or n == 0:
        return SparseMatrix(values=data.values, mask=mask, meta=dict(data.meta))

    if plan.mechanism == "MCAR":
        rng = _rng(plan.seed)
        for j in plan.targets:
            hit = rng.random(n) < plan.rate
            mask[:, j] &= ~hit
    else:
        for j in plan.targets:
            rank_col = plan.driver if plan.mechanism == "MAR" else j
            col = data.values[:, rank_col]
            eligible = data.mask[:, rank_col]
            rows = np.nonzero(eligible)[0]
            k = int(round(plan.rate * rows.size))
            if k == 0:
                continue
            # largest values first; stable sort keeps ties in row order
            order = rows[np.argsort(-col[rows], kind="stable")]
            mask[order[:k], j] = False

    return SparseMatrix(values=data.values, mask=mask, meta=dict(data.meta))


def shuffle_instances(stream: LabeledStream, seed: int) -> LabeledStream:
    """Randomly permute a stream's instances (drops drift annotations, since
    a permutation destroys any positional drift structure)."""
    n = len(stream)
    if n == 0:
        return LabeledStream(
            features=stream.features.copy(), labels=stream.labels.copy(), drift=None
        )
    perm = _rng(seed).permutation(n)
    return LabeledStream(
        features=stream.features[perm].copy(),
        labels=stream.labels[perm].copy(),
        drift=None,
    )
