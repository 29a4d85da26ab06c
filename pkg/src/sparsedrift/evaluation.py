"""Prequential (test-then-train) evaluation and drift-detection metrics.

Each instance is first predicted, the 0/1 loss recorded and fed to the
detector as the error bit, then the learner trains on the instance. When the
detector reports drift the retrain policy runs (default: reset the learner)
before training continues, and the retrain is marked in the trace.

Detection quality against ground-truth drifts uses an acceptable detection
interval (ADI) of four drift widths, floored for instantaneous drifts:
a detection d is true for a drift at p iff p < d <= p + ADI. Each detection
attaches to at most one drift (the earliest still-unmatched candidate), so
the reported delay per drift is the first true detection. TPR is
true detections over all detections (repeated firing can inflate it), TPD is
true detections over actual drifts (optimal value 1), and drift_count is the
number of actual drifts that received at least one true detection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DriftSpec, LabeledStream
from .detectors import Signal
from .errors import DataError

__all__ = [
    "GaussianNB",
    "NullDetector",
    "RunTrace",
    "DetectionMetrics",
    "MetricsReport",
    "prequential_run",
    "prequential_error",
    "accuracy",
    "detection_metrics",
]

DEFAULT_ADI_FLOOR = 250
VARIANCE_FLOOR = 1e-9


class GaussianNB:
    """Online Gaussian naive Bayes for binary labels.

    Per class: instance count and per-feature mean/M2 (Welford), giving
    nonnegative variances under any update order. Priors are Laplace
    smoothed; per-feature variances are floored at 1e-9. Before any update
    the classifier answers the configured prior label.
    """

    def __init__(self, n_features: int, prior_label: int = 0):
        if n_features < 1:
            raise DataError("need at least one feature")
        self.n_features = n_features
        self.prior_label = int(prior_label)
        self.reset()

    def reset(self):
        self.counts = np.zeros(2, dtype=np.int64)
        self.means = np.zeros((2, self.n_features))
        self.m2 = np.zeros((2, self.n_features))

    def _check_features(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.shape != (self.n_features,):
            raise DataError(f"expected {self.n_features} features, got shape {x.shape}")
        if not np.isfinite(x).all():
            raise DataError("features must be finite (impute missing cells upstream)")
        return x

    def predict(self, features) -> int:
        x = self._check_features(features)
        total = int(self.counts.sum())
        if total == 0:
            return self.prior_label
        best_label = self.prior_label
        best_score = -np.inf
        for c in (0, 1):
            if self.counts[c] == 0:
                continue
            score = self._log_posterior(c, x, total)
            if score > best_score:
                best_score = score
                best_label = c
        return best_label

    def _log_posterior(self, c: int, x: np.ndarray, total: int) -> float:
        prior = (self.counts[c] + 1.0) / (total + 2.0)
        var = np.maximum(self.m2[c] / self.counts[c], VARIANCE_FLOOR)
        diff = x - self.means[c]
        loglik = -0.5 * np.sum(np.log(2.0 * np.pi * var) + diff * diff / var)
        return float(np.log(prior) + loglik)

    def posterior_margin(self, features) -> float:
        """log p(y=1|x) - log p(y=0|x); NaN before both classes are seen."""
        x = self._check_features(features)
        total = int(self.counts.sum())
        if self.counts[0] == 0 or self.counts[1] == 0:
            return float("nan")
        return self._log_posterior(1, x, total) - self._log_posterior(0, x, total)

    def update(self, features, label) -> None:
        x = self._check_features(features)
        c = int(label)
        if c not in (0, 1):
            raise DataError("label must be 0 or 1")
        self.counts[c] += 1
        delta = x - self.means[c]
        self.means[c] += delta / self.counts[c]
        self.m2[c] += delta * (x - self.means[c])


class NullDetector:
    """Baseline detector that never signals."""

    def update(self, x) -> int:
        return int(Signal.IN_CONTROL)

    def reset(self):
        pass


@dataclass
class RunTrace:
    """Per-instance record of one prequential run."""

    predictions: np.ndarray
    labels: np.ndarray
    losses: np.ndarray
    signals: np.ndarray
    retrain_indices: tuple[int, ...]
    drift_indices: tuple[int, ...]
    annotations: DriftSpec | None

    def __len__(self) -> int:
        return len(self.losses)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("index,prediction,label,loss,signal,retrain\n")
            retrains = set(self.retrain_indices)
            for i in range(len(self.losses)):
                fh.write(
                    f"{i},{int(self.predictions[i])},{int(self.labels[i])},"
                    f"{int(self.losses[i])},{int(self.signals[i])},"
                    f"{1 if i in retrains else 0}\n"
                )


def prequential_run(stream: LabeledStream, learner, detector,
                    reset_on_drift: bool = True) -> RunTrace:
    """Test-then-train pass over the stream.

    The stream must be fully imputed; a missing feature cell raises. The
    detector sees the 0/1 loss of each prediction and may be a base detector
    or a voting ensemble (anything with ``update(x) -> signal``).
    """
    n = len(stream)
    if np.isnan(stream.features).any():
        raise DataError("stream has missing feature cells; impute before evaluating")
    predictions = np.empty(n, dtype=np.int8)
    losses = np.empty(n, dtype=np.int8)
    signals = np.empty(n, dtype=np.int8)
    retrains: list[int] = []
    drifts: list[int] = []
    for i in range(n):
        x = stream.features[i]
        y = int(stream.labels[i])
        y_hat = learner.predict(x)
        loss = 0 if y_hat == y else 1
        sig = int(detector.update(float(loss)))
        predictions[i] = y_hat
        losses[i] = loss
        signals[i] = sig
        if sig == Signal.DRIFT:
            drifts.append(i)
            if reset_on_drift:
                learner.reset()
                retrains.append(i)
        learner.update(x, y)
    return RunTrace(
        predictions=predictions,
        labels=stream.labels.copy(),
        losses=losses,
        signals=signals,
        retrain_indices=tuple(retrains),
        drift_indices=tuple(drifts),
        annotations=stream.drift,
    )


def prequential_error(trace) -> np.ndarray:
    """Running mean of the per-instance losses, e_i = (1/i) sum_{k<=i} L_k."""
    losses = trace.losses if isinstance(trace, RunTrace) else np.asarray(trace, dtype=float)
    if len(losses) == 0:
        raise DataError("trace is empty")
    return np.cumsum(losses, dtype=float) / np.arange(1, len(losses) + 1)


def accuracy(trace) -> float:
    """Fraction of accurate predictions: 1 minus the final prequential error."""
    return 1.0 - float(prequential_error(trace)[-1])


@dataclass(frozen=True)
class DetectionMetrics:
    add: float | None  # mean delay over drifts with a true detection
    tpr: float | None  # true detections / all detections (None when nothing detected)
    tpd: float | None  # true detections / actual drifts (None without truth)
    drift_count: int  # actual drifts with at least one true detection
    n_detections: int
    n_true_detections: int
    n_actual: int
    adi: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "add": self.add,
            "tpr": self.tpr,
            "tpd": self.tpd,
            "drift_count": self.drift_count,
            "n_detections": self.n_detections,
            "n_true_detections": self.n_true_detections,
            "n_actual": self.n_actual,
            "adi": list(self.adi),
        }


def detection_metrics(detected, truth: DriftSpec | None,
                      adi_floor: int = DEFAULT_ADI_FLOOR) -> DetectionMetrics:
    """Score detection indices against ground-truth drifts.

    ADI per drift is max(4 * width, adi_floor). Without truth only the
    false-alarm count is meaningful: TPD stays None.
    """
    detected = list(detected)
    if any(b < a for a, b in zip(detected, detected[1:])):
        raise DataError("detected indices must be sorted")
    if truth is None or len(truth) == 0:
        return DetectionMetrics(
            add=None,
            tpr=0.0 if detected else None,
            tpd=None,
            drift_count=0,
            n_detections=len(detected),
            n_true_detections=0,
            n_actual=0,
            adi=(),
        )
    adi = tuple(max(4 * w, adi_floor) for w in truth.widths)
    first_hit: dict[int, int] = {}
    n_true = 0
    for d in detected:
        candidates = [
            k
            for k, (p, a) in enumerate(zip(truth.positions, adi))
            if p < d <= p + a
        ]
        if not candidates:
            continue
        n_true += 1
        unfilled = [k for k in candidates if k not in first_hit]
        if unfilled:
            first_hit[unfilled[0]] = d
    delays = [first_hit[k] - truth.positions[k] for k in first_hit]
    return DetectionMetrics(
        add=float(np.mean(delays)) if delays else None,
        tpr=(n_true / len(detected)) if detected else None,
        tpd=n_true / len(truth),
        drift_count=len(first_hit),
        n_detections=len(detected),
        n_true_detections=n_true,
        n_actual=len(truth),
        adi=adi,
    )


def drift_truth_votes(truth: DriftSpec | None, n: int,
                      adi_floor: int = DEFAULT_ADI_FLOOR) -> np.ndarray:
    """+-1 per instant: +1 while a drift's detection interval is open.

    Instant i is +1 when p < i <= p + ADI for some ground-truth drift at p;
    this is the window in which declaring a drift counts as correct.
    """
    y = -np.ones(n, dtype=np.int8)
    if truth is not None:
        for p, w in zip(truth.positions, truth.widths):
            adi = max(4 * w, adi_floor)
            y[p + 1 : min(n, p + adi + 1)] = 1
    return y


@dataclass
class MetricsReport:
    """The six per-run metrics plus context, serializable to JSON."""

    final_error: float
    accuracy: float
    add: float | None
    tpr: float | None
    tpd: float | None
    drift_count: int
    n_detections: int
    n_actual: int
    adi_floor: int
    error_series: tuple[float, ...] = field(default_factory=tuple, repr=False)

    @classmethod
    def from_trace(cls, trace: RunTrace, adi_floor: int = DEFAULT_ADI_FLOOR,
                   keep_series: int = 0) -> "MetricsReport":
        errors = prequential_error(trace)
        det = detection_metrics(list(trace.drift_indices), trace.annotations, adi_floor)
        series: tuple[float, ...] = ()
        if keep_series > 0:
            step = max(1, len(errors) // keep_series)
            series = tuple(float(e) for e in errors[::step])
        return cls(
            final_error=float(errors[-1]),
            accuracy=1.0 - float(errors[-1]),
            add=det.add,
            tpr=det.tpr,
            tpd=det.tpd,
            drift_count=det.drift_count,
            n_detections=det.n_detections,
            n_actual=det.n_actual,
            adi_floor=adi_floor,
            error_series=series,
        )

    def to_dict(self) -> dict:
        return {
            "final_error": self.final_error,
            "accuracy": self.accuracy,
            "add": self.add,
            "tpr": self.tpr,
            "tpd": self.tpd,
            "drift_count": self.drift_count,
            "n_detections": self.n_detections,
            "n_actual": self.n_actual,
            "adi_floor": self.adi_floor,
            "error_series": list(self.error_series),
        }
