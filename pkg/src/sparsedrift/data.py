"""Shared data carriers and their on-disk formats.

``SparseMatrix`` is the universal feature container: a float64 matrix plus an
explicit per-cell mask (True = observed, matching the usual missing-indicator
convention where 1 means observed). Missing cells hold NaN in the value array
so the mask and values can never disagree.

Streams serialize to CSV with a header row, one feature per column and the
label in the final column; a missing cell is an empty field or the literal
``NA``. Drift annotations travel in a JSON sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, SpecError

__all__ = [
    "SparseMatrix",
    "DriftSpec",
    "LabeledStream",
    "write_stream_csv",
    "read_stream_csv",
    "ingest_csv",
    "write_drift_sidecar",
    "read_drift_sidecar",
]

_MISSING_TOKENS = {"", "NA"}


@dataclass
class SparseMatrix:
    """Numeric matrix with an explicit observation mask.

    ``values`` is float64 with NaN at missing cells; ``mask`` is boolean with
    True where a cell is observed. ``meta`` carries operation notes (e.g. kNN
    fallback cells) and never affects numeric behaviour.
    """

    values: np.ndarray
    mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("SparseMatrix values must be 2-dimensional")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != values.shape:
            raise DataError(
                f"mask shape {mask.shape} does not match values shape {values.shape}"
            )
        if np.isnan(values[mask]).any():
            raise DataError("observed cells must not be NaN")
        values = values.copy()
        values[~mask] = np.nan
        self.values = values
        self.mask = mask.copy()

    @classmethod
    def from_dense(cls, values) -> "SparseMatrix":
        """Build from a dense array; NaN cells become missing."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        return cls(values=values, mask=~np.isnan(values))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def sparsity(self) -> np.ndarray:
        """Per-feature fraction of missing cells."""
        if self.n_rows == 0:
            return np.zeros(self.n_features)
        return 1.0 - self.mask.mean(axis=0)

    def is_complete(self) -> bool:
        return bool(self.mask.all())

    def complete_rows(self) -> np.ndarray:
        """Boolean selector of rows with no missing cell."""
        return self.mask.all(axis=1)

    def copy(self) -> "SparseMatrix":
        return SparseMatrix(self.values.copy(), self.mask.copy(), dict(self.meta))


@dataclass(frozen=True)
class DriftSpec:
    """Ground-truth drift annotations: positions, per-drift widths, kind.

    A width of 0 denotes an instantaneous (abrupt) change; gradual drifts
    transition over ``width`` instances. Consecutive drift intervals must not
    overlap.
    """

    positions: tuple[int, ...]
    widths: tuple[int, ...]
    kind: str = "abrupt"

    def __post_init__(self):
        positions = tuple(int(p) for p in self.positions)
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "widths", widths)
        if self.kind not in ("abrupt", "gradual"):
            raise SpecError(f"unknown drift kind {self.kind!r}")
        if len(positions) != len(widths):
            raise SpecError("positions and widths must have equal length")
        if any(p < 0 for p in positions) or any(w < 0 for w in widths):
            raise SpecError("positions and widths must be nonnegative")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise SpecError("drift positions must be strictly increasing")
        for (p, w), nxt in zip(zip(positions, widths), positions[1:]):
            if p + w > nxt:
                raise SpecError(
                    f"drift interval [{p}, {p + w}) overlaps the drift at {nxt}"
                )
        if self.kind == "abrupt" and any(w != 0 for w in widths):
            raise SpecError("abrupt drifts must have width 0")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class LabeledStream:
    """Ordered instances (feature vector, binary label) with drift annotations."""

    features: np.ndarray
    labels: np.ndarray
    drift: DriftSpec | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise DataError("stream features must be 2-dimensional")
        labels = np.asarray(self.labels)
        if labels.shape != (features.shape[0],):
            raise DataError("labels must be one per instance")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be binary (0/1)")
        self.features = features
        self.labels = labels.astype(np.int8)
        if self.drift is not None and len(self.drift):
            last = self.drift.positions[-1] + self.drift.widths[-1]
            if last > len(labels):
                raise SpecError("drift interval extends past the end of the stream")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _format_cell(value: float) -> str:
    if np.isnan(value):
        return ""
    return repr(float(value))


def write_stream_csv(stream: LabeledStream, path) -> None:
    """Serialize a stream: header, one row per instance, label last."""
    path = Path(path)
    d = stream.n_features
    header = ",".join([f"f{j}" for j in range(d)] + ["label"])
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row, label in zip(stream.features, stream.labels):
            cells = [_format_cell(v) for v in row]
            cells.append(str(int(label)))
            fh.write(",".join(cells) + "\n")


def ingest_csv(path, *, label_column: int | None = None) -> tuple[SparseMatrix, np.ndarray]:
    """Read a feature/label CSV into a SparseMatrix and a label vector.

    Empty fields and the literal ``NA`` become missing cells. The label is the
    final column unless ``label_column`` overrides it; labels may not be
    missing. Row order is preserved.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open("r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() != ""]
    if not lines:
        raise DataError(f"{path}: empty file (no header row)")
    header = lines[0].split(",")
    n_cols = len(header)
    if n_cols < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")
    label_idx = (n_cols - 1) if label_column is None else label_column
    if not (0 <= label_idx < n_cols):
        raise DataError(f"{path}: label column {label_idx} out of range")

    values = np.empty((len(lines) - 1, n_cols - 1))
    mask = np.ones_like(values, dtype=bool)
    labels = np.empty(len(lines) - 1, dtype=np.int8)
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != n_cols:
            raise DataError(f"{path}: row {i + 2} has {len(cells)} fields, expected {n_cols}")
        k = 0
        for j, cell in enumerate(cells):
            cell = cell.strip()
            if j == label_idx:
                if cell in _MISSING_TOKENS:
                    raise DataError(f"{path}: missing label at row {i + 2}")
                try:
                    labels[i] = int(float(cell))
                except ValueError:
                    raise DataError(f"{path}: non-numeric label {cell!r} at row {i + 2}") from None
                continue
            if cell in _MISSING_TOKENS:
                values[i, k] = np.nan
                mask[i, k] = False
            else:
                try:
                    values[i, k] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {i + 2}, column {header[j]!r}"
                    ) from None
            k += 1
    if not np.isin(labels, (0, 1)).all():
        raise DataError(f"{path}: labels must be binary (0/1)")
    return SparseMatrix(values=values, mask=mask), labels


def read_stream_csv(path, sidecar=None) -> LabeledStream:
    """Read a stream CSV (optionally with its drift sidecar).

    Missing feature cells are preserved as NaN in the stream's feature matrix.
    """
    matrix, labels = ingest_csv(path)
    drift = read_drift_sidecar(sidecar) if sidecar is not None else None
    return LabeledStream(features=matrix.values, labels=labels, drift=drift)


def write_drift_sidecar(drift: DriftSpec, path) -> None:
    payload = {
        "positions": list(drift.positions),
        "widths": list(drift.widths),
        "kind": drift.kind,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_drift_sidecar(path) -> DriftSpec:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    try:
        return DriftSpec(
            positions=tuple(payload["positions"]),
            widths=tuple(payload["widths"]),
            kind=payload.get("kind", "abrupt"),
        )
    except KeyError as exc:
        raise DataError(f"{path}: drift sidecar missing key {exc}") from None
