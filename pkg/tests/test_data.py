import numpy as np
import pytest

from sparsedrift.data import (
    DriftSpec,
    LabeledStream,
    SparseMatrix,
    ingest_csv,
    read_drift_sidecar,
    read_stream_csv,
    write_drift_sidecar,
    write_stream_csv,
)
from sparsedrift.errors import DataError, SpecError


class TestSparseMatrix:
    def test_missing_cells_are_nan(self):
        m = SparseMatrix(values=[[1.0, 2.0], [3.0, 4.0]], mask=[[True, False], [True, True]])
        assert np.isnan(m.values[0, 1])
        assert m.values[1, 1] == 4.0

    def test_from_dense_infers_mask(self):
        m = SparseMatrix.from_dense([[1.0, np.nan], [2.0, 3.0]])
        assert m.mask.tolist() == [[True, False], [True, True]]
        assert m.sparsity().tolist() == [0.0, 0.5]

    def test_observed_nan_rejected(self):
        with pytest.raises(DataError):
            SparseMatrix(values=[[np.nan]], mask=[[True]])

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            SparseMatrix(values=[[1.0, 2.0]], mask=[[True]])

    def test_complete_rows(self):
        m = SparseMatrix.from_dense([[1.0, np.nan], [2.0, 3.0]])
        assert m.complete_rows().tolist() == [False, True]
        assert not m.is_complete()


class TestDriftSpec:
    def test_positions_strictly_increasing(self):
        with pytest.raises(SpecError):
            DriftSpec(positions=(100, 100), widths=(0, 0))

    def test_intervals_disjoint(self):
        with pytest.raises(SpecError):
            DriftSpec(positions=(100, 150), widths=(80, 0), kind="gradual")
        DriftSpec(positions=(100, 180), widths=(80, 0), kind="gradual")

    def test_abrupt_requires_zero_width(self):
        with pytest.raises(SpecError):
            DriftSpec(positions=(10,), widths=(5,), kind="abrupt")

    def test_unknown_kind(self):
        with pytest.raises(SpecError):
            DriftSpec(positions=(10,), widths=(0,), kind="sudden")


class TestLabeledStream:
    def test_labels_binary(self):
        with pytest.raises(DataError):
            LabeledStream(features=np.zeros((2, 1)), labels=np.array([0, 2]))

    def test_drift_must_fit(self):
        with pytest.raises(SpecError):
            LabeledStream(
                features=np.zeros((10, 1)),
                labels=np.zeros(10),
                drift=DriftSpec(positions=(8,), widths=(5,), kind="gradual"),
            )


class TestCsvFormat:
    def test_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        stream = LabeledStream(
            features=rng.normal(size=(50, 3)),
            labels=(rng.random(50) < 0.5).astype(int),
        )
        stream.features[3, 1] = np.nan
        stream = LabeledStream(features=stream.features, labels=stream.labels)
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        write_stream_csv(stream, first)
        write_stream_csv(read_stream_csv(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_na_and_empty_fields_missing(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("f0,f1,label\n1,NA,0\n,2.5,1\n")
        matrix, labels = ingest_csv(path)
        assert matrix.mask.tolist() == [[True, False], [False, True]]
        assert labels.tolist() == [0, 1]

    def test_empty_file_is_schema_error(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataError):
            ingest_csv(path)

    def test_non_numeric_cell_reports_location(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1,label\n1,oops,0\n")
        with pytest.raises(DataError, match="row 2.*f1"):
            ingest_csv(path)

    def test_missing_label_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,label\n1,\n")
        with pytest.raises(DataError, match="label"):
            ingest_csv(path)

    def test_sidecar_round_trip(self, tmp_path):
        drift = DriftSpec(positions=(100, 400), widths=(50, 0), kind="gradual")
        path = tmp_path / "drift.json"
        write_drift_sidecar(drift, path)
        assert read_drift_sidecar(path) == drift
