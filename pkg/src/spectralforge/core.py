"""Core data model: spectra, targets, CSV ingestion, and fold splitting.

All containers are immutable after construction (backing arrays are marked
read-only), so they can be shared freely across threads and processes.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TARGET_NAMES = ("water", "protein", "lipids_yield")

MASK64 = (1 << 64) - 1


class DatasetError(ValueError):
    """An input file violates the dataset contract."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


def derive_rng(base_seed: int, *path) -> np.random.Generator:
    """Child PCG64 generator for a named component of a larger experiment.

    The stream is keyed by ``(base_seed, *path)`` where string path elements
    are mapped to integers via CRC-32.  The same key always yields the same
    stream, on any platform, which is what makes whole experiments
    reproducible from a single 64-bit seed.
    """
    key = [int(base_seed) & MASK64]
    for p in path:
        key.append(zlib.crc32(p.encode()) if isinstance(p, str) else int(p) & MASK64)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def derive_seed(base_seed: int, *path) -> int:
    """63-bit integer seed derived like derive_rng, for configs that carry one."""
    return int(derive_rng(base_seed, *path).integers(2**63))


@dataclass(frozen=True, eq=False)
class WavenumberAxis:
    """Strictly monotonic wavenumber grid (cm^-1), length >= 3."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 3:
            raise ValueError("wavenumber axis must be 1-D with at least 3 points")
        if not np.all(np.isfinite(values)):
            raise ValueError("wavenumber axis contains non-finite values")
        steps = np.diff(values)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("wavenumber axis must be strictly monotonic")
        object.__setattr__(self, "values", _freeze(values))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class SpectralMatrix:
    """n_samples x n_features intensity grid over a shared wavenumber axis."""

    axis: WavenumberAxis
    rows: np.ndarray
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-D array")
        if rows.shape[1] != len(self.axis):
            raise ValueError(
                f"row length {rows.shape[1]} does not match axis length {len(self.axis)}"
            )
        if not np.all(np.isfinite(rows)):
            raise ValueError("spectral matrix contains non-finite values")
        ids = tuple(str(s) for s in self.sample_ids)
        if len(ids) != rows.shape[0]:
            raise ValueError("sample_ids length does not match row count")
        if len(set(ids)) != len(ids):
            raise ValueError("sample_ids must be unique")
        object.__setattr__(self, "rows", _freeze(rows))
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def with_rows(self, rows: np.ndarray, sample_ids=None) -> "SpectralMatrix":
        """New matrix on the same axis with replaced intensities."""
        ids = self.sample_ids if sample_ids is None else sample_ids
        return SpectralMatrix(self.axis, rows, ids)

    def take(self, indices) -> "SpectralMatrix":
        idx = np.asarray(indices, dtype=int)
        return SpectralMatrix(
            self.axis, self.rows[idx], tuple(self.sample_ids[i] for i in idx)
        )


@dataclass(frozen=True, eq=False)
class TargetMatrix:
    """n_samples x 3 reference values (percent of total weight)."""

    rows: np.ndarray
    target_names: tuple[str, ...] = TARGET_NAMES

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != len(self.target_names):
            raise ValueError(
                f"target matrix must have {len(self.target_names)} columns"
            )
        if not np.all(np.isfinite(rows)):
            raise ValueError("target matrix contains non-finite values")
        object.__setattr__(self, "rows", _freeze(rows))
        object.__setattr__(self, "target_names", tuple(self.target_names))

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    def take(self, indices) -> "TargetMatrix":
        return TargetMatrix(self.rows[np.asarray(indices, dtype=int)], self.target_names)


@dataclass(frozen=True, eq=False)
class FoldSplit:
    """Assignment of each sample to one of k folds, reproducible from a seed."""

    k: int
    assignments: np.ndarray
    seed: int

    def __post_init__(self):
        assignments = np.asarray(self.assignments, dtype=np.int64)
        if assignments.ndim != 1:
            raise ValueError("assignments must be 1-D")
        sizes = np.bincount(assignments, minlength=self.k)
        if assignments.min(initial=0) < 0 or assignments.max(initial=0) >= self.k:
            raise ValueError("fold index out of range")
        if sizes.max() - sizes.min() > 1:
            raise ValueError("fold sizes must differ by at most 1")
        assignments = assignments.copy()
        assignments.flags.writeable = False
        object.__setattr__(self, "assignments", assignments)

    def fold_sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def split_folds(n_samples: int, k: int, seed: int) -> FoldSplit:
    """Shuffled k-fold assignment with sizes balanced to within one sample.

    Shuffling uses numpy's PCG64 generator seeded with the given 64-bit seed,
    so the split is reproducible everywhere that algorithm is available.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if n_samples < k:
        raise ValueError(f"cannot split {n_samples} samples into {k} folds")
    rng = np.random.Generator(np.random.PCG64(int(seed) & MASK64))
    perm = rng.permutation(n_samples)
    base, extra = divmod(n_samples, k)
    assignments = np.empty(n_samples, dtype=np.int64)
    pos = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        assignments[perm[pos : pos + size]] = fold
        pos += size
    return FoldSplit(k=k, assignments=assignments, seed=int(seed))


def _parse_float(text: str, path: str, line_no: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DatasetError(
            f"{path}:{line_no}: non-numeric value {text!r} in column {column!r}"
        ) from None


def _read_rows(path) -> list[tuple[int, list[str]]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if row:
                out.append((line_no, row))
    if not out:
        raise DatasetError(f"{path}: empty file")
    return out


def load_dataset(x_path, y_path) -> tuple[SpectralMatrix, TargetMatrix]:
    """Load paired X and Y CSV files, matching samples by sample_id.

    X header is ``sample_id,<wavenumber_1>,...``; Y header is
    ``sample_id,water,protein,lipids_yield``.  Y rows are reordered to X's
    sample order.  Every malformed input produces a diagnostic naming the
    file, line, and offending value.
    """
    x_path, y_path = str(x_path), str(y_path)
    x_lines = _read_rows(x_path)
    header_no, header = x_lines[0]
    if len(header) < 2 or header[0] != "sample_id":
        raise DatasetError(f"{x_path}:{header_no}: X header must be 'sample_id,<wavenumbers...>'")
    axis = WavenumberAxis(
        [_parse_float(c, x_path, header_no, f"wavenumber #{i}") for i, c in enumerate(header[1:], 1)]
    )

    x_ids: list[str] = []
    x_rows = []
    seen: set[str] = set()
    for line_no, row in x_lines[1:]:
        if len(row) != len(header):
            raise DatasetError(
                f"{x_path}:{line_no}: expected {len(header)} fields, got {len(row)}"
            )
        sid = row[0]
        if sid in seen:
            raise DatasetError(f"{x_path}:{line_no}: duplicate sample_id {sid!r}")
        seen.add(sid)
        x_ids.append(sid)
        x_rows.append([_parse_float(c, x_path, line_no, f"feature #{i}") for i, c in enumerate(row[1:], 1)])
    if not x_rows:
        raise DatasetError(f"{x_path}: empty dataset (no data rows)")

    y_lines = _read_rows(y_path)
    header_no, y_header = y_lines[0]
    expected = ["sample_id", *TARGET_NAMES]
    if y_header != expected:
        raise DatasetError(
            f"{y_path}:{header_no}: Y header must be {','.join(expected)!r}"
        )
    y_by_id: dict[str, list[float]] = {}
    y_line_by_id: dict[str, int] = {}
    for line_no, row in y_lines[1:]:
        if len(row) != 4:
            raise DatasetError(f"{y_path}:{line_no}: expected 4 fields, got {len(row)}")
        sid = row[0]
        if sid in y_by_id:
            raise DatasetError(f"{y_path}:{line_no}: duplicate sample_id {sid!r}")
        y_by_id[sid] = [_parse_float(c, y_path, line_no, name) for c, name in zip(row[1:], TARGET_NAMES)]
        y_line_by_id[sid] = line_no

    missing = [sid for sid in x_ids if sid not in y_by_id]
    if missing:
        raise DatasetError(f"{y_path}: missing sample_id {missing[0]!r} present in {x_path}")
    extra = [sid for sid in y_by_id if sid not in seen]
    if extra:
        raise DatasetError(
            f"{y_path}:{y_line_by_id[extra[0]]}: sample_id {extra[0]!r} not present in {x_path}"
        )

    x = SpectralMatrix(axis, np.array(x_rows, dtype=np.float64), tuple(x_ids))
    y = TargetMatrix(np.array([y_by_id[sid] for sid in x_ids], dtype=np.float64))
    return x, y


def write_dataset(x_path, y_path, x: SpectralMatrix, y: TargetMatrix) -> None:
    """Write X/Y CSV files in the format load_dataset reads.

    Floats are written with shortest round-trip repr, so a load/write cycle
    preserves values exactly.
    """
    if x.n_samples != y.n_samples:
        raise ValueError("X and Y row counts differ")
    Path(x_path).parent.mkdir(parents=True, exist_ok=True)
    Path(y_path).parent.mkdir(parents=True, exist_ok=True)
    with open(x_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", *(repr(float(v)) for v in x.axis.values)])
        for sid, row in zip(x.sample_ids, x.rows):
            writer.writerow([sid, *(repr(float(v)) for v in row)])
    with open(y_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", *y.target_names])
        for sid, row in zip(x.sample_ids, y.rows):
            writer.writerow([sid, *(repr(float(v)) for v in row)])
