"""Spectral preprocessing: baseline, scatter, derivative, and scaling steps.

Four step families compose into pipelines in a fixed order
(baseline -> scatter -> derivative -> scaling).  ``build_design_matrix``
enumerates the 64 standard combinations used for pipeline selection.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.signal import savgol_filter

from .core import SpectralMatrix

# Window grids for the derivative rows of the design matrix.
FIRST_DERIV_WINDOWS = (5, 9, 13, 17, 21, 25)
SECOND_DERIV_WINDOWS = (13, 15, 17, 19, 21, 23, 25, 31)

# Window-polynomial fit orders are configurable per step; these are the
# smallest orders that preserve derivative fidelity.
DEFAULT_POLYORDER = {1: 2, 2: 3}

_ZERO_VAR_TOL = 1e-12


@dataclass(frozen=True)
class LinearBaseline:
    """Subtract the straight line through a spectrum's first and last points."""


@dataclass(frozen=True)
class SNV:
    """Per-spectrum standardization (mean 0, sample std 1)."""


@dataclass(frozen=True)
class Derivative:
    """Savitzky-Golay derivative over a centered window, unit channel spacing.

    polyorder defaults to 2 for first and 3 for second derivatives.
    """

    order: int
    window: int
    polyorder: Optional[int] = None

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"derivative order must be 1 or 2, got {self.order}")
        if self.polyorder is None:
            object.__setattr__(self, "polyorder", DEFAULT_POLYORDER[self.order])
        if self.window % 2 == 0 or self.window < 3:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if self.polyorder < self.order:
            raise ValueError(
                f"polyorder {self.polyorder} must be >= derivative order {self.order}"
            )
        if self.window < self.polyorder + 1:
            raise ValueError(
                f"window {self.window} must be >= polyorder+1 ({self.polyorder + 1})"
            )


@dataclass(frozen=True)
class GlobalScale:
    """Min-max scale with one global (min, max) fitted on training data."""


PreprocStep = Union[LinearBaseline, SNV, Derivative, GlobalScale]

_FAMILY_ORDER = (LinearBaseline, SNV, Derivative, GlobalScale)


@dataclass(frozen=True)
class Pipeline:
    """Ordered preprocessing steps, at most one per family."""

    id: int
    steps: tuple[PreprocStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        families = [type(s) for s in self.steps]
        if len(set(families)) != len(families):
            raise ValueError("at most one step per family")
        order = [_FAMILY_ORDER.index(f) for f in families]
        if order != sorted(order):
            raise ValueError("steps must follow baseline -> scatter -> derivative -> scaling order")

    @property
    def has_scaling(self) -> bool:
        return any(isinstance(s, GlobalScale) for s in self.steps)

    def serialize(self) -> str:
        if not self.steps:
            return "raw"
        return "|".join(_step_token(s) for s in self.steps)


@dataclass(frozen=True)
class FittedScaler:
    """Global min/max learned from a training partition."""

    global_min: float
    global_max: float

    def __post_init__(self):
        if not self.global_max > self.global_min:
            raise ValueError("global_max must exceed global_min")


def _step_token(step: PreprocStep) -> str:
    if isinstance(step, LinearBaseline):
        return "LB"
    if isinstance(step, SNV):
        return "SNV"
    if isinstance(step, Derivative):
        return f"D{step.order}w{step.window}p{step.polyorder}"
    if isinstance(step, GlobalScale):
        return "GS"
    raise TypeError(f"unknown step {step!r}")


_DERIV_RE = re.compile(r"^D([12])w(\d+)p(\d+)$")


def parse_pipeline(text: str, pipeline_id: int = 0) -> Pipeline:
    """Inverse of Pipeline.serialize: 'LB|SNV|D1w5p2|GS' -> Pipeline."""
    text = text.strip()
    if text in ("raw", ""):
        return Pipeline(pipeline_id, ())
    steps: list[PreprocStep] = []
    for token in text.split("|"):
        token = token.strip()
        if token == "LB":
            steps.append(LinearBaseline())
        elif token == "SNV":
            steps.append(SNV())
        elif token == "GS":
            steps.append(GlobalScale())
        else:
            m = _DERIV_RE.match(token)
            if not m:
                raise ValueError(f"unknown pipeline token {token!r}")
            steps.append(Derivative(int(m.group(1)), int(m.group(2)), int(m.group(3))))
    return Pipeline(pipeline_id, tuple(steps))


def linear_baseline(rows: np.ndarray) -> np.ndarray:
    """Subtract the endpoint line from each spectrum.

    The line is the convex interpolation between the first and last channel,
    so both endpoints map to exactly zero and the operation is idempotent.
    """
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[-1]
    if n < 2:
        raise ValueError("linear baseline needs at least 2 points")
    t = np.arange(n, dtype=np.float64) / (n - 1)
    first = rows[..., :1]
    last = rows[..., -1:]
    return rows - (first * (1.0 - t) + last * t)


def snv(rows: np.ndarray) -> np.ndarray:
    """Standard normal variate: per spectrum, subtract mean and divide by
    the sample (n-1) standard deviation."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[-1] < 2:
        raise ValueError("SNV needs at least 2 points")
    mean = rows.mean(axis=-1, keepdims=True)
    std = rows.std(axis=-1, ddof=1, keepdims=True)
    if np.any(std <= _ZERO_VAR_TOL):
        bad = np.argwhere(std <= _ZERO_VAR_TOL)
        where = f" (row {bad[0][0]})" if rows.ndim > 1 else ""
        raise ValueError(f"SNV on a zero-variance spectrum{where}")
    return (rows - mean) / std


def savgol_derivative(
    rows: np.ndarray, order: int, window: int, polyorder: Optional[int] = None
) -> np.ndarray:
    """Savitzky-Golay derivative with unit channel spacing.

    Each point gets the derivative of the least-squares polynomial fitted
    over its centered window.  Points too close to either boundary reuse the
    first/last full window's fitted polynomial, evaluated at the off-center
    offsets, so the output length equals the input length.
    """
    step = Derivative(order, window, polyorder)
    rows = np.asarray(rows, dtype=np.float64)
    if window > rows.shape[-1]:
        raise ValueError(f"window {window} exceeds feature count {rows.shape[-1]}")
    return savgol_filter(
        rows, window, step.polyorder, deriv=order, delta=1.0,
        axis=-1, mode="interp",
    )


def apply_step_rows(step: PreprocStep, rows: np.ndarray) -> np.ndarray:
    """Apply one per-row step (anything but GlobalScale) to an array of rows."""
    if isinstance(step, LinearBaseline):
        return linear_baseline(rows)
    if isinstance(step, SNV):
        return snv(rows)
    if isinstance(step, Derivative):
        return savgol_derivative(rows, step.order, step.window, step.polyorder)
    raise TypeError(f"{step!r} is not a per-row step")


def fit_global_scaler(train_rows: np.ndarray) -> FittedScaler:
    """Learn the single global (min, max) pair from training intensities."""
    train_rows = np.asarray(train_rows, dtype=np.float64)
    if train_rows.size == 0:
        raise ValueError("cannot fit scaler on empty training data")
    lo = float(train_rows.min())
    hi = float(train_rows.max())
    if not hi - lo > _ZERO_VAR_TOL:
        raise ValueError("constant training matrix: global scaling is undefined")
    return FittedScaler(lo, hi)


def apply_scaler(scaler: FittedScaler, rows: np.ndarray) -> np.ndarray:
    """One affine map for the whole matrix; out-of-sample values may leave [0,1]."""
    rows = np.asarray(rows, dtype=np.float64)
    return (rows - scaler.global_min) / (scaler.global_max - scaler.global_min)


def build_design_matrix() -> list[Pipeline]:
    """The 64 standard pipelines: one raw plus 63 preprocessing combinations.

    Rows 2-17 are the LB family, 18-32 the SNV-only family, 33-48 LB with
    global scaling, 49-63 SNV with global scaling, 64 global scaling alone.
    """
    lb, snv_, gs = LinearBaseline(), SNV(), GlobalScale()

    def deriv_block(prefix: tuple[PreprocStep, ...], suffix: tuple[PreprocStep, ...]):
        rows = []
        for w in FIRST_DERIV_WINDOWS:
            rows.append(prefix + (Derivative(1, w),) + suffix)
        for w in SECOND_DERIV_WINDOWS:
            rows.append(prefix + (Derivative(2, w),) + suffix)
        return rows

    step_lists: list[tuple[PreprocStep, ...]] = [()]
    step_lists += [(lb,), (lb, snv_)] + deriv_block((lb, snv_), ())
    step_lists += [(snv_,)] + deriv_block((snv_,), ())
    step_lists += [(lb, gs), (lb, snv_, gs)] + deriv_block((lb, snv_), (gs,))
    step_lists += [(snv_, gs)] + deriv_block((snv_,), (gs,))
    step_lists += [(gs,)]
    assert len(step_lists) == 64
    return [Pipeline(i, steps) for i, steps in enumerate(step_lists, start=1)]


def design_matrix_to_csv(pipelines: list[Pipeline]) -> str:
    """Render pipelines as a CSV with one column per step family."""
    lines = ["id,baseline,scatter,derivative,scaling"]
    for p in pipelines:
        cells = {LinearBaseline: "-", SNV: "-", Derivative: "-", GlobalScale: "-"}
        for step in p.steps:
            if isinstance(step, Derivative):
                ordinal = "1st" if step.order == 1 else "2nd"
                cells[Derivative] = f"{ordinal} w={step.window}"
            else:
                cells[type(step)] = _step_token(step)
        lines.append(
            f"{p.id},{cells[LinearBaseline]},{cells[SNV]},{cells[Derivative]},{cells[GlobalScale]}"
        )
    return "\n".join(lines) + "\n"


def apply_pipeline(
    pipeline: Pipeline,
    train: SpectralMatrix,
    eval: Optional[SpectralMatrix] = None,
) -> tuple[SpectralMatrix, Optional[SpectralMatrix], Optional[FittedScaler]]:
    """Run a pipeline's steps in stored order on a train/eval pair.

    Per-row steps are applied to both matrices independently; GlobalScale is
    fitted on the (already transformed) training matrix only and then applied
    to both, so evaluation data never leaks into the fit.
    """
    if eval is not None and eval.n_features != train.n_features:
        raise ValueError("train and eval matrices must share an axis")
    train_rows = train.rows
    eval_rows = eval.rows if eval is not None else None
    scaler = None
    for step in pipeline.steps:
        if isinstance(step, GlobalScale):
            scaler = fit_global_scaler(train_rows)
            train_rows = apply_scaler(scaler, train_rows)
            if eval_rows is not None:
                eval_rows = apply_scaler(scaler, eval_rows)
        else:
            train_rows = apply_step_rows(step, train_rows)
            if eval_rows is not None:
                eval_rows = apply_step_rows(step, eval_rows)
    train_out = train.with_rows(train_rows)
    eval_out = eval.with_rows(eval_rows) if eval is not None else None
    return train_out, eval_out, scaler
