"""Training-set expansion with random offset, slope, and multiplicative artefacts.

Variants are drawn per (source row, variant index) from independent RNG
streams, so generation order (serial or parallel) never changes the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SpectralMatrix, TargetMatrix, derive_rng


@dataclass(frozen=True)
class AugmentConfig:
    """factor is the total size multiplier: output rows = factor * input rows."""

    factor: int = 50
    offset_scale: float = 0.10
    mult_scale: float = 0.05
    slope_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.factor < 1:
            raise ValueError(f"factor must be >= 1, got {self.factor}")
        if min(self.offset_scale, self.mult_scale, self.slope_scale) < 0:
            raise ValueError("perturbation scales must be >= 0")


def slope_axis(n_features: int) -> np.ndarray:
    """Index axis normalized to [-1, 1], the carrier for slope artefacts."""
    return np.linspace(-1.0, 1.0, n_features)


def draw_artefacts(
    rng: np.random.Generator,
    sigma: float,
    offset_scale: float,
    mult_scale: float,
    slope_scale: float,
) -> tuple[float, float, float]:
    """One (offset, multiplier, slope) draw; offset/slope scale with sigma."""
    z = rng.standard_normal(3)
    offset = z[0] * offset_scale * sigma
    mult = 1.0 + z[1] * mult_scale
    slope = z[2] * slope_scale * sigma
    return offset, mult, slope


def perturb_row(
    row: np.ndarray, t: np.ndarray, offset: float, mult: float, slope: float
) -> np.ndarray:
    return mult * row + offset + slope * t


def augment(
    train_x: SpectralMatrix, train_y: TargetMatrix, cfg: AugmentConfig
) -> tuple[SpectralMatrix, TargetMatrix]:
    """Expand a paired training set to cfg.factor times its size.

    Output rows are grouped per source: each original row is followed by its
    factor-1 variants ``m*x + o + s*t`` where t is the index axis normalized
    to [-1, 1].  Offset and slope draws are scaled by the global standard
    deviation of the input intensities; targets are copied bit-for-bit from
    the source row.
    """
    if train_x.n_samples != train_y.n_samples:
        raise ValueError("X and Y row counts differ")
    n, f = train_x.rows.shape
    factor = cfg.factor
    if factor == 1:
        return train_x, train_y

    sigma = float(train_x.rows.std())
    t = slope_axis(f)
    out = np.empty((n * factor, f), dtype=np.float64)
    ids = []
    y_out = np.empty((n * factor, train_y.rows.shape[1]), dtype=np.float64)
    for i in range(n):
        base = i * factor
        out[base] = train_x.rows[i]
        ids.append(train_x.sample_ids[i])
        for j in range(1, factor):
            rng = derive_rng(cfg.seed, "augment", i, j)
            offset, mult, slope = draw_artefacts(
                rng, sigma, cfg.offset_scale, cfg.mult_scale, cfg.slope_scale
            )
            out[base + j] = perturb_row(train_x.rows[i], t, offset, mult, slope)
            ids.append(f"{train_x.sample_ids[i]}#aug{j}")
        y_out[base : base + factor] = train_y.rows[i]

    return (
        SpectralMatrix(train_x.axis, out, tuple(ids)),
        TargetMatrix(y_out, train_y.target_names),
    )
