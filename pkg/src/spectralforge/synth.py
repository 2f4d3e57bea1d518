"""Synthetic fish-like spectra with known ground truth.

Spectra are linear mixtures of three nonnegative Gaussian-peak component
profiles (water, protein, lipids), weighted by the target percentages, plus
optional per-row artefacts and channel noise.  Everything is a pure function
of the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .augment import draw_artefacts, perturb_row, slope_axis
from .core import SpectralMatrix, TargetMatrix, WavenumberAxis, derive_rng


@dataclass(frozen=True, eq=False)
class ComponentBasis:
    """Pure-component spectra (3 x n_features) plus a background profile.

    The background stands in for everything else in the sample (ash,
    carbohydrates, ...).  Its mixture weight is the closure remainder
    (fixed total minus the three target percentages), which is what makes
    absolute concentrations recoverable from spectral shape after
    scale-removing preprocessing such as SNV.
    """

    spectra: np.ndarray
    background: np.ndarray
    peaks: tuple  # per profile: tuple of (center, width, amplitude)

    def __post_init__(self):
        spectra = np.asarray(self.spectra, dtype=np.float64)
        background = np.asarray(self.background, dtype=np.float64)
        if spectra.ndim != 2 or spectra.shape[0] != 3:
            raise ValueError("basis must have 3 component spectra")
        if np.any(spectra < 0) or np.any(background < 0):
            raise ValueError("basis spectra must be nonnegative")
        stacked = np.vstack([spectra, background])
        if np.linalg.matrix_rank(stacked) != 4:
            raise ValueError("basis spectra must be linearly independent")
        object.__setattr__(self, "spectra", spectra)
        object.__setattr__(self, "background", background)


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 39
    n_features: int = 427
    axis_start: float = 1891.58
    axis_end: float = 580.109
    water_range: tuple[float, float] = (70.0, 80.0)
    protein_range: tuple[float, float] = (10.0, 20.0)
    lipids_range: tuple[float, float] = (2.0, 8.0)
    noise_std: float = 0.01        # relative to the mean clean signal level
    offset_scale: float = 0.1
    slope_scale: float = 0.1
    mult_scale: float = 0.1
    closure_total: float = 120.0   # constituents sum; remainder weights background
    seed: int = 0

    def __post_init__(self):
        if self.n_features < 3:
            raise ValueError("n_features must be >= 3")
        for lo, hi in (self.water_range, self.protein_range, self.lipids_range):
            if not hi > lo:
                raise ValueError("target ranges must be nonempty")
        max_sum = self.water_range[1] + self.protein_range[1] + self.lipids_range[1]
        if self.closure_total <= max_sum:
            raise ValueError(
                f"closure_total {self.closure_total} must exceed the maximum "
                f"target sum {max_sum} so the background weight stays positive"
            )

    def axis(self) -> WavenumberAxis:
        return WavenumberAxis(np.linspace(self.axis_start, self.axis_end, self.n_features))


FT_RAMAN_PRESET = dict(n_features=1971, axis_start=4001.81, axis_end=202.533)
INGAAS_PRESET = dict(n_features=427, axis_start=1891.58, axis_end=580.109)


def component_basis(axis: WavenumberAxis, seed: int) -> ComponentBasis:
    """Four peak profiles (three components + background), 4-8 seeded
    Gaussian peaks each, normalized to max height 1."""
    rng = derive_rng(seed, "basis")
    grid = axis.values
    lo, hi = min(grid[0], grid[-1]), max(grid[0], grid[-1])
    span = hi - lo
    profiles = np.zeros((4, len(axis)))
    all_peaks = []
    for comp in range(4):
        n_peaks = int(rng.integers(4, 9))
        peaks = []
        profile = np.zeros(len(axis))
        for _ in range(n_peaks):
            center = rng.uniform(lo + 0.05 * span, hi - 0.05 * span)
            width = rng.uniform(0.01, 0.05) * span
            amplitude = rng.uniform(0.3, 1.0)
            profile += amplitude * np.exp(-0.5 * ((grid - center) / width) ** 2)
            peaks.append((float(center), float(width), float(amplitude)))
        profiles[comp] = profile / profile.max()
        all_peaks.append(tuple(peaks))
    return ComponentBasis(profiles[:3], profiles[3], tuple(all_peaks))


def generate(cfg: SynthConfig) -> tuple[SpectralMatrix, TargetMatrix]:
    """Draw targets uniformly in their ranges and mix the component basis.

    X_i = sum_j Y_ij * basis_j + (closure_total - sum_j Y_ij) * background,
    then per-row artefacts (offset, slope, multiplier scaled like the
    augmentation draws) and i.i.d. channel noise with sigma = noise_std *
    mean clean signal.  The closure term keeps total constituent mass fixed,
    like a real sample, so shape determines absolute concentrations.
    """
    axis = cfg.axis()
    basis = component_basis(axis, cfg.seed)

    rng_y = derive_rng(cfg.seed, "targets")
    ranges = np.array([cfg.water_range, cfg.protein_range, cfg.lipids_range])
    y = rng_y.uniform(ranges[:, 0], ranges[:, 1], size=(cfg.n_samples, 3))

    remainder = cfg.closure_total - y.sum(axis=1)
    clean = y @ basis.spectra + remainder[:, None] * basis.background
    x = clean.copy()

    if max(cfg.offset_scale, cfg.slope_scale, cfg.mult_scale) > 0:
        sigma = float(clean.std())
        t = slope_axis(cfg.n_features)
        for i in range(cfg.n_samples):
            rng = derive_rng(cfg.seed, "artefacts", i)
            offset, mult, slope = draw_artefacts(
                rng, sigma, cfg.offset_scale, cfg.mult_scale, cfg.slope_scale
            )
            x[i] = perturb_row(x[i], t, offset, mult, slope)

    if cfg.noise_std > 0:
        rng_n = derive_rng(cfg.seed, "noise")
        x += rng_n.standard_normal(x.shape) * (cfg.noise_std * float(clean.mean()))

    ids = tuple(f"S{i + 1:03d}" for i in range(cfg.n_samples))
    return SpectralMatrix(axis, x, ids), TargetMatrix(y)


def inject_artefacts(
    x: SpectralMatrix,
    offset_scale: float,
    slope_scale: float,
    mult_scale: float,
    seed: int,
) -> SpectralMatrix:
    """Per-row x' = m*x + o + s*t with draws scaled by the global row std."""
    if min(offset_scale, slope_scale, mult_scale) < 0:
        raise ValueError("artefact scales must be >= 0")
    sigma = float(x.rows.std())
    t = slope_axis(x.n_features)
    out = np.empty_like(x.rows)
    for i in range(x.n_samples):
        rng = derive_rng(seed, "artefacts", i)
        offset, mult, slope = draw_artefacts(rng, sigma, offset_scale, mult_scale, slope_scale)
        out[i] = perturb_row(x.rows[i], t, offset, mult, slope)
    return x.with_rows(out)


def truth_document(cfg: SynthConfig) -> dict:
    """Audit record: the config plus the peak parameters of every profile
    (water, protein, lipids, background)."""
    basis = component_basis(cfg.axis(), cfg.seed)
    return {
        "config": asdict(cfg),
        "basis_peaks": [
            [{"center": c, "width": w, "amplitude": a} for (c, w, a) in comp]
            for comp in basis.peaks
        ],
    }
