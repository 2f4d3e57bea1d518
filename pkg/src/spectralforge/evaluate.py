"""Cross-validation harness, pipeline grid search, and ablation drivers.

A "procedure" is an ordered tuple of preparation ops: per-row preprocessing
steps, the GlobalScale step (fitted on the current training matrix), and the
augmentation marker "DA" (applied to training data only).  Design-matrix
pipelines map onto procedures with DA appended, while the ordering ablation
builds procedures with DA anywhere, including before preprocessing.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from threadpoolctl import threadpool_limits

from .augment import AugmentConfig, augment
from .core import (
    SpectralMatrix,
    TargetMatrix,
    WavenumberAxis,
    derive_seed,
    split_folds,
)
from .nn import ModelSpec, build_fishcnn, count_parameters
from .preprocess import (
    FittedScaler,
    GlobalScale,
    Pipeline,
    PreprocStep,
    apply_scaler,
    apply_step_rows,
    fit_global_scaler,
    parse_pipeline,
    _step_token,
)
from .stats import mann_whitney_u, overall_score, r2, rmse
from .train import TargetScaler, TrainConfig, inner_split, predict, train_model

DA = "DA"
ProcedureOp = Union[PreprocStep, str]
Procedure = tuple[ProcedureOp, ...]

ORDER_ARMS = ("SNV+DA+GS", "SNV+GS", "GS", "DA+SNV", "DA+GS", "DA")
REFERENCE_ARM = "SNV+DA+GS"


def parse_procedure(text: str) -> Procedure:
    """'SNV+DA+GS' (or any '+'-joined step tokens) -> procedure tuple."""
    ops: list[ProcedureOp] = []
    for token in text.split("+"):
        token = token.strip()
        if token == DA:
            ops.append(DA)
        elif token:
            ops.extend(parse_pipeline(token).steps)
    return tuple(ops)


def serialize_procedure(proc: Procedure) -> str:
    if not proc:
        return "raw"
    return "+".join(op if op == DA else _step_token(op) for op in proc)


def as_procedure(prep, augment_data: bool = True) -> Procedure:
    """Normalize a Pipeline / label / op sequence into a procedure tuple."""
    if isinstance(prep, Pipeline):
        proc: Procedure = tuple(prep.steps)
        if augment_data:
            proc = proc + (DA,)
        return proc
    if isinstance(prep, str):
        return parse_procedure(prep)
    return tuple(prep)


def prepare_fold(
    proc: Procedure,
    train_x: SpectralMatrix,
    train_y: TargetMatrix,
    others: Sequence[SpectralMatrix],
    augment_cfg: AugmentConfig,
) -> tuple[SpectralMatrix, TargetMatrix, list[SpectralMatrix], Optional[FittedScaler]]:
    """Execute a procedure in its literal order.

    Per-row steps transform training and held-out matrices alike; GlobalScale
    is fitted on the training matrix as it stands at that point (augmented or
    not) and applied everywhere; DA expands the training pair only.  Held-out
    data never influences any fitted parameter.
    """
    others = list(others)
    scaler = None
    for op in proc:
        if op == DA:
            train_x, train_y = augment(train_x, train_y, augment_cfg)
        elif isinstance(op, GlobalScale):
            scaler = fit_global_scaler(train_x.rows)
            train_x = train_x.with_rows(apply_scaler(scaler, train_x.rows))
            others = [m.with_rows(apply_scaler(scaler, m.rows)) for m in others]
        else:
            train_x = train_x.with_rows(apply_step_rows(op, train_x.rows))
            others = [m.with_rows(apply_step_rows(op, m.rows)) for m in others]
    return train_x, train_y, others, scaler


@dataclass(frozen=True)
class FoldScore:
    run: int
    fold: int
    r2_per_target: tuple[float, float, float]
    rmse_per_target: tuple[float, float, float]

    @property
    def overall_r2(self) -> float:
        return overall_score(self.r2_per_target)

    @property
    def overall_rmse(self) -> float:
        return overall_score(self.rmse_per_target)

    def to_json_dict(self) -> dict:
        return {
            "run": self.run,
            "fold": self.fold,
            "r2": list(self.r2_per_target),
            "rmse": list(self.rmse_per_target),
            "overall_r2": self.overall_r2,
            "overall_rmse": self.overall_rmse,
        }


def _mean_std(values: np.ndarray) -> tuple[float, float]:
    # sample std; a single value reports std 0
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return float(values.mean()), std


@dataclass(frozen=True)
class CVResult:
    scores: tuple[FoldScore, ...]
    target_names: tuple[str, ...]
    fingerprint: dict

    def overall_r2_values(self) -> np.ndarray:
        return np.array([s.overall_r2 for s in self.scores])

    def overall_rmse_values(self) -> np.ndarray:
        return np.array([s.overall_rmse for s in self.scores])

    def target_r2_values(self, i: int) -> np.ndarray:
        return np.array([s.r2_per_target[i] for s in self.scores])

    def target_rmse_values(self, i: int) -> np.ndarray:
        return np.array([s.rmse_per_target[i] for s in self.scores])

    @property
    def mean_overall_r2(self) -> float:
        return _mean_std(self.overall_r2_values())[0]

    def summary(self) -> dict:
        """mean +/- sample std of overall and per-target scores."""
        out = {}
        for metric, overall, per in (
            ("r2", self.overall_r2_values(), self.target_r2_values),
            ("rmse", self.overall_rmse_values(), self.target_rmse_values),
        ):
            mean, std = _mean_std(overall)
            out[f"overall_{metric}"] = {"mean": mean, "std": std}
            for i, name in enumerate(self.target_names):
                mean, std = _mean_std(per(i))
                out[f"{name}_{metric}"] = {"mean": mean, "std": std}
        return out

    def to_json_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "summary": self.summary(),
            "scores": [s.to_json_dict() for s in self.scores],
        }

    def to_markdown(self) -> str:
        s = self.summary()
        lines = [
            "| Quantity | R2CV (mean±std) | RMSECV (mean±std) |",
            "| --- | --- | --- |",
        ]
        for key, label in [("overall", "Overall")] + [
            (name, name.replace("_", " ")) for name in self.target_names
        ]:
            r = s[f"{key}_r2"]
            e = s[f"{key}_rmse"]
            lines.append(
                f"| {label} | {r['mean']:.3f}±{r['std']:.3f} | {e['mean']:.3f}±{e['std']:.3f} |"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class _FoldJob:
    run: int
    fold: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    proc: Procedure
    augment_cfg: AugmentConfig
    train_cfg: TrainConfig
    model: ModelSpec
    x_rows: np.ndarray
    y_rows: np.ndarray
    axis_values: np.ndarray
    sample_ids: tuple[str, ...]
    target_names: tuple[str, ...]
    base_seed: int


def _run_fold(job: _FoldJob) -> FoldScore:
    # single-threaded BLAS inside each work item so results are identical
    # whether folds run serially or in a process pool
    with threadpool_limits(limits=1):
        axis = WavenumberAxis(job.axis_values)
        x = SpectralMatrix(axis, job.x_rows, job.sample_ids)
        y = TargetMatrix(job.y_rows, job.target_names)
        train_x, train_y = x.take(job.train_idx), y.take(job.train_idx)
        test_x, test_y = x.take(job.test_idx), y.take(job.test_idx)

        (tr_x, tr_y), (val_x, val_y) = inner_split(
            train_x,
            train_y,
            job.train_cfg.val_fraction,
            derive_seed(job.base_seed, "inner", job.run, job.fold),
        )
        aug_cfg = dataclasses.replace(
            job.augment_cfg, seed=derive_seed(job.base_seed, "augment", job.run, job.fold)
        )
        tr_x, tr_y, (val_x, test_x), _ = prepare_fold(
            job.proc, tr_x, tr_y, [val_x, test_x], aug_cfg
        )

        scaler = TargetScaler.fit(tr_y.rows)
        cfg = dataclasses.replace(
            job.train_cfg, seed=derive_seed(job.base_seed, "train", job.run, job.fold)
        )
        state, _ = train_model(
            job.model,
            tr_x.rows,
            scaler.transform(tr_y.rows),
            val_x.rows,
            scaler.transform(val_y.rows),
            cfg,
        )
        pred = predict(state, job.model, test_x, scaler)
        r2s = tuple(r2(test_y.rows[:, i], pred.rows[:, i]) for i in range(3))
        rmses = tuple(rmse(test_y.rows[:, i], pred.rows[:, i]) for i in range(3))
        return FoldScore(job.run, job.fold, r2s, rmses)


def run_cv(
    x: SpectralMatrix,
    y: TargetMatrix,
    prep,
    augment_cfg: AugmentConfig,
    train_cfg: TrainConfig,
    k: int = 6,
    runs: int = 10,
    base_seed: int = 0,
    model: Optional[ModelSpec] = None,
    kernel_size: int = 64,
    jobs: int = 1,
) -> CVResult:
    """runs x k cross-validated training of a model under one procedure.

    Each run draws its own fold split; each (run, fold) item splits off an
    inner validation set from the original training samples, executes the
    procedure (only training data is augmented; scalers fit on training data
    only), z-scores targets, trains, and scores the untouched test fold.
    Everything derives from base_seed, so results are reproducible and
    independent of the jobs count.
    """
    if x.n_samples != y.n_samples:
        raise ValueError("X and Y row counts differ")
    proc = as_procedure(prep)
    if model is None:
        model = build_fishcnn(x.n_features, kernel=kernel_size, dropout_rate=train_cfg.dropout)

    jobs_list = []
    for run in range(runs):
        split = split_folds(x.n_samples, k, derive_seed(base_seed, "folds", run))
        for fold in range(k):
            jobs_list.append(
                _FoldJob(
                    run, fold, split.train_indices(fold), split.test_indices(fold),
                    proc, augment_cfg, train_cfg, model,
                    x.rows, y.rows, x.axis.values, x.sample_ids, y.target_names,
                    base_seed,
                )
            )

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(_run_fold, jobs_list))
    else:
        scores = []
        for job in jobs_list:
            try:
                scores.append(_run_fold(job))
            except Exception as exc:
                raise RuntimeError(f"fold failed (run {job.run}, fold {job.fold}): {exc}") from exc

    fingerprint = {
        "procedure": serialize_procedure(proc),
        "augment": dataclasses.asdict(augment_cfg),
        "train": dataclasses.asdict(train_cfg),
        "model": {"input_len": model.input_len, "parameters": count_parameters(model)},
        "k": k,
        "runs": runs,
        "base_seed": base_seed,
    }
    return CVResult(tuple(scores), y.target_names, fingerprint)


def run_cv_per_target(
    x: SpectralMatrix,
    y: TargetMatrix,
    per_target: dict,
    augment_cfg: AugmentConfig,
    train_cfg: TrainConfig,
    default_prep="SNV+DA",
    **kwargs,
) -> CVResult:
    """run_cv with a different preparation procedure per target.

    One model is trained per distinct procedure; each target's scores come
    from the model trained under that target's procedure.  The fingerprint
    records the per-target assignment (the overall column then averages
    scores obtained under different procedures).
    """
    unknown = set(per_target) - set(y.target_names)
    if unknown:
        raise ValueError(f"unknown target names: {sorted(unknown)}")
    procs = {name: as_procedure(per_target.get(name, default_prep)) for name in y.target_names}
    distinct: dict[str, Procedure] = {}
    for name, proc in procs.items():
        distinct.setdefault(serialize_procedure(proc), proc)
    results = {
        key: run_cv(x, y, proc, augment_cfg, train_cfg, **kwargs)
        for key, proc in distinct.items()
    }

    base = next(iter(results.values()))
    merged = []
    for entry in range(len(base.scores)):
        r2s, rmses = [], []
        for i, name in enumerate(y.target_names):
            source = results[serialize_procedure(procs[name])].scores[entry]
            r2s.append(source.r2_per_target[i])
            rmses.append(source.rmse_per_target[i])
        merged.append(
            FoldScore(base.scores[entry].run, base.scores[entry].fold, tuple(r2s), tuple(rmses))
        )
    fingerprint = dict(base.fingerprint)
    fingerprint["procedure"] = {
        name: serialize_procedure(procs[name]) for name in y.target_names
    }
    return CVResult(tuple(merged), y.target_names, fingerprint)


def grid_search_pipelines(
    x: SpectralMatrix,
    y: TargetMatrix,
    design_matrix: Sequence[Pipeline],
    augment_cfg: AugmentConfig,
    train_cfg: TrainConfig,
    budget: Optional[int] = None,
    **kwargs,
) -> list[tuple[int, CVResult]]:
    """Evaluate pipelines via run_cv and rank by mean overall R2 (descending).

    Pipelines are taken in id order up to `budget`; ties break on lower std,
    then lower id, so the ranking is invariant to input row order.
    """
    pipelines = sorted(design_matrix, key=lambda p: p.id)
    if budget is not None:
        if budget < 1:
            raise ValueError("budget must be >= 1")
        pipelines = pipelines[:budget]
    results = [(p.id, run_cv(x, y, p, augment_cfg, train_cfg, **kwargs)) for p in pipelines]

    def sort_key(item):
        pid, res = item
        mean, std = _mean_std(res.overall_r2_values())
        return (-mean, std, pid)

    return sorted(results, key=sort_key)


@dataclass(frozen=True)
class AblationRow:
    label: str
    result: CVResult
    p_overall: Optional[float]
    p_per_target: Optional[tuple[float, float, float]]


@dataclass(frozen=True)
class AblationTable:
    kind: str
    reference: str
    rows: tuple[AblationRow, ...]

    def row(self, label: str) -> AblationRow:
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "reference": self.reference,
            "rows": [
                {
                    "label": row.label,
                    "p_overall": row.p_overall,
                    "p_per_target": list(row.p_per_target) if row.p_per_target else None,
                    "result": row.result.to_json_dict(),
                }
                for row in self.rows
            ],
        }

    def to_markdown(self, alpha: float = 0.05) -> str:
        """Paper-style table: mean±std per arm, p-value vs the reference arm.

        Arms that beat the reference mean at p < alpha are bold.
        """
        ref_mean = self.row(self.reference).result.mean_overall_r2
        lines = ["| Procedure | R2CV | p-value |", "| --- | --- | --- |"]
        for row in self.rows:
            mean, std = _mean_std(row.result.overall_r2_values())
            cell = f"{mean:.3f}±{std:.3f}"
            if row.p_overall is None:
                p_cell = "-"
            else:
                p_cell = f"{row.p_overall:.2g}"
                if row.p_overall < alpha and mean > ref_mean:
                    cell = f"**{cell}**"
            lines.append(f"| {row.label} | {cell} | {p_cell} |")
        return "\n".join(lines) + "\n"

    def to_markdown_per_target(self, alpha: float = 0.05) -> str:
        """Kernel-study layout: overall plus one row block per target."""
        labels = [r.label for r in self.rows]
        header = "| Quantity | " + " | ".join(labels) + " |"
        sep = "| --- |" + " --- |" * len(labels)
        names = self.rows[0].result.target_names
        lines = [header, sep]

        def fmt_block(title, values_of, p_of):
            cells, pcells = [], []
            for row in self.rows:
                mean, std = _mean_std(values_of(row))
                cells.append(f"{mean:.3f}±{std:.3f}")
                p = p_of(row)
                pcells.append("-" if p is None else f"{p:.2g}")
            lines.append(f"| {title} R2CV | " + " | ".join(cells) + " |")
            lines.append(f"| {title} p-value | " + " | ".join(pcells) + " |")

        fmt_block("Overall", lambda r: r.result.overall_r2_values(), lambda r: r.p_overall)
        for i, name in enumerate(names):
            fmt_block(
                name,
                lambda r, i=i: r.result.target_r2_values(i),
                lambda r, i=i: r.p_per_target[i] if r.p_per_target else None,
            )
        return "\n".join(lines) + "\n"


def _compare_rows(
    kind: str, reference: str, labeled: list[tuple[str, CVResult]]
) -> AblationTable:
    ref_result = dict(labeled)[reference]
    rows = []
    for label, result in labeled:
        if label == reference:
            rows.append(AblationRow(label, result, None, None))
            continue
        p_overall = mann_whitney_u(
            result.overall_r2_values(), ref_result.overall_r2_values()
        ).p_value
        p_targets = tuple(
            mann_whitney_u(result.target_r2_values(i), ref_result.target_r2_values(i)).p_value
            for i in range(3)
        )
        rows.append(AblationRow(label, result, p_overall, p_targets))
    return AblationTable(kind, reference, tuple(rows))


def ablate_order(
    x: SpectralMatrix,
    y: TargetMatrix,
    augment_cfg: AugmentConfig,
    train_cfg: TrainConfig,
    arms: Sequence[str] = ORDER_ARMS,
    reference: str = REFERENCE_ARM,
    **kwargs,
) -> AblationTable:
    """Component-order study: each arm label is executed literally, so
    'DA+SNV' augments raw spectra before standardization."""
    if reference not in arms:
        raise ValueError(f"reference arm {reference!r} must be among arms")
    labeled = [
        (arm, run_cv(x, y, parse_procedure(arm), augment_cfg, train_cfg, **kwargs))
        for arm in arms
    ]
    return _compare_rows("order", reference, labeled)


def ablate_factor(
    x: SpectralMatrix,
    y: TargetMatrix,
    augment_cfg: AugmentConfig,
    train_cfg: TrainConfig,
    factors: Sequence[int] = (10, 30, 50, 60),
    procedure: str = REFERENCE_ARM,
    reference_factor: int = 50,
    **kwargs,
) -> AblationTable:
    """Augmentation-factor study under a fixed procedure."""
    if reference_factor not in factors:
        raise ValueError(f"reference factor {reference_factor} must be among factors")
    proc = parse_procedure(procedure)
    labeled = []
    for factor in factors:
        cfg = dataclasses.replace(augment_cfg, factor=factor)
        labeled.append((str(factor), run_cv(x, y, proc, cfg, train_cfg, **kwargs)))
    return _compare_rows("factor", str(reference_factor), labeled)


def ablate_kernel(
    x: SpectralMatrix,
    y: TargetMatrix,
    augment_cfg: AugmentConfig,
    train_cfg: TrainConfig,
    kernels: Sequence[int] = (64, 16, 8, 4),
    procedure: str = REFERENCE_ARM,
    reference_kernel: int = 64,
    model_for_kernel: Optional[Callable[[int], ModelSpec]] = None,
    **kwargs,
) -> AblationTable:
    """Convolution kernel-size study; per-target rows mirror the overall row."""
    if reference_kernel not in kernels:
        raise ValueError(f"reference kernel {reference_kernel} must be among kernels")
    proc = parse_procedure(procedure)
    labeled = []
    for kernel in kernels:
        if model_for_kernel is not None:
            spec = model_for_kernel(kernel)
        else:
            spec = build_fishcnn(x.n_features, kernel=kernel, dropout_rate=train_cfg.dropout)
        labeled.append(
            (str(kernel), run_cv(x, y, proc, augment_cfg, train_cfg, model=spec, **kwargs))
        )
    return _compare_rows("kernel", str(reference_kernel), labeled)
