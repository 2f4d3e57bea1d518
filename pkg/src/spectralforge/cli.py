"""Batch command-line interface.

Commands: generate, preprocess, augment, cv, ablate {order|factor|kernel},
report.  Settings come from a flat dotted-key config file
(``train.batch_size=38``) overridable by flags; every output directory gets a
manifest.json with the canonical config fingerprint and seeds, and reruns
with the same config produce byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

from . import evaluate, synth
from .augment import AugmentConfig, augment
from .core import load_dataset, write_dataset
from .preprocess import Pipeline, apply_pipeline, build_design_matrix, parse_pipeline
from .train import TrainConfig

SCHEMA_VERSION = 1

_SYNTH_PRESETS = {"ingaas": synth.INGAAS_PRESET, "ftraman": synth.FT_RAMAN_PRESET}


class ConfigError(ValueError):
    pass


def load_config_file(path) -> dict[str, str]:
    """Parse `key=value` lines; '#' starts a comment; keys are dotted."""
    out: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def fingerprint(doc) -> str:
    """Stable hash of a canonicalized (sorted-key) JSON document."""
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


class _Reader:
    """Typed access to the raw config with field-level error collection."""

    def __init__(self, raw: dict[str, str]):
        self.raw = dict(raw)
        self.errors: list[str] = []
        self.used: set[str] = set()

    def get(self, key: str, cast, default):
        self.used.add(key)
        if key not in self.raw:
            return default
        try:
            value = self.raw[key]
            if cast is bool:
                return value.lower() in ("1", "true", "yes")
            return cast(value)
        except ValueError:
            self.errors.append(f"{key}: cannot parse {self.raw[key]!r} as {cast.__name__}")
            return default

    def finalize(self):
        unknown = sorted(set(self.raw) - self.used)
        for key in unknown:
            self.errors.append(f"{key}: unknown config key")
        if self.errors:
            raise ConfigError("\n".join(self.errors))


@dataclasses.dataclass
class ExperimentConfig:
    raw: dict[str, str]
    x_path: str | None
    y_path: str | None
    synth_cfg: synth.SynthConfig
    prep: str
    per_target: dict[str, str]
    augment_cfg: AugmentConfig
    train_cfg: TrainConfig
    k: int
    runs: int
    kernel: int
    base_seed: int
    out_dir: Path
    jobs: int

    def dataset(self):
        if self.x_path:
            return load_dataset(self.x_path, self.y_path)
        return synth.generate(self.synth_cfg)

    def manifest_doc(self, command: str) -> dict:
        doc = {
            "schema": SCHEMA_VERSION,
            "command": command,
            "config": dict(sorted(self.raw.items())),
            "base_seed": self.base_seed,
        }
        doc["fingerprint"] = fingerprint({"command": command, "config": doc["config"]})
        return doc


def resolve_config(raw: dict[str, str], args) -> ExperimentConfig:
    # flag overrides land in the raw map so manifests record what actually ran
    if getattr(args, "seed", None) is not None:
        raw["base_seed"] = str(args.seed)
    if getattr(args, "out", None):
        raw["out"] = str(args.out)
    if getattr(args, "preset", None):
        raw["synth.preset"] = args.preset
    if getattr(args, "pipeline", None) is not None:
        raw["pipeline.id"] = str(args.pipeline)
    if getattr(args, "factor", None) is not None:
        raw["augment.factor"] = str(args.factor)
    if getattr(args, "runs", None) is not None:
        raw["cv.runs"] = str(args.runs)
    if getattr(args, "k", None) is not None:
        raw["cv.k"] = str(args.k)

    r = _Reader(raw)
    base_seed = r.get("base_seed", int, 0)

    x_path = r.get("dataset.x", str, None)
    y_path = r.get("dataset.y", str, None)
    if (x_path is None) != (y_path is None):
        r.errors.append("dataset.x and dataset.y must be given together")

    preset_name = r.get("synth.preset", str, "ingaas")
    preset = _SYNTH_PRESETS.get(preset_name)
    if preset is None:
        r.errors.append(f"synth.preset: unknown preset {preset_name!r}")
        preset = _SYNTH_PRESETS["ingaas"]
    synth_kwargs = dict(preset)
    synth_kwargs["n_samples"] = r.get("synth.n_samples", int, 39)
    synth_kwargs["n_features"] = r.get("synth.n_features", int, synth_kwargs["n_features"])
    synth_kwargs["noise_std"] = r.get("synth.noise_std", float, 0.01)
    synth_kwargs["offset_scale"] = r.get("synth.offset_scale", float, 0.1)
    synth_kwargs["slope_scale"] = r.get("synth.slope_scale", float, 0.1)
    synth_kwargs["mult_scale"] = r.get("synth.mult_scale", float, 0.1)
    synth_kwargs["seed"] = r.get("synth.seed", int, base_seed)
    try:
        synth_cfg = synth.SynthConfig(**synth_kwargs)
    except ValueError as exc:
        r.errors.append(f"synth: {exc}")
        synth_cfg = synth.SynthConfig()

    pipeline_id = r.get("pipeline.id", int, 18)
    steps = r.get("pipeline.steps", str, None)
    if steps is not None:
        prep = steps.replace("|", "+")
    else:
        if not 1 <= pipeline_id <= 64:
            r.errors.append(f"pipeline.id: must be in 1..64, got {pipeline_id}")
            pipeline_id = 18
        prep = "+".join(
            t for t in build_design_matrix()[pipeline_id - 1].serialize().split("|")
        )
        if prep == "raw":
            prep = ""
    per_target = {}
    for name in ("water", "protein", "lipids_yield"):
        override = r.get(f"pipeline.{name}", str, None)
        if override is not None:
            per_target[name] = override.replace("|", "+")

    try:
        augment_cfg = AugmentConfig(
            factor=r.get("augment.factor", int, 50),
            offset_scale=r.get("augment.offset_scale", float, 0.10),
            mult_scale=r.get("augment.mult_scale", float, 0.05),
            slope_scale=r.get("augment.slope_scale", float, 0.05),
            seed=r.get("augment.seed", int, base_seed),
        )
    except ValueError as exc:
        r.errors.append(f"augment: {exc}")
        augment_cfg = AugmentConfig()

    try:
        train_cfg = TrainConfig(
            batch_size=r.get("train.batch_size", int, 38),
            initial_lr=r.get("train.initial_lr", float, 0.0015),
            max_epochs=r.get("train.max_epochs", int, 1500),
            patience=r.get("train.patience", int, 55),
            weight_decay=r.get("train.weight_decay", float, 0.001),
            dropout=r.get("train.dropout", float, 0.10),
            huber_delta=r.get("train.huber_delta", float, 1.0),
            val_fraction=r.get("train.val_fraction", float, 0.15),
            seed=base_seed,
        )
    except ValueError as exc:
        r.errors.append(f"train: {exc}")
        train_cfg = TrainConfig()

    k = r.get("cv.k", int, 6)
    runs = r.get("cv.runs", int, 10)
    kernel = r.get("model.kernel", int, 64)
    out_dir = Path(r.get("out", str, "out"))

    env_jobs = os.environ.get("SPECTRAL_FORGE_JOBS")
    jobs = getattr(args, "jobs", None)
    if jobs is None:
        jobs = int(env_jobs) if env_jobs else 1
    if k < 2:
        r.errors.append(f"cv.k: must be >= 2, got {k}")
    if runs < 1:
        r.errors.append(f"cv.runs: must be >= 1, got {runs}")

    r.finalize()
    return ExperimentConfig(
        raw=raw, x_path=x_path, y_path=y_path, synth_cfg=synth_cfg,
        prep=prep, per_target=per_target, augment_cfg=augment_cfg,
        train_cfg=train_cfg, k=k, runs=runs, kernel=kernel,
        base_seed=base_seed, out_dir=out_dir, jobs=max(1, jobs),
    )


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _emit(cfg: ExperimentConfig, command: str, extra_docs: dict[str, dict]) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "manifest.json", cfg.manifest_doc(command))
    for name, doc in extra_docs.items():
        _write_json(cfg.out_dir / name, doc)


def cmd_generate(cfg: ExperimentConfig) -> None:
    x, y = synth.generate(cfg.synth_cfg)
    write_dataset(cfg.out_dir / "x.csv", cfg.out_dir / "y.csv", x, y)
    _emit(cfg, "generate", {"truth.json": synth.truth_document(cfg.synth_cfg)})
    print(f"wrote {x.n_samples}x{x.n_features} dataset to {cfg.out_dir}")


def cmd_preprocess(cfg: ExperimentConfig) -> None:
    x, y = cfg.dataset()
    pipeline = _pipeline_from_prep(cfg.prep)
    out_x, _, _ = apply_pipeline(pipeline, x)
    write_dataset(cfg.out_dir / "x.csv", cfg.out_dir / "y.csv", out_x, y)
    _emit(cfg, "preprocess", {})
    print(f"applied {pipeline.serialize()} to {x.n_samples} spectra -> {cfg.out_dir}")


def _pipeline_from_prep(prep: str) -> Pipeline:
    return parse_pipeline(prep.replace("+", "|") if prep else "raw")


def cmd_augment(cfg: ExperimentConfig) -> None:
    x, y = cfg.dataset()
    ax, ay = augment(x, y, cfg.augment_cfg)
    write_dataset(cfg.out_dir / "x.csv", cfg.out_dir / "y.csv", ax, ay)
    _emit(cfg, "augment", {})
    print(f"augmented {x.n_samples} -> {ax.n_samples} spectra in {cfg.out_dir}")


def cmd_cv(cfg: ExperimentConfig) -> None:
    x, y = cfg.dataset()
    kwargs = dict(
        k=cfg.k, runs=cfg.runs, base_seed=cfg.base_seed,
        kernel_size=cfg.kernel, jobs=cfg.jobs,
    )
    if cfg.per_target:
        result = evaluate.run_cv_per_target(
            x, y, cfg.per_target, cfg.augment_cfg, cfg.train_cfg,
            default_prep=cfg.prep + "+DA" if cfg.prep else "DA", **kwargs,
        )
    else:
        proc = cfg.prep + "+DA" if cfg.prep else "DA"
        result = evaluate.run_cv(x, y, proc, cfg.augment_cfg, cfg.train_cfg, **kwargs)
    doc = {"schema": SCHEMA_VERSION, "kind": "cv", **result.to_json_dict()}
    _emit(cfg, "cv", {"results.json": doc})
    s = result.summary()["overall_r2"]
    print(f"cv done: overall R2 {s['mean']:.3f}±{s['std']:.3f} over {len(result.scores)} folds")


def cmd_ablate(cfg: ExperimentConfig, which: str) -> None:
    x, y = cfg.dataset()
    kwargs = dict(k=cfg.k, runs=cfg.runs, base_seed=cfg.base_seed, jobs=cfg.jobs)
    if which == "order":
        table = evaluate.ablate_order(x, y, cfg.augment_cfg, cfg.train_cfg, **kwargs)
    elif which == "factor":
        table = evaluate.ablate_factor(x, y, cfg.augment_cfg, cfg.train_cfg, **kwargs)
    elif which == "kernel":
        table = evaluate.ablate_kernel(x, y, cfg.augment_cfg, cfg.train_cfg, **kwargs)
    else:
        raise ConfigError(f"unknown ablation {which!r}")
    doc = {"schema": SCHEMA_VERSION, "kind": f"ablate-{which}", **table.to_json_dict()}
    _emit(cfg, f"ablate-{which}", {"results.json": doc})
    print(f"ablation '{which}' done: {len(table.rows)} arms -> {cfg.out_dir}")


def cmd_report(results_dir: Path) -> str:
    """Render Markdown tables for every results.json under a directory."""
    sections = []
    for path in sorted(Path(results_dir).rglob("results.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("schema") != SCHEMA_VERSION:
            continue
        kind = doc.get("kind", "cv")
        sections.append(f"## {path.parent.name} ({kind})\n")
        if kind == "cv":
            sections.append(_cv_markdown(doc))
        else:
            sections.append(_ablation_markdown(doc))
    if not sections:
        raise FileNotFoundError(f"no results.json with schema {SCHEMA_VERSION} under {results_dir}")
    return "\n".join(sections)


def _fmt(ms: dict) -> str:
    return f"{ms['mean']:.3f}±{ms['std']:.3f}"


def _cv_markdown(doc: dict) -> str:
    s = doc["summary"]
    lines = ["| Quantity | R2CV | RMSECV |", "| --- | --- | --- |"]
    for key in ("overall", "water", "protein", "lipids_yield"):
        lines.append(f"| {key} | {_fmt(s[f'{key}_r2'])} | {_fmt(s[f'{key}_rmse'])} |")
    return "\n".join(lines) + "\n"


def _ablation_markdown(doc: dict, alpha: float = 0.05) -> str:
    ref = doc["reference"]
    ref_mean = next(
        row["result"]["summary"]["overall_r2"]["mean"]
        for row in doc["rows"] if row["label"] == ref
    )
    lines = ["| Procedure | R2CV | p-value |", "| --- | --- | --- |"]
    for row in doc["rows"]:
        s = row["result"]["summary"]["overall_r2"]
        cell = _fmt(s)
        p = row["p_overall"]
        if p is None:
            p_cell = "-"
        else:
            p_cell = f"{p:.2g}"
            if p < alpha and s["mean"] > ref_mean:
                cell = f"**{cell}**"
        lines.append(f"| {row['label']} | {cell} | {p_cell} |")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectralforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="flat key=value config file")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--jobs", type=int, help="parallel fold workers (env SPECTRAL_FORGE_JOBS)")
        p.add_argument("--out", type=Path, help="output directory")

    p = sub.add_parser("generate", help="emit a synthetic dataset")
    common(p)
    p.add_argument("--preset", choices=sorted(_SYNTH_PRESETS))

    p = sub.add_parser("preprocess", help="apply one pipeline to a dataset")
    common(p)
    p.add_argument("--pipeline", type=int, help="design-matrix pipeline id (1..64)")

    p = sub.add_parser("augment", help="expand a dataset by the augmentation factor")
    common(p)
    p.add_argument("--factor", type=int)

    p = sub.add_parser("cv", help="cross-validated training and scoring")
    common(p)
    p.add_argument("--pipeline", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--k", type=int)

    p = sub.add_parser("ablate", help="run an ablation study")
    common(p)
    p.add_argument("which", choices=["order", "factor", "kernel"])
    p.add_argument("--runs", type=int)
    p.add_argument("--k", type=int)

    p = sub.add_parser("report", help="render Markdown tables from results")
    p.add_argument("results_dir", type=Path)
    p.add_argument("--out", type=Path, help="also write report.md here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            text = cmd_report(args.results_dir)
            if args.out:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / "report.md").write_text(text, encoding="utf-8")
            print(text)
            return 0

        raw = load_config_file(args.config) if args.config else {}
        cfg = resolve_config(raw, args)
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "preprocess":
            cmd_preprocess(cfg)
        elif args.command == "augment":
            cmd_augment(cfg)
        elif args.command == "cv":
            cmd_cv(cfg)
        elif args.command == "ablate":
            cmd_ablate(cfg, args.which)
        return 0
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
