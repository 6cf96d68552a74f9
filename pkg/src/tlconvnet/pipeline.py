"""Run configuration and the artifact-producing steps behind the CLI.

Artifacts for one run live under ``<out>/<run_name>/``::

    base.preproc.state   Stage-1 (base dataset) preprocessor
    preproc.state        Stage-2 (target dataset) preprocessor
    vectors/             preprocessed splits (.npy) + labels (.json)
    stats.json           dataset statistics
    base.ckpt            ConvNet-B with its temporary head
    base_cv.json         Stage-1 cross-validation report
    tl.ckpt              ConvNet-TL
    curves.csv           Stage-2 accuracy per epoch
    report.json/.txt     evaluation on KDDTest+ and KDDTest-21
    sweep.json/.txt      transferability sweep
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import ingest, model as M, preprocess as pp, training as T
from .errors import ConfigError

log = logging.getLogger(__name__)

FIXTURE_PREFIX = "fixture:"

SPLITS = ("base_train", "base_holdout", "target", "test_plus", "test_21")


@dataclass
class RunConfig:
    seed: int
    base: list
    target_train: str
    test_plus: str
    test_21: str
    base_schema: str | None = None
    schema: str | None = None
    profile: str = "desk"
    out: str = "out"
    run_name: str = "run"
    holdout_fraction: float = 0.1
    stage1: dict = field(default_factory=dict)
    stage2: dict = field(default_factory=dict)
    sweep_grid: list = field(default_factory=lambda: [1, 50])
    threshold: float = 0.5

    @classmethod
    def from_dict(cls, d, base_dir="."):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if d.get("seed") is None:
            raise ConfigError("a seed is required (set \"seed\" in the config or pass --seed)")
        d = dict(d)
        base_dir = Path(base_dir)
        if isinstance(d.get("base"), str):
            d["base"] = [d["base"]]
        for key in ("target_train", "test_plus", "test_21", "schema", "base_schema"):
            if d.get(key) is not None:
                d[key] = _resolve(d[key], base_dir)
        if "base" in d:
            d["base"] = [_resolve(p, base_dir) for p in d["base"]]
        try:
            cfg = cls(**d)
        except TypeError as e:
            raise ConfigError(f"incomplete config: {e}") from e
        if cfg.profile not in M.PROFILES:
            raise ConfigError(f"unknown profile {cfg.profile!r}")
        return cfg

    @classmethod
    def load(cls, path, overrides=None):
        try:
            with open(path) as f:
                d = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        d.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(d, Path(path).parent)

    def validate(self):
        missing = [p for p in [*self.base, self.target_train, self.test_plus, self.test_21] if not Path(p).is_file()]
        for p in (self.schema, self.base_schema):
            if p is not None and not p.startswith("builtin:") and not Path(p).is_file():
                missing.append(p)
        if missing:
            raise ConfigError(f"missing input files: {missing}")
        run_dir = self.run_dir
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"cannot create output directory {run_dir}: {e}") from e
        return self

    @property
    def run_dir(self):
        return Path(self.out) / self.run_name

    def stage_config(self, stage):
        overrides = self.stage1 if stage == "stage1" else self.stage2
        return T.default_config(stage, self.profile, seed=self.seed, threshold=self.threshold, **overrides)


def _resolve(p, base_dir):
    if p.startswith(FIXTURE_PREFIX):
        return str(resources.files("tlconvnet.resources.fixtures").joinpath(p[len(FIXTURE_PREFIX):]))
    if p.startswith("builtin:"):
        return p
    path = Path(p).expanduser()
    return str(path if path.is_absolute() else base_dir / path)


def _base_layout(cfg):
    if cfg.base_schema is None:
        return None
    if cfg.base_schema.startswith("builtin:"):
        return ingest.builtin_layout(cfg.base_schema[len("builtin:"):])
    return ingest.TableLayout.load(cfg.base_schema)


def _require(path, command):
    if not Path(path).exists():
        raise ConfigError(f"{path} not found: run `{command}` first")
    return path


def load_splits(cfg):
    base = ingest.load_unswnb15(cfg.base, _base_layout(cfg))
    base_train, base_holdout = ingest.partition_base(base, cfg.holdout_fraction, cfg.seed)
    return {
        "base_all": base,
        "base_train": base_train,
        "base_holdout": base_holdout,
        "target": ingest.load_nslkdd(cfg.target_train, "TrainPlus"),
        "test_plus": ingest.load_nslkdd(cfg.test_plus, "TestPlus"),
        "test_21": ingest.load_nslkdd(cfg.test_21, "Test21"),
    }


def dataset_stats(splits):
    known = splits["target"].attack_types()
    table = {
        "UNSW-NB15": ingest.compute_stats(splits["base_all"]),
        "KDDTrain+": ingest.compute_stats(splits["target"]),
        "KDDTest+": ingest.compute_stats(splits["test_plus"], known),
        "KDDTest-21": ingest.compute_stats(splits["test_21"], known),
    }
    return {k: vars(v) for k, v in table.items()}


def format_stats(stats):
    lines = [f"{'dataset':<12}{'normal':>10}{'attack':>10}{'% attack':>10}{'% novel':>10}"]
    for name, s in stats.items():
        novel = "-" if s["novel_attack_pct"] is None else f"{s['novel_attack_pct']:.1f}"
        lines.append(f"{name:<12}{s['normal_count']:>10,}{s['attack_count']:>10,}{s['attack_pct']:>10.1f}{novel:>10}")
    return "\n".join(lines) + "\n"


def _save_vectors(run_dir, name, x, split):
    vdir = run_dir / "vectors"
    vdir.mkdir(exist_ok=True)
    np.save(vdir / f"{name}.npy", x)
    meta = {
        "role": split.role.value,
        "labels": split.labels.tolist(),
        "original_labels": [str(s) for s in split.original_labels],
    }
    (vdir / f"{name}.labels.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_vectors(run_dir, name, command="preprocess"):
    vdir = Path(run_dir) / "vectors"
    x = np.load(_require(vdir / f"{name}.npy", command))
    meta = json.loads((vdir / f"{name}.labels.json").read_text())
    return x, np.array(meta["labels"], dtype=np.int8), np.array(meta["original_labels"], dtype=object)


def cmd_preprocess(cfg):
    cfg.validate()
    run_dir = cfg.run_dir
    splits = load_splits(cfg)
    schema = pp.load_schema(cfg.schema)
    base_pre = pp.Preprocessor(schema)
    base_pre.fit(splits["base_train"])
    target_pre = pp.Preprocessor(schema)
    target_pre.fit(splits["target"])
    pp.save_state(base_pre.state, run_dir / "base.preproc.state")
    pp.save_state(target_pre.state, run_dir / "preproc.state")
    for name in SPLITS:
        pre = base_pre if name.startswith("base") else target_pre
        _save_vectors(run_dir, name, pre.transform(splits[name]), splits[name])
    stats = dataset_stats(splits)
    known = sorted(splits["target"].attack_types())
    T.dump_json({"stats": stats, "width": target_pre.state.width, "target_attack_types": known}, run_dir / "stats.json")
    summary = {name: len(splits[name]) for name in SPLITS}
    return summary, target_pre.state.width, stats


def cmd_train_base(cfg):
    run_dir = cfg.run_dir
    x, y, _ = load_vectors(run_dir, "base_train")
    config = cfg.stage_config("stage1")
    result = T.stage1_train(M.stage1_spec(cfg.profile, input_length=x.shape[1]), x, y, config)
    digest = M.save_checkpoint(result.model, run_dir / "base.ckpt")
    hx, hy, _ = load_vectors(run_dir, "base_holdout")
    report = {
        "cv": result.cv_report,
        "holdout_acc": T.accuracy(result.model, hx, hy, config.threshold) if len(hy) else None,
        "history": result.history.to_dict(),
        "checkpoint_sha256": digest,
    }
    T.dump_json(report, run_dir / "base_cv.json")
    if result.history.epochs:
        T.curve_export(result.history, run_dir / "base_curves.csv")
    return report


def cmd_train_transfer(cfg):
    run_dir = cfg.run_dir
    base_path = _require(run_dir / "base.ckpt", "train-base")
    x, y, _ = load_vectors(run_dir, "target")
    config = cfg.stage_config("stage2")
    base = M.load_checkpoint(base_path)
    result = T.stage2_train(base, M.target_block_spec(cfg.profile), x, y, config)
    digest = M.save_checkpoint(result.model, run_dir / "tl.ckpt")
    if result.history.epochs:
        T.curve_export(result.history, run_dir / "curves.csv")
    T.dump_json({"history": result.history.to_dict(), "checkpoint_sha256": digest}, run_dir / "tl_history.json")
    return result.history


def cmd_evaluate(cfg):
    run_dir = cfg.run_dir
    model = M.load_checkpoint(_require(run_dir / "tl.ckpt", "train-transfer"))
    pre = pp.preprocessor_from_state(pp.load_state(_require(run_dir / "preproc.state", "preprocess")))
    target = ingest.load_nslkdd(cfg.target_train, "TrainPlus")
    known = target.attack_types()
    reports = []
    for path, variant in ((cfg.test_plus, "TestPlus"), (cfg.test_21, "Test21")):
        split = ingest.load_nslkdd(path, variant)
        reports.append(
            T.evaluate(model, pre.transform(split), split.labels, split.original_labels, cfg.threshold, known, split.role.value)
        )
    T.dump_json({"profile": cfg.profile, "seed": cfg.seed, "reports": [r.to_dict() for r in reports]}, run_dir / "report.json")
    (run_dir / "report.txt").write_text(T.format_reports(reports, f"ConvNet-TL ({cfg.profile} profile, seed {cfg.seed})"))
    return reports


def cmd_sweep(cfg, grid=None):
    run_dir = cfg.run_dir
    grid = list(grid or cfg.sweep_grid)
    base = load_vectors(run_dir, "base_train")[:2]
    target = load_vectors(run_dir, "target")[:2]
    tests = {name: load_vectors(run_dir, name) for name in ("test_plus", "test_21")}
    known = json.loads((run_dir / "stats.json").read_text())["target_attack_types"]
    rows = T.transferability_sweep(
        base, target, tests, grid, cfg.stage_config("stage1"), cfg.stage_config("stage2"), known_attacks=known
    )
    T.dump_json({"profile": cfg.profile, "seed": cfg.seed, "grid": grid, "rows": [r.to_dict() for r in rows]}, run_dir / "sweep.json")
    (run_dir / "sweep.txt").write_text(T.format_sweep(rows))
    return rows


def run_all(cfg):
    """preprocess -> train-base -> train-transfer -> evaluate."""
    cmd_preprocess(cfg)
    cmd_train_base(cfg)
    cmd_train_transfer(cfg)
    return cmd_evaluate(cfg)


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
