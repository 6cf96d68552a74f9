"""Two-stage training, evaluation metrics and the transferability sweep."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import model as M
from .errors import ConfigError, NumericError
from .ingest import kfold_indices, normalize_label
from .nn import Optimizer, bce_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    stage: str = "stage2"
    learning_rate: float = 0.001
    batch_size: int = 1100
    epochs: int = 100
    seed: int = 0
    folds: int | None = None
    spec_profile: str = "paper"
    optimizer: str = "adam"
    threshold: float = 0.5
    # Stage-1 only: "retrain" on the full base split after CV, or keep the "best_fold" model
    checkpoint_policy: str = "retrain"
    # run dropout inside the frozen base during Stage-2
    frozen_dropout: bool = False
    track_train_acc: bool = True


_DEFAULTS = {
    ("paper", "stage1"): dict(learning_rate=0.001, batch_size=400, epochs=1, folds=10),
    ("paper", "stage2"): dict(learning_rate=0.001, batch_size=1100, epochs=100),
    ("desk", "stage1"): dict(learning_rate=0.001, batch_size=40, epochs=1, folds=10),
    ("desk", "stage2"): dict(learning_rate=0.001, batch_size=110, epochs=30),
}


def default_config(stage, profile="paper", **overrides):
    try:
        base = _DEFAULTS[(profile, stage)]
    except KeyError:
        raise ConfigError(f"no defaults for profile {profile!r}, stage {stage!r}") from None
    return TrainingConfig(stage=stage, spec_profile=profile, **{**base, **overrides})


def derive_seed(seed, index):
    """Independent child seed for fold / sweep condition ``index``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float | None
    val_acc: float | None
    seconds: float


@dataclass
class TrainingHistory:
    epochs: list = field(default_factory=list)
    fold: int | None = None

    def __len__(self):
        return len(self.epochs)

    def to_dict(self, timing=False):
        rows = [asdict(e) for e in self.epochs]
        if not timing:
            for r in rows:
                r.pop("seconds")
        return {"fold": self.fold, "epochs": rows}


def accuracy(model, x, y, threshold=0.5):
    if len(y) == 0:
        return None
    pred = (model.predict_proba(x) >= threshold).astype(np.int8)
    return float(np.mean(pred == np.asarray(y)))


def train(model, x, y, config, rng=None, val=None):
    """Mini-batch training over per-epoch shuffles; the last short batch is kept."""
    x = np.asarray(x)
    y = np.asarray(y)
    n = len(y)
    if config.epochs < 0:
        raise ConfigError("epochs must be >= 0")
    if config.epochs and not 1 <= config.batch_size <= n:
        raise ConfigError(f"batch_size {config.batch_size} must be between 1 and the dataset size {n}")
    if config.epochs and not np.all(np.isfinite(x)):
        raise NumericError("training inputs contain NaN or infinite values")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    opt = Optimizer(model.trainable_params(), config.optimizer, config.learning_rate)
    history = TrainingHistory()
    losses = []
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            out = model.forward(x[idx], train=True, rng=rng)
            loss, grad = bce_loss(out[:, 0], y[idx])
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {b}: {loss}; "
                    f"recent epoch losses {losses[-5:]}"
                )
            model.backward(grad[:, None])
            opt.step()
            total += loss * len(idx)
        losses.append(total / n)
        train_acc = accuracy(model, x, y, config.threshold) if config.track_train_acc else None
        val_acc = accuracy(model, val[0], val[1], config.threshold) if val is not None else None
        history.epochs.append(EpochRecord(epoch, losses[-1], train_acc, val_acc, time.perf_counter() - start))
        log.info("epoch %d loss %.4f train_acc %s val_acc %s", epoch, losses[-1], train_acc, val_acc)
    return history


@dataclass
class Stage1Result:
    model: M.ConvNetModel
    history: TrainingHistory
    cv_report: dict | None


def stage1_train(base_spec, x, y, config):
    """Cross-validate ConvNet-B with its temporary head, then produce the base model."""
    x = np.asarray(x)
    y = np.asarray(y)
    cv = None
    fold_models = []
    if config.folds:
        folds = kfold_indices(len(y), config.folds, config.seed)
        records = []
        for i, val_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(len(y)), val_idx)
            fold_cfg = replace(config, seed=derive_seed(config.seed, i + 1))
            m = M.build_stage1_model(base_spec, seed=fold_cfg.seed)
            try:
                h = train(m, x[train_idx], y[train_idx], fold_cfg, val=(x[val_idx], y[val_idx]))
            except NumericError as e:
                raise NumericError(f"fold {i}: {e}") from e
            h.fold = i
            last = h.epochs[-1] if h.epochs else None
            val_acc = accuracy(m, x[val_idx], y[val_idx], config.threshold)
            records.append(
                {
                    "fold": i,
                    "train_size": int(len(train_idx)),
                    "val_size": int(len(val_idx)),
                    "train_loss": None if last is None else last.train_loss,
                    "val_acc": val_acc,
                }
            )
            fold_models.append((val_acc, i, m))
        accs = np.array([r["val_acc"] for r in records])
        cv = {"folds": records, "mean_val_acc": float(accs.mean()), "std_val_acc": float(accs.std())}

    if config.checkpoint_policy == "best_fold" and fold_models:
        _, best, m = max(fold_models, key=lambda t: (t[0], -t[1]))
        cv["selected_fold"] = best
        return Stage1Result(m, TrainingHistory(), cv)
    if config.checkpoint_policy not in ("retrain", "best_fold"):
        raise ConfigError(f"unknown checkpoint policy {config.checkpoint_policy!r}")
    m = M.build_stage1_model(base_spec, seed=derive_seed(config.seed, 0))
    history = train(m, x, y, replace(config, seed=derive_seed(config.seed, 0)))
    return Stage1Result(m, history, cv)


@dataclass
class Stage2Result:
    model: M.ConvNetModel
    history: TrainingHistory


def stage2_train(base, target_spec, x, y, config, val=None, head_spec=None):
    """Assemble ConvNet-TL around a frozen ConvNet-B and train ConvNet-T plus a new head."""
    model = M.assemble_tl(base, target_spec, head_spec, seed=config.seed, frozen_dropout=config.frozen_dropout)
    history = train(model, x, y, config, val=val)
    return Stage2Result(model, history)


def train_no_transfer(spec, x, y, config, val=None):
    """The plain ConvNet: same architecture, every block trainable, target data only."""
    spec = replace(spec, blocks=tuple(replace(b, trainable=True) for b in spec.blocks))
    model = M.ConvNetModel(spec, seed=config.seed)
    history = train(model, x, y, config, val=val)
    return Stage2Result(model, history)


# evaluation


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fn + self.fp + self.tn


def confusion(y_true, y_pred):
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    return ConfusionCounts(
        tp=int(np.sum(t & p)), fn=int(np.sum(t & ~p)), fp=int(np.sum(~t & p)), tn=int(np.sum(~t & ~p))
    )


def _pct(num, den):
    return 100.0 * num / den if den else None


def rates(c):
    """``(dr, acc, fpr)`` in percent; ``None`` where the denominator is empty."""
    return _pct(c.tp, c.tp + c.fn), _pct(c.tp + c.tn, c.total), _pct(c.fp, c.fp + c.tn)


@dataclass
class EvalReport:
    role: str
    counts: ConfusionCounts
    dr_pct: float | None
    acc_pct: float | None
    fpr_pct: float | None
    threshold: float = 0.5
    breakdown: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, counts, role="", threshold=0.5, breakdown=None):
        dr, acc, fpr = rates(counts)
        return cls(role, counts, dr, acc, fpr, threshold, breakdown or {})

    def to_dict(self):
        d = asdict(self)
        d["counts"] = asdict(self.counts)
        return d


def _breakdown(y, pred, labels, known):
    per_label = {}
    for lab, yi, pi in zip(labels, y, pred):
        if yi != 1:
            continue
        name = normalize_label(lab)
        entry = per_label.setdefault(name, {"total": 0, "detected": 0})
        entry["total"] += 1
        entry["detected"] += int(pi)
    out = {"per_label": dict(sorted(per_label.items()))}
    if known is not None:
        known = {normalize_label(k) for k in known}
        for group, names in (("known", [n for n in per_label if n in known]), ("novel", [n for n in per_label if n not in known])):
            total = sum(per_label[n]["total"] for n in names)
            detected = sum(per_label[n]["detected"] for n in names)
            out[group] = {"total": total, "detected": detected, "dr_pct": _pct(detected, total)}
    return out


def evaluate(model, x, y, original_labels=None, threshold=0.5, known_attacks=None, role=""):
    y = np.asarray(y)
    if len(y) == 0:
        raise ConfigError("cannot evaluate on an empty split")
    pred = (model.predict_proba(x) >= threshold).astype(np.int8)
    breakdown = _breakdown(y, pred, original_labels, known_attacks) if original_labels is not None else {}
    return EvalReport.from_counts(confusion(y, pred), role, threshold, breakdown)


# sweep


@dataclass
class SweepRow:
    condition: str
    stage1_epochs: int | None
    seed: int
    reports: dict  # role -> EvalReport
    final_train_loss: float | None = None

    def to_dict(self):
        return {
            "condition": self.condition,
            "stage1_epochs": self.stage1_epochs,
            "seed": self.seed,
            "final_train_loss": self.final_train_loss,
            "reports": {k: v.to_dict() for k, v in self.reports.items()},
        }


def transferability_sweep(base, target, tests, epoch_grid, stage1_config, stage2_config, known_attacks=None):
    """No-transfer baseline plus one transfer condition per Stage-1 epoch budget.

    ``base`` and ``target`` are ``(x, y)``; ``tests`` maps a role name to
    ``(x, y, original_labels)``. Condition ``i`` (baseline is 0) trains with
    ``derive_seed(stage2_config.seed, i)``.
    """
    if not epoch_grid:
        raise ConfigError("epoch grid is empty")
    profile = stage2_config.spec_profile
    spec = M.tl_spec(profile)
    rows = []

    def evaluate_all(model):
        return {
            role: evaluate(model, tx, ty, labels, stage2_config.threshold, known_attacks, role)
            for role, (tx, ty, labels) in tests.items()
        }

    seed0 = derive_seed(stage2_config.seed, 0)
    res = train_no_transfer(spec, target[0], target[1], replace(stage2_config, seed=seed0))
    rows.append(SweepRow("no-transfer", None, seed0, evaluate_all(res.model), _last_loss(res.history)))
    for i, epochs in enumerate(epoch_grid, start=1):
        seed = derive_seed(stage2_config.seed, i)
        s1 = stage1_train(
            M.stage1_spec(profile), base[0], base[1], replace(stage1_config, epochs=epochs, seed=seed, folds=None)
        )
        s2 = stage2_train(s1.model, M.target_block_spec(profile), target[0], target[1], replace(stage2_config, seed=seed))
        rows.append(SweepRow(f"transfer@{epochs}", epochs, seed, evaluate_all(s2.model), _last_loss(s2.history)))
    return rows


def _last_loss(history):
    return history.epochs[-1].train_loss if history.epochs else None


# report files


def _fmt(v, width=8):
    return f"{'-':>{width}}" if v is None else f"{v:>{width}.2f}"


def format_reports(reports, title=None):
    lines = [title] if title else []
    lines.append(f"{'set':<12}{'tp':>8}{'fn':>8}{'fp':>8}{'tn':>8}{'DR%':>8}{'ACC%':>8}{'FPR%':>8}")
    for r in reports:
        c = r.counts
        lines.append(f"{r.role:<12}{c.tp:>8}{c.fn:>8}{c.fp:>8}{c.tn:>8}{_fmt(r.dr_pct)}{_fmt(r.acc_pct)}{_fmt(r.fpr_pct)}")
    return "\n".join(lines) + "\n"


def format_sweep(rows):
    roles = list(rows[0].reports) if rows else []
    head = f"{'condition':<14}" + "".join(f"{role + ' ' + m:>18}" for role in roles for m in ("DR%", "ACC%", "FPR%"))
    lines = [head]
    for row in rows:
        cells = []
        for role in roles:
            r = row.reports[role]
            cells += [r.dr_pct, r.acc_pct, r.fpr_pct]
        lines.append(f"{row.condition:<14}" + "".join(_fmt(v, 18) for v in cells))
    return "\n".join(lines) + "\n"


def dump_json(obj, path):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def curve_rows(history):
    return [(e.epoch, e.train_acc, e.val_acc) for e in history.epochs]


def curve_export(history, path=None):
    """``epoch,train_acc,val_acc`` CSV; values written with ``repr`` so they read back exactly."""
    if not history.epochs:
        raise ConfigError("cannot export an empty history")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_acc", "val_acc"])
    for epoch, tr, va in curve_rows(history):
        w.writerow([epoch, "" if tr is None else repr(tr), "" if va is None else repr(va)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text


def read_curve(path):
    with open(path, newline="") as f:
        return [
            (int(r["epoch"]), float(r["train_acc"]) if r["train_acc"] else None, float(r["val_acc"]) if r["val_acc"] else None)
            for r in csv.DictReader(f)
        ]
