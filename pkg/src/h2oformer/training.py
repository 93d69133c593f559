"""Losses, one- and two-stage training, evaluation, and the ablation matrix."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .het import ConfigError
from .model import H2OFormer, ModelConfig
from .numerics import SGD, Tape, Tensor, no_grad, ops, save_checkpoint
from .topology import Topology

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-7


class TrainingAborted(RuntimeError):
    """A non-finite loss stopped training."""

    def __init__(self, epoch: int, batch: int, checkpoint: Path | None):
        where = f" (last good state saved to {checkpoint})" if checkpoint else ""
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}{where}")
        self.epoch = epoch
        self.batch = batch
        self.checkpoint = checkpoint


# -- losses -----------------------------------------------------------------------

def loss_rec(recon: Tensor, target) -> Tensor:
    """Mean over sequences and frames of the Frobenius norm of each (V, 3) frame error."""
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=recon.dtype))
    if recon.shape != target.shape:
        raise ops.ShapeError(f"loss_rec: reconstruction {recon.shape} vs target {target.shape}")
    if recon.ndim == 3:
        recon = ops.reshape(recon, (1,) + recon.shape)
        target = ops.reshape(target, (1,) + target.shape)
    diff = ops.sub(recon, target)
    per_frame = ops.sqrt(ops.sum(ops.mul(diff, diff), axis=(2, 3)))     # N, T
    return ops.mean(per_frame)


def loss_cls(prob: Tensor, labels) -> Tensor:
    """Binary cross-entropy, batch mean, with probabilities clamped to [1e-7, 1 - 1e-7]."""
    prob = prob if isinstance(prob, Tensor) else Tensor(np.asarray(prob, dtype=np.float64))
    y = np.asarray(labels)
    if y.shape != prob.shape:
        raise ops.ShapeError(f"loss_cls: probabilities {prob.shape} vs labels {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        bad = y[(y != 0) & (y != 1)]
        raise ValueError(f"loss_cls: labels must be 0 or 1, got {bad.ravel()[0]!r}")
    y = y.astype(prob.dtype)
    p = ops.clip(prob, PROB_CLAMP, 1 - PROB_CLAMP)
    ll = ops.add(ops.mul(y, ops.log(p)), ops.mul(1 - y, ops.log(ops.sub(1.0, p))))
    return ops.neg(ops.mean(ll))


def combined_loss(l_rec: Tensor | None, l_cls: Tensor | None, lambda_rec: float, lambda_cls: float) -> Tensor:
    terms = []
    if l_rec is not None and lambda_rec != 0:
        terms.append(ops.mul(l_rec, np.asarray(lambda_rec, dtype=l_rec.dtype)))
    if l_cls is not None and lambda_cls != 0:
        terms.append(ops.mul(l_cls, np.asarray(lambda_cls, dtype=l_cls.dtype)))
    if not terms:
        raise ValueError("combined_loss: both loss terms are absent or weighted zero")
    return terms[0] if len(terms) == 1 else ops.add(terms[0], terms[1])


def suggest_rec_weight(l_rec: float, l_cls: float) -> float:
    """Power-of-ten reconstruction weight that puts both loss terms on the same order."""
    if l_rec <= 0 or l_cls <= 0:
        return 1.0
    return 10.0 ** -round(math.log10(l_rec / l_cls))


# -- metrics -----------------------------------------------------------------------

def _f1(tp: int, fp: int, fn: int) -> float:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class MetricsReport:
    tp: dict[int, int]
    fp: dict[int, int]
    fn: dict[int, int]
    n: int
    accuracy: float
    f1_micro: float
    f1_positive: float
    f1_macro: float
    loss_rec: float | None = None
    loss_cls: float | None = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("tp", "fp", "fn"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return d


def confusion_metrics(labels, preds) -> MetricsReport:
    labels = np.asarray(labels).astype(np.int64)
    preds = np.asarray(preds).astype(np.int64)
    if labels.shape != preds.shape:
        raise ValueError(f"labels {labels.shape} and predictions {preds.shape} differ in shape")
    n = labels.size
    if n == 0:
        raise ValueError("cannot compute metrics on an empty set")
    tp, fp, fn = {}, {}, {}
    for c in (0, 1):
        tp[c] = int(np.sum((preds == c) & (labels == c)))
        fp[c] = int(np.sum((preds == c) & (labels != c)))
        fn[c] = int(np.sum((preds != c) & (labels == c)))
    acc = (tp[0] + tp[1]) / n
    s_tp = sum(tp.values())
    micro_p = s_tp / (s_tp + sum(fp.values()))
    micro_r = s_tp / (s_tp + sum(fn.values()))
    micro = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    per_class = [_f1(tp[c], fp[c], fn[c]) for c in (0, 1)]
    return MetricsReport(tp, fp, fn, n, acc, micro, per_class[1], float(np.mean(per_class)))


def evaluate(model: H2OFormer, x: np.ndarray, y: np.ndarray, batch_size: int = 64,
             threshold: float = 0.5) -> MetricsReport:
    """Threshold the head's probability and score it against ``y``.  Runs in eval mode."""
    if len(x) == 0:
        raise ValueError("evaluate: empty dataset")
    was_training = model.training
    model.eval()
    probs, rec_sum = [], 0.0
    cls_sum = 0.0
    with no_grad():
        for start in range(0, len(x), batch_size):
            xb, yb = x[start:start + batch_size], y[start:start + batch_size]
            out = model(xb)
            probs.append(out.probability.data)
            cls_sum += loss_cls(out.probability, yb).item() * len(xb)
            if out.reconstruction is not None:
                rec_sum += loss_rec(out.reconstruction, xb).item() * len(xb)
    model.train(was_training)
    prob = np.concatenate(probs)
    report = confusion_metrics(y, (prob >= threshold).astype(np.int64))
    report.loss_cls = cls_sum / len(x)
    report.loss_rec = rec_sum / len(x) if model.decoder else None
    return report


# -- configuration -------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.0005
    lr_decay: float = 0.1
    milestones: tuple[int, ...] = (60,)
    momentum: float = 0.0
    lambda_rec: float = 1.0
    lambda_cls: float = 1.0
    seed: int = 0
    variant: str | None = None      # set by apply_variant; None means flags come from the model config
    stage_mode: str = "one_stage"
    stage1_fraction: float = 0.5
    train_fraction: float = 0.75
    eval_every: int = 1

    def __post_init__(self):
        self.milestones = tuple(self.milestones)
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.lambda_rec < 0 or self.lambda_cls < 0:
            raise ConfigError(f"loss weights must be non-negative, got {self.lambda_rec}, {self.lambda_cls}")
        if self.stage_mode not in ("one_stage", "two_stage"):
            raise ConfigError(f"stage_mode must be 'one_stage' or 'two_stage', got {self.stage_mode!r}")
        if not 0.0 < self.stage1_fraction < 1.0:
            raise ConfigError(f"stage1_fraction must lie in (0, 1), got {self.stage1_fraction}")
        if self.variant is not None and self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {list(VARIANTS)}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["milestones"] = list(self.milestones)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown train config keys: {unknown}")
        return cls(**d)


@dataclass(frozen=True)
class AblationVariant:
    id: str
    hypergraph: bool
    enhanced_hyperedge: bool
    decoder_branch: bool
    one_stage: bool
    masking_rate: float = 0.0

    @property
    def stage_mode(self) -> str:
        return "two_stage" if self.decoder_branch and not self.one_stage else "one_stage"


# Component columns as marked in the ablation table: the decoder-free rows
# carry no one-stage mark, and the two-stage row is the EH+DB combination.
VARIANTS: dict[str, AblationVariant] = {v.id: v for v in (
    AblationVariant("BL", False, False, False, False),
    AblationVariant("BL+HG", True, False, False, False),
    AblationVariant("BL+HG+EH", True, True, False, False),
    AblationVariant("BL+HG+DB", True, False, True, True),
    AblationVariant("BL+HG+EH+DB", True, True, True, False),
    AblationVariant("Masked", True, True, True, True, masking_rate=0.3),
    AblationVariant("Full", True, True, True, True),
)}


def apply_variant(model_cfg: ModelConfig, train_cfg: TrainConfig, variant: str) -> tuple[ModelConfig, TrainConfig]:
    v = VARIANTS[variant]
    m = dataclasses.replace(model_cfg, use_hypergraph=v.hypergraph, use_enhanced_hyperedge=v.enhanced_hyperedge,
                            use_decoder=v.decoder_branch, masking_rate=v.masking_rate)
    t = dataclasses.replace(train_cfg, variant=variant, stage_mode=v.stage_mode)
    return m, t


# -- training loops ------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    stage: str
    lr: float
    loss_rec: float | None
    loss_cls: float | None
    loss: float
    train: MetricsReport | None = None
    val: MetricsReport | None = None

    def row(self) -> dict:
        row = {"epoch": self.epoch, "stage": self.stage, "lr": self.lr,
               "L_rec": self.loss_rec, "L_cls": self.loss_cls, "L": self.loss}
        for tag, rep in (("train", self.train), ("val", self.val)):
            row[f"{tag}_acc"] = rep.accuracy if rep else None
            row[f"{tag}_f1_micro"] = rep.f1_micro if rep else None
            row[f"{tag}_f1_positive"] = rep.f1_positive if rep else None
            row[f"{tag}_f1_macro"] = rep.f1_macro if rep else None
        return row


@dataclass
class TrainResult:
    epochs: list[EpochRecord] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    loss_weight_suggestion: float | None = None
    final_train: MetricsReport | None = None
    final_val: MetricsReport | None = None
    initial_loss_rec: float | None = None


def reconstruction_loss(model: H2OFormer, x, batch_size: int = 64, training: bool = False) -> float | None:
    """Mean ``L_rec`` over ``x`` without touching parameters or running statistics.

    ``training=True`` measures with batch statistics, as the optimizer sees
    the network; masking is never applied.
    """
    if not model.decoder:
        return None
    saved = {k: (s.mean.copy(), s.var.copy()) for k, s in model.named_norm_states().items()}
    was_training = model.training
    rate = model.config.masking_rate
    model.train(training)
    model.config.masking_rate = 0.0
    total = 0.0
    try:
        with no_grad():
            for start in range(0, len(x), batch_size):
                xb = x[start:start + batch_size]
                total += loss_rec(model(xb, classify=False).reconstruction, xb).item() * len(xb)
    finally:
        model.config.masking_rate = rate
        model.train(was_training)
        for k, s in model.named_norm_states().items():
            s.mean, s.var = saved[k]
    return total / len(x)


def _run_stage(model: H2OFormer, x, y, cfg: TrainConfig, result: TrainResult, *, stage: str,
               epochs: int, milestones, use_rec: bool, use_cls: bool, val=None,
               run_dir: Path | None = None, on_epoch: Callable[[EpochRecord], None] | None = None,
               epoch_offset: int = 0) -> None:
    params = model.parameters()
    opt = SGD(params, cfg.lr, milestones=milestones, gamma=cfg.lr_decay, momentum=cfg.momentum)
    joint = use_rec and use_cls
    lam_rec = cfg.lambda_rec if joint else 1.0
    lam_cls = cfg.lambda_cls if joint else 1.0
    # a zero reconstruction weight keeps the decoder out of the graph entirely
    rec_in_graph = use_rec and lam_rec != 0 and bool(model.decoder)
    n = len(x)
    for epoch in range(epochs):
        global_epoch = epoch_offset + epoch
        lr = opt.set_epoch(epoch)
        order = np.random.default_rng([cfg.seed, global_epoch]).permutation(n)
        mask_rng = np.random.default_rng([cfg.seed, global_epoch, 1])
        snapshot = model.state_dict()
        sums = {"rec": 0.0, "cls": 0.0, "L": 0.0}
        model.train()
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            with Tape() as tape:
                out = model(xb, reconstruct=rec_in_graph, classify=use_cls, mask_rng=mask_rng)
                l_rec = loss_rec(out.reconstruction, xb) if rec_in_graph else None
                l_cls = loss_cls(out.probability, yb) if use_cls else None
                loss = combined_loss(l_rec, l_cls, lam_rec if rec_in_graph else 0.0, lam_cls)
            value = loss.item()
            rec_value = l_rec.item() if l_rec is not None else None
            if use_rec and not rec_in_graph and model.decoder:
                with no_grad():
                    recon, _ = model.decode(out.latent, out.hyperedge_state)
                rec_value = loss_rec(recon, xb).item()
            if not math.isfinite(value):
                ckpt = None
                if run_dir is not None:
                    model.load_state_dict(snapshot)
                    ckpt = save_checkpoint(run_dir / "last_good.npz", snapshot,
                                           {"epoch": global_epoch, "reason": "non-finite loss"})
                raise TrainingAborted(global_epoch, b, ckpt)
            tape.backward(loss)
            opt.step()
            opt.zero_grad()
            result.step_losses.append(value)
            w = len(idx) / n
            sums["L"] += w * value
            if rec_value is not None:
                sums["rec"] += w * rec_value
            if l_cls is not None:
                sums["cls"] += w * l_cls.item()
        rec_mean = sums["rec"] if (use_rec and model.decoder) else None
        cls_mean = sums["cls"] if use_cls else None
        if result.loss_weight_suggestion is None and rec_mean is not None and cls_mean is not None:
            result.loss_weight_suggestion = suggest_rec_weight(rec_mean, cls_mean)
            log.info("epoch 1 loss balance L_rec:L_cls = %.4g:%.4g, suggested lambda_rec %.3g",
                     rec_mean, cls_mean, result.loss_weight_suggestion)
        record = EpochRecord(global_epoch + 1, stage, lr, rec_mean, cls_mean, sums["L"])
        last = epoch == epochs - 1
        if use_cls and (last or (cfg.eval_every and (epoch + 1) % cfg.eval_every == 0)):
            record.train = evaluate(model, x, y, cfg.batch_size)
            if val is not None and len(val[0]):
                record.val = evaluate(model, val[0], val[1], cfg.batch_size)
        result.epochs.append(record)
        if run_dir is not None and (epoch + 1) in milestones:
            save_checkpoint(run_dir / f"checkpoint_{stage}_epoch{global_epoch + 1}.npz", model.state_dict(),
                            checkpoint_header(model, global_epoch + 1))
        if on_epoch is not None:
            on_epoch(record)


def checkpoint_header(model: H2OFormer, epoch: int | None = None) -> dict:
    return {
        "dtype": str(model.dtype),
        "seed": model.seed,
        "num_parameters": model.num_parameters(),
        "model": model.config.to_dict(),
        "topology": model.topology.to_dict(),
        "epoch": epoch,
    }


def _finish(model, x, y, val, result, cfg):
    result.final_train = evaluate(model, x, y, cfg.batch_size)
    if val is not None and len(val[0]):
        result.final_val = evaluate(model, val[0], val[1], cfg.batch_size)
    return model, result


def train_one_stage(model: H2OFormer, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, val=None,
                    run_dir: Path | None = None, on_epoch=None) -> tuple[H2OFormer, TrainResult]:
    """Jointly minimize ``lambda_rec * L_rec + lambda_cls * L_cls`` with SGD."""
    result = TrainResult(initial_loss_rec=reconstruction_loss(model, x, cfg.batch_size, training=True))
    _run_stage(model, x, y, cfg, result, stage="one_stage", epochs=cfg.epochs, milestones=cfg.milestones,
               use_rec=True, use_cls=True, val=val, run_dir=run_dir, on_epoch=on_epoch)
    return _finish(model, x, y, val, result, cfg)


def _scaled_milestones(milestones, total: int, stage_epochs: int) -> tuple[int, ...]:
    return tuple(sorted({max(1, round(m * stage_epochs / total)) for m in milestones if m < total}))


def train_two_stage(model: H2OFormer, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, val=None,
                    run_dir: Path | None = None, on_epoch=None,
                    stages: tuple[str, ...] = ("reconstruct", "classify")) -> tuple[H2OFormer, TrainResult]:
    """Reconstruction-only epochs, then classification-only epochs through encoder and head."""
    if not model.decoder:
        raise ConfigError("two-stage training needs the decoder branch")
    result = TrainResult(initial_loss_rec=reconstruction_loss(model, x, cfg.batch_size, training=True))
    e1 = max(1, min(cfg.epochs - 1, round(cfg.stage1_fraction * cfg.epochs))) if cfg.epochs > 1 else 1
    e2 = max(cfg.epochs - e1, 1)
    offset = 0
    if "reconstruct" in stages:
        _run_stage(model, x, y, cfg, result, stage="reconstruct", epochs=e1,
                   milestones=_scaled_milestones(cfg.milestones, cfg.epochs, e1),
                   use_rec=True, use_cls=False, run_dir=run_dir, on_epoch=on_epoch)
        offset = e1
    if "classify" in stages:
        _run_stage(model, x, y, cfg, result, stage="classify", epochs=e2,
                   milestones=_scaled_milestones(cfg.milestones, cfg.epochs, e2),
                   use_rec=False, use_cls=True, val=val, run_dir=run_dir, on_epoch=on_epoch,
                   epoch_offset=offset)
    return _finish(model, x, y, val, result, cfg)


def train(model: H2OFormer, x, y, cfg: TrainConfig, **kw) -> tuple[H2OFormer, TrainResult]:
    if cfg.stage_mode == "two_stage":
        return train_two_stage(model, x, y, cfg, **kw)
    return train_one_stage(model, x, y, cfg, **kw)


# -- ablation ---------------------------------------------------------------------------

@dataclass
class AblationRow:
    variant: AblationVariant
    result: TrainResult
    seed: int

    def as_dict(self) -> dict:
        v = self.variant
        row = {"variant": v.id, "hypergraph": v.hypergraph, "enhanced_hyperedge": v.enhanced_hyperedge,
               "decoder_branch": v.decoder_branch, "one_stage": v.one_stage, "masking_rate": v.masking_rate}
        for tag, rep in (("train", self.result.final_train), ("test", self.result.final_val)):
            row[f"{tag}_accuracy"] = rep.accuracy if rep else None
            row[f"{tag}_f1_micro"] = rep.f1_micro if rep else None
            row[f"{tag}_f1_positive"] = rep.f1_positive if rep else None
            row[f"{tag}_f1_macro"] = rep.f1_macro if rep else None
        return row


def run_ablation_matrix(x, y, model_cfg: ModelConfig, train_cfg: TrainConfig, topology: Topology,
                        val=None, variants=tuple(VARIANTS), run_dir: Path | None = None) -> list[AblationRow]:
    """Train every variant from the same seed on the same data."""
    rows = []
    for vid in variants:
        mcfg, tcfg = apply_variant(model_cfg, train_cfg, vid)
        model = H2OFormer(mcfg, topology, seed=tcfg.seed)
        sub = None
        if run_dir is not None:
            sub = run_dir / vid.replace("+", "_")
            sub.mkdir(parents=True, exist_ok=True)
        log.info("ablation: training %s (%s)", vid, tcfg.stage_mode)
        _, result = train(model, x, y, tcfg, val=val, run_dir=sub)
        rows.append(AblationRow(VARIANTS[vid], result, tcfg.seed))
    return rows
