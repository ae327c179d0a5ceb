"""AdamW, gradient accumulation, the two-stage schedule and checkpoints."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Instance, Vocab
from .encoder import DualModel, EncoderParams
from .errors import DataError, NumericError
from .lexicon import Lexicon
from .objective import IN_BATCH, IN_CANDIDATE, batch_loss_and_grads
from .sampler import in_batch_negatives, in_candidate_negatives, make_batches

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class OptimState:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def hyper(self) -> dict:
        return {k: getattr(self, k) for k in ("lr", "beta1", "beta2", "eps", "weight_decay")}


def adamw_step(state: OptimState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    """One bias-corrected Adam update with decoupled weight decay, in place."""
    for k, g in grads.items():
        if k not in params or params[k].shape != g.shape:
            raise DataError(f"gradient {k!r} does not match any parameter shape")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for k, g in grads.items():
        p = params[k]
        m = state.m.setdefault(k, np.zeros_like(p))
        v = state.v.setdefault(k, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps) + state.weight_decay * p
        p -= state.lr * update
    return state, params


@dataclass
class StageConfig:
    objective: str = IN_BATCH
    split: str = "exemplar"
    batch_size: int = 32
    grad_accum: int = 1
    tau: float = 0.07
    candidate_n: int = 15
    epochs: int = 20
    seed: int = 42
    lr: float = 1e-2
    weight_decay: float = 0.01

    def validate(self) -> None:
        if self.objective not in (IN_BATCH, IN_CANDIDATE):
            raise DataError(f"unknown objective {self.objective!r}")
        for name in ("batch_size", "grad_accum", "candidate_n"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise DataError("epochs must be non-negative")
        if not self.tau > 0:
            raise DataError("tau must be positive")
        if self.lr < 0:
            raise DataError("learning rate must be non-negative")

    def optimizer(self) -> OptimState:
        return OptimState(lr=self.lr, weight_decay=self.weight_decay)


# desk-scale defaults
STAGE1 = StageConfig(IN_BATCH, "exemplar", batch_size=32, grad_accum=1, tau=0.07)
STAGE2 = StageConfig(IN_CANDIDATE, "train", batch_size=8, grad_accum=1, tau=1.0, candidate_n=15)
# published hyper-parameters, for fidelity runs with a large encoder
PUBLISHED_STAGE1 = replace(STAGE1, batch_size=32, grad_accum=4, lr=2e-5)
PUBLISHED_STAGE2 = replace(STAGE2, batch_size=6, grad_accum=3, lr=2e-5)


@dataclass
class TrainReport:
    objective: str
    split: str
    epoch_losses: list[float]
    steps: int
    wall_clock: float = 0.0
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        # wall-clock is left out so reports are reproducible byte for byte
        return {"objective": self.objective, "split": self.split, "epoch_losses": self.epoch_losses,
                "steps": self.steps, "checkpoint": self.checkpoint}


def stage_negatives(lex: Lexicon, batch, cfg: StageConfig, epoch: int):
    if cfg.objective == IN_BATCH:
        return [in_batch_negatives(batch, i) for i in range(len(batch))]
    return [in_candidate_negatives(lex, inst, cfg.candidate_n, [cfg.seed, epoch, idx])
            for inst, idx in zip(batch.instances, batch.indices)]


def train_stage(model: DualModel, vocab: Vocab, lex: Lexicon, data: Sequence[Instance],
                cfg: StageConfig, state: OptimState | None = None):
    """Run ``cfg.epochs`` epochs; returns ``(model, report, state)``.

    Micro-batch gradients are averaged over ``grad_accum`` batches before each
    update; a partial accumulation at the end of an epoch still takes a step.
    """
    cfg.validate()
    if not data:
        raise DataError(f"split {cfg.split!r} is empty")
    state = state or cfg.optimizer()
    params = model.parameters()
    start = time.perf_counter()
    epoch_losses = []
    for epoch in range(cfg.epochs):
        losses = []
        acc: dict[str, np.ndarray] | None = None
        count = 0
        for batch in make_batches(data, cfg.batch_size, [cfg.seed, epoch]):
            negs = stage_negatives(lex, batch, cfg, epoch)
            loss, grads = batch_loss_and_grads(model, vocab, lex, batch.instances, negs, cfg.tau)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss in epoch {epoch}")
            losses.append(loss)
            if acc is None:
                acc = grads
            else:
                for k in acc:
                    acc[k] += grads[k]
            count += 1
            if count == cfg.grad_accum:
                adamw_step(state, params, {k: g / count for k, g in acc.items()})
                acc, count = None, 0
        if count:
            adamw_step(state, params, {k: g / count for k, g in acc.items()})
        epoch_losses.append(float(np.mean(losses)) if losses else 0.0)
        logger.info("%s epoch %d/%d loss %.4f", cfg.objective, epoch + 1, cfg.epochs, epoch_losses[-1])
    report = TrainReport(cfg.objective, cfg.split, epoch_losses, state.step,
                         time.perf_counter() - start)
    return model, report, state


def train_coarse_to_fine(model: DualModel, vocab: Vocab, lex: Lexicon, corpus: Sequence[Instance],
                         stage1: StageConfig = STAGE1, stage2: StageConfig = STAGE2,
                         out_dir: str | Path | None = None):
    """In-batch learning on ``stage1.split``, then in-candidate learning on ``stage2.split``.

    The optimizer state is reset between stages. With ``out_dir`` a checkpoint
    is written after each stage (``stage1.json``, ``stage2.json``).
    """
    if stage1.objective != IN_BATCH or stage2.objective != IN_CANDIDATE:
        raise DataError("coarse-to-fine expects an in_batch first stage and an in_candidate second stage")
    reports = []
    for n, cfg in enumerate((stage1, stage2), 1):
        data = [i for i in corpus if i.split == cfg.split]
        if not data:
            raise DataError(f"missing split {cfg.split!r}")
        model, report, state = train_stage(model, vocab, lex, data, cfg)
        if out_dir is not None:
            path = Path(out_dir) / f"stage{n}.json"
            save_checkpoint(model, state, path, vocab)
            report.checkpoint = path.name
        reports.append(report)
    return model, tuple(reports)


# --------------------------------------------------------------------------
# checkpoints

def vocab_hash(vocab: Vocab) -> str:
    return hashlib.sha256("\n".join(vocab.tokens).encode("utf-8")).hexdigest()


def params_hash(model: DualModel) -> str:
    h = hashlib.sha256()
    arrays = {f"target.{k}": v for k, v in model.target.arrays().items()}
    arrays.update({f"frame.{k}": v for k, v in model.frame.arrays().items()})
    if model.table is not None:
        arrays["table"] = model.table
    for k in sorted(arrays):
        h.update(k.encode())
        h.update(np.ascontiguousarray(arrays[k], dtype=np.float64).tobytes())
    return h.hexdigest()


def _enc_dict(p: EncoderParams) -> dict:
    return {k: v.tolist() for k, v in p.arrays().items()}


def _enc_from(d: dict) -> EncoderParams:
    return EncoderParams(*(np.array(d[k], dtype=np.float64) for k in ("E", "P", "W", "b")))


@dataclass
class Checkpoint:
    model: DualModel
    state: OptimState | None
    vocab: Vocab | None
    vocab_hash: str


def save_checkpoint(model: DualModel, state: OptimState | None, path: str | Path,
                    vocab: Vocab | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "d": model.d,
        "vocab_hash": vocab_hash(vocab) if vocab is not None else None,
        "vocab": vocab.tokens if vocab is not None else None,
        "mode": model.mode,
        "shared": model.shared,
        "target": _enc_dict(model.target),
        "frame": _enc_dict(model.frame),
        "table": None if model.table is None else model.table.tolist(),
        "optimizer": None if state is None else {
            **state.hyper(),
            "step": state.step,
            "m": {k: v.tolist() for k, v in sorted(state.m.items())},
            "v": {k: v.tolist() for k, v in sorted(state.v.items())},
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"checkpoint {path} has unsupported version "
                        f"{doc.get('version') if isinstance(doc, dict) else None!r}")
    try:
        table = None if doc["table"] is None else np.array(doc["table"], dtype=np.float64)
        model = DualModel(_enc_from(doc["target"]), _enc_from(doc["frame"]), doc["mode"], table,
                          bool(doc.get("shared", False)))
        state = None
        if doc.get("optimizer") is not None:
            o = doc["optimizer"]
            state = OptimState(o["lr"], o["beta1"], o["beta2"], o["eps"], o["weight_decay"], o["step"],
                               {k: np.array(v, dtype=np.float64) for k, v in o["m"].items()},
                               {k: np.array(v, dtype=np.float64) for k, v in o["v"].items()})
        vocab = Vocab(doc["vocab"]) if doc.get("vocab") else None
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupt checkpoint {path}: {exc}") from exc
    if model.d != doc["d"]:
        raise DataError(f"corrupt checkpoint {path}: d mismatch")
    if vocab is not None and vocab_hash(vocab) != doc["vocab_hash"]:
        raise DataError(f"corrupt checkpoint {path}: vocabulary hash mismatch")
    return Checkpoint(model, state, vocab, doc["vocab_hash"])


# --------------------------------------------------------------------------
# config files

@dataclass
class RunConfig:
    d: int = 64
    mode: str = "dual"
    shared: bool = False
    seed: int = 42
    stage1: StageConfig = field(default_factory=lambda: replace(STAGE1))
    stage2: StageConfig = field(default_factory=lambda: replace(STAGE2))


def _stage_from(base: StageConfig, raw: dict, seed: int) -> StageConfig:
    known = {f.name for f in fields(StageConfig)}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"unknown stage config keys: {sorted(unknown)}")
    cfg = replace(base, **{"seed": seed, **raw})
    cfg.validate()
    return cfg


def load_config(path: str | Path | None = None, preset: str = "desk", seed: int | None = None) -> RunConfig:
    """Read a JSON run config over the ``desk`` or ``published`` preset.

    The run seed comes from ``seed`` if given, else the file, else 42; stage
    blocks without their own seed inherit it.
    """
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise DataError(f"config {path} must hold a JSON object")
    preset = raw.pop("preset", preset)
    if preset not in ("desk", "published"):
        raise DataError(f"unknown preset {preset!r}")
    s1, s2 = (STAGE1, STAGE2) if preset == "desk" else (PUBLISHED_STAGE1, PUBLISHED_STAGE2)
    file_seed = raw.pop("seed", None)
    run_seed = int(seed if seed is not None else file_seed if file_seed is not None else 42)
    model = raw.pop("model", {})
    unknown_model = set(model) - {"d", "mode", "shared"}
    if unknown_model:
        raise DataError(f"unknown model config keys: {sorted(unknown_model)}")
    cfg = RunConfig(
        d=int(model.get("d", 64)),
        mode=model.get("mode", "dual"),
        shared=bool(model.get("shared", False)),
        seed=run_seed,
        stage1=_stage_from(s1, raw.pop("stage1", {}), run_seed),
        stage2=_stage_from(s2, raw.pop("stage2", {}), run_seed),
    )
    if raw:
        raise DataError(f"unknown config keys: {sorted(raw)}")
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return {"model": {"d": cfg.d, "mode": cfg.mode, "shared": cfg.shared}, "seed": cfg.seed,
            "stage1": asdict(cfg.stage1), "stage2": asdict(cfg.stage2)}
