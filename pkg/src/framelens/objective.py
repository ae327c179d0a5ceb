"""Cosine similarity, the contrastive loss and its hand-derived gradients.

One softmax cross-entropy kernel serves both training objectives; in-batch
and in-candidate learning differ only in the negative set and temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import Instance, Vocab
from .encoder import (
    DualModel,
    backward_padded,
    forward_padded,
    frame_ids,
    max_pool,
    span_mask,
    target_ids,
)
from .errors import DataError, NumericError
from .lexicon import Lexicon

IN_BATCH = "in_batch"
IN_CANDIDATE = "in_candidate"

# relative tolerance for analytic-vs-numeric gradient agreement
GRAD_RTOL = 1e-4
FD_EPS_RANGE = (1e-6, 1e-3)


def _norm(v: np.ndarray) -> float:
    n = float(np.sqrt(v @ v))
    if not n > 0:
        raise NumericError("zero-norm representation in cosine similarity")
    return n


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(a @ b) / (_norm(a) * _norm(b))
    return min(1.0, max(-1.0, c))


def softmax_xent(cosines: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """Loss ``-log softmax(cos/tau)[0]`` and its gradient w.r.t. ``cosines``."""
    if not tau > 0:
        raise DataError(f"temperature must be positive, got {tau}")
    s = np.asarray(cosines, dtype=float) / tau
    m = s.max()
    e = np.exp(s - m)
    z = e.sum()
    loss = (m + math.log(z)) - s[0]
    p = e / z
    p[0] -= 1.0
    return max(loss, 0.0), p / tau


@dataclass
class ContrastiveCase:
    t: np.ndarray
    f_pos: np.ndarray
    negatives: list = field(default_factory=list)
    tau: float = 1.0
    kind: str = IN_CANDIDATE


def contrastive_loss(case: ContrastiveCase) -> float:
    cos = [cosine(case.t, case.f_pos)] + [cosine(case.t, f) for f in case.negatives]
    return softmax_xent(np.array(cos), case.tau)[0]


def in_batch_loss(t, f_pos, negatives, tau: float = 0.07) -> float:
    return contrastive_loss(ContrastiveCase(t, f_pos, list(negatives), tau, IN_BATCH))


def in_candidate_loss(t, f_pos, negatives, tau: float = 1.0) -> float:
    return contrastive_loss(ContrastiveCase(t, f_pos, list(negatives), tau, IN_CANDIDATE))


def _neg_ids(neg) -> list[int]:
    return list(getattr(neg, "ids", neg))


def batch_loss_and_grads(model: DualModel, vocab: Vocab, lex: Lexicon, instances: Sequence[Instance],
                         negatives: Sequence, tau: float, *, need_grads: bool = True):
    """Mean contrastive loss over ``instances`` and gradients of every trainable array.

    ``negatives[i]`` is a frame-id list (or NegativeSet) for ``instances[i]``.
    Returns ``(loss, grads)`` with ``grads`` keyed like ``model.parameters()``.
    """
    if len(instances) != len(negatives) or not instances:
        raise DataError("need one negative set per instance and at least one instance")
    negs = [_neg_ids(n) for n in negatives]
    for inst, ng in zip(instances, negs):
        if inst.gold in ng:
            raise DataError("gold frame appears among its own negatives")

    B = len(instances)
    fw_t = forward_padded(model.target, [target_ids(i, vocab) for i in instances])
    starts = np.array([i.target_start for i in instances])
    ends = np.array([i.target_end for i in instances])
    T, arg = max_pool(fw_t.h, span_mask(starts, ends, fw_t.h.shape[1]))

    uniq = sorted({i.gold for i in instances}.union(*map(set, negs)))
    slot = {f: k for k, f in enumerate(uniq)}
    if model.mode == "dual":
        enc = model.frame_encoder
        fw_f = forward_padded(enc, [frame_ids(lex, vocab, f, enc.P.shape[0]) for f in uniq])
        lengths = fw_f.mask.sum(axis=1)
        F = (fw_f.h * fw_f.mask[..., None]).sum(axis=1) / lengths[:, None]
    else:
        F = model.table[uniq]

    f_norms = np.sqrt(np.einsum("ij,ij->i", F, F))
    if not np.all(f_norms > 0):
        bad = uniq[int(np.argmin(f_norms))]
        raise NumericError(f"frame {lex.frames[bad].name!r} has a zero-norm representation")

    dT = np.zeros_like(T)
    dF = np.zeros_like(F)
    total = 0.0
    for b, (inst, ng) in enumerate(zip(instances, negs)):
        t = T[b]
        tn = _norm(t)
        rows = [slot[inst.gold]] + [slot[f] for f in ng]
        Fr = F[rows]
        fn = f_norms[rows]
        cos = (Fr @ t) / (tn * fn)
        loss, dcos = softmax_xent(cos, tau)
        total += loss
        if not need_grads:
            continue
        dcos = dcos / B
        # d cos / d t = f/(|t||f|) - cos t/|t|^2, symmetric for f
        dT[b] = (dcos / (tn * fn)) @ Fr - (dcos @ cos) * t / tn ** 2
        dFr = np.outer(dcos / (tn * fn), t) - (dcos * cos / fn ** 2)[:, None] * Fr
        np.add.at(dF, rows, dFr)

    loss = total / B
    if not need_grads:
        return loss, None

    grads: dict[str, np.ndarray] = {}
    dH = np.zeros_like(fw_t.h)
    bi = np.repeat(np.arange(B), T.shape[1])
    ki = np.tile(np.arange(T.shape[1]), B)
    dH[bi, arg.reshape(-1), ki] = dT.reshape(-1)
    tg = backward_padded(model.target, fw_t, dH)
    grads.update({f"target.{k}": v for k, v in tg.items()})

    if model.mode == "dual":
        dHf = dF[:, None, :] / lengths[:, None, None] * fw_f.mask[..., None]
        fg = backward_padded(enc, fw_f, dHf)
        if model.shared:
            for k, v in fg.items():
                grads[f"target.{k}"] = grads[f"target.{k}"] + v
        else:
            grads.update({f"frame.{k}": v for k, v in fg.items()})
    else:
        dtable = np.zeros_like(model.table)
        dtable[uniq] = dF
        grads["table"] = dtable
    return loss, grads


def loss_and_grads(model: DualModel, vocab: Vocab, lex: Lexicon, inst: Instance, neg_ids,
                   tau: float) -> tuple[float, dict[str, np.ndarray]]:
    return batch_loss_and_grads(model, vocab, lex, [inst], [neg_ids], tau)


def finite_difference_grad(fn: Callable[[], float], params: dict[str, np.ndarray],
                           eps: float = 1e-6) -> dict[str, np.ndarray]:
    """Central differences of ``fn`` w.r.t. every scalar in ``params`` (mutated in place, restored)."""
    lo, hi = FD_EPS_RANGE
    if not lo <= eps <= hi:
        raise DataError(f"eps must lie in [{lo}, {hi}], got {eps}")
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=float)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = fn()
            flat[i] = orig - eps
            down = fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        out[name] = g
    return out


def model_finite_difference_grad(model: DualModel, vocab: Vocab, lex: Lexicon,
                                 instances: Sequence[Instance], negatives: Sequence, tau: float,
                                 eps: float = 1e-6) -> dict[str, np.ndarray]:
    def fn():
        return batch_loss_and_grads(model, vocab, lex, instances, negatives, tau, need_grads=False)[0]
    return finite_difference_grad(fn, model.parameters(), eps)


def relative_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> dict[str, float]:
    """Per-tensor ``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    out = {}
    for k in numeric:
        a, n = analytic[k], numeric[k]
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        out[k] = 0.0 if scale < 1e-12 else float(np.linalg.norm(a - n) / scale)
    return out
