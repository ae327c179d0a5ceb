"""Evaluation and analysis: Acc w/ lf, R@k w/o lf, Overall, structure and probes."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Instance, Vocab
from .encoder import DualModel, encode_targets
from .errors import DataError
from .index import (
    WITH_LF,
    WITHOUT_LF,
    FrameEmbeddingIndex,
    build_index,
    index_from_matrix,
    predict_from_rep,
    rank_all,
)
from .lexicon import Lexicon, candidates_for
from .objective import cosine

KS = (1, 3, 5)


@dataclass
class EvalResult:
    acc_with_lf: float | None
    r_at: dict[int, float]
    overall: float | None
    acc_ambiguous: float | None
    n_instances: int
    n_fallback: int
    n_ambiguous: int = 0

    def as_percent(self) -> dict:
        pct = lambda x: None if x is None else round(100 * x, 2)  # noqa: E731
        return {
            "acc_with_lf": pct(self.acc_with_lf),
            "r_at": {str(k): pct(v) for k, v in self.r_at.items()},
            "overall": pct(self.overall),
            "acc_ambiguous": pct(self.acc_ambiguous),
            "n_instances": self.n_instances,
            "n_fallback": self.n_fallback,
            "n_ambiguous": self.n_ambiguous,
        }


def overall(acc: float, r1: float) -> float:
    """Harmonic mean of Acc (w/ lf) and R@1 (w/o lf)."""
    if acc < 0 or r1 < 0:
        raise DataError("Acc and R@1 must be non-negative")
    if acc + r1 == 0:
        raise DataError("Overall is undefined when Acc and R@1 are both zero")
    return 2 * acc * r1 / (acc + r1)


def recall_at_k(rankings: Sequence[Sequence[int]], golds: Sequence[int], k: int) -> float:
    """Fraction of rankings (frame ids, best first) holding the gold within the first ``k``."""
    if len(rankings) != len(golds):
        raise DataError("rankings and golds differ in length")
    if not golds:
        raise DataError("no rankings to score")
    if k < 1:
        raise DataError("k must be positive")
    hits = sum(g in [r if isinstance(r, (int, np.integer)) else r[0] for r in rk[:k]]
               for rk, g in zip(rankings, golds))
    return hits / len(golds)


def _eval_reps(idx: FrameEmbeddingIndex, T: np.ndarray, instances: Sequence[Instance],
               ks: Sequence[int] = KS, with_acc: bool = True) -> EvalResult:
    lex = idx.lexicon
    kmax = min(max(ks), len(idx))
    correct, amb_correct, n_amb, n_fallback = 0, 0, 0, 0
    rankings, golds = [], []
    for t, inst in zip(T, instances):
        rankings.append([f for f, _ in rank_all(idx, t, kmax)])
        golds.append(inst.gold)
        if not with_acc:
            continue
        pred = predict_from_rep(idx, t, inst, WITH_LF)
        ok = pred.frame == inst.gold
        correct += ok
        n_fallback += pred.fallback_used
        cands = candidates_for(lex, inst.lu)
        if cands is not None and len(cands) >= 2:
            n_amb += 1
            amb_correct += ok
    r_at = {k: recall_at_k(rankings, golds, min(k, kmax)) for k in ks}
    n = len(instances)
    acc = correct / n if with_acc else None
    ov = None
    if with_acc:
        ov = 0.0 if acc + r_at[1] == 0 else overall(acc, r_at[1])
    return EvalResult(acc, r_at, ov, (amb_correct / n_amb) if n_amb else None, n, n_fallback, n_amb)


def evaluate(model: DualModel, idx: FrameEmbeddingIndex, vocab: Vocab, lex: Lexicon,
             split: Sequence[Instance], masked: bool = False) -> EvalResult:
    """Acc w/ lf (with the ambiguous subset), R@1/3/5 w/o lf and Overall."""
    if not split:
        raise DataError("cannot evaluate an empty split")
    T = encode_targets(model, vocab, split, masked=masked)
    return _eval_reps(idx, T, split)


def masked_evaluate(model: DualModel, idx: FrameEmbeddingIndex, vocab: Vocab, lex: Lexicon,
                    split: Sequence[Instance]) -> tuple[EvalResult, EvalResult, float]:
    """Normal and target-masked results, plus the Acc w/ lf drop."""
    normal = evaluate(model, idx, vocab, lex, split)
    masked = evaluate(model, idx, vocab, lex, split, masked=True)
    return normal, masked, normal.acc_with_lf - masked.acc_with_lf


@dataclass
class CentroidResult:
    result: EvalResult
    missing_frames: list[int]  # kept their definition representation


def centroid_evaluate(model: DualModel, vocab: Vocab, lex: Lexicon, exemplars: Sequence[Instance],
                      test: Sequence[Instance], n_per_frame: int = 10) -> CentroidResult:
    """R@k when each frame is represented by the mean of its first ``n`` exemplar targets."""
    if n_per_frame < 1:
        raise DataError("n_per_frame must be at least 1")
    if not test:
        raise DataError("cannot evaluate an empty split")
    matrix = np.array(build_index(model, vocab, lex).matrix)
    chosen: dict[int, list[Instance]] = {}
    for inst in exemplars:
        bucket = chosen.setdefault(inst.gold, [])
        if len(bucket) < n_per_frame:
            bucket.append(inst)
    missing = [f for f in range(len(lex)) if f not in chosen]
    for f, insts in chosen.items():
        matrix[f] = encode_targets(model, vocab, insts).mean(axis=0)
    idx = index_from_matrix(matrix, lex)
    T = encode_targets(model, vocab, test)
    return CentroidResult(_eval_reps(idx, T, test, with_acc=False), missing)


@dataclass
class PairStat:
    sup: int
    sub: int
    alpha: float
    delta_alpha: float
    ratio: float | None


@dataclass
class StructuralReport:
    pairs: list[PairStat]
    average_ratio: float | None   # over pairs (or frames) with alpha > 0
    mean_delta_alpha: float
    n_used: int
    include_self: bool = True
    aggregate: str = "pairs"


def delta_alpha_report(idx: FrameEmbeddingIndex, lex: Lexicon, include_self: bool = True,
                       aggregate: str = "pairs") -> StructuralReport:
    """Closeness of each subframe to its superframe relative to its mean similarity to all frames.

    ``include_self`` keeps the subframe itself in the all-frames average;
    ``aggregate="frames"`` first averages ratios per subframe.
    """
    if aggregate not in ("pairs", "frames"):
        raise DataError(f"unknown aggregate {aggregate!r}")
    rels = lex.inheritance()
    if not rels:
        raise DataError("lexicon has no Inheritance relations")
    M = idx.matrix
    pairs = []
    for r in rels:
        sims = np.array([cosine(M[r.sub], M[f]) for f in range(len(lex))])
        if not include_self:
            sims = np.delete(sims, r.sub)
        alpha = float(sims.mean())
        delta = cosine(M[r.sub], M[r.sup]) - alpha
        pairs.append(PairStat(r.sup, r.sub, alpha, delta, delta / alpha if alpha != 0 else None))
    usable = [p for p in pairs if p.alpha > 0]
    if aggregate == "pairs":
        ratios = [p.ratio for p in usable]
    else:
        per_frame: dict[int, list[float]] = {}
        for p in usable:
            per_frame.setdefault(p.sub, []).append(p.ratio)
        ratios = [float(np.mean(v)) for _, v in sorted(per_frame.items())]
    avg = float(np.mean(ratios)) if ratios else None
    return StructuralReport(pairs, avg, float(np.mean([p.delta_alpha for p in pairs])), len(ratios),
                            include_self, aggregate)


def write_report(path: str | Path, results: dict, config: dict | None = None) -> None:
    """JSON report of named results (EvalResult, StructuralReport or plain values)."""
    def conv(v):
        if isinstance(v, EvalResult):
            return v.as_percent()
        if isinstance(v, StructuralReport):
            d = asdict(v)
            d.pop("pairs")
            return d
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        return v

    doc = {k: conv(v) for k, v in results.items()}
    if config is not None:
        doc["config"] = config
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_pairs_csv(report: StructuralReport, lex: Lexicon, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sup", "sub", "alpha", "delta_alpha", "ratio"])
        for p in report.pairs:
            w.writerow([lex.frames[p.sup].name, lex.frames[p.sub].name, repr(p.alpha),
                        repr(p.delta_alpha), "" if p.ratio is None else repr(p.ratio)])
