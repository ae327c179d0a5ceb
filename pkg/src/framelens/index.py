"""Frozen frame-embedding index with exact cosine ranking and prediction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Instance, Vocab
from .encoder import DualModel, encode_frames, encode_target
from .errors import DataError, NumericError
from .lexicon import Lexicon, candidates_for

WITH_LF = "with_lf"
WITHOUT_LF = "without_lf"


@dataclass(frozen=True)
class FrameEmbeddingIndex:
    matrix: np.ndarray
    norms: np.ndarray
    lexicon: Lexicon

    def __len__(self) -> int:
        return len(self.matrix)


Ranking = list  # list[tuple[int, float]], best first


def index_from_matrix(matrix: np.ndarray, lex: Lexicon) -> FrameEmbeddingIndex:
    matrix = np.array(matrix, dtype=np.float64)
    if matrix.ndim != 2 or len(matrix) != len(lex):
        raise DataError(f"index needs {len(lex)} rows, got shape {matrix.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    bad = np.flatnonzero(~(norms > 0))
    if len(bad):
        raise NumericError(f"frame {lex.frames[bad[0]].name!r} has a zero-norm representation")
    matrix.setflags(write=False)
    norms.setflags(write=False)
    return FrameEmbeddingIndex(matrix, norms, lex)


def build_index(model: DualModel, vocab: Vocab, lex: Lexicon) -> FrameEmbeddingIndex:
    return index_from_matrix(encode_frames(model, vocab, lex), lex)


def scores(idx: FrameEmbeddingIndex, t: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    tn = float(np.sqrt(t @ t))
    if not tn > 0:
        raise NumericError("zero-norm target representation")
    m = idx.matrix if rows is None else idx.matrix[rows]
    n = idx.norms if rows is None else idx.norms[rows]
    # row-wise reduction: identical rows always score identically
    return np.clip((m * t).sum(axis=1) / (n * tn), -1.0, 1.0)


def _order(ids: np.ndarray, s: np.ndarray, k: int) -> Ranking:
    if k < len(s):
        kth = np.partition(s, len(s) - k)[len(s) - k]
        keep = np.flatnonzero(s >= kth)
        ids, s = ids[keep], s[keep]
    order = np.lexsort((ids, -s))[:k]
    return [(int(ids[i]), float(s[i])) for i in order]


def rank_all(idx: FrameEmbeddingIndex, t: np.ndarray, k: int | None = None) -> Ranking:
    """Exact top-``k`` frames by cosine; ties go to the lower frame id."""
    k = len(idx) if k is None else k
    if not 1 <= k <= len(idx):
        raise DataError(f"k must lie in [1, {len(idx)}], got {k}")
    return _order(np.arange(len(idx)), scores(idx, t), k)


def rank_candidates(idx: FrameEmbeddingIndex, t: np.ndarray, cands: Iterable[int]) -> Ranking:
    ids = np.array(sorted(set(cands)), dtype=np.int64)
    if len(ids) == 0:
        raise DataError("empty candidate set")
    if ids[0] < 0 or ids[-1] >= len(idx):
        raise DataError("candidate frame id out of range")
    return _order(ids, scores(idx, t, ids), len(ids))


@dataclass(frozen=True)
class Prediction:
    frame: int
    score: float
    fallback_used: bool
    ranking: Ranking


def predict_from_rep(idx: FrameEmbeddingIndex, t: np.ndarray, inst: Instance, mode: str,
                     k: int = 1) -> Prediction:
    if mode not in (WITH_LF, WITHOUT_LF):
        raise DataError(f"unknown prediction mode {mode!r}")
    k = min(k, len(idx))
    cands = candidates_for(idx.lexicon, inst.lu) if mode == WITH_LF else None
    if cands is None:
        ranking = rank_all(idx, t, k)
        return Prediction(ranking[0][0], ranking[0][1], mode == WITH_LF, ranking)
    ranking = rank_candidates(idx, t, cands)
    return Prediction(ranking[0][0], ranking[0][1], False, ranking[:k])


def predict(model: DualModel, idx: FrameEmbeddingIndex, vocab: Vocab, lex: Lexicon, inst: Instance,
            mode: str = WITH_LF, k: int = 1) -> Prediction:
    """Best frame for ``inst``; with_lf falls back to all frames when the LU is unknown."""
    return predict_from_rep(idx, encode_target(model, vocab, inst), inst, mode, k)


def prediction_record(i: int, pred: Prediction, mode: str, lex: Lexicon) -> dict:
    return {
        "instance_index": i,
        "mode": mode,
        "predicted": lex.frames[pred.frame].name,
        "score": pred.score,
        "fallback_used": pred.fallback_used,
        "top_k": [{"frame": lex.frames[f].name, "score": s} for f, s in pred.ranking],
    }


def write_predictions(records: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
