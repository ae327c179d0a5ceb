"""Target and frame encoders plus the lookup-table baselines.

The reference encoder is a per-token affine map with tanh,
``h_i = tanh(W (E[id_i] + P[i]) + b)``. Target representations max-pool the
span rows; frame representations mean-pool the ``name | definition`` rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import MASK, MAX_LEN, Instance, Vocab, tokenize
from .errors import DataError, NumericError
from .lexicon import Lexicon, frame_input_text

MODES = ("dual", "lookup_random", "lookup_definition_init")
PARAM_NAMES = ("E", "P", "W", "b")


@dataclass
class EncoderParams:
    E: np.ndarray
    P: np.ndarray
    W: np.ndarray
    b: np.ndarray

    @property
    def d(self) -> int:
        return self.W.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"E": self.E, "P": self.P, "W": self.W, "b": self.b}

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.E.copy(), self.P.copy(), self.W.copy(), self.b.copy())


@dataclass
class DualModel:
    target: EncoderParams
    frame: EncoderParams
    mode: str = "dual"
    table: np.ndarray | None = None
    shared: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown model mode {self.mode!r}")
        if (self.table is not None) != (self.mode != "dual"):
            raise DataError("a lookup table is required exactly in the lookup modes")

    @property
    def d(self) -> int:
        return self.target.d

    @property
    def frame_encoder(self) -> EncoderParams:
        return self.target if self.shared else self.frame

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays keyed ``target.E`` ... ``frame.b`` or ``table``."""
        out = {f"target.{k}": v for k, v in self.target.arrays().items()}
        if self.mode == "dual":
            if not self.shared:
                out.update({f"frame.{k}": v for k, v in self.frame.arrays().items()})
        else:
            out["table"] = self.table
        return out

    def copy(self) -> "DualModel":
        return DualModel(self.target.copy(), self.frame.copy(), self.mode,
                         None if self.table is None else self.table.copy(), self.shared)


def init_params(vocab_size: int, d: int = 64, seed: int = 0, max_len: int = MAX_LEN) -> EncoderParams:
    if d < 2:
        raise DataError(f"embedding size must be at least 2, got {d}")
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-0.1, 0.1, size=shape)  # noqa: E731
    return EncoderParams(u(vocab_size, d), u(max_len, d), u(d, d), u(d))


def init_model(vocab_size: int, d: int = 64, seed: int = 0, mode: str = "dual",
               n_frames: int | None = None, shared: bool = False, max_len: int = MAX_LEN) -> DualModel:
    """Two independently seeded encoders; lookup modes also get a random table."""
    target = init_params(vocab_size, d, seed, max_len)
    frame = init_params(vocab_size, d, seed + 1, max_len)
    table = None
    if mode != "dual":
        if n_frames is None:
            raise DataError("lookup modes need n_frames")
        table = np.random.default_rng(seed + 2).uniform(-0.1, 0.1, size=(n_frames, d))
    return DualModel(target, frame, mode, table, shared)


def encode_tokens(p: EncoderParams, ids: Sequence[int]) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or len(ids) == 0:
        raise DataError("expected a non-empty id sequence")
    if len(ids) > p.P.shape[0]:
        raise DataError(f"sequence of {len(ids)} tokens exceeds the {p.P.shape[0]}-position limit")
    x = p.E[ids] + p.P[:len(ids)]
    return np.tanh(x @ p.W.T + p.b)


def target_rep(h: np.ndarray, span: tuple[int, int]) -> np.ndarray:
    start, end = span
    if not 0 <= start <= end < len(h):
        raise DataError(f"span ({start}, {end}) out of range for {len(h)} rows")
    return h[start:end + 1].max(axis=0)


def frame_rep(h: np.ndarray) -> np.ndarray:
    if len(h) == 0:
        raise DataError("cannot mean-pool an empty matrix")
    return h.mean(axis=0)


def target_ids(inst: Instance, vocab: Vocab, masked: bool = False) -> list[int]:
    """Sentence ids; with ``masked`` every span token becomes MASK."""
    ids = tokenize(inst.tokens, vocab)
    if masked:
        ids[inst.target_start:inst.target_end + 1] = [MASK] * (inst.target_end - inst.target_start + 1)
    return ids


def frame_ids(lex: Lexicon, vocab: Vocab, f: int, max_len: int = MAX_LEN) -> list[int]:
    # long definitions are cut to fit the position table
    return tokenize(frame_input_text(lex, f), vocab)[:max_len]


def encode_target(m: DualModel, vocab: Vocab, inst: Instance, masked: bool = False) -> np.ndarray:
    h = encode_tokens(m.target, target_ids(inst, vocab, masked))
    return target_rep(h, inst.span)


def _dual_frame(m: DualModel, vocab: Vocab, lex: Lexicon, f: int) -> np.ndarray:
    h = encode_tokens(m.frame_encoder, frame_ids(lex, vocab, f, m.frame_encoder.P.shape[0]))
    return frame_rep(h)


def encode_frame(m: DualModel, vocab: Vocab, lex: Lexicon, f: int) -> np.ndarray:
    lex.frame(f)  # validates the id
    v = m.table[f].copy() if m.mode != "dual" else _dual_frame(m, vocab, lex, f)
    if not np.linalg.norm(v) > 0:
        raise NumericError(f"frame {lex.frames[f].name!r} has a zero-norm representation")
    return v


def init_table_from_definitions(m: DualModel, vocab: Vocab, lex: Lexicon) -> DualModel:
    """Fill the lookup table from the (frozen) frame encoder's definition encodings."""
    if m.mode != "lookup_definition_init":
        raise DataError("table initialisation needs mode 'lookup_definition_init'")
    rows = []
    for f in range(len(lex)):
        v = _dual_frame(m, vocab, lex, f)
        if not np.linalg.norm(v) > 0:
            raise NumericError(f"frame {lex.frames[f].name!r} has a zero-norm definition encoding")
        rows.append(v)
    m.table = np.stack(rows)
    return m


# --------------------------------------------------------------------------
# batched forward pass shared by training, indexing and evaluation

@dataclass
class PaddedForward:
    ids: np.ndarray      # (B, L) int
    mask: np.ndarray     # (B, L) bool
    x: np.ndarray        # (B, L, d) embedding + position
    h: np.ndarray        # (B, L, d)
    lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        self.lengths = self.mask.sum(axis=1)


def forward_padded(p: EncoderParams, seqs: Sequence[Sequence[int]]) -> PaddedForward:
    lengths = [len(s) for s in seqs]
    if not seqs or min(lengths) == 0:
        raise DataError("expected non-empty id sequences")
    L = max(lengths)
    if L > p.P.shape[0]:
        raise DataError(f"sequence of {L} tokens exceeds the {p.P.shape[0]}-position limit")
    ids = np.zeros((len(seqs), L), dtype=np.int64)
    mask = np.zeros((len(seqs), L), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    x = p.E[ids] + p.P[:L]
    h = np.tanh(x @ p.W.T + p.b)
    return PaddedForward(ids, mask, x, h)


def backward_padded(p: EncoderParams, fw: PaddedForward, dh: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the encoder parameters given ``dL/dh`` on the padded rows."""
    dz = dh * (1.0 - fw.h ** 2) * fw.mask[..., None]
    d = p.d
    dz2 = dz.reshape(-1, d)
    grads = {
        "W": dz2.T @ fw.x.reshape(-1, d),
        "b": dz2.sum(axis=0),
    }
    dx = dz @ p.W
    dE = np.zeros_like(p.E)
    np.add.at(dE, fw.ids[fw.mask], dx[fw.mask])
    dP = np.zeros_like(p.P)
    dP[:dx.shape[1]] = dx.sum(axis=0)
    grads["E"] = dE
    grads["P"] = dP
    return grads


def span_mask(starts: np.ndarray, ends: np.ndarray, L: int) -> np.ndarray:
    pos = np.arange(L)
    return (pos[None, :] >= starts[:, None]) & (pos[None, :] <= ends[:, None])


def max_pool(h: np.ndarray, smask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Masked max over rows; argmax ties resolve to the lowest row."""
    hm = np.where(smask[..., None], h, -np.inf)
    arg = hm.argmax(axis=1)
    return np.take_along_axis(h, arg[:, None, :], axis=1)[:, 0, :], arg


def mean_pool(h: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return (h * mask[..., None]).sum(axis=1) / mask.sum(axis=1)[:, None]


def encode_targets(m: DualModel, vocab: Vocab, instances: Sequence[Instance],
                   masked: bool = False) -> np.ndarray:
    fw = forward_padded(m.target, [target_ids(i, vocab, masked) for i in instances])
    starts = np.array([i.target_start for i in instances])
    ends = np.array([i.target_end for i in instances])
    t, _ = max_pool(fw.h, span_mask(starts, ends, fw.h.shape[1]))
    return t


def encode_frames(m: DualModel, vocab: Vocab, lex: Lexicon, frames: Sequence[int] | None = None) -> np.ndarray:
    frames = list(range(len(lex))) if frames is None else list(frames)
    if m.mode != "dual":
        return m.table[frames].copy()
    enc = m.frame_encoder
    fw = forward_padded(enc, [frame_ids(lex, vocab, f, enc.P.shape[0]) for f in frames])
    return mean_pool(fw.h, fw.mask)
