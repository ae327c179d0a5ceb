"""Annotated instances, word-level vocabulary and the synthetic dataset generator."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .lexicon import (
    INHERITANCE,
    SEPARATOR,
    LemmaPos,
    Lexicon,
    build_lexicon,
    candidates_for,
    frame_input_text,
)

logger = logging.getLogger(__name__)

SPLITS = ("exemplar", "train", "dev", "test")
MAX_LEN = 64

PAD, UNK, MASK, SEP = 0, 1, 2, 3
RESERVED = ("[PAD]", "[UNK]", "[MASK]", SEPARATOR)


@dataclass(frozen=True)
class Instance:
    tokens: tuple[str, ...]
    target_start: int
    target_end: int
    lu: LemmaPos
    gold: int
    split: str

    @property
    def span(self) -> tuple[int, int]:
        return self.target_start, self.target_end


def make_instance(tokens: Sequence[str], start: int, end: int, lu: LemmaPos, gold: int,
                  split: str, lex: Lexicon) -> Instance:
    tokens = tuple(tokens)
    if not tokens:
        raise DataError("instance has no tokens")
    if len(tokens) > MAX_LEN:
        raise DataError(f"sentence of {len(tokens)} tokens exceeds the {MAX_LEN}-token limit")
    if not 0 <= start <= end < len(tokens):
        raise DataError(f"target span ({start}, {end}) out of range for {len(tokens)} tokens")
    if split not in SPLITS:
        raise DataError(f"unknown split {split!r}")
    if not 0 <= gold < len(lex):
        raise DataError(f"unknown gold frame id {gold}")
    return Instance(tokens, start, end, lu, gold, split)


def load_corpus(path: str | Path, lex: Lexicon) -> list[Instance]:
    """Read ``corpus.jsonl``; errors carry the offending line number."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                lu = LemmaPos(rec["lemma"], rec["pos"])
                inst = make_instance(rec["tokens"], int(rec["target_start"]), int(rec["target_end"]),
                                     lu, lex.frame_id(rec["gold"]), rec["split"], lex)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed line ({exc.msg})") from exc
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            out.append(inst)
    logger.info("loaded %d instances from %s: %s", len(out), path, dict(split_counts(out)))
    return out


def split_counts(corpus: Iterable[Instance]) -> Counter:
    return Counter(inst.split for inst in corpus)


def instance_to_dict(inst: Instance, lex: Lexicon) -> dict:
    return {
        "tokens": list(inst.tokens),
        "target_start": inst.target_start,
        "target_end": inst.target_end,
        "lemma": inst.lu.lemma,
        "pos": inst.lu.pos,
        "gold": lex.frames[inst.gold].name,
        "split": inst.split,
    }


def save_corpus(corpus: Iterable[Instance], lex: Lexicon, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in corpus:
            fh.write(json.dumps(instance_to_dict(inst, lex), ensure_ascii=False) + "\n")


class Vocab:
    """Token <-> id map with reserved ids PAD=0, UNK=1, MASK=2, SEP=3."""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[:len(RESERVED)]) != RESERVED:
            raise DataError("vocabulary must start with the reserved tokens")
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataError("vocabulary contains duplicate tokens")
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index.get(token, UNK)


def _text_pieces(text: str) -> list[str]:
    pieces = []
    for raw in text.split():
        if raw == SEPARATOR:
            pieces.append(SEPARATOR)
        else:
            pieces.extend(p.lower() for p in raw.split("_") if p)
    return pieces


def _pieces(source: str | Sequence[str]) -> list[str]:
    if isinstance(source, str):
        return _text_pieces(source)
    return [SEPARATOR if tok == SEPARATOR else tok.lower() for tok in source]


def build_vocab(corpus: Sequence[Instance], lex: Lexicon) -> Vocab:
    if not corpus:
        raise DataError("empty corpus")
    tokens = list(RESERVED)
    seen = set(tokens)

    def add(pieces):
        for p in pieces:
            if p not in seen:
                seen.add(p)
                tokens.append(p)

    for inst in corpus:
        add(_pieces(inst.tokens))
    for f in range(len(lex)):
        add(_text_pieces(frame_input_text(lex, f)))
    return Vocab(tokens)


def tokenize(source: str | Sequence[str], vocab: Vocab) -> list[int]:
    """Map a text (split on whitespace and ``_``) or a pre-tokenized list to ids."""
    key = source if isinstance(source, str) else tuple(source)
    ids = vocab._cache.get(key)
    if ids is None:
        ids = [vocab.id(p) for p in _pieces(source)]
        if not ids:
            raise DataError("tokenization produced no tokens")
        vocab._cache[key] = ids
    return list(ids)


def detokenize(ids: Sequence[int], vocab: Vocab) -> str:
    return " ".join(vocab.tokens[i] for i in ids)


# --------------------------------------------------------------------------
# synthetic data

@dataclass
class SynthConfig:
    n_families: int = 6
    frames_per_family: int = 4
    lus: int = 40
    instances_per_split: dict = field(
        default_factory=lambda: {"exemplar": 600, "train": 300, "dev": 60, "test": 120})
    seed: int = 7
    # share of instances drawn from an ambiguous lexical unit, per split
    ambiguous_rate: dict = field(
        default_factory=lambda: {"exemplar": 0.3, "train": 0.5, "dev": 0.3, "test": 0.3})
    # probability that an ambiguous target carries its frame-specific cue word
    cue_rate: dict = field(
        default_factory=lambda: {"exemplar": 0.2, "train": 0.9, "dev": 0.9, "test": 0.9})

    def validate(self) -> None:
        if self.n_families < 1 or self.frames_per_family < 1:
            raise DataError("n_families and frames_per_family must be positive")
        if self.n_families * self.frames_per_family < 2:
            raise DataError("synthetic lexicon needs at least 2 frames")
        if self.lus < self.n_families * self.frames_per_family:
            raise DataError("lus must be at least the number of frames (one unambiguous LU per frame)")
        for split, n in self.instances_per_split.items():
            if split not in SPLITS or n < 0:
                raise DataError(f"bad split size {split}={n}")


_ONSETS = "b d f g k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()
_FILLERS = ("the a he she they we it this that some then later again there here "
            "quickly slowly often never always yesterday today").split()
_POS_CHOICES = ("v", "n", "a")


class _WordMint:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used = set(_FILLERS) | {"situation", "in", "which", "with", "of"}

    def __call__(self, syllables: int = 2) -> str:
        while True:
            w = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) for _ in range(syllables))
            if w not in self.used:
                self.used.add(w)
                return w


def generate_synthetic(cfg: SynthConfig | None = None) -> tuple[Lexicon, list[Instance]]:
    """Build a lexicon with an Inheritance forest and a matching split corpus.

    Each family has one root; every other member inherits from it, and when a
    family has three or more frames its first child also inherits into its
    last child (a second parent). Every frame owns one unambiguous lemma and a
    cue word; the remaining lexical units evoke 2-4 frames, alternating
    between within-family and cross-family sets.
    """
    cfg = cfg or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    mint = _WordMint(rng)
    n_fam, per = cfg.n_families, cfg.frames_per_family

    frames, relations, families = [], [], []
    fam_words = []
    for _ in range(n_fam):
        root = mint(2)
        words = [mint(3) for _ in range(3)]
        fam_words.append(words)
        members = []
        for j in range(per):
            name = root.capitalize() if j == 0 else f"{root.capitalize()}_{mint(2)}"
            own = [mint(3) for _ in range(3)]
            definition = (f"a {words[0]} {own[0]} situation in which "
                          f"{words[1]} {own[1]} the {words[2]} {own[2]}")
            members.append(len(frames))
            frames.append((name, definition))
        families.append(members)
        names = [frames[m][0] for m in members]
        for child in names[1:]:
            relations.append((INHERITANCE, names[0], child))
        if per >= 3:
            relations.append((INHERITANCE, names[1], names[-1]))

    n_frames = len(frames)
    family_of = {f: k for k, mem in enumerate(families) for f in mem}
    cue = [mint(2) for _ in range(n_frames)]

    lus = []  # (lemma, pos, frame ids)
    for f in range(n_frames):
        lus.append((mint(2), str(rng.choice(_POS_CHOICES)), (f,)))
    seen_sets = {(f,) for f in range(n_frames)}
    attempts = 0
    while len(lus) < cfg.lus:
        attempts += 1
        if attempts > 10_000:
            raise DataError("cannot draw enough distinct ambiguous lexical units for this config")
        k = int(rng.integers(2, 5))
        within = (len(lus) - n_frames) % 2 == 0 and per >= 2
        if within:
            fam = families[int(rng.integers(n_fam))]
            # polysemy inside a family spans sibling subframes, not the root
            pool = fam[1:] if per >= 3 else fam
        else:
            pool = list(range(n_frames)) if n_fam < 2 else [
                int(rng.choice(families[c])) for c in rng.permutation(n_fam)]
        k = min(k, len(pool))
        if k < 2:
            continue
        chosen = tuple(sorted(int(x) for x in rng.choice(pool, size=k, replace=False)))
        if chosen in seen_sets:
            continue
        seen_sets.add(chosen)
        lus.append((mint(2), str(rng.choice(_POS_CHOICES)), chosen))

    lex = build_lexicon(frames, [(lem, pos, [frames[f][0] for f in fs]) for lem, pos, fs in lus],
                        relations)

    mono = {f: lus[f] for f in range(n_frames)}
    amb_of: dict[int, list[tuple]] = {f: [] for f in range(n_frames)}
    for entry in lus[n_frames:]:
        for f in entry[2]:
            amb_of[f].append(entry)

    corpus: list[Instance] = []
    for split in SPLITS:
        n = cfg.instances_per_split.get(split, 0)
        golds = np.resize(rng.permutation(n_frames), n)
        rng.shuffle(golds)
        amb_rate = cfg.ambiguous_rate.get(split, 0.0)
        cue_rate = cfg.cue_rate.get(split, 0.0)
        for gold in map(int, golds):
            if amb_of[gold] and rng.random() < amb_rate:
                lemma, pos, _ = amb_of[gold][int(rng.integers(len(amb_of[gold])))]
                with_cue = rng.random() < cue_rate
            else:
                lemma, pos, _ = mono[gold]
                with_cue = rng.random() < 0.3
            span = [lemma, cue[gold]] if with_cue else [lemma]
            left = [str(w) for w in rng.choice(_FILLERS, size=int(rng.integers(1, 5)))]
            right = [str(w) for w in rng.choice(_FILLERS, size=int(rng.integers(0, 3)))]
            right.append(fam_words[family_of[gold]][int(rng.integers(3))])
            tokens = left + span + right
            start = len(left)
            corpus.append(make_instance(tokens, start, start + len(span) - 1,
                                        LemmaPos(lemma, pos), gold, split, lex))
    for inst in corpus:
        assert inst.gold in candidates_for(lex, inst.lu)
    return lex, corpus
