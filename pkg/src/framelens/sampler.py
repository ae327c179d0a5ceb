"""Batch assembly and negative-set construction for both training stages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Instance
from .errors import DataError
from .lexicon import Lexicon, candidates_for, siblings_of

CANDIDATE, SIBLING, RANDOM = "candidate", "sibling", "random"
MIN_BATCH = 2


@dataclass(frozen=True)
class Batch:
    instances: tuple[Instance, ...]
    indices: tuple[int, ...]  # positions in the source slice

    def __len__(self) -> int:
        return len(self.instances)


@dataclass(frozen=True)
class NegativeSet:
    ids: tuple[int, ...]
    kind: str
    provenance: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.ids)


def make_batches(data: Sequence[Instance], batch_size: int, seed) -> list[Batch]:
    """Seeded shuffle then sequential chunks; a short trailing chunk of one instance is dropped."""
    if not data:
        raise DataError("cannot batch an empty corpus slice")
    if batch_size < 1:
        raise DataError(f"batch size must be positive, got {batch_size}")
    order = np.random.default_rng(seed).permutation(len(data))
    batches = []
    for lo in range(0, len(order), batch_size):
        chunk = [int(i) for i in order[lo:lo + batch_size]]
        if len(chunk) < min(batch_size, MIN_BATCH):
            continue
        batches.append(Batch(tuple(data[i] for i in chunk), tuple(chunk)))
    return batches


def in_batch_negatives(batch: Batch, i: int) -> NegativeSet:
    """Gold frames of the other batch members, own gold removed, first-occurrence order."""
    if not 0 <= i < len(batch):
        raise DataError(f"batch index {i} out of range")
    own = batch.instances[i].gold
    ids = []
    for j, inst in enumerate(batch.instances):
        if j != i and inst.gold != own and inst.gold not in ids:
            ids.append(inst.gold)
    return NegativeSet(tuple(ids), "in_batch")


def in_candidate_negatives(lex: Lexicon, inst: Instance, n: int = 15, seed=0) -> NegativeSet:
    """Exactly ``n`` hard negatives: other candidates, then siblings, then random frames."""
    if n < 1:
        raise DataError(f"candidate number must be positive, got {n}")
    if len(lex) <= n:
        raise DataError(f"lexicon has {len(lex)} frames; cannot draw {n} negatives besides the gold")
    gold = inst.gold
    ids: list[int] = []
    prov: list[str] = []
    taken = {gold}

    def take(frames, tag):
        for f in frames:
            if len(ids) == n:
                return
            if f not in taken:
                taken.add(f)
                ids.append(f)
                prov.append(tag)

    take(sorted(candidates_for(lex, inst.lu) or ()), CANDIDATE)
    take(siblings_of(lex, gold), SIBLING)
    if len(ids) < n:
        rest = np.array([f for f in range(len(lex)) if f not in taken])
        draw = np.random.default_rng(seed).choice(rest, size=n - len(ids), replace=False)
        take((int(f) for f in draw), RANDOM)
    return NegativeSet(tuple(ids), "in_candidate", tuple(prov))
