"""Analytic-vs-finite-difference gradient suite over small seeded fixtures."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .corpus import SynthConfig, build_vocab, generate_synthetic
from .encoder import init_model, init_table_from_definitions
from .objective import (
    GRAD_RTOL,
    IN_BATCH,
    IN_CANDIDATE,
    batch_loss_and_grads,
    model_finite_difference_grad,
    relative_error,
)
from .sampler import Batch, in_batch_negatives, in_candidate_negatives

TAUS = {IN_BATCH: 0.07, IN_CANDIDATE: 1.0}


@dataclass
class GradcheckCase:
    seed: int
    mode: str
    objective: str
    loss: float
    errors: dict[str, float]

    @property
    def max_error(self) -> float:
        return max(self.errors.values())


def fixture(seed: int, batch_size: int = 4):
    """Six-frame lexicon, small vocabulary and one training batch."""
    cfg = SynthConfig(n_families=2, frames_per_family=3, lus=8, seed=seed,
                      instances_per_split={"train": batch_size})
    lex, corpus = generate_synthetic(cfg)
    vocab = build_vocab(corpus, lex)
    return lex, vocab, Batch(tuple(corpus), tuple(range(len(corpus))))


def run_case(seed: int, mode: str, objective: str, d: int = 8, batch_size: int = 4, n: int = 5,
             eps: float = 1e-6, max_len: int = 16) -> GradcheckCase:
    lex, vocab, batch = fixture(seed, batch_size)
    model = init_model(len(vocab), d, seed, mode=mode, n_frames=len(lex), max_len=max_len)
    if mode == "lookup_definition_init":
        init_table_from_definitions(model, vocab, lex)
    if objective == IN_BATCH:
        negs = [in_batch_negatives(batch, i) for i in range(len(batch))]
    else:
        negs = [in_candidate_negatives(lex, inst, n, [seed, i]) for i, inst in enumerate(batch.instances)]
    tau = TAUS[objective]
    loss, analytic = batch_loss_and_grads(model, vocab, lex, batch.instances, negs, tau)
    numeric = model_finite_difference_grad(model, vocab, lex, batch.instances, negs, tau, eps)
    return GradcheckCase(seed, mode, objective, loss, relative_error(analytic, numeric))


def run_suite(seeds=range(1, 11), modes=("dual", "lookup_random"),
              objectives=(IN_BATCH, IN_CANDIDATE), **kw):
    """Every (seed, mode, objective) combination; returns cases and elapsed seconds."""
    start = time.perf_counter()
    cases = [run_case(s, m, o, **kw) for s in seeds for m in modes for o in objectives]
    return cases, time.perf_counter() - start


def passed(cases, rtol: float = GRAD_RTOL) -> bool:
    return all(c.max_error <= rtol for c in cases)
