"""Acceptance criteria 1-9, one pass/fail line each on the terminal."""

import json
import time

import numpy as np
import pytest
from _fixtures import overfit_fixture

from framelens.corpus import SynthConfig, build_vocab, generate_synthetic, make_instance
from framelens.encoder import encode_targets, init_model
from framelens.gradcheck import run_suite
from framelens.index import WITH_LF, WITHOUT_LF, build_index, index_from_matrix, predict_from_rep, rank_all, rank_candidates
from framelens.lexicon import LemmaPos, build_lexicon, candidates_for
from framelens.metrics import delta_alpha_report, evaluate, overall, write_report
from framelens.objective import IN_BATCH
from framelens.sampler import CANDIDATE, RANDOM, SIBLING, in_candidate_negatives
from framelens.trainer import STAGE1, STAGE2, StageConfig, load_checkpoint, train_coarse_to_fine, train_stage


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def test_criterion_1_gradient_oracle(report):
    cases, elapsed = run_suite()
    worst = max(c.max_error for c in cases)
    seeds = {c.seed for c in cases}
    modes = {c.mode for c in cases}
    covered = {"target.E", "frame.E", "table"} <= set().union(*(c.errors for c in cases))
    ok = worst <= 1e-4 and len(seeds) >= 10 and "lookup_random" in modes and covered and elapsed < 60
    report(1, ok, f"max rel err {worst:.2e} over {len(cases)} cases, {elapsed:.1f}s")


def test_criterion_2_published_overall(report):
    rows = [(92.64, 87.34, 89.91), (92.40, 85.81, 88.98), (91.06, 86.52, 88.73), (88.60, 78.48, 83.23)]
    errs = [abs(overall(a, r) - o) for a, r, o in rows]
    report(2, max(errs) <= 0.01, f"max deviation {max(errs):.4f} over {len(rows)} rows")


def _brute(M, t, ids):
    tn = float(np.sqrt(sum(x * x for x in t)))
    keyed = sorted((-(sum(a * b for a, b in zip(M[f], t)) / (np.sqrt(sum(a * a for a in M[f])) * tn)), f)
                   for f in ids)
    return [f for _, f in keyed]


def test_criterion_3_ranking_oracle(report):
    mismatches = ties = 0
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        n, d = int(rng.integers(2, 50)), int(rng.integers(2, 10))
        M = rng.normal(size=(n, d))
        for _ in range(int(rng.integers(1, 4))):
            M[rng.integers(n)] = M[rng.integers(n)]
        ties += len({tuple(r) for r in M}) < n
        lex = build_lexicon([(f"F{i}", "x") for i in range(n)], [])
        idx = index_from_matrix(M, lex)
        t = rng.normal(size=d)
        k = int(rng.integers(1, n + 1))
        full = _brute(M.tolist(), t.tolist(), range(n))
        cands = sorted(set(rng.integers(0, n, size=int(rng.integers(1, n + 1))).tolist()))
        mismatches += [f for f, _ in rank_all(idx, t, k)] != full[:k]
        mismatches += [f for f, _ in rank_candidates(idx, t, cands)] != _brute(M.tolist(), t.tolist(), cands)
    report(3, mismatches == 0 and ties > 0, f"{mismatches} mismatches over 200 cases, {ties} with tied rows")


def receiving_fixture():
    frames = [(n, f"{n} definition") for n in
              ("Getting", "Receiving", "Amassing", "Commerce_buy", "Commerce_collect", "Taking", "Borrowing")]
    rels = [("Inheritance", "Getting", c) for c in
            ("Receiving", "Amassing", "Commerce_buy", "Commerce_collect", "Taking")]
    lex = build_lexicon(frames, [("receive", "v", ["Receiving", "Getting"])], rels)
    inst = make_instance(["they", "received", "gifts"], 1, 1, LemmaPos("receive", "v"),
                         lex.frame_id("Receiving"), "train", lex)
    return lex, inst


def sampler_contract():
    lex, corpus = generate_synthetic(SynthConfig(seed=7))
    rank = {CANDIDATE: 0, SIBLING: 1, RANDOM: 2}
    bad, dump = 0, []
    for k, inst in enumerate(corpus[:1000]):
        neg = in_candidate_negatives(lex, inst, 15, seed=[42, k])
        order = [rank[p] for p in neg.provenance]
        bad += not (len(neg) == 15 and inst.gold not in neg.ids and len(set(neg.ids)) == 15
                    and order == sorted(order))
        dump.append([list(neg.ids), list(neg.provenance)])
    tlex, tinst = receiving_fixture()
    names = [tlex.frames[f].name for f in in_candidate_negatives(tlex, tinst, 5, seed=0).ids]
    return bad, names, json.dumps(dump).encode()


def test_criterion_4_sampler_contract(report):
    bad, names, _ = sampler_contract()
    want = ["Getting", "Amassing", "Commerce_buy", "Commerce_collect", "Taking"]
    report(4, bad == 0 and names == want, f"{bad} violations over 1000 instances; fixture {names}")


def curriculum(out_dir):
    """Seed-7 synthetic data, desk defaults, both stages; returns summary numbers."""
    start = time.perf_counter()
    lex, corpus = generate_synthetic(SynthConfig(seed=7))
    vocab = build_vocab(corpus, lex)
    test = [i for i in corpus if i.split == "test"]
    model = init_model(len(vocab), 64, seed=42)
    model, (r1, r2) = train_coarse_to_fine(model, vocab, lex, corpus, STAGE1, STAGE2, out_dir)
    stage1 = load_checkpoint(out_dir / "stage1.json").model
    e1 = evaluate(stage1, build_index(stage1, vocab, lex), vocab, lex, test)
    idx2 = build_index(model, vocab, lex)
    e2 = evaluate(model, idx2, vocab, lex, test)
    structure = delta_alpha_report(idx2, lex)
    write_report(out_dir / "report.json", {"stage1": e1, "stage2": e2, "structure": structure,
                                           "train": {"stage1": r1.to_dict(), "stage2": r2.to_dict()}})
    return {"r1_stage1": e1.r_at[1], "acc_stage1": e1.acc_with_lf, "acc_stage2": e2.acc_with_lf,
            "mean_delta_alpha": structure.mean_delta_alpha, "average_ratio": structure.average_ratio,
            "seconds": time.perf_counter() - start}


@pytest.fixture(scope="module")
def curriculum_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("curriculum")
    return out, curriculum(out)


def test_criterion_5_curriculum(report, curriculum_run):
    _, s = curriculum_run
    ok = s["r1_stage1"] >= 0.80 and s["acc_stage2"] > s["acc_stage1"] and s["seconds"] < 300
    report(5, ok, f"stage-1 R@1 {s['r1_stage1']:.3f}, Acc {s['acc_stage1']:.3f} -> {s['acc_stage2']:.3f}, "
                  f"{s['seconds']:.1f}s")


def test_criterion_6_filtering_monotonicity(report):
    violations = 0
    for seed in range(50):
        cfg = SynthConfig(n_families=3, frames_per_family=3, lus=12, seed=seed,
                          instances_per_split={"test": 40})
        lex, corpus = generate_synthetic(cfg)
        assert all(i.gold in candidates_for(lex, i.lu) for i in corpus)
        vocab = build_vocab(corpus, lex)
        model = init_model(len(vocab), 8, seed=seed)
        idx = build_index(model, vocab, lex)
        T = encode_targets(model, vocab, corpus)
        for t, inst in zip(T, corpus):
            plain = predict_from_rep(idx, t, inst, WITHOUT_LF).frame == inst.gold
            filtered = predict_from_rep(idx, t, inst, WITH_LF).frame == inst.gold
            violations += plain and not filtered
        res = evaluate(model, idx, vocab, lex, corpus)
        violations += res.acc_with_lf < res.r_at[1]
    report(6, violations == 0, f"{violations} violations over 50 random models and corpora")


def test_criterion_7_structural_metric(report, curriculum_run):
    lex = build_lexicon([("A", "a"), ("B", "b"), ("C", "c")], [], [("Inheritance", "A", "B")])
    idx = index_from_matrix(np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]), lex)
    p = delta_alpha_report(idx, lex).pairs[0]
    fixture_ok = abs(p.alpha - 0.8) <= 1e-9 and abs(p.delta_alpha + 0.2) <= 1e-9 and abs(p.ratio + 0.25) <= 1e-9
    _, s = curriculum_run
    ok = fixture_ok and s["mean_delta_alpha"] > 0
    report(7, ok, f"fixture alpha {p.alpha:.3f} delta {p.delta_alpha:.3f} ratio {p.ratio:.3f}; "
                  f"trained mean delta_alpha {s['mean_delta_alpha']:.4f}, average ratio {s['average_ratio']:.4f}")


def test_criterion_8_overfit(report):
    lex, corpus, vocab = overfit_fixture()
    model = init_model(len(vocab), 64, seed=42)
    cfg = StageConfig(IN_BATCH, "exemplar", batch_size=8, tau=0.07, epochs=500)
    _, rep, _ = train_stage(model, vocab, lex, corpus, cfg)
    below = [i for i, v in enumerate(rep.epoch_losses) if v < 0.1]
    ok = rep.steps <= 500 and bool(below) and rep.epoch_losses[-1] < 0.1
    report(8, ok, f"{len(lex)} frames, {len(corpus)} instances, loss < 0.1 from step {below[0] + 1 if below else None}, "
                  f"final {rep.epoch_losses[-1]:.2e} after {rep.steps} steps")


def test_criterion_9_determinism(report, curriculum_run, tmp_path):
    first, _ = curriculum_run
    curriculum(tmp_path)
    same = all((first / n).read_bytes() == (tmp_path / n).read_bytes()
               for n in ("stage1.json", "stage2.json", "report.json"))
    same = same and sampler_contract()[2] == sampler_contract()[2]
    report(9, same, "checkpoints, reports and negative sets byte-identical across reruns")
