import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framelens.corpus import make_instance
from framelens.encoder import init_model
from framelens.errors import DataError
from framelens.index import build_index, index_from_matrix
from framelens.lexicon import LemmaPos, build_lexicon
from framelens.metrics import (
    EvalResult,
    centroid_evaluate,
    delta_alpha_report,
    evaluate,
    masked_evaluate,
    overall,
    recall_at_k,
    write_pairs_csv,
    write_report,
)

# Acc / R@1 / Overall rows of the published comparison table
TABLE_ROWS = [(92.64, 87.34, 89.91), (92.40, 85.81, 88.98), (91.06, 86.52, 88.73), (88.60, 78.48, 83.23)]


@pytest.mark.parametrize("acc, r1, expected", TABLE_ROWS)
def test_overall_table_rows(acc, r1, expected):
    assert abs(overall(acc, r1) - expected) <= 0.01


def test_overall_edges():
    assert overall(0.7, 0.7) == pytest.approx(0.7)
    assert overall(100, 1e-9) < 1e-8
    with pytest.raises(DataError):
        overall(0, 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_overall_bounds(a, b):
    if a + b == 0:
        return
    o = overall(a, b)
    assert min(a, b) - 1e-12 <= o <= max(a, b) + 1e-12
    assert o == overall(b, a)


def test_recall_at_k():
    assert recall_at_k([[3, 1, 2, 0, 4]], [0], 1) == 0
    assert recall_at_k([[3, 1, 2, 0, 4]], [0], 3) == 0
    assert recall_at_k([[3, 1, 2, 0, 4]], [0], 5) == 1
    ranks = [[0, 1, 2], [1, 0, 2], [2, 1, 0], [1, 2, 3], [3, 4, 5]]
    assert recall_at_k(ranks, [0, 0, 0, 0, 0], 3) == pytest.approx(0.6)
    assert recall_at_k([[1, 2], [2, 1]], [1, 2], 1) == 1.0
    with pytest.raises(DataError):
        recall_at_k([[1]], [1, 2], 1)


def abc_lexicon(relations):
    return build_lexicon([("A", "a"), ("B", "b"), ("C", "c")], [], relations)


def test_delta_alpha_fixture():
    lex = abc_lexicon([("Inheritance", "A", "B")])
    idx = index_from_matrix(np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]), lex)
    rep = delta_alpha_report(idx, lex)
    p = rep.pairs[0]
    assert abs(p.alpha - 0.8) <= 1e-9 and abs(p.delta_alpha + 0.2) <= 1e-9 and abs(p.ratio + 0.25) <= 1e-9
    assert abs(rep.average_ratio + 0.25) <= 1e-9


def test_delta_alpha_identical_sub():
    lex = abc_lexicon([("Inheritance", "A", "B")])
    idx = index_from_matrix(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), lex)
    p = delta_alpha_report(idx, lex).pairs[0]
    assert p.alpha == pytest.approx(2 / 3) and p.delta_alpha == pytest.approx(1 / 3)
    assert p.ratio == pytest.approx(0.5)
    # without the subframe itself: alpha = (1 + 0)/2
    q = delta_alpha_report(idx, lex, include_self=False).pairs[0]
    assert q.alpha == pytest.approx(0.5) and q.delta_alpha == pytest.approx(0.5)


def test_delta_alpha_filters_nonpositive_alpha():
    lex = abc_lexicon([("Inheritance", "A", "B"), ("Inheritance", "C", "B"), ("Inheritance", "A", "C")])
    idx = index_from_matrix(np.array([[1.0, 0.0], [0.6, 0.8], [-1.0, -1.0]]), lex)
    rep = delta_alpha_report(idx, lex)
    assert len(rep.pairs) == 3
    assert rep.n_used == sum(p.alpha > 0 for p in rep.pairs) < 3
    frames = delta_alpha_report(idx, lex, aggregate="frames")
    assert frames.n_used <= rep.n_used
    with pytest.raises(DataError):
        delta_alpha_report(idx, lex, aggregate="nope")
    with pytest.raises(DataError):
        delta_alpha_report(idx, abc_lexicon([]))


def test_identical_rows():
    lex = abc_lexicon([("Inheritance", "A", "B"), ("Inheritance", "A", "C")])
    idx = index_from_matrix(np.ones((3, 4)), lex)
    for p in delta_alpha_report(idx, lex).pairs:
        assert p.alpha == pytest.approx(1) and p.delta_alpha == pytest.approx(0, abs=1e-12)
        assert p.ratio == pytest.approx(0, abs=1e-12)


def test_evaluate_shapes(synth):
    lex, corpus, vocab = synth
    test = [i for i in corpus if i.split == "test"]
    m = init_model(len(vocab), 16, seed=0)
    idx = build_index(m, vocab, lex)
    res = evaluate(m, idx, vocab, lex, test)
    assert res.r_at[1] <= res.r_at[3] <= res.r_at[5]
    assert res.n_instances == 120 and res.n_fallback == 0
    from framelens.lexicon import candidates_for
    assert res.n_ambiguous == sum(len(candidates_for(lex, i.lu)) >= 2 for i in test)
    assert res.overall == pytest.approx(overall(res.acc_with_lf, res.r_at[1]))
    assert res.acc_with_lf >= res.r_at[1]
    pct = res.as_percent()
    assert set(pct["r_at"]) == {"1", "3", "5"} and pct["acc_with_lf"] == round(100 * res.acc_with_lf, 2)
    with pytest.raises(DataError):
        evaluate(m, idx, vocab, lex, [])


def test_masked_untrained(synth):
    lex, corpus, vocab = synth
    test = [i for i in corpus if i.split == "test"]
    m = init_model(len(vocab), 16, seed=0)
    normal, masked, delta = masked_evaluate(m, build_index(m, vocab, lex), vocab, lex, test)
    assert delta == pytest.approx(normal.acc_with_lf - masked.acc_with_lf)
    assert isinstance(masked, EvalResult)


def test_centroid_identity():
    lex = build_lexicon([("A", "alpha"), ("B", "beta"), ("C", "gamma")], [])
    sents = [(["red", "apple"], "A"), (["blue", "sky"], "B"), (["green", "grass"], "C")]
    ex = [make_instance(t, 1, 1, LemmaPos(t[1], "n"), lex.frame_id(f), "exemplar", lex) for t, f in sents]
    test = [make_instance(t, 1, 1, LemmaPos(t[1], "n"), lex.frame_id(f), "test", lex) for t, f in sents]
    from framelens.corpus import build_vocab
    vocab = build_vocab(ex, lex)
    m = init_model(len(vocab), 16, seed=1)
    res = centroid_evaluate(m, vocab, lex, ex, test, n_per_frame=1)
    assert res.result.r_at[1] == 1.0 and res.missing_frames == []
    assert res.result.acc_with_lf is None
    partial = centroid_evaluate(m, vocab, lex, ex[:2], test, n_per_frame=1)
    assert partial.missing_frames == [2]
    with pytest.raises(DataError):
        centroid_evaluate(m, vocab, lex, ex, test, n_per_frame=0)


def test_writers(tmp_path):
    lex = abc_lexicon([("Inheritance", "A", "B")])
    idx = index_from_matrix(np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]), lex)
    rep = delta_alpha_report(idx, lex)
    res = EvalResult(0.5, {1: 0.25, 3: 0.5, 5: 1.0}, overall(0.5, 0.25), None, 4, 0)
    write_report(tmp_path / "r.json", {"test": res, "structural": rep}, {"seed": 1})
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["test"]["overall"] == 33.33 and doc["config"] == {"seed": 1}
    assert doc["structural"]["average_ratio"] == pytest.approx(-0.25)
    write_pairs_csv(rep, lex, tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["sup", "sub", "alpha", "delta_alpha", "ratio"]
    assert rows[1][:2] == ["A", "B"] and float(rows[1][4]) == pytest.approx(-0.25)
