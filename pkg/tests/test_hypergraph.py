import numpy as np
import pytest

from conftest import fd_gradient, naive_matmul
from heal import hypergraph as hg
from heal.errors import ShapeError
from heal.tensor import Tape


def _pipeline(tape, h, w, u):
    inc = hg.learn_incidence(h, w)
    r = hg.hyperedge_embeddings(inc, h, u)
    return inc, r, hg.update_nodes(inc, r)


def test_identity_embeddings_give_weight_rows(rng):
    tape = Tape()
    w = rng.standard_normal((4, 3))
    inc = hg.learn_incidence(tape.const(np.eye(4)), tape.const(w))
    assert np.array_equal(inc.scores.value, w)


def test_zero_embeddings_give_empty_sets(rng):
    tape = Tape()
    inc = hg.learn_incidence(tape.const(np.zeros((5, 4))), tape.const(rng.standard_normal((4, 3))))
    assert not inc.scores.value.any()
    assert inc.members == [frozenset()] * 3


def test_incidence_matches_naive_product(rng):
    tape = Tape()
    h, w = rng.standard_normal((5, 4)), rng.standard_normal((4, 6))
    inc = hg.learn_incidence(tape.const(h), tape.const(w))
    assert np.allclose(inc.scores.value, naive_matmul(h.tolist(), w.tolist()), atol=1e-14, rtol=0)


def test_incidence_shape_error(rng):
    tape = Tape()
    with pytest.raises(ShapeError):
        hg.learn_incidence(tape.const(np.ones((3, 4))), tape.const(np.ones((5, 2))))


def test_binarize_invariant(rng):
    scores = rng.standard_normal((9, 5))
    scores[2, 1] = 0.0
    sets = hg.binarize(scores, 0.0)
    for j, s in enumerate(sets):
        assert s == {v for v in range(9) if scores[v, j] > 0}
    assert 2 not in sets[1]
    assert hg.binarize(scores, 0.5) == [frozenset(v for v in range(9) if scores[v, j] > 0.5) for j in range(5)]


def test_zero_mixer_leaves_residual(rng):
    tape = Tape()
    h, w = rng.standard_normal((6, 4)), rng.standard_normal((4, 3))
    inc, r, _ = _pipeline(tape, tape.const(h), tape.const(w), tape.const(np.zeros((3, 3))))
    assert np.allclose(r.value, (h @ w).T @ h, atol=1e-14, rtol=0)


def test_zero_incidence_gives_zero_hyperedges(rng):
    tape = Tape()
    h = rng.standard_normal((6, 4))
    _, r, s = _pipeline(tape, tape.const(h), tape.const(np.zeros((4, 3))), tape.const(rng.standard_normal((3, 3))))
    assert not r.value.any() and not s.value.any()


def _scalar_oracle(h, w, u):
    n, d = len(h), len(h[0])
    k = len(w[0])
    lam = [[sum(h[v][a] * w[a][j] for a in range(d)) for j in range(k)] for v in range(n)]
    pooled = [[sum(lam[v][j] * h[v][c] for v in range(n)) for c in range(d)] for j in range(k)]
    r = [[max(0.0, sum(u[j][i] * pooled[i][c] for i in range(k))) + pooled[j][c] for c in range(d)] for j in range(k)]
    s = [[sum(lam[v][j] * r[j][c] for j in range(k)) for c in range(d)] for v in range(n)]
    return np.array(lam), np.array(r), np.array(s)


def test_three_node_two_hyperedge_case():
    h = [[1.0, -0.5], [0.25, 2.0], [-1.0, 0.75]]
    w = [[0.5, -1.0], [1.5, 0.25]]
    u = [[0.3, -0.7], [1.1, 0.4]]
    tape = Tape()
    inc, r, s = _pipeline(tape, tape.const(h), tape.const(w), tape.const(u))
    lam, r_ref, s_ref = _scalar_oracle(h, w, u)
    assert np.allclose(inc.scores.value, lam, atol=1e-14, rtol=0)
    assert np.allclose(r.value, r_ref, atol=1e-14, rtol=0)
    assert np.allclose(s.value, s_ref, atol=1e-14, rtol=0)


def test_random_update_matches_naive_product(rng):
    tape = Tape()
    h, w, u = rng.standard_normal((7, 4)), rng.standard_normal((4, 3)), rng.standard_normal((3, 3))
    inc, r, s = _pipeline(tape, tape.const(h), tape.const(w), tape.const(u))
    assert np.allclose(s.value, naive_matmul(inc.scores.value.tolist(), r.value.tolist()), atol=1e-13, rtol=0)


def test_one_hot_incidence_selects_rows(rng):
    tape = Tape()
    lam = np.zeros((4, 3))
    lam[[0, 1, 2, 3], [2, 0, 2, 1]] = 1.0
    inc = hg.HypergraphIncidence(tape.const(lam))
    r = rng.standard_normal((3, 5))
    s = hg.update_nodes(inc, tape.const(r)).value
    assert np.array_equal(s, r[[2, 0, 2, 1]])
    assert not hg.update_nodes(inc, tape.const(np.zeros((3, 5)))).value.any()


def test_update_shape_error():
    tape = Tape()
    inc = hg.HypergraphIncidence(tape.const(np.ones((4, 3))))
    with pytest.raises(ShapeError):
        hg.update_nodes(inc, tape.const(np.ones((2, 5))))
    with pytest.raises(ShapeError):
        hg.hyperedge_embeddings(inc, tape.const(np.ones((4, 2))), tape.const(np.ones((2, 2))))


def test_readout_hyper():
    tape = Tape()
    assert np.array_equal(hg.readout_hyper(tape.const(np.eye(2))).value, [[1, 1]])
    assert np.array_equal(hg.readout_hyper(tape.const([[2, 3]])).value, [[2, 3]])


def test_permutation_behaviour(rng):
    h, w, u = rng.standard_normal((8, 4)), rng.standard_normal((4, 5)), rng.standard_normal((5, 5))
    perm = rng.permutation(8)
    hp = np.empty_like(h)
    hp[perm] = h
    tape = Tape()
    inc, r, s = _pipeline(tape, tape.const(h), tape.const(w), tape.const(u))
    inc_p, r_p, s_p = _pipeline(tape, tape.const(hp), tape.const(w), tape.const(u))
    assert np.allclose(inc_p.scores.value[perm], inc.scores.value, atol=1e-12, rtol=0)
    assert inc_p.members == [frozenset(int(perm[v]) for v in m) for m in inc.members]
    assert np.allclose(r_p.value, r.value, atol=1e-12, rtol=0)
    assert np.allclose(s_p.value.sum(axis=0), s.value.sum(axis=0), atol=1e-12, rtol=0)


@pytest.mark.parametrize("target", ["w", "u"])
def test_readout_gradients_match_finite_differences(rng, target):
    h = rng.standard_normal((6, 4))
    vals = {"w": rng.uniform(-1, 1, (4, 3)), "u": rng.uniform(-1, 1, (3, 3))}
    probe = rng.standard_normal((4, 1))

    def loss(tape, w, u):
        _, _, s = _pipeline(tape, tape.const(h), w, u)
        return hg.readout_hyper(s) @ tape.const(probe)

    tape = Tape()
    params = {k: tape.param(k, v) for k, v in vals.items()}
    g = tape.backward(loss(tape, params["w"], params["u"]))[target]

    def f(x):
        t = Tape()
        args = {k: t.const(x if k == target else v) for k, v in vals.items()}
        return float(loss(t, args["w"], args["u"]).value[0, 0])

    fd = fd_gradient(f, vals[target])
    rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
    assert rel.max() < 1e-4
