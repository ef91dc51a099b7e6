import itertools
import math

import numpy as np
import pytest
import sympy as sp

from structattn.oracle import compare_gradients, enumerate_projective_trees, finite_diff_grad
from structattn.tree_crf import (
    TreePotentials, eisner_viterbi, heads_to_matrix, inside_outside, inside_outside_backprop,
    validate_projective_tree,
)


def random_tree(rng, n, scale=1.0):
    return TreePotentials(rng.uniform(-scale, scale, (n, n)))


def tree_loss(g):
    return lambda th: float(np.sum(inside_outside(TreePotentials(th))[1].p * g))


def test_two_positions():
    _, marg = inside_outside(TreePotentials(np.array([[0.0, 0.3], [-1.0, 0.0]])))
    assert marg.edge(1, 2) == pytest.approx(1.0, abs=1e-12)
    assert marg.p[1, 0] == 0.0


def test_three_positions_uniform():
    tables, marg = inside_outside(TreePotentials(np.zeros((3, 3))))
    assert marg.edge(1, 2) == pytest.approx(2 / 3, abs=1e-12)
    assert marg.edge(3, 2) == pytest.approx(1 / 3, abs=1e-12)
    assert marg.edge(1, 3) == pytest.approx(2 / 3, abs=1e-12)
    assert marg.edge(2, 3) == pytest.approx(1 / 3, abs=1e-12)
    assert marg.log_partition == pytest.approx(math.log(3), abs=1e-12)
    assert tables.log_partition == marg.log_partition


def test_matches_enumeration(rng):
    for n in range(2, 8):
        for _ in range(5):
            pot = random_tree(rng, n)
            _, marg = inside_outside(pot)
            ref = enumerate_projective_trees(pot)
            assert marg.log_partition == pytest.approx(ref.log_partition, abs=1e-9)
            assert np.abs(marg.p - ref.p).max() < 1e-9


def test_marginal_invariants(rng):
    for n in range(2, 13):
        pot = random_tree(rng, n, 4.0)
        _, marg = inside_outside(pot)
        assert np.allclose(marg.p[:, 1:].sum(axis=0), 1.0, atol=1e-9)
        assert np.all(marg.p[:, 0] == 0.0)
        assert np.all(np.diag(marg.p) == 0.0)
        assert marg.p.min() >= 0 and marg.p.max() <= 1 + 1e-12


def test_shift_invariance(rng):
    pot = random_tree(rng, 6)
    _, m1 = inside_outside(pot)
    _, m2 = inside_outside(TreePotentials(pot.theta - 1.3))
    assert np.abs(m1.p - m2.p).max() < 1e-9
    assert m2.log_partition - m1.log_partition == pytest.approx(-1.3 * 5, abs=1e-9)
    assert eisner_viterbi(pot)[0] == eisner_viterbi(TreePotentials(pot.theta - 1.3))[0]


def test_rejects_short_sentence():
    with pytest.raises(ValueError):
        TreePotentials(np.zeros((1, 1)))
    with pytest.raises(ValueError):
        TreePotentials(np.array([[0.0, -np.inf], [0.0, 0.0]]))


# --- backward -------------------------------------------------------------------

def test_zero_upstream_gradient(rng):
    pot = random_tree(rng, 5)
    tables, marg = inside_outside(pot)
    assert np.all(inside_outside_backprop(pot, tables, marg, np.zeros((5, 5))) == 0.0)


def test_one_hot_gradient_matches_symbolic():
    t = {(i, j): sp.Symbol("t%d%d" % (i, j)) for i in range(1, 4) for j in range(1, 4) if i != j}
    w1 = sp.exp(t[1, 2] + t[1, 3])
    w2 = sp.exp(t[1, 2] + t[2, 3])
    w3 = sp.exp(t[1, 3] + t[3, 2])
    p12 = (w1 + w2) / (w1 + w2 + w3)
    subs = {s: 0.0 for s in t.values()}
    expected = np.zeros((3, 3))
    for (i, j), s in t.items():
        expected[i - 1, j - 1] = float(sp.diff(p12, s).subs(subs))

    pot = TreePotentials(np.zeros((3, 3)))
    tables, marg = inside_outside(pot)
    g = np.zeros((3, 3))
    g[0, 1] = 1.0
    grad = inside_outside_backprop(pot, tables, marg, g)
    assert np.abs(grad - expected).max() < 1e-12
    # p12 = 2/3 at the uniform point; d p12 / d t12 = p12 (1 - p12)
    assert grad[0, 1] == pytest.approx(2 / 9, abs=1e-12)


def test_gradient_matches_finite_differences(rng):
    pot = random_tree(rng, 6)
    g = rng.uniform(-1, 1, (6, 6))
    np.fill_diagonal(g, 0.0)
    g[:, 0] = 0.0
    tables, marg = inside_outside(pot)
    analytic = inside_outside_backprop(pot, tables, marg, g)
    numeric = finite_diff_grad(tree_loss(g), pot.theta, 1e-5)
    np.fill_diagonal(numeric, 0.0)
    assert compare_gradients(analytic, numeric).passed
    assert np.abs(analytic - numeric).max() < 1e-4
    assert np.all(analytic[:, 0] == 0.0)


def test_root_column_gradient_ignored(rng):
    pot = random_tree(rng, 4)
    tables, marg = inside_outside(pot)
    g = rng.uniform(-1, 1, (4, 4))
    masked = g.copy()
    masked[:, 0] = 0.0
    np.fill_diagonal(masked, 0.0)
    assert np.array_equal(inside_outside_backprop(pot, tables, marg, g),
                          inside_outside_backprop(pot, tables, marg, masked))


# --- Viterbi & validity --------------------------------------------------------

def test_viterbi_small():
    assert eisner_viterbi(TreePotentials(np.zeros((2, 2))))[0] == [1]
    theta = np.zeros((3, 3))
    theta[0, 1] = theta[1, 2] = 5.0
    heads, score = eisner_viterbi(TreePotentials(theta))
    assert heads == [1, 2] and score == pytest.approx(10.0)


def test_viterbi_matches_enumeration(rng):
    for _ in range(30):
        pot = random_tree(rng, 6)
        ref = max(enumerate_projective_trees(pot).trees, key=lambda x: x[1])
        heads, score = eisner_viterbi(pot)
        assert heads == ref[0]
        assert score == pytest.approx(ref[1], abs=1e-12)
        assert validate_projective_tree(heads, 6)


def test_best_tree_probability(rng):
    pot = random_tree(rng, 5, 2.0)
    ref = enumerate_projective_trees(pot)
    _, marg = inside_outside(pot)
    _, score = eisner_viterbi(pot)
    prob = math.exp(score - marg.log_partition)
    assert prob <= 1.0
    assert prob == pytest.approx(max(math.exp(s - ref.log_partition) for _, s in ref.trees), abs=1e-9)


def test_validate_examples():
    assert validate_projective_tree([1, 2, 2], 4)
    assert not validate_projective_tree([3, 2], 3)  # 2 <-> 3 cycle
    assert not validate_projective_tree([1, 1, 2, 4], 5)  # arcs 1->3 and 2->4 cross
    assert not validate_projective_tree([1, 5, 2, 3], 5)
    assert not validate_projective_tree([1], 3)
    assert not validate_projective_tree([1, 0], 3)
    assert not validate_projective_tree([1, 3], 3)  # self loop


def _descendant_projective(heads, n):
    """Independent definition: a tree is projective iff every word strictly
    between a head and its dependent descends from that head."""
    parent = {j: h for j, h in enumerate(heads, start=2)}
    for j in parent:
        seen, k = set(), j
        while k != 1:
            if k in seen or k not in parent:
                return False
            seen.add(k)
            k = parent[k]

    def descends(w, h):
        while w != 1:
            w = parent[w]
            if w == h:
                return True
        return False

    for d, h in parent.items():
        for w in range(min(h, d) + 1, max(h, d)):
            if not descends(w, h):
                return False
    return True


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_validate_against_definition(n):
    choices = [range(1, n + 1)] * (n - 1)
    for heads in itertools.product(*choices):
        if any(h == j for j, h in enumerate(heads, start=2)):
            assert not validate_projective_tree(heads, n)
            continue
        assert validate_projective_tree(heads, n) == _descendant_projective(heads, n)


def test_heads_to_matrix():
    m = heads_to_matrix([1, 2, 2], 4)
    assert m[0, 1] == m[1, 2] == m[1, 3] == 1.0
    assert m.sum() == 3.0
