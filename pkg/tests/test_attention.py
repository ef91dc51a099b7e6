import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from structattn.attention import (
    build_qa_potentials, build_segmentation_potentials, categorical_context, categorical_weights,
    pairwise_penalty, qa_context, segmentation_context, segmentation_weights, sigmoid_context,
    soft_parent_context, weights_to_csv,
)
from structattn.chain_crf import ChainPotentials, forward_backward
from structattn.exceptions import StructAttnError
from structattn.oracle import enumerate_chain
from structattn.tree_crf import TreePotentials, eisner_viterbi, heads_to_matrix, inside_outside

floats = st.floats(min_value=-10, max_value=10, allow_nan=False)


def test_categorical_examples():
    ann = np.eye(2)
    assert categorical_context([0.0, 0.0], ann) == pytest.approx([0.5, 0.5])
    assert categorical_context([20.0, 0.0], ann) == pytest.approx([1.0, 0.0], abs=1e-8)
    z = [math.exp(1), math.exp(2), math.exp(3)]
    expected = [v / sum(z) for v in z]
    assert categorical_weights([1.0, 2.0, 3.0]) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx([0.0900, 0.2447, 0.6652], abs=5e-5)
    ann3 = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    assert categorical_context([1.0, 2.0, 3.0], ann3) == pytest.approx(expected[:2], abs=1e-15)


def test_sigmoid_examples():
    ann = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])
    assert sigmoid_context(np.zeros(3), ann) == pytest.approx(0.5 * ann.sum(axis=0))
    assert sigmoid_context(np.full(3, -20.0), ann) == pytest.approx([0.0, 0.0], abs=1e-8)
    out = sigmoid_context([0.0, 20.0], np.array([[2.0, 0.0], [0.0, 2.0]]))
    assert out == pytest.approx([1.0, 2.0 / (1.0 + math.exp(-20.0))], abs=1e-15)


def test_segmentation_examples(rng):
    ann = rng.standard_normal((4, 3))
    assert segmentation_context(np.ones(4), ann) == pytest.approx(ann.sum(axis=0))
    assert segmentation_context(np.zeros(4), ann) == pytest.approx(np.zeros(3))
    w = segmentation_weights(np.full(4, 0.5), normalize=True, lam=2.0)
    assert w == pytest.approx([0.5] * 4) and w.sum() == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(StructAttnError):
        segmentation_weights(np.zeros(4), normalize=True)


def test_segmentation_from_chain_marginals(rng):
    pot = ChainPotentials(rng.uniform(-1, 1, (6, 2, 2)))
    _, marg = forward_backward(pot)
    ann = rng.standard_normal((5, 2))
    assert segmentation_context(marg, ann) == pytest.approx(marg.unary[:, 1] @ ann)
    w = segmentation_weights(marg, normalize=True)
    assert abs(w.sum() - 2.0) < 1e-12


def test_soft_parent_examples(rng):
    ann2 = rng.standard_normal((2, 3))
    _, marg = inside_outside(TreePotentials(rng.standard_normal((2, 2))))
    ctx = soft_parent_context(marg, ann2)
    assert ctx[1] == pytest.approx(ann2[0]) and np.all(ctx[0] == 0.0)

    ann3 = rng.standard_normal((3, 2))
    _, marg = inside_outside(TreePotentials(np.zeros((3, 3))))
    ctx = soft_parent_context(marg, ann3)
    assert ctx[1] == pytest.approx(2 / 3 * ann3[0] + 1 / 3 * ann3[2], abs=1e-12)


def test_soft_parent_hard_parse(rng):
    pot = TreePotentials(rng.standard_normal((6, 6)))
    heads, _ = eisner_viterbi(pot)
    ann = rng.standard_normal((6, 4))
    ctx = soft_parent_context(heads_to_matrix(heads, 6), ann)
    for j, h in enumerate(heads, start=2):
        assert np.array_equal(ctx[j - 1], ann[h - 1])


def test_qa_single_hop_is_categorical(rng):
    X = rng.standard_normal((1, 5, 3))
    Q = rng.standard_normal((1, 3))
    pot = build_qa_potentials(X, Q, "unary")
    _, marg = forward_backward(pot)
    out = rng.standard_normal((5, 4))
    scores = X[0] @ Q[0]
    assert qa_context(marg, [out]) == pytest.approx(categorical_context(scores, out), abs=1e-12)


def test_qa_uniform(rng):
    K, n = 3, 4
    pot = build_qa_potentials(np.zeros((K, n, 2)), np.zeros((K, 2)), "unary")
    _, marg = forward_backward(pot)
    assert np.allclose(marg.unary, 1 / n, atol=1e-12)
    out = rng.standard_normal((n, 2))
    assert qa_context(marg, [out] * K) == pytest.approx(K * out.mean(axis=0), abs=1e-12)


def brute_qa(pot, outs):
    ref = enumerate_chain(pot)
    prob = np.exp(ref.scores - ref.log_partition)
    total = 0.0
    for seq, p in zip(ref.sequences, prob):
        total = total + p * sum(outs[k][z] for k, z in enumerate(seq))
    return total


@pytest.mark.parametrize("mode", ["unary", "binary"])
def test_qa_matches_sum_over_sequences(rng, mode):
    K, n, d = 3, 4, 3
    X = rng.standard_normal((K, n, d))
    Q = rng.standard_normal((K, d))
    pot = build_qa_potentials(X, Q, mode)
    _, marg = forward_backward(pot)
    outs = [rng.standard_normal((n, 2)) for _ in range(K)]
    assert np.abs(qa_context(marg, outs) - brute_qa(pot, outs)).max() < 1e-9


def test_qa_binary_excludes_repeats(rng):
    X = rng.standard_normal((4, 5, 3))
    Q = rng.standard_normal((4, 3))
    pot = build_qa_potentials(X, Q, "binary")
    _, marg = forward_backward(pot)
    for k in range(3):
        assert np.all(np.diag(marg.pairwise[k]) == 0.0)
    node = np.einsum("knd,kd->kn", X, Q)
    assert pot.theta[1, 0, 2] == pytest.approx(node[0, 0] + X[0, 0] @ X[1, 2] + node[1, 2])


def test_qa_unary_peaks_on_aligned_fact():
    K, n = 3, 5
    X = np.tile(np.eye(n), (K, 1, 1))
    Q = np.tile(3.0 * np.eye(n)[2], (K, 1))
    _, marg = forward_backward(build_qa_potentials(X, Q, "unary"))
    assert np.all(np.argmax(marg.unary, axis=1) == 2)


def test_qa_shape_mismatch(rng):
    _, marg = forward_backward(build_qa_potentials(rng.standard_normal((2, 3, 2)), rng.standard_normal((2, 2))))
    with pytest.raises(ValueError):
        qa_context(marg, [np.zeros((3, 2))])
    with pytest.raises(ValueError):
        build_qa_potentials(np.zeros((2, 3, 2)), np.zeros((3, 2)))


def test_segmentation_potentials_zero():
    pot = build_segmentation_potentials(np.ones((4, 3)), np.ones(3), np.zeros((3, 3)), np.zeros((2, 2)))
    _, marg = forward_backward(pot)
    assert np.allclose(marg.unary, 0.5, atol=1e-12)


def test_segmentation_potentials_coupling(rng):
    H = rng.standard_normal((6, 3))
    q = rng.standard_normal(3)
    W = 0.3 * rng.standard_normal((3, 3))
    pot = build_segmentation_potentials(H, q, W, [[0.0, 0.0], [0.0, 3.0]])
    _, marg = forward_backward(pot)
    for i in range(5):
        assert marg.pairwise[i, 1, 1] > marg.unary[i, 1] * marg.unary[i + 1, 1]


def test_segmentation_potentials_layout(rng):
    H = rng.standard_normal((3, 2))
    q = rng.standard_normal(2)
    W = rng.standard_normal((2, 2))
    b = rng.standard_normal((2, 2))
    pot = build_segmentation_potentials(H, q, W, b)
    node = H @ W @ q
    assert pot.theta[1, 1, 0] == pytest.approx(node[0] + b[1, 0])
    assert pot.theta[2, 1, 1] == pytest.approx(node[1] + node[2] + b[1, 1])


def test_segmentation_single_position():
    h = np.array([[0.5, -1.0]])
    q = np.array([1.0, 2.0])
    W = np.array([[1.0, 0.0], [0.5, 1.0]])
    pot = build_segmentation_potentials(h, q, W, np.zeros((2, 2)))
    # two sequences: z=1 scores 2 * hWq (start and stop edges), z=0 scores 0
    diff = pot.sequence_score([1]) - pot.sequence_score([0])
    assert diff == pytest.approx(2 * float(h[0] @ W @ q))
    _, marg = forward_backward(pot)
    assert marg.unary[0, 1] == pytest.approx(1 / (1 + math.exp(-diff)), abs=1e-12)


def test_pairwise_penalty():
    assert pairwise_penalty([[1.0, -2.0], [0.0, 3.0]]) == pytest.approx(0.005 * 14)


def test_weights_csv():
    assert weights_to_csv([0.25, 0.75]) == "position,weight\n1,0.25\n2,0.75\n"


@settings(max_examples=50)
@given(arrays(np.float64, (4, 3), elements=floats), arrays(np.float64, (4, 3), elements=floats),
       arrays(np.float64, 4, elements=floats))
def test_linearity(A, B, scores):
    for ctx in (categorical_context, sigmoid_context):
        assert np.allclose(ctx(scores, A + B), ctx(scores, A) + ctx(scores, B), rtol=1e-12, atol=1e-12)
    p = 1 / (1 + np.exp(-scores))
    assert np.allclose(segmentation_context(p, A + B), segmentation_context(p, A) + segmentation_context(p, B),
                       rtol=1e-12, atol=1e-12)
    P = np.abs(np.outer(p, p))
    assert np.allclose(soft_parent_context(P, A + B), soft_parent_context(P, A) + soft_parent_context(P, B),
                       rtol=1e-12, atol=1e-12)


@settings(max_examples=50)
@given(arrays(np.float64, 6, elements=st.floats(0.0, 1.0)).filter(lambda p: p.sum() > 1e-3),
       st.floats(0.5, 5.0))
def test_weight_sums(p, lam):
    assert abs(segmentation_weights(p, normalize=True, lam=lam).sum() - lam) < 1e-12
    assert segmentation_weights(p).sum() == pytest.approx(p.sum())
    assert categorical_weights(p * 10).sum() == pytest.approx(1.0, abs=1e-12)
