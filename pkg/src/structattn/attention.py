"""Attention pooling layers: context vectors as expectations of annotations.

Every context function is linear in the annotation matrix.  The weights are
either simple per-position probabilities (categorical, sigmoid) or marginals
produced by the structured kernels in :mod:`chain_crf` / :mod:`tree_crf`.
"""

import io

import numpy as np
from scipy.special import expit, softmax

from .chain_crf import ChainMarginals, ChainPotentials
from .exceptions import StructAttnError
from .semiring import NEG_INF

DEFAULT_LAMBDA = 2.0
PAIRWISE_PENALTY = 0.005


def _annotations(ann, n=None):
    ann = np.asarray(ann, dtype=np.float64)
    if ann.ndim != 2:
        raise ValueError("annotations must be an (n, d) matrix")
    if n is not None and ann.shape[0] != n:
        raise ValueError("expected %d annotation rows, got %d" % (n, ann.shape[0]))
    return ann


def categorical_weights(scores):
    return softmax(np.asarray(scores, dtype=np.float64))


def categorical_context(scores, ann):
    w = categorical_weights(scores)
    return w @ _annotations(ann, len(w))


def sigmoid_weights(scores):
    return expit(np.asarray(scores, dtype=np.float64))


def sigmoid_context(scores, ann):
    w = sigmoid_weights(scores)
    return w @ _annotations(ann, len(w))


def _selection_marginals(marg):
    if isinstance(marg, ChainMarginals):
        if marg.unary.shape[1] != 2:
            raise ValueError("segmentation attention needs a two-state chain")
        return marg.unary[:, 1]
    return np.asarray(marg, dtype=np.float64)


def segmentation_weights(marg, normalize=False, lam=DEFAULT_LAMBDA):
    """Per-position weights ``p(z_i = 1)``; if ``normalize``, rescaled so they
    sum to ``lam``."""
    p = _selection_marginals(marg)
    if not normalize:
        return p
    total = p.sum()
    if not total > 0:
        raise StructAttnError("cannot normalise: selection marginals sum to zero")
    gamma = total / lam
    return p / gamma


def segmentation_context(marg, ann, normalize=False, lam=DEFAULT_LAMBDA):
    w = segmentation_weights(marg, normalize, lam)
    return w @ _annotations(ann, len(w))


def soft_parent_context(marg, ann):
    """Row ``j`` is the expected annotation of word ``j``'s head; the root row
    is zero."""
    p = marg.p if hasattr(marg, "p") else np.asarray(marg, dtype=np.float64)
    return p.T @ _annotations(ann, p.shape[0])


def qa_context(marg, output_ann):
    """``sum_k sum_i p(z_k = i) o^k_i`` for a K-step chain over n facts."""
    unary = marg.unary if isinstance(marg, ChainMarginals) else np.asarray(marg, dtype=np.float64)
    K, n = unary.shape
    if len(output_ann) != K:
        raise ValueError("need one output matrix per step: %d given for %d steps" % (len(output_ann), K))
    out = None
    for k in range(K):
        c = unary[k] @ _annotations(output_ann[k], n)
        out = c if out is None else out + c
    return out


def build_qa_potentials(fact_emb, query_emb, mode="unary"):
    """Chain over ``K`` hops with one state per fact.

    ``fact_emb`` is ``(K, n, d)`` (fact ``i`` embedded for hop ``k``),
    ``query_emb`` is ``(K, d)``.

    ``unary``: hop ``k`` scores fact ``i`` by ``x_i^k . q^k``; each node score
    is placed on the edge entering that hop, so the chain is exactly the
    independent-per-hop model.

    ``binary``: edge ``(k, k+1)`` scores ``(i, j)`` by
    ``x_i^k . q^k + x_i^k . x_j^(k+1) + x_j^(k+1) . q^(k+1)``, with repeated
    facts (``i == j``) forbidden.  The start and stop edges carry the node
    score of the first and last hop.
    """
    X = np.asarray(fact_emb, dtype=np.float64)
    Q = np.asarray(query_emb, dtype=np.float64)
    if X.ndim != 3 or Q.shape != (X.shape[0], X.shape[2]):
        raise ValueError("fact_emb must be (K, n, d) and query_emb (K, d)")
    K, n, _ = X.shape
    node = np.einsum("knd,kd->kn", X, Q)
    theta = np.zeros((K + 1, n, n))
    if mode == "unary":
        theta[0] = node[0][None, :]
        for k in range(1, K):
            theta[k] = node[k][None, :]
    elif mode == "binary":
        theta[0] = node[0][None, :]
        for k in range(1, K):
            theta[k] = node[k - 1][:, None] + X[k - 1] @ X[k].T + node[k][None, :]
            np.fill_diagonal(theta[k], NEG_INF)
        theta[K] = node[K - 1][:, None]
    else:
        raise ValueError("mode must be 'unary' or 'binary', got %r" % (mode,))
    return ChainPotentials(theta)


def build_segmentation_potentials(enc, dec_query, bilinear, pairwise_bias):
    """Two-state chain where state 1 selects a position.

    Node scores are ``h_i W q`` for state 1 and 0 for state 0; edge
    ``(i, i+1)`` adds both endpoint node scores and ``b[z_i, z_{i+1}]``.  The
    start/stop edges treat the boundary as a node with score 0 and no bias.
    """
    H = np.asarray(enc, dtype=np.float64)
    q = np.asarray(dec_query, dtype=np.float64)
    W = np.asarray(bilinear, dtype=np.float64)
    b = np.asarray(pairwise_bias, dtype=np.float64)
    if b.shape != (2, 2):
        raise ValueError("pairwise_bias must be 2x2")
    n = H.shape[0]
    node = np.zeros((n, 2))
    node[:, 1] = H @ W @ q
    theta = np.zeros((n + 1, 2, 2))
    theta[0] = node[0][None, :]
    for i in range(1, n):
        theta[i] = node[i - 1][:, None] + node[i][None, :] + b
    theta[n] = node[n - 1][:, None]
    return ChainPotentials(theta)


def pairwise_penalty(b, weight=PAIRWISE_PENALTY):
    """L2 penalty on the pairwise bias, meant to be added to a training loss."""
    b = np.asarray(b, dtype=np.float64)
    return weight * float(np.sum(b * b))


def weights_to_csv(weights):
    """``position,weight`` rows with 1-based positions."""
    buf = io.StringIO()
    buf.write("position,weight\n")
    for i, w in enumerate(np.asarray(weights, dtype=np.float64), start=1):
        buf.write("%d,%.17g\n" % (i, w))
    return buf.getvalue()
