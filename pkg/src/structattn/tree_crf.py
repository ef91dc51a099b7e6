"""Projective dependency-tree CRF on Eisner's span charts.

Indexing
--------
Sentence positions are numbered ``1..n`` with the root symbol at position 1.
Matrices are plain numpy arrays, so position ``k`` lives at row/column
``k - 1``: ``theta[0, j]`` scores the arc root -> position ``j + 1``.  Head
arrays (see :func:`eisner_viterbi`, :func:`validate_projective_tree`) hold
1-based positions for words ``2..n``.

Charts have shape ``(n, n, 2, 2)`` indexed ``[s, t, direction, complete]``
with ``direction`` in ``{L, R}`` and ``complete`` in ``{0, 1}``.
"""

from dataclasses import dataclass
import json

import numpy as np

from .semiring import NEG_INF, logsumexp, signexp_array, slog_add_arrays, slog_from_array, slog_sum

L, R = 0, 1
INCOMPLETE, COMPLETE = 0, 1


@dataclass(frozen=True)
class TreePotentials:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise ValueError("theta must be a square matrix, got shape %s" % (theta.shape,))
        if theta.shape[0] < 2:
            raise ValueError("need the root plus at least one word (n >= 2)")
        off = ~np.eye(theta.shape[0], dtype=bool)
        if not np.all(np.isfinite(theta[off])):
            raise ValueError("arc potentials must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def n(self):
        return self.theta.shape[0]

    def tree_score(self, heads):
        return float(sum(self.theta[h - 1, j - 1] for j, h in enumerate(heads, start=2)))

    def to_dict(self):
        th = np.where(np.eye(self.n, dtype=bool), 0.0, self.theta)
        return {"n": self.n, "theta": th.tolist()}

    @classmethod
    def from_dict(cls, d):
        pot = cls(np.asarray(d["theta"], dtype=np.float64))
        if int(d["n"]) != pot.n:
            raise ValueError("n=%s does not match theta of size %d" % (d["n"], pot.n))
        return pot

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class InsideOutsideTables:
    alpha: np.ndarray
    beta: np.ndarray
    log_partition: float


@dataclass(frozen=True)
class ParseMarginals:
    p: np.ndarray
    log_partition: float

    def edge(self, parent, child):
        """p(parent -> child) with 1-based positions."""
        return float(self.p[parent - 1, child - 1])

    def to_dict(self):
        return {"p": self.p.tolist(), "log_partition": float(self.log_partition)}


def _inside(theta):
    n = theta.shape[0]
    alpha = np.full((n, n, 2, 2), NEG_INF)
    for i in range(n):
        alpha[i, i, L, COMPLETE] = 0.0
        alpha[i, i, R, COMPLETE] = 0.0
    for k in range(1, n):
        for s in range(n - k):
            t = s + k
            # u in [s, t-1]
            split = alpha[s, s:t, R, COMPLETE] + alpha[s + 1:t + 1, t, L, COMPLETE]
            base = logsumexp(split)
            alpha[s, t, R, INCOMPLETE] = base + theta[s, t]
            alpha[s, t, L, INCOMPLETE] = base + theta[t, s]
            # u in [s+1, t]
            alpha[s, t, R, COMPLETE] = logsumexp(alpha[s, s + 1:t + 1, R, INCOMPLETE] + alpha[s + 1:t + 1, t, R, COMPLETE])
            # u in [s, t-1]
            alpha[s, t, L, COMPLETE] = logsumexp(alpha[s, s:t, L, COMPLETE] + alpha[s:t, t, L, INCOMPLETE])
    return alpha


def _push(beta, idx, values):
    beta[idx] = np.logaddexp(beta[idx], values)


def _outside(theta, alpha):
    n = theta.shape[0]
    beta = np.full((n, n, 2, 2), NEG_INF)
    beta[0, n - 1, R, COMPLETE] = 0.0
    for k in range(n - 1, 0, -1):
        for s in range(n - k):
            t = s + k
            u = np.arange(s + 1, t + 1)
            b = beta[s, t, R, COMPLETE]
            _push(beta, (s, u, R, INCOMPLETE), b + alpha[u, t, R, COMPLETE])
            _push(beta, (u, t, R, COMPLETE), b + alpha[s, u, R, INCOMPLETE])
            u = np.arange(s, t)
            if s > 0:
                b = beta[s, t, L, COMPLETE]
                _push(beta, (s, u, L, COMPLETE), b + alpha[u, t, L, INCOMPLETE])
                _push(beta, (u, t, L, INCOMPLETE), b + alpha[s, u, L, COMPLETE])
            b = beta[s, t, R, INCOMPLETE] + theta[s, t]
            _push(beta, (s, u, R, COMPLETE), b + alpha[u + 1, t, L, COMPLETE])
            _push(beta, (u + 1, t, L, COMPLETE), b + alpha[s, u, R, COMPLETE])
            if s > 0:
                b = beta[s, t, L, INCOMPLETE] + theta[t, s]
                _push(beta, (s, u, R, COMPLETE), b + alpha[u + 1, t, L, COMPLETE])
                _push(beta, (u + 1, t, L, COMPLETE), b + alpha[s, u, R, COMPLETE])
    return beta


def inside_outside(pot):
    """Edge marginals of the projective tree CRF.

    Returns ``(InsideOutsideTables, ParseMarginals)``; ``p[i, j]`` is the
    probability that position ``i + 1`` heads position ``j + 1``.  Arcs into
    the root have probability 0.
    """
    theta = pot.theta
    n = pot.n
    alpha = _inside(theta)
    beta = _outside(theta, alpha)
    A = float(alpha[0, n - 1, R, COMPLETE])

    p = np.zeros((n, n))
    for s in range(n - 1):
        for t in range(s + 1, n):
            p[s, t] = np.exp(alpha[s, t, R, INCOMPLETE] + beta[s, t, R, INCOMPLETE] - A)
            if s > 0:
                p[t, s] = np.exp(alpha[s, t, L, INCOMPLETE] + beta[s, t, L, INCOMPLETE] - A)
    for arr in (alpha, beta, p):
        arr.setflags(write=False)
    return InsideOutsideTables(alpha, beta, A), ParseMarginals(p, A)


class _Adjoint:
    """Signed log-space accumulator for one table."""

    def __init__(self, shape):
        self.l = np.full(shape, NEG_INF)
        self.s = np.ones(shape)

    def add(self, idx, l, s):
        self.l[idx], self.s[idx] = slog_add_arrays(self.l[idx], self.s[idx], l, s)

    def add_total(self, idx, l, s):
        tl, ts = slog_sum(np.atleast_1d(l), np.broadcast_to(s, np.shape(np.atleast_1d(l))))
        self.add(idx, tl, ts)


def _share(g_l, g_s, term, total):
    """Adjoint reaching one summand of ``total = logsumexp(terms)``."""
    total = np.broadcast_to(total, np.shape(term))
    with np.errstate(invalid="ignore"):
        w = np.where(np.isneginf(total), NEG_INF, term - total)
    return g_l + w, np.broadcast_to(g_s, np.shape(w))


def inside_outside_backprop(pot, tables, marg, grad_marg):
    """Gradient of a loss with respect to arc potentials, given its gradient
    with respect to the edge marginals.

    Reverse-mode sweep over the outside chart (span widths ascending) and
    then the inside chart (widths descending), accumulated in signed log
    space.
    """
    theta = pot.theta
    n = pot.n
    grad_marg = np.asarray(grad_marg, dtype=np.float64)
    if grad_marg.shape != (n, n):
        raise ValueError("grad_marg must have shape %s, got %s" % ((n, n), grad_marg.shape))
    off = ~np.eye(n, dtype=bool)
    off[:, 0] = False
    if not np.all(np.isfinite(grad_marg[off])):
        raise ValueError("grad_marg must be finite")
    grad_marg = np.where(off, grad_marg, 0.0)
    alpha, beta, A = tables.alpha, tables.beta, tables.log_partition

    with np.errstate(divide="ignore"):
        log_p = np.log(marg.p)
    log_g, sign_g = slog_from_array(grad_marg)
    delta_l = log_p + log_g
    delta_s = sign_g

    Ga = _Adjoint((n, n, 2, 2))
    Gb = _Adjoint((n, n, 2, 2))
    Gth = _Adjoint((n, n))
    for s in range(n - 1):
        for t in range(s + 1, n):
            Ga.add((s, t, R, INCOMPLETE), delta_l[s, t], delta_s[s, t])
            Gb.add((s, t, R, INCOMPLETE), delta_l[s, t], delta_s[s, t])
            if s > 0:
                Ga.add((s, t, L, INCOMPLETE), delta_l[t, s], delta_s[t, s])
                Gb.add((s, t, L, INCOMPLETE), delta_l[t, s], delta_s[t, s])
    total_l, total_s = slog_sum(delta_l, delta_s)
    Ga.add((0, n - 1, R, COMPLETE), total_l, -total_s)

    # outside chart, reversed
    for k in range(1, n):
        for s in range(n - k):
            t = s + k
            u = np.arange(s, t)
            if s > 0:
                src = (s, t, L, INCOMPLETE)
                b = beta[src] + theta[t, s]
                for tgt, sib in (((s, u, R, COMPLETE), (u + 1, t, L, COMPLETE)),
                                 ((u + 1, t, L, COMPLETE), (s, u, R, COMPLETE))):
                    c_l, c_s = _share(Gb.l[tgt], Gb.s[tgt], b + alpha[sib], beta[tgt])
                    Ga.add(sib, c_l, c_s)
                    Gb.add_total(src, c_l, c_s)
                    Gth.add_total((t, s), c_l, c_s)
            src = (s, t, R, INCOMPLETE)
            b = beta[src] + theta[s, t]
            for tgt, sib in (((s, u, R, COMPLETE), (u + 1, t, L, COMPLETE)),
                             ((u + 1, t, L, COMPLETE), (s, u, R, COMPLETE))):
                c_l, c_s = _share(Gb.l[tgt], Gb.s[tgt], b + alpha[sib], beta[tgt])
                Ga.add(sib, c_l, c_s)
                Gb.add_total(src, c_l, c_s)
                Gth.add_total((s, t), c_l, c_s)
            if s > 0:
                src = (s, t, L, COMPLETE)
                b = beta[src]
                for tgt, sib in (((s, u, L, COMPLETE), (u, t, L, INCOMPLETE)),
                                 ((u, t, L, INCOMPLETE), (s, u, L, COMPLETE))):
                    c_l, c_s = _share(Gb.l[tgt], Gb.s[tgt], b + alpha[sib], beta[tgt])
                    Ga.add(sib, c_l, c_s)
                    Gb.add_total(src, c_l, c_s)
            u = np.arange(s + 1, t + 1)
            src = (s, t, R, COMPLETE)
            b = beta[src]
            for tgt, sib in (((s, u, R, INCOMPLETE), (u, t, R, COMPLETE)),
                             ((u, t, R, COMPLETE), (s, u, R, INCOMPLETE))):
                c_l, c_s = _share(Gb.l[tgt], Gb.s[tgt], b + alpha[sib], beta[tgt])
                Ga.add(sib, c_l, c_s)
                Gb.add_total(src, c_l, c_s)

    # inside chart, reversed
    for k in range(n - 1, 0, -1):
        for s in range(n - k):
            t = s + k
            if s > 0:
                tgt = (s, t, L, COMPLETE)
                u = np.arange(s, t)
                left, right = (s, u, L, COMPLETE), (u, t, L, INCOMPLETE)
                c_l, c_s = _share(Ga.l[tgt], Ga.s[tgt], alpha[left] + alpha[right], alpha[tgt])
                Ga.add(left, c_l, c_s)
                Ga.add(right, c_l, c_s)
            tgt = (s, t, R, COMPLETE)
            u = np.arange(s + 1, t + 1)
            left, right = (s, u, R, INCOMPLETE), (u, t, R, COMPLETE)
            c_l, c_s = _share(Ga.l[tgt], Ga.s[tgt], alpha[left] + alpha[right], alpha[tgt])
            Ga.add(left, c_l, c_s)
            Ga.add(right, c_l, c_s)

            u = np.arange(s, t)
            left, right = (s, u, R, COMPLETE), (u + 1, t, L, COMPLETE)
            heads = [((s, t, R, INCOMPLETE), (s, t))]
            if s > 0:
                heads.append(((s, t, L, INCOMPLETE), (t, s)))
            for tgt, arc in heads:
                c_l, c_s = _share(Ga.l[tgt], Ga.s[tgt], alpha[left] + alpha[right] + theta[arc], alpha[tgt])
                Ga.add(left, c_l, c_s)
                Ga.add(right, c_l, c_s)
                Gth.add_total(arc, c_l, c_s)

    grad = signexp_array(Gth.l, Gth.s)
    grad[~off] = 0.0
    return grad


def eisner_viterbi(pot):
    """Best projective tree: ``(heads, score)`` where ``heads[j - 2]`` is the
    1-based head of position ``j`` for ``j = 2..n``."""
    theta = pot.theta
    n = pot.n
    chart = np.full((n, n, 2, 2), NEG_INF)
    back = np.zeros((n, n, 2, 2), dtype=int)
    for i in range(n):
        chart[i, i, :, COMPLETE] = 0.0
    for k in range(1, n):
        for s in range(n - k):
            t = s + k
            split = chart[s, s:t, R, COMPLETE] + chart[s + 1:t + 1, t, L, COMPLETE]
            j = int(np.argmax(split))
            chart[s, t, R, INCOMPLETE] = split[j] + theta[s, t]
            chart[s, t, L, INCOMPLETE] = split[j] + theta[t, s]
            back[s, t, :, INCOMPLETE] = s + j
            cand = chart[s, s + 1:t + 1, R, INCOMPLETE] + chart[s + 1:t + 1, t, R, COMPLETE]
            j = int(np.argmax(cand))
            chart[s, t, R, COMPLETE] = cand[j]
            back[s, t, R, COMPLETE] = s + 1 + j
            if s > 0:
                cand = chart[s, s:t, L, COMPLETE] + chart[s:t, t, L, INCOMPLETE]
                j = int(np.argmax(cand))
                chart[s, t, L, COMPLETE] = cand[j]
                back[s, t, L, COMPLETE] = s + j

    heads = np.zeros(n, dtype=int)
    stack = [(0, n - 1, R, COMPLETE)]
    while stack:
        s, t, d, c = stack.pop()
        if s == t:
            continue
        u = back[s, t, d, c]
        if c == COMPLETE:
            if d == R:
                stack += [(s, u, R, INCOMPLETE), (u, t, R, COMPLETE)]
            else:
                stack += [(s, u, L, COMPLETE), (u, t, L, INCOMPLETE)]
        else:
            if d == R:
                heads[t] = s
            else:
                heads[s] = t
            stack += [(s, u, R, COMPLETE), (u + 1, t, L, COMPLETE)]
    head_list = [int(h) + 1 for h in heads[1:]]
    return head_list, float(chart[0, n - 1, R, COMPLETE])


def heads_to_matrix(heads, n):
    """0/1 arc matrix of a head array (1-based positions)."""
    m = np.zeros((n, n))
    for j, h in enumerate(heads, start=2):
        m[h - 1, j - 1] = 1.0
    return m


def validate_projective_tree(heads, n):
    """True iff ``heads`` (1-based heads of words ``2..n``) is a projective
    tree rooted at position 1."""
    heads = list(heads)
    if len(heads) != n - 1:
        return False
    parent = {}
    for j, h in enumerate(heads, start=2):
        if not isinstance(h, (int, np.integer)) or h < 1 or h > n or h == j:
            return False
        parent[j] = int(h)
    for j in parent:
        seen = 0
        k = j
        while k != 1:
            k = parent[k]
            seen += 1
            if seen > n:
                return False
    spans = [(min(h, j), max(h, j)) for j, h in parent.items()]
    for a1, b1 in spans:
        for a2, b2 in spans:
            if a1 < a2 < b1 < b2:
                return False
    return True
