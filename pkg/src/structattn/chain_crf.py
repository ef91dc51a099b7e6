"""Linear-chain CRF inference and backpropagation through forward-backward.

Conventions
-----------
A chain has ``n`` positions with ``C`` states each.  Positions are padded with
a start position 0 and a stop position ``n + 1``, both pinned to the special
boundary state.  ``theta`` has shape ``(n + 1, C, C)``; ``theta[i, y, c]`` is
the log-potential of moving from state ``y`` at position ``i`` to state ``c``
at position ``i + 1``.

At the boundaries the special state is identified with state index 0: only
``theta[0, 0, :]`` (start scores) and ``theta[n, :, 0]`` (stop scores) are
read, every other entry of those two slices is ignored.  The score of a
sequence ``z_1..z_n`` is therefore::

    theta[0, 0, z_1] + sum_i theta[i, z_i, z_{i+1}] + theta[n, z_n, 0]

Entries equal to ``-inf`` forbid a transition.
"""

from dataclasses import dataclass
import heapq
import json

import numpy as np

from .exceptions import DegenerateDistributionError
from .semiring import NEG_INF, logsumexp, signexp_array, slog_add_arrays, slog_from_array, slog_sum


@dataclass(frozen=True)
class ChainPotentials:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64)
        if theta.ndim != 3 or theta.shape[1] != theta.shape[2]:
            raise ValueError("theta must have shape (n + 1, C, C), got %s" % (theta.shape,))
        if theta.shape[0] < 2:
            raise ValueError("a chain needs at least one position (theta.shape[0] >= 2)")
        if np.any(np.isnan(theta)) or np.any(np.isposinf(theta)):
            raise ValueError("theta entries must be finite or -inf")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def n(self):
        return self.theta.shape[0] - 1

    @property
    def num_states(self):
        return self.theta.shape[1]

    @classmethod
    def from_parts(cls, start, transitions, stop):
        """Build from start scores ``(C,)``, interior transitions ``(n-1, C, C)``
        and stop scores ``(C,)``."""
        start = np.asarray(start, dtype=np.float64)
        stop = np.asarray(stop, dtype=np.float64)
        C = start.shape[0]
        transitions = np.asarray(transitions, dtype=np.float64).reshape(-1, C, C)
        theta = np.zeros((transitions.shape[0] + 2, C, C))
        theta[0, 0, :] = start
        theta[1:-1] = transitions
        theta[-1, :, 0] = stop
        return cls(theta)

    def sequence_score(self, states):
        states = list(states)
        path = [0] + states + [0]
        return float(sum(self.theta[i, path[i], path[i + 1]] for i in range(self.n + 1)))

    def to_dict(self):
        return {
            "n": self.n,
            "num_states": self.num_states,
            "theta": _encode(self.theta),
            "boundary_state": "t",
        }

    @classmethod
    def from_dict(cls, d):
        theta = _decode(d["theta"])
        pot = cls(theta)
        if int(d["n"]) != pot.n or int(d["num_states"]) != pot.num_states:
            raise ValueError("n / num_states do not match theta shape %s" % (pot.theta.shape,))
        if d.get("boundary_state", "t") != "t":
            raise ValueError("unsupported boundary_state %r" % d["boundary_state"])
        return pot

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ChainTables:
    """Log forward/backward tables over positions ``0..n+1`` (rows)."""

    alpha: np.ndarray
    beta: np.ndarray
    log_partition: float


@dataclass(frozen=True)
class ChainMarginals:
    """``unary[i-1, c] = p(z_i = c)``; ``pairwise[i-1, y, c] = p(z_i = y, z_{i+1} = c)``."""

    unary: np.ndarray
    pairwise: np.ndarray
    log_partition: float

    def to_dict(self):
        return {
            "unary": self.unary.tolist(),
            "pairwise": self.pairwise.tolist(),
            "log_partition": _encode(self.log_partition),
        }


def _encode(x):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        return "-inf" if np.isneginf(a) else float(a)
    return [_encode(v) for v in a]


def _decode(x):
    if isinstance(x, list):
        return [_decode(v) for v in x]
    if isinstance(x, str):
        if x.strip().lower() == "-inf":
            return NEG_INF
        raise ValueError("unexpected string %r in potential table" % x)
    return float(x)


def _boundary(C):
    v = np.full(C, NEG_INF)
    v[0] = 0.0
    return v


def forward_backward(pot):
    """Forward-backward in the log semiring.

    Returns ``(ChainTables, ChainMarginals)``.  Raises
    :class:`DegenerateDistributionError` if every sequence has weight zero.
    """
    theta = pot.theta
    n, C = pot.n, pot.num_states

    alpha = np.full((n + 2, C), NEG_INF)
    beta = np.full((n + 2, C), NEG_INF)
    alpha[0] = _boundary(C)
    for i in range(1, n + 1):
        alpha[i] = logsumexp(alpha[i - 1][:, None] + theta[i - 1], axis=0)
    alpha[n + 1, 0] = logsumexp(alpha[n] + theta[n][:, 0])

    beta[n + 1] = _boundary(C)
    for i in range(n, 0, -1):
        beta[i] = logsumexp(theta[i] + beta[i + 1][None, :], axis=1)
    beta[0, 0] = logsumexp(theta[0][0] + beta[1])

    A = float(alpha[n + 1, 0])
    if not np.isfinite(A):
        raise DegenerateDistributionError("all state sequences have zero weight")

    unary = np.exp(alpha[1:n + 1] + beta[1:n + 1] - A)
    pairwise = np.exp(alpha[1:n, :, None] + theta[1:n] + beta[2:n + 1, None, :] - A)
    for arr in (alpha, beta, unary, pairwise):
        arr.setflags(write=False)
    return ChainTables(alpha, beta, A), ChainMarginals(unary, pairwise, A)


def chain_backprop(pot, tables, marg, grad_unary):
    """Gradient of a loss with respect to ``theta`` given its gradient with
    respect to the unary marginals.

    All accumulation happens in signed log space: one right-to-left sweep
    (``bhat``) carries the loss through the forward table, one left-to-right
    sweep (``ahat``) through the backward table, and the log-partition
    normaliser contributes ``-sum(p * grad) * pairwise``.
    """
    theta = pot.theta
    n, C = pot.n, pot.num_states
    grad_unary = np.asarray(grad_unary, dtype=np.float64)
    if grad_unary.shape != (n, C):
        raise ValueError("grad_unary must have shape %s, got %s" % ((n, C), grad_unary.shape))
    if not np.all(np.isfinite(grad_unary)):
        raise ValueError("grad_unary must be finite")
    alpha, beta, A = tables.alpha, tables.beta, tables.log_partition

    log_g, sign_g = slog_from_array(grad_unary)
    # loss gradient w.r.t. exp(alpha) and exp(beta), in signed log space
    direct_a = log_g + beta[1:n + 1] - A
    direct_b = log_g + alpha[1:n + 1] - A

    bhat_l = np.full((n + 2, C), NEG_INF)
    bhat_s = np.ones((n + 2, C))
    for i in range(n, 0, -1):
        l, s = slog_sum(theta[i] + bhat_l[i + 1][None, :], np.broadcast_to(bhat_s[i + 1][None, :], (C, C)), axis=1)
        bhat_l[i], bhat_s[i] = slog_add_arrays(direct_a[i - 1], sign_g[i - 1], l, s)

    ahat_l = np.full((n + 2, C), NEG_INF)
    ahat_s = np.ones((n + 2, C))
    for i in range(1, n + 1):
        l, s = slog_sum(ahat_l[i - 1][:, None] + theta[i - 1], np.broadcast_to(ahat_s[i - 1][:, None], (C, C)), axis=0)
        ahat_l[i], ahat_s[i] = slog_add_arrays(direct_b[i - 1], sign_g[i - 1], l, s)

    # d(-A)/d(theta) weighted by sum(p * grad)
    with np.errstate(divide="ignore"):
        log_p = np.log(marg.unary)
    norm_l, norm_s = slog_sum(log_p + log_g, sign_g)
    norm_s = -norm_s

    grad = np.zeros_like(theta)
    for i in range(n + 1):
        t1_l = alpha[i][:, None] + bhat_l[i + 1][None, :]
        t1_s = np.broadcast_to(bhat_s[i + 1][None, :], (C, C))
        t2_l = ahat_l[i][:, None] + beta[i + 1][None, :]
        t2_s = np.broadcast_to(ahat_s[i][:, None], (C, C))
        t3_l = alpha[i][:, None] + beta[i + 1][None, :] + norm_l - A
        t3_s = np.full((C, C), norm_s)
        l, s = slog_add_arrays(t1_l, t1_s, t2_l, t2_s)
        l, s = slog_add_arrays(l, s, t3_l, t3_s)
        grad[i] = signexp_array(theta[i] + l, s)
    return grad


def viterbi(pot):
    """Highest-scoring state sequence (0-based states) and its log-score.

    Ties go to the lowest state index at every argmax.
    """
    theta = pot.theta
    n, C = pot.n, pot.num_states
    score = theta[0, 0].copy()
    back = np.zeros((n, C), dtype=int)
    for i in range(1, n):
        cand = score[:, None] + theta[i]
        back[i] = np.argmax(cand, axis=0)
        score = cand[back[i], np.arange(C)]
    final = score + theta[n][:, 0]
    last = int(np.argmax(final))
    best = float(final[last])
    if best == NEG_INF:
        raise DegenerateDistributionError("all state sequences have zero weight")
    states = [last]
    for i in range(n - 1, 0, -1):
        states.append(int(back[i, states[-1]]))
    return states[::-1], best


def top_k_sequences(pot, k):
    """The ``k`` most probable sequences as ``(states, probability)`` pairs,
    most probable first.  Equal scores are ordered lexicographically."""
    if k < 1:
        raise ValueError("k must be positive")
    _, marg = forward_backward(pot)
    A = marg.log_partition
    theta = pot.theta
    n, C = pot.n, pot.num_states

    # beams[c]: up to k best (score, states) prefixes ending in state c
    beams = [[(theta[0, 0, c], (c,))] if theta[0, 0, c] > NEG_INF else [] for c in range(C)]
    for i in range(1, n):
        new = []
        for c in range(C):
            cand = [(sc + theta[i, path[-1], c], path + (c,))
                    for y in range(C) for sc, path in beams[y]]
            cand = [x for x in cand if x[0] > NEG_INF]
            new.append(heapq.nsmallest(k, cand, key=lambda x: (-x[0], x[1])))
        beams = new
    final = [(sc + theta[n, path[-1], 0], path) for beam in beams for sc, path in beam]
    final = [x for x in final if x[0] > NEG_INF]
    best = heapq.nsmallest(k, final, key=lambda x: (-x[0], x[1]))
    return [(list(path), float(np.exp(sc - A))) for sc, path in best]
