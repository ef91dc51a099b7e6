"""Brute-force references for the fast kernels.

Nothing here shares code with ``chain_crf`` / ``tree_crf`` beyond the
log-space primitives and the tree validity predicate: chains are scored by
indexing every sequence explicitly and trees by filtering every head
assignment.
"""

from dataclasses import dataclass
from functools import lru_cache
import itertools
from typing import NamedTuple

import numpy as np

from .exceptions import InstanceTooLargeError
from .semiring import logsumexp
from .tree_crf import validate_projective_tree

MAX_CHAIN_SEQUENCES = 10 ** 6
MAX_TREE_LENGTH = 8


class ChainEnumeration(NamedTuple):
    log_partition: float
    unary: np.ndarray
    pairwise: np.ndarray
    sequences: np.ndarray  # (|C|^n, n) state sequences in lexicographic order
    scores: np.ndarray  # unnormalised log-score of each sequence


class TreeEnumeration(NamedTuple):
    log_partition: float
    p: np.ndarray
    trees: list  # [(heads, score)]


def enumerate_chain(pot):
    theta = pot.theta
    n, C = pot.n, pot.num_states
    if C ** n > MAX_CHAIN_SEQUENCES:
        raise InstanceTooLargeError("%d^%d sequences exceeds the oracle limit" % (C, n))
    seqs = np.array(list(itertools.product(range(C), repeat=n)), dtype=int).reshape(-1, n)
    path = np.concatenate([np.zeros((len(seqs), 1), int), seqs, np.zeros((len(seqs), 1), int)], axis=1)
    scores = np.zeros(len(seqs))
    for i in range(n + 1):
        scores += theta[i, path[:, i], path[:, i + 1]]
    A = logsumexp(scores)
    prob = np.exp(scores - A)

    unary = np.zeros((n, C))
    for i in range(n):
        unary[i] = np.bincount(seqs[:, i], weights=prob, minlength=C)
    pairwise = np.zeros((max(n - 1, 0), C, C))
    for i in range(n - 1):
        flat = np.bincount(seqs[:, i] * C + seqs[:, i + 1], weights=prob, minlength=C * C)
        pairwise[i] = flat.reshape(C, C)
    return ChainEnumeration(A, unary, pairwise, seqs, scores)


@lru_cache(maxsize=None)
def projective_trees(n):
    """All projective head arrays for a sentence of length ``n`` (root included)."""
    if n > MAX_TREE_LENGTH:
        raise InstanceTooLargeError("tree enumeration limited to n <= %d" % MAX_TREE_LENGTH)
    choices = [[h for h in range(1, n + 1) if h != j] for j in range(2, n + 1)]
    return tuple(heads for heads in itertools.product(*choices) if validate_projective_tree(heads, n))


def enumerate_projective_trees(pot):
    theta = pot.theta
    n = pot.n
    trees = projective_trees(n)
    H = np.array(trees, dtype=int).reshape(len(trees), n - 1)
    children = np.arange(1, n)
    scores = theta[H - 1, children].sum(axis=1)
    A = logsumexp(scores)
    prob = np.exp(scores - A)
    p = np.zeros((n, n))
    for col, j in enumerate(children):
        p[:, j] = np.bincount(H[:, col] - 1, weights=prob, minlength=n)
    return TreeEnumeration(A, p, [(list(h), float(sc)) for h, sc in zip(trees, scores)])


def finite_diff_grad(f, point, step=1e-5):
    """Central-difference gradient of scalar ``f`` at ``point`` (any shape)."""
    x = np.array(point, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        if not np.isfinite(orig):
            continue
        flat[j] = orig + step
        fp = f(x)
        flat[j] = orig - step
        fm = f(x)
        flat[j] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError("non-finite function value near coordinate %d" % j)
        gflat[j] = (fp - fm) / (2 * step)
    return grad


@dataclass
class GradCheckReport:
    max_abs_err: float
    max_rel_err: float
    worst_coordinate: tuple
    passed: bool

    def to_dict(self):
        return {
            "max_abs_err": self.max_abs_err,
            "max_rel_err": self.max_rel_err,
            "worst_coordinate": list(self.worst_coordinate),
            "passed": self.passed,
        }


def compare_gradients(analytic, numeric, abs_tol=1e-4, rel_tol=1e-3):
    """Coordinatewise check: each entry must be within ``abs_tol`` or within
    ``rel_tol`` relative to the numeric value."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    abs_err = np.abs(analytic - numeric)
    rel_err = abs_err / np.maximum(np.abs(numeric), np.finfo(float).tiny)
    ok = (abs_err <= abs_tol) | (rel_err <= rel_tol)
    # report the coordinate failing worst, else the largest absolute error
    badness = np.where(ok, 0.0, np.minimum(abs_err / abs_tol, rel_err / rel_tol))
    worst = np.argmax(badness) if not ok.all() else np.argmax(abs_err)
    worst = tuple(int(i) for i in np.unravel_index(worst, abs_err.shape)) if abs_err.size else ()
    return GradCheckReport(
        max_abs_err=float(abs_err.max(initial=0.0)),
        max_rel_err=float(np.where(abs_err > 0, rel_err, 0.0).max(initial=0.0)),
        worst_coordinate=worst,
        passed=bool(ok.all()),
    )
