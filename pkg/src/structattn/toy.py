"""Desk-scale demonstrations: scoring functions, the prefix->infix formula
corpus, and a trainer that fits potentials to target marginals through the
structured layers.
"""

from dataclasses import dataclass
from typing import List, Union

import numpy as np

from .chain_crf import ChainPotentials, chain_backprop, forward_backward
from .exceptions import FormulaSyntaxError, InfeasibleTargetError
from .tree_crf import TreePotentials, inside_outside, inside_outside_backprop

OPERATORS = ("+", "*")
MAX_LEAF = 20
MIN_DEPTH, MAX_DEPTH = 2, 6


# ----------------------------------------------------------------------------
# scoring functions

@dataclass
class ScoreParams:
    s: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros(d), np.zeros((d, d)), np.zeros((d, d)), np.zeros(d))

    @classmethod
    def random(cls, d, rng, scale=0.5):
        return cls(*(scale * rng.standard_normal(shape) for shape in (d, (d, d), (d, d), d)))


def mlp_score(h_i, h_j, params):
    """``tanh(s . tanh(W1 h_i + W2 h_j + b))`` -- score of the arc i -> j."""
    hidden = np.tanh(params.W1 @ h_i + params.W2 @ h_j + params.b)
    return float(np.tanh(params.s @ hidden))


def mlp_score_grad(h_i, h_j, params):
    """Gradients of :func:`mlp_score` with respect to ``h_i`` and ``h_j``."""
    hidden = np.tanh(params.W1 @ h_i + params.W2 @ h_j + params.b)
    out = np.tanh(params.s @ hidden)
    back = (1 - out ** 2) * params.s * (1 - hidden ** 2)
    return params.W1.T @ back, params.W2.T @ back


def bilinear_score(h_i, q, W):
    return float(h_i @ W @ q)


def bilinear_score_grad(h_i, q, W):
    return W @ q, W.T @ h_i


# ----------------------------------------------------------------------------
# formulas

@dataclass
class Formula:
    op: str
    children: List[Union["Formula", int]]

    @property
    def depth(self):
        return 1 + max(c.depth if isinstance(c, Formula) else 0 for c in self.children)

    def prefix_tokens(self):
        out = ["(", self.op]
        for c in self.children:
            out += c.prefix_tokens() if isinstance(c, Formula) else [str(c)]
        out.append(")")
        return out

    def infix_tokens(self):
        out = []
        for k, c in enumerate(self.children):
            if k:
                out.append(self.op)
            if isinstance(c, Formula):
                out += ["("] + c.infix_tokens() + [")"]
            else:
                out.append(str(c))
        return out

    def value(self):
        vals = [c.value() if isinstance(c, Formula) else c for c in self.children]
        if self.op == "+":
            return sum(vals)
        result = 1
        for v in vals:
            result *= v
        return result


def _tokens(text):
    return text.split() if isinstance(text, str) else list(text)


def parse_prefix(tokens):
    """Parse prefix tokens into a :class:`Formula` (or an int for a bare leaf)."""
    toks = _tokens(tokens)
    if not toks:
        raise FormulaSyntaxError("empty expression", 0)

    def parse(pos):
        if pos >= len(toks):
            raise FormulaSyntaxError("unexpected end of input", pos)
        tok = toks[pos]
        if tok == "(":
            if pos + 1 >= len(toks) or toks[pos + 1] not in OPERATORS:
                raise FormulaSyntaxError("expected operator after '('", pos + 1)
            op = toks[pos + 1]
            pos += 2
            children = []
            while pos < len(toks) and toks[pos] != ")":
                child, pos = parse(pos)
                children.append(child)
            if pos >= len(toks):
                raise FormulaSyntaxError("unclosed '('", pos)
            if len(children) < 2:
                raise FormulaSyntaxError("operator needs at least two operands", pos)
            return Formula(op, children), pos + 1
        if tok.isdigit():
            return int(tok), pos + 1
        raise FormulaSyntaxError("unexpected token %r" % tok, pos)

    tree, end = parse(0)
    if end != len(toks):
        raise FormulaSyntaxError("trailing tokens", end)
    return tree


def infix_of_prefix(tokens):
    tree = parse_prefix(tokens)
    if isinstance(tree, int):
        return [str(tree)]
    return tree.infix_tokens()


def evaluate_prefix(tokens):
    tree = parse_prefix(tokens)
    return tree if isinstance(tree, int) else tree.value()


def evaluate_infix(tokens):
    """Evaluate an infix token list with the usual precedence of * over +."""
    toks = _tokens(tokens)

    def expr(pos):
        total, pos = term(pos)
        while pos < len(toks) and toks[pos] == "+":
            v, pos = term(pos + 1)
            total += v
        return total, pos

    def term(pos):
        total, pos = atom(pos)
        while pos < len(toks) and toks[pos] == "*":
            v, pos = atom(pos + 1)
            total *= v
        return total, pos

    def atom(pos):
        if pos >= len(toks):
            raise FormulaSyntaxError("unexpected end of input", pos)
        if toks[pos] == "(":
            v, pos = expr(pos + 1)
            if pos >= len(toks) or toks[pos] != ")":
                raise FormulaSyntaxError("expected ')'", pos)
            return v, pos + 1
        if toks[pos].isdigit():
            return int(toks[pos]), pos + 1
        raise FormulaSyntaxError("unexpected token %r" % toks[pos], pos)

    value, end = expr(0)
    if end != len(toks):
        raise FormulaSyntaxError("trailing tokens", end)
    return value


def random_formula(rng, depth):
    """Formula of exactly ``depth`` operator levels: arity uniform in {2,3,4},
    operator uniform, one child forced to depth ``depth - 1``."""
    arity = int(rng.integers(2, 5))
    op = OPERATORS[int(rng.integers(len(OPERATORS)))]
    deep = int(rng.integers(arity))
    children = []
    for k in range(arity):
        d = depth - 1 if k == deep else int(rng.integers(depth))
        children.append(random_formula(rng, d) if d > 0 else int(rng.integers(MAX_LEAF + 1)))
    return Formula(op, children)


def generate_formula(rng_seed, depth_range=(2, 4), count=1):
    """``count`` (prefix, infix) token-list pairs, split evenly over the depth
    buckets in ``depth_range`` (inclusive) and interleaved by depth.

    Randomness comes from ``numpy.random.default_rng(rng_seed)`` (PCG64).
    """
    lo, hi = depth_range
    if lo > hi:
        raise ValueError("empty depth range %r" % (depth_range,))
    if lo < MIN_DEPTH or hi > MAX_DEPTH:
        raise ValueError("depth range must lie within [%d, %d]" % (MIN_DEPTH, MAX_DEPTH))
    rng = np.random.default_rng(rng_seed)
    depths = list(range(lo, hi + 1))
    pairs = []
    for k in range(count):
        f = random_formula(rng, depths[k % len(depths)])
        pairs.append((f.prefix_tokens(), f.infix_tokens()))
    return pairs


def write_corpus(pairs, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for prefix, infix in pairs:
            fh.write(" ".join(prefix) + "\t" + " ".join(infix) + "\n")


def read_corpus(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            prefix, infix = line.rstrip("\n").split("\t")
            pairs.append((prefix.split(), infix.split()))
    return pairs


def prefix_accuracy(predicted, gold):
    """Fraction of gold tokens reproduced before the first mistake."""
    predicted, gold = _tokens(predicted), _tokens(gold)
    if not gold:
        return 1.0
    k = 0
    for p, g in zip(predicted, gold):
        if p != g:
            break
        k += 1
    return k / len(gold)


# ----------------------------------------------------------------------------
# training potentials to match target marginals

FEASIBILITY_TOL = 1e-6


def check_chain_targets(targets):
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim != 2:
        raise InfeasibleTargetError("chain targets must be an (n, C) table")
    if np.any(t < -FEASIBILITY_TOL) or np.any(t > 1 + FEASIBILITY_TOL):
        raise InfeasibleTargetError("marginals must lie in [0, 1]")
    if np.any(np.abs(t.sum(axis=1) - 1) > FEASIBILITY_TOL):
        raise InfeasibleTargetError("each position's marginals must sum to 1")
    return t


def check_tree_targets(targets):
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 2:
        raise InfeasibleTargetError("tree targets must be an (n, n) matrix with n >= 2")
    if np.any(t < -FEASIBILITY_TOL) or np.any(t > 1 + FEASIBILITY_TOL):
        raise InfeasibleTargetError("marginals must lie in [0, 1]")
    if np.any(np.abs(np.diag(t)) > FEASIBILITY_TOL) or np.any(np.abs(t[:, 0]) > FEASIBILITY_TOL):
        raise InfeasibleTargetError("self-arcs and arcs into the root must have probability 0")
    if np.any(np.abs(t[:, 1:].sum(axis=0) - 1) > FEASIBILITY_TOL):
        raise InfeasibleTargetError("each word must have exactly one head in expectation")
    return t


def train_to_marginals(kind, targets, init_seed=0, steps=2000, learning_rate=0.5, init_scale=0.1):
    """Gradient descent on ``sum((p(theta) - targets)^2)``.

    Returns ``(potentials, losses)`` where ``losses[k]`` is the loss after
    ``k`` updates (so ``len(losses) == steps + 1``).
    """
    rng = np.random.default_rng(init_seed)
    if kind == "chain":
        t = check_chain_targets(targets)
        n, C = t.shape
        theta = init_scale * rng.standard_normal((n + 1, C, C))

        def step(theta):
            pot = ChainPotentials(theta)
            tables, marg = forward_backward(pot)
            diff = marg.unary - t
            return float(np.sum(diff ** 2)), lambda: chain_backprop(pot, tables, marg, 2 * diff)
        make = ChainPotentials
    elif kind == "tree":
        t = check_tree_targets(targets)
        n = t.shape[0]
        mask = ~np.eye(n, dtype=bool)
        mask[:, 0] = False
        theta = init_scale * rng.standard_normal((n, n))

        def step(theta):
            pot = TreePotentials(theta)
            tables, marg = inside_outside(pot)
            diff = np.where(mask, marg.p - t, 0.0)
            return float(np.sum(diff ** 2)), lambda: inside_outside_backprop(pot, tables, marg, 2 * diff)
        make = TreePotentials
    else:
        raise ValueError("kind must be 'chain' or 'tree', got %r" % (kind,))

    losses = []
    for _ in range(steps):
        loss, grad = step(theta)
        losses.append(loss)
        theta = theta - learning_rate * grad()
    losses.append(step(theta)[0])
    return make(theta), losses


def losses_to_csv(losses):
    lines = ["step,loss"]
    lines += ["%d,%.17g" % (k, v) for k, v in enumerate(losses)]
    return "\n".join(lines) + "\n"
