"""Toy corpus of prefix -> infix formulas, and fitting CRF potentials to target
marginals by backpropagating through the inference kernels."""

import numpy as np

from structattn.chain_crf import ChainPotentials, forward_backward
from structattn.toy import evaluate_infix, evaluate_prefix, generate_formula, infix_of_prefix, train_to_marginals
from structattn.tree_crf import eisner_viterbi, heads_to_matrix

prefix = "( * ( + ( + 15 7 ) 1 8 ) ( + 19 0 11 ) )"
print(prefix, "\n  ->", " ".join(infix_of_prefix(prefix)))

for p, i in generate_formula(rng_seed=7, depth_range=(2, 3), count=4):
    print("%-50s = %d" % (" ".join(p), evaluate_prefix(p)))
    print("%-50s = %d" % (" ".join(i), evaluate_infix(i)))

# chain: recover the marginals of a hidden random CRF
rng = np.random.default_rng(0)
_, target = forward_backward(ChainPotentials(rng.uniform(-1, 1, (6, 2, 2))))
pot, losses = train_to_marginals("chain", target.unary, steps=300)
for k in (0, 10, 50, 300):
    print("step %3d  loss %.3e" % (k, losses[k]))

# tree: drive the distribution toward a single parse
heads = [1, 2, 2, 4]
pot, losses = train_to_marginals("tree", heads_to_matrix(heads, 5), steps=300)
print("target", heads, "viterbi", eisner_viterbi(pot)[0], "final loss %.2e" % losses[-1])
