"""Syntactic attention: a projective dependency-tree CRF over the source words.
Each word attends to its soft parent."""

import numpy as np

from structattn.attention import soft_parent_context
from structattn.toy import ScoreParams, mlp_score
from structattn.tree_crf import TreePotentials, eisner_viterbi, inside_outside, inside_outside_backprop

rng = np.random.default_rng(3)
words = ["<root>", "the", "cat", "sat", "down"]
n, d = len(words), 6
ann = rng.standard_normal((n, d))
params = ScoreParams.random(d, rng)

theta = np.zeros((n, n))
for i in range(n):
    for j in range(1, n):
        if i != j:
            theta[i, j] = 3 * mlp_score(ann[i], ann[j], params)

pot = TreePotentials(theta)
tables, marg = inside_outside(pot)

np.set_printoptions(precision=3, suppress=True)
print("edge marginals p[parent, child]:")
print(marg.p)
print("column sums (one head per word):", marg.p[:, 1:].sum(axis=0))

heads, score = eisner_viterbi(pot)
for j, h in enumerate(heads, start=2):
    print("  %-5s <- %s" % (words[j - 1], words[h - 1]))

ctx = soft_parent_context(marg, ann)
print("soft-parent context rows:", ctx.shape)

# backprop a random upstream gradient on the marginals to the potentials
g = rng.standard_normal((n, n))
grad = inside_outside_backprop(pot, tables, marg, g)
print("gradient on arc potentials:")
print(grad)
