"""Segmentation attention: a two-state chain CRF picks which source positions
to attend to; the context vector is the marginal-weighted sum."""

import numpy as np

from structattn.attention import (build_segmentation_potentials, categorical_weights,
                                  segmentation_context, segmentation_weights)
from structattn.chain_crf import chain_backprop, forward_backward, top_k_sequences, viterbi

rng = np.random.default_rng(0)
n, d = 8, 4
enc = rng.standard_normal((n, d))       # encoder annotations h_1..h_n
query = rng.standard_normal(d)          # decoder state
W = rng.standard_normal((d, d)) * 0.5
b = np.array([[0.5, -0.5], [-0.5, 1.0]])  # favour runs of selected positions

pot = build_segmentation_potentials(enc, query, W, b)
tables, marg = forward_backward(pot)

np.set_printoptions(precision=3, suppress=True)
print("log Z:", marg.log_partition)
print("p(z_i = 1):         ", segmentation_weights(marg))
print("normalised (lam=2): ", segmentation_weights(marg, normalize=True))
print("softmax for contrast:", categorical_weights(enc @ W @ query))
print("context:", segmentation_context(marg, enc, normalize=True))

states, score = viterbi(pot)
print("MAP selection:", states, "score %.3f" % score)
for seq, prob in top_k_sequences(pot, 3):
    print("  %s  p=%.4f" % (seq, prob))

# gradient of a downstream loss w.r.t. the potentials, through the marginals
g = np.zeros_like(marg.unary)
g[:, 1] = 1.0                            # d(loss)/d p(z_i = 1)
grad = chain_backprop(pot, tables, marg, g)
print("d loss / d theta has shape", grad.shape, "and norm %.4f" % np.linalg.norm(grad))
