"""Multi-hop fact selection: a K-step chain whose states are facts.  Binary
mode forbids picking the same fact twice in a row."""

import numpy as np

from structattn.attention import build_qa_potentials, categorical_weights, qa_context
from structattn.chain_crf import forward_backward, viterbi

rng = np.random.default_rng(4)
K, n, d = 2, 5, 8
facts = rng.standard_normal((K, n, d))
query = rng.standard_normal((K, d))
outputs = [rng.standard_normal((n, d)) for _ in range(K)]

np.set_printoptions(precision=3, suppress=True)
for mode in ("unary", "binary"):
    pot = build_qa_potentials(facts, query, mode)
    _, marg = forward_backward(pot)
    print(mode)
    print("  hop marginals:\n", marg.unary)
    if mode == "binary":
        print("  diagonal of pairwise marginals:", np.diag(marg.pairwise[0]))
    print("  best fact chain (0-based):", viterbi(pot)[0])
    print("  answer vector norm: %.4f" % np.linalg.norm(qa_context(marg, outputs)))

# with independent hops the unary marginals are just per-hop softmaxes
print("softmax of hop 1 scores:", categorical_weights(facts[0] @ query[0]))
