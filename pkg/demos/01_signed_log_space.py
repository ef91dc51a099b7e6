"""Signed log-space numbers: (log|x|, sign) pairs that can hold negatives
without leaving log space."""

import math

import numpy as np

from structattn.semiring import signexp, slog_add, slog_from_real, slog_mul, slog_sum

a = slog_from_real(-3.5)
b = slog_from_real(2.0)
print("a =", a, "->", signexp(a))
print("a + b =", signexp(slog_add(a, b)))   # -1.5
print("a * b =", signexp(slog_mul(a, b)))   # -7.0

# exact cancellation lands on a canonical zero
print("a + (-a) =", slog_add(a, slog_from_real(3.5)))

# magnitudes far past float range are fine while they stay in log space
huge = slog_from_real(1.0)._replace(log_mag=2000.0)
tiny = huge._replace(sign=-1, log_mag=1999.0)
s = slog_add(huge, tiny)
print("e^2000 - e^1999 = e^%.6f (expected %.6f)" % (s.log_mag, 2000 + math.log1p(-math.exp(-1))))

# array reduction
vals = np.array([1e-300, -2e-300, 4e-300])
lm, sg = np.log(np.abs(vals)), np.sign(vals)
print("sum of tiny values:", slog_sum(lm, sg))
