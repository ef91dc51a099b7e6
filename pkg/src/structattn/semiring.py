"""Signed log-space arithmetic.

A real number ``a`` is stored as the pair ``(log|a|, sign(a))`` so that
sums and products of values spanning many orders of magnitude, including
negative ones, stay representable.  Zero is ``(-inf, +1)``.

Two layers are provided:

* scalar helpers on :class:`SignedLogValue` (``slog_from_real``,
  ``slog_add``, ``slog_mul``, ``signexp``), which follow the four-row
  sign table literally, and
* array helpers (``slog_from_array``, ``slog_add_arrays``, ``slog_sum``,
  ``signexp_array``) used by the dynamic-programming kernels.  Arrays are
  carried as a ``(log_mag, sign)`` pair of equally shaped float arrays,
  with signs stored as +1.0 / -1.0.
"""

import math
from typing import NamedTuple

import numpy as np

NEG_INF = -math.inf
# exp() overflows above this
_MAX_LOG = math.log(np.finfo(np.float64).max)


class SignedLogValue(NamedTuple):
    log_mag: float
    sign: int = 1

    def __repr__(self):
        return "SignedLogValue(log_mag=%r, sign=%s)" % (self.log_mag, "+" if self.sign > 0 else "-")

    @property
    def is_zero(self):
        return self.log_mag == NEG_INF


ZERO = SignedLogValue(NEG_INF, 1)
ONE = SignedLogValue(0.0, 1)


def slog_from_real(x):
    x = float(x)
    if x == 0.0:
        return ZERO
    return SignedLogValue(math.log(abs(x)), 1 if x > 0 else -1)


def slog_add(a, b):
    """Signed log-space addition.

    With ``|a| >= |b|`` and ``d = exp(l_b - l_a)`` the result magnitude is
    ``l_a + log1p(d)`` for equal signs and ``l_a + log1p(-d)`` otherwise,
    always carrying the sign of the larger operand.
    """
    if a.log_mag < b.log_mag:
        a, b = b, a
    if b.log_mag == NEG_INF:
        return a if not a.is_zero else ZERO
    d = math.exp(b.log_mag - a.log_mag)
    if a.sign == b.sign:
        return SignedLogValue(a.log_mag + math.log1p(d), a.sign)
    if d == 1.0:
        return ZERO
    return SignedLogValue(a.log_mag + math.log1p(-d), a.sign)


def slog_mul(a, b):
    if a.is_zero or b.is_zero:
        return ZERO
    return SignedLogValue(a.log_mag + b.log_mag, a.sign * b.sign)


def slog_neg(a):
    if a.is_zero:
        return ZERO
    return SignedLogValue(a.log_mag, -a.sign)


def signexp(a):
    """Map back to a real number; raises OverflowError past float range."""
    if a.is_zero:
        return 0.0
    if a.log_mag > _MAX_LOG:
        raise OverflowError("signexp: log magnitude %g exceeds double range" % a.log_mag)
    return a.sign * math.exp(a.log_mag)


# ----------------------------------------------------------------------------
# array layer

def slog_zeros(shape):
    return np.full(shape, NEG_INF), np.ones(shape)


def slog_from_array(x):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_mag = np.log(np.abs(x))
    sign = np.where(x < 0, -1.0, 1.0)
    return log_mag, sign


def signexp_array(log_mag, sign):
    log_mag = np.asarray(log_mag)
    if np.any(log_mag > _MAX_LOG):
        raise OverflowError("signexp: log magnitude exceeds double range")
    return sign * np.exp(log_mag)


def slog_mul_arrays(la, sa, lb, sb):
    # -inf + finite stays -inf; no +inf appears in these tables
    return la + lb, sa * sb


def slog_add_arrays(la, sa, lb, sb):
    """Elementwise signed log-space addition, broadcasting like numpy."""
    la, sa, lb, sb = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (la, sa, lb, sb)))
    swap = lb > la
    hi_l = np.where(swap, lb, la)
    hi_s = np.where(swap, sb, sa)
    lo_l = np.where(swap, la, lb)
    lo_s = np.where(swap, sa, sb)
    with np.errstate(invalid="ignore"):
        d = np.exp(lo_l - hi_l)
    d = np.where(np.isneginf(hi_l), 0.0, d)
    same = hi_s == lo_s
    with np.errstate(divide="ignore"):
        out_l = hi_l + np.where(same, np.log1p(d), np.log1p(-d))
    out_s = hi_s.copy()
    zero = np.isneginf(out_l)
    out_l = np.where(zero, NEG_INF, out_l)
    out_s[zero] = 1.0
    return out_l, out_s


def slog_sum(log_mag, sign, axis=None):
    """Signed log-space reduction (the semifield sum) along ``axis``."""
    log_mag = np.asarray(log_mag, dtype=np.float64)
    sign = np.asarray(sign, dtype=np.float64)
    m = np.max(log_mag, axis=axis, keepdims=True)
    m_safe = np.where(np.isneginf(m), 0.0, m)
    total = np.sum(sign * np.exp(log_mag - m_safe), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out_l = np.log(np.abs(total)) + m_safe
    out_s = np.where(total < 0, -1.0, 1.0)
    out_l = np.where(total == 0, NEG_INF, out_l)
    if axis is None:
        return float(out_l.reshape(())), float(out_s.reshape(()))
    return np.squeeze(out_l, axis=axis), np.squeeze(out_s, axis=axis)


def logsumexp(x, axis=None):
    """Plain (unsigned) log-space sum that tolerates all -inf slices."""
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    m_safe = np.where(np.isneginf(m), 0.0, m)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m_safe), axis=axis, keepdims=True)) + m_safe
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
