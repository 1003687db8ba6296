"""Truncated multivariate Taylor arithmetic (forward-mode AD).

A :class:`Jet` stores the Taylor coefficients of a smooth scalar about an
expansion point, up to a fixed total degree, in up to three variables.  The
coefficient attached to a multi-index ``alpha`` is ``D^alpha f / alpha!``, so
multiplication is a plain truncated convolution and factorials appear only in
:func:`extract_derivative`.

Coefficients live in a dense vector ordered by graded lexicographic order
(degree first, then lexicographic), so truncating to a lower order is a prefix
slice.  Arithmetic between jets of different shape is an error; use
``Jet.truncate`` when an operand carries more orders than needed.  Derivatives
physically shrink the order by one, which makes the remaining usable order
explicit in the type rather than a bookkeeping convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (JetDomainError, JetIndexError, JetOrderError,
                     JetShapeError)


@lru_cache(maxsize=None)
def _context(nvars: int, order: int) -> "JetContext":
    return JetContext(nvars, order)


class JetContext:
    """Index tables shared by all jets of one (nvars, order) shape."""

    def __init__(self, nvars, order):
        if nvars < 1 or nvars > 3:
            raise JetIndexError(f"nvars must be 1..3, got {nvars}")
        if order < 0:
            raise JetOrderError(f"order must be >= 0, got {order}")
        self.nvars = nvars
        self.order = order
        self.indices = self._graded_indices(nvars, order)
        self.position = {alpha: k for k, alpha in enumerate(self.indices)}
        self.size = len(self.indices)
        self._build_mul_table()
        self._build_diff_tables()

    @staticmethod
    def _graded_indices(nvars, order):
        # degree first, lexicographic within a degree: truncation is a prefix
        result = []
        for deg in range(order + 1):
            block = []

            def fill(prefix, remaining):
                if len(prefix) == nvars - 1:
                    block.append(tuple(prefix) + (remaining,))
                    return
                for k in range(remaining + 1):
                    fill(prefix + [k], remaining - k)

            fill([], deg)
            block.sort()
            result.extend(block)
        return result

    def _build_mul_table(self):
        I, J, K = [], [], []
        for i, a in enumerate(self.indices):
            da = sum(a)
            for j, b in enumerate(self.indices):
                if da + sum(b) > self.order:
                    continue
                I.append(i)
                J.append(j)
                K.append(self.position[tuple(x + y for x, y in zip(a, b))])
        self._mul_i = np.asarray(I, dtype=np.intp)
        self._mul_j = np.asarray(J, dtype=np.intp)
        self._mul_k = np.asarray(K, dtype=np.intp)

    def _build_diff_tables(self):
        # d/dx_v maps an order-m jet onto the order-(m-1) index list.
        self._diff_src = []
        self._diff_fac = []
        if self.order == 0:
            return
        lower = _context(self.nvars, self.order - 1)
        for v in range(self.nvars):
            src = np.empty(lower.size, dtype=np.intp)
            fac = np.empty(lower.size, dtype=np.float64)
            for k, beta in enumerate(lower.indices):
                shifted = tuple(b + (1 if i == v else 0)
                                for i, b in enumerate(beta))
                src[k] = self.position[shifted]
                fac[k] = beta[v] + 1
            self._diff_src.append(src)
            self._diff_fac.append(fac)

    def convolve(self, a, b):
        return np.bincount(self._mul_k, weights=a[self._mul_i] * b[self._mul_j],
                           minlength=self.size)


@dataclass(frozen=True)
class MultiIndex:
    """Exponent tuple of a partial derivative, with its total degree."""

    exponents: tuple

    @property
    def degree(self):
        return sum(self.exponents)


class Jet:
    """Truncated Taylor expansion of a scalar at a point."""

    __slots__ = ("ctx", "c")

    def __init__(self, ctx, coeffs):
        self.ctx = ctx
        self.c = coeffs

    # --- constructors ---

    @classmethod
    def constant(cls, value, nvars, order):
        ctx = _context(nvars, order)
        c = np.zeros(ctx.size)
        c[0] = float(value)
        return cls(ctx, c)

    @classmethod
    def variable(cls, i, value, nvars, order):
        if not 0 <= i < nvars:
            raise JetIndexError(f"variable index {i} out of range for "
                                f"{nvars} variables")
        ctx = _context(nvars, order)
        c = np.zeros(ctx.size)
        c[0] = float(value)
        if order >= 1:
            unit = tuple(1 if k == i else 0 for k in range(nvars))
            c[ctx.position[unit]] = 1.0
        return cls(ctx, c)

    # --- basic queries ---

    @property
    def nvars(self):
        return self.ctx.nvars

    @property
    def order(self):
        return self.ctx.order

    @property
    def value(self):
        return self.c[0]

    def coeff(self, alpha):
        alpha = tuple(alpha)
        if len(alpha) != self.nvars:
            raise JetIndexError(f"multi-index {alpha} has wrong length")
        if sum(alpha) > self.order:
            raise JetOrderError(f"degree {sum(alpha)} exceeds order "
                                f"{self.order}")
        return self.c[self.ctx.position[alpha]]

    def gradient(self):
        """First-derivative values, one per variable."""
        if self.order < 1:
            raise JetOrderError("order 0 jet has no gradient")
        out = np.empty(self.nvars)
        for v in range(self.nvars):
            unit = tuple(1 if k == v else 0 for k in range(self.nvars))
            out[v] = self.c[self.ctx.position[unit]]
        return out

    def truncate(self, order):
        if order > self.order:
            raise JetOrderError(f"cannot extend order {self.order} to {order}")
        if order == self.order:
            return self
        ctx = _context(self.nvars, order)
        return Jet(ctx, self.c[:ctx.size].copy())

    def derivative(self, v):
        """Partial derivative jet; the result is one order shallower."""
        if not 0 <= v < self.nvars:
            raise JetIndexError(f"variable index {v} out of range")
        if self.order == 0:
            raise JetOrderError("order exhausted: cannot differentiate an "
                                "order 0 jet")
        lower = _context(self.nvars, self.order - 1)
        src = self.ctx._diff_src[v]
        fac = self.ctx._diff_fac[v]
        return Jet(lower, self.c[src] * fac)

    # --- arithmetic ---

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.ctx is not self.ctx:
                raise JetShapeError(
                    f"shape mismatch: ({self.nvars} vars, order {self.order})"
                    f" vs ({other.nvars} vars, order {other.order})")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return None  # scalar fast path
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            c = self.c.copy()
            c[0] += float(other)
            return Jet(self.ctx, c)
        return Jet(self.ctx, self.c + o.c)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            c = self.c.copy()
            c[0] -= float(other)
            return Jet(self.ctx, c)
        return Jet(self.ctx, self.c - o.c)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return Jet(self.ctx, -self.c)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return Jet(self.ctx, self.c * float(other))
        return Jet(self.ctx, self.ctx.convolve(self.c, o.c))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return Jet(self.ctx, self.c / float(other))
        return self * _reciprocal(o)

    def __rtruediv__(self, other):
        return _reciprocal(self) * float(other)

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)):
            return pow_int(self, int(p))
        return pow_real(self, float(p))

    def __repr__(self):
        head = np.array2string(self.c[:min(6, self.ctx.size)], precision=6)
        return f"Jet(nvars={self.nvars}, order={self.order}, c={head}...)"


# --- module-level operations (names follow the public surface) -------------

def make_variable(i, value, nvars, order):
    """Seed jet for coordinate ``x_i``: value plus a unit linear term."""
    return Jet.variable(i, value, nvars, order)


def make_constant(value, nvars, order):
    return Jet.constant(value, nvars, order)


def extract_derivative(a, alpha):
    """True partial derivative ``D^alpha a`` (coefficient times alpha!)."""
    alpha = tuple(int(x) for x in alpha)
    coeff = a.coeff(alpha)
    fac = 1.0
    for e in alpha:
        fac *= math.factorial(e)
    return coeff * fac


def _compose(a, univ_coeffs):
    """Evaluate the univariate series ``sum t_k h^k`` at the nilpotent part
    of ``a`` by Horner's rule (at most ``order`` jet multiplications)."""
    h = Jet(a.ctx, a.c.copy())
    h.c[0] = 0.0
    out = Jet.constant(univ_coeffs[-1], a.nvars, a.order)
    for t in reversed(univ_coeffs[:-1]):
        out = out * h + t
    return out


def _reciprocal(a):
    c = a.value
    if c == 0.0:
        raise JetDomainError("div", c,
                             "division by jet with zero constant term")
    t = [1.0 / c]
    for _ in range(a.order):
        t.append(-t[-1] / c)
    return _compose(a, t)


def exp(a):
    if not isinstance(a, Jet):
        return math.exp(a)
    e = math.exp(a.value)
    t = [e]
    for k in range(1, a.order + 1):
        t.append(t[-1] / k)
    return _compose(a, t)


def log(a):
    if not isinstance(a, Jet):
        if a <= 0:
            raise JetDomainError("log", a)
        return math.log(a)
    c = a.value
    if c <= 0.0:
        raise JetDomainError("log", c)
    t = [math.log(c)]
    for k in range(1, a.order + 1):
        t.append((-1.0) ** (k - 1) / (k * c ** k))
    return _compose(a, t)


def sqrt(a):
    if not isinstance(a, Jet):
        if a <= 0:
            raise JetDomainError("sqrt", a)
        return math.sqrt(a)
    c = a.value
    if c <= 0.0:
        raise JetDomainError("sqrt", c)
    t = [math.sqrt(c)]
    for k in range(1, a.order + 1):
        t.append(t[-1] * (0.5 - (k - 1)) / (k * c))
    return _compose(a, t)


def pow_real(a, p):
    if not isinstance(a, Jet):
        if a <= 0:
            raise JetDomainError("pow_real", a)
        return a ** p
    c = a.value
    if c <= 0.0:
        raise JetDomainError("pow_real", c)
    t = [c ** p]
    for k in range(1, a.order + 1):
        t.append(t[-1] * (p - (k - 1)) / (k * c))
    return _compose(a, t)


def pow_int(a, n):
    if not isinstance(a, Jet):
        return a ** n
    if n < 0:
        return pow_int(_reciprocal(a), -n)
    out = Jet.constant(1.0, a.nvars, a.order)
    base = a
    while n:
        if n & 1:
            out = out * base
        n >>= 1
        if n:
            base = base * base
    return out


def _trig(a, f0, f1, f2, f3, name):
    """Series for functions whose derivatives cycle with period 4."""
    cycle = (f0, f1, f2, f3)
    t = []
    fac = 1.0
    for k in range(a.order + 1):
        if k > 0:
            fac /= k
        t.append(cycle[k % 4] * fac)
    return _compose(a, t)


def sin(a):
    if not isinstance(a, Jet):
        return math.sin(a)
    s, c = math.sin(a.value), math.cos(a.value)
    return _trig(a, s, c, -s, -c, "sin")


def cos(a):
    if not isinstance(a, Jet):
        return math.cos(a)
    s, c = math.sin(a.value), math.cos(a.value)
    return _trig(a, c, -s, -c, s, "cos")


def _ode_quadratic(a, y0, sign):
    # y' = 1 + sign*y^2: coefficient recurrence for tan (+1) and tanh (-1).
    t = [y0]
    for k in range(a.order):
        conv = sum(t[i] * t[k - i] for i in range(k + 1))
        t.append(((1.0 if k == 0 else 0.0) + sign * conv) / (k + 1))
    return _compose(a, t)


def tan(a):
    if not isinstance(a, Jet):
        return math.tan(a)
    return _ode_quadratic(a, math.tan(a.value), +1.0)


def tanh(a):
    if not isinstance(a, Jet):
        return math.tanh(a)
    return _ode_quadratic(a, math.tanh(a.value), -1.0)


def sinh(a):
    if not isinstance(a, Jet):
        return math.sinh(a)
    sh, ch = math.sinh(a.value), math.cosh(a.value)
    return _trig(a, sh, ch, sh, ch, "sinh")


def cosh(a):
    if not isinstance(a, Jet):
        return math.cosh(a)
    sh, ch = math.sinh(a.value), math.cosh(a.value)
    return _trig(a, ch, sh, ch, sh, "cosh")


#: Whitelisted elementary functions, by name (used by the expression DSL).
FUNCTIONS = {
    "sin": sin, "cos": cos, "tan": tan,
    "exp": exp, "log": log, "sqrt": sqrt,
    "sinh": sinh, "cosh": cosh, "tanh": tanh,
}


def elementary(name, a):
    """Apply a whitelisted elementary function to a jet by name."""
    try:
        f = FUNCTIONS[name]
    except KeyError:
        raise JetDomainError(name, None, f"unknown function {name!r}")
    return f(a)
