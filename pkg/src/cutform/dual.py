"""Forward-mode dual scalars, first and second order.

All cut-geometry code in this package is written against plain arithmetic
(`+ - * /`, `gsqrt`, `gabs`, ...) so it runs unchanged on floats, ``Dual1``
or ``Dual2`` values. Comparisons always act on the primal part.
"""

from __future__ import annotations

import math

from .errors import SingularDerivativeError

_NUM = (int, float)


class Dual1:
    """First-order dual number ``val + der * eps`` with ``eps**2 == 0``."""

    __slots__ = ("val", "der")

    def __init__(self, val, der=0.0):
        self.val = float(val)
        self.der = float(der)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual1):
            return Dual1(self.val + other.val, self.der + other.der)
        if isinstance(other, _NUM):
            return Dual1(self.val + other, self.der)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual1):
            return Dual1(self.val - other.val, self.der - other.der)
        if isinstance(other, _NUM):
            return Dual1(self.val - other, self.der)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, _NUM):
            return Dual1(other - self.val, -self.der)
        return NotImplemented

    def __neg__(self):
        return Dual1(-self.val, -self.der)

    def __mul__(self, other):
        if isinstance(other, Dual1):
            return Dual1(self.val * other.val,
                         self.val * other.der + self.der * other.val)
        if isinstance(other, _NUM):
            return Dual1(self.val * other, self.der * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual1):
            if other.val == 0.0:
                raise SingularDerivativeError("division by zero primal part")
            v = self.val / other.val
            return Dual1(v, (self.der - v * other.der) / other.val)
        if isinstance(other, _NUM):
            if other == 0.0:
                raise SingularDerivativeError("division by zero")
            return Dual1(self.val / other, self.der / other)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, _NUM):
            if self.val == 0.0:
                raise SingularDerivativeError("division by zero primal part")
            v = other / self.val
            return Dual1(v, -v * self.der / self.val)
        return NotImplemented

    def __pow__(self, n):
        if not isinstance(n, int):
            return NotImplemented
        if n == 0:
            return Dual1(1.0, 0.0)
        if n < 0:
            return 1.0 / self.__pow__(-n)
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    def __abs__(self):
        if self.val == 0.0:
            raise SingularDerivativeError("abs at zero primal part")
        if self.val < 0.0:
            return Dual1(-self.val, -self.der)
        return Dual1(self.val, self.der)

    # -- comparisons (primal part only) -------------------------------------

    def __lt__(self, other):
        return self.val < _primal(other)

    def __le__(self, other):
        return self.val <= _primal(other)

    def __gt__(self, other):
        return self.val > _primal(other)

    def __ge__(self, other):
        return self.val >= _primal(other)

    def __eq__(self, other):
        return self.val == _primal(other)

    def __ne__(self, other):
        return self.val != _primal(other)

    def __hash__(self):
        return hash((self.val, self.der))

    # -- elementary functions ------------------------------------------------

    def sqrt(self):
        if self.val <= 0.0:
            raise SingularDerivativeError("sqrt requires positive primal part")
        r = math.sqrt(self.val)
        return Dual1(r, self.der / (2.0 * r))

    def sin(self):
        return Dual1(math.sin(self.val), self.der * math.cos(self.val))

    def cos(self):
        return Dual1(math.cos(self.val), -self.der * math.sin(self.val))

    def exp(self):
        e = math.exp(self.val)
        return Dual1(e, self.der * e)

    def __repr__(self):
        return f"Dual1({self.val!r}, {self.der!r})"


class Dual2:
    """Truncated second-order dual in two independent directions.

    Represents ``val + d1*e1 + d2*e2 + d12*e1*e2`` with ``e1**2 == e2**2 == 0``.
    The ``d12`` component of an output is the mixed second derivative with
    respect to the two seeded directions. Collapsing one direction to zero
    reproduces ``Dual1`` in the other.
    """

    __slots__ = ("val", "d1", "d2", "d12")

    def __init__(self, val, d1=0.0, d2=0.0, d12=0.0):
        self.val = float(val)
        self.d1 = float(d1)
        self.d2 = float(d2)
        self.d12 = float(d12)

    def __add__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val + other.val, self.d1 + other.d1,
                         self.d2 + other.d2, self.d12 + other.d12)
        if isinstance(other, _NUM):
            return Dual2(self.val + other, self.d1, self.d2, self.d12)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val - other.val, self.d1 - other.d1,
                         self.d2 - other.d2, self.d12 - other.d12)
        if isinstance(other, _NUM):
            return Dual2(self.val - other, self.d1, self.d2, self.d12)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, _NUM):
            return Dual2(other - self.val, -self.d1, -self.d2, -self.d12)
        return NotImplemented

    def __neg__(self):
        return Dual2(-self.val, -self.d1, -self.d2, -self.d12)

    def __mul__(self, other):
        if isinstance(other, Dual2):
            return Dual2(
                self.val * other.val,
                self.val * other.d1 + self.d1 * other.val,
                self.val * other.d2 + self.d2 * other.val,
                self.val * other.d12 + self.d12 * other.val
                + self.d1 * other.d2 + self.d2 * other.d1,
            )
        if isinstance(other, _NUM):
            return Dual2(self.val * other, self.d1 * other,
                         self.d2 * other, self.d12 * other)
        return NotImplemented

    __rmul__ = __mul__

    def _compose(self, f0, f1, f2):
        # chain rule for a scalar function with derivatives f1, f2 at val
        return Dual2(f0, f1 * self.d1, f1 * self.d2,
                     f1 * self.d12 + f2 * self.d1 * self.d2)

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            if other.val == 0.0:
                raise SingularDerivativeError("division by zero primal part")
            v = other.val
            inv = other._compose(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
            return self * inv
        if isinstance(other, _NUM):
            if other == 0.0:
                raise SingularDerivativeError("division by zero")
            return Dual2(self.val / other, self.d1 / other,
                         self.d2 / other, self.d12 / other)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, _NUM):
            if self.val == 0.0:
                raise SingularDerivativeError("division by zero primal part")
            v = self.val
            return other * self._compose(1.0 / v, -1.0 / (v * v),
                                         2.0 / (v * v * v))
        return NotImplemented

    def __pow__(self, n):
        if not isinstance(n, int):
            return NotImplemented
        if n == 0:
            return Dual2(1.0)
        if n < 0:
            return 1.0 / self.__pow__(-n)
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    def __abs__(self):
        if self.val == 0.0:
            raise SingularDerivativeError("abs at zero primal part")
        return -self if self.val < 0.0 else Dual2(self.val, self.d1,
                                                  self.d2, self.d12)

    def __lt__(self, other):
        return self.val < _primal(other)

    def __le__(self, other):
        return self.val <= _primal(other)

    def __gt__(self, other):
        return self.val > _primal(other)

    def __ge__(self, other):
        return self.val >= _primal(other)

    def __eq__(self, other):
        return self.val == _primal(other)

    def __ne__(self, other):
        return self.val != _primal(other)

    def __hash__(self):
        return hash((self.val, self.d1, self.d2, self.d12))

    def sqrt(self):
        if self.val <= 0.0:
            raise SingularDerivativeError("sqrt requires positive primal part")
        r = math.sqrt(self.val)
        return self._compose(r, 0.5 / r, -0.25 / (r * self.val))

    def sin(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return self._compose(s, c, -s)

    def cos(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return self._compose(c, -s, -c)

    def exp(self):
        e = math.exp(self.val)
        return self._compose(e, e, e)

    def __repr__(self):
        return f"Dual2({self.val!r}, {self.d1!r}, {self.d2!r}, {self.d12!r})"


# -- generic helpers ---------------------------------------------------------

def _primal(x):
    return x.val if isinstance(x, (Dual1, Dual2)) else x


def primal(x):
    """Primal (float) part of a generic scalar."""
    return x.val if isinstance(x, (Dual1, Dual2)) else float(x)


def gsqrt(x):
    if isinstance(x, (Dual1, Dual2)):
        return x.sqrt()
    return math.sqrt(x)


def gabs(x):
    if isinstance(x, (Dual1, Dual2)):
        return abs(x)
    return abs(x)


def gsin(x):
    if isinstance(x, (Dual1, Dual2)):
        return x.sin()
    return math.sin(x)


def gcos(x):
    if isinstance(x, (Dual1, Dual2)):
        return x.cos()
    return math.cos(x)


def gexp(x):
    if isinstance(x, (Dual1, Dual2)):
        return x.exp()
    return math.exp(x)


def gmin(a, b):
    """min by primal part; returns the first argument on ties."""
    return a if _primal(a) <= _primal(b) else b


def gmax(a, b):
    """max by primal part; returns the first argument on ties."""
    return a if _primal(a) >= _primal(b) else b


def ghypot(x, y):
    return gsqrt(x * x + y * y)


def seed(values, i):
    """Dual1 copies of ``values`` with direction ``i`` seeded (der = 1)."""
    n = len(values)
    if not 0 <= i < n:
        raise IndexError(f"seed index {i} out of range for {n} values")
    return [Dual1(float(v), 1.0 if k == i else 0.0)
            for k, v in enumerate(values)]


def seed2(values, i, j):
    """Dual2 copies with e1 seeded at node ``i`` and e2 at node ``j``.

    ``i == j`` seeds both directions on the same entry, which yields the
    diagonal second derivative in the mixed component.
    """
    n = len(values)
    if not 0 <= i < n or not 0 <= j < n:
        raise IndexError("seed index out of range")
    out = []
    for k, v in enumerate(values):
        out.append(Dual2(float(v), 1.0 if k == i else 0.0,
                         1.0 if k == j else 0.0, 0.0))
    return out
