"""Sparse multivariate polynomials with graded-lexicographic monomial indexing.

A monomial is a tuple of nonnegative exponents.  The canonical order sorts by
total degree first and then lexicographically on the exponent tuple, so
``basis(n, t)`` is strictly increasing under :func:`grlex_key`.
"""

import itertools
import math

import numpy as np

from mlsos.errors import CapExceeded

CLEAN_TOL = 1e-15
BASIS_CAP = 10**6


def grlex_key(mono):
    return (sum(mono), mono)


def _exponents(n, deg):
    """All exponent tuples of length n with total degree exactly ``deg``."""
    if n == 1:
        yield (deg,)
        return
    for first in range(deg + 1):
        for rest in _exponents(n - 1, deg - first):
            yield (first,) + rest


def basis(n, t, cap=BASIS_CAP):
    """All monomials in n variables of degree <= t, in increasing graded-lex order."""
    if n < 1 or t < 0:
        raise ValueError("need n >= 1 and t >= 0")
    size = math.comb(n + t, t)
    if size > cap:
        raise CapExceeded(f"monomial basis of size {size} exceeds cap {cap}")
    out = []
    for deg in range(t + 1):
        out.extend(sorted(_exponents(n, deg)))
    return out


def mono_add(m1, m2):
    return tuple(i + j for i, j in zip(m1, m2))


class Poly:
    """A polynomial in ``n`` variables stored as ``{monomial: coefficient}``."""

    __slots__ = ("n", "terms")

    def __init__(self, n, terms=None):
        self.n = n
        self.terms = {}
        if terms:
            for m, c in terms.items():
                m = tuple(m)
                if len(m) != n:
                    raise ValueError(f"monomial {m} does not have {n} exponents")
                if abs(c) >= CLEAN_TOL:
                    self.terms[m] = float(c)

    @classmethod
    def constant(cls, n, c):
        return cls(n, {(0,) * n: c})

    @classmethod
    def var(cls, n, k, coeff=1.0):
        e = [0] * n
        e[k] = 1
        return cls(n, {tuple(e): coeff})

    @classmethod
    def affine(cls, const, lin):
        """``const + lin^T x``."""
        lin = np.asarray(lin, dtype=float)
        n = lin.size
        p = cls.constant(n, const)
        for k in np.flatnonzero(lin):
            p.terms[tuple(int(i == k) for i in range(n))] = float(lin[k])
        p._clean()
        return p

    @classmethod
    def from_gram(cls, G, mons):
        """``[x]^T G [x]`` for the monomial vector ``mons``."""
        n = len(mons[0])
        acc = {}
        G = np.asarray(G, dtype=float)
        for i, mi in enumerate(mons):
            for j, mj in enumerate(mons):
                if G[i, j] != 0.0:
                    m = mono_add(mi, mj)
                    acc[m] = acc.get(m, 0.0) + G[i, j]
        return cls(n, acc)

    def _clean(self):
        self.terms = {m: c for m, c in self.terms.items() if abs(c) >= CLEAN_TOL}
        return self

    def _check(self, other):
        if other.n != self.n:
            raise ValueError("polynomials have different variable counts")

    def _lift(self, other):
        if isinstance(other, Poly):
            self._check(other)
            return other
        return Poly.constant(self.n, float(other))

    def copy(self):
        p = Poly(self.n)
        p.terms = dict(self.terms)
        return p

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return Poly(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.n, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly(self.n, {m: c * float(other) for m, c in self.terms.items()})
        self._check(other)
        out = {}
        for (m1, c1), (m2, c2) in itertools.product(self.terms.items(), other.terms.items()):
            m = mono_add(m1, m2)
            out[m] = out.get(m, 0.0) + c1 * c2
        return Poly(self.n, out)

    __rmul__ = __mul__

    def __pow__(self, k):
        out = Poly.constant(self.n, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __repr__(self):
        if not self.terms:
            return "Poly(0)"
        parts = []
        for m in sorted(self.terms, key=grlex_key):
            name = "*".join(f"x{k}" + (f"^{e}" if e > 1 else "") for k, e in enumerate(m) if e)
            parts.append(f"{self.terms[m]:+g}" + (f"*{name}" if name else ""))
        return "Poly(" + " ".join(parts) + ")"

    @property
    def degree(self):
        return max((sum(m) for m in self.terms), default=0)

    def coeff(self, mono):
        return self.terms.get(tuple(mono), 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        total = 0.0
        for m, c in self.terms.items():
            total += c * float(np.prod(x ** np.asarray(m)))
        return total

    def max_abs_coeff(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)


def coeff(p, m):
    return p.coeff(m)


def mul(p, q):
    return p * q
