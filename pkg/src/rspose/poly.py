"""Sparse polynomials in the six motion unknowns (d1, d2, d3, w1, w2, w3).

A polynomial maps exponent tuples to coefficients.  Coefficients may be numpy
arrays, so one polynomial can carry the coefficients of many correspondences
at once; all arithmetic broadcasts elementwise.
"""
from __future__ import annotations

import itertools

import numpy as np

VARIABLES = ("d1", "d2", "d3", "w1", "w2", "w3")
N_VARS = len(VARIABLES)


def _exponent(name: str) -> tuple[int, ...]:
    e = [0] * N_VARS
    e[VARIABLES.index(name)] = 1
    return tuple(e)


def monomial_name(exp: tuple[int, ...]) -> str:
    """``(1,0,0,0,1,0)`` -> ``"d1w2"``; the constant monomial is ``"1"``."""
    parts = []
    for name, k in zip(VARIABLES, exp):
        parts.extend([name] * k)
    return "".join(parts) or "1"


def monomial_from_name(name: str) -> tuple[int, ...]:
    e = [0] * N_VARS
    for i in range(0, len(name), 2):
        e[VARIABLES.index(name[i : i + 2])] += 1
    return tuple(e)


def degree(exp: tuple[int, ...]) -> int:
    return sum(exp)


def evaluate_monomial(exp, d, w) -> float:
    vals = np.concatenate([np.asarray(d, float), np.asarray(w, float)])
    return float(np.prod(vals ** np.asarray(exp)))


class Poly:
    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms: dict[tuple[int, ...], object] = dict(terms or {})

    @classmethod
    def var(cls, name: str) -> "Poly":
        return cls({_exponent(name): 1.0})

    @classmethod
    def const(cls, c) -> "Poly":
        return cls({(0,) * N_VARS: c})

    def __add__(self, other):
        other = _as_poly(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out[e] + c if e in out else c
        return Poly(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly({e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        other = _as_poly(other)
        out: dict = {}
        for (e1, c1), (e2, c2) in itertools.product(self.terms.items(), other.terms.items()):
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out[e] + c1 * c2 if e in out else c1 * c2
        return Poly(out)

    __rmul__ = __mul__

    def coefficient(self, exp):
        return self.terms.get(tuple(exp), 0.0)

    def monomials(self, tol: float = 0.0) -> set:
        """Exponents whose coefficient is not identically (within ``tol``) zero."""
        return {e for e, c in self.terms.items() if np.any(np.abs(c) > tol)}

    def evaluate(self, d, w):
        total = 0.0
        for e, c in self.terms.items():
            total = total + c * evaluate_monomial(e, d, w)
        return total

    def truncated(self, max_degree: int) -> "Poly":
        return Poly({e: c for e, c in self.terms.items() if degree(e) <= max_degree})


def _as_poly(x) -> Poly:
    return x if isinstance(x, Poly) else Poly.const(x)


# 3-vector / 3x3-matrix helpers over Poly entries (plain nested lists)


def vec(*names_or_polys):
    return [Poly.var(x) if isinstance(x, str) else _as_poly(x) for x in names_or_polys]


def cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def skew(v):
    z = Poly()
    return [[z, -v[2], v[1]], [v[2], z, -v[0]], [-v[1], v[0], z]]


def matmul(A, B):
    return [[sum((A[i][k] * B[k][j] for k in range(3)), Poly()) for j in range(3)] for i in range(3)]


def matadd(A, B, sa=1.0, sb=1.0):
    return [[A[i][j] * sa + B[i][j] * sb for j in range(3)] for i in range(3)]


def bilinear(xb, M, xa) -> Poly:
    """``xb^T M xa`` where ``xa``/``xb`` are 3-sequences of scalars or arrays."""
    total = Poly()
    for i in range(3):
        for j in range(3):
            total = total + M[i][j] * (xb[i] * xa[j])
    return total
