"""Truncated polynomials in the three Pauli error rates ``(p_x, p_y, p_z)``.

Every fidelity in this package is carried as a :class:`TruncatedPoly`: a
trivariate polynomial whose monomials of total degree above ``max_degree``
are discarded after every product.
"""

from __future__ import annotations

import math
from itertools import product
from typing import Iterable, Iterator, Mapping

Monomial = tuple[int, int, int]

VARIABLES = ("p_x", "p_y", "p_z")


class PolyError(ValueError):
    """Base class for polynomial usage errors."""


class DegreeMismatchError(PolyError):
    """Raised when combining polynomials of different truncation degree."""


class SeriesDivisionError(ZeroDivisionError):
    """Raised when dividing by a series that is identically zero."""


class InconsistentSeriesError(PolyError):
    """Raised when a series quotient does not exist as a polynomial."""


def degree(m: Monomial) -> int:
    return m[0] + m[1] + m[2]


def monomials(max_degree: int) -> list[Monomial]:
    """All monomials of total degree <= ``max_degree`` in canonical order."""
    out = [m for m in product(range(max_degree + 1), repeat=3) if degree(m) <= max_degree]
    out.sort(key=lambda m: (degree(m), tuple(-e for e in m)))
    return out


def _sort_key(m: Monomial) -> tuple:
    # Degree first; within a degree p_x before p_y before p_z.
    return (degree(m), -m[0], -m[1], -m[2])


class TruncatedPoly:
    """Immutable polynomial in ``(p_x, p_y, p_z)`` truncated at total degree K.

    >>> x = TruncatedPoly.variable(0, 1)
    >>> str((1 - 5 * x) * (1 - 5 * x))
    '1 - 10 p_x'
    """

    __slots__ = ("max_degree", "_terms")

    def __init__(self, terms: Mapping[Monomial, float] | None = None, max_degree: int = 2):
        if max_degree < 0:
            raise PolyError(f"max_degree must be non-negative, got {max_degree}")
        self.max_degree = int(max_degree)
        clean: dict[Monomial, float] = {}
        for m, c in (terms or {}).items():
            m = (int(m[0]), int(m[1]), int(m[2]))
            if min(m) < 0:
                raise PolyError(f"negative exponent in {m}")
            if degree(m) > max_degree:
                continue
            c = float(c)
            if not math.isfinite(c):
                raise PolyError(f"non-finite coefficient {c} for {m}")
            if c != 0.0:
                clean[m] = clean.get(m, 0.0) + c
        self._terms = {m: c for m, c in clean.items() if c != 0.0}

    # -- construction -------------------------------------------------
    @classmethod
    def constant(cls, value: float, max_degree: int = 2) -> "TruncatedPoly":
        return cls({(0, 0, 0): value}, max_degree)

    @classmethod
    def variable(cls, index: int, max_degree: int = 2) -> "TruncatedPoly":
        m = [0, 0, 0]
        m[index] = 1
        return cls({tuple(m): 1.0}, max_degree)

    @classmethod
    def monomial(cls, exps: Monomial, coeff: float = 1.0, max_degree: int = 2) -> "TruncatedPoly":
        return cls({tuple(exps): coeff}, max_degree)

    @classmethod
    def no_fault(cls, max_degree: int = 2) -> "TruncatedPoly":
        """The identity-event probability ``1 - p_x - p_y - p_z``."""
        return cls({(0, 0, 0): 1.0, (1, 0, 0): -1.0, (0, 1, 0): -1.0, (0, 0, 1): -1.0}, max_degree)

    # -- inspection ---------------------------------------------------
    @property
    def terms(self) -> dict[Monomial, float]:
        return dict(self._terms)

    def __iter__(self) -> Iterator[tuple[Monomial, float]]:
        return iter(sorted(self._terms.items(), key=lambda kv: _sort_key(kv[0])))

    def coeff(self, m: Monomial) -> float:
        return self._terms.get(tuple(m), 0.0)

    def __getitem__(self, m: Monomial) -> float:
        return self.coeff(m)

    def homogeneous(self, order: int) -> dict[Monomial, float]:
        return {m: c for m, c in self._terms.items() if degree(m) == order}

    def lowest_order(self, tol: float = 0.0) -> int | None:
        orders = [degree(m) for m, c in self._terms.items() if abs(c) > tol]
        return min(orders) if orders else None

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self._terms.values())

    # -- arithmetic ---------------------------------------------------
    def _coerce(self, other) -> "TruncatedPoly":
        if isinstance(other, TruncatedPoly):
            if other.max_degree != self.max_degree:
                raise DegreeMismatchError(
                    f"max_degree mismatch: {self.max_degree} vs {other.max_degree}"
                )
            return other
        if isinstance(other, (int, float)):
            return TruncatedPoly.constant(other, self.max_degree)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return TruncatedPoly(out, self.max_degree)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedPoly({m: -c for m, c in self._terms.items()}, self.max_degree)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return TruncatedPoly({m: c * other for m, c in self._terms.items()}, self.max_degree)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return mul_truncated(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            if other == 0:
                raise SeriesDivisionError("division by zero scalar")
            return self * (1.0 / other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return series_quotient(self, other)

    def __pow__(self, n: int) -> "TruncatedPoly":
        if not isinstance(n, int) or n < 0:
            raise PolyError("only non-negative integer powers are supported")
        result = TruncatedPoly.constant(1.0, self.max_degree)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def truncate(self, max_degree: int) -> "TruncatedPoly":
        return TruncatedPoly(self._terms, max_degree)

    def evaluate(self, rates: Iterable[float]) -> float:
        return evaluate(self, rates)

    def cleaned(self, eps: float = 1e-9) -> "TruncatedPoly":
        """Drop coefficients below ``eps`` and snap near-integers (display aid)."""
        out = {}
        for m, c in self._terms.items():
            if abs(c) <= eps:
                continue
            r = round(c)
            out[m] = float(r) if abs(c - r) <= eps else c
        return TruncatedPoly(out, self.max_degree)

    # -- comparison ---------------------------------------------------
    def allclose(self, other: "TruncatedPoly", tol: float = 1e-9, max_order: int | None = None) -> bool:
        other = self._coerce(other)
        keys = set(self._terms) | set(other._terms)
        for m in keys:
            if max_order is not None and degree(m) > max_order:
                continue
            if abs(self.coeff(m) - other.coeff(m)) > tol:
                return False
        return True

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = TruncatedPoly.constant(other, self.max_degree)
        if not isinstance(other, TruncatedPoly) or other.max_degree != self.max_degree:
            return NotImplemented
        return self.allclose(other)

    __hash__ = None

    # -- display and serialization -------------------------------------
    def __repr__(self) -> str:
        return f"TruncatedPoly({str(self)!r}, max_degree={self.max_degree})"

    def __str__(self) -> str:
        return format_poly(self)

    def to_json(self) -> list[dict]:
        return [{"m": list(m), "c": c} for m, c in self]

    @classmethod
    def from_json(cls, data: list[dict], max_degree: int = 2) -> "TruncatedPoly":
        return cls({tuple(entry["m"]): entry["c"] for entry in data}, max_degree)


def mul_truncated(a: TruncatedPoly, b: TruncatedPoly) -> TruncatedPoly:
    """Product of ``a`` and ``b`` with monomials above degree K discarded."""
    if a.max_degree != b.max_degree:
        raise DegreeMismatchError(f"max_degree mismatch: {a.max_degree} vs {b.max_degree}")
    k = a.max_degree
    out: dict[Monomial, float] = {}
    for ma, ca in a._terms.items():
        da = degree(ma)
        for mb, cb in b._terms.items():
            if da + degree(mb) > k:
                continue
            m = (ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2])
            out[m] = out.get(m, 0.0) + ca * cb
    return TruncatedPoly(out, k)


def _divide_homogeneous(num: dict[Monomial, float], den: dict[Monomial, float], tol: float) -> dict[Monomial, float]:
    """Exact division of homogeneous polynomials; raises if a remainder is left."""
    if not num:
        return {}
    # Lexicographic leading terms (p_x > p_y > p_z).
    lead = max(den)
    lead_c = den[lead]
    rem = dict(num)
    quot: dict[Monomial, float] = {}
    scale = max(abs(c) for c in num.values())
    while True:
        live = [m for m, c in rem.items() if abs(c) > tol * max(1.0, scale)]
        if not live:
            break
        m = max(live)
        if any(m[i] < lead[i] for i in range(3)):
            raise InconsistentSeriesError(
                "numerator part is not divisible by the divisor's leading homogeneous part"
            )
        q_m = (m[0] - lead[0], m[1] - lead[1], m[2] - lead[2])
        q_c = rem[m] / lead_c
        quot[q_m] = quot.get(q_m, 0.0) + q_c
        for dm, dc in den.items():
            t = (q_m[0] + dm[0], q_m[1] + dm[1], q_m[2] + dm[2])
            rem[t] = rem.get(t, 0.0) - q_c * dc
        rem[m] = 0.0
    return quot


def series_quotient(n: TruncatedPoly, d: TruncatedPoly, tol: float = 1e-12) -> TruncatedPoly:
    """Power-series quotient ``n / d``.

    When ``d`` has a zero constant term, both series must vanish below the
    lowest order ``m`` present in ``d``; the common factor is divided out and
    the quotient is returned to degree ``K - m``.  Each homogeneous step is an
    exact polynomial division, so a quotient that is not a polynomial (for
    example ``p_x / p_y``) raises :class:`InconsistentSeriesError`.

    >>> x = TruncatedPoly.variable(0, 2)
    >>> str((1 - 10 * x) / (1 - 2 * x))
    '1 - 8 p_x - 16 p_x^2'
    """
    if n.max_degree != d.max_degree:
        raise DegreeMismatchError(f"max_degree mismatch: {n.max_degree} vs {d.max_degree}")
    k = d.max_degree
    # Rare-event acceptance series can be tiny; work relative to d's scale.
    scale = max((abs(c) for _, c in d), default=0.0)
    if scale > 0.0:
        n, d = n * (1.0 / scale), d * (1.0 / scale)
    m = d.lowest_order(tol)
    if m is None:
        raise SeriesDivisionError("divisor series is identically zero")
    n_low = n.lowest_order(tol)
    if n_low is not None and n_low < m:
        raise InconsistentSeriesError(
            f"numerator has order-{n_low} terms but the divisor starts at order {m}"
        )
    d_parts = [d.homogeneous(m + j) for j in range(k - m + 1)]
    n_parts = [n.homogeneous(m + j) for j in range(k - m + 1)]
    q_parts: list[dict[Monomial, float]] = []
    qk = k - m
    for j in range(qk + 1):
        resid = dict(n_parts[j])
        for i, q_i in enumerate(q_parts):
            for qm, qc in q_i.items():
                for dm, dc in d_parts[j - i].items():
                    t = (qm[0] + dm[0], qm[1] + dm[1], qm[2] + dm[2])
                    resid[t] = resid.get(t, 0.0) - qc * dc
        q_parts.append(_divide_homogeneous(resid, d_parts[0], tol))
    out: dict[Monomial, float] = {}
    for part in q_parts:
        out.update(part)
    # Terms above K - m are not determined; keep the container degree at K.
    return TruncatedPoly({q: c for q, c in out.items() if degree(q) <= qk}, k)


def evaluate(p: TruncatedPoly, rates: Iterable[float]) -> float:
    px, py, pz = (float(r) for r in rates)
    total = 0.0
    for (ex, ey, ez), c in p._terms.items():
        total += c * px**ex * py**ey * pz**ez
    return total


def restrict_to_ray(p: TruncatedPoly, direction: Iterable[float]) -> TruncatedPoly:
    """Substitute ``(p_x, p_y, p_z) = t * direction``; the result lives in ``p_x`` as ``t``."""
    rx, ry, rz = (float(r) for r in direction)
    out: dict[Monomial, float] = {}
    for (ex, ey, ez), c in p._terms.items():
        n = ex + ey + ez
        out[(n, 0, 0)] = out.get((n, 0, 0), 0.0) + c * rx**ex * ry**ey * rz**ez
    return TruncatedPoly(out, p.max_degree)


def _format_coeff(c: float) -> str:
    r = round(c)
    if abs(c - r) < 1e-9:
        return str(int(r))
    for den in (2, 4, 8, 16):
        if abs(c * den - round(c * den)) < 1e-9:
            return f"{int(round(c * den))}/{den}"
    return f"{c:.12g}"


def format_poly(p: TruncatedPoly, eps: float = 1e-9) -> str:
    """Human-readable form, e.g. ``1 - 10 p_x - 11 p_y - 7 p_z``."""
    parts = []
    for m, c in p:
        if abs(c) <= eps:
            continue
        mono = " ".join(
            name if e == 1 else f"{name}^{e}" for name, e in zip(VARIABLES, m) if e
        )
        mag = _format_coeff(abs(c))
        if mono:
            body = mono if mag == "1" else f"{mag} {mono}"
        else:
            body = mag
        sign = "-" if c < 0 else "+"
        parts.append((sign, body))
    if not parts:
        return "0"
    first_sign, first = parts[0]
    text = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        text += f" {sign} {body}"
    return text


def no_fault_power(n: int, max_degree: int) -> TruncatedPoly:
    """``(1 - p_x - p_y - p_z)**n`` expanded and truncated."""
    out: dict[Monomial, float] = {}
    # Binomial in s truncated at max_degree, then trinomial in (x, y, z).
    for j in range(0, min(n, max_degree) + 1):
        coeff = math.comb(n, j) * (-1) ** j
        for m in monomials(max_degree):
            if degree(m) != j:
                continue
            multinom = math.factorial(j) // (math.factorial(m[0]) * math.factorial(m[1]) * math.factorial(m[2]))
            out[m] = out.get(m, 0.0) + coeff * multinom
    return TruncatedPoly(out, max_degree)
