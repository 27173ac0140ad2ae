"""Multivariate polynomials in expanded normal form.

Variables are hashable tuples whose first element is a kind string, e.g.
``('u', 2)``, ``('y', 1, 3)`` or ``('z', 4)``.  A polynomial is stored as a
mapping from monomial keys to coefficients, where a monomial key is a tuple
of ``(variable, exponent)`` pairs sorted by variable and the empty tuple is
the constant term::

    {(): 1.5, ((('u', 1), 2),): 0.3, ((('u', 2), 1), (('y', 1, 1), 1)): -2.0}

represents ``1.5 + 0.3*u[1]^2 - 2.0*u[2]*y[1][1]``.  Like monomials are
combined and exact-zero coefficients dropped, so equal polynomials compare
equal and iteration order is canonical (sorted by monomial key).

Coefficients may be floats, ints or Fractions; evaluation on int inputs with
int coefficients is exact arbitrary-precision arithmetic.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

Var = tuple
Monomial = tuple  # sorted tuple of (Var, exponent) pairs


def _normalize(terms: Mapping[Monomial, object]) -> dict:
    out = {}
    for key in sorted(terms):
        c = terms[key]
        if c != 0:
            out[key] = c
    return out


class Poly:
    """Immutable multivariate polynomial; supports +, -, *, ** and substitution."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, object] | None = None):
        object.__setattr__(self, "terms", _normalize(terms or {}))

    def __setattr__(self, name, value):
        raise AttributeError("Poly is immutable")

    @classmethod
    def const(cls, c) -> "Poly":
        return cls({(): c})

    @classmethod
    def var(cls, v: Var, exp: int = 1, coeff=1) -> "Poly":
        if exp < 0:
            raise ValueError("exponents must be non-negative")
        if exp == 0:
            return cls.const(coeff)
        return cls({((v, exp),): coeff})

    @classmethod
    def monomial(cls, coeff, powers: Mapping[Var, int]) -> "Poly":
        key = tuple(sorted((v, e) for v, e in powers.items() if e > 0))
        return cls({key: coeff})

    # -- ring operations ---------------------------------------------------

    def __add__(self, other) -> "Poly":
        other = other if isinstance(other, Poly) else Poly.const(other)
        terms = dict(self.terms)
        for key, c in other.terms.items():
            terms[key] = terms.get(key, 0) + c
        return Poly(terms)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly({k: -c for k, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        other = other if isinstance(other, Poly) else Poly.const(other)
        return self + (-other)

    def __rsub__(self, other) -> "Poly":
        return (-self) + other

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return Poly({k: c * other for k, c in self.terms.items()})
        terms: dict = {}
        for k1, c1 in self.terms.items():
            e1 = dict(k1)
            for k2, c2 in other.terms.items():
                powers = dict(e1)
                for v, e in k2:
                    powers[v] = powers.get(v, 0) + e
                key = tuple(sorted(powers.items()))
                terms[key] = terms.get(key, 0) + c1 * c2
        return Poly(terms)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Poly":
        if not isinstance(n, int) or n < 0:
            raise ValueError("exponent must be a non-negative integer")
        result = Poly.const(1)
        for _ in range(n):
            result = result * self
        return result

    # -- structure ---------------------------------------------------------

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.terms == other.terms

    def __hash__(self):
        return hash(tuple(self.terms.items()))

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __repr__(self) -> str:
        return f"Poly({self.terms!r})"

    def items(self):
        """Monomials in canonical order as (key, coefficient) pairs."""
        return list(self.terms.items())

    def variables(self) -> set:
        return {v for key in self.terms for v, _ in key}

    def total_degree(self) -> int:
        """Maximum monomial total degree; 0 for constants and the zero poly."""
        return max((sum(e for _, e in key) for key in self.terms), default=0)

    def constant_term(self):
        return self.terms.get((), 0)

    def coefficient(self, powers: Mapping[Var, int]):
        key = tuple(sorted((v, e) for v, e in powers.items() if e > 0))
        return self.terms.get(key, 0)

    # -- transformations ---------------------------------------------------

    def map_coefficients(self, fn: Callable) -> "Poly":
        return Poly({k: fn(c) for k, c in self.terms.items()})

    def map_vars(self, fn: Callable[[Var], Var]) -> "Poly":
        """Rename every variable through ``fn`` (must stay injective)."""
        terms: dict = {}
        for key, c in self.terms.items():
            new_key = tuple(sorted((fn(v), e) for v, e in key))
            if new_key in terms:
                raise ValueError("variable renaming is not injective")
            terms[new_key] = c
        return Poly(terms)

    def substitute(self, mapping: Mapping[Var, "Poly | int | float"]) -> "Poly":
        """Replace variables by polynomials (or numbers) and re-expand."""
        result = Poly()
        for key, c in self.terms.items():
            term = Poly.const(c)
            for v, e in key:
                rep = mapping.get(v)
                if rep is None:
                    rep = Poly.var(v)
                elif not isinstance(rep, Poly):
                    rep = Poly.const(rep)
                term = term * rep**e
            result = result + term
        return result

    def evaluate(self, values: Mapping[Var, object]):
        """Evaluate at a point; raises KeyError for unassigned variables."""
        total = 0
        for key, c in self.terms.items():
            term = c
            for v, e in key:
                term = term * values[v] ** e
            total = total + term
        return total

    def partial(self, v: Var) -> "Poly":
        """Formal partial derivative with respect to ``v``."""
        terms: dict = {}
        for key, c in self.terms.items():
            powers = dict(key)
            e = powers.get(v, 0)
            if e == 0:
                continue
            powers[v] = e - 1
            new_key = tuple(sorted((w, d) for w, d in powers.items() if d > 0))
            terms[new_key] = terms.get(new_key, 0) + c * e
        return Poly(terms)

    def abs_bound(self, radius) -> object:
        """Upper bound of |poly| on the box |v| <= radius (per variable).

        ``radius`` is a number or a mapping from variable to number.  Exact
        when coefficients and radii are ints.
        """
        per_var = radius if isinstance(radius, Mapping) else None
        total = 0
        for key, c in self.terms.items():
            term = abs(c)
            for v, e in key:
                rad = per_var[v] if per_var is not None else radius
                term = term * rad**e
            total = total + term
        return total


def poly_sum(polys: Iterable[Poly]) -> Poly:
    total = Poly()
    for p in polys:
        total = total + p
    return total
