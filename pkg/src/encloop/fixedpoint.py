"""Fixed-point quantization and integer encoding of controller polynomials.

Signals are mapped to integers with a step ``r`` (nearest integer, ties away
from zero); a real-coefficient polynomial over lagged inputs/outputs is mapped
to an integer-coefficient polynomial by dividing each coefficient of total
degree ``d`` by ``s * r**(d_max - d)`` so that the whole polynomial shares the
single output scale ``L = r**d_max * s``.  Evaluating the integer polynomial
on quantized inputs and multiplying by ``L`` then approximates the real
polynomial on the underlying reals, with a certified worst-case error bound.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .capability import Capability
from .errors import DegenerateController, NonFiniteSignal
from .polynomial import Poly

__all__ = [
    "FixedPointParams",
    "HistoryPolynomial",
    "EncodedController",
    "quantize",
    "quantize_scalar",
    "rescale",
    "encode_polynomial",
    "required_plaintext_modulus",
    "parse_history_polynomial",
    "parse_state_polynomial",
    "parse_plant_polynomial",
    "format_polynomial",
]


@dataclass(frozen=True)
class FixedPointParams:
    """Quantization steps and the known uniform signal bound.

    r: signal quantization step (> 0).
    s: coefficient quantization step (> 0); defaults to r.
    M: uniform bound on |u(t)| and ||y(t)||_inf over the whole horizon.
    """

    r: float
    M: float
    s: float | None = None

    def __post_init__(self):
        s = self.r if self.s is None else self.s
        object.__setattr__(self, "s", float(s))
        for name in ("r", "s", "M"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")

    @property
    def input_box(self) -> int:
        """Admissible magnitude bound for quantized signals: ceil(M/r) + 1."""
        return int(math.ceil(self.M / self.r)) + 1


def quantize(v, r: float) -> list[int]:
    """Round v/r to the nearest integers, ties away from zero.

    Guarantees |out_i * r - v_i| <= r/2 componentwise.
    """
    if r <= 0:
        raise ValueError("quantization step must be positive")
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteSignal(f"cannot quantize non-finite signal {v!r}")
    scaled = arr / r
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return [int(x) for x in np.atleast_1d(rounded)]


def quantize_scalar(v: float, r: float) -> int:
    return quantize([v], r)[0]


def rescale(u_bar_prime: int, L: float) -> float:
    """Recover the real output from the integer controller output."""
    if L <= 0:
        raise ValueError("scale factor L must be positive")
    return L * u_bar_prime


class HistoryPolynomial:
    """Polynomial over lagged controller outputs u[i] and inputs y[j][k].

    Variables are ``('u', i)`` with lag 1 <= i <= m and ``('y', j, k)`` with
    lag 0 <= j <= m and component 1 <= k <= p; lag 0 (the current input) is
    only admitted when ``current_input`` is set, which realizes static
    controllers with direct feedthrough.
    """

    def __init__(self, poly: Poly, m: int, p: int, current_input: bool = False):
        if m < 0:
            raise ValueError("memory depth m must be >= 0")
        if p < 1:
            raise ValueError("input dimension p must be >= 1")
        for v in poly.variables():
            if v[0] == "u":
                if not 1 <= v[1] <= m:
                    raise ValueError(f"u lag out of range 1..{m}: {v}")
            elif v[0] == "y":
                _, lag, comp = v
                low = 0 if current_input else 1
                if not low <= lag <= m:
                    raise ValueError(f"y lag out of range {low}..{m}: {v}")
                if not 1 <= comp <= p:
                    raise ValueError(f"y component out of range 1..{p}: {v}")
            else:
                raise ValueError(f"unexpected variable {v} in history polynomial")
        for c in poly.terms.values():
            if isinstance(c, float) and not math.isfinite(c):
                raise ValueError("polynomial has non-finite coefficients")
        self.poly = poly
        self.m = m
        self.p = p
        self.current_input = current_input

    def __eq__(self, other):
        return (
            isinstance(other, HistoryPolynomial)
            and self.poly == other.poly
            and (self.m, self.p, self.current_input)
            == (other.m, other.p, other.current_input)
        )

    def __repr__(self):
        return (
            f"HistoryPolynomial(m={self.m}, p={self.p}, "
            f"terms={len(self.poly)}, current_input={self.current_input})"
        )

    def max_total_degree(self) -> int:
        return self.poly.total_degree()

    def assignment(self, u_hist, y_hist, y_now=None) -> dict:
        """Variable assignment from histories: u_hist[i-1] = u(t-i), etc."""
        values = {}
        for i in range(1, self.m + 1):
            values[("u", i)] = u_hist[i - 1]
            for k in range(1, self.p + 1):
                values[("y", i, k)] = y_hist[i - 1][k - 1]
        if self.current_input:
            if y_now is None:
                raise ValueError("current input required but not supplied")
            for k in range(1, self.p + 1):
                values[("y", 0, k)] = y_now[k - 1]
        return values

    def evaluate(self, u_hist, y_hist, y_now=None):
        return self.poly.evaluate(self.assignment(u_hist, y_hist, y_now))


@dataclass
class EncodedController:
    """Integer-coefficient controller polynomial with its output scale.

    ``L * int_poly(quantized history)`` approximates the source polynomial on
    the underlying real history within ``error_bound`` as long as the signals
    stay inside the box |.| <= M; ``plaintext_bound`` bounds |int_poly| over
    the admissible integer input box [-input_box, input_box] and must stay
    below N/2 for the deployed plaintext modulus N.
    """

    int_poly: Poly
    L: float
    r: float
    s: float
    M: float
    m: int
    p: int
    d_max: int
    current_input: bool
    input_box: int
    plaintext_bound: int
    error_bound: float
    required_capability: Capability

    def evaluate(self, u_hist, y_hist, y_now=None) -> int:
        shape = HistoryPolynomial(self.int_poly, self.m, self.p, self.current_input)
        return shape.evaluate(u_hist, y_hist, y_now)


def _round_half_away(x: Fraction) -> int:
    # round-half-away-from-zero on exact rationals; int() truncates toward 0,
    # which equals floor for the non-negative branch
    if x < 0:
        return -_round_half_away(-x)
    return int(x + Fraction(1, 2))


def encode_polynomial(g: HistoryPolynomial, params: FixedPointParams) -> EncodedController:
    """Encode a real history polynomial into integers with scale L = r^d_max * s.

    A monomial of total degree d has its coefficient divided by
    s * r**(d_max - d) (degree padding) and rounded half away from zero, so
    all monomials share one output scale.  The attached error bound is

        E = s * r**d_max * n_monomials * (M/r + 1)**d_max
            + (sum_v max_box |dg/dv|) * r/2

    covering coefficient rounding and input quantization (Lipschitz term on
    the box [-M-r, M+r]).
    """
    d_max = g.max_total_degree()
    if d_max == 0:
        raise DegenerateController("polynomial has no non-constant monomial")

    r_frac, s_frac = Fraction(params.r), Fraction(params.s)
    terms: dict = {}
    for key, c in g.poly.items():
        d = sum(e for _, e in key)
        step = s_frac * r_frac ** (d_max - d)
        terms[key] = _round_half_away(Fraction(c) / step)
    int_poly = Poly(terms)

    box = params.input_box
    plaintext_bound = int(int_poly.abs_bound(box))

    n_mono = len(g.poly)
    coeff_err = params.s * params.r**d_max * n_mono * (params.M / params.r + 1) ** d_max
    lip = 0.0
    for v in sorted(g.poly.variables()):
        lip += float(g.poly.partial(v).abs_bound(params.M + params.r))
    error_bound = coeff_err + lip * params.r / 2

    return EncodedController(
        int_poly=int_poly,
        L=params.r**d_max * params.s,
        r=params.r,
        s=params.s,
        M=params.M,
        m=g.m,
        p=g.p,
        d_max=d_max,
        current_input=g.current_input,
        input_box=box,
        plaintext_bound=plaintext_bound,
        error_bound=error_bound,
        required_capability=Capability(max(d_max, 1)),
    )


def required_plaintext_modulus(enc: EncodedController) -> int:
    """Smallest even N with plaintext_bound < N/2."""
    return 2 * enc.plaintext_bound + 2


# ---------------------------------------------------------------------------
# Textual grammar
#
# History polynomials: one monomial per line,
#     <coeff> * u[i]^a * y[j][k]^b ...
# with y[j] shorthand for y[j][1]; a bare "<coeff>" line is the constant
# term.  State polynomials (canonical forms) use the same grammar with z[i]
# state variables and y[k] denoting the k-th component of the current input.
# ---------------------------------------------------------------------------

_FACTOR_RE = re.compile(
    r"^(?P<kind>[uyzx])\[(?P<i1>\d+)\](?:\[(?P<i2>\d+)\])?(?:\^(?P<exp>\d+))?$"
)


def _parse_terms(text: str, mode: str) -> dict:
    terms: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split("*")]
        try:
            coeff = float(parts[0])
        except ValueError:
            raise ValueError(f"line {lineno}: expected a leading coefficient: {raw!r}")
        powers: dict = {}
        for token in parts[1:]:
            mt = _FACTOR_RE.match(token)
            if not mt:
                raise ValueError(f"line {lineno}: bad factor {token!r}")
            kind = mt.group("kind")
            i1 = int(mt.group("i1"))
            i2 = mt.group("i2")
            exp = int(mt.group("exp") or 1)
            if kind == "z":
                if mode != "state":
                    raise ValueError(f"line {lineno}: z variables not allowed here")
                var = ("z", i1)
            elif kind == "x":
                if mode != "plant":
                    raise ValueError(f"line {lineno}: x variables not allowed here")
                var = ("x", i1)
            elif kind == "u":
                if mode == "plant":
                    if i1 != 1:
                        raise ValueError(f"line {lineno}: plant input is scalar, use u[1]")
                    var = ("u", 1)
                elif mode == "history":
                    var = ("u", i1)
                else:
                    raise ValueError(f"line {lineno}: u variables not allowed here")
            else:  # y
                if mode == "history":
                    var = ("y", i1, int(i2) if i2 is not None else 1)
                elif mode == "plant":
                    raise ValueError(f"line {lineno}: y variables not allowed here")
                else:
                    if i2 is not None:
                        raise ValueError(
                            f"line {lineno}: state-form y takes a single component index"
                        )
                    var = ("y", i1)
            powers[var] = powers.get(var, 0) + exp
        key = tuple(sorted(powers.items()))
        terms[key] = terms.get(key, 0.0) + coeff
    return terms


def parse_history_polynomial(
    text: str,
    m: int | None = None,
    p: int | None = None,
    current_input: bool | None = None,
) -> HistoryPolynomial:
    """Parse the history grammar; infers m, p and the feedthrough flag if omitted."""
    poly = Poly(_parse_terms(text, "history"))
    max_lag, max_comp, has_current = 0, 1, False
    for v in poly.variables():
        if v[0] == "u":
            max_lag = max(max_lag, v[1])
        else:
            _, lag, comp = v
            max_lag = max(max_lag, lag)
            max_comp = max(max_comp, comp)
            has_current = has_current or lag == 0
    return HistoryPolynomial(
        poly,
        m if m is not None else max_lag,
        p if p is not None else max_comp,
        has_current if current_input is None else current_input,
    )


def parse_state_polynomial(text: str) -> Poly:
    """Parse a canonical state equation over z[i] and current y[k]."""
    return Poly(_parse_terms(text, "state"))


def parse_plant_polynomial(text: str) -> Poly:
    """Parse a plant map over states x[i] and the scalar input u[1]."""
    return Poly(_parse_terms(text, "plant"))


def _format_var(v, p: int | None) -> str:
    if v[0] in ("u", "z", "x"):
        return f"{v[0]}[{v[1]}]"
    if len(v) == 2:  # state-form y
        return f"y[{v[1]}]"
    _, lag, comp = v
    if comp == 1 and (p is None or p == 1):
        return f"y[{lag}]"
    return f"y[{lag}][{comp}]"


def format_polynomial(poly: Poly, p: int | None = None) -> str:
    """Render a polynomial in the textual grammar, one monomial per line."""
    lines = []
    for key, c in poly.items():
        factors = [repr(float(c)) if isinstance(c, float) else str(c)]
        for v, e in key:
            name = _format_var(v, p)
            factors.append(name if e == 1 else f"{name}^{e}")
        lines.append(" * ".join(factors))
    return "\n".join(lines)
