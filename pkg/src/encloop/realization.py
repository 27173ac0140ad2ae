"""Conversion of dynamic controllers into finite input-output recursions.

A linear controller (A, B, C, x0) is reduced to its observable part and put
into observable canonical form: subdiagonal ones, the characteristic
polynomial in the last column, output = last state.  From that form the
current output is a fixed linear recursion in the previous n' outputs and
inputs.  Nonlinear controllers are accepted directly in the triangular
polynomial canonical structure

    z_i(t+1) = g_i(z_1(t), ..., z_{i-1}(t), z_{n'}(t), y(t)),   u(t) = z_{n'}(t),

for which repeated back-substitution of the z expressions produces a single
polynomial in lagged u and y -- the same object, derived symbolically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ExpansionBudgetExceeded,
    HistoryNotDerivable,
    InvalidCanonicalPattern,
    NoObservableDynamics,
)
from .fixedpoint import HistoryPolynomial
from .polynomial import Poly

__all__ = [
    "LinearController",
    "DecompositionResult",
    "CanonicalSystem",
    "IoRealization",
    "observable_decomposition",
    "io_coefficients",
    "back_substitute",
    "derive_initial_history",
    "canonical_from_decomposition",
]

RANK_TOL_FACTOR = 1e-9
AMBIGUITY_BAND = 10.0


@dataclass
class LinearController:
    """Discrete-time controller x+ = A x + B y, u = C x (+ D y)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x0: np.ndarray | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if self.B.shape[0] != self.A.shape[0] and self.B.shape[1] == self.A.shape[0]:
            self.B = self.B.T
        self.C = np.asarray(self.C, dtype=float).reshape(-1)
        self.x0 = (
            np.zeros(self.A.shape[0])
            if self.x0 is None
            else np.asarray(self.x0, dtype=float).reshape(-1)
        )
        if self.D is not None:
            self.D = np.asarray(self.D, dtype=float).reshape(-1)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape != (n,):
            raise ValueError("inconsistent controller dimensions")
        if self.x0.shape != (n,):
            raise ValueError("x0 length must equal the state dimension")
        if self.D is not None and self.D.shape != (self.B.shape[1],):
            raise ValueError("D must be a row of length p")
        for mat in (self.A, self.B, self.C, self.x0):
            if not np.all(np.isfinite(mat)):
                raise ValueError("controller matrices must be finite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    def simulate(self, y_seq: np.ndarray) -> np.ndarray:
        """State-space reference simulation: u(t) for each input row y(t)."""
        y_seq = np.atleast_2d(np.asarray(y_seq, dtype=float))
        x = self.x0.copy()
        out = np.empty(len(y_seq))
        for t, y in enumerate(y_seq):
            u = float(self.C @ x)
            if self.D is not None:
                u += float(self.D @ y)
            out[t] = u
            x = self.A @ x + self.B @ y
        return out


@dataclass
class DecompositionResult:
    """Observable part in canonical form plus the full state transform."""

    T: np.ndarray
    n_prime: int
    Ao: np.ndarray
    Bo: np.ndarray
    Co: np.ndarray
    z0: np.ndarray
    p: int
    D: np.ndarray | None = None
    cond_T: float = 1.0
    warnings: list = field(default_factory=list)

    @property
    def alphas(self) -> np.ndarray:
        """Characteristic polynomial coefficients [alpha_1 ... alpha_n']."""
        return -self.Ao[::-1, -1].copy()


def _observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    rows = [np.atleast_1d(C)]
    for _ in range(A.shape[0] - 1):
        rows.append(rows[-1] @ A)
    return np.vstack(rows)


def observable_decomposition(ctrl: LinearController) -> DecompositionResult:
    """Kalman observability decomposition + observable canonical form.

    The observable subspace basis comes from the SVD row space of the
    observability matrix (numerical rank with a scale-invariant tolerance);
    the observable block is then taken to companion form through its
    characteristic polynomial.  Transfer behavior is preserved: the Markov
    parameters C A^k B of the original system equal Co Ao^k Bo.
    """
    obs = _observability_matrix(ctrl.A, ctrl.C)
    _, sing, vt = np.linalg.svd(obs)
    smax = sing[0] if len(sing) else 0.0
    tol = RANK_TOL_FACTOR * smax
    n_prime = int(np.sum(sing > tol))
    warnings = []
    if smax > 0:
        band = [
            float(s) for s in sing if tol / AMBIGUITY_BAND <= s <= tol * AMBIGUITY_BAND
        ]
        if band:
            warnings.append(
                f"rank ambiguity: singular values {band} within 10x of tolerance {tol:.3e}"
            )
    if n_prime == 0:
        raise NoObservableDynamics("observability matrix has rank 0")

    w1, w2 = vt[:n_prime], vt[n_prime:]
    a11 = w1 @ ctrl.A @ w1.T
    b1 = w1 @ ctrl.B
    c1 = (ctrl.C @ w1.T).reshape(1, -1)

    # companion form via the characteristic polynomial of the observable block
    coeffs = np.real_if_close(np.poly(a11))
    alphas = np.asarray(coeffs[1:], dtype=float)
    ao = np.zeros((n_prime, n_prime))
    for i in range(1, n_prime):
        ao[i, i - 1] = 1.0
    ao[:, -1] = -alphas[::-1]
    co = np.zeros((1, n_prime))
    co[0, -1] = 1.0

    o_obs = _observability_matrix(a11, c1[0])
    o_can = _observability_matrix(ao, co[0])
    s = np.linalg.solve(o_can, o_obs)

    bo = s @ b1
    t_full = np.vstack([s @ w1, w2]) if n_prime < ctrl.n else s @ w1
    z0 = s @ w1 @ ctrl.x0

    return DecompositionResult(
        T=t_full,
        n_prime=n_prime,
        Ao=ao,
        Bo=np.atleast_2d(bo),
        Co=co[0],
        z0=z0,
        p=ctrl.p,
        D=None if ctrl.D is None else ctrl.D.copy(),
        cond_T=float(np.linalg.cond(t_full)),
        warnings=warnings,
    )


@dataclass
class CanonicalSystem:
    """Triangular polynomial canonical form; the output taps the last state.

    ``g_list[i-1]`` updates z_i and may reference z_1..z_{i-1}, z_{n'} and the
    current input components y[k]; any other state reference violates the
    triangular pattern.  Unobservable dynamics play no role in the output and
    are not stored.
    """

    n_prime: int
    p: int
    g_list: list
    z0: np.ndarray
    feedthrough: np.ndarray | None = None

    def __post_init__(self):
        if len(self.g_list) != self.n_prime:
            raise ValueError("need one state polynomial per canonical state")
        self.z0 = np.asarray(self.z0, dtype=float).reshape(-1)
        if self.z0.shape != (self.n_prime,):
            raise ValueError("z0 length must equal n'")
        if self.feedthrough is not None:
            self.feedthrough = np.asarray(self.feedthrough, dtype=float).reshape(-1)
            if self.feedthrough.shape != (self.p,):
                raise ValueError("feedthrough must be a row of length p")
        for i, g in enumerate(self.g_list, start=1):
            for v in g.variables():
                if v[0] == "z":
                    if not (1 <= v[1] < i or v[1] == self.n_prime):
                        raise InvalidCanonicalPattern(
                            f"g_{i} references z_{v[1]}; allowed: z_1..z_{i - 1}, z_{self.n_prime}"
                        )
                elif v[0] == "y":
                    if len(v) != 2 or not 1 <= v[1] <= self.p:
                        raise InvalidCanonicalPattern(
                            f"g_{i} references invalid input component {v}"
                        )
                else:
                    raise InvalidCanonicalPattern(f"g_{i} references unknown variable {v}")

    def output(self, z: np.ndarray, y: np.ndarray) -> float:
        u = float(z[-1])
        if self.feedthrough is not None:
            u += float(self.feedthrough @ y)
        return u

    def step(self, z: np.ndarray, y: np.ndarray) -> np.ndarray:
        values = {("z", i): float(z[i - 1]) for i in range(1, self.n_prime + 1)}
        values.update({("y", k): float(y[k - 1]) for k in range(1, self.p + 1)})
        return np.array([float(g.evaluate(values)) for g in self.g_list])

    def simulate(self, y_seq: np.ndarray) -> np.ndarray:
        y_seq = np.atleast_2d(np.asarray(y_seq, dtype=float))
        z = self.z0.copy()
        out = np.empty(len(y_seq))
        for t, y in enumerate(y_seq):
            out[t] = self.output(z, y)
            z = self.step(z, y)
        return out


@dataclass
class IoRealization:
    """History polynomial plus the initial lags it starts from."""

    g: HistoryPolynomial
    u_init: list
    y_init: list

    def __post_init__(self):
        if len(self.u_init) != self.g.m or len(self.y_init) != self.g.m:
            raise ValueError("initial history length must equal the memory depth")
        self.u_init = [float(v) for v in self.u_init]
        self.y_init = [np.asarray(v, dtype=float).reshape(-1) for v in self.y_init]
        for v in self.y_init:
            if v.shape != (self.g.p,):
                raise ValueError("initial y entries must have length p")

    @property
    def m(self) -> int:
        return self.g.m

    @property
    def p(self) -> int:
        return self.g.p

    def simulate(self, y_seq: np.ndarray) -> np.ndarray:
        """Run the recursion u(t) = g(u(t-1..t-m), y(t-1..t-m) [, y(t)])."""
        y_seq = np.atleast_2d(np.asarray(y_seq, dtype=float))
        u_hist = list(self.u_init)
        y_hist = [v.copy() for v in self.y_init]
        out = np.empty(len(y_seq))
        for t, y in enumerate(y_seq):
            u = float(self.g.evaluate(u_hist, y_hist, y_now=y if self.g.current_input else None))
            out[t] = u
            if self.g.m > 0:
                u_hist = [u] + u_hist[:-1]
                y_hist = [np.asarray(y, dtype=float)] + y_hist[:-1]
        return out


def canonical_from_decomposition(dec: DecompositionResult) -> CanonicalSystem:
    """Express the canonical-form linear blocks as state polynomials."""
    n_prime = dec.n_prime
    g_list = []
    for i in range(n_prime):
        g = Poly()
        for j in range(n_prime):
            if dec.Ao[i, j] != 0.0:
                g = g + Poly.var(("z", j + 1), coeff=float(dec.Ao[i, j]))
        for k in range(dec.p):
            if dec.Bo[i, k] != 0.0:
                g = g + Poly.var(("y", k + 1), coeff=float(dec.Bo[i, k]))
        g_list.append(g)
    return CanonicalSystem(
        n_prime=n_prime,
        p=dec.p,
        g_list=g_list,
        z0=dec.z0.copy(),
        feedthrough=None if dec.D is None else dec.D.copy(),
    )


def io_coefficients(dec: DecompositionResult) -> IoRealization:
    """Closed-form linear recursion from the observable canonical form.

    With characteristic polynomial z^n' + alpha_1 z^(n'-1) + ... + alpha_n'
    and Bo rows b_1..b_n', hand substitution of the companion recursion gives

        u(t) = sum_i -alpha_i u(t-i) + sum_i b_{n'+1-i}^T y(t-i),

    plus feedthrough corrections D y(t) and alpha_i D y(t-i) when D != 0.
    """
    n_prime, p = dec.n_prime, dec.p
    alphas = dec.alphas
    terms: dict = {}
    feedthrough = dec.D is not None and np.any(dec.D != 0.0)
    for i in range(1, n_prime + 1):
        if alphas[i - 1] != 0.0:
            terms[((("u", i), 1),)] = -float(alphas[i - 1])
        for k in range(1, p + 1):
            coeff = float(dec.Bo[n_prime - i, k - 1])
            if feedthrough:
                coeff += float(alphas[i - 1] * dec.D[k - 1])
            if coeff != 0.0:
                terms[((("y", i, k), 1),)] = coeff
    if feedthrough:
        for k in range(1, p + 1):
            if dec.D[k - 1] != 0.0:
                terms[((("y", 0, k), 1),)] = float(dec.D[k - 1])
    g = HistoryPolynomial(Poly(terms), m=n_prime, p=p, current_input=feedthrough)
    u_init, y_init = derive_initial_history(dec, dec.z0)
    return IoRealization(g=g, u_init=u_init, y_init=y_init)


def _output_substitution(sys: CanonicalSystem) -> Poly:
    # z_{n'}(t-1) = u(t-1) - D y(t-1)
    expr = Poly.var(("u", 1))
    if sys.feedthrough is not None:
        for k in range(1, sys.p + 1):
            d = float(sys.feedthrough[k - 1])
            if d != 0.0:
                expr = expr - Poly.var(("y", 1, k), coeff=d)
    return expr


def _shift_lags(poly: Poly) -> Poly:
    return poly.map_vars(
        lambda v: ("u", v[1] + 1) if v[0] == "u" else ("y", v[1] + 1, v[2])
    )


def _state_expressions(sys: CanonicalSystem, budget: int) -> list:
    """E_i: z_i(t) as a polynomial in u(t-1..t-i), y(t-1..t-i)."""
    out_sub = _output_substitution(sys)
    expressions: list[Poly] = []
    for i, g in enumerate(sys.g_list, start=1):
        lagged = g.map_vars(lambda v: ("y", 1, v[1]) if v[0] == "y" else v)
        mapping = {("z", sys.n_prime): out_sub}
        for j in range(1, i):
            mapping[("z", j)] = _shift_lags(expressions[j - 1])
        expr = lagged.substitute(mapping)
        if len(expr) > budget:
            raise ExpansionBudgetExceeded(
                f"z_{i} expanded to {len(expr)} monomials (budget {budget})"
            )
        expressions.append(expr)
    return expressions


def back_substitute(sys: CanonicalSystem, budget: int = 20000) -> IoRealization:
    """Flatten the triangular canonical form by repeated substitution.

    z_1(t) depends on (u, y)(t-1); each later z_i(t) substitutes the shifted
    earlier expressions, so the output state becomes one polynomial in the
    last n' lags.  Composition can grow exponentially in n' and degree, hence
    the monomial budget.
    """
    expressions = _state_expressions(sys, budget)
    g_poly = expressions[-1]
    feedthrough = sys.feedthrough is not None and np.any(sys.feedthrough != 0.0)
    if feedthrough:
        for k in range(1, sys.p + 1):
            d = float(sys.feedthrough[k - 1])
            if d != 0.0:
                g_poly = g_poly + Poly.var(("y", 0, k), coeff=d)
    g = HistoryPolynomial(g_poly, m=sys.n_prime, p=sys.p, current_input=feedthrough)
    u_init, y_init = derive_initial_history(sys, sys.z0, budget=budget)
    return IoRealization(g=g, u_init=u_init, y_init=y_init)


def _solve_stage(poly: Poly, target: float, unknown, stage: int) -> float:
    """Solve poly(unknown) = target for one history value."""
    coeffs: dict[int, float] = {}
    for key, c in poly.items():
        if not key:
            coeffs[0] = coeffs.get(0, 0.0) + float(c)
        elif len(key) == 1 and key[0][0] == unknown:
            coeffs[key[0][1]] = coeffs.get(key[0][1], 0.0) + float(c)
        else:
            raise HistoryNotDerivable(
                f"stage {stage}: expression not univariate in {unknown}"
            )
    degree = max(coeffs, default=0)
    rhs = target - coeffs.get(0, 0.0)
    if degree == 0:
        if abs(rhs) <= 1e-9 * max(1.0, abs(target)):
            return 0.0
        raise HistoryNotDerivable(
            f"stage {stage}: state value {target} unreachable (constant expression)"
        )
    if degree == 1:
        slope = coeffs[1]
        if abs(slope) <= 1e-12 * max(1.0, abs(rhs)):
            raise HistoryNotDerivable(f"stage {stage}: singular linear stage")
        return rhs / slope
    poly_coeffs = [coeffs.get(d, 0.0) for d in range(degree, 0, -1)] + [-rhs]
    roots = np.roots(poly_coeffs)
    real = [float(z.real) for z in roots if abs(z.imag) <= 1e-9 * (1.0 + abs(z.real))]
    if not real:
        raise HistoryNotDerivable(f"stage {stage}: no real solution")
    return min(real, key=lambda x: (abs(x), x))


def derive_initial_history(source, z0, budget: int = 20000):
    """History {u(-i)}, {y(-i) = 0} whose recursion reproduces state z0.

    Stage i solves E_i(u(-1..-i), 0) = z0_i where E_i expresses z_i(t) in the
    lagged signals; earlier stages fix all but u(-i), so each stage is a
    univariate polynomial solve.  Nonlinear stages pick the real root of
    smallest magnitude; an unsolvable stage raises HistoryNotDerivable
    (callers can always fall back to z0 = 0).
    """
    sys = canonical_from_decomposition(source) if isinstance(source, DecompositionResult) else source
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    if z0.shape != (sys.n_prime,):
        raise ValueError("z0 length must equal n'")
    expressions = _state_expressions(sys, budget)
    known: dict = {}
    u_init: list[float] = []
    for i, expr in enumerate(expressions, start=1):
        zero_y = {v: 0.0 for v in expr.variables() if v[0] == "y"}
        reduced = expr.substitute({**zero_y, **known})
        value = _solve_stage(reduced, float(z0[i - 1]), ("u", i), i)
        known[("u", i)] = value
        u_init.append(value)
    y_init = [np.zeros(sys.p) for _ in range(sys.n_prime)]
    return u_init, y_init
