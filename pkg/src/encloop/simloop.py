"""Closed-loop simulation in nominal, quantized and encrypted modes.

All three modes share the plant, reference signal and initial data; they
differ only in how the controller output is produced:

* nominal   -- the real-arithmetic input-output recursion,
* quantized -- the integer-encoded recursion with quantize/rescale,
* encrypted -- the homomorphic evaluation with the actuator-side
               decrypt / rescale / re-quantize / re-encrypt cycle.

The quantized and encrypted integer channels must agree bit for bit; the
quantized and nominal channels drift apart by at most the encoder's error
bound, and shrinking the steps r and s drives that drift to zero, which the
parameter sweep demonstrates empirically.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    EncLoopError,
    ExactnessMismatch,
    NonFiniteSignal,
    SignalBoundViolated,
    SimulationAborted,
)
from .fixedpoint import EncodedController, quantize
from .realization import IoRealization
from .runtime import (
    Actuator,
    CommandMessage,
    EncryptedController,
    FeedbackMessage,
    QuantizedController,
    Sensor,
    SensorMessage,
)

__all__ = [
    "LinearPlant",
    "PolynomialPlant",
    "Reference",
    "Trace",
    "LoopSpec",
    "CompareResult",
    "SweepRow",
    "simulate",
    "compare",
    "sweep",
    "sweep_csv",
    "trace_from_csv",
]

DIVERGENCE_FACTOR = 1e3

MODES = ("nominal", "quantized", "encrypted")

CSV_CHANNELS = ("u_nom", "u_q", "u_enc", "ubar_prime", "noise_budget_bits", "step_us")


@dataclass
class LinearPlant:
    """x+ = A x + B u (scalar u), y = C x."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(-1)
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape != (n,) or self.C.shape[1] != n:
            raise ValueError("inconsistent plant dimensions")
        if self.x0.shape != (n,):
            raise ValueError("plant x0 length mismatch")
        for mat in (self.A, self.B, self.C, self.x0):
            if not np.all(np.isfinite(mat)):
                raise ValueError("plant parameters must be finite")

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.C @ x

    def step(self, x: np.ndarray, u: float) -> np.ndarray:
        return self.A @ x + self.B * u


@dataclass
class PolynomialPlant:
    """Polynomial state map over ('x', i) and scalar input ('u', 1)."""

    state_polys: list
    output_polys: list
    x0: np.ndarray

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if len(self.state_polys) != len(self.x0):
            raise ValueError("need one state polynomial per state")
        for poly in self.state_polys + self.output_polys:
            for v in poly.variables():
                if v[0] == "x":
                    if not 1 <= v[1] <= len(self.x0):
                        raise ValueError(f"state index out of range: {v}")
                elif v != ("u", 1):
                    raise ValueError(f"unexpected plant variable {v}")
        for poly in self.output_polys:
            if ("u", 1) in poly.variables():
                raise ValueError("plant output map must not depend on u (algebraic loop)")

    @property
    def p(self) -> int:
        return len(self.output_polys)

    def _values(self, x: np.ndarray, u: float | None = None) -> dict:
        values = {("x", i + 1): float(x[i]) for i in range(len(x))}
        if u is not None:
            values[("u", 1)] = float(u)
        return values

    def output(self, x: np.ndarray) -> np.ndarray:
        values = self._values(x)
        return np.array([float(g.evaluate(values)) for g in self.output_polys])

    def step(self, x: np.ndarray, u: float) -> np.ndarray:
        values = self._values(x, u)
        return np.array([float(g.evaluate(values)) for g in self.state_polys])


@dataclass(frozen=True)
class Reference:
    """Exogenous excitation added to every measured output component."""

    kind: str = "zero"  # zero | constant | step | sine
    amplitude: float = 0.0
    period: float = 100.0
    step_at: int = 0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "step", "sine"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        if self.kind == "sine" and self.period <= 0:
            raise ValueError("sine reference needs a positive period")

    def value(self, t: int) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.amplitude
        if self.kind == "step":
            return self.amplitude if t >= self.step_at else 0.0
        return self.amplitude * math.sin(2.0 * math.pi * t / self.period)


@dataclass
class Trace:
    """Per-step record of one simulation run."""

    mode: str
    p: int
    y: list = field(default_factory=list)
    u_nom: list = field(default_factory=list)
    u_q: list = field(default_factory=list)
    u_enc: list = field(default_factory=list)
    ubar_prime: list = field(default_factory=list)
    noise_budget_bits: list = field(default_factory=list)
    step_us: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.y)

    def channel(self, name: str) -> list:
        """Column by name; 'u' resolves to the mode's command channel."""
        if name == "u":
            if self.mode in ("nominal", "quantized", "encrypted"):
                name = {"nominal": "u_nom", "quantized": "u_q", "encrypted": "u_q"}[self.mode]
            else:  # parsed from CSV: first populated command column
                name = "u_q" if any(v is not None for v in self.u_q) else "u_nom"
        if name == "y":
            return self.y
        if name not in CSV_CHANNELS:
            raise KeyError(f"unknown channel {name!r}")
        return getattr(self, name)

    @staticmethod
    def _cell(value) -> str:
        if value is None:
            return ""
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def to_csv(self, include_timing: bool = False) -> str:
        header = ["t"] + [f"y{k + 1}" for k in range(self.p)] + list(CSV_CHANNELS)
        lines = [",".join(header)]
        for t in range(len(self)):
            row = [str(t)] + [repr(float(v)) for v in self.y[t]]
            for name in CSV_CHANNELS:
                if name == "step_us" and not include_timing:
                    row.append("")
                else:
                    row.append(self._cell(getattr(self, name)[t]))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        out = {"mode": self.mode, "steps": len(self), "p": self.p}
        for name in ("u_nom", "u_q", "u_enc"):
            vals = [v for v in getattr(self, name) if v is not None]
            if vals:
                out[f"max_abs_{name}"] = max(abs(v) for v in vals)
        budgets = [
            v for v in self.noise_budget_bits if v is not None and math.isfinite(v)
        ]
        if budgets:  # leveled backend budgets are infinite and not reported
            out["min_noise_budget_bits"] = min(budgets)
        timings = [v for v in self.step_us if v is not None]
        if timings:
            out["mean_step_us"] = sum(timings) / len(timings)
            out["max_step_us"] = max(timings)
        return out


@dataclass
class LoopSpec:
    """Everything one closed-loop run needs, independent of the mode."""

    plant: LinearPlant | PolynomialPlant
    reference: Reference
    io: IoRealization
    M: float
    enc: EncodedController | None = None
    N: int | None = None
    make_backend: Callable[[], object] | None = None

    def __post_init__(self):
        if self.plant.p != self.io.p:
            raise ValueError("plant output dimension must match controller input p")


def _measure(plant, x, ref_value):
    y = plant.output(x) + ref_value
    if not np.all(np.isfinite(y)):
        raise NonFiniteSignal("plant output became non-finite")
    return y


def _guard_divergence(x, M):
    if float(np.max(np.abs(x))) > DIVERGENCE_FACTOR * M:
        raise SignalBoundViolated(
            f"plant state norm exceeded {DIVERGENCE_FACTOR:g} * M; loop diverged"
        )


def simulate(
    spec: LoopSpec,
    mode: str,
    steps: int,
    record_timing: bool = False,
    assert_exact: bool = False,
) -> Trace:
    """Run one closed-loop simulation; deterministic given the spec's seed.

    Runtime errors are re-raised as SimulationAborted with the step index.
    In encrypted mode with ``assert_exact`` a quantized controller runs in
    lockstep and any deviation from L * Dec(u(t)) raises ExactnessMismatch.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode in ("quantized", "encrypted") and (spec.enc is None or spec.N is None):
        raise ValueError(f"{mode} mode needs an encoded controller and plaintext modulus")
    if mode == "encrypted" and spec.make_backend is None:
        raise ValueError("encrypted mode needs a backend factory")

    trace = Trace(mode=mode, p=spec.plant.p)
    x = spec.plant.x0.copy()
    feedthrough = spec.io.g.current_input

    u_hist = list(spec.io.u_init)
    y_hist = [v.copy() for v in spec.io.y_init]

    qc = lockstep = ec = sensor = actuator = backend = sk = None
    if mode in ("quantized", "encrypted"):
        qc = QuantizedController.from_history(
            spec.enc, spec.N, spec.io.u_init, spec.io.y_init
        )
    if mode == "encrypted":
        backend = spec.make_backend()
        sk = backend.keygen()
        sensor = Sensor(backend=backend, sk=sk, r=spec.enc.r, box=spec.enc.input_box)
        actuator = Actuator(
            backend=backend, sk=sk, L=spec.enc.L, r=spec.enc.r, box=spec.enc.input_box
        )
        ec = EncryptedController(
            spec.enc,
            backend,
            actuator.encrypt_history(spec.io.u_init),
            sensor.encrypt_history(spec.io.y_init),
        )
        if assert_exact:
            lockstep = qc

    for t in range(steps):
        started = time.perf_counter_ns() if record_timing else None
        try:
            y = _measure(spec.plant, x, spec.reference.value(t))
            u_nom = u_q = u_enc = ubar_prime = budget = None

            if mode == "nominal":
                u = float(
                    spec.io.g.evaluate(u_hist, y_hist, y_now=y if feedthrough else None)
                )
                u_nom = u
                if spec.io.m > 0:
                    u_hist = [u] + u_hist[:-1]
                    y_hist = [np.asarray(y, dtype=float)] + y_hist[:-1]

            elif mode == "quantized":
                y_bar = quantize(y, spec.enc.r)
                ubar_prime, u_q = qc.step(y_now=y_bar if feedthrough else None)
                u = u_q
                qc.feedback(u_q, y_bar)

            else:  # encrypted
                y_bar, y_cts = sensor.measure(y)
                sensed = SensorMessage(step=t, y_cts=tuple(y_cts))
                ct = ec.step(y_now_cts=sensed.y_cts if feedthrough else None)
                command = CommandMessage(step=t, u_ct=ct)
                u_q, fresh_u = actuator.process(command.u_ct)
                feedback_msg = FeedbackMessage(step=t, u_ct=fresh_u)
                ubar_prime = actuator.last_plain
                u_enc = spec.enc.L * ubar_prime
                budget = backend.noise_budget(command.u_ct, sk)
                if lockstep is not None:
                    q_prime, q_uq = lockstep.step(y_now=y_bar if feedthrough else None)
                    if q_prime != ubar_prime or q_uq != u_q:
                        raise ExactnessMismatch(
                            f"L*Dec != u_q at step {t}: {ubar_prime} vs {q_prime}"
                        )
                    lockstep.feedback(q_uq, y_bar)
                u = u_q
                ec.feedback(feedback_msg.u_ct, sensed.y_cts)

            x = spec.plant.step(x, u)
            _guard_divergence(x, spec.M)
        except EncLoopError as err:
            raise SimulationAborted(t, err) from err

        trace.y.append(np.asarray(y, dtype=float))
        trace.u_nom.append(u_nom)
        trace.u_q.append(u_q)
        trace.u_enc.append(u_enc)
        trace.ubar_prime.append(ubar_prime)
        trace.noise_budget_bits.append(budget)
        trace.step_us.append(
            (time.perf_counter_ns() - started) / 1000.0 if record_timing else None
        )
    return trace


def trace_from_csv(text: str) -> Trace:
    """Rebuild a Trace from its CSV form (mode information is not stored)."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty trace CSV")
    header = lines[0].split(",")
    expected_tail = list(CSV_CHANNELS)
    if header[0] != "t" or header[-len(expected_tail):] != expected_tail:
        raise ValueError("unrecognized trace CSV header")
    p = len(header) - 1 - len(expected_tail)
    if p < 1:
        raise ValueError("trace CSV has no output columns")
    trace = Trace(mode="csv", p=p)
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError("trace CSV row width mismatch")
        trace.y.append(np.array([float(c) for c in cells[1 : 1 + p]]))
        tail = cells[1 + p :]
        for name, cell in zip(CSV_CHANNELS, tail):
            column = getattr(trace, name)
            if cell == "":
                column.append(None)
            elif name == "ubar_prime":
                column.append(int(cell))
            else:
                column.append(float(cell))
    return trace


@dataclass
class CompareResult:
    channel: str
    max_abs_err: float
    argmax_step: int
    series: list


def compare(a: Trace, b: Trace, channel: str = "u") -> CompareResult:
    """Exact per-step comparison of one channel across two traces."""
    if len(a) != len(b):
        raise ValueError(f"trace length mismatch: {len(a)} vs {len(b)}")
    xs, ys = a.channel(channel), b.channel(channel)
    series = []
    for t, (va, vb) in enumerate(zip(xs, ys)):
        if va is None or vb is None:
            raise ValueError(f"channel {channel!r} missing at step {t}")
        if channel == "y":
            series.append(float(np.max(np.abs(np.asarray(va) - np.asarray(vb)))))
        else:
            series.append(abs(va - vb))
    if not series:
        return CompareResult(channel, 0.0, 0, [])
    argmax = int(np.argmax(series))
    return CompareResult(channel, float(series[argmax]), argmax, series)


@dataclass
class SweepRow:
    r: float
    s: float
    max_abs_err: float | None
    status: str  # ok | aborted
    abort_step: int | None = None
    reason: str | None = None


def sweep(
    build: Callable[[float], LoopSpec],
    r_values,
    steps: int,
    mode: str = "quantized",
) -> list:
    """One quantized (or encrypted) run per r, each compared to the nominal run.

    ``build(r)`` must return the loop re-encoded at step r (s tied to r by the
    builder).  The nominal baseline does not depend on r and is simulated once.
    Aborted rows are marked and the sweep continues.
    """
    rows = []
    nominal = None
    for r in r_values:
        try:
            spec = build(float(r))
        except EncLoopError as err:
            rows.append(
                SweepRow(
                    r=float(r),
                    s=float(r),
                    max_abs_err=None,
                    status="aborted",
                    reason=type(err).__name__,
                )
            )
            continue
        if nominal is None:
            nominal = simulate(spec, "nominal", steps)
        try:
            tr = simulate(spec, mode, steps)
            err = compare(tr, nominal, "u").max_abs_err
            rows.append(SweepRow(r=float(r), s=spec.enc.s, max_abs_err=err, status="ok"))
        except SimulationAborted as aborted:
            rows.append(
                SweepRow(
                    r=float(r),
                    s=spec.enc.s if spec.enc else float(r),
                    max_abs_err=None,
                    status="aborted",
                    abort_step=aborted.step,
                    reason=type(aborted.cause).__name__,
                )
            )
    return rows


def sweep_csv(rows) -> str:
    lines = ["r,s,max_abs_err,status,abort_step,reason"]
    for row in rows:
        lines.append(
            ",".join(
                [
                    repr(row.r),
                    repr(row.s),
                    "" if row.max_abs_err is None else repr(row.max_abs_err),
                    row.status,
                    "" if row.abort_step is None else str(row.abort_step),
                    row.reason or "",
                ]
            )
        )
    return "\n".join(lines) + "\n"
