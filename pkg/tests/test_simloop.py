import numpy as np
import pytest

from conftest import (
    CTRL_A,
    CTRL_B,
    CTRL_C,
    PLANT_A,
    PLANT_B,
    PLANT_C,
    quadratic_spec,
    stable_linear_spec,
)
from encloop.errors import SignalBoundViolated, SimulationAborted
from encloop.fixedpoint import parse_state_polynomial
from encloop.polynomial import Poly
from encloop.simloop import (
    LinearPlant,
    LoopSpec,
    PolynomialPlant,
    Reference,
    compare,
    simulate,
    sweep,
    sweep_csv,
)


def test_closed_loop_is_stable_oracle():
    # eigenvalue check of the interconnection matrix: spectral radius < 1
    Ap, Bp, Cp = np.array(PLANT_A), np.array(PLANT_B).reshape(-1, 1), np.array(PLANT_C)
    Ac, Bc, Cc = np.array(CTRL_A), np.array(CTRL_B), np.array(CTRL_C).reshape(1, -1)
    acl = np.block([[Ap, Bp @ Cc], [Bc @ Cp, Ac]])
    assert max(abs(np.linalg.eigvals(acl))) < 1.0


def test_equilibrium_stays_zero():
    spec = stable_linear_spec(r=1e-3, reference=Reference(kind="zero"))
    spec.plant.x0[:] = 0.0
    for mode in ("nominal", "quantized", "encrypted"):
        tr = simulate(spec, mode, 50)
        assert all(np.all(y == 0.0) for y in tr.y)
        assert all(v in (None, 0.0) for v in tr.u_nom + tr.u_q + tr.u_enc)
        assert all(v in (None, 0) for v in tr.ubar_prime)


def test_nominal_bounded_by_M():
    spec = stable_linear_spec(r=1e-3)
    tr = simulate(spec, "nominal", 10_000)
    assert max(abs(v) for v in tr.u_nom) < spec.M
    assert max(float(np.max(np.abs(y))) for y in tr.y) < spec.M


def test_encrypted_equals_quantized_u_q_channel(linear_spec):
    enc_tr = simulate(linear_spec, "encrypted", 400)
    q_tr = simulate(linear_spec, "quantized", 400)
    res = compare(enc_tr, q_tr, "u_q")
    assert res.max_abs_err == 0.0
    assert enc_tr.ubar_prime == q_tr.ubar_prime  # integer channel bit-identical
    assert all(b is not None and b > 0 for b in enc_tr.noise_budget_bits)


def test_assert_exact_mode_passes(linear_spec):
    simulate(linear_spec, "encrypted", 200, assert_exact=True)


def test_quantized_tracks_nominal_within_encoder_bound(linear_spec):
    nom = simulate(linear_spec, "nominal", 500)
    quant = simulate(linear_spec, "quantized", 500)
    err = compare(quant, nom, "u").max_abs_err
    assert 0.0 < err < 0.05  # empirical at r = 1e-3


def test_compare_identity_and_mismatch(linear_spec):
    tr = simulate(linear_spec, "quantized", 50)
    assert compare(tr, tr, "u_q").max_abs_err == 0.0
    other = simulate(linear_spec, "quantized", 49)
    with pytest.raises(ValueError):
        compare(tr, other, "u_q")


def test_quadratic_loop_encrypted_leveled(quad_spec):
    enc_tr = simulate(quad_spec, "encrypted", 300)
    q_tr = simulate(quad_spec, "quantized", 300)
    assert compare(enc_tr, q_tr, "u_q").max_abs_err == 0.0
    assert all(b == float("inf") for b in enc_tr.noise_budget_bits)


def test_sweep_errors_shrink():
    rows = sweep(lambda r: stable_linear_spec(r=r, backend=None), [1e-1, 1e-2, 1e-3, 1e-4], 800)
    assert all(row.status == "ok" for row in rows)
    errs = [row.max_abs_err for row in rows]
    for coarse, fine in zip(errs, errs[1:]):
        assert fine <= 1.1 * coarse
    assert errs[-1] < errs[0]
    csv = sweep_csv(rows)
    assert csv.splitlines()[0] == "r,s,max_abs_err,status,abort_step,reason"
    assert len(csv.splitlines()) == 5


def test_sweep_marks_aborted_rows_and_continues():
    # M mis-declared far below the true command range: the box guard fires
    rows = sweep(
        lambda r: stable_linear_spec(r=r, M=0.5, backend=None),
        [1e-1, 1e-3],
        400,
    )
    assert len(rows) == 2  # the sweep continued past the aborted row
    assert rows[0].status == "aborted"
    assert rows[0].reason in ("SignalBoundViolated", "PlaintextOverflow")
    assert rows[0].abort_step is not None


def test_determinism_byte_identical_csv(linear_spec):
    a = simulate(stable_linear_spec(r=1e-3), "encrypted", 150)
    b = simulate(stable_linear_spec(r=1e-3), "encrypted", 150)
    assert a.to_csv() == b.to_csv()


def test_timing_column_only_on_request(linear_spec):
    tr = simulate(linear_spec, "quantized", 10, record_timing=True)
    assert all(v is not None and v >= 0 for v in tr.step_us)
    default_csv = tr.to_csv()
    assert default_csv.splitlines()[1].endswith(",")  # step_us cell empty
    timed_csv = tr.to_csv(include_timing=True)
    assert not timed_csv.splitlines()[1].endswith(",")


def test_divergence_guard():
    spec = stable_linear_spec(r=1e-3, backend=None)
    spec.plant = LinearPlant(A=[[1.5]], B=[1.0], C=[[1.0]], x0=[1.0])
    spec = LoopSpec(
        plant=spec.plant, reference=spec.reference, io=spec.io, M=spec.M,
        enc=spec.enc, N=spec.N,
    )
    with pytest.raises(SimulationAborted) as err:
        simulate(spec, "nominal", 200)
    assert isinstance(err.value.cause, SignalBoundViolated)


def test_polynomial_plant_runs():
    # mildly nonlinear contraction: x+ = 0.5 x + 0.2 u - 0.05 x^2, y = x
    state = parse_state_polynomial("0.0")  # placeholder, rebuilt below
    x = ("x", 1)
    u = ("u", 1)
    state_poly = 0.5 * Poly.var(x) + 0.2 * Poly.var(u) - 0.05 * Poly.var(x, 2)
    out_poly = 1.0 * Poly.var(x)
    plant = PolynomialPlant(state_polys=[state_poly], output_polys=[out_poly], x0=[0.3])
    base = quadratic_spec(r=1e-3)
    spec = LoopSpec(
        plant=plant, reference=base.reference, io=base.io, M=base.M,
        enc=base.enc, N=base.N, make_backend=base.make_backend,
    )
    enc_tr = simulate(spec, "encrypted", 200)
    q_tr = simulate(spec, "quantized", 200)
    assert compare(enc_tr, q_tr, "u_q").max_abs_err == 0.0


def test_polynomial_plant_rejects_u_in_output():
    with pytest.raises(ValueError):
        PolynomialPlant(
            state_polys=[Poly.var(("x", 1))],
            output_polys=[Poly.var(("u", 1))],
            x0=[0.0],
        )
