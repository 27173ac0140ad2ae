import numpy as np
import pytest

from encloop.errors import (
    CapabilityExceeded,
    FreshnessViolation,
    PlaintextOverflow,
    SignalBoundViolated,
)
from encloop.fixedpoint import (
    FixedPointParams,
    HistoryPolynomial,
    encode_polynomial,
    quantize,
    required_plaintext_modulus,
)
from encloop.homcrypt import LeveledBackend, LweBackend, LweParams, certify_noise
from encloop.polynomial import Poly
from encloop.runtime import (
    Actuator,
    EncryptedController,
    QuantizedController,
    Sensor,
    actuator_process,
)


def u(i):
    return ("u", i)


def y(j, k=1):
    return ("y", j, k)


def linear_encoded(r=0.001, s=0.01, M=1.0):
    poly = 0.5 * Poly.var(u(1)) + 2.0 * Poly.var(y(1))
    g = HistoryPolynomial(poly, m=1, p=1)
    return encode_polynomial(g, FixedPointParams(r=r, M=M, s=s))


def quadratic_encoded(r=0.01, s=0.01, M=2.0):
    poly = 0.3 * Poly.var(u(1), 2) - 0.2 * Poly.var(u(2)) + 1.0 * Poly.var(y(2))
    g = HistoryPolynomial(poly, m=2, p=1)
    return encode_polynomial(g, FixedPointParams(r=r, M=M, s=s))


def next_pow2(n):
    return 1 << (n - 1).bit_length()


# -- quantized controller -----------------------------------------------------------


def test_zero_history_zero_output():
    enc = linear_encoded()
    qc = QuantizedController.from_history(enc, N=1 << 24, u_init=[0.0], y_init=[[0.0]])
    assert qc.step() == (0, 0.0)


def test_linear_example_step():
    enc = linear_encoded()
    qc = QuantizedController(enc=enc, N=1 << 24, u_hist=[500], y_hist=[[1000]])
    ubar_prime, u_q = qc.step()
    assert ubar_prime == 225000
    assert u_q == 2.25


def test_step_matches_real_oracle_within_bound():
    rng = np.random.default_rng(8)
    enc = linear_encoded(M=1.0)
    g = HistoryPolynomial(0.5 * Poly.var(u(1)) + 2.0 * Poly.var(y(1)), m=1, p=1)
    for _ in range(300):
        u_real = float(rng.uniform(-1, 1))
        y_real = float(rng.uniform(-1, 1))
        qc = QuantizedController.from_history(
            enc, N=1 << 30, u_init=[u_real], y_init=[[y_real]]
        )
        _, u_q = qc.step()
        assert abs(u_q - g.evaluate([u_real], [[y_real]])) <= enc.error_bound


def test_plaintext_overflow_detected():
    enc = linear_encoded()
    qc = QuantizedController(enc=enc, N=64, u_hist=[500], y_hist=[[1000]])
    with pytest.raises(PlaintextOverflow):
        qc.step()


def test_feedback_requantizes_and_rotates():
    enc = quadratic_encoded(M=4.0)
    qc = QuantizedController(enc=enc, N=1 << 40, u_hist=[11, 22], y_hist=[[1], [2]])
    qc.feedback(2.25, [5])
    assert qc.u_hist == [225, 11]  # 2.25 / 0.01
    assert qc.y_hist == [[5], [1]]
    assert qc.t == 1
    qc.feedback(0.0, [6])
    assert qc.u_hist == [0, 225] and qc.y_hist == [[6], [5]]


def test_feedback_replaces_whole_history_after_m_steps():
    enc = quadratic_encoded()
    qc = QuantizedController(enc=enc, N=1 << 40, u_hist=[9, 9], y_hist=[[9], [9]])
    for i in range(enc.m):
        qc.feedback(0.01 * (i + 1), [i + 1])
    assert 9 not in qc.u_hist and [9] not in qc.y_hist


def test_feedback_box_guard():
    enc = linear_encoded(M=1.0)  # box = 1001
    qc = QuantizedController.from_history(enc, N=1 << 30, u_init=[0.0], y_init=[[0.0]])
    with pytest.raises(SignalBoundViolated):
        qc.feedback(5.0, [0])  # 5.0 / 0.001 = 5000 > 1001
    with pytest.raises(SignalBoundViolated):
        qc.feedback(0.0, [9999])


# -- encrypted controller ------------------------------------------------------------


def lwe_setup(enc, seed=11):
    n_required = required_plaintext_modulus(enc)
    params = LweParams(n=32, N=next_pow2(n_required), noise_bound=16, seed=seed)
    assert certify_noise(
        [c for k, c in enc.int_poly.items() if k], params
    ).ok
    backend = LweBackend(params)
    sk = backend.keygen()
    return backend, sk, params


def test_all_zero_encrypted_history_decrypts_zero():
    enc = linear_encoded()
    backend, sk, params = lwe_setup(enc)
    sensor = Sensor(backend=backend, sk=sk, r=enc.r, box=enc.input_box)
    actuator = Actuator(backend=backend, sk=sk, L=enc.L, r=enc.r, box=enc.input_box)
    ec = EncryptedController(
        enc, backend, actuator.encrypt_history([0.0]), sensor.encrypt_history([[0.0]])
    )
    ct = ec.step()
    assert backend.decrypt(ct, sk) == 0
    assert not ct.fresh


def test_lockstep_encrypted_equals_quantized_lwe():
    # oracle: the quantized controller running in lockstep; Prop-1 style equality
    enc = linear_encoded(M=2.0)
    backend, sk, params = lwe_setup(enc)
    qc = QuantizedController.from_history(enc, params.N, [0.12], [[-0.3]])
    sensor = Sensor(backend=backend, sk=sk, r=enc.r, box=enc.input_box)
    actuator = Actuator(backend=backend, sk=sk, L=enc.L, r=enc.r, box=enc.input_box)
    ec = EncryptedController(
        enc, backend, actuator.encrypt_history([0.12]), sensor.encrypt_history([[-0.3]])
    )
    rng = np.random.default_rng(3)
    for _ in range(500):
        ubar_prime, u_q = qc.step()
        ct = ec.step()
        dec = backend.decrypt(ct, sk)
        assert dec == ubar_prime
        assert enc.L * dec == u_q  # bit-exact
        assert backend.noise_budget(ct, sk) > 0
        u_q_enc, fresh_u = actuator.process(ct)
        assert u_q_enc == u_q
        y_real = [float(rng.uniform(-0.4, 0.4))]  # keeps |u| <= 0.5|u| + 0.8 < M
        y_bar, y_cts = sensor.measure(y_real)
        assert backend.decrypt(fresh_u, sk) == quantize([u_q], enc.r)[0]
        qc.feedback(u_q, y_bar)
        ec.feedback(fresh_u, y_cts)
        assert [backend.decrypt(c, sk) for c in ec.u_cts] == qc.u_hist


def test_lockstep_quadratic_on_leveled_backend():
    enc = quadratic_encoded()
    N = next_pow2(required_plaintext_modulus(enc))
    backend = LeveledBackend(N=N, depth_cap=1, seed=5)
    sk = backend.keygen()
    qc = QuantizedController.from_history(enc, N, [0.5, -0.25], [[0.1], [0.4]])
    sensor = Sensor(backend=backend, sk=sk, r=enc.r, box=enc.input_box)
    actuator = Actuator(backend=backend, sk=sk, L=enc.L, r=enc.r, box=enc.input_box)
    ec = EncryptedController(
        enc,
        backend,
        actuator.encrypt_history([0.5, -0.25]),
        sensor.encrypt_history([[0.1], [0.4]]),
    )
    rng = np.random.default_rng(4)
    for _ in range(300):
        ubar_prime, u_q = qc.step()
        ct = ec.step()
        assert backend.decrypt(ct, sk) == ubar_prime
        u_q_enc, fresh_u = actuator.process(ct)
        assert u_q_enc == u_q
        y_bar, y_cts = sensor.measure([float(rng.uniform(-0.5, 0.5))])
        qc.feedback(u_q, y_bar)
        ec.feedback(fresh_u, y_cts)


def test_quadratic_on_lwe_backend_is_rejected():
    enc = quadratic_encoded()
    backend, sk, params = lwe_setup(enc)
    sensor = Sensor(backend=backend, sk=sk, r=enc.r, box=enc.input_box)
    actuator = Actuator(backend=backend, sk=sk, L=enc.L, r=enc.r, box=enc.input_box)
    assert not backend.capability.covers(enc.required_capability)
    ec = EncryptedController(
        enc,
        backend,
        actuator.encrypt_history([0.0, 0.0]),
        sensor.encrypt_history([[0.0], [0.0]]),
    )
    with pytest.raises(CapabilityExceeded):
        ec.step()


def test_stale_output_cannot_be_fed_back():
    enc = linear_encoded()
    backend, sk, _ = lwe_setup(enc)
    sensor = Sensor(backend=backend, sk=sk, r=enc.r, box=enc.input_box)
    actuator = Actuator(backend=backend, sk=sk, L=enc.L, r=enc.r, box=enc.input_box)
    ec = EncryptedController(
        enc, backend, actuator.encrypt_history([0.0]), sensor.encrypt_history([[0.0]])
    )
    ct = ec.step()
    with pytest.raises(SignalBoundViolated):
        ec.feedback(ct, sensor.measure([0.0])[1])  # evaluation output is not fresh
    ec.feedback(actuator.process(ct)[1], sensor.measure([0.0])[1])
    # even if smuggled into the buffer, the next evaluation epoch rejects it
    ec.u_cts[0] = ct
    with pytest.raises(FreshnessViolation):
        ec.step()


# -- actuator ---------------------------------------------------------------------------


def test_actuator_roundtrip_and_zero():
    enc = linear_encoded()
    backend, sk, params = lwe_setup(enc)
    actuator = Actuator(backend=backend, sk=sk, L=enc.L, r=enc.r, box=enc.input_box)
    ct = backend.encrypt(1234, sk)
    u_q, fresh = actuator.process(ct)
    assert u_q == enc.L * 1234
    assert backend.decrypt(fresh, sk) == quantize([u_q], enc.r)[0]
    assert fresh.fresh
    u_q0, fresh0 = actuator.process(backend.encrypt(0, sk))
    assert u_q0 == 0.0 and backend.decrypt(fresh0, sk) == 0


def test_actuator_box_guard():
    enc = linear_encoded(M=1.0)
    backend, sk, params = lwe_setup(enc)
    actuator = Actuator(backend=backend, sk=sk, L=1.0, r=enc.r, box=enc.input_box)
    with pytest.raises(SignalBoundViolated):
        actuator.process(backend.encrypt(30000, sk))  # decodes far outside the box


def test_actuator_process_function_view():
    enc = linear_encoded()
    backend, sk, params = lwe_setup(enc)
    u_q, fresh = actuator_process(
        backend.encrypt(10, sk), sk, enc.L, enc.r, backend, enc.input_box
    )
    assert u_q == enc.L * 10 and fresh.fresh


# -- static (memory-0, feedthrough) controller --------------------------------------------


def test_all_coefficients_rounded_away_still_runs():
    # coarse s rounds the only coefficient to zero: the controller degenerates
    # to the constant 0 but both execution paths must stay consistent
    g = HistoryPolynomial(0.001 * Poly.var(u(1)), m=1, p=1)
    enc = encode_polynomial(g, FixedPointParams(r=0.1, M=1.0, s=1.0))
    assert len(enc.int_poly) == 0
    backend = LweBackend(LweParams(n=16, N=1 << 8, seed=4))
    sk = backend.keygen()
    qc = QuantizedController.from_history(enc, 1 << 8, [0.5], [[0.5]])
    ubar_prime, u_q = qc.step()
    assert (ubar_prime, u_q) == (0, 0.0)
    actuator = Actuator(backend=backend, sk=sk, L=enc.L, r=enc.r, box=enc.input_box)
    sensor = Sensor(backend=backend, sk=sk, r=enc.r, box=enc.input_box)
    ec = EncryptedController(
        enc, backend, actuator.encrypt_history([0.5]), sensor.encrypt_history([[0.5]])
    )
    assert backend.decrypt(ec.step(), sk) == 0


def test_static_controller_memory_zero_end_to_end():
    g = HistoryPolynomial(
        1.5 * Poly.var(("y", 0, 1)), m=0, p=1, current_input=True
    )
    enc = encode_polynomial(g, FixedPointParams(r=0.001, M=2.0))
    n_required = required_plaintext_modulus(enc)
    backend = LweBackend(LweParams(n=16, N=next_pow2(n_required), seed=2))
    sk = backend.keygen()
    sensor = Sensor(backend=backend, sk=sk, r=enc.r, box=enc.input_box)
    qc = QuantizedController.from_history(enc, next_pow2(n_required), [], [])
    ec = EncryptedController(enc, backend, [], [])
    rng = np.random.default_rng(6)
    for _ in range(100):
        y_real = [float(rng.uniform(-1, 1))]
        y_bar, y_cts = sensor.measure(y_real)
        ubar_prime, u_q = qc.step(y_now=y_bar)
        ct = ec.step(y_now_cts=y_cts)
        assert backend.decrypt(ct, sk) == ubar_prime
        assert abs(u_q - 1.5 * y_real[0]) <= enc.error_bound
