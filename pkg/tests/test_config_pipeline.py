from pathlib import Path

import pytest
import yaml

from encloop.config import (
    RunConfig,
    load_config,
    normalize_config,
    parse_config,
)
from encloop.errors import (
    CertificationFailure,
    ConfigError,
    PlaintextOverflow,
    SimulationAborted,
)
from encloop.pipeline import build_loop, coerce_seed_int, run_simulation, run_sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def scalar_config(**overrides) -> RunConfig:
    # controller x+ = 0.5 x + y, u = 2 x around a contractive plant
    data = {
        "controller": {"type": "linear", "A": [[0.5]], "B": [[1.0]], "C": [2.0]},
        "plant": {"type": "linear", "A": [[0.5]], "B": [0.1], "C": [[1.0]], "x0": [0.5]},
        "reference": {"kind": "sine", "amplitude": 0.3, "period": 30.0},
        "fixedpoint": {"r": 1e-3, "M": 4.0},
        "crypto": {"backend": "lwe", "n": 32, "seed": 5},
        "run": {"mode": "encrypted", "steps": 200},
    }
    for key, value in overrides.items():
        data[key] = {**data.get(key, {}), **value}
    return parse_config(data)


def test_sample_configs_load_and_normalize_round_trip():
    for name in ("linear_lwe.yaml", "quadratic_leveled.yaml"):
        cfg = load_config(CONFIGS / name)
        text = normalize_config(cfg)
        again = parse_config(yaml.safe_load(text))
        assert again == cfg
        assert normalize_config(again) == text


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        parse_config(
            {
                "controller": {"type": "linear", "A": [[0.5]], "B": [[1.0]], "C": [2.0]},
                "plant": {"type": "linear", "A": [[0.5]], "B": [0.1], "C": [[1.0]], "x0": [0.0]},
                "fixedpoint": {"r": 1e-3, "M": 1.0},
                "typo_section": {},
            }
        )


def test_seed_coercion_rules():
    assert coerce_seed_int(1234) == 1234
    assert coerce_seed_int("1234") == 1234
    assert coerce_seed_int("ff00") == int.from_bytes(bytes.fromhex("ff00"), "little")
    assert coerce_seed_int("not hex") == coerce_seed_int("not hex")


def test_scalar_conversion_report_values():
    built = build_loop(scalar_config())
    conv = built.conversion
    assert conv.n_prime == 1 and conv.m == 1
    assert "0.5 * u[1]" in conv.realization_text
    assert "2.0 * y[1]" in conv.realization_text
    assert "500 * u[1]" in conv.encoded_text
    assert "2000 * y[1]" in conv.encoded_text
    assert conv.L == pytest.approx(1e-6)
    assert built.certification.ok


def test_unobservable_mode_noted_in_report():
    cfg = scalar_config(
        controller={
            "type": "linear",
            "A": [[0.5, 0.0], [0.0, 0.9]],
            "B": [[1.0], [1.0]],
            "C": [1.0, 0.0],
        }
    )
    built = build_loop(cfg)
    assert built.conversion.n_prime == 1
    assert built.conversion.dropped_states == 1


def test_canonical_quadratic_report():
    cfg = load_config(CONFIGS / "quadratic_leveled.yaml")
    built = build_loop(cfg)
    conv = built.conversion
    assert conv.controller_kind == "canonical"
    assert conv.capability_required == "Leveled(2)"
    assert "0.3 * u[1]^2" in conv.realization_text
    assert "-0.2 * u[2]" in conv.realization_text
    assert "1.0 * y[2]" in conv.realization_text
    assert built.certification.ok


def test_forced_small_modulus_fails_certification():
    cfg = scalar_config(crypto={"plaintext_modulus": 64})
    built = build_loop(cfg)
    assert not built.certification.ok
    assert not built.certification.plaintext_ok
    with pytest.raises(CertificationFailure):
        run_simulation(cfg, mode="encrypted", steps=50)


def test_uncertified_run_hits_plaintext_overflow_with_step():
    cfg = scalar_config(
        crypto={"plaintext_modulus": 64, "allow_uncertified": True},
        run={"mode": "quantized", "steps": 100},
    )
    with pytest.raises(SimulationAborted) as err:
        run_simulation(cfg, mode="quantized")
    assert isinstance(err.value.cause, PlaintextOverflow)
    assert err.value.step >= 0


def test_run_simulation_modes_from_sample_config():
    cfg = load_config(CONFIGS / "linear_lwe.yaml")
    for mode in ("nominal", "quantized", "encrypted"):
        trace, built = run_simulation(cfg, mode=mode, steps=120)
        assert len(trace) == 120
        assert built.certification.ok
    enc_trace, _ = run_simulation(cfg, mode="encrypted", steps=120)
    q_trace, _ = run_simulation(cfg, mode="quantized", steps=120)
    assert enc_trace.ubar_prime == q_trace.ubar_prime


def test_run_sweep_decreasing_errors():
    cfg = scalar_config(run={"steps": 400})
    rows, built = run_sweep(cfg, [1e-1, 1e-2, 1e-3], steps=400)
    assert [row.status for row in rows] == ["ok"] * 3
    errs = [row.max_abs_err for row in rows]
    assert errs[2] < errs[0]
    assert built.conversion.n_prime == 1
    with pytest.raises(ConfigError):
        run_sweep(cfg, [1e-3, 1e-2], steps=10)  # must be decreasing
    with pytest.raises(ConfigError):
        run_sweep(cfg, [], steps=10)
