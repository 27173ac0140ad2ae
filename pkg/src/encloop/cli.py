"""Command-line front end; a thin client of the service API.

Without ``--server`` the service app is mounted in-process, so every command
works offline with identical behavior; with ``--server URL`` the same
requests go to a remote instance.  ``keygen`` is the one exception: key
material is always generated locally and never sent anywhere.

Exit codes: 0 success, 2 certification failure, 3 runtime assertion failure,
4 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

from .errors import EncLoopError

EXIT_OK = 0
EXIT_CERTIFICATION = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

OUT_DIR_ENV = "ENCLOOP_OUT"


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_config_payload(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as err:
        raise EncLoopError(f"cannot read config {path}: {err}") from err
    if not isinstance(data, dict):
        raise EncLoopError(f"config {path} must be a YAML mapping")
    return data


def _out_dir(args) -> Path:
    base = args.out or os.environ.get(OUT_DIR_ENV) or "."
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _post(client, endpoint: str, payload: dict):
    resp = client.post(endpoint, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise EncLoopError(f"{endpoint} failed ({resp.status_code}): {detail}")
    return resp.json()


def _write(path: Path, content: str) -> None:
    path.write_text(content, encoding="utf-8")
    print(f"wrote {path}")


_STATUS_EXIT = {
    "ok": EXIT_OK,
    "certification_failed": EXIT_CERTIFICATION,
    "runtime_failure": EXIT_RUNTIME,
}


def _print_certification(cert: dict) -> None:
    verdict = "PASS" if cert["ok"] else "FAIL"
    print(
        f"certification: {verdict} (backend={cert['backend']}, "
        f"N={cert['configured_modulus']}, required N={cert['required_modulus']})"
    )
    for message in cert["messages"]:
        print(f"  hint: {message}")


def cmd_convert(args) -> int:
    client = _client(args.server)
    data = _post(client, "/convert", {"config": _load_config_payload(args.config)})
    out = _out_dir(args)
    conv = data["conversion"]
    _write(out / "realization.txt", conv["realization"] + "\n")
    _write(out / "encoded.txt", conv["encoded"] + "\n")
    _write(out / "report.json", json.dumps(data, indent=2) + "\n")
    _write(out / "normalized.yaml", data["normalized_config"])
    print(
        f"realization: n'={conv['n_prime']} (dropped {conv['dropped_states']} "
        f"unobservable state(s)), m={conv['m']}, p={conv['p']}"
    )
    print(
        f"encoding: L={conv['L']}, d_max={conv['d_max']}, "
        f"plaintext bound {conv['plaintext_bound']}, required N {conv['required_modulus']}, "
        f"capability {conv['capability_required']}"
    )
    _print_certification(data["certification"])
    return _STATUS_EXIT[data["status"]]


def cmd_certify(args) -> int:
    client = _client(args.server)
    data = _post(client, "/certify", {"config": _load_config_payload(args.config)})
    out = _out_dir(args)
    _write(out / "certification.json", json.dumps(data, indent=2) + "\n")
    _print_certification(data["certification"])
    return _STATUS_EXIT[data["status"]]


def cmd_keygen(args) -> int:
    # local on purpose: the secret key must not cross the service boundary
    from .config import load_config
    from .homcrypt import serialize_secret_key
    from .pipeline import build_loop

    cfg = load_config(args.config)
    built = build_loop(cfg, seed_override=args.seed)
    backend = built.spec.make_backend()
    sk = backend.keygen()
    path = Path(args.out or "encloop.key")
    path.write_bytes(serialize_secret_key(sk, tag=backend.tag))
    print(f"wrote {path} (backend={built.backend_kind}, n={sk.n}, N={sk.N})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    client = _client(args.server)
    payload = {
        "config": _load_config_payload(args.config),
        "mode": args.mode,
        "steps": args.steps,
        "seed": args.seed,
        "assert_exact": True if args.assert_exact else None,
        "timing": True if args.timing else None,
    }
    data = _post(client, "/simulate", payload)
    out = _out_dir(args)
    if data.get("trace_csv"):
        _write(out / "trace.csv", data["trace_csv"])
    _write(out / "summary.json", json.dumps(
        {k: data[k] for k in ("status", "summary", "certification", "error")},
        indent=2,
    ) + "\n")
    _print_certification(data["certification"])
    if data["status"] == "ok":
        summary = data["summary"]
        print(f"simulated {summary['steps']} steps in mode {summary['mode']}")
        if summary.get("min_noise_budget_bits") is not None:
            print(f"min noise budget: {summary['min_noise_budget_bits']:.1f} bits")
        if "mean_step_us" in summary:
            print(
                f"wall clock per step: mean {summary['mean_step_us']:.1f} us, "
                f"max {summary['max_step_us']:.1f} us"
            )
    elif data.get("error"):
        err = data["error"]
        step = f" at step {err['step']}" if err.get("step") is not None else ""
        print(f"run failed: {err['kind']}{step}: {err['message']}", file=sys.stderr)
    return _STATUS_EXIT[data["status"]]


def cmd_sweep(args) -> int:
    client = _client(args.server)
    try:
        r_values = [float(v) for v in args.r_values.split(",") if v.strip()]
    except ValueError as err:
        return _fail(f"bad --r-values: {err}", EXIT_IO)
    payload = {
        "config": _load_config_payload(args.config),
        "r_values": r_values,
        "steps": args.steps,
        "mode": args.mode,
    }
    data = _post(client, "/sweep", payload)
    out = _out_dir(args)
    _write(out / "sweep.csv", data["csv"])
    for row in data["rows"]:
        if row["status"] == "ok":
            print(f"r={row['r']:.3g}  s={row['s']:.3g}  max|u_q-u_nom|={row['max_abs_err']:.6g}")
        else:
            where = f" at step {row['abort_step']}" if row["abort_step"] is not None else ""
            print(f"r={row['r']:.3g}  aborted ({row['reason']}{where})")
    return _STATUS_EXIT[data["status"]]


def cmd_compare(args) -> int:
    client = _client(args.server)
    try:
        csv_a = Path(args.trace_a).read_text(encoding="utf-8")
        csv_b = Path(args.trace_b).read_text(encoding="utf-8")
    except OSError as err:
        return _fail(str(err), EXIT_IO)
    data = _post(
        client,
        "/compare",
        {"trace_csv_a": csv_a, "trace_csv_b": csv_b, "channel": args.channel},
    )
    print(
        f"channel {data['channel']}: max abs err {data['max_abs_err']:.6g} "
        f"at step {data['argmax_step']} over {data['steps']} steps"
    )
    return _STATUS_EXIT[data["status"]]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="encloop",
        description="Dynamic control over encrypted data: convert, certify, simulate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run configuration YAML")
        p.add_argument("--server", default=None, help="remote service URL (default: in-process)")
        p.add_argument("--out", default=None, help=f"output directory (or ${OUT_DIR_ENV})")

    p = sub.add_parser("convert", help="controller -> IO recursion -> integer encoding")
    common(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("certify", help="check plaintext range, capability and noise margins")
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("keygen", help="generate the secret key file locally")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", default=None, help="override crypto.seed")
    p.add_argument("--out", default=None, help="key file path (default encloop.key)")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("simulate", help="closed-loop run in one mode")
    common(p)
    p.add_argument("--mode", choices=["nominal", "quantized", "encrypted"], default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", default=None)
    p.add_argument("--assert-exact", action="store_true",
                   help="run a quantized controller in lockstep and require bit-equality")
    p.add_argument("--timing", action="store_true", help="record per-step wall clock")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="quantization-step sweep against the nominal loop")
    common(p)
    p.add_argument("--r-values", required=True, help="comma-separated, decreasing")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--mode", choices=["quantized", "encrypted"], default="quantized")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="compare a channel across two trace CSVs")
    p.add_argument("--trace-a", required=True)
    p.add_argument("--trace-b", required=True)
    p.add_argument("--channel", default="u")
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EncLoopError as err:
        return _fail(str(err), EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
