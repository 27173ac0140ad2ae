"""FastAPI service wrapping the conversion/certification/simulation engine.

Run with ``uvicorn encloop.service.app:app``.  The CLI mounts the same app
in-process, so no deployment is needed for local use.  Outcomes that are
legitimate results of a run (certification rejection, runtime aborts) come
back as HTTP 200 with a ``status`` field; malformed configs and conversion
failures are HTTP 400.  There is deliberately no key-generation endpoint:
secret keys are created client-side and never cross the service boundary.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..config import normalize_config
from ..errors import (
    CertificationFailure,
    ConfigError,
    EncLoopError,
    SimulationAborted,
)
from ..pipeline import BuiltLoop, build_loop, run_sweep
from ..simloop import compare, simulate, sweep_csv, trace_from_csv
from .models import (
    CertificationOut,
    CertifyRequest,
    CertifyResponse,
    CompareRequest,
    CompareResponse,
    ConversionOut,
    ConvertRequest,
    ConvertResponse,
    ErrorInfo,
    SimulateRequest,
    SimulateResponse,
    SweepRequest,
    SweepResponse,
    SweepRowOut,
)


def _conversion_out(built: BuiltLoop) -> ConversionOut:
    return ConversionOut(**built.conversion.to_dict())


def _certification_out(built: BuiltLoop) -> CertificationOut:
    return CertificationOut(**built.certification.to_dict())


def _build_or_400(config) -> BuiltLoop:
    try:
        return build_loop(config)
    except (ConfigError, ValueError) as err:
        raise HTTPException(status_code=400, detail=str(err)) from err
    except EncLoopError as err:
        raise HTTPException(
            status_code=400,
            detail=f"{type(err).__name__}: {err}",
        ) from err


def create_app() -> FastAPI:
    app = FastAPI(
        title="encloop",
        description=(
            "Converts dynamic controllers to input-output form, encodes them "
            "over integers, and runs/verifies them over encrypted data."
        ),
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/convert", response_model=ConvertResponse)
    def convert(req: ConvertRequest) -> ConvertResponse:
        built = _build_or_400(req.config)
        return ConvertResponse(
            status="ok" if built.certification.ok else "certification_failed",
            conversion=_conversion_out(built),
            certification=_certification_out(built),
            normalized_config=normalize_config(req.config),
        )

    @app.post("/certify", response_model=CertifyResponse)
    def certify(req: CertifyRequest) -> CertifyResponse:
        built = _build_or_400(req.config)
        return CertifyResponse(
            status="ok" if built.certification.ok else "certification_failed",
            conversion=_conversion_out(built),
            certification=_certification_out(built),
        )

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate_endpoint(req: SimulateRequest) -> SimulateResponse:
        cfg = req.config
        mode = req.mode or cfg.run.mode
        steps = cfg.run.steps if req.steps is None else req.steps
        assert_exact = cfg.run.assert_exact if req.assert_exact is None else req.assert_exact
        timing = cfg.run.timing if req.timing is None else req.timing
        try:
            built = build_loop(cfg, seed_override=req.seed)
        except (ConfigError, ValueError) as err:
            raise HTTPException(status_code=400, detail=str(err)) from err
        except EncLoopError as err:
            raise HTTPException(
                status_code=400, detail=f"{type(err).__name__}: {err}"
            ) from err
        base = dict(
            conversion=_conversion_out(built),
            certification=_certification_out(built),
        )
        if (
            mode == "encrypted"
            and not built.certification.ok
            and not cfg.crypto.allow_uncertified
        ):
            return SimulateResponse(
                status="certification_failed",
                error=ErrorInfo(
                    kind="CertificationFailure",
                    message="; ".join(built.certification.messages)
                    or "parameter set rejected",
                ),
                **base,
            )
        try:
            trace = simulate(
                built.spec, mode, steps, record_timing=timing, assert_exact=assert_exact
            )
        except SimulationAborted as aborted:
            return SimulateResponse(
                status="runtime_failure",
                error=ErrorInfo(
                    kind=type(aborted.cause).__name__,
                    message=str(aborted.cause),
                    step=aborted.step,
                ),
                **base,
            )
        return SimulateResponse(
            status="ok",
            summary=trace.summary(),
            trace_csv=trace.to_csv(include_timing=timing) if req.include_trace else None,
            **base,
        )

    @app.post("/sweep", response_model=SweepResponse)
    def sweep_endpoint(req: SweepRequest) -> SweepResponse:
        try:
            rows, built = run_sweep(
                req.config, req.r_values, steps=req.steps, mode=req.mode
            )
        except (ConfigError, ValueError) as err:
            raise HTTPException(status_code=400, detail=str(err)) from err
        except CertificationFailure as err:
            raise HTTPException(status_code=400, detail=str(err)) from err
        except EncLoopError as err:
            raise HTTPException(
                status_code=400, detail=f"{type(err).__name__}: {err}"
            ) from err
        return SweepResponse(
            status="ok",
            conversion=_conversion_out(built),
            certification=_certification_out(built),
            rows=[
                SweepRowOut(
                    r=row.r,
                    s=row.s,
                    max_abs_err=row.max_abs_err,
                    status=row.status,
                    abort_step=row.abort_step,
                    reason=row.reason,
                )
                for row in rows
            ],
            csv=sweep_csv(rows),
        )

    @app.post("/compare", response_model=CompareResponse)
    def compare_endpoint(req: CompareRequest) -> CompareResponse:
        try:
            a = trace_from_csv(req.trace_csv_a)
            b = trace_from_csv(req.trace_csv_b)
            result = compare(a, b, req.channel)
        except (ValueError, KeyError) as err:
            raise HTTPException(status_code=400, detail=str(err)) from err
        return CompareResponse(
            status="ok",
            channel=result.channel,
            steps=len(a),
            max_abs_err=result.max_abs_err,
            argmax_step=result.argmax_step,
        )

    return app


app = create_app()
