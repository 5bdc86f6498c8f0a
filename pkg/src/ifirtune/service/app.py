"""FastAPI service exposing the synthesis pipeline."""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..clsq import ClsProblem, InfeasibleError, solve
from ..dissipativity import (DissipativitySpec, EmptyBoxError,
                             certify_nyquist, generate_constraints)
from ..gripper import (ExcitationConfig, GripperParams, NoiseConfig,
                       closed_loop, default_constraint_spec, discretize_plant,
                       evaluate_closed_loop, published_pd_controller,
                       reference_models, run_open_loop_experiment,
                       scaling_benchmark, synthesize_baselines)
from ..lti import (SignalRecord, TransferFunction, simulate_mimo,
                   spectral_radius, zoh_discretize)
from ..vrft import TwoDofController, assemble_regression
from . import schemas as sc

app = FastAPI(title="ifirtune", version=__version__)


def _to_tf(model: sc.ModelSpec, ts: float) -> TransferFunction:
    tf = TransferFunction(model.num, model.den, model.domain,
                          None if model.domain == "continuous" else ts)
    if model.domain == "continuous":
        return zoh_discretize(tf.to_ss(), ts).to_tf()
    return tf


def _to_spec(c: sc.ConstraintSpec) -> DissipativitySpec:
    return DissipativitySpec(c.case, nu1=c.nu1, rho1=c.rho1, alpha1=c.alpha1,
                             eps1=c.eps1, eps2=c.eps2, eps3=c.eps3,
                             sampling_m=c.sampling_m, h0=c.h0, h=c.h)


def _to_controller(c: sc.ControllerModel) -> TwoDofController:
    return TwoDofController(c.gamma, c.g_fb, c.g_ff, c.ts)


def _from_controller(ctrl: TwoDofController) -> sc.ControllerModel:
    return sc.ControllerModel(gamma=ctrl.gamma, g_fb=list(ctrl.g_fb),
                              g_ff=list(ctrl.g_ff), ts=ctrl.ts)


def _bad_request(exc: Exception):
    return HTTPException(status_code=422, detail=str(exc))


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/synthesize", response_model=sc.SynthesisResponse)
def synthesize(req: sc.SynthesisRequest):
    ts = req.data.ts
    data = {"u": SignalRecord(np.asarray(req.data.u), ts),
            "y": SignalRecord(np.asarray(req.data.y), ts)}
    if req.data.d is not None:
        data["d"] = SignalRecord(np.asarray(req.data.d), ts)
    if req.data.y_fb is not None:
        data["y_fb"] = SignalRecord(np.asarray(req.data.y_fb), ts)
    models = {"mr": _to_tf(req.mr, ts)}
    if req.md is not None:
        models["md"] = _to_tf(req.md, ts)
    try:
        problem = assemble_regression(
            req.objective, data, models,
            {"m_fb": req.m_fb, "m_ff": req.m_ff},
            integrator=req.integrator)
    except (ValueError, KeyError) as exc:
        raise _bad_request(exc)

    certificate = None
    if req.constraints is None:
        p = problem.solve_unconstrained()
        ctrl = problem.layout.split(p, ts)
        status, iters, kkt = "least_squares", 0, {}
        objective = float(np.mean(problem.residual(p) ** 2))
    else:
        try:
            spec = _to_spec(req.constraints)
            cons = generate_constraints(spec, problem.layout)
        except (EmptyBoxError, ValueError) as exc:
            raise _bad_request(exc)
        cls_problem = ClsProblem(problem.phi, problem.tau, cons.g, cons.hvec,
                                 cons.e, cons.evec)
        try:
            sol = solve(cls_problem, tol_feas=req.solver.tol_feas,
                        tol_kkt=req.solver.tol_kkt,
                        max_iter=req.solver.max_iter,
                        backend=req.solver.backend)
        except InfeasibleError as exc:
            raise HTTPException(status_code=409, detail={
                "reason": "infeasible", "violation": exc.violation})
        x = np.asarray(sol.x, dtype=float).copy()
        if problem.layout.has_gamma and spec.case in ("A", "C") \
                and abs(x[0]) <= 1e-9:
            x[0] = 0.0
        ctrl = problem.layout.split(x, ts)
        status, iters, kkt = sol.status, sol.iterations, dict(sol.kkt)
        objective = float(np.mean(problem.residual(x) ** 2))
        certificate = sc.CertificateModel(
            **certify_nyquist(ctrl, spec, req.dense_grid).to_dict())
    return sc.SynthesisResponse(
        controller=_from_controller(ctrl), objective_value=objective,
        solver_status=status, solver_iterations=iters, solver_kkt=kkt,
        certificate=certificate)


@app.post("/verify", response_model=sc.CertificateModel)
def verify(req: sc.VerifyRequest):
    try:
        spec = _to_spec(req.constraints)
        report = certify_nyquist(_to_controller(req.controller), spec,
                                 req.dense_grid)
    except ValueError as exc:
        raise _bad_request(exc)
    return sc.CertificateModel(**report.to_dict())


@app.post("/simulate", response_model=sc.SimulateResponse)
def simulate_endpoint(req: sc.SimulateRequest):
    try:
        params = GripperParams(**req.plant.model_dump())
    except ValueError as exc:
        raise _bad_request(exc)
    scen = req.scenario
    if req.controller is None:
        plant_d = discretize_plant(params)
        n = int(round(scen.horizon / params.ts))
        t = np.arange(n) * params.ts
        r = np.full(n, scen.step_ref)
        d = np.where(t >= scen.dist_start, scen.step_dist, 0.0)
        y = simulate_mimo(plant_d, np.column_stack([r, d]))
        rho = spectral_radius(plant_d)
        return sc.SimulateResponse(
            stable=bool(rho < 1.0), spectral_radius=rho,
            steady_state_error=float("nan"), t=t.tolist(),
            reference=r.tolist(), disturbance=d.tolist(),
            y_pos=y[:, 0].tolist(), y_vel=y[:, 1].tolist())
    report = evaluate_closed_loop(
        _to_controller(req.controller), params, scen.step_ref,
        scen.step_dist, scen.horizon, scen.dist_start)
    return sc.SimulateResponse(
        stable=report.stable, spectral_radius=report.spectral_radius,
        steady_state_error=report.steady_state_error,
        t=report.t.tolist(), reference=report.reference.tolist(),
        disturbance=report.disturbance.tolist(),
        y_pos=report.y_pos.tolist(), y_vel=report.y_vel.tolist())


@app.post("/bench", response_model=sc.BenchResponse)
def bench(req: sc.BenchRequest):
    params = GripperParams()
    dataset = run_open_loop_experiment(
        params, ExcitationConfig(seed=req.seed))
    mr, md = reference_models(params.ts)
    rows = scaling_benchmark(dataset, mr, md,
                             m_fb_grid=tuple(req.m_fb_grid),
                             sampling_grid=tuple(req.sampling_grid),
                             repeats=req.repeats)
    return sc.BenchResponse(rows=[sc.BenchRow(**r) for r in rows])


@app.post("/gripper/demo", response_model=sc.GripperDemoResponse)
def gripper_demo(req: sc.GripperDemoRequest):
    params = GripperParams()
    excitation = ExcitationConfig(seed=req.seed)
    noise = NoiseConfig(snr_pos_db=req.snr_pos_db, snr_vel_db=req.snr_vel_db,
                        seed=req.noise_seed)
    clean = run_open_loop_experiment(params, excitation)
    noisy = run_open_loop_experiment(params, excitation, noise)
    plant_d = discretize_plant(params)
    mr, md = reference_models(params.ts)
    spec = default_constraint_spec(plant_d, sampling_m=req.sampling_m,
                                   h0=req.h0, h=req.h)
    try:
        baselines = synthesize_baselines(clean, noisy, mr, md, spec)
    except InfeasibleError as exc:
        raise HTTPException(status_code=409, detail={
            "reason": "infeasible", "violation": exc.violation})
    reports = {}
    for name, res in baselines.items():
        rep = evaluate_closed_loop(res.controller, params)
        reports[name] = sc.BaselineReport(
            controller=_from_controller(res.controller),
            objective_value=res.objective,
            solver_status=res.solver_status,
            stable=rep.stable, spectral_radius=rep.spectral_radius,
            steady_state_error=rep.steady_state_error,
            max_mismatch_tracking_db=float(
                np.max(np.abs(rep.mismatch_tracking_db))),
            max_mismatch_disturbance_db=float(
                np.max(np.abs(rep.mismatch_disturbance_db))))
    cert = certify_nyquist(baselines["fir_constrained_clean"].controller,
                           spec, 5000)
    pd_rho = spectral_radius(closed_loop(plant_d,
                                         published_pd_controller(params.ts)))
    return sc.GripperDemoResponse(
        baselines=reports,
        certificate=sc.CertificateModel(**cert.to_dict()),
        published_pd_spectral_radius=pd_rho,
        published_pd_stable=bool(pd_rho < 1.0),
        nu1=spec.nu1, rho1=spec.rho1)
