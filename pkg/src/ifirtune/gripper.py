"""Two-mass soft-gripper benchmark: plant construction, open-loop
experiments, controller synthesis baselines, closed-loop evaluation and
a solve-time scaling study.

The finger is modelled as a symmetric half: a rigid mass m1 (position y1)
closing against a stop through spring/damper k1/c1, coupled to a soft
contact layer mass m2 (position y2) through k2/c2. The control force u
acts on m1, the disturbance force d on m2. The measured outputs are the
position y1 and velocity dy1 of the rigid mass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .clsq import ClsProblem, solve
from .dissipativity import DissipativitySpec, generate_constraints
from .lti import (SignalRecord, StateSpace, TransferFunction,
                  frequency_response, simulate_mimo, spectral_radius,
                  zoh_discretize)
from .vrft import RegressionProblem, TwoDofController, assemble_regression

__all__ = [
    "GripperParams",
    "ExcitationConfig",
    "NoiseConfig",
    "SynthesisResult",
    "ClosedLoopReport",
    "build_plant",
    "discretize_plant",
    "reference_models",
    "run_open_loop_experiment",
    "estimate_passivity_indices",
    "default_constraint_spec",
    "published_pd_controller",
    "synthesize_baselines",
    "closed_loop",
    "evaluate_closed_loop",
    "scaling_benchmark",
]


@dataclass(frozen=True)
class GripperParams:
    """Physical parameters of the half-gripper model (SI units)."""

    m1: float = 0.01
    m2: float = 0.005
    k1: float = 1.5
    k2: float = 1.0
    c1: float = 0.1
    c2: float = 0.2
    ts: float = 0.01

    def __post_init__(self):
        for name in ("m1", "m2", "k1", "k2", "c1", "c2", "ts"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return {name: getattr(self, name)
                for name in ("m1", "m2", "k1", "k2", "c1", "c2", "ts")}


@dataclass(frozen=True)
class ExcitationConfig:
    """Multisine excitation: cosines at frequencies linearly spanning
    [omega_min, omega_max] with seeded random phases on [0, pi]."""

    n_freqs: int = 10
    omega_min: float = 0.5
    omega_max: float = 10.0
    n_samples: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not (0 < self.omega_min < self.omega_max):
            raise ValueError("need 0 < omega_min < omega_max")
        if self.n_freqs < 1:
            raise ValueError("n_freqs must be >= 1")

    @property
    def frequencies(self):
        return np.linspace(self.omega_min, self.omega_max, self.n_freqs)


@dataclass(frozen=True)
class NoiseConfig:
    """Additive white Gaussian measurement noise scaled to target SNR
    (dB, 10*log10 of signal power over noise power) per output channel."""

    snr_pos_db: float = 28.1
    snr_vel_db: float = 30.6
    seed: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.snr_pos_db) and np.isfinite(self.snr_vel_db)):
            raise ValueError("SNR targets must be finite")


def build_plant(params: GripperParams = GripperParams()):
    """Continuous-time state-space pair (P1: u -> outputs, P2: d ->
    outputs) over the shared states (y1, dy1, y2, dy2); outputs are
    (y1, dy1)."""
    m1, m2 = params.m1, params.m2
    k1, k2, c1, c2 = params.k1, params.k2, params.c1, params.c2
    a = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-(k1 + k2) / m1, -(c1 + c2) / m1, k2 / m1, c2 / m1],
        [0.0, 0.0, 0.0, 1.0],
        [k2 / m2, c2 / m2, -k2 / m2, -c2 / m2],
    ])
    b1 = np.array([[0.0], [1.0 / m1], [0.0], [0.0]])
    b2 = np.array([[0.0], [0.0], [0.0], [1.0 / m2]])
    c = np.array([[1.0, 0.0, 0.0, 0.0],
                  [0.0, 1.0, 0.0, 0.0]])
    d = np.zeros((2, 1))
    return (StateSpace(a, b1, c, d, "continuous"),
            StateSpace(a, b2, c, d, "continuous"))


def discretize_plant(params: GripperParams = GripperParams()) -> StateSpace:
    """ZOH-discretized two-input plant: inputs (u, d), outputs
    (y1, dy1)."""
    p1, p2 = build_plant(params)
    b = np.hstack([p1.b, p2.b])
    combined = StateSpace(p1.a, b, p1.c, np.zeros((2, 2)), "continuous")
    return zoh_discretize(combined, params.ts)


def _zoh_tf(num, den, ts):
    return zoh_discretize(TransferFunction(num, den, "continuous").to_ss(),
                          ts).to_tf()


def reference_models(ts: float):
    """Discrete reference models (tracking, disturbance): ZOH of
    150/((s+10)(s+15)) and 1000/((s+5)(s+10)(s+30))."""
    mr = _zoh_tf([150.0], np.polymul([1.0, 10.0], [1.0, 15.0]), ts)
    md = _zoh_tf([1000.0],
                 np.polymul(np.polymul([1.0, 5.0], [1.0, 10.0]),
                            [1.0, 30.0]), ts)
    return mr, md


def run_open_loop_experiment(params: GripperParams = GripperParams(),
                             excitation: ExcitationConfig = ExcitationConfig(),
                             noise: NoiseConfig | None = None):
    """Simulate the discretized plant driven by independent multisines on
    u and d; returns {'u', 'd', 'y_pos', 'y_vel'} as SignalRecords."""
    plant_d = discretize_plant(params)
    rng = np.random.default_rng(excitation.seed)
    omega = excitation.frequencies
    phase_u = rng.uniform(0.0, np.pi, omega.size)
    phase_d = rng.uniform(0.0, np.pi, omega.size)
    t = np.arange(excitation.n_samples) * params.ts
    u = np.sum(np.cos(np.outer(t, omega) + phase_u), axis=1)
    d = np.sum(np.cos(np.outer(t, omega) + phase_d), axis=1)
    y = simulate_mimo(plant_d, np.column_stack([u, d]))
    y_pos, y_vel = y[:, 0].copy(), y[:, 1].copy()
    if noise is not None:
        nrng = np.random.default_rng(noise.seed)
        for sig, snr in ((y_pos, noise.snr_pos_db), (y_vel, noise.snr_vel_db)):
            w = nrng.standard_normal(sig.size)
            target_power = float(np.mean(sig ** 2)) / 10.0 ** (snr / 10.0)
            w *= np.sqrt(target_power / np.mean(w ** 2))
            sig += w
    ts = params.ts
    return {"u": SignalRecord(u, ts), "d": SignalRecord(d, ts),
            "y_pos": SignalRecord(y_pos, ts), "y_vel": SignalRecord(y_vel, ts)}


def estimate_passivity_indices(plant_d: StateSpace, n_grid: int = 4000,
                               safety: float = 1.001):
    """Estimate (nu1, rho1) for the discrete u -> velocity map by a dense
    frequency scan: nu1 is the (negative) minimum of the real part, with
    a small safety factor; rho1 is taken as 0."""
    theta = np.linspace(1e-4, np.pi, n_grid)
    resp = frequency_response(plant_d, theta=theta)[:, 1, 0]
    nu1 = safety * float(np.min(resp.real))
    return nu1, 0.0


def default_constraint_spec(plant_d: StateSpace,
                            sampling_m: int = 2000,
                            h0: float = 0.6,
                            h: float = 0.7) -> DissipativitySpec:
    """Case-A constraint specification with plant indices from the dense
    frequency scan. The envelope (h0, h) and sampling density default to
    values that keep the Nyquist box non-empty with a comfortable
    inter-sample margin for m_fb = 50."""
    nu1, rho1 = estimate_passivity_indices(plant_d)
    return DissipativitySpec("A", nu1=nu1, rho1=rho1, eps1=1e-3, eps2=1e-3,
                             sampling_m=sampling_m, h0=h0, h=h)


def published_pd_controller(ts: float) -> TwoDofController:
    """Fixed PD-plus-integrator baseline C(z) = 0.3979 + 0.0136 Ts/(1-z^-1)."""
    return TwoDofController(0.0136, [0.3979], [], ts)


@dataclass(frozen=True)
class SynthesisResult:
    controller: TwoDofController
    objective: float
    solver_status: str = "least_squares"
    solver_iterations: int = 0
    solver_kkt: dict = field(default_factory=dict)

    def to_dict(self):
        return {"controller": self.controller.to_dict(),
                "objective": self.objective,
                "solver_status": self.solver_status,
                "solver_iterations": self.solver_iterations,
                "solver_kkt": self.solver_kkt}


def _fit(problem: RegressionProblem, spec: DissipativitySpec | None,
         ts: float) -> SynthesisResult:
    if spec is None:
        p = problem.solve_unconstrained()
        ctrl = problem.layout.split(p, ts)
        return SynthesisResult(ctrl, float(np.mean(problem.residual(p) ** 2)))
    cons = generate_constraints(spec, problem.layout)
    cls_problem = ClsProblem(problem.phi, problem.tau, cons.g, cons.hvec,
                             cons.e, cons.evec)
    sol = solve(cls_problem)
    x = np.asarray(sol.x, dtype=float).copy()
    if problem.layout.has_gamma and spec.case in ("A", "C") \
            and abs(x[0]) <= 1e-9:
        x[0] = 0.0
    ctrl = problem.layout.split(x, ts)
    return SynthesisResult(ctrl, float(np.mean(problem.residual(x) ** 2)),
                           sol.status, sol.iterations, dict(sol.kkt))


def _regression(dataset, mr, md, m_fb, m_ff, integrator):
    data = {"u": dataset["u"], "y": dataset["y_pos"], "d": dataset["d"],
            "y_fb": dataset["y_vel"]}
    return assemble_regression("2dof_filtered", data, {"mr": mr, "md": md},
                               {"m_fb": m_fb, "m_ff": m_ff},
                               integrator=integrator)


def synthesize_baselines(dataset_clean, dataset_noisy, mr, md,
                         spec: DissipativitySpec, m_fb: int = 50,
                         m_ff: int = 50):
    """Fit the four benchmark controllers: unconstrained PD (integrator +
    single tap), unconstrained FIR, and Case-A constrained FIR from clean
    and from noisy data. Returns a dict of SynthesisResult."""
    ts = dataset_clean["u"].ts
    pd_problem = _regression(dataset_clean, mr, md, 1, m_ff, "free")
    fir_problem = _regression(dataset_clean, mr, md, m_fb, m_ff, "free")
    con_problem = _regression(dataset_clean, mr, md, m_fb, m_ff,
                              "free" if spec.case == "B" else "fixed_zero")
    noisy_problem = _regression(dataset_noisy, mr, md, m_fb, m_ff,
                                "free" if spec.case == "B" else "fixed_zero")
    return {
        "pd": _fit(pd_problem, None, ts),
        "fir_unconstrained": _fit(fir_problem, None, ts),
        "fir_constrained_clean": _fit(con_problem, spec, ts),
        "fir_constrained_noisy": _fit(noisy_problem, spec, ts),
    }


def closed_loop(plant_d: StateSpace, ctrl: TwoDofController) -> StateSpace:
    """Closed loop with u = F(r) - C(y_vel): inputs (r, d), outputs
    (y_pos, y_vel)."""
    css = ctrl.feedback_ss()
    fss = ctrl.prefilter_ss()
    n1, nc, nf = plant_d.n_states, css.n_states, fss.n_states
    ntot = n1 + nc + nf
    ad, bd = plant_d.a, plant_d.b
    b_u, b_d = bd[:, 0:1], bd[:, 1:2]
    c_vel = plant_d.c[1:2, :]
    # u as a linear function of the full state plus the reference feedthrough
    u_row = np.zeros(ntot)
    u_row[:n1] = -css.d[0, 0] * c_vel[0]
    u_row[n1:n1 + nc] = -css.c[0]
    if nf:
        u_row[n1 + nc:] = fss.c[0]
    u_ref = fss.d[0, 0]
    a = np.zeros((ntot, ntot))
    b = np.zeros((ntot, 2))
    a[:n1, :n1] = ad
    a[:n1, :] += b_u @ u_row[None, :]
    b[:n1, 0] = b_u[:, 0] * u_ref
    b[:n1, 1] = b_d[:, 0]
    a[n1:n1 + nc, :n1] = css.b @ c_vel
    a[n1:n1 + nc, n1:n1 + nc] += css.a
    if nf:
        a[n1 + nc:, n1 + nc:] = fss.a
        b[n1 + nc:, 0] = fss.b[:, 0]
    c = np.hstack([plant_d.c, np.zeros((2, nc + nf))])
    return StateSpace(a, b, c, np.zeros((2, 2)), "discrete", plant_d.ts)


@dataclass(frozen=True)
class ClosedLoopReport:
    stable: bool
    spectral_radius: float
    t: np.ndarray
    reference: np.ndarray
    disturbance: np.ndarray
    y_pos: np.ndarray
    y_vel: np.ndarray
    steady_state_error: float
    omega: np.ndarray
    mismatch_tracking_db: np.ndarray
    mismatch_disturbance_db: np.ndarray

    def to_dict(self):
        return {"stable": self.stable,
                "spectral_radius": self.spectral_radius,
                "steady_state_error": self.steady_state_error,
                "max_mismatch_tracking_db":
                    float(np.max(np.abs(self.mismatch_tracking_db))),
                "max_mismatch_disturbance_db":
                    float(np.max(np.abs(self.mismatch_disturbance_db)))}


def evaluate_closed_loop(ctrl: TwoDofController,
                         params: GripperParams = GripperParams(),
                         step_ref: float = 0.02, step_dist: float = 0.005,
                         horizon: float = 10.0,
                         dist_start: float = 5.0) -> ClosedLoopReport:
    """Step-response and frequency-domain evaluation: position reference
    step of `step_ref` at t=0, disturbance step of `step_dist` at
    `dist_start`; Bode mismatch against the reference models over
    [0.5, 10] rad/s."""
    plant_d = discretize_plant(params)
    cl = closed_loop(plant_d, ctrl)
    rho = spectral_radius(cl)
    stable = bool(rho < 1.0)
    ts = params.ts
    n = int(round(horizon / ts))
    t = np.arange(n) * ts
    r = np.full(n, step_ref)
    d = np.where(t >= dist_start, step_dist, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        y = simulate_mimo(cl, np.column_stack([r, d]))
    n_dist = int(round(dist_start / ts))
    tail = y[max(n_dist - n // 10, n_dist // 2):n_dist, 0]
    sse = float(np.mean(step_ref - tail)) if tail.size else float("nan")
    mr, md = reference_models(ts)
    omega = np.linspace(0.5, 10.0, 200)
    theta = omega * ts
    resp = frequency_response(cl, theta=theta)
    z = np.exp(1j * theta)
    track_db = 20.0 * np.log10(np.maximum(np.abs(resp[:, 0, 0]), 1e-300)
                               / np.abs(mr.eval_at(z)))
    dist_db = 20.0 * np.log10(np.maximum(np.abs(resp[:, 0, 1]), 1e-300)
                              / np.abs(md.eval_at(z)))
    return ClosedLoopReport(stable, rho, t, r, d, y[:, 0], y[:, 1], sse,
                            omega, track_db, dist_db)


def scaling_benchmark(dataset, mr, md,
                      m_fb_grid=(25, 50, 100, 200),
                      sampling_grid=(300, 500, 700),
                      repeats: int = 3, h0: float = 0.6, h: float = 0.7):
    """Solve-time scaling study over controller order and constraint
    sampling density, on half-plane (passive-plant) constraint instances.
    Returns a list of row dicts with median solve time (monotonic clock,
    `repeats` runs) and assembly time reported separately."""
    rows = []
    for sampling_m in sampling_grid:
        for m_fb in m_fb_grid:
            t0 = time.perf_counter()
            problem = _regression(dataset, mr, md, m_fb, m_fb, "fixed_zero")
            spec = DissipativitySpec("B", nu1=0.0, rho1=0.0, eps1=1e-3,
                                     eps2=1e-3, sampling_m=sampling_m,
                                     h0=h0, h=h)
            # raw sampled constraints: the inter-sample margin grows with
            # m_fb/M and would empty the region for the largest cells,
            # while the timing study only needs representative problems
            cons = generate_constraints(spec, problem.layout,
                                        epsilon_override=0.0)
            cls_problem = ClsProblem(problem.phi, problem.tau, cons.g,
                                     cons.hvec, cons.e, cons.evec)
            assembly_time = time.perf_counter() - t0
            times = []
            status = "unknown"
            for _ in range(repeats):
                t1 = time.perf_counter()
                sol = solve(cls_problem)
                times.append(time.perf_counter() - t1)
                status = sol.status
            rows.append({"sampling_m": sampling_m, "m_fb": m_fb,
                         "solve_time": float(np.median(times)),
                         "assembly_time": assembly_time,
                         "status": status})
    return rows
