"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSpec(StrictModel):
    """Transfer function given by descending-power coefficients; a
    continuous-domain model is ZOH-discretized at the data rate."""

    num: list[float]
    den: list[float]
    domain: Literal["continuous", "discrete"] = "continuous"

    @model_validator(mode="after")
    def _nonempty(self):
        if not self.num or not self.den:
            raise ValueError("num and den must be non-empty")
        return self


class DataSet(StrictModel):
    u: list[float]
    y: list[float]
    ts: float = Field(gt=0)
    d: Optional[list[float]] = None
    y_fb: Optional[list[float]] = None

    @model_validator(mode="after")
    def _lengths(self):
        n = len(self.u)
        for name in ("y", "d", "y_fb"):
            sig = getattr(self, name)
            if sig is not None and len(sig) != n:
                raise ValueError(f"{name} length {len(sig)} != u length {n}")
        if n < 2:
            raise ValueError("need at least 2 samples")
        return self


class ConstraintSpec(StrictModel):
    case: Literal["A", "B", "C"]
    nu1: float = 0.0
    rho1: float = 0.0
    alpha1: float = 0.0
    eps1: float = Field(default=1e-3, gt=0)
    eps2: float = Field(default=1e-3, gt=0)
    eps3: float = Field(default=1e-3, gt=0)
    sampling_m: int = Field(default=500, ge=2)
    h0: float = Field(default=1.0, gt=0)
    h: float = Field(default=0.98, gt=0, lt=1)


class SolverOptions(StrictModel):
    backend: Literal["admm", "active_set"] = "admm"
    tol_feas: float = Field(default=1e-8, gt=0)
    tol_kkt: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=20000, ge=1)


class ControllerModel(StrictModel):
    gamma: float
    g_fb: list[float]
    g_ff: list[float] = Field(default_factory=list)
    ts: float = Field(gt=0)


class CertificateModel(StrictModel):
    case: str
    passed: bool
    margin: float
    worst_theta: float
    grid_size: int
    detail: str = ""


class SynthesisRequest(StrictModel):
    objective: Literal["1dof", "1dof_dist", "2dof", "2dof_filtered"]
    data: DataSet
    mr: ModelSpec
    md: Optional[ModelSpec] = None
    m_fb: int = Field(default=50, ge=1)
    m_ff: int = Field(default=0, ge=0)
    integrator: Literal["free", "fixed_zero"] = "free"
    constraints: Optional[ConstraintSpec] = None
    solver: SolverOptions = Field(default_factory=SolverOptions)
    dense_grid: Optional[int] = Field(default=None, ge=2)


class SynthesisResponse(StrictModel):
    controller: ControllerModel
    objective_value: float
    solver_status: str
    solver_iterations: int
    solver_kkt: dict[str, float]
    certificate: Optional[CertificateModel] = None


class VerifyRequest(StrictModel):
    controller: ControllerModel
    constraints: ConstraintSpec
    dense_grid: Optional[int] = Field(default=None, ge=2)


class GripperParamsModel(StrictModel):
    m1: float = Field(default=0.01, gt=0)
    m2: float = Field(default=0.005, gt=0)
    k1: float = Field(default=1.5, gt=0)
    k2: float = Field(default=1.0, gt=0)
    c1: float = Field(default=0.1, gt=0)
    c2: float = Field(default=0.2, gt=0)
    ts: float = Field(default=0.01, gt=0)


class ScenarioModel(StrictModel):
    step_ref: float = 0.02
    step_dist: float = 0.005
    horizon: float = Field(default=10.0, gt=0)
    dist_start: float = Field(default=5.0, ge=0)


class SimulateRequest(StrictModel):
    plant: GripperParamsModel = Field(default_factory=GripperParamsModel)
    controller: Optional[ControllerModel] = None
    scenario: ScenarioModel = Field(default_factory=ScenarioModel)


class SimulateResponse(StrictModel):
    stable: bool
    spectral_radius: float
    steady_state_error: float
    t: list[float]
    reference: list[float]
    disturbance: list[float]
    y_pos: list[float]
    y_vel: list[float]


class BenchRequest(StrictModel):
    m_fb_grid: list[int] = Field(default_factory=lambda: [25, 50, 100, 200])
    sampling_grid: list[int] = Field(default_factory=lambda: [300, 500, 700])
    repeats: int = Field(default=3, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _grids(self):
        if not self.m_fb_grid or not self.sampling_grid:
            raise ValueError("grids must be non-empty")
        if any(m < 1 for m in self.m_fb_grid) \
                or any(m < 2 for m in self.sampling_grid):
            raise ValueError("grid entries out of range")
        return self


class BenchRow(StrictModel):
    sampling_m: int
    m_fb: int
    solve_time: float
    assembly_time: float
    status: str


class BenchResponse(StrictModel):
    rows: list[BenchRow]


class GripperDemoRequest(StrictModel):
    seed: int = 0
    noise_seed: int = 1
    snr_pos_db: float = 28.1
    snr_vel_db: float = 30.6
    sampling_m: int = Field(default=2000, ge=2)
    h0: float = Field(default=0.6, gt=0)
    h: float = Field(default=0.7, gt=0, lt=1)


class BaselineReport(StrictModel):
    controller: ControllerModel
    objective_value: float
    solver_status: str
    stable: bool
    spectral_radius: float
    steady_state_error: float
    max_mismatch_tracking_db: float
    max_mismatch_disturbance_db: float


class GripperDemoResponse(StrictModel):
    baselines: dict[str, BaselineReport]
    certificate: CertificateModel
    published_pd_spectral_radius: float
    published_pd_stable: bool
    nu1: float
    rho1: float
