"""Frequency-domain dissipativity regions for iFIR controllers: linear
constraint generation, Nyquist certification, supply-rate and
inter-sample deviation checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .vrft import ParameterLayout, TwoDofController

__all__ = [
    "DissipativitySpec",
    "LinearInequalitySystem",
    "SupplyRateForm",
    "CertificateReport",
    "EmptyBoxError",
    "epsilon_margin",
    "eval_fr_fi",
    "generate_constraints",
    "certify_nyquist",
    "supply_rate_check",
    "sampling_bound_check",
]

CASES = ("A", "B", "C")


class EmptyBoxError(ValueError):
    """The sampling correction closes the constraint box entirely."""

    def __init__(self, width, eps, min_m):
        self.width = width
        self.eps = eps
        self.min_m = min_m
        super().__init__(
            f"box width {width:.6g} <= 2*eps = {2 * eps:.6g}; "
            f"increase the sampling parameter to at least M = {min_m}")


@dataclass(frozen=True)
class DissipativitySpec:
    """Target dissipativity case with plant indices, margins and the
    sampling/decay parameters of the frequency-domain constraints."""

    case: str
    nu1: float = 0.0
    rho1: float = 0.0
    alpha1: float = 0.0
    eps1: float = 1e-3
    eps2: float = 1e-3
    eps3: float = 1e-3
    sampling_m: int = 500
    h0: float = 1.0
    h: float = 0.98

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}")
        if self.sampling_m < 2:
            raise ValueError("sampling parameter M must be >= 2")
        if self.h0 <= 0 or not (0.0 < self.h <= 1.0):
            raise ValueError("decay parameters require h0 > 0, 0 < h <= 1")
        if min(self.eps1, self.eps2, self.eps3) <= 0:
            raise ValueError("margins must be positive")
        if self.case == "A":
            if self.nu1 > 0:
                raise ValueError("Case A requires nu1 <= 0")
            if self.nu1 * self.rho1 >= 0.25:
                raise ValueError("Case A requires nu1*rho1 < 1/4")
            if (-self.nu1 + self.eps1) * (-self.rho1 + self.eps2) > 0.25:
                raise ValueError(
                    "Case A disk radius is imaginary: "
                    "(-nu1+eps1)*(-rho1+eps2) must be <= 1/4")
        elif self.case == "B":
            if self.nu1 < 0:
                raise ValueError("Case B requires nu1 >= 0")
        else:
            if self.alpha1 <= 0:
                raise ValueError("Case C requires alpha1 > 0")
            if 1.0 / self.alpha1 - self.eps3 <= 0:
                raise ValueError("Case C requires 1/alpha1 - eps3 > 0")

    # Controller-side indices implied by Theorem-1-style compatibility.
    @property
    def rho_c(self):
        return -self.nu1 + self.eps1 if self.case == "A" else 0.0

    @property
    def nu_c(self):
        return -self.rho1 + self.eps2

    @property
    def alpha_c(self):
        return 1.0 / self.alpha1 - self.eps3 if self.case == "C" else math.inf

    def disk_geometry(self):
        """(center, radius) of the Nyquist region for Cases A and C."""
        if self.case == "A":
            c = 1.0 / (2.0 * self.rho_c)
            r = c * math.sqrt(1.0 - 4.0 * self.nu_c * self.rho_c)
            return c, r
        if self.case == "C":
            return 0.0, self.alpha_c
        raise ValueError("Case B is a half-plane, not a disk")

    def to_dict(self):
        return {"case": self.case, "nu1": self.nu1, "rho1": self.rho1,
                "alpha1": self.alpha1, "eps1": self.eps1, "eps2": self.eps2,
                "eps3": self.eps3, "sampling_m": self.sampling_m,
                "h0": self.h0, "h": self.h}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class LinearInequalitySystem:
    """Stacked rows G x <= h and E x = e over a parameter layout."""

    g: np.ndarray
    hvec: np.ndarray
    e: np.ndarray
    evec: np.ndarray
    layout: ParameterLayout

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.g, dtype=float))
        hv = np.asarray(self.hvec, dtype=float).ravel()
        e = np.atleast_2d(np.asarray(self.e, dtype=float))
        ev = np.asarray(self.evec, dtype=float).ravel()
        p = self.layout.size
        if g.size == 0:
            g = g.reshape(0, p)
        if e.size == 0:
            e = e.reshape(0, p)
        if g.shape[1] != p or e.shape[1] != p:
            raise ValueError("constraint columns disagree with layout")
        if g.shape[0] != hv.size or e.shape[0] != ev.size:
            raise ValueError("row/rhs mismatch")
        for m in (g, hv, e, ev):
            if not np.all(np.isfinite(m)):
                raise ValueError("non-finite constraint entries")
            m.flags.writeable = False
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "hvec", hv)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "evec", ev)

    @property
    def n_inequalities(self):
        return self.g.shape[0]

    @property
    def n_equalities(self):
        return self.e.shape[0]

    def violation(self, p):
        p = np.asarray(p, dtype=float).ravel()
        ineq = float(np.max(self.g @ p - self.hvec, initial=0.0))
        eq = float(np.max(np.abs(self.e @ p - self.evec), initial=0.0))
        return max(ineq, eq)


@dataclass(frozen=True)
class SupplyRateForm:
    """Symmetric 2x2 quadratic form over (output, input)."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(2, 2)
        if not np.allclose(w, w.T):
            raise ValueError("supply-rate matrix must be symmetric")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @classmethod
    def passivity(cls, nu=0.0, rho=0.0):
        return cls(np.array([[-rho, 0.5], [0.5, -nu]]))

    @classmethod
    def gain(cls, alpha):
        return cls(np.array([[-1.0, 0.0], [0.0, alpha ** 2]]))


def epsilon_margin(m_fb: int, sampling_m: int, h0: float, h: float) -> float:
    """Inter-sample Nyquist deviation bound for decay-constrained FIR taps."""
    if sampling_m < 2:
        raise ValueError("sampling parameter M must be >= 2")
    if h0 <= 0 or not (0.0 < h <= 1.0):
        raise ValueError("require h0 > 0 and 0 < h <= 1")
    if m_fb < 1:
        raise ValueError("m_fb must be >= 1")
    if h == 1.0:
        geo = float(m_fb)
    else:
        geo = (1.0 - h ** m_fb) / (1.0 - h)
    return math.pi * h0 * geo * (m_fb - 1) / (2.0 * sampling_m)


def eval_fr_fi(g_fb, theta):
    """Cosine/sine tap sums: C(e^{jtheta}) = f_r - j*f_i for the FIR part."""
    g = np.asarray(g_fb, dtype=float).ravel()
    th = np.asarray(theta, dtype=float)
    t = np.arange(g.size)
    arg = np.multiply.outer(th, t)
    fr = np.cos(arg) @ g
    fi = np.sin(arg) @ g
    if np.ndim(theta) == 0:
        return float(fr), float(fi)
    return fr, fi


def _decay_rows(layout, h0, h):
    m = layout.m_fb
    sl = layout.fb_slice
    g = np.zeros((2 * m, layout.size))
    idx = np.arange(m)
    g[idx, sl.start + idx] = 1.0
    g[m + idx, sl.start + idx] = -1.0
    env = h0 * h ** idx
    return g, np.r_[env, env]


def _freq_rows(layout, thetas, kind):
    """Rows evaluating f_r or f_i at each theta, as coefficients over layout."""
    m = layout.m_fb
    t = np.arange(m)
    basis = np.cos(np.multiply.outer(thetas, t)) if kind == "r" \
        else np.sin(np.multiply.outer(thetas, t))
    rows = np.zeros((thetas.size, layout.size))
    rows[:, layout.fb_slice] = basis
    return rows


def generate_constraints(spec: DissipativitySpec, layout: ParameterLayout,
                         delta_strict: float = 1e-9,
                         epsilon_override: float | None = None
                         ) -> LinearInequalitySystem:
    """Linear inequality system confining the sampled Nyquist locus to the
    case region, plus the exponential tap-decay envelope.

    Strict inequalities are tightened by ``delta_strict`` so that closed-set
    optimizer output still satisfies the strict original.
    ``epsilon_override`` replaces the computed inter-sample margin; passing
    0.0 yields raw sampled constraints without the between-sample guarantee
    (useful for timing studies where high orders would otherwise force an
    empty region).
    """
    m_fb = layout.m_fb
    msamp = spec.sampling_m
    eps = epsilon_margin(m_fb, msamp, spec.h0, spec.h) \
        if epsilon_override is None else float(epsilon_override)
    thetas = np.arange(msamp + 1) * (math.pi / msamp)
    p = layout.size

    g_rows = []
    h_vals = []
    e_rows = []
    e_vals = []

    def bound_rows(kind, lo, hi):
        rows = _freq_rows(layout, thetas, kind)
        if hi is not None:
            g_rows.append(rows)
            h_vals.append(np.full(thetas.size, hi - eps - delta_strict))
        if lo is not None:
            g_rows.append(-rows)
            h_vals.append(np.full(thetas.size, -(lo + eps + delta_strict)))

    if spec.case == "A":
        c, r = spec.disk_geometry()
        a1 = c - r / math.sqrt(2.0)
        a2 = c + r / math.sqrt(2.0)
        half = r / math.sqrt(2.0)
        _check_box(a2 - a1, eps, m_fb, spec)
        bound_rows("r", a1, a2)
        bound_rows("i", -half, half)
        _append_gamma_equality(layout, e_rows, e_vals)
    elif spec.case == "B":
        bound_rows("r", spec.nu_c, None)
        if layout.has_gamma:
            row = np.zeros(p)
            row[layout.gamma_index] = -1.0
            g_rows.append(row[None, :])
            h_vals.append(np.zeros(1))
    else:
        r = spec.alpha_c / math.sqrt(2.0)
        _check_box(2.0 * r, eps, m_fb, spec)
        bound_rows("r", -r, r)
        bound_rows("i", -r, r)
        _append_gamma_equality(layout, e_rows, e_vals)

    dg, dh = _decay_rows(layout, spec.h0, spec.h)
    g_rows.append(dg)
    h_vals.append(dh)

    g = np.vstack(g_rows)
    hvec = np.concatenate(h_vals)
    e = np.vstack(e_rows) if e_rows else np.zeros((0, p))
    evec = np.asarray(e_vals, dtype=float)
    return LinearInequalitySystem(g, hvec, e, evec, layout)


def _append_gamma_equality(layout, e_rows, e_vals):
    if layout.has_gamma:
        row = np.zeros(layout.size)
        row[layout.gamma_index] = 1.0
        e_rows.append(row[None, :])
        e_vals.append(0.0)


def _check_box(width, eps, m_fb, spec):
    if width > 2.0 * eps:
        return
    # invert eps(M) = K/M for the smallest M that opens the box
    k = math.pi * spec.h0 * (
        float(m_fb) if spec.h == 1.0
        else (1.0 - spec.h ** m_fb) / (1.0 - spec.h)) * (m_fb - 1) / 2.0
    min_m = max(2, math.ceil(2.0 * k / width) + 1) if width > 0 else None
    raise EmptyBoxError(width, eps, min_m)


@dataclass(frozen=True)
class CertificateReport:
    """Dense-grid membership verdict for the controller's Nyquist locus."""

    case: str
    passed: bool
    margin: float
    worst_theta: float
    grid_size: int
    detail: str = ""

    def to_dict(self):
        return {"case": self.case, "passed": self.passed,
                "margin": self.margin, "worst_theta": self.worst_theta,
                "grid_size": self.grid_size, "detail": self.detail}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def certify_nyquist(ctrl: TwoDofController, spec: DissipativitySpec,
                    dense_grid: int | None = None,
                    gamma_tol: float = 1e-9) -> CertificateReport:
    """Check region membership of C(e^{jtheta}) on a dense frequency grid.

    The margin is the worst-case distance to the region boundary (negative
    when the locus leaves the region); pass iff margin >= 0.
    """
    if dense_grid is None:
        dense_grid = 10 * spec.sampling_m
    thetas = np.linspace(0.0, math.pi, dense_grid)
    fr, fi = eval_fr_fi(ctrl.g_fb, thetas)
    cvals = fr - 1j * fi

    if spec.case == "B":
        if ctrl.gamma < 0:
            return CertificateReport(spec.case, False, -math.inf, 0.0,
                                     dense_grid, "negative integrator gain")
        # Re[gamma*Ts/(1-e^{-j theta})] = gamma*Ts/2 for all theta in (0, pi];
        # theta = 0 is the same limit value.
        margins = cvals.real + ctrl.gamma * ctrl.ts / 2.0 - spec.nu_c
    else:
        if abs(ctrl.gamma) > gamma_tol:
            return CertificateReport(
                spec.case, False, -math.inf, 0.0, dense_grid,
                f"case {spec.case} requires gamma = 0")
        c, r = spec.disk_geometry()
        margins = r - np.abs(cvals - c)

    idx = int(np.argmin(margins))
    margin = float(margins[idx])
    return CertificateReport(spec.case, margin >= 0.0, margin,
                             float(thetas[idx]), dense_grid)


def supply_rate_check(inp, out, form: SupplyRateForm, tolerance: float = 0.0):
    """Minimum over horizons of the cumulative supply sum.

    Returns (min_supply, passed); passed iff min_supply >= -tolerance.
    """
    u = np.asarray(inp.samples if hasattr(inp, "samples") else inp, dtype=float)
    y = np.asarray(out.samples if hasattr(out, "samples") else out, dtype=float)
    if u.size != y.size:
        raise ValueError("input/output length mismatch")
    w = form.w
    rate = w[0, 0] * y * y + 2.0 * w[0, 1] * y * u + w[1, 1] * u * u
    cumulative = np.cumsum(rate)
    min_supply = float(np.min(cumulative))
    return min_supply, min_supply >= -tolerance


def sampling_bound_check(g_fb, h0, h, sampling_m, density: int = 50):
    """Max deviation of f_r/f_i from their nearest constrained sample.

    Requires taps inside the decay envelope; the result must not exceed
    :func:`epsilon_margin`.
    """
    g = np.asarray(g_fb, dtype=float).ravel()
    env = h0 * h ** np.arange(g.size)
    if np.any(np.abs(g) > env * (1 + 1e-12)):
        raise ValueError("taps violate the decay envelope")
    dense = np.linspace(0.0, math.pi, density * sampling_m + 1)
    fr_d, fi_d = eval_fr_fi(g, dense)
    samples = np.arange(sampling_m + 1) * (math.pi / sampling_m)
    fr_s, fi_s = eval_fr_fi(g, samples)
    nearest = np.rint(dense * sampling_m / math.pi).astype(int)
    dev = np.maximum(np.abs(fr_d - fr_s[nearest]), np.abs(fi_d - fi_s[nearest]))
    return float(np.max(dev))
