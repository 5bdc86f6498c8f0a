"""Virtual-reference signal construction and least-squares regression
assembly for 1DOF/2DOF iFIR controller tuning."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .lti import (DISCRETE, SignalRecord, StateSpace, TransferFunction,
                  frequency_response)

__all__ = [
    "TwoDofController",
    "ParameterLayout",
    "RegressionProblem",
    "apply_filter",
    "apply_inverse",
    "virtual_signals_1dof",
    "virtual_signals_2dof",
    "assemble_regression",
    "model_matching_cost",
    "ideal_controllers_2dof",
]

OBJECTIVES = ("1dof", "1dof_dist", "2dof", "2dof_filtered")


@dataclass(frozen=True)
class TwoDofController:
    """Integrator gain + feedback FIR taps + optional feedforward FIR taps."""

    gamma: float
    g_fb: np.ndarray
    g_ff: np.ndarray
    ts: float

    def __post_init__(self):
        g_fb = np.atleast_1d(np.asarray(self.g_fb, dtype=float)).ravel()
        g_ff = np.asarray(self.g_ff, dtype=float).ravel()
        if g_fb.size < 1:
            raise ValueError("need at least one feedback tap")
        if not (np.all(np.isfinite(g_fb)) and np.all(np.isfinite(g_ff))
                and np.isfinite(self.gamma)):
            raise ValueError("non-finite controller coefficients")
        if self.ts <= 0:
            raise ValueError("ts must be positive")
        g_fb.flags.writeable = False
        g_ff.flags.writeable = False
        object.__setattr__(self, "g_fb", g_fb)
        object.__setattr__(self, "g_ff", g_ff)

    @property
    def m_fb(self):
        return self.g_fb.size

    @property
    def m_ff(self):
        return self.g_ff.size

    def feedback_tf(self) -> TransferFunction:
        """C(z) = gamma*Ts/(1-z^-1) + sum_t g_fb(t) z^-t."""
        m = self.m_fb
        fir = TransferFunction(self.g_fb, np.r_[1.0, np.zeros(m - 1)],
                               DISCRETE, self.ts)
        integ = TransferFunction([self.gamma * self.ts, 0.0], [1.0, -1.0],
                                 DISCRETE, self.ts)
        return fir + integ

    def feedback_ss(self) -> StateSpace:
        """Shift-register realization of the FIR part plus an integrator
        state (omitted when gamma is exactly zero)."""
        m = self.m_fb
        nf = m - 1
        ni = 0 if self.gamma == 0.0 else 1
        n = nf + ni
        a = np.zeros((n, n))
        b = np.zeros((n, 1))
        c = np.zeros((1, n))
        if nf:
            a[:nf - 1, 1:nf] = np.eye(nf - 1)
            b[nf - 1, 0] = 1.0
            c[0, :nf] = self.g_fb[::-1][:-1]
        if ni:
            # integrator state: x+ = x + w, y_i = gamma*Ts*(x + w)
            a[n - 1, n - 1] = 1.0
            b[n - 1, 0] += 1.0
            c[0, n - 1] = self.gamma * self.ts
        d = np.array([[self.g_fb[0] + self.gamma * self.ts]])
        return StateSpace(a, b, c, d, DISCRETE, self.ts)

    def prefilter_tf(self) -> TransferFunction:
        if self.m_ff == 0:
            return TransferFunction([0.0], [1.0], DISCRETE, self.ts)
        return TransferFunction(self.g_ff, np.r_[1.0, np.zeros(self.m_ff - 1)],
                                DISCRETE, self.ts)

    def prefilter_ss(self) -> StateSpace:
        return self.prefilter_tf().to_ss()

    def to_dict(self):
        return {"gamma": self.gamma, "g_fb": self.g_fb.tolist(),
                "g_ff": self.g_ff.tolist(), "ts": self.ts}

    @classmethod
    def from_dict(cls, d):
        return cls(d["gamma"], d["g_fb"], d.get("g_ff", []), d["ts"])


@dataclass(frozen=True)
class ParameterLayout:
    """Column layout of the stacked parameter vector [gamma? | g_fb | g_ff]."""

    has_gamma: bool
    m_fb: int
    m_ff: int = 0

    @property
    def size(self):
        return int(self.has_gamma) + self.m_fb + self.m_ff

    @property
    def gamma_index(self):
        return 0 if self.has_gamma else None

    @property
    def fb_slice(self):
        off = int(self.has_gamma)
        return slice(off, off + self.m_fb)

    @property
    def ff_slice(self):
        off = int(self.has_gamma) + self.m_fb
        return slice(off, off + self.m_ff)

    def split(self, p, ts):
        p = np.asarray(p, dtype=float).ravel()
        gamma = float(p[0]) if self.has_gamma else 0.0
        return TwoDofController(gamma, p[self.fb_slice], p[self.ff_slice], ts)

    def to_dict(self):
        return {"has_gamma": self.has_gamma, "m_fb": self.m_fb, "m_ff": self.m_ff}

    @classmethod
    def from_dict(cls, d):
        return cls(d["has_gamma"], d["m_fb"], d.get("m_ff", 0))


@dataclass(frozen=True)
class RegressionProblem:
    """Dense design matrix / target pair with its parameter layout."""

    phi: np.ndarray
    tau: np.ndarray
    layout: ParameterLayout
    ts: float

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        tau = np.asarray(self.tau, dtype=float).ravel()
        if phi.shape[0] != tau.size:
            raise ValueError("phi/tau row mismatch")
        if phi.shape[1] != self.layout.size:
            raise ValueError("phi column count disagrees with layout")
        phi.flags.writeable = False
        tau.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "tau", tau)

    @property
    def n_rows(self):
        return self.tau.size

    def residual(self, p):
        return self.tau - self.phi @ np.asarray(p, dtype=float).ravel()

    def solve_unconstrained(self):
        sol, *_ = np.linalg.lstsq(self.phi, self.tau, rcond=None)
        return sol

    def export(self, json_path, csv_path):
        """Layout descriptor as JSON, [phi | tau] as CSV for external solvers."""
        with open(json_path, "w") as fh:
            json.dump({"layout": self.layout.to_dict(), "ts": self.ts,
                       "n_rows": self.n_rows, "csv_columns": "phi then tau"},
                      fh, indent=2)
        np.savetxt(csv_path, np.column_stack([self.phi, self.tau]),
                   delimiter=",")


def _z_inverse_coeffs(tf: TransferFunction):
    """(b, a) polynomials in z^-1 for a proper discrete transfer function."""
    if tf.domain != DISCRETE:
        raise ValueError("discrete transfer function required")
    if not tf.is_proper:
        raise ValueError("improper transfer function cannot be filtered causally")
    n = len(tf.den) - 1
    b = np.zeros(n + 1)
    b[n + 1 - len(tf.num):] = tf.num
    return b, np.asarray(tf.den, dtype=float)


def apply_filter(tf: TransferFunction, x) -> np.ndarray:
    """Filter a sample array through a proper discrete transfer function."""
    b, a = _z_inverse_coeffs(tf)
    return lfilter(b, a, np.asarray(x, dtype=float))


def apply_inverse(tf: TransferFunction, x) -> np.ndarray:
    """Apply the exact inverse of ``tf``.

    A relative degree k is realized as a k-step advance: the result is k
    samples shorter than the input (the last k samples are unusable).
    """
    num = np.asarray(tf.num, dtype=float)
    num = num[np.flatnonzero(num)[0]:] if np.any(num) else num
    if num.size == 0 or not np.any(num):
        raise ValueError("zero transfer function is not invertible")
    k = tf.relative_degree
    if k < 0:
        raise ValueError("improper transfer function")
    # z^-k * tf^-1 = den / (num * z^k) is proper and causal
    shifted = TransferFunction(tf.den, np.r_[num, np.zeros(k)],
                               DISCRETE, tf.ts)
    out = apply_filter(shifted, x)
    return out[k:] if k else out


def virtual_signals_1dof(y: SignalRecord, mr: TransferFunction):
    """Virtual reference r = Mr^-1(y) and virtual error e = r - y."""
    r = apply_inverse(mr, y.samples)
    n = r.size
    e = r - y.samples[:n]
    return (SignalRecord(r, y.ts, label="virtual_reference"),
            SignalRecord(e, y.ts, label="virtual_error"))


def virtual_signals_2dof(y: SignalRecord, d: SignalRecord,
                         mr: TransferFunction, md: TransferFunction):
    """Virtual reference rv = Mr^-1(y - Md(d)) and virtual error e = rv - y."""
    if len(y) != len(d):
        raise ValueError("y and d must be aligned")
    yd = y.samples - apply_filter(md, d.samples)
    rv = apply_inverse(mr, yd)
    n = rv.size
    e = rv - y.samples[:n]
    return (SignalRecord(rv, y.ts, label="virtual_reference"),
            SignalRecord(e, y.ts, label="virtual_error"))


def _lag_matrix(x, m):
    """Columns x(t), x(t-1), ..., x(t-m+1) with zero-padded history."""
    n = x.size
    cols = np.zeros((n, m))
    for k in range(m):
        cols[k:, k] = x[:n - k]
    return cols


def _integrator_column(x, ts):
    """Response of gamma=1 integrator Ts*z/(z-1): Ts * cumulative sum."""
    return ts * np.cumsum(x)


def assemble_regression(objective, data, models, sizes,
                        integrator="free", warmup=None) -> RegressionProblem:
    """Build the dense least-squares problem for a VRFT objective.

    objective: one of '1dof', '1dof_dist', '2dof', '2dof_filtered'.
    data: dict with SignalRecords 'u', 'y' and, for disturbance variants,
      'd'; an optional 'y_fb' supplies a separate feedback-channel
      measurement (defaults to 'y').
    models: dict with discrete TransferFunctions 'mr' and optionally 'md'.
    sizes: dict with 'm_fb' and optionally 'm_ff'.
    integrator: 'free' adds a gamma column, 'fixed_zero' omits it.

    The residual identity tau - phi @ p equals the bracketed time-domain
    residual of the chosen objective for every parameter vector p.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    if integrator not in ("free", "fixed_zero"):
        raise ValueError("integrator must be 'free' or 'fixed_zero'")
    u, y = data["u"], data["y"]
    y_fb = data.get("y_fb", y)
    ts = u.ts
    m_fb = int(sizes["m_fb"])
    m_ff = int(sizes.get("m_ff", 0))
    if m_fb < 1:
        raise ValueError("m_fb must be >= 1")
    mr = models["mr"]
    md = models.get("md")
    needs_dist = objective in ("1dof_dist", "2dof", "2dof_filtered")
    if needs_dist and (md is None or "d" not in data):
        raise ValueError(f"objective {objective!r} requires d and md")
    d = data.get("d")
    for sig in filter(None, (y, d, data.get("y_fb"))):
        if len(sig) != len(u):
            raise ValueError("misaligned signals")

    has_gamma = integrator == "free"
    if objective == "1dof":
        _, e = virtual_signals_1dof(y, mr)
        n = len(e)
        tau = u.samples[:n]
        fb_src = e.samples
        ff_src = None
    elif objective == "1dof_dist":
        _, e = virtual_signals_2dof(y, d, mr, md)
        n = len(e)
        tau = u.samples[:n]
        fb_src = e.samples
        ff_src = None
    elif objective == "2dof":
        rv, _ = virtual_signals_2dof(y, d, mr, md)
        n = len(rv)
        tau = u.samples[:n]
        ff_src = rv.samples
        fb_src = -y_fb.samples[:n]
    else:  # 2dof_filtered
        n = len(u)
        tau = apply_filter(mr, u.samples)
        ff_src = y.samples - apply_filter(md, d.samples)
        fb_src = -apply_filter(mr, y_fb.samples)

    if objective in ("1dof", "1dof_dist"):
        m_ff = 0
    layout = ParameterLayout(has_gamma, m_fb, m_ff)

    cols = []
    if has_gamma:
        cols.append(_integrator_column(fb_src, ts)[:, None])
    cols.append(_lag_matrix(fb_src, m_fb))
    if m_ff:
        if ff_src is None:
            raise ValueError("feedforward taps need a 2DOF objective")
        cols.append(_lag_matrix(ff_src[:n], m_ff))
    phi = np.hstack(cols)

    if warmup is None:
        filt_order = max(len(mr.den) - 1,
                         (len(md.den) - 1) if md is not None else 0)
        warmup = max(m_fb, m_ff, filt_order)
    if n - warmup <= layout.size:
        raise ValueError("insufficient data after warm-up")
    return RegressionProblem(phi[warmup:], tau[warmup:], layout, ts)


def _grid_two_norm_sq(tf_err: TransferFunction, grid_size):
    theta = np.linspace(0.0, np.pi, grid_size)
    vals = tf_err.eval_at(np.exp(1j * theta))
    if not np.all(np.isfinite(vals)):
        raise ValueError("pole on the evaluation grid: cost is unbounded")
    return float(np.mean(np.abs(vals) ** 2))


def model_matching_cost(p1: TransferFunction, p2: TransferFunction,
                        ctrl: TwoDofController, mr: TransferFunction,
                        md: TransferFunction, grid_size: int = 4096):
    """Grid-approximated squared 2-norms of the two model-matching errors:
    Mr - P1*F/(1+P1*C) and Md - P2/(1+P1*C)."""
    c = ctrl.feedback_tf()
    f = ctrl.prefilter_tf()
    loop = p1 * c
    one = TransferFunction([1.0], [1.0], DISCRETE, ctrl.ts)
    sens_den = one + loop
    t_ry = (p1 * f) / sens_den
    t_dy = p2 / sens_den
    cost_r = _grid_two_norm_sq(mr - t_ry, grid_size)
    cost_d = _grid_two_norm_sq(md - t_dy, grid_size)
    return cost_r, cost_d


def ideal_controllers_2dof(p1: TransferFunction, p2: TransferFunction,
                           mr: TransferFunction, md: TransferFunction):
    """Perfect-matching controllers Mr/(P1(1-Mr)) and (P2-Md)/(Md*P1)."""
    one = TransferFunction([1.0], [1.0], p1.domain, p1.ts)
    cstar_r = mr / (p1 * (one - mr))
    cstar_d = (p2 - md) / (md * p1)
    return cstar_r, cstar_d
