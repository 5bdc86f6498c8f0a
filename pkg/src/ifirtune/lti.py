"""Discrete/continuous LTI primitives: transfer functions, state space,
simulation, ZOH discretization, frequency response and stability checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

CONTINUOUS = "continuous"
DISCRETE = "discrete"

__all__ = [
    "SignalRecord",
    "TransferFunction",
    "StateSpace",
    "simulate",
    "zoh_discretize",
    "frequency_response",
    "spectral_radius",
    "connect_feedback",
    "DomainError",
    "IllPosedLoopError",
]


class DomainError(ValueError):
    """Continuous/discrete mismatch or invalid sample period."""


class IllPosedLoopError(ValueError):
    """Algebraic loop: feedthrough product makes the loop singular."""


def _trim_leading_zeros(c):
    c = np.atleast_1d(np.asarray(c, dtype=float)).ravel()
    nz = np.flatnonzero(np.abs(c) > 0)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:]


@dataclass(frozen=True)
class SignalRecord:
    """Uniformly sampled scalar time series."""

    samples: np.ndarray
    ts: float
    label: str | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).ravel()
        if s.size < 1:
            raise ValueError("signal must contain at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("signal contains non-finite values")
        if self.ts <= 0:
            raise ValueError("ts must be positive")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def time(self):
        return np.arange(len(self)) * self.ts

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,value\n")
            for t, v in zip(self.time, self.samples):
                fh.write(f"{t:.12g},{v:.16g}\n")

    @classmethod
    def from_csv(cls, path, label=None):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t, v = data[:, 0], data[:, 1]
        if len(t) < 2:
            raise ValueError("need at least two rows to infer ts")
        dt = np.diff(t)
        ts = float(np.mean(dt))
        if np.max(np.abs(dt - ts)) > 1e-9 * max(ts, 1.0):
            raise ValueError("time column is not uniformly sampled")
        return cls(v, ts, label=label)


@dataclass(frozen=True)
class TransferFunction:
    """Rational transfer function with coefficients in descending powers
    of s (continuous) or z (discrete)."""

    num: np.ndarray
    den: np.ndarray
    domain: str = DISCRETE
    ts: float | None = None

    def __post_init__(self):
        num = np.atleast_1d(np.asarray(self.num, dtype=float)).ravel()
        den = _trim_leading_zeros(self.den)
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise ValueError("non-finite coefficients")
        if np.all(den == 0) or den[0] == 0:
            raise ValueError("denominator leading coefficient must be nonzero")
        if self.domain not in (CONTINUOUS, DISCRETE):
            raise DomainError(f"unknown domain {self.domain!r}")
        if self.domain == DISCRETE:
            if self.ts is None or self.ts <= 0:
                raise DomainError("discrete systems require ts > 0")
        num.flags.writeable = False
        den.flags.writeable = False
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    # -- basic structure ---------------------------------------------------
    @property
    def order(self):
        return len(self.den) - 1

    @property
    def relative_degree(self):
        num = _trim_leading_zeros(self.num)
        return (len(self.den) - 1) - (len(num) - 1)

    @property
    def is_proper(self):
        return self.relative_degree >= 0

    # -- rational arithmetic (same domain and ts required) -----------------
    def _check_compatible(self, other):
        if self.domain != other.domain:
            raise DomainError("domain mismatch in transfer-function algebra")
        if self.domain == DISCRETE and abs(self.ts - other.ts) > 1e-12:
            raise DomainError("ts mismatch in transfer-function algebra")

    def _wrap(self, num, den):
        return TransferFunction(num, den, self.domain, self.ts)

    def __add__(self, other):
        other = self._coerce(other)
        self._check_compatible(other)
        num = np.polyadd(np.polymul(self.num, other.den),
                         np.polymul(other.num, self.den))
        return self._wrap(num, np.polymul(self.den, other.den))

    def __sub__(self, other):
        other = self._coerce(other)
        return self + (-other)

    def __neg__(self):
        return self._wrap(-self.num, self.den)

    def __mul__(self, other):
        other = self._coerce(other)
        self._check_compatible(other)
        return self._wrap(np.polymul(self.num, other.num),
                          np.polymul(self.den, other.den))

    def __truediv__(self, other):
        other = self._coerce(other)
        self._check_compatible(other)
        num = _trim_leading_zeros(other.num)
        if np.all(num == 0):
            raise ZeroDivisionError("division by the zero transfer function")
        return self._wrap(np.polymul(self.num, other.den),
                          np.polymul(self.den, num))

    def _coerce(self, other):
        if isinstance(other, TransferFunction):
            return other
        return TransferFunction([float(other)], [1.0], self.domain, self.ts)

    def feedback(self, other=None):
        """Negative feedback self / (1 + self*other); other defaults to 1."""
        other = self._coerce(1.0 if other is None else other)
        loop = self * other
        den = np.polyadd(loop.den, loop.num)
        return self._wrap(np.polymul(self.num, other.den), den)

    # -- evaluation --------------------------------------------------------
    def eval_at(self, x):
        x = np.asarray(x, dtype=complex)
        num = np.polyval(self.num, x)
        den = np.polyval(self.den, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / den
        return out

    def to_ss(self):
        """Controllable-canonical realization. Requires a proper system."""
        if not self.is_proper:
            raise ValueError("improper transfer function has no state space")
        den = self.den / self.den[0]
        num = self.num / self.den[0]
        n = len(den) - 1
        num_full = np.zeros(n + 1)
        num_full[n + 1 - len(num):] = num
        d = num_full[0]
        if n == 0:
            a = np.zeros((0, 0))
            b = np.zeros((0, 1))
            c = np.zeros((1, 0))
        else:
            a = np.zeros((n, n))
            a[0, :] = -den[1:]
            a[1:, :-1] = np.eye(n - 1)
            b = np.zeros((n, 1))
            b[0, 0] = 1.0
            c = (num_full[1:] - d * den[1:]).reshape(1, n)
        return StateSpace(a, b, c, np.array([[d]]), self.domain, self.ts)

    def to_dict(self):
        return {
            "num": self.num.tolist(),
            "den": self.den.tolist(),
            "domain": self.domain,
            "ts": self.ts,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["num"], d["den"], d.get("domain", DISCRETE), d.get("ts"))


@dataclass(frozen=True)
class StateSpace:
    """State-space model x+ = Ax + Bu (or dx/dt = Ax + Bu), y = Cx + Du."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    domain: str = DISCRETE
    ts: float | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError("A must be square")
        if b.size == 0:
            b = b.reshape(n, d.shape[1])
        if c.size == 0:
            c = c.reshape(d.shape[0], n)
        if b.shape[0] != n or c.shape[1] != n:
            raise ValueError("B/C dimensions inconsistent with A")
        if d.shape != (c.shape[0], b.shape[1]):
            raise ValueError("D dimensions inconsistent with B/C")
        for m in (a, b, c, d):
            if not np.all(np.isfinite(m)):
                raise ValueError("non-finite matrix entries")
            m.flags.writeable = False
        if self.domain == DISCRETE and (self.ts is None or self.ts <= 0):
            raise DomainError("discrete systems require ts > 0")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def n_states(self):
        return self.a.shape[0]

    @property
    def n_inputs(self):
        return self.b.shape[1]

    @property
    def n_outputs(self):
        return self.c.shape[0]

    def to_tf(self):
        """SISO transfer function via the characteristic polynomial."""
        if self.n_inputs != 1 or self.n_outputs != 1:
            raise ValueError("to_tf requires a SISO system")
        den = np.poly(self.a) if self.n_states else np.ones(1)
        # num(x)/den(x) = C adj(xI-A) B / det(xI-A) + D
        if self.n_states:
            num = np.poly(self.a - self.b @ self.c) + (self.d[0, 0] - 1.0) * den
        else:
            num = np.array([self.d[0, 0]])
        return TransferFunction(num, den, self.domain, self.ts)

    def to_dict(self):
        return {
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "d": self.d.tolist(),
            "domain": self.domain,
            "ts": self.ts,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["a"], dtype=float).reshape(len(d["a"]), -1),
                   d["b"], d["c"], d["d"],
                   d.get("domain", DISCRETE), d.get("ts"))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _simulate_raw(a, b, c, d, u):
    """Discrete recursion from zero initial state; u is (N, m)."""
    n = a.shape[0]
    nt = u.shape[0]
    y = np.empty((nt, c.shape[0]))
    x = np.zeros(n)
    for t in range(nt):
        y[t] = c @ x + d @ u[t]
        x = a @ x + b @ u[t]
    return y


def simulate(sys: StateSpace, inp: SignalRecord) -> SignalRecord:
    """Run a discrete SISO state-space model over a signal (zero initial state)."""
    if sys.domain != DISCRETE:
        raise DomainError("simulate requires a discrete system")
    if abs(sys.ts - inp.ts) > 1e-12 * sys.ts:
        raise DomainError("sample period mismatch between system and input")
    if sys.n_inputs != 1 or sys.n_outputs != 1:
        raise ValueError("simulate requires a SISO system")
    y = _simulate_raw(sys.a, sys.b, sys.c, sys.d, inp.samples[:, None])
    return SignalRecord(y[:, 0], inp.ts, label=inp.label)


def simulate_mimo(sys: StateSpace, u: np.ndarray) -> np.ndarray:
    """Multi-channel variant of :func:`simulate`; u is (N, m), returns (N, p)."""
    if sys.domain != DISCRETE:
        raise DomainError("simulate requires a discrete system")
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != sys.n_inputs:
        raise ValueError("input channel count mismatch")
    return _simulate_raw(sys.a, sys.b, sys.c, sys.d, u)


def zoh_discretize(sys: StateSpace, ts: float) -> StateSpace:
    """Zero-order-hold discretization: Ad = e^{A Ts}, Bd = ∫ e^{Aτ}dτ B."""
    if sys.domain != CONTINUOUS:
        raise DomainError("zoh_discretize requires a continuous system")
    if ts <= 0:
        raise ValueError("ts must be positive")
    n, m = sys.n_states, sys.n_inputs
    if n == 0:
        return StateSpace(sys.a, sys.b, sys.c, sys.d, DISCRETE, ts)
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = sys.a
    blk[:n, n:] = sys.b
    eblk = expm(blk * ts)
    ad = eblk[:n, :n]
    bd = eblk[:n, n:]
    return StateSpace(ad, bd, sys.c, sys.d, DISCRETE, ts)


def frequency_response(sys, theta=None, omega=None):
    """Evaluate a system at e^{jθ} (discrete) or jω (continuous).

    Exactly one of theta/omega must be given, matching the system domain.
    Returns a complex scalar or array.
    """
    if (theta is None) == (omega is None):
        raise ValueError("give exactly one of theta or omega")
    if theta is not None:
        if sys.domain != DISCRETE:
            raise DomainError("theta applies to discrete systems")
        x = np.exp(1j * np.asarray(theta, dtype=float))
    else:
        if sys.domain != CONTINUOUS:
            raise DomainError("omega applies to continuous systems")
        x = 1j * np.asarray(omega, dtype=float)
    if isinstance(sys, TransferFunction):
        return sys.eval_at(x)
    xs = np.atleast_1d(x).ravel()
    out = np.empty((xs.size, sys.n_outputs, sys.n_inputs), dtype=complex)
    eye = np.eye(sys.n_states)
    for i, xi in enumerate(xs):
        try:
            res = np.linalg.solve(xi * eye - sys.a, sys.b)
        except np.linalg.LinAlgError:
            res = np.full((sys.n_states, sys.n_inputs), np.inf + 0j)
        out[i] = sys.c @ res + sys.d
    if sys.n_outputs == 1 and sys.n_inputs == 1:
        flat = out[:, 0, 0]
        return flat[0] if np.ndim(x) == 0 else flat
    return out[0] if np.ndim(x) == 0 else out


def spectral_radius(sys: StateSpace) -> float:
    """Largest eigenvalue magnitude of the (discrete) state matrix."""
    if sys.n_states == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(sys.a))))


def is_stable(sys: StateSpace, tol: float = 0.0) -> bool:
    return spectral_radius(sys) < 1.0 - tol


def connect_feedback(plant: StateSpace, controller: StateSpace,
                     prefilter: StateSpace | None = None,
                     disturbance_plant: StateSpace | None = None) -> StateSpace:
    """Close a SISO loop: u = F(r) - C(y) (2DOF) or u = C(r - y) (1DOF).

    Output is y = P1(u) + P2(d). Returns a system with inputs (r, d) and
    a single output; the d column is zero when no disturbance plant is given.
    """
    blocks = [plant, controller] + ([prefilter] if prefilter is not None else []) \
        + ([disturbance_plant] if disturbance_plant is not None else [])
    for blk in blocks:
        if blk.domain != DISCRETE:
            raise DomainError("connect_feedback requires discrete blocks")
        if abs(blk.ts - plant.ts) > 1e-12 * plant.ts:
            raise DomainError("sample period mismatch between blocks")
        if blk.n_inputs != 1 or blk.n_outputs != 1:
            raise ValueError("connect_feedback requires SISO blocks")

    p, ctl = plant, controller
    d1 = p.d[0, 0]
    dc = ctl.d[0, 0]
    s = 1.0 + dc * d1
    if abs(s) < 1e-12:
        raise IllPosedLoopError("algebraic loop: 1 + D_plant*D_ctrl = 0")

    nq = disturbance_plant.n_states if disturbance_plant is not None else 0
    nf = prefilter.n_states if prefilter is not None else 0
    n1, nc = p.n_states, ctl.n_states
    ntot = n1 + nq + nc + nf
    sl_p = slice(0, n1)
    sl_q = slice(n1, n1 + nq)
    sl_c = slice(n1 + nq, n1 + nq + nc)
    sl_f = slice(n1 + nq + nc, ntot)

    # u = (ur*r + ud*d + ux@x)/s for the row vectors built below
    ux = np.zeros(ntot)
    ux[sl_p] = -dc * p.c[0]
    # 2DOF: u = F r - C(y); 1DOF: u = C(r - y), so the controller-state
    # contribution enters with opposite sign
    ux[sl_c] = ctl.c[0] if prefilter is None else -ctl.c[0]
    ur, ud = 0.0, 0.0
    c2 = d2 = None
    if disturbance_plant is not None:
        q = disturbance_plant
        c2, d2 = q.c[0], q.d[0, 0]
        ux[sl_q] = -dc * c2
        ud += -dc * d2
    if prefilter is not None:
        f = prefilter
        ux[sl_f] = f.c[0]
        ur += f.d[0, 0]
    else:
        ur += dc  # 1DOF: u = C(r - y)
    ux /= s
    ur /= s
    ud /= s

    # y = C1 x1 + D1 u + C2 x2 + D2 d
    yx = np.zeros(ntot)
    yx[sl_p] = p.c[0]
    yx += d1 * ux
    yr = d1 * ur
    yd = d1 * ud
    if disturbance_plant is not None:
        yx[sl_q] += c2
        yd += d2

    a = np.zeros((ntot, ntot))
    b = np.zeros((ntot, 2))
    a[sl_p, sl_p] = p.a
    a[sl_p, :] += p.b[:, 0:1] * ux[None, :]
    b[sl_p, 0] = p.b[:, 0] * ur
    b[sl_p, 1] = p.b[:, 0] * ud
    if disturbance_plant is not None:
        a[sl_q, sl_q] = disturbance_plant.a
        b[sl_q, 1] += disturbance_plant.b[:, 0]
    if prefilter is not None:
        # controller input is y
        a[sl_c, :] = ctl.b[:, 0:1] * yx[None, :]
        b[sl_c, 0] = ctl.b[:, 0] * yr
        b[sl_c, 1] = ctl.b[:, 0] * yd
        a[sl_c, sl_c] += ctl.a
        a[sl_f, sl_f] = prefilter.a
        b[sl_f, 0] += prefilter.b[:, 0]
    else:
        # controller input is r - y
        a[sl_c, :] = -ctl.b[:, 0:1] * yx[None, :]
        b[sl_c, 0] = ctl.b[:, 0] * (1.0 - yr)
        b[sl_c, 1] = -ctl.b[:, 0] * yd
        a[sl_c, sl_c] += ctl.a

    c = yx.reshape(1, -1)
    d = np.array([[yr, yd]])
    return StateSpace(a, b, c, d, DISCRETE, plant.ts)
