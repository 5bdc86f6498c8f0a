"""Dense least-squares with linear inequality/equality constraints.

Two backends share one problem/solution contract: an over-relaxed ADMM
splitting with active-set polishing (default, scales to thousands of
rows) and a primal active-set method (exact on small problems).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve
from scipy.optimize import minimize

__all__ = [
    "ClsProblem",
    "ClsSolution",
    "InfeasibleError",
    "solve",
    "feasibility_check",
    "eliminate_equalities",
]


class InfeasibleError(RuntimeError):
    """Constraint set is empty; carries a least-violation certificate."""

    def __init__(self, violation, witness):
        self.violation = violation
        self.witness = witness
        super().__init__(
            f"infeasible constraints: least achievable violation "
            f"{violation:.6g}")


@dataclass(frozen=True)
class ClsProblem:
    """min ||A x - b||^2  s.t.  G x <= h,  E x = e."""

    a: np.ndarray
    b: np.ndarray
    g: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    hvec: np.ndarray = field(default_factory=lambda: np.zeros(0))
    e: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    evec: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        p = a.shape[1]
        g = np.asarray(self.g, dtype=float).reshape(-1, p) if np.size(self.g) \
            else np.zeros((0, p))
        hv = np.asarray(self.hvec, dtype=float).ravel()
        e = np.asarray(self.e, dtype=float).reshape(-1, p) if np.size(self.e) \
            else np.zeros((0, p))
        ev = np.asarray(self.evec, dtype=float).ravel()
        if a.shape[0] != b.size:
            raise ValueError("A/b row mismatch")
        if g.shape[0] != hv.size or e.shape[0] != ev.size:
            raise ValueError("constraint row/rhs mismatch")
        if not np.all(np.isfinite(a)):
            raise ValueError("A must be finite")
        for m in (a, b, g, hv, e, ev):
            np.asarray(m).flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "hvec", hv)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "evec", ev)

    @property
    def n_params(self):
        return self.a.shape[1]

    def objective(self, x):
        r = self.a @ np.asarray(x, dtype=float) - self.b
        return float(r @ r)

    def kkt_residuals(self, x, lam, mu, reg=0.0):
        """Stationarity, primal/dual feasibility and complementarity.

        `reg` is the Tikhonov shift on the normal operator actually used by
        the solver (reported in solution diagnostics); stationarity is
        measured against the shifted operator and scaled by the magnitude
        of its constituent terms so the residual is meaningful across
        problem scales.
        """
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        mu = np.asarray(mu, dtype=float)
        t_q = 2.0 * self.a.T @ (self.a @ x) + reg * x
        t_b = -2.0 * self.a.T @ self.b
        grad = t_q + t_b
        terms = [t_q, t_b]
        if self.g.size:
            gl = self.g.T @ lam
            grad = grad + gl
            terms.append(gl)
        if self.e.size:
            em = self.e.T @ mu
            grad = grad + em
            terms.append(em)
        scale = max(1.0, *(float(np.max(np.abs(t), initial=0.0))
                           for t in terms))
        slack = self.g @ x - self.hvec if self.g.size else np.zeros(0)
        comp = np.abs(lam * slack) / np.maximum.reduce(
            [np.ones_like(slack), np.abs(lam), np.abs(slack)]) \
            if slack.size else np.zeros(0)
        return {
            "stationarity": float(np.max(np.abs(grad), initial=0.0)) / scale,
            "primal_ineq": float(np.max(slack, initial=0.0)),
            "primal_eq": float(np.max(np.abs(self.e @ x - self.evec),
                                      initial=0.0)),
            "dual": float(max(0.0, -np.min(lam, initial=0.0))),
            "complementarity": float(np.max(comp, initial=0.0)),
        }

    def export(self, json_path, csv_path):
        with open(json_path, "w") as fh:
            json.dump({"n_params": self.n_params,
                       "rows": {"a": self.a.shape[0], "g": self.g.shape[0],
                                "e": self.e.shape[0]},
                       "csv_blocks": "A|b then G|h then E|e"}, fh, indent=2)
        blocks = [np.column_stack([self.a, self.b])]
        if self.g.size:
            blocks.append(np.column_stack([self.g, self.hvec]))
        if self.e.size:
            blocks.append(np.column_stack([self.e, self.evec]))
        np.savetxt(csv_path, np.vstack(blocks), delimiter=",")


@dataclass(frozen=True)
class ClsSolution:
    x: np.ndarray
    objective: float
    kkt: dict
    duals_ineq: np.ndarray
    duals_eq: np.ndarray
    iterations: int
    wall_time: float
    status: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"x": np.asarray(self.x).tolist(), "objective": self.objective,
                "kkt": self.kkt, "iterations": self.iterations,
                "wall_time": self.wall_time, "status": self.status,
                "diagnostics": self.diagnostics}


def _violation_and_grad(x, g, hvec, e, evec):
    vi = np.maximum(g @ x - hvec, 0.0) if g.size else np.zeros(0)
    ve = e @ x - evec if e.size else np.zeros(0)
    val = 0.5 * (vi @ vi + ve @ ve)
    grad = np.zeros(x.size)
    if g.size:
        grad += g.T @ vi
    if e.size:
        grad += e.T @ ve
    return val, grad


def feasibility_check(problem: ClsProblem, tol_feas: float = 1e-8):
    """Search for a point satisfying all constraints.

    Returns (feasible, witness_or_none, certificate) where the certificate
    is the least-squares violation achieved by the search.
    """
    p = problem.n_params
    if not (problem.g.size or problem.e.size):
        return True, np.zeros(p), 0.0
    res = minimize(_violation_and_grad, np.zeros(p), jac=True,
                   args=(problem.g, problem.hvec, problem.e, problem.evec),
                   method="L-BFGS-B",
                   options={"maxiter": 2000, "ftol": 1e-18, "gtol": 1e-14})
    x = res.x
    viol = max(
        float(np.max(problem.g @ x - problem.hvec, initial=0.0)),
        float(np.max(np.abs(problem.e @ x - problem.evec), initial=0.0)))
    if viol <= tol_feas:
        return True, x, viol
    return False, None, viol


def eliminate_equalities(problem: ClsProblem):
    """Substitute out equality constraints via a particular solution plus
    nullspace basis: x = x0 + Z y. Returns (reduced problem, x0, Z)."""
    e, ev = problem.e, problem.evec
    if not e.size:
        return problem, np.zeros(problem.n_params), np.eye(problem.n_params)
    x0, *_ = np.linalg.lstsq(e, ev, rcond=None)
    if np.max(np.abs(e @ x0 - ev), initial=0.0) > 1e-9:
        raise InfeasibleError(float(np.max(np.abs(e @ x0 - ev))), None)
    _, s, vt = np.linalg.svd(e)
    rank = int(np.sum(s > max(e.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)))
    z = vt[rank:].T
    red = ClsProblem(problem.a @ z, problem.b - problem.a @ x0,
                     problem.g @ z if problem.g.size else np.zeros((0, z.shape[1])),
                     problem.hvec - (problem.g @ x0 if problem.g.size else 0.0))
    return red, x0, z


def _normal_operator(a, b):
    """Return (Q, c, reg) for the quadratic form 1/2 x'Qx + c'x, with a
    Tikhonov shift reg applied when the normal operator is rank deficient."""
    gram = a.T @ a
    ev = np.linalg.eigvalsh(gram)
    lam_max = float(ev[-1]) if ev.size else 0.0
    reg = 0.0
    if ev.size and (lam_max <= 0.0 or float(ev[0]) < 1e-20 * lam_max):
        reg = 1e-10 * lam_max
    q = 2.0 * gram + reg * np.eye(a.shape[1])
    c = -2.0 * (a.T @ b)
    return q, c, reg


def _kkt_solve(q, c, arows, brhs):
    """Equality-constrained QP min 1/2 x'Qx + c'x s.t. arows x = brhs.

    Solved through a statically regularized factorization plus iterative
    refinement against the unregularized system, which keeps the solve
    backward stable even for near-singular KKT matrices."""
    p = q.shape[0]
    m = arows.shape[0]
    kkt = np.zeros((p + m, p + m))
    kkt[:p, :p] = q
    kkt[:p, p:] = arows.T
    kkt[p:, :p] = arows
    rhs = np.concatenate([-c, brhs])
    d1 = 1e-10 * max(1.0, float(np.max(np.abs(q), initial=0.0)))
    d2 = 1e-10 * max(1.0, float(np.max(np.abs(arows), initial=0.0)))
    kreg = kkt.copy()
    kreg[:p, :p] += d1 * np.eye(p)
    kreg[p:, p:] -= d2 * np.eye(m)
    try:
        lu = lu_factor(kreg)
        sol = np.zeros(p + m)
        for _ in range(5):
            sol = sol + lu_solve(lu, rhs - kkt @ sol)
    except (np.linalg.LinAlgError, ValueError):
        sol = None
    if sol is None or not np.all(np.isfinite(sol)):
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:p], sol[p:]


def _polish(problem, q, c, x, lam, tol):
    """Resolve on the identified active set; iterate a few times to clean
    up wrongly-signed duals and newly violated rows."""
    g, hvec, e, evec = problem.g, problem.hvec, problem.e, problem.evec
    n_ineq = g.shape[0]
    slack = g @ x - hvec if n_ineq else np.zeros(0)
    active = set(np.flatnonzero(
        (slack > -np.maximum(1e-6, 1e3 * tol)) | (lam > tol)).tolist())
    if len(active) > 3 * x.size:
        # far more candidates than degrees of freedom: identification has
        # not settled yet, and a resolve would be both costly and wrong
        return None
    best = None
    for _ in range(80):
        idx = np.array(sorted(active), dtype=int)
        arows = np.vstack([e, g[idx]]) if e.size or idx.size else np.zeros((0, x.size))
        brhs = np.concatenate([evec, hvec[idx]])
        xs, duals = _kkt_solve(q, c, arows, brhs)
        mu = duals[:e.shape[0]]
        lam_act = duals[e.shape[0]:]
        # drop every wrongly signed active-set dual at once
        neg = np.flatnonzero(lam_act < -tol)
        if neg.size:
            for k in neg:
                active.discard(int(idx[k]))
            continue
        slack_s = g @ xs - hvec if n_ineq else np.zeros(0)
        viol = [int(v) for v in np.flatnonzero(slack_s > tol)
                if int(v) not in active]
        if viol:
            # admit the most violated row first
            active.add(max(viol, key=lambda v: slack_s[v]))
            continue
        lam_full = np.zeros(n_ineq)
        lam_full[idx] = np.maximum(lam_act, 0.0)
        best = (xs, lam_full, mu)
        break
    return best


def _equilibrate(a, cmat, n_sweeps=3):
    """Ruiz-style column scaling over the stacked [A; C] operator plus row
    scaling of the constraint block. Returns (dcol, erow)."""
    p = a.shape[1]
    dcol = np.ones(p)
    erow = np.ones(cmat.shape[0])
    for _ in range(n_sweeps):
        sa = a * dcol
        sc = (cmat * dcol) * erow[:, None]
        colnorm = np.sqrt(np.maximum(
            np.max(np.abs(sa), axis=0, initial=0.0),
            np.max(np.abs(sc), axis=0, initial=0.0)))
        colnorm[colnorm == 0] = 1.0
        dcol /= colnorm
        if cmat.size:
            rownorm = np.sqrt(np.max(np.abs(cmat * dcol) * erow[:, None],
                                     axis=1, initial=0.0))
            rownorm[rownorm == 0] = 1.0
            erow /= rownorm
    return dcol, erow


def _qp_ipm(q, c, g, h, e, ev, max_iter=400, tol=5e-10, d_split=1e5):
    """Predictor-corrector interior-point refinement for
    min 1/2 x'Qx + c'x s.t. Gx <= h, Ex = ev.

    Barrier rows with a large weight are kept as an augmented block rather
    than folded into the condensed operator, so the quadratic term is not
    lost to roundoff on near-degenerate active sets. Returns
    (x, lam, mu, iterations)."""
    p = q.shape[0]
    g = np.asarray(g, float).reshape(-1, p)
    h = np.asarray(h, float).ravel()
    e = np.asarray(e, float).reshape(-1, p)
    ev = np.asarray(ev, float).ravel()
    rn = np.linalg.norm(g, axis=1) if g.size else np.zeros(0)
    keep = np.flatnonzero(rn > 1e-12 * max(1.0, rn.max() if rn.size else 0.0))
    gk, hk, rgk = g[keep], h[keep], rn[keep]
    m = gk.shape[0]
    me = e.shape[0]
    if m == 0 and me == 0:
        x = np.linalg.lstsq(q, -c, rcond=None)[0]
        return x, np.zeros(g.shape[0]), np.zeros(0), 0
    gs = gk / rgk[:, None] if m else gk
    hs = hk / rgk if m else hk
    re = np.maximum(np.linalg.norm(e, axis=1), 1e-12) if me else np.zeros(0)
    es = e / re[:, None] if me else e
    evs = ev / re if me else ev
    so = max(1.0, float(np.max(np.abs(q))), float(np.max(np.abs(c))))
    qs = q / so
    cs = c / so

    x = cho_solve(cho_factor(qs + 1e-12 * np.eye(p)), -cs)
    s = np.maximum(hs - gs @ x, 1.0) if m else np.zeros(0)
    lam = np.ones(m)
    mu = np.zeros(me)
    it = 0
    best = None
    best_it = 0
    for it in range(1, max_iter + 1):
        r_dual = qs @ x + cs + (gs.T @ lam if m else 0.0) \
            + (es.T @ mu if me else 0.0)
        r_prim = gs @ x + s - hs if m else np.zeros(0)
        r_eq = es @ x - evs if me else np.zeros(0)
        gap = float(s @ lam) / max(m, 1)
        if m:
            # complementarity in original units, matching the relative
            # per-row metric used to judge the returned point
            lam_u = lam * (so / rgk)
            s_u = s * rgk
            comp = float(np.max(lam_u * s_u
                                / np.maximum.reduce([np.ones(m), lam_u,
                                                     s_u])))
        else:
            comp = 0.0
        score = max(float(np.max(np.abs(r_dual), initial=0.0)),
                    float(np.max(np.abs(r_prim), initial=0.0)),
                    float(np.max(np.abs(r_eq), initial=0.0)), comp)
        if best is None or score < best[0]:
            best = (score, x.copy(), lam.copy(), mu.copy())
            best_it = it
        if score < tol:
            break
        # roundoff floors can leave the residuals limit-cycling above the
        # tolerance; once progress stops, keep the best iterate seen
        if it - best_it > 30:
            break
        d = np.clip(lam / s, 1e-16, 1e13) if m else np.zeros(0)
        big = np.flatnonzero(d > d_split)
        sml = np.flatnonzero(d <= d_split)
        gb, gsm = gs[big], gs[sml]
        mat = qs + ((gsm.T * d[sml]) @ gsm if sml.size else 0.0)
        nb = big.size
        nk = p + nb + me
        kkt = np.zeros((nk, nk))
        kkt[:p, :p] = mat
        if nb:
            kkt[:p, p:p + nb] = gb.T
            kkt[p:p + nb, :p] = gb
            kkt[p:p + nb, p:p + nb] = -np.diag(s[big] / lam[big])
        if me:
            kkt[:p, p + nb:] = es.T
            kkt[p + nb:, :p] = es
        delta = 1e-10 * max(1.0, float(np.max(np.abs(mat))))
        kreg = kkt.copy()
        kreg[:p, :p] += delta * np.eye(p)
        kreg[p:, p:] -= delta * np.eye(nb + me)
        try:
            lu = lu_factor(kreg)
        except (np.linalg.LinAlgError, ValueError):
            break

        def newton_step(rc):
            top = -r_dual - (gsm.T @ ((lam[sml] * r_prim[sml] - rc[sml])
                                      / s[sml]) if sml.size else 0.0)
            mid = -r_prim[big] + rc[big] / lam[big] if nb else np.zeros(0)
            rhs = np.concatenate([top, mid, -r_eq])
            sol = np.zeros(nk)
            for _ in range(5):
                sol = sol + lu_solve(lu, rhs - kkt @ sol)
            dx = sol[:p]
            dmu = sol[p + nb:]
            ds = np.empty(m)
            dl = np.empty(m)
            if sml.size:
                ds[sml] = -(r_prim[sml] + gsm @ dx)
                dl[sml] = (-rc[sml] - lam[sml] * ds[sml]) / s[sml]
            if nb:
                dl[big] = sol[p:p + nb]
                ds[big] = (-rc[big] - s[big] * dl[big]) / lam[big]
            return dx, ds, dl, dmu

        def max_step(v, dv):
            neg = dv < 0
            return min(1.0, float(np.min(-v[neg] / dv[neg]))
                       if np.any(neg) else 1.0)

        dx, ds, dl, dmu = newton_step(lam * s)
        a_aff = min(max_step(s, ds), max_step(lam, dl))
        gap_aff = float((s + a_aff * ds) @ (lam + a_aff * dl)) / max(m, 1)
        sigma = float(np.clip((max(gap_aff, 0.0) / max(gap, 1e-300)) ** 3,
                              1e-10, 1.0))
        dx, ds, dl, dmu = newton_step(lam * s + ds * dl - sigma * gap)
        a = 0.9995 * min(max_step(s, ds), max_step(lam, dl))
        if not np.all(np.isfinite(dx)) or a <= 0.0:
            break
        x = x + a * dx
        mu = mu + a * dmu
        if m:
            s = np.maximum(s + a * ds, 1e-300)
            lam = np.maximum(lam + a * dl, 1e-300)
    if best is not None:
        _, x, lam, mu = best
    lam_out = np.zeros(g.shape[0])
    if m:
        lam_out[keep] = lam / rgk * so
    mu_out = mu / re * so if me else mu
    return x, lam_out, mu_out, it


def _project_feasible(problem, x, tol_feas):
    """Minimum-norm correction onto the violated constraint rows, keeping
    equality rows satisfied. Corrections are tiny near-optimal, so the
    objective is essentially unchanged."""
    g, hvec, e, evec = problem.g, problem.hvec, problem.e, problem.evec
    x = np.asarray(x, dtype=float).copy()
    for _ in range(8):
        slack = g @ x - hvec if g.size else np.zeros(0)
        eq_res = e @ x - evec if e.size else np.zeros(0)
        viol = np.flatnonzero(slack > 0.0)
        if np.max(slack, initial=0.0) <= 0.1 * tol_feas \
                and np.max(np.abs(eq_res), initial=0.0) <= 0.1 * tol_feas:
            break
        rows = np.vstack([g[viol], e]) if e.size else g[viol]
        rhs = np.concatenate([-slack[viol] - 0.05 * tol_feas, -eq_res]) \
            if e.size else -slack[viol] - 0.05 * tol_feas
        dx, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
        x = x + dx
    return x


def _solve_admm(problem, tol_feas, tol_kkt, max_iter, x0=None):
    a, b = problem.a, problem.b
    p = problem.n_params
    cmat = np.vstack([problem.g, problem.e]) if (problem.g.size or problem.e.size) \
        else np.zeros((0, p))
    n_ineq = problem.g.shape[0]
    lower = np.concatenate([np.full(n_ineq, -np.inf), problem.evec])
    upper = np.concatenate([problem.hvec, problem.evec])

    qr_orig, c_orig, reg = _normal_operator(a, b)

    if cmat.size == 0:
        x = np.linalg.lstsq(qr_orig, -c_orig, rcond=None)[0]
        return x, np.zeros(0), np.zeros(0), 0, "optimal", {"regularization": reg}

    # scaled problem: x = dcol * xs, constraint rows scaled by erow
    dcol, erow = _equilibrate(a, cmat)
    asc = a * dcol
    csc = (cmat * dcol) * erow[:, None]
    lsc = lower * erow
    usc = upper * erow
    q = 2.0 * (asc.T @ asc) + reg * np.eye(p) * dcol ** 2
    c = -2.0 * (asc.T @ b)

    sigma = 1e-6
    rho = 1.0
    alpha = 1.6
    x = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float) / dcol
    z = np.clip(csc @ x, lsc, usc)
    w = np.zeros(csc.shape[0])
    ct = csc.T
    ctc = ct @ csc
    factor = cho_factor(q + sigma * np.eye(p) + rho * ctc)
    eps = 1e-9
    status = "max_iterations"
    it = 0

    def unscale():
        return dcol * x, np.maximum(w[:n_ineq], 0.0) * erow[:n_ineq], \
            w[n_ineq:] * erow[n_ineq:]

    def kkt_ok(res):
        return (max(res["stationarity"], res["dual"],
                    res["complementarity"]) <= tol_kkt
                and max(res["primal_ineq"], res["primal_eq"]) <= tol_feas)

    best = None
    resid_hist = []
    stalled = False
    for it in range(1, max_iter + 1):
        rhs = sigma * x - c + ct @ (rho * z - w)
        x = cho_solve(factor, rhs)
        cx = csc @ x
        v = alpha * cx + (1.0 - alpha) * z
        z_prev = z
        z = np.clip(v + w / rho, lsc, usc)
        w = w + rho * (v - z)
        if it % 10 == 0 or it == max_iter:
            r_prim = float(np.max(np.abs(cx - z), initial=0.0))
            r_dual = float(np.max(np.abs(ct @ (rho * (z - z_prev))),
                                  initial=0.0))
            scale_ref = max(1.0, float(np.max(np.abs(cx), initial=0.0)))
            converged = r_prim < eps * scale_ref and r_dual < eps * scale_ref
            # periodic polish: the active set usually settles long before
            # the ADMM residuals do
            if converged or it % 250 == 0:
                xo, lam_o, mu_o = unscale()
                polished = _polish(problem, qr_orig, c_orig, xo, lam_o,
                                   tol_kkt)
                if polished is not None:
                    res = problem.kkt_residuals(*polished, reg=reg)
                    if kkt_ok(res):
                        xs, lam_s, mu_s = polished
                        return xs, lam_s, mu_s, it, "optimal", \
                            {"regularization": reg, "rho": rho}
                    if best is None or max(res.values()) < best[0]:
                        best = (max(res.values()),) + polished
            if converged:
                status = "converged"
                break
            if it % 100 == 0:
                resid_hist.append(r_prim + r_dual)
                # slow geometric decay means the splitting will not reach
                # tolerance in any reasonable budget; hand over to the
                # interior-point refinement instead
                if len(resid_hist) >= 5 and \
                        resid_hist[-1] > 0.3 * resid_hist[-5]:
                    stalled = True
                    break
            if it % 50 == 0:
                ratio = np.sqrt((r_prim + 1e-16) / (r_dual + 1e-16))
                ratio = float(np.clip(ratio, 0.2, 5.0))
                if abs(ratio - 1.0) > 0.5:
                    rho *= ratio
                    factor = cho_factor(q + sigma * np.eye(p) + rho * ctc)
    x, lam, mu = unscale()
    res = problem.kkt_residuals(x, lam, mu, reg=reg)
    if best is not None and best[0] < max(res.values()):
        _, x, lam, mu = best
        res = problem.kkt_residuals(x, lam, mu, reg=reg)
    diag = {"regularization": reg, "rho": rho, "ipm_refined": False,
            "stalled": stalled}
    if not kkt_ok(res):
        xi, lam_i, mu_i = _qp_ipm(qr_orig, c_orig, problem.g, problem.hvec,
                                  problem.e, problem.evec)[:3]
        xi = _project_feasible(problem, xi, tol_feas)
        res_i = problem.kkt_residuals(xi, lam_i, mu_i, reg=reg)
        polished = _polish(problem, qr_orig, c_orig, xi, lam_i, tol_kkt)
        if polished is not None:
            res_p = problem.kkt_residuals(*polished, reg=reg)
            if max(res_p.values()) < max(res_i.values()):
                xi, lam_i, mu_i = polished
                res_i = res_p
        if max(res_i.values()) < max(res.values()):
            x, lam, mu = xi, lam_i, mu_i
            res = res_i
            diag["ipm_refined"] = True
    if kkt_ok(res):
        status = "optimal"
    return x, lam, mu, it, status, diag



def _active_set_qp(problem, q, c, x, tol, max_iter):
    g, hvec, e, evec = problem.g, problem.hvec, problem.e, problem.evec
    n_ineq = g.shape[0]
    work = set(np.flatnonzero(np.abs(g @ x - hvec) <= 1e-10).tolist()) \
        if n_ineq else set()
    lam = np.zeros(n_ineq)
    mu = np.zeros(e.shape[0])
    for it in range(1, max_iter + 1):
        idx = np.array(sorted(work), dtype=int)
        arows = np.vstack([e, g[idx]]) if (e.size or idx.size) \
            else np.zeros((0, x.size))
        brhs = np.concatenate([evec, hvec[idx]])
        xs, duals = _kkt_solve(q, c, arows, brhs)
        step = xs - x
        if np.max(np.abs(step), initial=0.0) <= 1e-12:
            mu = duals[:e.shape[0]]
            lam_act = duals[e.shape[0]:]
            neg = np.flatnonzero(lam_act < -tol)
            if neg.size == 0:
                lam = np.zeros(n_ineq)
                if idx.size:
                    lam[idx] = np.maximum(lam_act, 0.0)
                return x, lam, mu, it, "optimal"
            work.discard(int(idx[neg[0]]))  # lowest-index tie-break
            continue
        # longest feasible step toward xs
        alpha = 1.0
        blocker = None
        if n_ineq:
            free = np.array([i for i in range(n_ineq) if i not in work])
            if free.size:
                denom = g[free] @ step
                room = hvec[free] - g[free] @ x
                cand = np.flatnonzero(denom > 1e-14)
                if cand.size:
                    ratios = room[cand] / denom[cand]
                    ratios = np.maximum(ratios, 0.0)
                    k = int(np.argmin(ratios))
                    if ratios[k] < alpha:
                        alpha = float(ratios[k])
                        blocker = int(free[cand[k]])
        x = x + alpha * step
        if blocker is not None:
            work.add(blocker)
    return x, lam, mu, max_iter, "max_iterations"


def _solve_active_set(problem, tol_feas, tol_kkt, max_iter, x0=None):
    feasible, witness, viol = feasibility_check(problem, tol_feas)
    if not feasible:
        raise InfeasibleError(viol, None)
    x = witness if x0 is None else np.asarray(x0, dtype=float)
    if problem.g.size and np.max(problem.g @ x - problem.hvec) > tol_feas:
        x = witness
    q, c, reg = _normal_operator(problem.a, problem.b)
    x, lam, mu, it, status = _active_set_qp(problem, q, c, x, tol_kkt,
                                            max_iter)
    return x, lam, mu, it, status, {"regularization": reg}


def solve(problem: ClsProblem, tol_feas: float = 1e-8, tol_kkt: float = 1e-8,
          max_iter: int = 20000, backend: str = "admm",
          x0=None) -> ClsSolution:
    """Solve the constrained least-squares problem.

    backend 'admm' (default) or 'active_set'. Raises InfeasibleError when
    the constraint set is certified empty; returns the best iterate with
    status 'max_iterations' when the budget runs out.
    """
    t0 = time.perf_counter()
    if backend == "admm":
        x, lam, mu, it, status, diag = _solve_admm(
            problem, tol_feas, tol_kkt, max_iter, x0)
        if status != "optimal":
            feasible, _, viol = feasibility_check(problem, tol_feas)
            if not feasible:
                raise InfeasibleError(viol, None)
    elif backend == "active_set":
        x, lam, mu, it, status, diag = _solve_active_set(
            problem, tol_feas, tol_kkt, max_iter, x0)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    wall = time.perf_counter() - t0
    kkt = problem.kkt_residuals(x, lam, mu, reg=diag.get("regularization", 0.0))
    return ClsSolution(x, problem.objective(x), kkt, lam, mu, it, wall,
                       status, diag)
