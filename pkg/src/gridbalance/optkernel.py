"""Self-contained convex solver for the small LPs and QPs used everywhere here.

Programs are  min 0.5 x'Qx + c'x  subject to  A_eq x = b_eq, A_in x <= b_in,
lo <= x <= hi,  with Q diagonal PSD.  Three routes, all deterministic:

* Q == 0: delegated to scipy's HiGHS LP (fixed pivoting, no randomization);
  the KKT residual is recomputed here from the returned multipliers.
* Q strictly positive: primal active-set with the working-set KKT system
  solved through the diagonal Schur complement M Q^-1 M'.  The common case
  (no inequality active at the optimum) costs a single Schur solve.
* Q with zero diagonal entries: the same active-set loop, but the subproblem
  is solved in the null space of the working set via SVD, which is where
  unbounded directions are detected.

Feasible starts come from a HiGHS phase-1 when the equality-constrained
optimum violates an inequality.  Infeasibility certificates are HiGHS's.
Ties (blocking row, dropped multiplier) break on the lowest row index, so a
given program always takes the same path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

DEFAULT_TOL_FEAS = 1e-8
DEFAULT_TOL_KKT = 1e-6

_HIGHS_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
}


class ProgramError(ValueError):
    """Malformed program: dimension mismatch or non-PSD objective."""


class SolverError(RuntimeError):
    """The solver failed to produce a verifiable answer."""


@dataclass
class ConvexProgram:
    """Diagonal-Q convex program in standard form.

    ``q_diag`` holds the diagonal of Q (entries >= 0; zeros mark pure-LP
    directions).  ``a_eq``/``a_in`` may be None when absent.  ``lo``/``hi``
    accept -inf/+inf.
    """

    q_diag: np.ndarray
    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.q_diag = np.atleast_1d(np.asarray(self.q_diag, dtype=float))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = self.c.shape[0]
        if self.q_diag.shape != (n,):
            raise ProgramError(
                f"q_diag shape {self.q_diag.shape} does not match n={n}")
        if np.any(self.q_diag < 0):
            raise ProgramError("non-PSD objective: negative diagonal entry")
        for name in ("a_eq", "a_in"):
            a = getattr(self, name)
            if a is not None:
                a = np.atleast_2d(np.asarray(a, dtype=float))
                if a.shape[1] != n:
                    raise ProgramError(f"{name} has {a.shape[1]} columns, expected {n}")
                setattr(self, name, a)
        for aname, bname in (("a_eq", "b_eq"), ("a_in", "b_in")):
            a, b = getattr(self, aname), getattr(self, bname)
            if (a is None) != (b is None):
                raise ProgramError(f"{aname} and {bname} must be given together")
            if b is not None:
                b = np.atleast_1d(np.asarray(b, dtype=float))
                if b.shape != (a.shape[0],):
                    raise ProgramError(f"{bname} shape {b.shape} does not match {aname}")
                setattr(self, bname, b)
        self.lo = (np.full(n, -np.inf) if self.lo is None
                   else np.atleast_1d(np.asarray(self.lo, dtype=float)))
        self.hi = (np.full(n, np.inf) if self.hi is None
                   else np.atleast_1d(np.asarray(self.hi, dtype=float)))
        if self.lo.shape != (n,) or self.hi.shape != (n,):
            raise ProgramError("box bounds must have shape (n,)")
        if np.any(self.lo > self.hi):
            bad = int(np.flatnonzero(self.lo > self.hi)[0])
            raise ProgramError(f"empty box at variable {bad}: lo > hi")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * np.dot(self.q_diag * x, x) + np.dot(self.c, x))


@dataclass
class Solution:
    status: str  # 'optimal' | 'infeasible' | 'unbounded'
    x: np.ndarray | None = None
    objective_value: float | None = None
    kkt_residual: float | None = None
    n_iterations: int = 0
    x_split: np.ndarray | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# assembled-row helpers


def _gather_rows(prog: ConvexProgram) -> tuple[np.ndarray, np.ndarray]:
    """Inequalities plus finite box bounds as a single G x <= h system."""
    n = prog.n
    blocks_a, blocks_b = [], []
    if prog.a_in is not None:
        blocks_a.append(prog.a_in)
        blocks_b.append(prog.b_in)
    fin_hi = np.flatnonzero(np.isfinite(prog.hi))
    if fin_hi.size:
        eye = np.zeros((fin_hi.size, n))
        eye[np.arange(fin_hi.size), fin_hi] = 1.0
        blocks_a.append(eye)
        blocks_b.append(prog.hi[fin_hi])
    fin_lo = np.flatnonzero(np.isfinite(prog.lo))
    if fin_lo.size:
        eye = np.zeros((fin_lo.size, n))
        eye[np.arange(fin_lo.size), fin_lo] = -1.0
        blocks_a.append(eye)
        blocks_b.append(-prog.lo[fin_lo])
    if not blocks_a:
        return np.zeros((0, n)), np.zeros(0)
    return np.vstack(blocks_a), np.concatenate(blocks_b)


def _kkt_residual(prog: ConvexProgram, x: np.ndarray,
                  nu: np.ndarray, mu_rows: np.ndarray,
                  g_mat: np.ndarray, h_vec: np.ndarray) -> float:
    """Max violation of stationarity, primal feasibility, dual signs,
    and complementarity for the row-assembled system."""
    grad = prog.q_diag * x + prog.c
    if prog.a_eq is not None:
        grad = grad + prog.a_eq.T @ nu
    if g_mat.shape[0]:
        grad = grad + g_mat.T @ mu_rows
    parts = [np.abs(grad).max() if grad.size else 0.0]
    if prog.a_eq is not None:
        parts.append(np.abs(prog.a_eq @ x - prog.b_eq).max())
    if g_mat.shape[0]:
        slack = g_mat @ x - h_vec
        parts.append(max(0.0, slack.max()))
        parts.append(max(0.0, -(mu_rows.min())) if mu_rows.size else 0.0)
        parts.append(np.abs(mu_rows * slack).max() if mu_rows.size else 0.0)
    return float(max(parts))


# ---------------------------------------------------------------------------
# fixed-variable presolve


def _eliminate_fixed(prog: ConvexProgram):
    """Split off variables with lo == hi; returns None when nothing is fixed."""
    fixed = prog.lo == prog.hi
    if not fixed.any():
        return None
    free = ~fixed
    xf = prog.lo[fixed]
    const = float(0.5 * np.dot(prog.q_diag[fixed] * xf, xf)
                  + np.dot(prog.c[fixed], xf))

    def _reduce_rows(a, b, is_eq):
        if a is None:
            return None, None, True
        shift = b - a[:, fixed] @ xf
        a_free = a[:, free]
        keep = np.abs(a_free).sum(axis=1) > 0
        dropped = shift[~keep]
        if is_eq:
            ok = np.all(np.abs(dropped) <= DEFAULT_TOL_FEAS) if dropped.size else True
        else:
            ok = np.all(dropped >= -DEFAULT_TOL_FEAS) if dropped.size else True
        if not keep.any():
            return None, None, ok
        return a_free[keep], shift[keep], ok

    a_eq, b_eq, ok_eq = _reduce_rows(prog.a_eq, prog.b_eq, True)
    a_in, b_in, ok_in = _reduce_rows(prog.a_in, prog.b_in, False)
    if not (ok_eq and ok_in):
        return "infeasible", None, None, None, None
    sub = None
    if free.any():
        sub = ConvexProgram(
            q_diag=prog.q_diag[free], c=prog.c[free],
            a_eq=a_eq, b_eq=b_eq, a_in=a_in, b_in=b_in,
            lo=prog.lo[free], hi=prog.hi[free])
    return "reduced", sub, free, xf, const


# ---------------------------------------------------------------------------
# LP route (HiGHS)


def _bounds_for_linprog(prog: ConvexProgram) -> list[tuple[float, float]]:
    return list(zip(prog.lo, prog.hi))


def _solve_lp(prog: ConvexProgram, tol_feas: float, tol_kkt: float) -> Solution:
    res = linprog(prog.c, A_ub=prog.a_in, b_ub=prog.b_in,
                  A_eq=prog.a_eq, b_eq=prog.b_eq,
                  bounds=_bounds_for_linprog(prog),
                  method="highs", options=dict(_HIGHS_OPTIONS))
    if res.status == 2:
        return Solution(status="infeasible", n_iterations=int(res.nit))
    if res.status == 3:
        return Solution(status="unbounded", n_iterations=int(res.nit))
    if res.status != 0:
        raise SolverError(f"LP backend failed: {res.message}")
    x = np.asarray(res.x, dtype=float)
    # scipy marginal conventions: obj sensitivity to the rhs.  Stationarity is
    # c - A_eq' m_eq - A_in' m_in - m_lo - m_hi = 0 with m_in, m_hi <= 0 <= m_lo.
    grad = prog.c.copy()
    nu = np.zeros(0)
    if prog.a_eq is not None:
        nu = -np.asarray(res.eqlin.marginals, dtype=float)
        grad -= prog.a_eq.T @ np.asarray(res.eqlin.marginals, dtype=float)
    mu_in = np.zeros(0)
    if prog.a_in is not None:
        m = np.asarray(res.ineqlin.marginals, dtype=float)
        mu_in = -m
        grad -= prog.a_in.T @ m
    m_lo = np.asarray(res.lower.marginals, dtype=float)
    m_hi = np.asarray(res.upper.marginals, dtype=float)
    grad -= m_lo + m_hi
    parts = [np.abs(grad).max() if grad.size else 0.0]
    if prog.a_eq is not None:
        parts.append(np.abs(prog.a_eq @ x - prog.b_eq).max())
    if prog.a_in is not None:
        slack = prog.a_in @ x - prog.b_in
        parts.append(max(0.0, float(slack.max())))
        parts.append(max(0.0, float(-mu_in.min())) if mu_in.size else 0.0)
        parts.append(float(np.abs(mu_in * slack).max()) if mu_in.size else 0.0)
    lo_gap = np.where(np.isfinite(prog.lo), x - prog.lo, np.inf)
    hi_gap = np.where(np.isfinite(prog.hi), prog.hi - x, np.inf)
    parts.append(max(0.0, float(-lo_gap.min())) if lo_gap.size else 0.0)
    parts.append(max(0.0, float(-hi_gap.min())) if hi_gap.size else 0.0)
    with np.errstate(invalid="ignore"):
        comp_lo = np.abs(m_lo) * np.where(np.isfinite(lo_gap), lo_gap, 0.0)
        comp_hi = np.abs(m_hi) * np.where(np.isfinite(hi_gap), hi_gap, 0.0)
    if comp_lo.size:
        parts.append(float(comp_lo.max()))
        parts.append(float(comp_hi.max()))
    kkt = float(max(parts))
    if kkt > 100 * max(tol_kkt, 1e-9) + 1e-6:
        raise SolverError(f"LP solution failed KKT verification (residual {kkt:.2e})")
    return Solution(status="optimal", x=x, objective_value=prog.objective(x),
                    kkt_residual=kkt, n_iterations=int(res.nit))


def _phase1_point(prog: ConvexProgram) -> np.ndarray | None:
    """Any feasible point via HiGHS, or None when proven infeasible."""
    res = linprog(np.zeros(prog.n), A_ub=prog.a_in, b_ub=prog.b_in,
                  A_eq=prog.a_eq, b_eq=prog.b_eq,
                  bounds=_bounds_for_linprog(prog),
                  method="highs", options=dict(_HIGHS_OPTIONS))
    if res.status == 2:
        return None
    if res.status != 0:
        raise SolverError(f"phase-1 failed: {res.message}")
    return np.clip(np.asarray(res.x, dtype=float), prog.lo, prog.hi)


# ---------------------------------------------------------------------------
# QP route (active set)


def _schur_step(qinv: np.ndarray, m_mat: np.ndarray, rhs_grad: np.ndarray,
                rhs_rows: np.ndarray):
    """Solve [Q M'; M 0][p; mult] = [-rhs_grad; rhs_rows] for diagonal Q > 0."""
    if m_mat.shape[0] == 0:
        return -qinv * rhs_grad, np.zeros(0)
    s = (m_mat * qinv) @ m_mat.T
    rhs = -(rhs_rows + m_mat @ (qinv * rhs_grad))
    try:
        mult = np.linalg.solve(s, rhs)
    except np.linalg.LinAlgError:
        mult = np.linalg.lstsq(s, rhs, rcond=None)[0]
    p = -qinv * (rhs_grad + m_mat.T @ mult)
    return p, mult


def _nullspace_step(q_diag: np.ndarray, m_mat: np.ndarray, grad: np.ndarray):
    """Subproblem min 0.5 p'Qp + grad'p s.t. M p = 0 for PSD diagonal Q.

    Returns ("step", p) at a finite optimum, ("ray", d) when the objective
    decreases without bound along d inside the subspace, or ("stationary",)
    when the subspace is empty.
    """
    n = q_diag.shape[0]
    if m_mat.shape[0] == 0:
        z = np.eye(n)
    else:
        _, sv, vt = np.linalg.svd(m_mat, full_matrices=True)
        rank = int(np.sum(sv > 1e-11 * max(1.0, sv[0] if sv.size else 0.0)))
        z = vt[rank:].T
    if z.shape[1] == 0:
        return ("stationary",)
    h = z.T @ (q_diag[:, None] * z)
    gz = z.T @ grad
    evals, evecs = np.linalg.eigh(h)
    tol = 1e-11 * max(1.0, float(evals[-1]) if evals.size else 0.0)
    null_mask = evals <= tol
    g_modes = evecs.T @ gz
    if null_mask.any():
        flat = np.abs(g_modes) * null_mask
        idx = int(np.argmax(flat))
        if flat[idx] > 1e-10 * max(1.0, np.abs(gz).max()):
            dz = -np.sign(g_modes[idx]) * evecs[:, idx]
            return ("ray", z @ dz)
    inv = np.where(null_mask, 0.0, 1.0 / np.where(null_mask, 1.0, evals))
    pz = -evecs @ (inv * g_modes)
    return ("step", z @ pz)


def _working_multipliers(prog: ConvexProgram, x: np.ndarray,
                         m_mat: np.ndarray) -> np.ndarray:
    grad = prog.q_diag * x + prog.c
    if m_mat.shape[0] == 0:
        return np.zeros(0)
    mult, *_ = np.linalg.lstsq(m_mat.T, -grad, rcond=None)
    return mult


def _solve_qp(prog: ConvexProgram, tol_feas: float, tol_kkt: float) -> Solution:
    n = prog.n
    g_mat, h_vec = _gather_rows(prog)
    n_eq = prog.a_eq.shape[0] if prog.a_eq is not None else 0
    a_eq = prog.a_eq if prog.a_eq is not None else np.zeros((0, n))
    b_eq = prog.b_eq if prog.b_eq is not None else np.zeros(0)
    strict = bool(np.all(prog.q_diag > 0))
    qinv = 1.0 / prog.q_diag if strict else None

    def _subproblem(m_mat, grad, rhs_rows):
        if strict:
            p, mult = _schur_step(qinv, m_mat, grad, rhs_rows)
            return ("step", p), mult
        out = _nullspace_step(prog.q_diag, m_mat, grad)
        return out, None

    # Try the equality-constrained optimum first; in the common case no
    # inequality is active and this is the whole solve.
    x = None
    if strict:
        cand, nu = _schur_step(qinv, a_eq, prog.c, b_eq)
        # solved from the origin: Q x + c + A' nu = 0, A x = b
        eq_ok = (n_eq == 0 or
                 np.abs(a_eq @ cand - b_eq).max() <= max(tol_feas, 1e-9))
        if eq_ok and (g_mat.shape[0] == 0 or (g_mat @ cand - h_vec).max() <= tol_feas):
            mu = np.zeros(g_mat.shape[0])
            kkt = _kkt_residual(prog, cand, nu[:n_eq], mu, g_mat, h_vec)
            if kkt <= tol_kkt:
                return Solution(status="optimal", x=cand,
                                objective_value=prog.objective(cand),
                                kkt_residual=kkt, n_iterations=1)
        if eq_ok and g_mat.shape[0] == 0:
            # no inequalities at all and equality system consistent
            kkt = _kkt_residual(prog, cand, nu[:n_eq], np.zeros(0), g_mat, h_vec)
            if kkt > tol_kkt:
                raise SolverError(f"KKT verification failed (residual {kkt:.2e})")
            return Solution(status="optimal", x=cand,
                            objective_value=prog.objective(cand),
                            kkt_residual=kkt, n_iterations=1)

    x = _phase1_point(prog)
    if x is None:
        return Solution(status="infeasible")

    working: list[int] = []
    max_iter = 200 + 20 * (n + g_mat.shape[0])
    zero_steps = 0
    for it in range(1, max_iter + 1):
        m_mat = np.vstack([a_eq, g_mat[working]]) if (n_eq or working) \
            else np.zeros((0, n))
        grad = prog.q_diag * x + prog.c
        out, mult = _subproblem(m_mat, grad, np.zeros(m_mat.shape[0]))
        kind = out[0]
        if kind == "ray":
            d = out[1]
            s = g_mat @ d if g_mat.shape[0] else np.zeros(0)
            scale = (np.abs(g_mat) @ np.abs(d) + 1.0) if g_mat.shape[0] else np.zeros(0)
            movable = np.flatnonzero(s > 1e-11 * scale)
            movable = movable[~np.isin(movable, working)]
            if movable.size == 0:
                return Solution(status="unbounded", n_iterations=it)
            gaps = np.maximum(h_vec[movable] - g_mat[movable] @ x, 0.0)
            ratios = gaps / s[movable]
            pick = int(np.argmin(ratios))
            x = x + ratios[pick] * d
            working.append(int(movable[pick]))
            working.sort()
            continue
        if kind == "stationary":
            p = np.zeros(n)
        else:
            p = out[1]
        step_norm = np.abs(p).max() if p.size else 0.0
        if step_norm <= 1e-10 * max(1.0, np.abs(x).max()):
            if mult is None:
                mult = _working_multipliers(prog, x, m_mat)
            mu_w = mult[n_eq:]
            if mu_w.size == 0 or mu_w.min() >= -max(tol_kkt, 1e-9):
                mu = np.zeros(g_mat.shape[0])
                mu[working] = np.maximum(mu_w, 0.0)
                nu = mult[:n_eq]
                kkt = _kkt_residual(prog, x, nu, mu, g_mat, h_vec)
                if kkt > 10 * tol_kkt:
                    raise SolverError(
                        f"KKT verification failed (residual {kkt:.2e})")
                return Solution(status="optimal", x=x,
                                objective_value=prog.objective(x),
                                kkt_residual=kkt, n_iterations=it)
            if zero_steps > 3:  # Bland-style guard against cycling
                neg = np.flatnonzero(mu_w < -max(tol_kkt, 1e-9))
                drop = int(neg[0])
            else:
                drop = int(np.argmin(mu_w))
            working.pop(drop)
            zero_steps += 1
            continue
        s = g_mat @ p if g_mat.shape[0] else np.zeros(0)
        scale = (np.abs(g_mat) @ np.abs(p) + 1.0) if g_mat.shape[0] else np.zeros(0)
        cand_rows = np.flatnonzero(s > 1e-11 * scale)
        cand_rows = cand_rows[~np.isin(cand_rows, working)]
        alpha = 1.0
        blocker = -1
        if cand_rows.size:
            gaps = np.maximum(h_vec[cand_rows] - g_mat[cand_rows] @ x, 0.0)
            ratios = gaps / s[cand_rows]
            pick = int(np.argmin(ratios))
            if ratios[pick] < 1.0:
                alpha = float(ratios[pick])
                blocker = int(cand_rows[pick])
        x = x + alpha * p
        if blocker >= 0:
            working.append(blocker)
            working.sort()
        zero_steps = zero_steps + 1 if alpha <= 1e-14 else 0
    raise SolverError(f"active set did not converge within {max_iter} iterations")


# ---------------------------------------------------------------------------
# public entry points


def solve(prog: ConvexProgram, tol_feas: float = DEFAULT_TOL_FEAS,
          tol_kkt: float = DEFAULT_TOL_KKT) -> Solution:
    """Solve the program; status 'optimal' guarantees the KKT contract."""
    red = _eliminate_fixed(prog)
    if red is not None:
        tag = red[0]
        if tag == "infeasible":
            return Solution(status="infeasible")
        _, sub, free, xf, const = red
        if sub is None:  # everything fixed: lo == hi pins the whole vector
            x = prog.lo.copy()
            ok = True
            if prog.a_in is not None:
                ok &= bool(np.all(prog.a_in @ x - prog.b_in <= DEFAULT_TOL_FEAS))
            if prog.a_eq is not None:
                ok &= bool(np.all(np.abs(prog.a_eq @ x - prog.b_eq) <= DEFAULT_TOL_FEAS))
            if not ok:
                return Solution(status="infeasible")
            return Solution(status="optimal", x=x, objective_value=prog.objective(x),
                            kkt_residual=0.0, n_iterations=0)
        sol = solve(sub, tol_feas, tol_kkt)
        if sol.status != "optimal":
            return Solution(status=sol.status, n_iterations=sol.n_iterations)
        x = np.empty(prog.n)
        x[free] = sol.x
        x[~free] = xf
        return Solution(status="optimal", x=x, objective_value=prog.objective(x),
                        kkt_residual=sol.kkt_residual,
                        n_iterations=sol.n_iterations)
    if np.all(prog.q_diag == 0):
        return _solve_lp(prog, tol_feas, tol_kkt)
    return _solve_qp(prog, tol_feas, tol_kkt)


def solve_lp_abs(abs_weights: np.ndarray,
                 a_eq: np.ndarray | None = None, b_eq: np.ndarray | None = None,
                 a_in: np.ndarray | None = None, b_in: np.ndarray | None = None,
                 lo: np.ndarray | None = None, hi: np.ndarray | None = None,
                 tol_feas: float = DEFAULT_TOL_FEAS,
                 tol_kkt: float = DEFAULT_TOL_KKT) -> Solution:
    """Minimize sum_i w_i |x_i| over linear constraints, w_i >= 0.

    Internally splits x = xp - xm with xp, xm >= 0 and weight w on each half,
    solves the LP route, and recombines.  The solution's ``x`` is the
    recombined vector; ``x_split`` keeps the raw halves.
    """
    w = np.atleast_1d(np.asarray(abs_weights, dtype=float))
    if np.any(w < 0):
        bad = int(np.flatnonzero(w < 0)[0])
        raise ProgramError(f"absolute-value weight {bad} is negative")
    n = w.shape[0]
    blocks_a, blocks_b = [], []
    if a_in is not None:
        a_in = np.atleast_2d(np.asarray(a_in, dtype=float))
        blocks_a.append(np.hstack([a_in, -a_in]))
        blocks_b.append(np.atleast_1d(np.asarray(b_in, dtype=float)))
    if hi is not None:
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        fin = np.flatnonzero(np.isfinite(hi))
        if fin.size:
            eye = np.zeros((fin.size, n))
            eye[np.arange(fin.size), fin] = 1.0
            blocks_a.append(np.hstack([eye, -eye]))
            blocks_b.append(hi[fin])
    if lo is not None:
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        fin = np.flatnonzero(np.isfinite(lo))
        if fin.size:
            eye = np.zeros((fin.size, n))
            eye[np.arange(fin.size), fin] = 1.0
            blocks_a.append(np.hstack([-eye, eye]))
            blocks_b.append(-lo[fin])
    split_ain = np.vstack(blocks_a) if blocks_a else None
    split_bin = np.concatenate(blocks_b) if blocks_a else None
    split_aeq = split_beq = None
    if a_eq is not None:
        a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
        split_aeq = np.hstack([a_eq, -a_eq])
        split_beq = np.atleast_1d(np.asarray(b_eq, dtype=float))
    prog = ConvexProgram(
        q_diag=np.zeros(2 * n), c=np.concatenate([w, w]),
        a_eq=split_aeq, b_eq=split_beq, a_in=split_ain, b_in=split_bin,
        lo=np.zeros(2 * n), hi=np.full(2 * n, np.inf))
    sol = solve(prog, tol_feas, tol_kkt)
    if sol.status != "optimal":
        return Solution(status=sol.status, n_iterations=sol.n_iterations)
    xp, xm = sol.x[:n], sol.x[n:]
    x = xp - xm
    return Solution(status="optimal", x=x,
                    objective_value=float(np.dot(w, np.abs(x))),
                    kkt_residual=sol.kkt_residual,
                    n_iterations=sol.n_iterations, x_split=sol.x)
