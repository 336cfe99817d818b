"""Built-in systems and end-to-end constructions.

Three worked settings exercise the whole library: a quadratic controlling
function whose cross mapping is the quarter-turn of the phase plane, the
planar central-gravity (ballistic) system in polar velocities with its
printed adjoint equations, and the reduction of an autonomous scalar system
to constant drift ydot = a via the straightening PDE U + c U_lam = F solved
by characteristics.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .phasecore import (ControllingFunction, DomainError, DynamicSystem,
                        PhaseState, Trajectory, _central_diff_t, _fd_step)
from .hamilton import integrate
from .mapping import MappingSpec
from .invariants import hj_residual_U

__all__ = [
    "ballistic_system",
    "make_ballistic_adjoint",
    "rotation_example",
    "StraighteningProblem",
    "StraighteningSolution",
    "straightening_solve",
    "ConstantFieldReport",
    "constant_field_reduction",
]

_R_MIN = 1e-6


# ---------------------------------------------------------------------
# Example system: central gravity in polar velocity coordinates
# ---------------------------------------------------------------------

def ballistic_system(sigma: float) -> DynamicSystem:
    """Planar motion in a central field, state (v_r, v_phi, r, phi).

        v_r'   = v_phi^2 / r - sigma^2 / r^2
        v_phi' = -v_r v_phi / r
        r'     = v_r
        phi'   = v_phi / r

    sigma^2 is the gravitational parameter.  r is guarded away from the
    singularity: r <= 1e-6 raises DomainError so integrations truncate
    with a diagnostic instead of blowing through the center.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sig2 = float(sigma) ** 2

    def f(s, t):
        v_r, v_phi, r, _phi = s
        if r <= _R_MIN:
            raise DomainError(f"radius {r} at or below the guard {_R_MIN}")
        return np.array([v_phi ** 2 / r - sig2 / r ** 2,
                         -v_r * v_phi / r,
                         v_r,
                         v_phi / r])

    def jac(s, t):
        v_r, v_phi, r, _phi = s
        if r <= _R_MIN:
            raise DomainError(f"radius {r} at or below the guard {_R_MIN}")
        return np.array([
            [0.0, 2.0 * v_phi / r, -v_phi ** 2 / r ** 2 + 2.0 * sig2 / r ** 3, 0.0],
            [-v_phi / r, -v_r / r, v_r * v_phi / r ** 2, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0 / r, -v_phi / r ** 2, 0.0],
        ])

    return DynamicSystem(dim=4, f=f, jac=jac, autonomous=True)


def make_ballistic_adjoint(sigma: float) -> Callable[[PhaseState], np.ndarray]:
    """Hand-coded multiplier equations for ballistic_system(sigma):

        lam1' = lam2 v_phi / r - lam3
        lam2' = -2 lam1 v_phi / r + lam2 v_r / r - lam4 / r
        lam3' = lam1 v_phi^2 / r^2 - 2 lam1 sigma^2 / r^3
                - lam2 v_r v_phi / r^2 + lam4 v_phi / r^2
        lam4' = 0

    Kept separate from the generic adjoint -A^T lam so the written-out
    system can be tested against the machinery that is supposed to
    reproduce it.
    """
    sig2 = float(sigma) ** 2

    def rhs(s: PhaseState) -> np.ndarray:
        v_r, v_phi, r, _phi = s.x
        l1, l2, l3, l4 = s.lam
        if r <= _R_MIN:
            raise DomainError(f"radius {r} at or below the guard {_R_MIN}")
        return np.array([
            l2 * v_phi / r - l3,
            -2.0 * l1 * v_phi / r + l2 * v_r / r - l4 / r,
            l1 * v_phi ** 2 / r ** 2 - 2.0 * l1 * sig2 / r ** 3
            - l2 * v_r * v_phi / r ** 2 + l4 * v_phi / r ** 2,
            0.0,
        ])

    return rhs


# ---------------------------------------------------------------------
# Quadratic controlling function: quarter-turn of the phase plane
# ---------------------------------------------------------------------

def rotation_example(u_t: Optional[Callable[[float], float]] = None,
                     dim: int = 1):
    """U = |lam|^2/2 - |x|^2/2 + lam.x + u(t) and its Cross220 spec.

    The cross mapping y = x + U_x, mu = lam - U_lam sends (x, lam) to
    (lam, -x) exactly — a quarter-turn of the phase plane — for every
    differentiable u(t), which never enters the gradients.
    """
    n = int(dim)
    E = np.eye(n)
    z = np.zeros(n)

    if u_t is None:
        u_val = lambda t: 0.0
        ut_val = lambda t: 0.0
    else:
        u_val = lambda t: float(u_t(t))
        ut_val = lambda t: float(_central_diff_t(u_t, t))

    cf = ControllingFunction(
        n,
        u=lambda x, lam, t: 0.5 * float(lam @ lam) - 0.5 * float(x @ x)
            + float(lam @ x) + u_val(t),
        ux=lambda x, lam, t: lam - x,
        ulam=lambda x, lam, t: lam + x,
        ut=lambda x, lam, t: ut_val(t),
        uxlam=lambda x, lam, t: E,
        uxx=lambda x, lam, t: -E,
        ulamlam=lambda x, lam, t: E,
        uxt=lambda x, lam, t: z,
        ulamt=lambda x, lam, t: z,
    )
    return cf, MappingSpec("Cross220", cf)


# ---------------------------------------------------------------------
# Straightening PDE  U + c U_lam = F  (method of characteristics, n=1)
# ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StraighteningProblem:
    """Targets for the constant-drift reduction ydot = a, mu = c.

    The consistency a . c = h ties the drift and multiplier targets to the
    energy level of the motion being straightened.
    """

    c: np.ndarray
    a: np.ndarray
    h: float
    y0: np.ndarray
    lam_b: float        # reference multiplier where U(x, lam_b) = 0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        if not (c.shape == a.shape == y0.shape):
            raise ValueError("c, a, y0 must share one dimension")
        h = float(self.h)
        if abs(float(np.dot(a, c)) - h) > 1e-12 * max(1.0, abs(h)):
            raise ValueError(f"inconsistent targets: a.c = {float(np.dot(a, c))} != h = {h}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "lam_b", float(self.lam_b))


def _adaptive_simpson(g, a, b, tol, depth=48):
    """Adaptive Simpson quadrature of g over [a, b] (orientation-aware)."""
    if a == b:
        return 0.0
    fa, fb = g(a), g(b)
    m = 0.5 * (a + b)
    fm = g(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_split(g, a, b, fa, fm, fb, whole, tol, depth)


def _simpson_split(g, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = g(lm)
    frm = g(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if depth <= 0 or abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    half = 0.5 * tol
    return (_simpson_split(g, a, m, fa, flm, fm, left, half, depth - 1)
            + _simpson_split(g, m, b, fm, frm, fb, right, half, depth - 1))


@dataclass(frozen=True, eq=False)
class StraighteningSolution:
    """Solved U on the (x, lam) grid plus point evaluation off the grid."""

    x_grid: np.ndarray
    lam_grid: np.ndarray
    U: np.ndarray            # shape (len(x_grid), len(lam_grid))
    problem: StraighteningProblem
    F: Callable
    quad_tol: float
    degenerate: bool         # |c| below threshold: algebraic U = F case

    def _c(self) -> float:
        return float(self.problem.c[0])

    def evaluate(self, x: float, lam: float) -> float:
        """U(x, lam) anywhere: incremental integrating-factor quadrature
        from the nearest solved node when x is a grid column, else from
        the boundary lam_b directly."""
        x = float(x)
        lam = float(lam)
        if self.degenerate:
            return float(self.F(x, lam))
        c = self._c()
        j = int(np.argmin(np.abs(self.x_grid - x)))
        if abs(self.x_grid[j] - x) <= 1e-12 * max(1.0, abs(x)):
            k = int(np.argmin(np.abs(self.lam_grid - lam)))
            lam_ref = float(self.lam_grid[k])
            u_ref = float(self.U[j, k])
        else:
            lam_ref = self.problem.lam_b
            u_ref = 0.0
        if lam == lam_ref:
            return u_ref
        integral = _adaptive_simpson(
            lambda s: np.exp(-(lam - s) / c) * float(self.F(x, s)),
            lam_ref, lam, self.quad_tol)
        return float(np.exp(-(lam - lam_ref) / c) * u_ref + integral / c)

    def ulam(self, x: float, lam: float) -> float:
        """U_lam from the equation itself: (F - U) / c."""
        if self.degenerate:
            raise ValueError("U_lam is not determined by the degenerate (c=0) equation")
        return (float(self.F(x, lam)) - self.evaluate(x, lam)) / self._c()

    def residual_check(self, fd_h: float = 1e-5) -> float:
        """max |U + c U_lam - F| over the grid, U_lam by central FD."""
        if self.degenerate:
            return 0.0
        c = self._c()
        worst = 0.0
        for j, xv in enumerate(self.x_grid):
            for k, lv in enumerate(self.lam_grid):
                hi = lv + fd_h
                lo = lv - fd_h
                d = hi - lo
                ulam_fd = (self.evaluate(xv, hi) - self.evaluate(xv, lo)) / d
                res = abs(float(self.U[j, k]) + c * ulam_fd - float(self.F(xv, lv)))
                worst = max(worst, res)
        return worst


def straightening_solve(prob: StraighteningProblem, sys: DynamicSystem,
                        F: Callable, x_grid, lam_grid,
                        quad_tol: float = 1e-10) -> StraighteningSolution:
    """Solve U + c U_lam = F(x, lam) column-by-column with U(x, lam_b) = 0.

    Each grid x is an independent characteristic line in lam; the exact
    integrating-factor update between consecutive lam nodes is

        U(lam_{k+1}) = e^{-dlam/c} U(lam_k)
                       + (1/c) ∫ e^{-(lam_{k+1}-s)/c} F(x, s) ds

    with the integral by adaptive Simpson to quad_tol.  Only n=1 is
    supported — with 2n independent variables the characteristics picture
    stops being a desk-scale computation.
    """
    if prob.c.size != 1 or sys.dim != 1:
        raise ValueError("straightening_solve handles n=1 only; "
                         "higher dimensions need a genuine PDE solver")
    x_grid = np.asarray(x_grid, dtype=float)
    lam_grid = np.asarray(lam_grid, dtype=float)
    if x_grid.ndim != 1 or lam_grid.ndim != 1 or lam_grid.size < 2:
        raise ValueError("x_grid and lam_grid must be 1-d (lam_grid with >= 2 nodes)")
    if np.any(np.diff(lam_grid) <= 0):
        raise ValueError("lam_grid must be strictly increasing")
    if abs(lam_grid[0] - prob.lam_b) > 1e-12 * max(1.0, abs(prob.lam_b)):
        raise ValueError("lam_grid must start at the boundary lam_b")
    c = float(prob.c[0])
    U = np.zeros((x_grid.size, lam_grid.size))
    if abs(c) < 1e-12:
        # Degenerate equation: U = F pointwise, no lam propagation.
        for j, xv in enumerate(x_grid):
            U[j, :] = [float(F(xv, lv)) for lv in lam_grid]
        return StraighteningSolution(x_grid, lam_grid, U, prob, F, quad_tol, True)
    for j, xv in enumerate(x_grid):
        u = 0.0
        for k in range(1, lam_grid.size):
            a_, b_ = float(lam_grid[k - 1]), float(lam_grid[k])
            integral = _adaptive_simpson(
                lambda s: np.exp(-(b_ - s) / c) * float(F(xv, s)), a_, b_, quad_tol)
            u = float(np.exp(-(b_ - a_) / c)) * u + integral / c
            U[j, k] = u
    return StraighteningSolution(x_grid, lam_grid, U, prob, F, quad_tol, False)


# ---------------------------------------------------------------------
# Example 2 end-to-end: reduce an autonomous system to constant drift
# ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConstantFieldReport:
    solution: StraighteningSolution
    traj: Trajectory
    f_line: np.ndarray          # cumulative ∫ lam dx along the extremal
    pde_residual_max: float
    ydot_max_err: float         # max |ydot - a| on the mapped motion
    mu_defect: float            # max |lam - U_x - c| (compatibility diagnostic)
    hj_residual: float          # HJ residual with G(y, mu) = a.mu
    energy_mismatch: float      # |lam0.f(x0) - h|
    boundary_note: str


def constant_field_reduction(prob: StraighteningProblem, sys: DynamicSystem,
                             x0, lam0, lam_grid=None, x_grid=None,
                             t1: float = 1.0, step: float = 1e-3,
                             quad_tol: float = 1e-10) -> ConstantFieldReport:
    """Synthesize U that straightens an autonomous scalar system.

    Builds F(x, lam) = ∫ lam dx + c (y0 - x) with the line integral taken
    along the system's own extremal through (x0, lam0) (for a frozen field
    every grid x is its own extremal and the integral vanishes), solves the
    straightening PDE, and reports how well the mapped motion achieves
    ydot = a, mu = c, and the Hamilton-Jacobi equation with G = a.mu.
    """
    if not sys.autonomous:
        raise ValueError("constant_field_reduction requires an autonomous system")
    if sys.dim != 1 or prob.c.size != 1:
        raise ValueError("constant_field_reduction handles n=1 only")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
    s0 = PhaseState(x0, lam0, 0.0)
    traj = integrate(sys, s0, t1, step)
    ts = traj.times()
    xs = traj.xs()[:, 0]
    lams = traj.lams()[:, 0]
    c = float(prob.c[0])
    a = float(prob.a[0])
    y0 = float(prob.y0[0])
    energy_mismatch = abs(float(lam0[0]) * float(sys.f_at(x0, 0.0)[0]) - prob.h)

    # line integral ∫ lam dx = ∫ lam f dt along the extremal
    integrand = np.array([lams[i] * float(sys.f_at(traj.samples[i].x, ts[i])[0])
                          for i in range(len(traj))])
    f_line = np.concatenate([[0.0], np.cumsum(
        np.diff(ts) * 0.5 * (integrand[1:] + integrand[:-1]))])

    frozen = bool(np.max(np.abs(xs - xs[0])) < 1e-12)
    if frozen:
        # every x sits on its own frozen extremal; the line integral is zero
        F = lambda x, lam: c * (y0 - x)
        if x_grid is None:
            x_grid = np.linspace(x0[0] - 1.0, x0[0] + 1.0, 101)
    else:
        d = np.diff(xs)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("extremal is not monotone in x; cannot parameterize "
                             "the line integral by x on this time window")
        order = np.argsort(xs)
        xs_sorted = xs[order]
        line_sorted = f_line[order]
        F = lambda x, lam: float(np.interp(x, xs_sorted, line_sorted)) + c * (y0 - x)
        if x_grid is None:
            x_grid = np.linspace(xs_sorted[0], xs_sorted[-1], 101)
    if lam_grid is None:
        lam_grid = prob.lam_b + np.linspace(0.0, 2.0, 101)

    sol = straightening_solve(prob, sys, F, x_grid, lam_grid, quad_tol)
    pde_residual = sol.residual_check()

    # controlling-function view of the solved U (time part h t restores the
    # energy level in the Hamilton-Jacobi reading)
    def ux_of(x, lam):
        h = _fd_step(x, 1e-6)
        d = (x + h) - (x - h)
        return (sol.evaluate(x + h, lam) - sol.evaluate(x - h, lam)) / d

    cf = ControllingFunction(
        1,
        u=lambda x, lam, t: sol.evaluate(x[0], lam[0]) + prob.h * t,
        ux=lambda x, lam, t: np.array([ux_of(x[0], lam[0])]),
        ulam=lambda x, lam, t: np.array([sol.ulam(x[0], lam[0])]),
        ut=lambda x, lam, t: prob.h,
    )
    spec = MappingSpec("Std116", cf)

    # mapped motion on a subsample of the extremal
    idx = np.unique(np.linspace(0, len(traj) - 1, 41).astype(int))
    ys, mus = [], []
    for i in idx:
        s = traj.samples[i]
        ys.append(s.x[0] + sol.ulam(s.x[0], s.lam[0]))
        mus.append(s.lam[0] - ux_of(s.x[0], s.lam[0]))
    ys = np.array(ys)
    mus = np.array(mus)
    mu_defect = float(np.max(np.abs(mus - c)))
    ydots = np.gradient(ys, ts[idx])
    ydot_max_err = float(np.max(np.abs(ydots - a)))

    pts = [traj.samples[i] for i in idx[:: max(1, len(idx) // 8)]]
    hj = hj_residual_U(cf, lambda y, mu, t: a * float(mu[0]), spec, pts)

    note = (f"boundary U(x, lam_b)=0 imposed at lam_b={prob.lam_b} "
            "(reference multiplier; identity-map limit)")
    return ConstantFieldReport(solution=sol, traj=traj, f_line=f_line,
                               pde_residual_max=pde_residual,
                               ydot_max_err=ydot_max_err,
                               mu_defect=mu_defect,
                               hj_residual=float(hj),
                               energy_mismatch=energy_mismatch,
                               boundary_note=note)
