"""Controlled mappings of extended phase space and their canonicity.

A controlling function U(x, lam, t) drives a change of variables; the
standard form sends x to y = x + U_lam and lam to mu = lam - U_x, with sign
and cross variants alongside.  Whether such a mapping is canonical is
checked here as a numerical residual of the defining differential equality
restricted to a flow, and the initial multiplier component lam0_k (or the
whole U_lam profile) can be synthesized so the residual vanishes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .phasecore import (ControllingFunction, DynamicSystem, PhaseState,
                        Trajectory, _central_diff_t, _central_diff_x, _fd_step)
from .hamilton import canonical_rhs, fundamental_matrix

__all__ = [
    "VARIANTS",
    "MappingSpec",
    "apply_map",
    "jacobian_condition",
    "CanonicityReport",
    "canonicity_residual",
    "canonicity_residual_points",
    "Lambda0Result",
    "DegeneratePivotError",
    "RootNotFoundError",
    "ConvergenceError",
    "synthesize_lambda0",
    "synthesize_lambda0_cross",
    "UlamSynthesis",
    "synthesize_ulam",
    "invert_map",
]

VARIANTS = ("Std116", "Symplectic119", "SignVariant218", "SignVariant219", "Cross220")


class DegeneratePivotError(ValueError):
    """The chosen component has no effect on the canonicity equation."""


class RootNotFoundError(RuntimeError):
    """The scalar canonicity equation has no root in the search bracket."""


class ConvergenceError(RuntimeError):
    """Newton iteration failed to meet tolerance."""


@dataclass(frozen=True, eq=False)
class MappingSpec:
    """Mapping variant + controlling function.

    signs applies to the sign variants; Std116 is SignVariant218 with
    signs (+1, -1), and that pairing is enforced.
    """

    variant: str
    cf: ControllingFunction
    signs: tuple = (1, -1)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        signs = tuple(int(s) for s in self.signs)
        if len(signs) != 2 or any(s not in (-1, 1) for s in signs):
            raise ValueError("signs must be a pair drawn from {+1, -1}")
        if self.variant == "Std116" and signs != (1, -1):
            raise ValueError("Std116 is the (+1, -1) sign assignment; pass SignVariant218 to vary it")
        object.__setattr__(self, "signs", signs)


def apply_map(spec: MappingSpec, s: PhaseState):
    """Forward image (y, mu) of the phase point under the chosen variant."""
    cf = spec.cf
    if s.n != cf.dim:
        raise ValueError(f"dimension mismatch: controlling function n={cf.dim}, state n={s.n}")
    s1, s2 = spec.signs
    v = spec.variant
    if v == "Std116":
        return s.x + cf.ulam_at(s), s.lam - cf.ux_at(s)
    if v == "Symplectic119":
        # Half-gradient form; both Jacobian blocks share one determinant.
        return s.x + 0.5 * cf.ulam_at(s), s.lam + 0.5 * cf.ux_at(s)
    if v == "SignVariant218":
        return s.x + s1 * cf.ulam_at(s), s.lam + s2 * cf.ux_at(s)
    if v == "SignVariant219":
        return s.x + s1 * cf.ux_at(s), s.lam + s2 * cf.ulam_at(s)
    # Cross220
    return s.x + cf.ux_at(s), s.lam - cf.ulam_at(s)


def jacobian_condition(spec: MappingSpec, s: PhaseState):
    """(det dy/dx, det dmu/dlam) for the variant's defining blocks.

    Symplectic119 reports 1 + det(U_xlam)/4 for both entries — the shared
    closed form of its equal Jacobians.
    """
    cf = spec.cf
    s1, s2 = spec.signs
    E = np.eye(cf.dim)
    v = spec.variant
    if v == "Symplectic119":
        d = 1.0 + 0.25 * float(np.linalg.det(cf.uxlam_at(s)))
        return d, d
    if v in ("Std116", "SignVariant218"):
        M = cf.uxlam_at(s)
        return (float(np.linalg.det(E + s1 * M.T)),
                float(np.linalg.det(E + s2 * M)))
    if v == "SignVariant219":
        return (float(np.linalg.det(E + s1 * cf.uxx_at(s))),
                float(np.linalg.det(E + s2 * cf.ulamlam_at(s))))
    # Cross220
    return (float(np.linalg.det(E + cf.uxx_at(s))),
            float(np.linalg.det(E - cf.ulamlam_at(s))))


# ---------------------------------------------------------------------
# Canonicity residuals along a flow
# ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CanonicityReport:
    max_residual: float        # max scaled |r| over samples
    residual_series: np.ndarray  # raw signed residuals
    jacobian_min_abs_det: float
    verdict: str               # canonical | violated | degenerate
    det_y_series: np.ndarray
    det_mu_series: np.ndarray
    times: np.ndarray


def _udot_lam(cf: ControllingFunction, s: PhaseState, xdot, lamdot):
    """Total time derivative of U_lam restricted to the flow."""
    return cf.uxlam_at(s).T @ xdot + cf.ulamlam_at(s) @ lamdot + cf.ulamt_at(s)


def _udot_x(cf: ControllingFunction, s: PhaseState, xdot, lamdot):
    """Total time derivative of U_x restricted to the flow."""
    return cf.uxx_at(s) @ xdot + cf.uxlam_at(s) @ lamdot + cf.uxt_at(s)


def _residual_at(sys, spec, s):
    cf = spec.cf
    xdot, lamdot = canonical_rhs(sys, s)
    ux = cf.ux_at(s)
    ulam = cf.ulam_at(s)
    if spec.variant == "Std116":
        r = float((ux - s.lam) @ _udot_lam(cf, s, xdot, lamdot) - ulam @ lamdot)
    else:  # Cross220
        r = float((s.lam - ulam) @ _udot_x(cf, s, xdot, lamdot)
                  - (ulam - ux) @ xdot + ulam @ lamdot)
    scale = max(1.0, float(np.linalg.norm(s.lam)) * float(np.linalg.norm(ulam)))
    return r, scale


def _canonicity_over(sys, spec, states, tol, degenerate_tol):
    if spec.variant not in ("Std116", "Cross220"):
        raise ValueError(
            f"canonicity criterion is defined for Std116 and Cross220, not {spec.variant!r}")
    raws, scaled, dys, dmus, ts = [], [], [], [], []
    for s in states:
        r, scale = _residual_at(sys, spec, s)
        raws.append(r)
        scaled.append(abs(r) / scale)
        dy, dmu = jacobian_condition(spec, s)
        dys.append(dy)
        dmus.append(dmu)
        ts.append(s.t)
    max_residual = float(np.max(scaled))
    jac_min = float(np.min(np.abs(np.concatenate([dys, dmus]))))
    if jac_min < degenerate_tol:
        verdict = "degenerate"
    elif max_residual < tol:
        verdict = "canonical"
    else:
        verdict = "violated"
    return CanonicityReport(max_residual=max_residual,
                            residual_series=np.array(raws),
                            jacobian_min_abs_det=jac_min,
                            verdict=verdict,
                            det_y_series=np.array(dys),
                            det_mu_series=np.array(dmus),
                            times=np.array(ts))


def canonicity_residual(sys: DynamicSystem, spec: MappingSpec, traj: Trajectory,
                        tol: float = 1e-6, degenerate_tol: float = 1e-12) -> CanonicityReport:
    """Residual of the canonicity equality along an integrated trajectory.

    Std116 checks (U_x - lam) . Udot_lam - U_lam . lamdot; Cross220 checks
    (lam - U_lam) . Udot_x - (U_lam - U_x) . xdot + U_lam . lamdot, with all
    flow derivatives substituted from the canonical pair.  The scaled max
    residual is |r| / max(1, |lam||U_lam|) per sample.
    """
    return _canonicity_over(sys, spec, list(traj), tol, degenerate_tol)


def canonicity_residual_points(sys: DynamicSystem, spec: MappingSpec,
                               points: Sequence[PhaseState],
                               tol: float = 1e-6, degenerate_tol: float = 1e-12) -> CanonicityReport:
    """Off-flow variant of canonicity_residual over an arbitrary point cloud.

    Each point is treated as an initial condition: flow derivatives come
    from the canonical right-hand side at the point itself.
    """
    if not points:
        raise ValueError("points must be nonempty")
    return _canonicity_over(sys, spec, list(points), tol, degenerate_tol)


# ---------------------------------------------------------------------
# Initial-multiplier synthesis
# ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Lambda0Result:
    value: float
    status: str          # "ok" | "indeterminate"
    g_residual: float    # |g(value)|
    lam0: np.ndarray     # full multiplier vector with component k replaced
    k: int

    def __float__(self):
        return self.value


_G_TOL = 1e-10


def _g_std(sys, cf, x0, lam0, k, t0):
    def g(lam_k):
        lam = lam0.copy()
        lam[k] = lam_k
        s = PhaseState(x0, lam, t0)
        xdot, lamdot = canonical_rhs(sys, s)
        ud = _udot_lam(cf, s, xdot, lamdot)
        C = ud - sys.jac_at(x0, t0) @ cf.ulam_at(s)
        return float(C @ lam - cf.ux_at(s) @ ud), C
    return g


def _g_cross(sys, cf, x0, lam0, k, t0):
    def g(lam_k):
        lam = lam0.copy()
        lam[k] = lam_k
        s = PhaseState(x0, lam, t0)
        xdot, lamdot = canonical_rhs(sys, s)
        ud = _udot_x(cf, s, xdot, lamdot)
        ulam = cf.ulam_at(s)
        D = ud - sys.jac_at(x0, t0) @ ulam
        return float(D @ lam - ulam @ ud - (ulam - cf.ux_at(s)) @ xdot), D
    return g


def _with_component(lam0, k, value):
    out = lam0.copy()
    out[k] = value
    return out


def _paper_initializer(gfun, lam0, k, guess):
    """Closed-formula initial value when the pivot coefficient is usable."""
    g_at, coeff = gfun(guess)
    if abs(coeff[k]) <= 1e-10:
        return guess
    # at the guess state the equation reads coeff . lam0 = rhs_scalar
    rhs = coeff @ _with_component(lam0, k, guess) - g_at
    partial = sum(coeff[i] * lam0[i] for i in range(lam0.size) if i != k)
    return float((rhs - partial) / coeff[k])


def _solve_scalar(gfun, lam0, k, guess):
    """Root of g(lam0_k) = 0 with degeneracy detection.

    Order of business: accept the initializer if it is already a root;
    probe two symmetric stencils to detect a pivot with no effect; bracket
    geometrically and bisect; polish (or rescue double roots) with damped
    Newton.
    """
    def g(v):
        return gfun(v)[0]

    init = _paper_initializer(gfun, lam0, k, guess)
    g0 = g(init)
    scale = max(1.0, abs(init))
    probes = []
    for d in (0.5 * scale, 100.0 * scale):
        probes.append((g(init + d), g(init - d)))
    if abs(g0) < _G_TOL:
        flat = all(abs(gp) < _G_TOL and abs(gm) < _G_TOL for gp, gm in probes)
        status = "indeterminate" if flat else "ok"
        return init, status, abs(g0)
    if all(abs(gp - gm) <= 1e-12 * max(1.0, abs(g0)) for gp, gm in probes):
        raise DegeneratePivotError(
            f"pivot index degenerate, choose another k (g stays at {g0:.3e})")

    # geometric bracket expansion around the initializer
    root = None
    for w in (1.0 * scale, 10.0 * scale, 100.0 * scale, 1000.0 * scale):
        a, b = init - w, init + w
        ga, gb = g(a), g(b)
        if abs(ga) < _G_TOL:
            root = a
            break
        if abs(gb) < _G_TOL:
            root = b
            break
        if ga * g0 < 0:
            root = _bisect(g, a, init, ga, g0)
            break
        if gb * g0 < 0:
            root = _bisect(g, init, b, g0, gb)
            break

    if root is None:
        root = _newton(g, init)
        if root is None or abs(g(root)) > _G_TOL:
            raise RootNotFoundError(
                "no sign change in bracket [-1e3, 1e3] around the initializer "
                f"and Newton fallback failed (g(init)={g0:.3e})")
    else:
        polished = _newton(g, root)
        if polished is not None and abs(g(polished)) <= abs(g(root)):
            root = polished
    return float(root), "ok", abs(g(root))


def _bisect(g, a, b, ga, gb, iters=200):
    for _ in range(iters):
        m = 0.5 * (a + b)
        gm = g(m)
        if gm == 0.0 or (b - a) < 1e-14 * max(1.0, abs(m)):
            return m
        if ga * gm < 0:
            b, gb = m, gm
        else:
            a, ga = m, gm
    return 0.5 * (a + b)


def _newton(g, x, iters=60):
    for _ in range(iters):
        gx = g(x)
        if abs(gx) < 1e-14:
            return x
        h = _fd_step(x)
        d = (x + h) - (x - h)
        slope = (g(x + h) - g(x - h)) / d
        if slope == 0.0 or not np.isfinite(slope):
            return None
        step = gx / slope
        x_new = x - step
        if not np.isfinite(x_new):
            return None
        if abs(x_new - x) < 1e-15 * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


def _synthesize(sys, cf, x0, lam0, k, t0, builder):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
    if x0.size != sys.dim or lam0.size != sys.dim:
        raise ValueError("x0 and lam0 must have the system dimension")
    if not 0 <= k < sys.dim:
        raise ValueError(f"pivot index k={k} out of range for n={sys.dim}")
    gfun = builder(sys, cf, x0, lam0, k, t0)
    value, status, g_res = _solve_scalar(gfun, lam0, k, float(lam0[k]))
    return Lambda0Result(value=value, status=status, g_residual=g_res,
                         lam0=_with_component(lam0, k, value), k=k)


def synthesize_lambda0(sys: DynamicSystem, cf: ControllingFunction, x0, lam0,
                       k: int, t0: float = 0.0) -> Lambda0Result:
    """Choose lam0_k so the standard-variant canonicity equality holds at t0.

    lam0 supplies the fixed components; its k-th entry serves only as the
    initial guess for the scalar root solve.  U_lam generally depends on
    lam, so the closed formula is an initializer, not the answer.
    """
    return _synthesize(sys, cf, x0, lam0, k, t0, _g_std)


def synthesize_lambda0_cross(sys: DynamicSystem, cf: ControllingFunction, x0, lam0,
                             k: int, t0: float = 0.0) -> Lambda0Result:
    """Cross-variant analogue of synthesize_lambda0."""
    return _synthesize(sys, cf, x0, lam0, k, t0, _g_cross)


# ---------------------------------------------------------------------
# U_lam profile synthesis (linear-in-lam controlling functions)
# ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UlamSynthesis:
    cf: ControllingFunction
    ulam_series: np.ndarray    # U_lam at each trajectory sample
    ortho_defect: np.ndarray   # |U_x . Udot_lam| per sample
    propagator: object         # FundamentalMatrix, kind D


def synthesize_ulam(sys: DynamicSystem, traj: Trajectory, ulam0,
                    u_xt=None) -> UlamSynthesis:
    """Build U(x, lam, t) = (D(t) ulam0) . lam + u(x, t) along a trajectory.

    D propagates the initial gradient ulam0, so U_lam = D ulam0 satisfies
    Udot_lam = A U_lam along the flow by construction; the free scalar
    u(x, t) (default 0) carries all of U_x.  The orthogonality defect
    |U_x . Udot_lam| per sample measures the remaining obstruction to
    canonicity.
    """
    n = sys.dim
    ulam0 = np.atleast_1d(np.asarray(ulam0, dtype=float))
    if ulam0.size != n:
        raise ValueError("ulam0 must have the system dimension")
    if not np.all(np.isfinite(ulam0)):
        raise ValueError("ulam0 must be finite")
    D = fundamental_matrix(sys, traj, kind="D")

    def dvec(t):
        return D.value_at(t) @ ulam0

    if u_xt is None:
        u_part = lambda x, t: 0.0
        ux_part = lambda x, t: np.zeros(n)
        uxx_part = lambda x, t: np.zeros((n, n))
        uxt_part = lambda x, t: np.zeros(n)
    else:
        u_part = lambda x, t: float(u_xt(x, t))
        ux_part = lambda x, t: _central_diff_x(lambda xx: u_xt(xx, t), x).reshape(n)
        uxx_part = lambda x, t: _central_diff_x(
            lambda xx: ux_part(xx, t), x, 1e-4).reshape(n, n)
        uxt_part = lambda x, t: _central_diff_t(
            lambda tt: ux_part(x, tt), t, 1e-4).reshape(n)

    zeros_nn = np.zeros((n, n))
    cf = ControllingFunction(
        n,
        u=lambda x, lam, t: float(dvec(t) @ lam) + u_part(x, t),
        ux=lambda x, lam, t: ux_part(x, t),
        ulam=lambda x, lam, t: dvec(t),
        ut=lambda x, lam, t: float((sys.jac_at(x, t) @ dvec(t)) @ lam)
            + (0.0 if u_xt is None else float(_central_diff_t(lambda tt: u_xt(x, tt), t))),
        uxlam=lambda x, lam, t: zeros_nn,
        uxx=lambda x, lam, t: uxx_part(x, t),
        ulamlam=lambda x, lam, t: zeros_nn,
        uxt=lambda x, lam, t: uxt_part(x, t),
        ulamt=lambda x, lam, t: sys.jac_at(x, t) @ dvec(t),
    )

    ulam_series = np.array([Dv @ ulam0 for Dv in D.values])
    defects = []
    for s, ul in zip(traj, ulam_series):
        udot = sys.jac_at(s.x, s.t) @ ul
        defects.append(abs(float(ux_part(s.x, s.t) @ udot)))
    return UlamSynthesis(cf=cf, ulam_series=ulam_series,
                         ortho_defect=np.array(defects), propagator=D)


# ---------------------------------------------------------------------
# Numerical inverse
# ---------------------------------------------------------------------

def invert_map(spec: MappingSpec, y, mu, t: float, x_init=None, lam_init=None):
    """Recover (x, lam) with apply_map(spec, (x, lam, t)) = (y, mu).

    Damped Newton on the stacked residual with an FD Jacobian; tolerance
    1e-12 on the max-norm, at most 50 iterations.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    n = spec.cf.dim
    target = np.concatenate([y, mu])

    def residual(z):
        yy, mm = apply_map(spec, PhaseState(z[:n], z[n:], t))
        return np.concatenate([yy, mm]) - target

    z = np.concatenate([
        np.atleast_1d(np.asarray(x_init, dtype=float)) if x_init is not None else y,
        np.atleast_1d(np.asarray(lam_init, dtype=float)) if lam_init is not None else mu,
    ])
    r = residual(z)
    for _ in range(50):
        if np.max(np.abs(r)) < 1e-12:
            return z[:n].copy(), z[n:].copy()
        J = _central_diff_x(residual, z)
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular FD Jacobian during inversion: {exc}")
        alpha = 1.0
        norm0 = np.max(np.abs(r))
        while alpha >= 1.0 / 64.0:
            z_try = z + alpha * delta
            r_try = residual(z_try)
            if np.max(np.abs(r_try)) < norm0:
                z, r = z_try, r_try
                break
            alpha *= 0.5
        else:
            raise ConvergenceError("damped Newton stalled while inverting the mapping")
    if np.max(np.abs(r)) < 1e-12:
        return z[:n].copy(), z[n:].copy()
    raise ConvergenceError(
        f"mapping inversion did not reach 1e-12 in 50 iterations (residual {np.max(np.abs(r)):.3e})")
