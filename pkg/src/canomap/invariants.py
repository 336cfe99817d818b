"""Independent verifiers of canonicity and variational invariance.

None of these reuse the differential canonicity criterion from `mapping`;
they check the same claims through different mathematics — the symplectic
2-form, loop integrals of lam dx - H dt, the action function, pointwise
Hamilton-Jacobi residuals, and the potential that separates two action
integrals.  Agreement between the two routes is itself one of the tested
invariants.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .phasecore import (DynamicSystem, PhaseState, Trajectory,
                        _central_diff_x)
from .hamilton import canonical_rhs, hamiltonian, integrate
from .mapping import MappingSpec, apply_map

__all__ = [
    "symplectic_test",
    "LoopEnsemble",
    "circle_loop",
    "flow_loop",
    "poincare_cartan_loop",
    "ActionRecord",
    "action_function",
    "HJResult",
    "hj_residual_U",
    "hj_residual_H",
    "controlling_potential",
]

_trapz = getattr(np, "trapezoid", None) or np.trapz


def symplectic_test(mapping, s: PhaseState, h_scale: float = 1e-6) -> float:
    """Max-norm defect ||J^T I J - I|| of the mapping's FD Jacobian at s.

    `mapping` is either a MappingSpec or a callable (x, lam) -> (y, mu);
    J is the 2n x 2n central-difference Jacobian of the stacked map and
    I the standard symplectic matrix [[0, E], [-E, 0]].
    """
    n = s.n
    if isinstance(mapping, MappingSpec):
        t = s.t

        def fwd(x, lam):
            return apply_map(mapping, PhaseState(x, lam, t))
    else:
        fwd = mapping

    def stacked(z):
        y, mu = fwd(z[:n], z[n:])
        return np.concatenate([np.atleast_1d(np.asarray(y, dtype=float)),
                               np.atleast_1d(np.asarray(mu, dtype=float))])

    J = _central_diff_x(stacked, s.z(), h_scale)
    E = np.eye(n)
    I = np.block([[np.zeros((n, n)), E], [-E, np.zeros((n, n))]])
    return float(np.max(np.abs(J.T @ I @ J - I)))


# ---------------------------------------------------------------------
# Loop integrals
# ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LoopEnsemble:
    """A closed polygonal loop at t0 plus its images under the flow."""

    loop0: tuple               # PhaseState vertices, last = first
    flowed: tuple              # tuple of loops at later times

    def __post_init__(self):
        for loop in (self.loop0, *self.flowed):
            if len(loop) < 2:
                raise ValueError("a loop needs at least a closing edge")
            first, last = loop[0], loop[-1]
            if not (np.array_equal(first.x, last.x) and np.array_equal(first.lam, last.lam)):
                raise ValueError("loop is not closed (first and last vertices differ)")
            ts = {v.t for v in loop}
            if len(ts) != 1:
                raise ValueError("loop vertices must share a common time")


def circle_loop(center: PhaseState, radius: float, M: int) -> tuple:
    """Closed M-gon inscribed in the (x, lam) circle around `center` (n=1)."""
    if center.n != 1:
        raise ValueError("circle_loop is defined for n=1")
    if M < 3:
        raise ValueError("need at least 3 vertices")
    theta = 2.0 * np.pi * np.arange(M) / M
    verts = [PhaseState([center.x[0] + radius * np.cos(a)],
                        [center.lam[0] + radius * np.sin(a)], center.t)
             for a in theta]
    verts.append(verts[0])
    return tuple(verts)


def flow_loop(sys: DynamicSystem, loop0: tuple, t_targets: Sequence[float],
              step: float) -> LoopEnsemble:
    """Flow every vertex of loop0 to each target time; loops stay closed
    by construction (the shared first/last vertex is integrated once)."""
    flowed = []
    for t1 in t_targets:
        imgs = [integrate(sys, v, t1, step).samples[-1] for v in loop0[:-1]]
        imgs.append(imgs[0])
        flowed.append(tuple(imgs))
    return LoopEnsemble(loop0=tuple(loop0), flowed=tuple(flowed))


def _loop_integral(sys: DynamicSystem, loop, richardson: bool) -> float:
    """Trapezoidal ∮ lam·dx − H·dt over the polygon's vertices."""
    lams = np.array([v.lam for v in loop])
    xs = np.array([v.x for v in loop])
    ts = np.array([v.t for v in loop])
    hs = np.array([hamiltonian(sys, v) for v in loop])

    def trapz(sl):
        lam_mid = 0.5 * (lams[sl][1:] + lams[sl][:-1])
        h_mid = 0.5 * (hs[sl][1:] + hs[sl][:-1])
        dx = np.diff(xs[sl], axis=0)
        dt = np.diff(ts[sl])
        return float(np.sum(lam_mid * dx) - np.sum(h_mid * dt))

    full = trapz(slice(None))
    if not richardson:
        return full
    if (len(loop) - 1) % 2:
        raise ValueError("Richardson refinement needs an even vertex count")
    coarse = trapz(slice(None, None, 2))
    return (4.0 * full - coarse) / 3.0


def poincare_cartan_loop(sys: DynamicSystem, ens: LoopEnsemble,
                         richardson: bool = False) -> float:
    """Max drift of ∮ lam·dx − H·dt across the ensemble's flowed loops.

    On constant-time loops the H term drops out (dt = 0 edge-wise), so the
    integral reduces to the oriented phase-plane area enclosed.  Loops with
    fewer than 8 distinct vertices are rejected as too coarse to quadrature.
    """
    for loop in (ens.loop0, *ens.flowed):
        if len(loop) - 1 < 8:
            raise ValueError("loop with <8 vertices: quadrature too coarse")
    base = _loop_integral(sys, ens.loop0, richardson)
    drifts = [abs(_loop_integral(sys, loop, richardson) - base) for loop in ens.flowed]
    return float(max(drifts)) if drifts else 0.0


# ---------------------------------------------------------------------
# Action function
# ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ActionRecord:
    S: float                   # ∫ L dt along the trajectory
    dS_series: np.ndarray      # per-interval lam·dx − H·dt increments
    hj_residual: float         # max |−H + lam·f| at samples


def action_function(sys: DynamicSystem, traj: Trajectory) -> ActionRecord:
    """Action along an extremal: S = ∫ lam·(xdot − f) dt (≈ 0 on extremals).

    dS_series carries the trapezoidal increments of lam·dx − H·dt, and the
    Hamilton-Jacobi residual substitutes S_x = lam, S_t = −H at the samples,
    collapsing to |−H + lam·f| — zero in exact arithmetic, so the returned
    value measures pure numerics.
    """
    ts = traj.times()
    xs = traj.xs()
    lams = traj.lams()
    L = np.empty(len(traj))
    hs = np.empty(len(traj))
    hj = 0.0
    for i, s in enumerate(traj):
        xdot, _ = canonical_rhs(sys, s)
        L[i] = float(np.dot(s.lam, xdot - sys.f_at(s.x, s.t)))
        hs[i] = hamiltonian(sys, s)
        hj = max(hj, abs(-hs[i] + float(np.dot(s.lam, sys.f_at(s.x, s.t)))))
    S = float(_trapz(L, ts))
    lam_mid = 0.5 * (lams[1:] + lams[:-1])
    h_mid = 0.5 * (hs[1:] + hs[:-1])
    dS = np.sum(lam_mid * np.diff(xs, axis=0), axis=1) - h_mid * np.diff(ts)
    return ActionRecord(S=S, dS_series=dS, hj_residual=float(hj))


# ---------------------------------------------------------------------
# Hamilton-Jacobi residuals
# ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HJResult:
    max_residual: float
    series: np.ndarray

    def __float__(self):
        return self.max_residual


def hj_residual_U(cf, G: Callable, spec: MappingSpec,
                  points: Sequence[PhaseState]) -> HJResult:
    """Pointwise residual |U_t − G(x + U_lam, lam − U_x, t)| (Std116 image).

    G is the Hamiltonian in the new variables, called as G(y, mu, t).
    """
    if spec.variant != "Std116":
        raise ValueError("hj_residual_U is defined for the Std116 variant")
    if not points:
        raise ValueError("points must be nonempty")
    vals = []
    for s in points:
        y, mu = apply_map(spec, s)
        vals.append(abs(cf.ut_at(s) - float(G(y, mu, s.t))))
    series = np.array(vals)
    return HJResult(float(np.max(series)), series)


def hj_residual_H(cf, sys: DynamicSystem, points: Sequence[PhaseState]) -> HJResult:
    """Pointwise residual |U_t + lam·f(x, t)| (old-variable Hamiltonian)."""
    if not points:
        raise ValueError("points must be nonempty")
    vals = [abs(cf.ut_at(s) + float(np.dot(s.lam, sys.f_at(s.x, s.t)))) for s in points]
    series = np.array(vals)
    return HJResult(float(np.max(series)), series)


# ---------------------------------------------------------------------
# Controlling potential
# ---------------------------------------------------------------------

def controlling_potential(sys_old: DynamicSystem, sys_new: DynamicSystem,
                          traj_old: Trajectory, traj_new: Trajectory) -> np.ndarray:
    """Cumulative ∫ (lam·xdot − mu·ydot + G − H) dt on the shared grid.

    traj_new must sample the image motion on exactly traj_old's time grid;
    G and H are the respective lifted Hamiltonians.  For a true canonical
    pair the integrand vanishes identically and the series stays at rounding
    level; any systematic growth is the potential separating the two action
    integrals.
    """
    if len(traj_old) != len(traj_new):
        raise ValueError("mismatched grids: trajectories differ in length")
    t_old = traj_old.times()
    t_new = traj_new.times()
    if float(np.max(np.abs(t_old - t_new))) > 1e-9:
        raise ValueError("mismatched grids: sample times differ")
    integrand = np.empty(len(traj_old))
    for i, (so, sn) in enumerate(zip(traj_old, traj_new)):
        xdot = sys_old.f_at(so.x, so.t)
        ydot = sys_new.f_at(sn.x, sn.t)
        H = float(np.dot(so.lam, xdot))
        G = float(np.dot(sn.lam, ydot))
        integrand[i] = float(np.dot(so.lam, xdot) - np.dot(sn.lam, ydot) + G - H)
    acc = np.concatenate([[0.0],
                          np.cumsum(np.diff(t_old) * 0.5 * (integrand[1:] + integrand[:-1]))])
    return acc
