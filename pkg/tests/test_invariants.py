"""Symplectic defect, loop integrals, action, HJ residuals, potential."""
import numpy as np
import pytest

from canomap.phasecore import (ControllingFunction, DynamicSystem, PhaseState,
                               Trajectory, zero_controlling_function)
from canomap.hamilton import integrate
from canomap.mapping import MappingSpec
from canomap.invariants import (action_function, circle_loop,
                                controlling_potential, flow_loop,
                                hj_residual_H, hj_residual_U,
                                poincare_cartan_loop, symplectic_test)


def linear_system(a=1.0):
    return DynamicSystem(dim=1, f=lambda x, t: a * x,
                         jac=lambda x, t: a * np.eye(1), autonomous=True)


def null_system(n=1):
    return DynamicSystem(dim=n, f=lambda x, t: np.zeros(n),
                         jac=lambda x, t: np.zeros((n, n)), autonomous=True)


def bilinear_cf(c):
    n = 1
    return ControllingFunction(
        dim=n,
        u=lambda x, lam, t: c * float(x @ lam),
        ux=lambda x, lam, t: c * lam,
        ulam=lambda x, lam, t: c * x,
        ut=lambda x, lam, t: 0.0,
        uxlam=lambda x, lam, t: c * np.eye(n),
        uxx=lambda x, lam, t: np.zeros((n, n)),
        ulamlam=lambda x, lam, t: np.zeros((n, n)),
        uxt=lambda x, lam, t: np.zeros(n),
        ulamt=lambda x, lam, t: np.zeros(n),
    )


# ---------------------------------------------------------------------
# symplectic defect
# ---------------------------------------------------------------------

def test_symplectic_identity_and_rotation_exact():
    s = PhaseState([0.7], [-1.3], 0.0)
    assert symplectic_test(lambda x, lam: (x, lam), s) == 0.0
    assert symplectic_test(lambda x, lam: (lam, -x), s) == 0.0


def test_symplectic_pure_stretch():
    s = PhaseState([0.7], [-1.3], 0.0)
    defect = symplectic_test(lambda x, lam: (2.0 * x, lam), s)
    assert defect == 1.0


def test_symplectic_mapping_spec_defects():
    s = PhaseState([1.0], [2.0], 0.0)
    assert symplectic_test(MappingSpec("Std116", zero_controlling_function(1)),
                           s) == 0.0
    # y = 1.1 x, mu = 0.9 lam: the product of stretches misses 1 by c^2
    d = symplectic_test(MappingSpec("Std116", bilinear_cf(0.1)), s)
    assert d == pytest.approx(0.01, rel=1e-6)
    # half-gradient variant scales both coordinates by 1 + c/2
    d = symplectic_test(MappingSpec("Symplectic119", bilinear_cf(0.1)), s)
    assert d == pytest.approx(1.05 ** 2 - 1.0, rel=1e-6)


# ---------------------------------------------------------------------
# loop integrals
# ---------------------------------------------------------------------

def test_loop_drift_null_field_is_zero():
    ens = flow_loop(null_system(), circle_loop(PhaseState([0.0], [0.0], 0.0),
                                               1.0, 16), [1.0], 1e-2)
    assert poincare_cartan_loop(null_system(), ens) == 0.0


def test_loop_drift_linear_field():
    sysl = linear_system()
    ens = flow_loop(sysl, circle_loop(PhaseState([1.0], [1.0], 0.0), 1.0, 256),
                    [1.0], 1e-2)
    assert poincare_cartan_loop(sysl, ens) < 1e-5


def test_loop_vertex_count_gate():
    sysn = null_system()
    ens7 = flow_loop(sysn, circle_loop(PhaseState([0.0], [0.0], 0.0), 1.0, 7),
                     [0.5], 1e-2)
    with pytest.raises(ValueError, match="too coarse"):
        poincare_cartan_loop(sysn, ens7)
    ens8 = flow_loop(sysn, circle_loop(PhaseState([0.0], [0.0], 0.0), 1.0, 8),
                     [0.5], 1e-2)
    assert poincare_cartan_loop(sysn, ens8) == 0.0


def test_loop_drift_quadratic_convergence():
    syss = DynamicSystem(dim=1, f=lambda x, t: np.sin(x),
                         jac=lambda x, t: np.cos(x).reshape(1, 1),
                         autonomous=True)
    center = PhaseState([1.0], [1.0], 0.0)
    drifts = {}
    for M in (64, 128):
        ens = flow_loop(syss, circle_loop(center, 1.0, M), [1.0], 1e-2)
        drifts[M] = poincare_cartan_loop(syss, ens)
    assert 3.2 < drifts[64] / drifts[128] < 4.8


def test_loop_richardson_refinement():
    syss = DynamicSystem(dim=1, f=lambda x, t: np.sin(x),
                         jac=lambda x, t: np.cos(x).reshape(1, 1),
                         autonomous=True)
    ens = flow_loop(syss, circle_loop(PhaseState([1.0], [1.0], 0.0), 1.0, 64),
                    [1.0], 1e-2)
    plain = poincare_cartan_loop(syss, ens)
    refined = poincare_cartan_loop(syss, ens, richardson=True)
    assert refined < plain / 50.0
    odd = flow_loop(syss, circle_loop(PhaseState([1.0], [1.0], 0.0), 1.0, 9),
                    [1.0], 1e-2)
    with pytest.raises(ValueError, match="even vertex count"):
        poincare_cartan_loop(syss, odd, richardson=True)


def test_circle_loop_validated():
    with pytest.raises(ValueError, match="n=1"):
        circle_loop(PhaseState([0.0, 0.0], [0.0, 0.0], 0.0), 1.0, 16)
    with pytest.raises(ValueError, match="3 vertices"):
        circle_loop(PhaseState([0.0], [0.0], 0.0), 1.0, 2)


# ---------------------------------------------------------------------
# action function
# ---------------------------------------------------------------------

def test_action_vanishes_on_extremal():
    traj = integrate(linear_system(), PhaseState([1.0], [1.0], 0.0), 1.0, 1e-3)
    rec = action_function(linear_system(), traj)
    assert rec.S == 0.0
    assert rec.hj_residual == 0.0


def test_action_increments_null_field():
    traj = integrate(null_system(), PhaseState([2.0], [5.0], 0.0), 1.0, 1e-2)
    rec = action_function(null_system(), traj)
    assert np.all(rec.dS_series == 0.0)
    assert rec.S == 0.0


def test_action_increments_track_lam_dx():
    traj = integrate(linear_system(), PhaseState([1.0], [1.0], 0.0), 1.0, 1e-2)
    rec = action_function(linear_system(), traj)
    # each increment is lam dx - H dt ~ (1 - 1) dt at midpoint accuracy
    assert np.max(np.abs(rec.dS_series)) < 1e-5


# ---------------------------------------------------------------------
# Hamilton-Jacobi residuals
# ---------------------------------------------------------------------

def drive_cf(a):
    """U = a * lam * t for n=1."""
    return ControllingFunction(
        dim=1,
        u=lambda x, lam, t: a * float(lam[0]) * t,
        ux=lambda x, lam, t: np.zeros(1),
        ulam=lambda x, lam, t: np.array([a * t]),
        ut=lambda x, lam, t: a * float(lam[0]),
        uxlam=lambda x, lam, t: np.zeros((1, 1)),
        uxx=lambda x, lam, t: np.zeros((1, 1)),
        ulamlam=lambda x, lam, t: np.zeros((1, 1)),
        uxt=lambda x, lam, t: np.zeros(1),
        ulamt=lambda x, lam, t: np.array([a]),
    )


def test_hj_image_side_matches_new_hamiltonian():
    a = 0.4
    cf = drive_cf(a)
    spec = MappingSpec("Std116", cf)
    points = [PhaseState([x], [lam], t)
              for x, lam, t in [(1.0, 2.0, 0.0), (-0.5, 0.3, 0.7), (2.0, -1.0, 1.5)]]
    res = hj_residual_U(cf, lambda y, mu, t: a * mu[0], spec, points)
    assert float(res) == 0.0


def test_hj_image_side_constant_drive():
    cf = ControllingFunction(
        dim=1,
        u=lambda x, lam, t: t,
        ux=lambda x, lam, t: np.zeros(1),
        ulam=lambda x, lam, t: np.zeros(1),
        ut=lambda x, lam, t: 1.0,
        uxlam=lambda x, lam, t: np.zeros((1, 1)),
        uxx=lambda x, lam, t: np.zeros((1, 1)),
        ulamlam=lambda x, lam, t: np.zeros((1, 1)),
        uxt=lambda x, lam, t: np.zeros(1),
        ulamt=lambda x, lam, t: np.zeros(1),
    )
    res = hj_residual_U(cf, lambda y, mu, t: 0.0,
                        MappingSpec("Std116", cf),
                        [PhaseState([1.0], [1.0], 0.5)])
    assert res.max_residual == 1.0


def test_hj_image_side_validated():
    cf = drive_cf(0.4)
    with pytest.raises(ValueError, match="Std116"):
        hj_residual_U(cf, lambda y, mu, t: 0.0, MappingSpec("Cross220", cf),
                      [PhaseState([1.0], [1.0], 0.0)])
    with pytest.raises(ValueError, match="nonempty"):
        hj_residual_U(cf, lambda y, mu, t: 0.0, MappingSpec("Std116", cf), [])


def test_hj_old_side_exact_solution():
    # U = -lam x t satisfies U_t = -lam f for f = x at every point
    cf = ControllingFunction(
        dim=1,
        u=lambda x, lam, t: -float(lam[0] * x[0]) * t,
        ux=lambda x, lam, t: np.array([-lam[0] * t]),
        ulam=lambda x, lam, t: np.array([-x[0] * t]),
        ut=lambda x, lam, t: -float(lam[0] * x[0]),
        uxlam=lambda x, lam, t: np.array([[-t]]),
        uxx=lambda x, lam, t: np.zeros((1, 1)),
        ulamlam=lambda x, lam, t: np.zeros((1, 1)),
        uxt=lambda x, lam, t: np.array([-lam[0]]),
        ulamt=lambda x, lam, t: np.array([-x[0]]),
    )
    points = [PhaseState([x], [lam], t)
              for x, lam, t in [(1.0, 1.0, 0.0), (2.0, -0.5, 1.0), (0.3, 4.0, 2.5)]]
    res = hj_residual_H(cf, linear_system(), points)
    assert res.max_residual == 0.0
    assert np.all(res.series == 0.0)


def test_hj_old_side_energy_form():
    # freezing U_t at -H(0) leaves exactly the energy drift as residual
    sysl = linear_system()
    traj = integrate(sysl, PhaseState([1.0], [2.0], 0.0), 1.0, 1e-3)
    h0 = 2.0
    cf = ControllingFunction(
        dim=1,
        u=lambda x, lam, t: -h0 * t,
        ux=lambda x, lam, t: np.zeros(1),
        ulam=lambda x, lam, t: np.zeros(1),
        ut=lambda x, lam, t: -h0,
        uxlam=lambda x, lam, t: np.zeros((1, 1)),
        uxx=lambda x, lam, t: np.zeros((1, 1)),
        ulamlam=lambda x, lam, t: np.zeros((1, 1)),
        uxt=lambda x, lam, t: np.zeros(1),
        ulamt=lambda x, lam, t: np.zeros(1),
    )
    res = hj_residual_H(cf, sysl, list(traj.samples))
    assert res.max_residual < 1e-8


# ---------------------------------------------------------------------
# controlling potential
# ---------------------------------------------------------------------

def test_potential_identity_pair_exact_zero():
    sysl = linear_system()
    traj = integrate(sysl, PhaseState([1.0], [1.0], 0.0), 1.0, 1e-2)
    series = controlling_potential(sysl, sysl, traj, traj)
    assert np.all(series == 0.0)


def test_potential_straightened_pair():
    # old motion x = e^t with lam = 0.5 e^{-t}; image y = y0 + t, mu = 0.5
    sys_old = linear_system()
    traj_old = integrate(sys_old, PhaseState([1.0], [0.5], 0.0), 1.0, 1e-3)
    sys_new = DynamicSystem(dim=1, f=lambda x, t: np.ones(1),
                            jac=lambda x, t: np.zeros((1, 1)), autonomous=True)
    y0, c = 2.0, 0.5
    ts = traj_old.times()
    samples = tuple(PhaseState([y0 + t], [c], t) for t in ts)
    traj_new = Trajectory(samples=samples, step=traj_old.step, meta={})
    series = controlling_potential(sys_old, sys_new, traj_old, traj_new)
    assert np.max(np.abs(series)) < 1e-12
    # cross-check against the action gap computed the long way:
    # cum int lam dx minus c (y - y0), both ~ 0.5 t here
    xs = traj_old.xs()[:, 0]
    lams = traj_old.lams()[:, 0]
    lam_dx = np.concatenate([[0.0],
                             np.cumsum(0.5 * (lams[1:] + lams[:-1]) * np.diff(xs))])
    gap = lam_dx - c * (traj_new.xs()[:, 0] - y0)
    assert np.max(np.abs(series - gap)) < 1e-6


def test_potential_mismatched_grids():
    sysl = linear_system()
    traj = integrate(sysl, PhaseState([1.0], [1.0], 0.0), 1.0, 1e-2)
    short = integrate(sysl, PhaseState([1.0], [1.0], 0.0), 0.5, 1e-2)
    with pytest.raises(ValueError, match="mismatched grids"):
        controlling_potential(sysl, sysl, traj, short)
    shifted = Trajectory(samples=tuple(PhaseState(s.x, s.lam, s.t + 1e-3)
                                       for s in traj.samples),
                         step=traj.step, meta={})
    with pytest.raises(ValueError, match="mismatched grids"):
        controlling_potential(sysl, sysl, traj, shifted)
