"""Hamiltonian lift, canonical flow, fundamental matrices, energy checks."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from canomap.phasecore import DomainError, DynamicSystem, PhaseState
from canomap.hamilton import (EnergyDriftReport, canonical_rhs, energy_drift,
                              fundamental_matrix, hamiltonian, integrate,
                              lagrangian, weierstrass_excess)
from canomap.scenarios import ballistic_system


def linear_system(n=1, a=1.0):
    return DynamicSystem(dim=n, f=lambda x, t: a * x,
                         jac=lambda x, t: a * np.eye(n), autonomous=True)


def rotation_field():
    """f = (x2, -x1): the Jacobian is antisymmetric, so transpose
    conventions in the fundamental matrices genuinely differ."""
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return DynamicSystem(dim=2, f=lambda x, t: A @ x,
                         jac=lambda x, t: A, autonomous=True)


# ---------------------------------------------------------------------
# hamiltonian / canonical_rhs
# ---------------------------------------------------------------------

def test_hamiltonian_values():
    assert hamiltonian(linear_system(), PhaseState([5.0], [0.0], 0.0)) == 0.0
    assert hamiltonian(linear_system(), PhaseState([3.0], [2.0], 0.0)) == 6.0
    # circular-orbit symmetry: the radial acceleration cancels exactly
    circ = PhaseState([0.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0], 0.0)
    assert hamiltonian(ballistic_system(1.0), circ) == 0.0


def test_hamiltonian_nonfinite_diagnostic():
    big = DynamicSystem(dim=1, f=lambda x, t: 1e200 * x, autonomous=True)
    with np.errstate(over="ignore"):
        with pytest.raises(DomainError, match="non-finite"):
            hamiltonian(big, PhaseState([1e200], [1e200], 0.0))


def test_canonical_rhs():
    const = DynamicSystem(dim=1, f=lambda x, t: np.ones(1),
                          jac=lambda x, t: np.zeros((1, 1)), autonomous=True)
    _, dlam = canonical_rhs(const, PhaseState([2.0], [3.0], 0.0))
    assert np.array_equal(dlam, [0.0])

    dx, dlam = canonical_rhs(linear_system(a=0.5), PhaseState([2.0], [3.0], 0.0))
    assert dx[0] == 1.0
    assert dlam[0] == -1.5

    _, dlam = canonical_rhs(ballistic_system(1.0),
                            PhaseState([0.3, 1.2, 0.9, 0.1],
                                       [0.5, -0.4, 0.7, 2.0], 0.0))
    assert dlam[3] == 0.0  # last column of the Jacobian is zero


# ---------------------------------------------------------------------
# integrate
# ---------------------------------------------------------------------

def test_integrate_null_field_is_constant():
    null = DynamicSystem(dim=2, f=lambda x, t: np.zeros(2),
                         jac=lambda x, t: np.zeros((2, 2)), autonomous=True)
    s0 = PhaseState([1.5, -2.0], [0.25, 4.0], 0.0)
    traj = integrate(null, s0, 1.0, 1e-2)
    for s in traj:
        assert np.array_equal(s.x, s0.x)
        assert np.array_equal(s.lam, s0.lam)


def test_integrate_exponential_pair():
    traj = integrate(linear_system(), PhaseState([1.0], [1.0], 0.0), 1.0, 1e-3)
    end = traj.samples[-1]
    assert end.t == 1.0
    assert abs(end.x[0] - np.e) / np.e < 1e-10
    assert abs(end.lam[0] - 1.0 / np.e) * np.e < 1e-10


def test_integrate_lands_exactly_on_t1():
    traj = integrate(linear_system(), PhaseState([1.0], [1.0], 0.0), 0.25, 0.1)
    ts = traj.times()
    assert ts[-1] == 0.25
    assert len(ts) == 4           # 0, 0.1, 0.2, shortened 0.25
    assert ts[-1] - ts[-2] < 0.1


def test_integrate_circular_orbit_radius():
    sysb = ballistic_system(1.0)
    s0 = PhaseState([0.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0], 0.0)
    traj = integrate(sysb, s0, 10.0, 1e-3)
    rs = traj.xs()[:, 2]
    assert np.max(np.abs(rs - 1.0)) < 1e-9


def test_integrate_blowup_truncates():
    riccati = DynamicSystem(dim=1, f=lambda x, t: x ** 2,
                            jac=lambda x, t: 2.0 * x.reshape(1, 1),
                            autonomous=True)
    traj = integrate(riccati, PhaseState([2.0], [0.0], 0.0), 2.0, 1e-3)
    assert traj.meta["truncated"]
    assert traj.meta["t_truncated"] < 1.0
    assert "1e12" in traj.meta["reason"]
    for s in traj:
        assert np.all(np.isfinite(s.x))


def test_integrate_validates_arguments():
    s0 = PhaseState([1.0], [1.0], 0.0)
    with pytest.raises(ValueError, match="step must be positive"):
        integrate(linear_system(), s0, 1.0, 0.0)
    with pytest.raises(ValueError, match="t1"):
        integrate(linear_system(), s0, 0.0, 1e-3)


# ---------------------------------------------------------------------
# fundamental matrices
# ---------------------------------------------------------------------

def test_fundamental_matrix_zero_generator():
    const = DynamicSystem(dim=2, f=lambda x, t: np.array([1.0, -1.0]),
                          jac=lambda x, t: np.zeros((2, 2)), autonomous=True)
    traj = integrate(const, PhaseState([0.0, 0.0], [1.0, 1.0], 0.0), 1.0, 1e-2)
    for kind in ("B", "D", "B_paper", "D_paper"):
        fm = fundamental_matrix(const, traj, kind)
        for M in fm.values:
            assert np.array_equal(M, np.eye(2))
        assert not fm.singular


def test_fundamental_matrix_scalar_exponentials():
    a = 0.7
    traj = integrate(linear_system(a=a), PhaseState([1.0], [1.0], 0.0), 1.0, 1e-3)
    B = fundamental_matrix(linear_system(a=a), traj, "B")
    D = fundamental_matrix(linear_system(a=a), traj, "D")
    ts = B.times
    b_vals = np.array([M[0, 0] for M in B.values])
    d_vals = np.array([M[0, 0] for M in D.values])
    assert np.max(np.abs(b_vals - np.exp(-a * ts))) < 1e-10
    assert np.max(np.abs(d_vals - np.exp(a * ts))) < 1e-10


def test_fundamental_matrix_duality_and_multiplier_transport():
    sysr = rotation_field()
    lam0 = np.array([0.8, -0.3])
    traj = integrate(sysr, PhaseState([1.0, 0.5], lam0, 0.0), 1.0, 1e-3)
    B = fundamental_matrix(sysr, traj, "B")
    D = fundamental_matrix(sysr, traj, "D")
    worst = max(float(np.max(np.abs(Bm @ Dm.T - np.eye(2))))
                for Bm, Dm in zip(B.values, D.values))
    assert worst < 1e-8
    # lam(t) = B(t) lam0 reproduces the integrated multipliers
    lams = traj.lams()
    err = max(float(np.max(np.abs(Bm @ lam0 - lam)))
              for Bm, lam in zip(B.values, lams))
    assert err < 1e-8


def test_fundamental_matrix_paper_convention_differs():
    sysr = rotation_field()
    traj = integrate(sysr, PhaseState([1.0, 0.0], [1.0, 0.0], 0.0), 1.0, 1e-3)
    B = fundamental_matrix(sysr, traj, "B")
    Bp = fundamental_matrix(sysr, traj, "B_paper")
    # antisymmetric A: the two conventions are rotations in opposite senses
    assert float(np.max(np.abs(B.values[-1] - Bp.values[-1]))) > 1.0


def test_fundamental_matrix_value_at():
    traj = integrate(linear_system(), PhaseState([1.0], [1.0], 0.0), 1.0, 1e-2)
    B = fundamental_matrix(linear_system(), traj, "B")
    assert B.value_at(0.0)[0, 0] == 1.0
    mid = B.value_at(0.505)[0, 0]   # between grid nodes
    assert mid == pytest.approx(np.exp(-0.505), rel=1e-4)
    with pytest.raises(ValueError, match="outside"):
        B.value_at(2.0)
    with pytest.raises(ValueError, match="unknown kind"):
        fundamental_matrix(linear_system(), traj, "Q")


# ---------------------------------------------------------------------
# energy diagnostics
# ---------------------------------------------------------------------

def test_energy_drift_autonomous():
    traj = integrate(linear_system(), PhaseState([1.0], [2.0], 0.0), 1.0, 1e-3)
    report = energy_drift(linear_system(), traj)
    assert report.autonomous
    assert report.drift < 1e-8
    assert float(report) == report.drift


def test_energy_drift_null_field_exact_zero():
    null = DynamicSystem(dim=1, f=lambda x, t: np.zeros(1),
                         jac=lambda x, t: np.zeros((1, 1)), autonomous=True)
    traj = integrate(null, PhaseState([1.0], [5.0], 0.0), 1.0, 1e-2)
    report = energy_drift(null, traj)
    assert np.all(report.h_series == 0.0)
    assert report.drift == 0.0


def test_energy_drift_driven_field_compensated():
    driven = DynamicSystem(dim=1, f=lambda x, t: np.array([t]),
                           jac=lambda x, t: np.zeros((1, 1)),
                           ft=lambda x, t: np.ones(1), autonomous=False)
    traj = integrate(driven, PhaseState([0.0], [3.0], 0.0), 1.0, 1e-3)
    report = energy_drift(driven, traj)
    assert not report.autonomous
    # H(t) - H0 = lam0 * t, matched by the trapezoidal int of lam * f_t
    assert report.drift < 1e-8
    assert report.h_series[-1] == pytest.approx(3.0, rel=1e-10)


# ---------------------------------------------------------------------
# variational integrands
# ---------------------------------------------------------------------

def test_lagrangian_vanishes_on_extremals():
    sysl = linear_system()
    traj = integrate(sysl, PhaseState([1.0], [1.0], 0.0), 1.0, 1e-2)
    for s in traj:
        xdot, _ = canonical_rhs(sysl, s)
        assert lagrangian(sysl, s, xdot) == 0.0


def test_lagrangian_off_extremal():
    s = PhaseState([2.0], [3.0], 0.0)
    assert lagrangian(linear_system(), s, [5.0]) == pytest.approx(9.0)


@given(x=st.floats(-10, 10), lam=st.floats(-10, 10),
       xdot=st.floats(-10, 10), g=st.floats(-10, 10))
def test_weierstrass_excess_vanishes(x, lam, xdot, g):
    s = PhaseState([x], [lam], 0.0)
    E = weierstrass_excess(linear_system(), s, [xdot], [g])
    assert abs(E) < 1e-12
