"""Core phase-space types: dynamic systems, extended-phase points, controlling
functions, trajectories, and finite-difference consistency checks.

Everything downstream works on the extended phase space (x, lam, t) in
R^(2n+1).  User-supplied derivative callbacks are optional: missing blocks are
substituted by central finite differences and flagged as FD-backed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "DynamicSystem",
    "PhaseState",
    "ControllingFunction",
    "Trajectory",
    "DerivativeReport",
    "verify_derivatives",
    "zero_controlling_function",
]


class DomainError(ValueError):
    """A vector field was evaluated outside its admissible domain."""


# =====================================================================
# Finite differences
# =====================================================================

def _fd_step(v: float, scale: float = 1e-6) -> float:
    """Step for central differences, balanced for double precision."""
    return scale * max(1.0, abs(v))


def _perturb(vec: np.ndarray, i: int, h: float):
    """Return (vec+h*e_i, vec-h*e_i, exact step) with the step recomputed
    from the rounded endpoints so that quotients of linear maps are exact."""
    vp = vec.copy()
    vm = vec.copy()
    vp[i] = vec[i] + h
    vm[i] = vec[i] - h
    return vp, vm, vp[i] - vm[i]


def _central_diff_x(func, x: np.ndarray, h_scale: float = 1e-6) -> np.ndarray:
    """Jacobian of func: R^n -> R^m by central differences, columns stacked.

    Returns an (m, n) array (or (n,) when func is scalar-valued).
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp, xm, d = _perturb(x, i, _fd_step(x[i], h_scale))
        cols.append((np.asarray(func(xp), dtype=float) - np.asarray(func(xm), dtype=float)) / d)
    out = np.stack(cols, axis=-1)
    return out


def _central_diff_t(func, t: float, h_scale: float = 1e-6):
    h = _fd_step(t, h_scale)
    tp = t + h
    tm = t - h
    d = tp - tm
    return (np.asarray(func(tp), dtype=float) - np.asarray(func(tm), dtype=float)) / d


# =====================================================================
# Domain types
# =====================================================================

@dataclass(frozen=True)
class DynamicSystem:
    """A first-order vector field xdot = f(x, t) with derivative callbacks.

    Parameters
    ----------
    dim : int
        State dimension n.
    f : callable
        (x, t) -> R^n right-hand side.
    jac : callable, optional
        (x, t) -> (n, n) Jacobian A with A[i, j] = df_i/dx_j.  FD-backed
        when omitted.
    ft : callable, optional
        (x, t) -> R^n partial time derivative of f.  Zero for autonomous
        systems, FD-backed otherwise when omitted.
    autonomous : bool
        Marks f as time-independent; ft is then identically zero.
    """

    dim: int
    f: Callable[[np.ndarray, float], np.ndarray]
    jac: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    ft: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    autonomous: bool = False
    fd_backed: frozenset = field(default=frozenset(), init=False)

    def __post_init__(self):
        if not (isinstance(self.dim, (int, np.integer)) and self.dim >= 1):
            raise ValueError("dim must be a positive integer")
        backed = set()
        if self.jac is None:
            backed.add("jac")
        if self.ft is None and not self.autonomous:
            backed.add("ft")
        object.__setattr__(self, "fd_backed", frozenset(backed))

    # --- evaluation helpers -------------------------------------------------

    def f_at(self, x: np.ndarray, t: float) -> np.ndarray:
        out = np.asarray(self.f(np.asarray(x, dtype=float), t), dtype=float)
        if out.shape != (self.dim,):
            out = out.reshape(self.dim)
        return out

    def jac_at(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jac is not None:
            return np.asarray(self.jac(x, t), dtype=float).reshape(self.dim, self.dim)
        return _central_diff_x(lambda xx: self.f_at(xx, t), x).reshape(self.dim, self.dim)

    def ft_at(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.autonomous:
            return np.zeros(self.dim)
        x = np.asarray(x, dtype=float)
        if self.ft is not None:
            return np.asarray(self.ft(x, t), dtype=float).reshape(self.dim)
        return np.asarray(_central_diff_t(lambda tt: self.f_at(x, tt), t)).reshape(self.dim)


@dataclass(frozen=True, eq=False)
class PhaseState:
    """A point (x, lam, t) of the extended phase space."""

    x: np.ndarray      # phase coordinates, R^n
    lam: np.ndarray    # Lagrange multipliers, R^n
    t: float           # time

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if x.ndim != 1 or lam.ndim != 1 or x.shape != lam.shape:
            raise ValueError("x and lam must be 1-d arrays of identical dimension")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam)) and np.isfinite(self.t)):
            raise ValueError(f"non-finite phase state: x={x}, lam={lam}, t={self.t}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self) -> int:
        return self.x.size

    def z(self) -> np.ndarray:
        """Stacked (x, lam) in R^2n."""
        return np.concatenate([self.x, self.lam])


def _require_dim(sys: DynamicSystem, s: PhaseState):
    if s.n != sys.dim:
        raise ValueError(f"dimension mismatch: system n={sys.dim}, state n={s.n}")


# ---------------------------------------------------------------------
# Controlling function U(x, lam, t)
# ---------------------------------------------------------------------

class ControllingFunction:
    """Scalar controlling function U(x, lam, t) with derivative closures.

    First derivatives ux (U_x), ulam (U_lam), ut (U_t) and the mixed block
    uxlam (d2U/dx_i dlam_j) follow the contract; the remaining second
    derivatives uxx, ulamlam, uxt, ulamt are needed by the flow-restricted
    canonicity residuals.  Every missing closure is replaced by central
    differences of the best available lower block and recorded in
    ``fd_backed``; pass ``fd_fallback=False`` to leave missing blocks absent
    instead (operations requiring them then raise).

    All closures take (x, lam, t) with x, lam in R^n.
    """

    _FIRST = ("ux", "ulam", "ut")
    _SECOND = ("uxlam", "uxx", "ulamlam", "uxt", "ulamt")

    def __init__(self, dim, u, ux=None, ulam=None, ut=None, uxlam=None,
                 uxx=None, ulamlam=None, uxt=None, ulamt=None,
                 fd_fallback=True):
        if not (isinstance(dim, (int, np.integer)) and dim >= 1):
            raise ValueError("dim must be a positive integer")
        self.dim = int(dim)
        self.u = u
        backed = set()

        def vec(f):
            return None if f is None else (lambda x, lam, t: np.asarray(f(x, lam, t), dtype=float).reshape(self.dim))

        def mat(f):
            return None if f is None else (lambda x, lam, t: np.asarray(f(x, lam, t), dtype=float).reshape(self.dim, self.dim))

        self.ux = vec(ux)
        self.ulam = vec(ulam)
        self.ut = None if ut is None else (lambda x, lam, t, _f=ut: float(_f(x, lam, t)))
        self.uxlam = mat(uxlam)
        self.uxx = mat(uxx)
        self.ulamlam = mat(ulamlam)
        self.uxt = vec(uxt)
        self.ulamt = vec(ulamt)

        if fd_fallback:
            backed.update(self._install_fd())
        self.fd_backed = frozenset(backed)

    # --- FD substitution ----------------------------------------------------

    def _install_fd(self):
        backed = []
        u = self.u
        n = self.dim
        if self.ux is None:
            self.ux = lambda x, lam, t: _central_diff_x(lambda xx: u(xx, lam, t), x).reshape(n)
            backed.append("ux")
        if self.ulam is None:
            self.ulam = lambda x, lam, t: _central_diff_x(lambda ll: u(x, ll, t), lam).reshape(n)
            backed.append("ulam")
        if self.ut is None:
            self.ut = lambda x, lam, t: float(_central_diff_t(lambda tt: u(x, lam, tt), t))
            backed.append("ut")
        # Second derivatives differentiate the (possibly analytic) first
        # blocks; a larger step keeps double-FD rounding in check.
        h2 = 1e-4 if "ux" in backed or "ulam" in backed else 1e-6
        ux, ulam, ut = self.ux, self.ulam, self.ut
        if self.uxlam is None:
            self.uxlam = lambda x, lam, t: _central_diff_x(
                lambda ll: ux(x, ll, t), lam, h2).reshape(n, n)
            backed.append("uxlam")
        if self.uxx is None:
            self.uxx = lambda x, lam, t: _central_diff_x(
                lambda xx: ux(xx, lam, t), x, h2).reshape(n, n)
            backed.append("uxx")
        if self.ulamlam is None:
            self.ulamlam = lambda x, lam, t: _central_diff_x(
                lambda ll: ulam(x, ll, t), lam, h2).reshape(n, n)
            backed.append("ulamlam")
        if self.uxt is None:
            self.uxt = lambda x, lam, t: np.asarray(
                _central_diff_t(lambda tt: ux(x, lam, tt), t, h2)).reshape(n)
            backed.append("uxt")
        if self.ulamt is None:
            self.ulamt = lambda x, lam, t: np.asarray(
                _central_diff_t(lambda tt: ulam(x, lam, tt), t, h2)).reshape(n)
            backed.append("ulamt")
        return backed

    # --- evaluation ---------------------------------------------------------

    def u_at(self, s: PhaseState) -> float:
        return float(self.u(s.x, s.lam, s.t))

    def ux_at(self, s: PhaseState) -> np.ndarray:
        return self._need("ux")(s.x, s.lam, s.t)

    def ulam_at(self, s: PhaseState) -> np.ndarray:
        return self._need("ulam")(s.x, s.lam, s.t)

    def ut_at(self, s: PhaseState) -> float:
        return self._need("ut")(s.x, s.lam, s.t)

    def uxlam_at(self, s: PhaseState) -> np.ndarray:
        return self._need("uxlam")(s.x, s.lam, s.t)

    def uxx_at(self, s: PhaseState) -> np.ndarray:
        return self._need("uxx")(s.x, s.lam, s.t)

    def ulamlam_at(self, s: PhaseState) -> np.ndarray:
        return self._need("ulamlam")(s.x, s.lam, s.t)

    def uxt_at(self, s: PhaseState) -> np.ndarray:
        return self._need("uxt")(s.x, s.lam, s.t)

    def ulamt_at(self, s: PhaseState) -> np.ndarray:
        return self._need("ulamt")(s.x, s.lam, s.t)

    def _need(self, name):
        fn = getattr(self, name)
        if fn is None:
            raise ValueError(
                f"controlling function lacks the '{name}' derivative block; "
                "construct it with fd_fallback=True to substitute finite differences")
        return fn


def zero_controlling_function(dim: int) -> ControllingFunction:
    """U identically zero, with exact (analytic) zero derivative blocks."""
    z = np.zeros(dim)
    zz = np.zeros((dim, dim))
    return ControllingFunction(
        dim,
        u=lambda x, lam, t: 0.0,
        ux=lambda x, lam, t: z,
        ulam=lambda x, lam, t: z,
        ut=lambda x, lam, t: 0.0,
        uxlam=lambda x, lam, t: zz,
        uxx=lambda x, lam, t: zz,
        ulamlam=lambda x, lam, t: zz,
        uxt=lambda x, lam, t: z,
        ulamt=lambda x, lam, t: z,
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered phase-state samples from a fixed-step integration."""

    samples: tuple            # PhaseState, strictly increasing in t
    step: float               # nominal step h (last interval may be shorter)
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise ValueError("trajectory needs at least one sample")
        ts = np.array([s.t for s in samples])
        if samples and np.any(np.diff(ts) <= 0):
            raise ValueError("sample times must be strictly increasing")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "step", float(self.step))

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def xs(self) -> np.ndarray:
        return np.array([s.x for s in self.samples])

    def lams(self) -> np.ndarray:
        return np.array([s.lam for s in self.samples])


# =====================================================================
# Derivative verification
# =====================================================================

@dataclass(frozen=True)
class DerivativeReport:
    """Max relative error per derivative block, plus failure flags."""

    blocks: Mapping            # block name -> max relative error
    failing: tuple             # names exceeding their tolerance
    fd_backed: tuple           # blocks that were FD-substituted at build time
    rtol: float

    @property
    def ok(self) -> bool:
        return not self.failing


def _rel_err(supplied: np.ndarray, ref: np.ndarray) -> float:
    supplied = np.atleast_1d(np.asarray(supplied, dtype=float))
    ref = np.atleast_1d(np.asarray(ref, dtype=float))
    denom = np.maximum(1.0, np.maximum(np.abs(ref), np.abs(supplied)))
    return float(np.max(np.abs(supplied - ref) / denom))


def _check_finite(value, label, s: PhaseState):
    if not np.all(np.isfinite(value)):
        raise ValueError(
            f"non-finite {label} at sample point x={s.x}, lam={s.lam}, t={s.t}")
    return value


def verify_derivatives(obj, points: Sequence[PhaseState], rtol: float = 1e-5) -> DerivativeReport:
    """Cross-check supplied derivative closures against central differences.

    Parameters
    ----------
    obj : DynamicSystem or ControllingFunction
    points : sequence of PhaseState
        Sample points; must be nonempty.
    rtol : float
        Tolerance for first-derivative blocks.  Mixed/second blocks use
        max(rtol, 1e-4) since double-FD references are less accurate.

    Returns
    -------
    DerivativeReport with per-block max relative errors.
    """
    if not points:
        raise ValueError("points must be nonempty")
    if rtol <= 0:
        raise ValueError("rtol must be positive")
    rtol2 = max(rtol, 1e-4)

    errs: dict = {}
    tols: dict = {}

    if isinstance(obj, DynamicSystem):
        for s in points:
            _require_dim(obj, s)
            _check_finite(obj.f_at(s.x, s.t), "f", s)
            jac_fd = _central_diff_x(lambda xx: obj.f_at(xx, s.t), s.x)
            errs["jac"] = max(errs.get("jac", 0.0),
                              _rel_err(_check_finite(obj.jac_at(s.x, s.t), "jac", s), jac_fd))
            if obj.autonomous:
                errs["ft"] = max(errs.get("ft", 0.0), float(np.max(np.abs(obj.ft_at(s.x, s.t)))))
            else:
                ft_fd = _central_diff_t(lambda tt: obj.f_at(s.x, tt), s.t)
                errs["ft"] = max(errs.get("ft", 0.0),
                                 _rel_err(_check_finite(obj.ft_at(s.x, s.t), "ft", s), ft_fd))
        tols = {"jac": rtol, "ft": rtol}
        backed = tuple(sorted(obj.fd_backed))
    elif isinstance(obj, ControllingFunction):
        for s in points:
            if s.n != obj.dim:
                raise ValueError(f"dimension mismatch: controlling function n={obj.dim}, state n={s.n}")
            _check_finite(obj.u_at(s), "u", s)
            ux_fd = _central_diff_x(lambda xx: obj.u(xx, s.lam, s.t), s.x)
            ulam_fd = _central_diff_x(lambda ll: obj.u(s.x, ll, s.t), s.lam)
            ut_fd = _central_diff_t(lambda tt: obj.u(s.x, s.lam, tt), s.t)
            errs["ux"] = max(errs.get("ux", 0.0), _rel_err(_check_finite(obj.ux_at(s), "ux", s), ux_fd))
            errs["ulam"] = max(errs.get("ulam", 0.0), _rel_err(_check_finite(obj.ulam_at(s), "ulam", s), ulam_fd))
            errs["ut"] = max(errs.get("ut", 0.0), _rel_err(_check_finite(obj.ut_at(s), "ut", s), ut_fd))
            # uxlam[i, j] = d(ux_i)/dlam_j = d(ulam_j)/dx_i
            uxlam_fd = _central_diff_x(lambda xx: obj.ulam(xx, s.lam, s.t), s.x, 1e-5).T
            errs["uxlam"] = max(errs.get("uxlam", 0.0),
                                _rel_err(_check_finite(obj.uxlam_at(s), "uxlam", s), uxlam_fd))
        tols = {"ux": rtol, "ulam": rtol, "ut": rtol, "uxlam": rtol2}
        backed = tuple(sorted(obj.fd_backed))
    else:
        raise TypeError("verify_derivatives expects a DynamicSystem or ControllingFunction")

    failing = tuple(sorted(name for name, e in errs.items() if e > tols[name]))
    return DerivativeReport(blocks=dict(sorted(errs.items())), failing=failing,
                            fd_backed=backed, rtol=rtol)
