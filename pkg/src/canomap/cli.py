"""Batch experiment runner: configure a scenario, run checks, persist results.

Artifacts per run (all deterministic for a fixed config):

    trajectory.csv   t, x_1..x_n, lam_1..lam_n, H
    canonicity.csv   t, residual, det_y, det_mu
    invariants.json  loop drift, symplectic defects, HJ residuals, actions
    plot.gp          optional gnuplot script referencing the CSVs

Exit codes: 0 ok, 1 verdict=violated, 2 usage/config error, 3 numerical
failure.  The environment variable CANOMAP_OUT overrides output_dir.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .phasecore import (DomainError, DynamicSystem, PhaseState,
                        zero_controlling_function, verify_derivatives)
from .hamilton import energy_drift, hamiltonian, integrate
from .mapping import MappingSpec, apply_map, canonicity_residual
from .invariants import (action_function, circle_loop, flow_loop,
                         poincare_cartan_loop, symplectic_test)
from .scenarios import (StraighteningProblem, ballistic_system,
                        constant_field_reduction, make_ballistic_adjoint,
                        rotation_example)

__all__ = ["ConfigError", "RunConfig", "run", "sweep", "verify", "main"]


class ConfigError(ValueError):
    """Invalid or unusable run configuration."""


SCENARIOS = ("linear", "rotation", "ballistic", "straightening", "custom")
_DEFAULT_TOLERANCES = {"canonicity": 1e-6, "symplectic": 1e-6, "degenerate": 1e-12}
_RUN_VARIANTS = ("Std116", "Cross220")


@dataclass
class RunConfig:
    scenario: str = "linear"
    n: int = 1
    t0: float = 0.0
    t1: float = 1.0
    step: float = 1e-3
    map_variant: str = "Std116"
    tolerances: dict = field(default_factory=lambda: dict(_DEFAULT_TOLERANCES))
    output_dir: str = "."
    seed: int = 0
    sigma: float = 1.0
    loop_vertices: int = 64
    emit_gnuplot: bool = False
    x0: Optional[list] = None
    lam0: Optional[list] = None

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ConfigError("n must be a positive integer")
        if self.step <= 0:
            raise ConfigError("step must be positive")
        if self.t1 <= self.t0:
            raise ConfigError("t1 must exceed t0")
        if self.map_variant not in _RUN_VARIANTS:
            raise ConfigError(
                f"map_variant must be one of {_RUN_VARIANTS} for batch runs")
        for name, value in self.tolerances.items():
            if name not in _DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance {name!r}")
            if not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(f"tolerance {name!r} must be positive")
        if self.scenario == "ballistic":
            if self.n != 4:
                raise ConfigError("ballistic scenario requires n=4")
            if self.sigma <= 0:
                raise ConfigError("sigma must be positive")
        if self.scenario == "straightening" and self.n != 1:
            raise ConfigError("straightening scenario requires n=1")
        if self.loop_vertices < 8:
            raise ConfigError("loop_vertices must be at least 8")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        for name in ("x0", "lam0"):
            v = getattr(self, name)
            if v is not None:
                arr = np.asarray(v, dtype=float)
                if arr.ndim != 1 or arr.size != self.n or not np.all(np.isfinite(arr)):
                    raise ConfigError(f"{name} must be a finite list of length n={self.n}")
        return self


def load_config(path: str) -> RunConfig:
    """Read a flat-JSON config, rejecting unknown fields by name."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config field {key!r}")
    cfg = RunConfig()
    for key, value in raw.items():
        if key == "tolerances":
            if not isinstance(value, dict):
                raise ConfigError("tolerances must be an object of named scalars")
            merged = dict(_DEFAULT_TOLERANCES)
            merged.update(value)
            value = merged
        setattr(cfg, key, value)
    if "n" not in raw and cfg.scenario == "ballistic":
        cfg.n = 4
    return cfg.validate()


# ---------------------------------------------------------------------
# Serialization helpers (17 significant digits, stable ordering)
# ---------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _json_text(obj, indent=0):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for key in sorted(obj):
            items.append(f'{pad}  {json.dumps(str(key))}: {_json_text(obj[key], indent + 1)}')
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        items = [f"{pad}  {_json_text(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_json_text(obj) + "\n")


def _write_gnuplot(path, n):
    lines = ['set datafile separator ","', "set key outside", "set xlabel 't'"]
    series = ", ".join(
        f'"trajectory.csv" using 1:{i + 2} with lines title "x_{i + 1}"' for i in range(n))
    lines.append("plot " + series)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------
# Scenario execution
# ---------------------------------------------------------------------

@dataclass
class Outcome:
    verdict: str
    max_residual: float
    energy_drift: float
    exit_code: int


def _linear_system(n):
    return DynamicSystem(dim=n, f=lambda x, t: x,
                         jac=lambda x, t: np.eye(n), autonomous=True)


def _frozen_system():
    return DynamicSystem(dim=1, f=lambda x, t: np.zeros(1),
                         jac=lambda x, t: np.zeros((1, 1)), autonomous=True)


def _default_states(cfg):
    if cfg.scenario == "ballistic":
        x0 = [0.0, 1.0, 1.0, 0.0]
        lam0 = [1.0, 0.0, 0.0, 0.0]
    else:
        x0 = [1.0] * cfg.n
        lam0 = [1.0] * cfg.n
    if cfg.x0 is not None:
        x0 = list(cfg.x0)
    if cfg.lam0 is not None:
        lam0 = list(cfg.lam0)
    return np.asarray(x0, dtype=float), np.asarray(lam0, dtype=float)


def _traj_rows(system, traj):
    rows = []
    for s in traj:
        rows.append([s.t, *s.x, *s.lam, hamiltonian(system, s)])
    return rows


def _canonicity_rows(report):
    return [[t, r, dy, dmu] for t, r, dy, dmu in
            zip(report.times, report.residual_series,
                report.det_y_series, report.det_mu_series)]


def _verdict_exit(verdict):
    return {"canonical": 0, "violated": 1}.get(verdict, 3)


def _subsample(traj, count=9):
    idx = np.unique(np.linspace(0, len(traj) - 1, count).astype(int))
    return [traj.samples[i] for i in idx]


def _execute(cfg: RunConfig, out_dir: str) -> Outcome:
    os.makedirs(out_dir, exist_ok=True)
    if cfg.scenario == "custom":
        raise ConfigError("scenario 'custom' has no batch definition; drive the library API directly")
    if cfg.scenario == "straightening":
        return _execute_straightening(cfg, out_dir)

    if cfg.scenario == "ballistic":
        system = ballistic_system(cfg.sigma)
    else:
        system = _linear_system(cfg.n)
    x0, lam0 = _default_states(cfg)
    s0 = PhaseState(x0, lam0, cfg.t0)

    if cfg.scenario == "rotation":
        cf, spec = rotation_example(dim=cfg.n)
    else:
        cf = zero_controlling_function(cfg.n)
        spec = MappingSpec(cfg.map_variant, cf)

    traj = integrate(system, s0, cfg.t1, cfg.step)
    _write_csv(os.path.join(out_dir, "trajectory.csv"),
               ["t"] + [f"x_{i+1}" for i in range(cfg.n)]
               + [f"lam_{i+1}" for i in range(cfg.n)] + ["H"],
               _traj_rows(system, traj))
    if traj.meta.get("truncated"):
        print(f"numerical failure: trajectory truncated at t={traj.meta['t_truncated']} "
              f"({traj.meta['reason']})", file=sys.stderr)
        return Outcome("degenerate", float("nan"), float("nan"), 3)

    report = canonicity_residual(system, spec, traj,
                                 tol=cfg.tolerances["canonicity"],
                                 degenerate_tol=cfg.tolerances["degenerate"])
    _write_csv(os.path.join(out_dir, "canonicity.csv"),
               ["t", "residual", "det_y", "det_mu"], _canonicity_rows(report))

    probes = _subsample(traj)
    defect = max(symplectic_test(spec, s) for s in probes)
    drift = energy_drift(system, traj)
    act = action_function(system, traj)
    inv = {
        "scenario": cfg.scenario,
        "verdict": report.verdict,
        "canonicity_max_residual": report.max_residual,
        "jacobian_min_abs_det": report.jacobian_min_abs_det,
        "symplectic_defect_max": defect,
        "energy_drift": drift.drift,
        "action_S": act.S,
        "hj_residual": act.hj_residual,
        "loop_drift": None,
    }
    if cfg.n == 1:
        loop0 = circle_loop(s0, 0.5, cfg.loop_vertices)
        ens = flow_loop(system, loop0, [cfg.t1], cfg.step)
        inv["loop_drift"] = poincare_cartan_loop(system, ens)

    verdict = report.verdict
    max_res = report.max_residual
    if cfg.scenario == "rotation":
        # The cross-variant differential criterion is violated along a
        # generic flow even though the quarter-turn map is exactly
        # symplectic; the run verdict follows the symplectic defect, and
        # both metrics are recorded side by side.
        rng = np.random.default_rng(cfg.seed)
        pts = rng.uniform(-2.0, 2.0, size=(100, 2 * cfg.n))
        img_err = 0.0
        for p in pts:
            ps = PhaseState(p[:cfg.n], p[cfg.n:], cfg.t0)
            y, mu = apply_map(spec, ps)
            img_err = max(img_err,
                          float(np.max(np.abs(y - ps.lam))),
                          float(np.max(np.abs(mu + ps.x))))
        inv["rotation_image_error"] = img_err
        inv["verdict_basis"] = "symplectic"
        # The block determinants det(dy/dx), det(dmu/dlam) vanish for the
        # quarter-turn (y depends on lam alone), so the differential
        # criterion's degenerate gate does not apply; the full 2n-Jacobian
        # is a rotation with determinant one.
        verdict = "canonical" if defect < cfg.tolerances["symplectic"] else "violated"
        inv["verdict"] = verdict
        max_res = defect

    if cfg.scenario == "ballistic":
        rv = np.array([s.x[2] * s.x[1] for s in traj])
        adj = make_ballistic_adjoint(cfg.sigma)
        agree = 0.0
        for s in probes:
            lamdot = -system.jac_at(s.x, s.t).T @ s.lam
            agree = max(agree, float(np.max(np.abs(adj(s) - lamdot))))
        inv["area_integral_drift_rel"] = float(
            np.max(np.abs(rv - rv[0])) / max(1.0, abs(rv[0])))
        inv["lam4_drift"] = float(np.max(np.abs(traj.lams()[:, 3] - traj.lams()[0, 3])))
        inv["adjoint_agreement"] = agree

    _write_json(os.path.join(out_dir, "invariants.json"), inv)
    if cfg.emit_gnuplot:
        _write_gnuplot(os.path.join(out_dir, "plot.gp"), cfg.n)
    return Outcome(verdict, max_res, drift.drift, _verdict_exit(verdict))


def _execute_straightening(cfg: RunConfig, out_dir: str) -> Outcome:
    system = _frozen_system()
    x0 = np.asarray(cfg.x0, dtype=float) if cfg.x0 is not None else np.array([1.0])
    lam0 = np.asarray(cfg.lam0, dtype=float) if cfg.lam0 is not None else np.array([1.0])
    if abs(lam0[0]) < 1e-6:
        raise ConfigError("straightening scenario needs lam0[0] away from zero "
                          "(it doubles as the multiplier target c)")
    prob = StraighteningProblem(c=[lam0[0]], a=[0.0], h=0.0, y0=[x0[0] + 1.0],
                                lam_b=lam0[0])
    report = constant_field_reduction(
        prob, system, x0, lam0,
        lam_grid=np.linspace(lam0[0], lam0[0] + 2.0, 101),
        x_grid=np.linspace(x0[0] - 1.0, x0[0] + 1.0, 101),
        t1=cfg.t1, step=cfg.step)
    traj = report.traj
    _write_csv(os.path.join(out_dir, "trajectory.csv"),
               ["t", "x_1", "lam_1", "H"], _traj_rows(system, traj))
    cf = zero_controlling_function(1)
    base = canonicity_residual(system, MappingSpec("Std116", cf), traj)
    _write_csv(os.path.join(out_dir, "canonicity.csv"),
               ["t", "residual", "det_y", "det_mu"], _canonicity_rows(base))
    ok = (report.pde_residual_max < 1e-8 and report.ydot_max_err < 1e-6
          and report.mu_defect < 1e-6)
    verdict = "canonical" if ok else "violated"
    inv = {
        "scenario": "straightening",
        "verdict": verdict,
        "pde_residual_max": report.pde_residual_max,
        "ydot_max_err": report.ydot_max_err,
        "mu_defect": report.mu_defect,
        "hj_residual": report.hj_residual,
        "energy_mismatch": report.energy_mismatch,
        "boundary": report.boundary_note,
        "loop_drift": None,
    }
    _write_json(os.path.join(out_dir, "invariants.json"), inv)
    if cfg.emit_gnuplot:
        _write_gnuplot(os.path.join(out_dir, "plot.gp"), 1)
    drift = energy_drift(system, traj)
    return Outcome(verdict, report.pde_residual_max, drift.drift, _verdict_exit(verdict))


def _resolve_out(cfg: RunConfig) -> str:
    return os.environ.get("CANOMAP_OUT") or cfg.output_dir


# ---------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------

def run(cfg: RunConfig) -> int:
    out = _execute(cfg, _resolve_out(cfg))
    print(f"VERDICT={out.verdict} max_residual={_fmt(out.max_residual)}")
    return out.exit_code


_SWEEP_PARAMS = {
    "step": float, "t0": float, "t1": float, "sigma": float,
    "seed": int, "n": int, "loop_vertices": int,
}


def sweep(cfg: RunConfig, param: str, values: list) -> int:
    if param not in _SWEEP_PARAMS:
        raise ConfigError(
            f"cannot sweep {param!r}; choose from {sorted(_SWEEP_PARAMS)}")
    if not values:
        raise ConfigError("sweep needs a nonempty --values list")
    caster = _SWEEP_PARAMS[param]
    base = _resolve_out(cfg)
    rows = []
    worst = 0
    for token in values:
        try:
            value = caster(token)
        except ValueError:
            raise ConfigError(f"cannot parse {token!r} as {caster.__name__} for {param!r}")
        sub = replace(cfg, **{param: value})
        sub.tolerances = dict(cfg.tolerances)
        sub.validate()
        sub_dir = os.path.join(base, f"{param}={token}")
        out = _execute(sub, sub_dir)
        print(f"{param}={token}: VERDICT={out.verdict} max_residual={_fmt(out.max_residual)}")
        rows.append([token, out.verdict, _fmt(out.max_residual),
                     _fmt(out.energy_drift), str(out.exit_code)])
        worst = max(worst, out.exit_code)
    os.makedirs(base, exist_ok=True)
    with open(os.path.join(base, "index.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("value,verdict,max_residual,energy_drift,exit_status\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return worst


def verify(cfg: RunConfig) -> int:
    """Derivative cross-checks for the scenario's system and controlling
    function on a seeded point cloud; prints one line per block."""
    if cfg.scenario == "custom":
        raise ConfigError("scenario 'custom' has no batch definition; drive the library API directly")
    rng = np.random.default_rng(cfg.seed)
    if cfg.scenario == "ballistic":
        system = ballistic_system(cfg.sigma)
        cf = None
        pts = []
        for _i in range(20):
            x = np.array([rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5),
                          rng.uniform(0.5, 2.0), rng.uniform(0.0, 6.0)])
            lam = rng.uniform(-1.0, 1.0, size=4)
            pts.append(PhaseState(x, lam, rng.uniform(cfg.t0, cfg.t1)))
    else:
        n = cfg.n
        system = _frozen_system() if cfg.scenario == "straightening" else _linear_system(n)
        cf = rotation_example(dim=n)[0] if cfg.scenario == "rotation" else None
        pts = [PhaseState(rng.uniform(-2.0, 2.0, size=n),
                          rng.uniform(-2.0, 2.0, size=n),
                          rng.uniform(cfg.t0, cfg.t1)) for _i in range(20)]
    ok = True
    rep = verify_derivatives(system, pts)
    for name, err in rep.blocks.items():
        status = "OK" if name not in rep.failing else "FAIL"
        print(f"sys.{name}: max rel err {err:.3e} {status}")
        ok = ok and status == "OK"
    if cf is not None:
        rep = verify_derivatives(cf, pts)
        for name, err in rep.blocks.items():
            status = "OK" if name not in rep.failing else "FAIL"
            print(f"cf.{name}: max rel err {err:.3e} {status}")
            ok = ok and status == "OK"
    return 0 if ok else 1


# ---------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="canomap",
        description="Hamiltonian lifts and controlled canonical mappings: batch checks")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one scenario and write artifacts")
    p_run.add_argument("--config", required=True, help="path to a JSON config")
    p_sweep = sub.add_parser("sweep", help="run a scenario across parameter values")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, help="RunConfig scalar to vary")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated list of values")
    p_verify = sub.add_parser("verify", help="derivative checks only")
    p_verify.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            return run(cfg)
        if args.command == "sweep":
            values = [v for v in (tok.strip() for tok in args.values.split(",")) if v]
            return sweep(cfg, args.param, values)
        return verify(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
