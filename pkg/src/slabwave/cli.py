"""
Command-line driver: configuration files, scenarios and output files.

Usage::

    slabwave {validate,manufactured,evolve,oracle} [--config FILE] [--out DIR] [--seed N]

Configuration files hold ``key = value`` lines grouped under the sections
``[physics]``, ``[grid]``, ``[time]`` and ``[solver]``; ``#`` starts a
comment.  Every key is optional and defaults to the :class:`Config` value:

========== ============== ============================================
section    key            default
========== ============== ============================================
physics    nu             1.0 (kinematic viscosity)
physics    g              1.0 (gravity)
physics    depth_b        1.0 (slab depth)
physics    s              2.5 (regularity index, must exceed 2)
physics    data_amplitude 0.01 (size of the evolve initial displacement)
grid       modes          16, 16 (horizontal mode counts, even)
grid       nv             17 (vertical nodes)
grid       period         6.283185307179586, 6.283185307179586
time       dt             0.03125
time       t_final        0.5 (an integer multiple of dt)
solver     tol_outer      1e-9
solver     max_iters      12
solver     inner_iters    0 (0 refreshes flow map and velocity together)
solver     small_data_eps 0.5
solver     j_min          0.1
solver     kappa          0.05
solver     t_restrict_c   4.0
========== ============== ============================================

Exit codes: 0 success, 1 failed checks, 2 refused input, 3 stage failure,
4 non-contracting iteration.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corrector import oracle_relative_error
from .flowmap import DegenerateFlowMap
from .grid import Config, Grid, dump_field, make_grid, to_physical
from .manufactured import observed_orders, quadratic_solution, recovery_error, smooth_solution
from .norms import LEDGER_NAMES, xt_series
from .picard import RESIDUAL_NAMES, IterationReport, NonContraction, SmallDataError, StageError, Trajectory, picard_solve, residual_series
from .samples import smooth_displacement
from .suites import run_suites

KINDS = ("validate", "manufactured", "evolve", "oracle")

_KEYS: dict[str, tuple[str, type]] = {
    "nu": ("physics", float),
    "g": ("physics", float),
    "depth_b": ("physics", float),
    "s": ("physics", float),
    "data_amplitude": ("physics", float),
    "modes": ("grid", int),
    "nv": ("grid", int),
    "period": ("grid", float),
    "dt": ("time", float),
    "t_final": ("time", float),
    "tol_outer": ("solver", float),
    "max_iters": ("solver", int),
    "inner_iters": ("solver", int),
    "small_data_eps": ("solver", float),
    "j_min": ("solver", float),
    "kappa": ("solver", float),
    "t_restrict_c": ("solver", float),
}
_PAIRS = ("modes", "period")
SECTIONS = ("physics", "grid", "time", "solver")
_MESSAGE_KEYS = {"mode counts": "modes", "iteration counts": "max_iters"}


class ConfigError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _convert(key: str, raw: str, kind: type, line: int):
    def one(token: str):
        token = token.strip()
        try:
            if kind is int:
                return int(token)
            return float(token)
        except ValueError:
            raise ConfigError(line, f"key {key!r} expects {'an integer' if kind is int else 'a number'}, got {token!r}") from None

    if key in _PAIRS:
        parts = [p for p in raw.replace(",", " ").split()]
        if len(parts) == 1:
            parts = parts * 2
        if len(parts) != 2:
            raise ConfigError(line, f"key {key!r} expects one or two values, got {raw!r}")
        return tuple(one(p) for p in parts)
    return one(raw)


def parse_config(text: str) -> Config:
    """Parse configuration text into a validated :class:`Config`.

    Raises
    ------
    ConfigError
        For syntax errors, unknown or misplaced keys, type mismatches and
        violated invariants, each with the offending line number.
    """
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    section: str | None = None
    last = 0
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        last = number
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(number, f"malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(number, f"unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(number, f"expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(number, f"unknown key {key!r}")
        home, kind = _KEYS[key]
        if section is not None and section != home:
            raise ConfigError(number, f"key {key!r} belongs in section [{home}], not [{section}]")
        if key in values:
            raise ConfigError(number, f"key {key!r} repeated (first on line {lines[key]})")
        values[key] = _convert(key, value, kind, number)
        lines[key] = number
    try:
        return Config(**values)
    except ValueError as exc:
        message = str(exc)
        named = [k for k in lines if re.search(rf"\b{k}\b", message)]
        named += [k for phrase, k in _MESSAGE_KEYS.items() if phrase in message and k in lines]
        culprit = min(named, key=lines.get) if named else None
        raise ConfigError(lines[culprit] if culprit else last, message) from None


def load_config(path: str | os.PathLike | None) -> Config:
    if path is None:
        return Config()
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# Scenarios


@dataclass(frozen=True)
class Scenario:
    kind: str
    config_path: str | None = None
    out_dir: str = "slabwave-out"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario {self.kind!r}; choose from {', '.join(KINDS)}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass
class RunArtifacts:
    """Everything a scenario hands to :func:`emit_outputs`."""

    csv_name: str = "norms.csv"
    header: list[str] = field(default_factory=list)
    rows: list[list[float]] = field(default_factory=list)
    report: list[str] = field(default_factory=list)
    fields: dict[str, np.ndarray] = field(default_factory=dict)
    extra_tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)


@dataclass
class ExitReport:
    code: int
    lines: list[str]
    files: list[str]


def _format(value) -> str:
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format(v) for v in row) + "\n")


def emit_outputs(run: RunArtifacts, out_dir: str | os.PathLike, grid: Grid | None = None) -> list[str]:
    """Write the CSV table(s), ``report.txt`` and field dumps; return the file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    _write_table(out / run.csv_name, run.header, run.rows)
    written.append(run.csv_name)
    for name, (header, rows) in run.extra_tables.items():
        _write_table(out / name, header, rows)
        written.append(name)
    (out / "report.txt").write_text("\n".join(run.report) + "\n")
    written.append("report.txt")
    if grid is not None:
        for name, values in run.fields.items():
            dump_field(out / f"{name}.slab", values, grid)
            written.append(f"{name}.slab")
    return written


def norms_table(traj: Trajectory, xi0: np.ndarray, v0: np.ndarray, grid: Grid, cfg: Config) -> tuple[list[str], list[list[float]]]:
    """Header and per-time rows: t, ledger norms, residuals, J_inv_max."""
    from .picard import blowup_monitor

    header = ["t", *LEDGER_NAMES, *(f"res_{name}" for name in RESIDUAL_NAMES), "J_inv_max"]
    if traj.v.shape[0] == 0:
        return header, []
    ledger = xt_series(traj.eta1, traj.v, traj.q, grid, cfg.s, traj.dt)
    res = residual_series(traj, xi0, v0, grid, cfg)
    rows = []
    for k, t in enumerate(traj.times):
        jinv = blowup_monitor(traj.xi[k], traj.v[k], traj.eta1[k], grid, cfg.s)[2]
        rows.append([t, *(ledger[n][k] for n in LEDGER_NAMES), *(res[n][k] for n in RESIDUAL_NAMES), jinv])
    return header, rows


def _iteration_lines(rep: IterationReport) -> list[str]:
    lines = [
        f"horizon: T = {rep.t_final:.17g} with {rep.n_steps} steps" + (" (restricted)" if rep.t_restricted else ""),
        f"smallness ||<grad_h>^(s-1) grad xi0||_H1 = {rep.smallness:.17g}",
        f"passes: {rep.passes}, converged: {rep.converged}",
    ]
    for i, d in enumerate(rep.deltas, start=1):
        factor = f", factor {rep.factors[i - 2]:.6g}" if i >= 2 and i - 2 < len(rep.factors) else ""
        mom = f", momentum residual {rep.residuals[i - 1]['momentum']:.6g}" if i - 1 < len(rep.residuals) else ""
        lines.append(f"pass {i}: update norm {d:.6g}{factor}{mom}")
    return lines


def _run_validate(cfg: Config, seed: int) -> tuple[int, RunArtifacts, Grid]:
    checks = run_suites(cfg, seed)
    run = RunArtifacts(csv_name="checks.csv", header=["module", "check", "value", "threshold", "passed"])
    for c in checks:
        run.rows.append([c.module, c.name, c.value, c.threshold, "1" if c.passed else "0"])
        run.report.append(f"{'PASS' if c.passed else 'FAIL'} {c.module}: {c.name} = {c.value:.3e} (threshold {c.threshold:.1e})")
    grid = make_grid(cfg)
    run.fields["xi0"] = to_physical(smooth_displacement(grid, cfg.data_amplitude)).real
    failed = sum(not c.passed for c in checks)
    run.report.append(f"{len(checks) - failed}/{len(checks)} checks passed (seed {seed})")
    return (1 if failed else 0), run, grid


def _run_manufactured(cfg: Config) -> tuple[int, RunArtifacts, Grid]:
    run = RunArtifacts(csv_name="convergence.csv", header=["study", "size", "err_u", "err_eta1", "err_p", "max_residual"])
    modes = (8, 8)
    b = cfg.depth_b
    h_sizes, h_err = [], []
    for nv in (17, 33, 65):
        c = cfg.replace(modes=modes, nv=nv, dt=1.0 / 16.0, t_final=0.25)
        r = recovery_error(smooth_solution(b), c)
        h = b / (nv - 1)
        h_sizes.append(h)
        h_err.append(r.errors)
        run.rows.append(["space", h, r.errors["u"], r.errors["eta1"], r.errors["p"], max(r.residuals.values())])
    t_sizes, t_err = [], []
    for steps in (8, 16, 32, 64):
        c = cfg.replace(modes=modes, nv=9, dt=0.5 / steps, t_final=0.5)
        r = recovery_error(quadratic_solution(b), c)
        t_sizes.append(c.dt)
        t_err.append(r.errors)
        run.rows.append(["time", c.dt, r.errors["u"], r.errors["eta1"], r.errors["p"], max(r.residuals.values())])
    order_h = observed_orders(h_sizes, [e["u"] for e in h_err])
    order_t = observed_orders(t_sizes, [e["u"] for e in t_err])
    ok = bool(np.min(order_h) >= 1.8 and np.min(order_t) >= 0.9)
    run.report += [
        "velocity orders under vertical refinement: " + ", ".join(f"{o:.3f}" for o in order_h),
        "velocity orders under time refinement: " + ", ".join(f"{o:.3f}" for o in order_t),
        f"{'PASS' if ok else 'FAIL'} thresholds 1.8 (space) and 0.9 (time)",
    ]
    c = cfg.replace(modes=modes, nv=17, dt=1.0 / 16.0, t_final=0.25)
    grid = make_grid(c)
    run.fields["manufactured_u0"] = to_physical(smooth_solution(b).evaluate(grid, np.zeros(1), c.nu, c.g)["u"][0]).real
    return (0 if ok else 1), run, grid


def _run_evolve(cfg: Config) -> tuple[int, RunArtifacts, Grid]:
    grid = make_grid(cfg)
    xi0 = smooth_displacement(grid, cfg.data_amplitude)
    v0 = np.zeros_like(xi0)
    run = RunArtifacts()
    code = 0
    try:
        traj, rep = picard_solve(xi0, v0, cfg, grid)
    except NonContraction as exc:
        run.report = ["non-contracting iteration", *_iteration_lines(exc.report)]
        run.header = norms_table(_empty_trajectory(grid), xi0, v0, grid, cfg)[0]
        return 4, run, grid
    run.header, run.rows = norms_table(traj, xi0, v0, grid, cfg)
    run.report = _iteration_lines(rep)
    if not rep.converged:
        run.report.append("outer tolerance not reached within max_iters")
        code = 1
    run.fields = {
        "xi_final": to_physical(traj.xi[-1]).real,
        "v_final": to_physical(traj.v[-1]).real,
        "q_final": to_physical(traj.q[-1]).real,
        "eta1_final": to_physical(traj.eta1[-1], (-2, -1)).real,
    }
    return code, run, grid


def _empty_trajectory(grid: Grid) -> Trajectory:
    z = np.zeros((0, 3) + grid.shape, dtype=complex)
    return Trajectory(times=np.zeros(0), xi=z, v=z, q=np.zeros((0,) + grid.shape), eta1=np.zeros((0,) + grid.ksq.shape))


def _run_oracle(cfg: Config) -> tuple[int, RunArtifacts, Grid]:
    modes = (max(cfg.modes[0], 16), max(cfg.modes[1], 16))
    c = cfg.replace(modes=modes, nv=max(cfg.nv, 33), dt=0.01, t_final=10.0)
    grid = make_grid(c)
    run = RunArtifacts(csv_name="oracle.csv", header=["tau", "k2", "k3", "abs_k", "relative_error"])
    tau = 2.0
    worst = 0.0
    for lattice in ((1, 0), (2, 0), (4, 0)):
        err = oracle_relative_error(grid, tau, lattice, c.t_final, c.dt)
        k2, k3 = float(grid.k2[lattice[0]]), float(grid.k3[lattice[1]])
        run.rows.append([tau, k2, k3, float(np.hypot(k2, k3)), err])
        run.report.append(f"tau = {tau:g}, |k| = {np.hypot(k2, k3):g}: relative error {err:.3e}")
        worst = max(worst, err)
    run.report.append(f"{'PASS' if worst <= 0.05 else 'FAIL'} worst relative error {worst:.3e} (threshold 5e-2)")
    return (0 if worst <= 0.05 else 1), run, grid


def run_scenario(sc: Scenario) -> ExitReport:
    """Run one scenario and write its outputs; failures become exit codes with tagged messages."""
    try:
        cfg = load_config(sc.config_path)
    except (ConfigError, OSError) as exc:
        return ExitReport(2, [f"[cli/parse_config] {exc}"], [])
    try:
        if sc.kind == "validate":
            code, run, grid = _run_validate(cfg, sc.seed)
        elif sc.kind == "manufactured":
            code, run, grid = _run_manufactured(cfg)
        elif sc.kind == "evolve":
            code, run, grid = _run_evolve(cfg)
        else:
            code, run, grid = _run_oracle(cfg)
    except SmallDataError as exc:
        return ExitReport(2, [f"[picard/smallness] {exc}", f"measured norm: {exc.measured:.17g}"], [])
    except StageError as exc:
        return ExitReport(3, [str(exc)], [])
    except DegenerateFlowMap as exc:
        return ExitReport(3, [f"[flowmap/kinematics] {exc}"], [])
    except ValueError as exc:
        return ExitReport(3, [f"[{sc.kind}/run] {exc}"], [])
    try:
        files = emit_outputs(run, sc.out_dir, grid)
    except OSError as exc:
        return ExitReport(3, [f"[cli/emit_outputs] {exc}"], [])
    return ExitReport(code, run.report, files)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="slabwave", description="Viscous surface-wave slab solver.")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", default=None, help="configuration file (defaults apply when omitted)")
    parser.add_argument("--out", default="slabwave-out", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized checks (unsigned 64-bit)")
    args = parser.parse_args(argv)
    try:
        sc = Scenario(kind=args.kind, config_path=args.config, out_dir=args.out, seed=args.seed)
    except ValueError as exc:
        parser.error(str(exc))
    report = run_scenario(sc)
    stream = sys.stdout if report.code == 0 else sys.stderr
    for line in report.lines:
        print(line, file=stream)
    if report.files:
        print(f"wrote {', '.join(report.files)} to {sc.out_dir}")
    return report.code


__all__ = [
    "ConfigError",
    "ExitReport",
    "RunArtifacts",
    "Scenario",
    "emit_outputs",
    "load_config",
    "main",
    "norms_table",
    "parse_config",
    "run_scenario",
]


if __name__ == "__main__":
    sys.exit(main())
