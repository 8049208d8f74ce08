"""Scenario runner: configuration, truncation harness, sweep pipelines, CSV output.

Scenarios reproduce the three standard plots (time evolution of purity and
correlations, stationary correlations versus drive strength, stationary
correlations versus reservoir temperature) plus a generic custom pipeline.
Driven steady states are computed in the displaced frame, where the field
stays near vacuum and a small Fock truncation suffices even for strong
driving; atomic reductions are unchanged by the field-only displacement.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .hilbert import DensityMatrix, partial_trace
from .model import (
    SystemConfig,
    atomic_vector,
    build_generator,
    derived_params,
    initial_state,
)
from .dynamics import (
    SPECTRAL_MAX_DIM,
    ConvergenceError,
    evolve,
    evolve_spectral,
    residual_norm,
    steady_state,
)
from .correlations import correlation_report, field_statistics
from .sectors import SectorError, two_atom_steady_state

SCENARIOS = ("fig1-purity", "fig1-correlations", "fig2-sweep", "fig3-thermal", "custom")
SWEEPABLE = ("epsilon", "g", "n_th")


class ScenarioConfigError(ValueError):
    pass


class TruncationError(RuntimeError):
    """Observables failed to converge in the Fock truncation by n_max = 256."""


@dataclass
class ScenarioConfig:
    """Flat key=value configuration; every key is also a CLI flag."""

    scenario: str = "custom"
    n_atoms: int = 2
    g: float = 0.01
    epsilon: float = 1.0
    delta: float = 0.0
    delta_atom: float = 0.0
    n_th: float = 0.0
    n_max: int = 0                     # 0 = choose automatically
    frame: str = "displaced"
    initial_atoms: str = "all-g"       # all-e | all-g | e-g | custom:a0,a1,...
    sweep_param: str = ""
    sweep_values: str = ""             # comma-separated floats
    output_path: str = ""
    integrator_tol: float = 1e-9
    residual_tol: float = 1e-9
    t_max: float = 0.0                 # 0 = pick from the slowest relaxation rate
    truncation_tol: float = 1e-6
    workers: int = 1
    timestamp: bool = True
    # time grids (fig1 / custom evolution)
    t_lo: float = 0.1
    t_hi: float = 1e6
    points_per_decade: int = 12
    # fig2 defaults
    g_list: str = "0.01,0.1,1.0"
    eps_lo: float = 1e-3
    eps_hi: float = 10.0
    # fig3 defaults
    nth_list: str = "0,0.25,0.5,1,2,3,5,7,10"
    initial_list: str = "e-g,g-g"
    # custom pipeline
    custom_mode: str = "steady"        # steady | evolve

    def system(self, **overrides) -> SystemConfig:
        kw = dict(
            n_atoms=self.n_atoms, g=self.g, epsilon=self.epsilon, delta=self.delta,
            delta_atom=self.delta_atom, n_th=self.n_th,
            n_max=self.n_max if self.n_max > 0 else 8, frame=self.frame,
        )
        kw.update(overrides)
        return SystemConfig(**kw)


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, kind, raw: str):
    if kind is bool:
        low = raw.strip().lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ScenarioConfigError(f"cannot parse boolean {name}={raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ScenarioConfigError(f"cannot parse {name}={raw!r} as {kind.__name__}") from exc


def config_schema() -> dict:
    return {f.name: f.type if isinstance(f.type, type) else type(f.default)
            for f in fields(ScenarioConfig)}


def load_config(path: str | None = None, overrides=()) -> ScenarioConfig:
    """Build a ScenarioConfig from a key=value file plus key=value overrides."""
    schema = config_schema()
    values: dict = {}

    def _apply(key: str, raw: str, where: str):
        key = key.strip()
        if key not in schema:
            raise ScenarioConfigError(f"unknown configuration key {key!r} ({where})")
        values[key] = _coerce(key, schema[key], raw.strip())

    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ScenarioConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, raw = line.split("=", 1)
                _apply(key, raw, f"{path}:{lineno}")
    for item in overrides:
        if "=" not in item:
            raise ScenarioConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        _apply(key, raw, "override")
    cfg = ScenarioConfig(**values)
    if cfg.scenario not in SCENARIOS:
        raise ScenarioConfigError(f"unknown scenario {cfg.scenario!r}, expected one of {SCENARIOS}")
    if cfg.sweep_param and cfg.sweep_param not in SWEEPABLE:
        raise ScenarioConfigError(f"sweep parameter must be one of {SWEEPABLE}")
    return cfg


def parse_float_list(raw: str) -> list[float]:
    return [float(tok) for tok in raw.split(",") if tok.strip()]


def atoms_pattern(token: str, n_atoms: int):
    """Resolve an initial-atoms token to a pattern string or amplitude vector."""
    if token == "all-e":
        return "e" * n_atoms
    if token in ("all-g", "g-g"):
        return "g" * n_atoms
    if token == "e-g":
        return "e" + "g" * (n_atoms - 1)
    if token.startswith("custom:"):
        amps = np.array([complex(tok) for tok in token[len("custom:"):].split(",")])
        if amps.size != 2**n_atoms:
            raise ScenarioConfigError(
                f"custom amplitudes have length {amps.size}, expected {2**n_atoms}"
            )
        return amps
    if token and all(c in "eg" for c in token) and len(token) == n_atoms:
        return token
    raise ScenarioConfigError(f"cannot interpret initial_atoms={token!r} for {n_atoms} atoms")


@dataclass
class OutputTable:
    columns: list
    rows: list
    metadata: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows])

    def to_csv(self, path_or_file, timestamp: bool = True):
        own = isinstance(path_or_file, (str, os.PathLike))
        fh = open(path_or_file, "w") if own else path_or_file
        try:
            fh.write(f"# drivencavity {__version__}\n")
            if timestamp:
                fh.write(f"# generated: {datetime.now(timezone.utc).isoformat()}\n")
            for line in self.metadata:
                fh.write(f"# {line}\n")
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(f"{v:.17e}" for v in row) + "\n")
        finally:
            if own:
                fh.close()


def _config_metadata(cfg: ScenarioConfig) -> list:
    return [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(cfg)]


def log_grid(lo: float, hi: float, points_per_decade: int) -> np.ndarray:
    n = max(2, int(round(math.log10(hi / lo) * points_per_decade)) + 1)
    return np.geomspace(lo, hi, n)


def window_report(cfg: SystemConfig):
    """Semiclassical time window (units 1/kappa); degenerate when hi <= lo."""
    p = derived_params(cfg)
    return p.window_lo, p.window_hi


def default_t_max(cfg: SystemConfig) -> float:
    """Time budget from the slowest relevant relaxation rate."""
    gamma = derived_params(cfg).gamma_eff
    budget = 50.0 / gamma if gamma > 0 else 50.0
    if cfg.frame == "thermal":
        budget += 50.0 * (1.0 + 2.0 * cfg.n_th)
    return budget


def empty_cavity_field(cfg: SystemConfig):
    """Initial field state representing an empty lab-frame cavity.

    In the displaced frame an empty cavity is the coherent state |-alpha>;
    in the thermal frame the reservoir-equilibrated field is the natural
    starting point; otherwise plain vacuum.
    """
    if cfg.frame == "displaced":
        return -derived_params(cfg).alpha
    if cfg.frame == "thermal":
        return "thermal"
    return "vacuum"


def _evolve_dispatch(gen, rho0, t_eval, tol):
    """Spectral propagation when affordable (long grids for free), RK otherwise."""
    if gen.layout.dim <= SPECTRAL_MAX_DIM:
        return evolve_spectral(gen, rho0, t_eval)
    return evolve(gen, rho0, t_eval, tol=tol)


def scenario_steady_state(cfg: SystemConfig, atoms_init, residual_tol: float = 1e-9,
                          t_max: float = 0.0) -> DensityMatrix:
    """Steady state from atoms (x) frame-appropriate field initial state.

    Two-atom systems go through the singlet/triplet sector solve; everything
    else through the generic null-space/integration route.
    """
    if t_max <= 0:
        t_max = default_t_max(cfg)
    if cfg.n_atoms == 2:
        try:
            return two_atom_steady_state(cfg, atoms_init, residual_tol=residual_tol)
        except SectorError:
            pass
    gen = build_generator(cfg)
    rho0 = initial_state(cfg, atoms_init, field=empty_cavity_field(cfg))
    result = steady_state(gen, rho0, residual_tol=residual_tol, t_max=t_max)
    return result.rho_ss


def atomic_reduction(rho: DensityMatrix) -> DensityMatrix:
    layout = rho.layout
    if not layout.has_field:
        return rho
    keep = tuple(range(1, layout.n_factors))
    return partial_trace(rho, keep=keep)


def _steady_probe(cfg: SystemConfig, atoms_init, residual_tol: float) -> np.ndarray:
    """Probe observables for the truncation harness: QD, EoF, n_bar."""
    rho = scenario_steady_state(cfg, atoms_init, residual_tol=residual_tol)
    pair = atomic_reduction(rho) if cfg.n_atoms == 2 else None
    if cfg.n_atoms == 2:
        rep = correlation_report(pair)
        qd, ent = rep.qd, rep.eof
    else:
        qd = ent = 0.0
    layout = rho.layout
    stats = field_statistics(partial_trace(rho, keep=(0,))) if layout.has_field else None
    n_bar = stats.n_bar if stats else 0.0
    return np.array([qd, ent, n_bar])


def _thermal_tail_start(n_th: float, tail: float = 1e-6) -> int:
    """Smallest truncation whose thermal occupancy tail mass is below `tail`."""
    if n_th <= 0:
        return 2
    return max(2, int(math.ceil(math.log(tail) / math.log(n_th / (n_th + 1.0)))))


def choose_truncation(cfg: SystemConfig, probe_observables=None, tol: float = 1e-6,
                      start: int | None = None, n_limit: int = 256) -> int:
    """Smallest n_max whose doubling moves every probe observable by < tol."""
    if probe_observables is None:
        def probe_observables(c):
            return _steady_probe(c, "g" * c.n_atoms, residual_tol=1e-9)
    if start is None:
        start = _thermal_tail_start(cfg.n_th, tail=10.0 * tol) if cfg.frame == "thermal" else 4
    n = max(2, start)
    current = probe_observables(replace(cfg, n_max=n))
    while n <= n_limit:
        doubled = probe_observables(replace(cfg, n_max=2 * n))
        if np.max(np.abs(doubled - current)) < tol:
            return n
        n, current = 2 * n, doubled
    raise TruncationError(f"observables not converged in n_max up to {n_limit}")


def _resolve_n_max(scfg: ScenarioConfig, sys_cfg: SystemConfig, atoms_init) -> int:
    if scfg.n_max > 0:
        return scfg.n_max
    return choose_truncation(
        sys_cfg,
        probe_observables=lambda c: _steady_probe(c, atoms_init, scfg.residual_tol),
        tol=scfg.truncation_tol,
    )


def _map_points(func, points, workers: int):
    """Evaluate sweep points, concurrently when asked; order-deterministic."""
    if workers <= 1 or len(points) <= 1:
        return [func(p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, points))


def run_fig1(scfg: ScenarioConfig, which: str = "all") -> OutputTable:
    """Time evolution from all-excited atoms: purity for N = 1..3, QD/EoF for N = 2."""
    grid = log_grid(scfg.t_lo, scfg.t_hi, scfg.points_per_decade)
    t_eval = np.concatenate(([0.0], grid))
    n_list = (1, 2, 3) if which in ("all", "purity") else (2,)
    want_corr = which in ("all", "correlations")
    meta = _config_metadata(scfg)
    columns = ["kt"]
    data = {"kt": grid}

    for n in n_list:
        sys_cfg = scfg.system(n_atoms=n, frame="displaced",
                              n_max=scfg.n_max if scfg.n_max > 0 else 6)
        gen = build_generator(sys_cfg)
        rho0 = initial_state(sys_cfg, "e" * n, field=empty_cavity_field(sys_cfg))
        traj = _evolve_dispatch(gen, rho0, t_eval, scfg.integrator_tol)
        reduced = [atomic_reduction(s) for s in traj.states[1:]]
        if which in ("all", "purity"):
            columns.append(f"purity_N{n}")
            data[f"purity_N{n}"] = [float(np.real(np.trace(r.matrix @ r.matrix)))
                                    for r in reduced]
        if n == 2 and want_corr:
            reports = [correlation_report(r) for r in reduced]
            columns += ["qd_N2", "eof_N2"]
            data["qd_N2"] = [rep.qd for rep in reports]
            data["eof_N2"] = [rep.eof for rep in reports]
        meta.append(f"n_max_used_N{n} = {sys_cfg.n_max}")

    rows = [[data[c][k] for c in columns] for k in range(grid.size)]
    return OutputTable(columns=columns, rows=rows, metadata=meta)


def _steady_point(scfg: ScenarioConfig, sys_cfg: SystemConfig, atoms_init):
    rho = scenario_steady_state(sys_cfg, atoms_init,
                                residual_tol=scfg.residual_tol, t_max=scfg.t_max)
    rep = correlation_report(atomic_reduction(rho))
    res = residual_norm(build_generator(sys_cfg), rho)
    return rho, rep, res


_INIT_CODE = {"e-g": 1.0, "g-g": 0.0, "all-g": 0.0, "all-e": 2.0}


def run_fig2(scfg: ScenarioConfig) -> OutputTable:
    """Stationary QD/EoF versus drive strength, per coupling and initial state."""
    g_values = parse_float_list(scfg.g_list)
    initials = [tok.strip() for tok in scfg.initial_list.split(",") if tok.strip()]
    if scfg.sweep_param == "epsilon" and scfg.sweep_values:
        eps_values = parse_float_list(scfg.sweep_values)
    else:
        eps_values = list(log_grid(scfg.eps_lo, scfg.eps_hi, scfg.points_per_decade))
    if scfg.sweep_param == "g" and scfg.sweep_values:
        g_values = parse_float_list(scfg.sweep_values)

    points = [(g, init, eps) for g in g_values for init in initials for eps in eps_values]
    meta = _config_metadata(scfg)
    failures = []

    def solve(point):
        g, init, eps = point
        sys_cfg = scfg.system(g=g, epsilon=eps, frame="displaced", n_th=0.0)
        pattern = atoms_pattern(init, scfg.n_atoms)
        n_max = _resolve_n_max(scfg, sys_cfg, pattern)
        sys_cfg = replace(sys_cfg, n_max=n_max)
        try:
            _, rep, res = _steady_point(scfg, sys_cfg, pattern)
        except ConvergenceError as exc:
            failures.append((point, str(exc)))
            return None
        code = _INIT_CODE.get(init, math.nan)
        return [g, code, eps, rep.qd, rep.eof, res, float(n_max)]

    rows = [r for r in _map_points(solve, points, scfg.workers) if r is not None]
    meta.append("initial_code: 0 = both atoms ground, 1 = one excited, 2 = both excited")
    for point, msg in failures:
        meta.append(f"FAILED point {point}: {msg}")
    table = OutputTable(
        columns=["g", "initial_code", "epsilon", "qd_ss", "eof_ss", "residual", "n_max"],
        rows=rows, metadata=meta,
    )
    table.failures = failures
    return table


def run_fig3(scfg: ScenarioConfig) -> OutputTable:
    """Stationary QD/EoF versus thermal occupancy at zero drive."""
    nth_values = (parse_float_list(scfg.sweep_values)
                  if scfg.sweep_param == "n_th" and scfg.sweep_values
                  else parse_float_list(scfg.nth_list))
    initials = [tok.strip() for tok in scfg.initial_list.split(",") if tok.strip()]
    points = [(init, nth) for init in initials for nth in nth_values]
    meta = _config_metadata(scfg)
    failures = []

    def solve(point):
        init, nth = point
        sys_cfg = scfg.system(epsilon=0.0, delta=0.0, n_th=nth, frame="thermal")
        pattern = atoms_pattern(init, scfg.n_atoms)
        n_max = _resolve_n_max(scfg, sys_cfg, pattern)
        sys_cfg = replace(sys_cfg, n_max=n_max)
        try:
            _, rep, res = _steady_point(scfg, sys_cfg, pattern)
        except ConvergenceError as exc:
            failures.append((point, str(exc)))
            return None
        return [nth, _INIT_CODE.get(init, math.nan), rep.qd, rep.eof, res, float(n_max)]

    rows = [r for r in _map_points(solve, points, scfg.workers) if r is not None]
    meta.append("initial_code: 0 = both atoms ground, 1 = one excited, 2 = both excited")
    for point, msg in failures:
        meta.append(f"FAILED point {point}: {msg}")
    table = OutputTable(
        columns=["n_th", "initial_code", "qd_ss", "eof_ss", "residual", "n_max"],
        rows=rows, metadata=meta,
    )
    table.failures = failures
    return table


def run_custom(scfg: ScenarioConfig) -> OutputTable:
    """Generic pipeline: generator -> truncation -> evolve or steady state -> report."""
    pattern = atoms_pattern(scfg.initial_atoms, scfg.n_atoms)
    sys_cfg = scfg.system()
    if scfg.frame != "effective-atomic":
        n_max = _resolve_n_max(scfg, sys_cfg, pattern)
        sys_cfg = replace(sys_cfg, n_max=n_max)
    meta = _config_metadata(scfg) + [f"n_max_used = {sys_cfg.n_max}"]
    layout = sys_cfg.layout()

    def observables_row(rho, res):
        row = []
        if sys_cfg.n_atoms == 2:
            rep = correlation_report(atomic_reduction(rho))
            row += [rep.purity, rep.qd, rep.eof, rep.concurrence]
        else:
            red = atomic_reduction(rho)
            row += [float(np.real(np.trace(red.matrix @ red.matrix)))]
        if layout.has_field:
            stats = field_statistics(partial_trace(rho, keep=(0,)))
            row += [stats.n_bar,
                    math.nan if stats.g2 is None else stats.g2,
                    math.nan if stats.mandel_q is None else stats.mandel_q]
        row.append(res)
        return row

    base_cols = (["purity", "qd", "eof", "concurrence"] if sys_cfg.n_atoms == 2
                 else ["purity"])
    if layout.has_field:
        base_cols += ["n_bar", "g2", "mandel_q"]
    base_cols += ["residual"]

    if scfg.custom_mode == "steady":
        rho = scenario_steady_state(sys_cfg, pattern,
                                    residual_tol=scfg.residual_tol, t_max=scfg.t_max)
        res = residual_norm(build_generator(sys_cfg), rho)
        return OutputTable(columns=base_cols, rows=[observables_row(rho, res)], metadata=meta)
    if scfg.custom_mode == "evolve":
        gen = build_generator(sys_cfg)
        rho0 = (initial_state(sys_cfg, pattern, field=empty_cavity_field(sys_cfg))
                if layout.has_field else initial_state(sys_cfg, pattern))
        grid = log_grid(scfg.t_lo, scfg.t_hi, scfg.points_per_decade)
        traj = _evolve_dispatch(gen, rho0, np.concatenate(([0.0], grid)),
                                scfg.integrator_tol)
        rows = []
        for t, state in zip(traj.times[1:], traj.states[1:]):
            rows.append([t] + observables_row(state, residual_norm(gen, state)))
        return OutputTable(columns=["kt"] + base_cols, rows=rows, metadata=meta)
    raise ScenarioConfigError(f"unknown custom_mode {scfg.custom_mode!r}")


def run_scenario(scfg: ScenarioConfig) -> OutputTable:
    if scfg.scenario == "fig1-purity":
        return run_fig1(scfg, which="purity")
    if scfg.scenario == "fig1-correlations":
        return run_fig1(scfg, which="correlations")
    if scfg.scenario == "fig2-sweep":
        return run_fig2(scfg)
    if scfg.scenario == "fig3-thermal":
        return run_fig3(scfg)
    if scfg.scenario == "custom":
        return run_custom(scfg)
    raise ScenarioConfigError(f"unknown scenario {scfg.scenario!r}")
