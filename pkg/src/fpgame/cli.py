"""Scenario runner: one structured-text file in, machine-readable tables out.

A scenario is a TOML file with a `mode` key and mode-specific sections::

    mode = "nash"              # nash | mfg | best_response | simulate
    seed = 0                   #        | classify | convergence
    [market]
    kappa = 0.0
    [[agents]]                 # nash / best_response / simulate
    delta = 2.0
    mu = 0.1
    nu = 0.2
    sigma = 0.3
    [distribution]             # mfg / convergence / simulate (mean field)
    [[distribution.atoms]]
    weight = 0.5
    delta = 0.5
    [simulation]               # simulate: horizon, n_paths, n_common, dt,
    horizon = 1.0              #   antithetic, perturb = {agent, dpi, c_scale}
    [curves]                   # sampling grid for consumption_curves.csv
    t_max = 1.0
    points = 101
    [[classify.paths]]         # classify: one entry per curve
    lam = 2.0
    beta = 1.0
    kappa = 0.0
    [convergence]              # convergence: ns, reps, t_grid
    ns = [10, 100, 1000]

Outputs land in --out: equilibrium.csv, consumption_curves.csv and friends
(CSV floats use repr, the shortest round-trip form), diagnostics.json, and
manifest.json recording the seed and library versions.  Runs are
deterministic: same scenario and seed give byte-identical files at any
thread count.  Exit codes: 0 ok, 1 configuration error, 2 degenerate
market, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from .consumption_analysis import classify
from .core_types import AgentType, ConsumptionPath, Discrete
from .errors import (
    BlowUpHorizon,
    DegenerateConsumption,
    DegenerateElasticity,
    DegenerateMarket,
    DomainError,
    KappaOneError,
    MismatchError,
    NoConvergence,
    QuadratureError,
)
from .forward_fields import ode_residual, pde_residual
from .mfg_solver import solve_mfg, convergence_study
from .nash_solver import best_response, solve_nash
from .simulator import Perturbation, SimConfig, q_drift_test

SCHEMA = "fpgame/1"

_CONFIG_ERRORS = (DomainError, tomli.TOMLDecodeError, KeyError, TypeError, ValueError)
_DEGENERATE_ERRORS = (DegenerateMarket, DegenerateConsumption)
_NUMERICAL_ERRORS = (
    NoConvergence,
    QuadratureError,
    MismatchError,
    BlowUpHorizon,
    DegenerateElasticity,
    KappaOneError,
)


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# scenario loading


def _resolve_scenario(arg: str) -> tuple[str, bytes]:
    p = Path(arg)
    if p.is_file():
        return p.name, p.read_bytes()
    name = arg if arg.endswith(".toml") else arg + ".toml"
    res = resources.files("fpgame") / "scenarios" / name
    if res.is_file():
        return name, res.read_bytes()
    raise ConfigError(f"scenario not found: {arg}")


def _agent_from_table(tab: dict) -> AgentType:
    known = {f for f in AgentType().as_dict()}
    extra = set(tab) - known - {"weight"}
    if extra:
        raise ConfigError(f"unknown agent fields: {sorted(extra)}")
    return AgentType.from_dict({k: float(v) for k, v in tab.items() if k in known})


def _parse_agents(doc: dict) -> list:
    tabs = doc.get("agents")
    if not tabs:
        raise ConfigError("scenario needs an [[agents]] list for this mode")
    return [_agent_from_table(t) for t in tabs]


def _parse_distribution(doc: dict) -> Discrete:
    tab = doc.get("distribution")
    if not tab or "atoms" not in tab:
        raise ConfigError("scenario needs [distribution] with [[distribution.atoms]]")
    atoms, weights = [], []
    for t in tab["atoms"]:
        if "weight" not in t:
            raise ConfigError("every distribution atom needs a weight")
        weights.append(float(t["weight"]))
        atoms.append(_agent_from_table(t))
    return Discrete(atoms=tuple(atoms), weights=tuple(weights))


def _parse_kappa(doc: dict) -> float:
    market = doc.get("market")
    if not market or "kappa" not in market:
        raise ConfigError("scenario needs [market] with kappa")
    return float(market["kappa"])


# ---------------------------------------------------------------------------
# emission helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# shared pieces


def _curve_grid(doc: dict, paths) -> np.ndarray:
    cfg = doc.get("curves", {})
    t_max = float(cfg.get("t_max", 1.0))
    points = int(cfg.get("points", 101))
    if points < 2:
        raise ConfigError("curves.points must be >= 2")
    cap = t_max
    for c in paths:
        ts = c.t_star()
        if ts is not None:
            cap = min(cap, 0.9 * ts)
    return np.linspace(0.0, cap, points)


def _equilibrium_rows(eq_paths):
    rows = []
    for i, (pi, cons, rho) in enumerate(eq_paths):
        rows.append(
            (i, pi, cons.lam, cons.beta, rho, classify(cons).label())
        )
    return _csv(("agent", "pi", "lam", "beta", "rho", "regime"), rows)


def _curves_csv(grid, paths):
    header = ("t",) + tuple(f"agent{i}" for i in range(len(paths)))
    rows = [
        (t,) + tuple(c.value(t) for c in paths) for t in grid
    ]
    return _csv(header, rows)


def _residual_times(paths):
    cap = 1.0
    for c in paths:
        ts = c.t_star()
        if ts is not None:
            cap = min(cap, 0.9 * ts)
    return tuple(frac * cap for frac in (0.2, 0.5, 0.8))


def _nash_residuals(eq) -> dict:
    paths = [s.consumption for s in eq.strategies]
    times = _residual_times(paths)
    xs = (0.5, 1.0, 2.0)
    ode_max, pde_max = 0.0, 0.0
    for i, a in enumerate(eq.agents):
        f = eq.f_factor(i)
        others = [c for k, c in enumerate(paths) if k != i]
        coeffs = eq.pde_coefficients(i)
        for t in times:
            ode_max = max(ode_max, ode_residual(f, paths[i], a, float(eq.rho[i]), others, t))
            for x in xs:
                pde_max = max(pde_max, pde_residual(a, eq.kappa, f, coeffs, x, t))
    return {"ode_max": ode_max, "pde_max": pde_max, "times": list(times), "x": list(xs)}


def _mfg_residuals(eq) -> dict:
    d = eq.distribution
    paths = [eq.strategy(a).consumption for a in d.atoms]
    times = _residual_times(paths)
    xs = (0.5, 1.0, 2.0)
    coeffs = eq.pde_coefficients()
    pde_max = 0.0
    for a in d.atoms:
        f = eq.f_factor(a)
        for t in times:
            for x in xs:
                pde_max = max(pde_max, pde_residual(a, eq.kappa, f, coeffs, x, t))
    return {"pde_max": pde_max, "times": list(times), "x": list(xs)}


def _mfg_identity_residuals(eq) -> dict:
    d, m = eq.distribution, eq.moments
    direct_sigma = d.expect(lambda z: z.sigma * eq.pi(z))
    direct_mu = d.expect(lambda z: z.mu * eq.pi(z))
    direct_total = d.expect(lambda z: (z.nu**2 + z.sigma**2) * eq.pi(z) ** 2)
    return {
        "sigma_pi": abs(direct_sigma - m.sigma_pi_bar),
        "mu_pi": abs(direct_mu - m.mu_pi_bar),
        "total_pi_sq": abs(direct_total - m.Sigma_pi_sq_bar),
    }


# ---------------------------------------------------------------------------
# mode runners: return (csv_files, diagnostics)


def _run_nash(doc, opts):
    agents = _parse_agents(doc)
    eq = solve_nash(agents, _parse_kappa(doc))
    paths = [s.consumption for s in eq.strategies]
    rows = [(float(eq.pi[i]), paths[i], float(eq.rho[i])) for i in range(len(agents))]
    grid = _curve_grid(doc, paths)
    csvs = {
        "equilibrium.csv": _equilibrium_rows(rows),
        "consumption_curves.csv": _curves_csv(grid, paths),
    }
    agg = eq.aggregates
    diag = {
        "aggregates": {
            "phi_sigma_n": agg.phi_sigma_n,
            "psi_sigma_n": agg.psi_sigma_n,
            "sigma_pi_bar": agg.sigma_pi_bar,
            "mu_pi_bar": agg.mu_pi_bar,
            "Sigma_pi_sq_bar": agg.Sigma_pi_sq_bar,
        },
        "theta_crit": eq.theta_crit,
        "residuals": _nash_residuals(eq),
    }
    return csvs, diag


def _run_mfg(doc, opts):
    d = _parse_distribution(doc)
    eq = solve_mfg(d, _parse_kappa(doc))
    paths = [eq.strategy(a).consumption for a in d.atoms]
    rows = [
        (eq.pi(a), paths[i], eq.rho(a)) for i, a in enumerate(d.atoms)
    ]
    grid = _curve_grid(doc, paths)
    csvs = {
        "equilibrium.csv": _equilibrium_rows(rows),
        "consumption_curves.csv": _curves_csv(grid, paths),
    }
    m = eq.moments
    diag = {
        "moments": {
            "psi_sigma": m.psi_sigma,
            "phi_sigma": m.phi_sigma,
            "psi_mu": m.psi_mu,
            "phi_mu": m.phi_mu,
            "sigma_pi_bar": m.sigma_pi_bar,
            "mu_pi_bar": m.mu_pi_bar,
            "Sigma_pi_sq_bar": m.Sigma_pi_sq_bar,
        },
        "weights": list(d.weights),
        "theta_crit": eq.theta_crit,
        "identity_residuals": _mfg_identity_residuals(eq),
        "residuals": _mfg_residuals(eq),
    }
    return csvs, diag


def _run_best_response(doc, opts):
    agents = _parse_agents(doc)
    kappa = _parse_kappa(doc)
    idx = int(doc.get("best_response", {}).get("agent", 0))
    if not 0 <= idx < len(agents):
        raise ConfigError(f"best_response.agent {idx} out of range")
    eq = solve_nash(agents, kappa)
    others = [
        (agents[k], float(eq.pi[k]), eq.consumption(k))
        for k in range(len(agents))
        if k != idx
    ]
    br = best_response(agents[idx], kappa, others)
    closed = eq.consumption(idx)
    grid = _curve_grid(doc, [closed])
    diff_c = max(abs(br.consumption(t) - closed.value(t)) for t in grid)
    rows = [(float(eq.pi[idx]), closed, float(eq.rho[idx]))]
    csvs = {
        "equilibrium.csv": _equilibrium_rows(rows),
        "consumption_curves.csv": _csv(
            ("t", "closed", "best_response"),
            [(t, closed.value(t), br.consumption(t)) for t in grid],
        ),
    }
    diag = {
        "agent": idx,
        "pi_closed": float(eq.pi[idx]),
        "pi_best_response": br.pi,
        "pi_abs_diff": abs(br.pi - float(eq.pi[idx])),
        "consumption_max_abs_diff": diff_c,
    }
    return csvs, diag


def _sim_config(doc, opts) -> SimConfig:
    sim = doc.get("simulation", {})
    n_paths = opts.paths if opts.paths is not None else int(sim.get("n_paths", 20_000))
    dt = opts.dt if opts.dt is not None else sim.get("dt")
    return SimConfig(
        horizon=float(sim.get("horizon", 1.0)),
        dt=float(dt) if dt is not None else None,
        n_paths=n_paths,
        n_common=int(sim.get("n_common", 64)),
        seed=opts.seed if opts.seed is not None else int(doc.get("seed", 0)),
        antithetic=bool(sim.get("antithetic", False)),
        threads=opts.threads,
    )


def _run_simulate(doc, opts):
    kappa = _parse_kappa(doc)
    if "distribution" in doc:
        d = _parse_distribution(doc)
        eq = solve_mfg(d, kappa)
        atoms = list(d.atoms)
        rows = [(eq.pi(a), eq.strategy(a).consumption, eq.rho(a)) for a in atoms]
    else:
        agents = _parse_agents(doc)
        eq = solve_nash(agents, kappa)
        rows = [
            (float(eq.pi[i]), eq.consumption(i), float(eq.rho[i]))
            for i in range(len(agents))
        ]
    config = _sim_config(doc, opts)
    pert_tab = doc.get("simulation", {}).get("perturb")
    perturb = None
    if pert_tab is not None:
        perturb = Perturbation(
            agent=int(pert_tab["agent"]),
            dpi=float(pert_tab.get("dpi", 0.0)),
            c_scale=float(pert_tab.get("c_scale", 1.0)),
        )
    test = q_drift_test(eq, config, perturb=perturb)
    drift_rows = []
    for i in range(test.drift.shape[0]):
        for k, t_end in enumerate(test.window_ends):
            drift_rows.append(
                (
                    i,
                    float(t_end),
                    float(test.drift[i, k]),
                    float(test.se[i, k]),
                    float(test.z[i, k]),
                )
            )
    csvs = {
        "equilibrium.csv": _equilibrium_rows(rows),
        "drift_test.csv": _csv(("agent", "window_end", "drift", "se", "z"), drift_rows),
    }
    diag = {
        "n_paths": config.n_paths,
        "dt": config.dt_eff,
        "horizon": config.horizon,
        "perturb": None
        if perturb is None
        else {"agent": perturb.agent, "dpi": perturb.dpi, "c_scale": perturb.c_scale},
        "window_ends": test.window_ends,
        "drift": test.drift,
        "se": test.se,
        "z": test.z,
        "contains_zero_95": test.contains_zero(),
    }
    return csvs, diag


def _run_classify(doc, opts):
    tab = doc.get("classify", {}).get("paths")
    if not tab:
        raise ConfigError("classify mode needs [[classify.paths]] entries")
    curves_cfg = doc.get("curves", {})
    t_max = float(curves_cfg.get("t_max", 1.0))
    points = int(curves_cfg.get("points", 51))
    rows, curve_rows, reports = [], [], []
    for j, entry in enumerate(tab):
        c = ConsumptionPath(
            lam=float(entry["lam"]),
            beta=float(entry["beta"]),
            kappa=float(entry["kappa"]),
        )
        rep = classify(c)
        kind, value = rep.asymptote
        rows.append(
            (
                j,
                c.lam,
                c.beta,
                c.kappa,
                rep.admissible,
                rep.strong_equilibrium,
                rep.monotonicity,
                kind,
                value,
                rep.label(),
            )
        )
        reports.append(
            {
                "path": j,
                "admissible": rep.admissible,
                "strong_equilibrium": rep.strong_equilibrium,
                "monotonicity": rep.monotonicity,
                "asymptote": [kind, value],
            }
        )
        cap = t_max
        ts = c.t_star()
        if ts is not None:
            cap = min(cap, 0.9 * ts)
        for t in np.linspace(0.0, cap, points):
            curve_rows.append((j, float(t), c.value(float(t))))
    csvs = {
        "classification.csv": _csv(
            (
                "path",
                "lam",
                "beta",
                "kappa",
                "admissible",
                "strong",
                "monotonicity",
                "asymptote_kind",
                "asymptote_value",
                "regime",
            ),
            rows,
        ),
        "consumption_curves.csv": _csv(("path", "t", "c"), curve_rows),
    }
    return csvs, {"reports": reports}


def _run_convergence(doc, opts):
    d = _parse_distribution(doc)
    kappa = _parse_kappa(doc)
    cfg = doc.get("convergence", {})
    ns = [int(n) for n in cfg.get("ns", (10, 100, 1000))]
    reps = int(cfg.get("reps", 20))
    t_grid = [float(t) for t in cfg.get("t_grid", (0.0, 0.25, 0.5))]
    seed = opts.seed if opts.seed is not None else int(doc.get("seed", 0))
    table = convergence_study(d, ns, seed=seed, kappa=kappa, reps=reps, t_grid=t_grid)
    csvs = {
        "convergence.csv": _csv(
            ("n", "pi_error", "c_error"),
            list(zip(table.ns, table.pi_error, table.c_error)),
        )
    }
    diag = {
        "ns": list(table.ns),
        "pi_error": list(table.pi_error),
        "c_error": list(table.c_error),
        "exponent_pi": table.exponent_pi,
        "exponent_c": table.exponent_c,
        "reps": reps,
        "seed": seed,
    }
    return csvs, diag


_RUNNERS = {
    "nash": _run_nash,
    "mfg": _run_mfg,
    "best_response": _run_best_response,
    "simulate": _run_simulate,
    "classify": _run_classify,
    "convergence": _run_convergence,
}


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="fpgame", description=__doc__, add_help=True)
    p.add_argument("--scenario", help="scenario file path or bundled scenario name")
    p.add_argument("--out", default="fpgame_out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--threads", type=int, default=1, help="simulation worker threads")
    p.add_argument("--paths", type=int, default=None, help="override simulation paths")
    p.add_argument("--dt", type=float, default=None, help="override simulation step")
    p.add_argument("--emit", choices=("csv", "json", "both"), default="both")
    return p


def run(scenario: str, out: str, opts) -> int:
    name, raw = _resolve_scenario(scenario)
    doc = tomli.loads(raw.decode("utf-8"))
    mode = doc.get("mode")
    if mode not in _RUNNERS:
        raise ConfigError(f"unknown or missing mode: {mode!r}")
    csvs, diag = _RUNNERS[mode](doc, opts)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if opts.emit in ("csv", "both"):
        for fname, text in csvs.items():
            (out_dir / fname).write_text(text)
    if opts.emit in ("json", "both"):
        payload = {"schema": SCHEMA, "mode": mode}
        payload.update(diag)
        (out_dir / "diagnostics.json").write_text(_dump_json(payload))
    manifest = {
        "emit": opts.emit,
        "mode": mode,
        "scenario": name,
        "schema": SCHEMA,
        "seed": opts.seed if opts.seed is not None else int(doc.get("seed", 0)),
        "versions": {"fpgame": _version(), "numpy": np.__version__},
    }
    (out_dir / "manifest.json").write_text(_dump_json(manifest))
    return 0


def _version() -> str:
    from fpgame import __version__

    return __version__


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        opts = parser.parse_args(argv)
        if not opts.scenario:
            parser.print_usage(sys.stderr)
            print("fpgame: error: --scenario is required", file=sys.stderr)
            return 1
        return run(opts.scenario, opts.out, opts)
    except ConfigError as exc:
        print(f"fpgame: error: {exc}", file=sys.stderr)
        return 1
    except _DEGENERATE_ERRORS as exc:
        print(f"fpgame: degenerate market: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"fpgame: numerical failure: {exc}", file=sys.stderr)
        return 3
    except _CONFIG_ERRORS as exc:
        print(f"fpgame: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
