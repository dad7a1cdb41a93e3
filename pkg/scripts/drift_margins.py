#!/usr/bin/env python3
"""Monte Carlo drift margins of the forward performance process Q.

At the equilibrium every agent's Q is a martingale, so each window drift
should sit inside its confidence band around zero; deviating strategies
(shifted investment, scaled consumption) make Q a strict supermartingale
and push the drift many standard errors below zero.  Prints one drift
table per strategy profile.
"""
import argparse

import numpy as np

from fpgame import (
    AgentType,
    Discrete,
    Perturbation,
    SimConfig,
    q_drift_test,
    solve_mfg,
    solve_nash,
)

HOMOG = [AgentType(delta=0.5, theta=0.9, epsilon=1.0, mu=0.1, nu=0.0, sigma=0.4)] * 5
HET = [
    AgentType(delta=0.45, theta=0.92, epsilon=1.2, mu=0.10, nu=0.03, sigma=0.35),
    AgentType(delta=0.60, theta=0.90, epsilon=0.8, mu=0.12, nu=0.08, sigma=0.40),
    AgentType(delta=0.40, theta=0.80, epsilon=1.5, mu=0.09, nu=0.05, sigma=0.30),
]
TWO_POINT = Discrete(
    atoms=(
        AgentType(delta=0.5, theta=0.9, epsilon=1.0, mu=0.10, nu=0.05, sigma=0.40),
        AgentType(delta=0.45, theta=0.85, epsilon=1.2, mu=0.12, nu=0.03, sigma=0.35),
    ),
    weights=(0.5, 0.5),
)


def build(name: str, kappa: float):
    if name == "homogeneous":
        return solve_nash(HOMOG, kappa)
    if name == "heterogeneous":
        return solve_nash(HET, kappa)
    return solve_mfg(TWO_POINT, kappa)


def show(label: str, test) -> None:
    print(f"\n{label}")
    print(f"{'agent':>5}  {'window end':>10}  {'drift':>12}  {'se':>10}  {'z':>8}")
    for i in range(test.drift.shape[0]):
        for k, t_end in enumerate(test.window_ends):
            print(
                f"{i:>5}  {t_end:>10.2f}  {test.drift[i, k]:>12.3e}  "
                f"{test.se[i, k]:>10.3e}  {test.z[i, k]:>8.2f}"
            )
    print(f"max |z| = {np.abs(test.z).max():.2f}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--instance",
        choices=("homogeneous", "heterogeneous", "mean-field", "all"),
        default="all",
    )
    ap.add_argument("--kappa", type=float, default=1.5)
    ap.add_argument(
        "--paths", type=int, default=20_000,
        help="Monte Carlo paths (the release gate uses 100000)",
    )
    ap.add_argument("--dt", type=float, default=1.0 / 500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    names = (
        ("homogeneous", "heterogeneous", "mean-field")
        if args.instance == "all"
        else (args.instance,)
    )
    cfg = SimConfig(
        horizon=1.0, dt=args.dt, n_paths=args.paths, seed=args.seed,
        threads=args.threads,
    )
    for name in names:
        eq = build(name, args.kappa)
        print(f"\n=== {name} instance, {args.paths} paths, dt={cfg.dt_eff:.4f} ===")
        show("equilibrium profile (drift should straddle zero)", q_drift_test(eq, cfg))
        for pert, label in (
            (Perturbation(agent=0, dpi=0.2), "agent 0 invests pi + 0.2"),
            (Perturbation(agent=0, dpi=-0.2), "agent 0 invests pi - 0.2"),
            (Perturbation(agent=0, c_scale=1.3), "agent 0 consumes 1.3 c"),
        ):
            show(label, q_drift_test(eq, cfg, perturb=pert))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
