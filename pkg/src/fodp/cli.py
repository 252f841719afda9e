"""Command-line entry point: ``fodp <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .accountant import DEFAULT_ORDERS, RdpCurve, compose, rdp_curve_values, to_eps_delta
from .core import ConfigError, MechanismConfig, PrivacyConfig, Rng
from .harness import SWEEP_AXES, load_config, report, run, summarize, sweep
from .mechanism import run_mechanism
from .oracle import check_decomposition, check_reductions, sensitivity_trials, small_problem
from .sampling import DatasetHandle


def _parse_values(axis: str, text: str) -> list:
    items = [v.strip() for v in text.split(",") if v.strip()]
    if not items:
        raise ConfigError("--values is empty")
    if axis == "variant":
        return items
    if axis == "K":
        return [int(v) for v in items]
    return [float(v) for v in items]


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    for rl in run(cfg, args.out):
        f = rl.final
        print(f"{f['algorithm']} seed={f['seed']} final_accuracy={f['final_accuracy']:.4f} "
              f"best_accuracy={f['best_accuracy']:.4f} epsilon={f['final_epsilon']:.4f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = _parse_values(args.axis, args.values)
    results, _ = sweep(cfg, args.axis, values, args.out)
    for value, logs in results.items():
        accs = [rl.final["final_accuracy"] for rl in logs]
        eps = logs[0].final["final_epsilon"]
        print(f"{args.axis}={value} mean_final_accuracy={sum(accs) / len(accs):.4f} epsilon={eps:.4f}")
    return 0


def cmd_account(args) -> int:
    if not 0 < args.beta <= 1:
        raise ConfigError(f"beta must lie in (0, 1], got {args.beta}")
    if args.steps < 0:
        raise ConfigError("steps must be >= 0")
    rho = args.sigma / args.beta
    per_step = rdp_curve_values(args.q, rho, DEFAULT_ORDERS)
    curve = compose(RdpCurve(DEFAULT_ORDERS), per_step, args.steps)
    eps, order = to_eps_delta(curve, args.delta) if args.steps else (0.0, None)
    out = {
        "q": args.q, "sigma": args.sigma, "beta": args.beta, "rho": rho,
        "steps": args.steps, "delta": args.delta, "epsilon": eps, "best_order": order,
        "curve": [{"order": o, "rdp": float(v)} for o, v in zip(curve.orders, curve.eps_at_order)],
    }
    json.dump(out, sys.stdout, indent=2)
    print()
    return 0


def cmd_verify(args) -> int:
    failed = False

    for t in sensitivity_trials(trials=args.trials, seed=args.seed):
        ok = t.violations == 0 and t.min_ratio >= 0.999
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'} sensitivity beta={t.beta}: {t.trials} trials, "
              f"max observed/bound={t.max_ratio:.12f}, tightest trial={t.min_ratio:.12f}")

    problem = small_problem(args.seed)
    mech, priv = MechanismConfig(beta=0.9, memory_window=8), PrivacyConfig(q=0.25)
    _, tr = run_mechanism("fo_dp_sgd", problem.theta0, DatasetHandle(problem.labels, priv.q),
                          problem.grad_fn, mech, priv, 0.8, 30, Rng(args.seed), retain_debug=True)
    err = check_decomposition(tr)
    ok = err < 1e-9
    failed |= not ok
    print(f"{'PASS' if ok else 'FAIL'} decomposition: max relative error {err:.3e} over 30 steps")

    for name, ok in check_reductions(args.seed).items():
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'} reduction {name}")
    return 1 if failed else 0


def cmd_report(args) -> int:
    for name, path in report(args.in_dir, args.out).items():
        print(f"wrote {path}")
    return 0


def cmd_summarize(args) -> int:
    out = args.out or str(Path(args.in_dir) / "summary.csv")
    rows = summarize(args.in_dir, out)
    for r in rows:
        if r["metric"] != "final_accuracy":
            continue
        if r["std"] is None:
            print(f"{r['algorithm']}: n={r['n']} mean={r['mean']:.4f} ({r['note']})")
        else:
            print(f"{r['algorithm']}: n={r['n']} mean={r['mean']:.4f} std={r['std']:.4f} "
                  f"95% CI=[{r['ci_low']:.4f}, {r['ci_high']:.4f}]")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fodp", description="Recursive-memory DP-SGD experiments and checks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train every seed of a config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default=None, help="override output_dir")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="one-axis ablation sweep")
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("account", help="privacy curve and (epsilon, delta) as JSON")
    a.add_argument("--q", type=float, required=True)
    a.add_argument("--sigma", type=float, required=True)
    a.add_argument("--beta", type=float, default=1.0)
    a.add_argument("--steps", type=int, required=True)
    a.add_argument("--delta", type=float, default=1e-5)
    a.set_defaults(func=cmd_account)

    v = sub.add_parser("verify", help="sensitivity, decomposition and reduction checks")
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="plot-ready CSVs from run logs")
    r.add_argument("--in", dest="in_dir", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    m = sub.add_parser("summarize", help="mean, std and 95%% t-interval per algorithm")
    m.add_argument("--in", dest="in_dir", required=True)
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_summarize)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
