"""Command line entry point.

Exit status: 0 pass, 1 bound violation or certificate drift, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness as H


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w") as fh:
        fh.write(text)


def _cmd_verify(args) -> int:
    inst = H.InstanceConfig(misfit_cap=args.misfit_cap, dim=args.dim,
                            concentration=args.concentration, sparsify=args.sparsify)
    cfg = H.SweepConfig(seeds=args.seeds, min_size=args.min_size, max_size=args.max_size,
                        first_seed=args.first_seed, instance=inst, workers=args.workers)
    rep = H.run_verification_sweep(cfg)
    if args.out:
        _write(args.out, rep.to_json())
    for name, s in sorted(rep.propositions.items()):
        lo = "n/a" if s.min_slack_lower is None else f"{s.min_slack_lower:.3e}"
        up = "n/a" if s.min_slack_upper is None else f"{s.min_slack_upper:.3e}"
        print(f"{name:18s} evaluated {s.evaluated:5d} applicable {s.applicable:5d} "
              f"min slack lower {lo} upper {up}")
    for v in rep.violations[:20]:
        print(f"VIOLATION seed {v['seed']} {v['proposition']} [{v['variant']}]: {v['detail']}")
    print("PASS" if rep.passed else "FAIL: " + ", ".join(rep.failed_propositions()))
    return 0 if rep.passed else 1


def _cmd_bounds(args) -> int:
    inst = H.load_problem(args.input)
    rep = H.bounds_for(inst, args.metric, args.perturbation)
    text = json.dumps(rep.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    bad = rep.violations()
    for msg in bad:
        print("VIOLATION", msg, file=sys.stderr)
    return 1 if bad else 0


def _cmd_sensitivity(args) -> int:
    if args.steps < 1:
        raise H.InputError("steps must be at least 1")
    if args.beta_max < args.beta_min:
        raise H.InputError("beta-max must not be below beta-min")
    inst = H.load_problem(args.input)
    if args.steps == 1:
        betas = [args.beta_min]
    else:
        betas = np.linspace(args.beta_min, args.beta_max, args.steps).tolist()
    metrics = H.METRICS if args.metric == "all" else (args.metric,)
    rows = H.sensitivity_sweep(inst, betas, mode=args.mode, metrics=metrics)
    _write(args.out, H.sensitivity_csv(rows))
    ok = H.sensitivity_ok(rows)
    if not ok:
        print("FAIL: a sandwich misses the actual value or Z increases in beta", file=sys.stderr)
    return 0 if ok else 1


def _cmd_reproduce(args) -> int:
    cert = H.reproduce(args.example_id, tau=args.tau, n=args.n)
    print(f"{cert.name}:")
    for line in cert.lines():
        print("  " + line)
    if args.out:
        _write(args.out, json.dumps(cert.to_dict(), sort_keys=True, indent=2) + "\n")
    print("PASS" if cert.passed else "FAIL")
    return 0 if cert.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="postbounds",
                                description="Posterior stability bounds: verification and examples.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="randomised sandwich sweep over all bound operations")
    v.add_argument("--seeds", type=int, default=500)
    v.add_argument("--min-size", type=int, default=2)
    v.add_argument("--max-size", type=int, default=30)
    v.add_argument("--first-seed", type=int, default=0)
    v.add_argument("--misfit-cap", type=float, default=H.InstanceConfig.misfit_cap)
    v.add_argument("--dim", type=int, default=H.InstanceConfig.dim)
    v.add_argument("--concentration", type=float, default=H.InstanceConfig.concentration)
    v.add_argument("--sparsify", type=float, default=H.InstanceConfig.sparsify)
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--out")
    v.set_defaults(func=_cmd_verify)

    b = sub.add_parser("bounds", help="bound report for one problem file")
    b.add_argument("--input", required=True)
    b.add_argument("--metric", required=True, choices=H.METRICS)
    b.add_argument("--perturbation", required=True, choices=H.PERTURBATIONS)
    b.add_argument("--out")
    b.set_defaults(func=_cmd_bounds)

    s = sub.add_parser("sensitivity", help="bounds along Phi_beta = beta Phi0")
    s.add_argument("--input", required=True)
    s.add_argument("--beta-min", type=float, default=0.0)
    s.add_argument("--beta-max", type=float, default=8.0)
    s.add_argument("--steps", type=int, default=9)
    s.add_argument("--metric", default="all", choices=("all",) + H.METRICS)
    s.add_argument("--mode", choices=("misfit", "prior"))
    s.add_argument("--out")
    s.set_defaults(func=_cmd_sensitivity)

    r = sub.add_parser("reproduce", help="rebuild a worked example and check its certificate")
    r.add_argument("example_id")
    r.add_argument("--tau", type=float)
    r.add_argument("--n", type=int)
    r.add_argument("--out")
    r.set_defaults(func=_cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (H.InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
