"""Command-line front end: generate / solve / evaluate / verify.

Exit codes: 0 success (and solver converged), 2 solver stopped at the
iteration cap, 3 invalid input, 4 verification or consistency failure.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys

import numpy as np

from . import io
from .instances import generate_instance
from .lqg import GainController, assemble_controller, lqg_value, monte_carlo_cost
from .solver import FWConfig, RobustSolution, saddle_check, solve
from .stacked import (
    LinearOutputController,
    build_stacked,
    controller_cost_trace,
    output_to_purified,
    unroll_kalman,
)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_BAD_INPUT = 3
EXIT_VERIFY_FAILED = 4


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="drlqg",
        description="Distributionally robust LQG: worst-case noise via Frank-Wolfe.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded benchmark instance")
    g.add_argument("--n", type=int, required=True, help="state dimension")
    g.add_argument("--m", type=int, required=True, help="input dimension")
    g.add_argument("--p", type=int, required=True, help="observation dimension")
    g.add_argument("--T", type=int, required=True, help="horizon")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rho", type=float, default=0.1, help="radius for every block")
    g.add_argument("--out", required=True, help="instance file to write")

    s = sub.add_parser("solve", help="solve an instance and write a result bundle")
    s.add_argument("instance")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--tol", type=float, default=1e-3, help="surrogate-gap stopping threshold")
    s.add_argument("--delta", type=float, default=0.95, help="oracle accuracy in (0,1)")
    s.add_argument("--max-iter", type=int, default=1000)
    s.add_argument("--threads", type=int, default=1, help=">1 runs per-block oracles on a pool")

    e = sub.add_parser("evaluate", help="evaluate a stored controller under a noise model")
    e.add_argument("instance")
    e.add_argument("controller", help="controller.json from a result bundle")
    e.add_argument("covariance", help="worst_case.json-format noise model")
    e.add_argument("--rollouts", type=int, default=100000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument(
        "--antithetic",
        action="store_true",
        help="mirror half the noise draws (sanity option; halves distinct draws)",
    )

    v = sub.add_parser("verify", help="audit a result bundle against its instance")
    v.add_argument("instance")
    v.add_argument("result_dir")
    v.add_argument("--samples", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    return ap


def _cmd_generate(args) -> int:
    system, amb, meta = generate_instance(
        n=args.n, m=args.m, p=args.p, T=args.T, seed=args.seed, rho=args.rho
    )
    io.write_instance(args.out, system, amb, generator=meta)
    print(f"wrote {args.out} (n={args.n} m={args.m} p={args.p} T={args.T} rho={args.rho})")
    return EXIT_OK


def _cmd_solve(args) -> int:
    system, amb, _ = io.read_instance(args.instance)
    cfg = FWConfig(
        delta=args.delta,
        tol=args.tol,
        max_iter=args.max_iter,
        parallel_oracles=args.threads > 1,
        threads=args.threads if args.threads > 1 else None,
    )
    sol = solve(system, amb, cfg)
    gain = unroll_kalman(system, sol.worst_case)
    io.write_result_bundle(args.out, sol, gain.U)
    status = "converged" if sol.converged else "NOT converged"
    print(
        f"{status} after {len(sol.trace)} iterations: "
        f"f={sol.f_value:.10g} gap={sol.final_gap:.3e}"
    )
    print(f"result bundle written to {args.out}")
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def _cmd_evaluate(args) -> int:
    system, _, _ = io.read_instance(args.instance)
    K, L, U_out = io.read_controller(args.controller)
    cov, _ = io.read_worst_case(args.covariance)
    st = build_stacked(system)
    out_ctrl = LinearOutputController(
        U=U_out, q=np.zeros(system.m * system.T), m=system.m, p=system.p, T=system.T
    )
    exact = controller_cost_trace(st, output_to_purified(out_ctrl, st), cov)
    stats = monte_carlo_cost(
        system,
        GainController(K=K, L=L),
        cov,
        n_samples=args.rollouts,
        rng=args.seed,
        antithetic=args.antithetic,
    )
    print(f"exact cost      : {exact:.10g}")
    print(f"monte carlo mean: {stats.mean:.10g} +/- {stats.stderr:.4g} (n={stats.n_samples})")
    dev = abs(stats.mean - exact)
    if dev > 3.0 * stats.stderr:
        print(f"DISAGREEMENT: |mean - exact| = {dev:.4g} exceeds 3 SE = {3 * stats.stderr:.4g}")
        return EXIT_VERIFY_FAILED
    print(f"agreement within 3 SE (|mean - exact| = {dev:.4g})")
    return EXIT_OK


def _cmd_verify(args) -> int:
    system, amb, _ = io.read_instance(args.instance)
    cov, meta = io.read_worst_case(os.path.join(args.result_dir, "worst_case.json"))
    K, L, U_out = io.read_controller(os.path.join(args.result_dir, "controller.json"))
    trace = io.read_trace_csv(os.path.join(args.result_dir, "trace.csv"))
    failures = []

    ks = [rec.k for rec in trace]
    if ks != sorted(set(ks)) or not ks:
        failures.append("trace iteration indices are not strictly increasing")
    scale = max(1.0, abs(meta["f_value"]))
    for rec in trace:
        if rec.surrogate_gap < -1e-9 * scale:
            failures.append(f"negative surrogate gap {rec.surrogate_gap:.3e} at iter {rec.k}")

    for name, ball, block in zip(
        ["X0"] + [f"W[{t}]" for t in range(system.T)] + [f"V[{t}]" for t in range(system.T)],
        amb.balls(),
        [cov.X0, *cov.W, *cov.V],
    ):
        if not ball.contains(block, tol=1e-7):
            failures.append(f"worst-case block {name} is outside its ambiguity ball")

    f_check = lqg_value(system, cov)
    if abs(f_check - meta["f_value"]) > 1e-8 * max(1.0, abs(f_check)):
        failures.append(
            f"claimed value {meta['f_value']:.12g} does not match recomputation {f_check:.12g}"
        )

    ctrl = assemble_controller(system, cov)
    for t in range(system.T):
        if np.max(np.abs(ctrl.riccati.K[t] - K[t])) > 1e-8:
            failures.append(f"stored feedback gain K[{t}] does not match recomputation")
        if np.max(np.abs(ctrl.kalman.L[t] - L[t])) > 1e-8:
            failures.append(f"stored filter gain L[{t}] does not match recomputation")
    gain = unroll_kalman(system, cov)
    if np.max(np.abs(gain.U - U_out)) > 1e-8:
        failures.append("stored unrolled gain does not match recomputation")

    sol = RobustSolution(
        worst_case=cov,
        controller=ctrl,
        trace=trace,
        final_gap=meta["final_gap"],
        f_value=meta["f_value"],
        converged=meta["converged"],
        config=meta["config"],
    )
    report = saddle_check(system, amb, sol, n_samples=args.samples, seed=args.seed)
    for label, cost, excess in report.nature_violations:
        failures.append(
            f"nature-side violation ({label}): cost {cost:.10g} exceeds "
            f"f + slack by {excess:.4g}"
        )
    for label, cost, shortfall in report.controller_violations:
        failures.append(
            f"controller-side violation ({label}): cost {cost:.10g} undercuts f by {shortfall:.4g}"
        )

    if failures:
        print(f"verification FAILED ({len(failures)} finding(s)):")
        for f in failures:
            print(f"  - {f}")
        return EXIT_VERIFY_FAILED
    print(
        f"verification passed: feasible worst case, value confirmed, saddle audit clean "
        f"({report.n_samples} samples per side)"
    )
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "verify":
            return _cmd_verify(args)
    except (io.FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_BAD_INPUT
    raise AssertionError("unreachable")


if __name__ == "__main__":
    raise SystemExit(main())
