"""Frank-Wolfe solver for the worst-case noise model and its verifier.

The inner maximization  max f(X0, W, V)  over the product of floored
Gelbrich balls is concave, so a Frank-Wolfe scheme applies: at each iterate
compute the gradient blocks, call the per-block linearization oracle
(independent calls, optionally run on a thread pool, always combined in the
fixed block order X0, W_0.., V_0..), sum the per-block surrogate gaps into
g_k, stop once g_k falls below the tolerance, and otherwise move with the
open-loop step 2/(2+k).  The returned controller is the Kalman controller
assembled at the worst-case profile; by the separation structure it is a
best response, which makes the pair a saddle point.

``saddle_check`` audits a claimed solution from both sides: no feasible
noise profile (including an adversarially constructed best response) should
beat the claimed value by more than the convergence slack, and no causal
perturbation of the controller should do better against the worst case.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import AmbiguitySpec, oracle_maximize, sample_feasible
from .gradient import grad_f, _grad_from_solutions
from .lqg import (
    CovarianceProfile,
    KalmanController,
    TimeVaryingSystem,
    _value_from_solutions,
    assemble_controller,
    kalman_forward,
    riccati_backward,
)
from .linalg import symmetrize
from .stacked import (
    LinearPurifiedController,
    build_stacked,
    controller_cost_trace,
    output_to_purified,
    unroll_kalman,
)


@dataclass(frozen=True)
class FWConfig:
    """Solver knobs.

    ``tol`` is an absolute threshold on the summed surrogate gap, ``delta``
    the per-block oracle accuracy, and ``threads`` the worker count when
    ``parallel_oracles`` is on (defaults to one worker per block).
    """

    delta: float = 0.95
    tol: float = 1e-3
    max_iter: int = 1000
    parallel_oracles: bool = False
    threads: int | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.threads is not None and self.threads < 1:
            raise ValueError(f"threads must be at least 1, got {self.threads}")


@dataclass(frozen=True)
class FWIteration:
    k: int
    f_value: float
    surrogate_gap: float
    wall_time: float


@dataclass(frozen=True)
class RobustSolution:
    worst_case: CovarianceProfile
    controller: KalmanController
    trace: tuple
    final_gap: float
    f_value: float
    converged: bool
    config: FWConfig


def _blocks(cov: CovarianceProfile) -> list[np.ndarray]:
    return [cov.X0, *cov.W, *cov.V]


def _profile_from_blocks(blocks, T: int) -> CovarianceProfile:
    return CovarianceProfile(X0=blocks[0], W=tuple(blocks[1 : 1 + T]), V=tuple(blocks[1 + T :]))


def solve(
    sys: TimeVaryingSystem,
    amb: AmbiguitySpec,
    config: FWConfig | None = None,
    on_iterate=None,
) -> RobustSolution:
    """Find the least-favorable noise profile and its optimal controller.

    Starts from the nominal profile.  When the gap tolerance is not reached
    within ``max_iter`` iterations the iterate with the smallest recorded
    gap is returned, flagged ``converged=False``.  ``on_iterate(k, cov, gap)``
    is invoked once per iteration (used by audits and tests).
    """
    cfg = config if config is not None else FWConfig()
    if amb.nominal.T != sys.T or amb.nominal.n != sys.n or amb.nominal.p != sys.p:
        raise ValueError("ambiguity set does not match the system dimensions")
    balls = amb.balls()
    ric = riccati_backward(sys)
    cov = amb.nominal
    trace = []
    best = None  # (gap, f, cov)
    converged = False
    pool = None
    if cfg.parallel_oracles:
        workers = cfg.threads if cfg.threads is not None else len(balls)
        pool = ThreadPoolExecutor(max_workers=workers)
    start = time.perf_counter()
    try:
        for k in range(cfg.max_iter):
            kal = kalman_forward(sys, cov)
            f_k = _value_from_solutions(sys, ric, kal, cov.X0)
            grads = _grad_from_solutions(sys, ric, kal).flat()
            refs = _blocks(cov)
            calls = list(zip(balls, grads, refs))
            if pool is not None:
                results = list(
                    pool.map(lambda args: oracle_maximize(*args, delta=cfg.delta), calls)
                )
            else:
                results = [oracle_maximize(*args, delta=cfg.delta) for args in calls]
            gap = sum(r.gap_contribution for r in results)  # fixed block order
            trace.append(
                FWIteration(
                    k=k, f_value=f_k, surrogate_gap=gap, wall_time=time.perf_counter() - start
                )
            )
            if on_iterate is not None:
                on_iterate(k, cov, gap)
            if best is None or gap < best[0]:
                best = (gap, f_k, cov)
            if gap <= cfg.tol:
                converged = True
                break
            alpha = 2.0 / (2.0 + k)
            stepped = [
                symmetrize(z + alpha * (r.maximizer - z)) for z, r in zip(refs, results)
            ]
            cov = _profile_from_blocks(stepped, sys.T)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)
    final_gap, f_value, worst = best
    return RobustSolution(
        worst_case=worst,
        controller=assemble_controller(sys, worst),
        trace=tuple(trace),
        final_gap=final_gap,
        f_value=f_value,
        converged=converged,
        config=cfg,
    )


@dataclass(frozen=True)
class SaddleReport:
    """Outcome of the two-sided saddle audit.

    ``nature_violations`` lists (label, cost, excess) for feasible noise
    profiles that beat the claimed value by more than ``nature_slack``;
    ``controller_violations`` lists (label, cost, shortfall) for causal
    controller perturbations that undercut it at the worst case.
    """

    f_value: float
    nature_slack: float
    controller_slack: float
    nature_violations: tuple
    controller_violations: tuple
    n_samples: int

    @property
    def passed(self) -> bool:
        return not self.nature_violations and not self.controller_violations


def saddle_check(
    sys: TimeVaryingSystem,
    amb: AmbiguitySpec,
    sol: RobustSolution,
    n_samples: int = 100,
    seed: int = 0,
) -> SaddleReport:
    """Audit a solution as an approximate saddle point.

    Nature side: the claimed controller's exact cost is evaluated on
    ``n_samples`` random feasible profiles plus nature's oracle best response
    at the worst case; none may exceed f* by more than
    max(10 * tol, 1e-6 * scale), the slack implied by the convergence
    tolerance the run claims.  (A truncated run's best response exceeds that
    slack, which is what makes this a usable negative control.)

    Controller side: random causal perturbations of the gain and offset must
    not reduce the exact cost below f* - 1e-9 * scale at the worst case --
    the best response is an exact minimizer, so only numerics may move it.
    """
    rng = np.random.default_rng(seed)
    f_star = sol.f_value
    scale = max(1.0, abs(f_star))
    nature_slack = max(10.0 * sol.config.tol, 1e-6 * scale)
    controller_slack = 1e-9 * scale
    st = build_stacked(sys)
    upur = output_to_purified(unroll_kalman(sys, sol.worst_case), st)
    balls = amb.balls()

    nature_violations = []
    grads = grad_f(sys, sol.worst_case).flat()
    adv_blocks = [
        oracle_maximize(ball, g, z, delta=0.99).maximizer
        for ball, g, z in zip(balls, grads, _blocks(sol.worst_case))
    ]
    candidates = [("best-response", _profile_from_blocks(adv_blocks, sys.T))]
    for i in range(n_samples):
        blocks = [sample_feasible(ball, rng) for ball in balls]
        candidates.append((f"sample-{i}", _profile_from_blocks(blocks, sys.T)))
    for label, profile in candidates:
        cost = controller_cost_trace(st, upur, profile)
        if cost > f_star + nature_slack:
            nature_violations.append((label, cost, cost - f_star - nature_slack))

    controller_violations = []
    mT, pT = sys.m * sys.T, sys.p * sys.T
    base_scale = max(1.0, float(np.linalg.norm(upur.U)))
    for i in range(n_samples):
        raw = rng.standard_normal((mT, pT))
        mask = np.zeros((mT, pT))
        for t in range(sys.T):
            mask[t * sys.m : (t + 1) * sys.m, : (t + 1) * sys.p] = 1.0
        du = raw * mask
        du *= rng.uniform(0.0, 0.5) * base_scale / max(np.linalg.norm(du), 1e-300)
        dq = rng.standard_normal(mT)
        dq *= rng.uniform(0.0, 0.5) * base_scale / max(np.linalg.norm(dq), 1e-300)
        perturbed = LinearPurifiedController(
            U=upur.U + du, q=upur.q + dq, m=sys.m, p=sys.p, T=sys.T
        )
        cost = controller_cost_trace(st, perturbed, sol.worst_case)
        if cost < f_star - controller_slack:
            controller_violations.append((f"perturbation-{i}", cost, f_star - cost))

    return SaddleReport(
        f_value=f_star,
        nature_slack=nature_slack,
        controller_slack=controller_slack,
        nature_violations=tuple(nature_violations),
        controller_violations=tuple(controller_violations),
        n_samples=n_samples,
    )
