"""Finite-horizon LQG machinery for time-varying linear systems.

The plant is

    x_{t+1} = A_t x_t + B_t u_t + w_t,      y_t = C_t x_t + v_t,

for t = 0..T-1, with x_0 ~ N(0, X0), w_t ~ N(0, W_t), v_t ~ N(0, V_t) all
independent, and quadratic cost

    J = sum_{t<T} (x_t' Q_t x_t + u_t' R_t u_t) + x_T' Q_T x_T.

This module provides the backward Riccati recursion for the control gains,
the forward Kalman recursion for the estimator, the exact expected cost of
the optimal output-feedback controller, and a causal simulator for rolling
out controllers against sampled (or adversarially chosen) noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    PSD_CLAMP_REL,
    SingularMatrixError,
    min_eigval,
    psd_sqrt,
    spd_solve,
    symmetrize,
)


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


def _stage_tuple(mats, count, shape, name) -> tuple[np.ndarray, ...]:
    mats = tuple(np.asarray(m, dtype=float) for m in mats)
    if len(mats) != count:
        raise ValueError(f"{name}: expected {count} matrices, got {len(mats)}")
    for t, m in enumerate(mats):
        if m.shape != shape:
            raise ValueError(f"{name}[{t}]: expected shape {shape}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError(f"{name}[{t}] contains non-finite entries")
    return tuple(_frozen(m) for m in mats)


def _sym_stage_tuple(mats, count, dim, name, psd=False, pd=False):
    mats = _stage_tuple(mats, count, (dim, dim), name)
    out = []
    for t, m in enumerate(mats):
        m = symmetrize(m)
        lo = min_eigval(m)
        if pd and lo <= 0.0:
            raise ValueError(f"{name}[{t}] must be positive definite (min eig {lo:.3e})")
        if psd and lo < -PSD_CLAMP_REL * np.linalg.norm(m):
            raise ValueError(f"{name}[{t}] must be positive semidefinite (min eig {lo:.3e})")
        out.append(_frozen(m))
    return tuple(out)


@dataclass(frozen=True)
class TimeVaryingSystem:
    """Plant and cost data over a horizon of T stages.

    ``A``, ``B``, ``C`` and ``R`` each hold one matrix per stage t = 0..T-1;
    ``Q`` holds T+1 matrices including the terminal state cost Q_T.  State
    costs must be PSD and input costs strictly PD.
    """

    A: tuple
    B: tuple
    C: tuple
    Q: tuple
    R: tuple

    def __post_init__(self):
        A = tuple(np.asarray(a, dtype=float) for a in self.A)
        if not A:
            raise ValueError("horizon must contain at least one stage")
        n = A[0].shape[0]
        B = tuple(np.asarray(b, dtype=float) for b in self.B)
        C = tuple(np.asarray(c, dtype=float) for c in self.C)
        if B[0].ndim != 2 or C[0].ndim != 2:
            raise ValueError("B and C must be matrices")
        m, p = B[0].shape[1], C[0].shape[0]
        T = len(A)
        object.__setattr__(self, "A", _stage_tuple(A, T, (n, n), "A"))
        object.__setattr__(self, "B", _stage_tuple(B, T, (n, m), "B"))
        object.__setattr__(self, "C", _stage_tuple(C, T, (p, n), "C"))
        object.__setattr__(self, "Q", _sym_stage_tuple(self.Q, T + 1, n, "Q", psd=True))
        object.__setattr__(self, "R", _sym_stage_tuple(self.R, T, m, "R", pd=True))

    @property
    def T(self) -> int:
        return len(self.A)

    @property
    def n(self) -> int:
        return self.A[0].shape[0]

    @property
    def m(self) -> int:
        return self.B[0].shape[1]

    @property
    def p(self) -> int:
        return self.C[0].shape[0]


@dataclass(frozen=True)
class CovarianceProfile:
    """A zero-mean Gaussian noise model: X0 plus per-stage W_t and V_t.

    All blocks are symmetrized on construction and must be PSD up to the
    roundoff clamping tolerance.
    """

    X0: np.ndarray
    W: tuple
    V: tuple

    def __post_init__(self):
        x0 = symmetrize(self.X0)
        n = x0.shape[0]
        W = tuple(np.asarray(w, dtype=float) for w in self.W)
        V = tuple(np.asarray(v, dtype=float) for v in self.V)
        if not W or len(W) != len(V):
            raise ValueError("W and V must be non-empty and of equal length")
        p = V[0].shape[0]
        T = len(W)
        for name, block in [("X0", x0)] + [(f"W[{t}]", w) for t, w in enumerate(W)] + [
            (f"V[{t}]", v) for t, v in enumerate(V)
        ]:
            s = symmetrize(block)
            if not np.all(np.isfinite(s)):
                raise ValueError(f"{name} contains non-finite entries")
            if min_eigval(s) < -PSD_CLAMP_REL * np.linalg.norm(s):
                raise ValueError(f"{name} is not positive semidefinite")
        object.__setattr__(self, "X0", _frozen(x0))
        object.__setattr__(
            self, "W", tuple(_frozen(symmetrize(w)) for w in _stage_tuple(W, T, (n, n), "W"))
        )
        object.__setattr__(
            self, "V", tuple(_frozen(symmetrize(v)) for v in _stage_tuple(V, T, (p, p), "V"))
        )

    @property
    def T(self) -> int:
        return len(self.W)

    @property
    def n(self) -> int:
        return self.X0.shape[0]

    @property
    def p(self) -> int:
        return self.V[0].shape[0]


@dataclass(frozen=True)
class RiccatiSolution:
    """Cost-to-go matrices P_0..P_T and feedback gains K_0..K_{T-1}."""

    P: tuple
    K: tuple


@dataclass(frozen=True)
class KalmanSolution:
    """Filter covariances and gains from the forward recursion.

    ``Sigma[t]`` is the filtered covariance at stage t; ``Sigma_pred`` holds
    the predicted covariances with ``Sigma_pred[0] == X0`` (the recursion's
    initialization) and ``Sigma_pred[t]`` the one-step-ahead covariance for
    t = 1..T.  ``L[t]`` is the filter gain Sigma_t C_t' V_t^{-1}.
    """

    Sigma: tuple
    Sigma_pred: tuple
    L: tuple


def riccati_backward(sys: TimeVaryingSystem) -> RiccatiSolution:
    """Backward Riccati recursion.

        P_T = Q_T
        K_t = -(R_t + B_t' P_{t+1} B_t)^{-1} B_t' P_{t+1} A_t
        P_t = A_t' P_{t+1} A_t + Q_t - A_t' P_{t+1} B_t (R_t + B_t' P_{t+1} B_t)^{-1} B_t' P_{t+1} A_t

    The inner matrix R_t + B_t' P_{t+1} B_t is PD because R_t is PD and
    P_{t+1} is PSD; a failed factorization raises ``SingularMatrixError``.
    """
    T = sys.T
    P = [None] * (T + 1)
    K = [None] * T
    P[T] = sys.Q[T]
    for t in reversed(range(T)):
        PB = P[t + 1] @ sys.B[t]
        inner = symmetrize(sys.R[t] + sys.B[t].T @ PB)
        lin = PB.T @ sys.A[t]  # B_t' P_{t+1} A_t
        K[t] = -spd_solve(inner, lin)
        P[t] = symmetrize(sys.A[t].T @ P[t + 1] @ sys.A[t] + sys.Q[t] + lin.T @ K[t])
    return RiccatiSolution(P=tuple(_frozen(m) for m in P), K=tuple(_frozen(m) for m in K))


def _kalman_forward_raw(sys: TimeVaryingSystem, X0, W, V) -> KalmanSolution:
    """Forward recursion on raw arrays; V_t must be PD at every stage."""
    T = sys.T
    Sig = [None] * T
    L = [None] * T
    pred = [None] * (T + 1)
    pred[0] = symmetrize(X0)
    s = pred[0]
    for t in range(T):
        C = sys.C[t]
        if min_eigval(V[t]) <= 0.0:
            raise SingularMatrixError(
                f"observation covariance V[{t}] is not positive definite"
            )
        m_t = symmetrize(C @ s @ C.T + V[t])
        gain = spd_solve(m_t, C @ s).T  # Sigma_{t|t-1} C' M^{-1}
        Sig[t] = symmetrize(s - gain @ C @ s)
        L[t] = spd_solve(V[t], C @ Sig[t]).T  # Sigma_t C' V^{-1}
        s = symmetrize(sys.A[t] @ Sig[t] @ sys.A[t].T + W[t])
        pred[t + 1] = s
    return KalmanSolution(
        Sigma=tuple(_frozen(x) for x in Sig),
        Sigma_pred=tuple(_frozen(x) for x in pred),
        L=tuple(_frozen(x) for x in L),
    )


def kalman_forward(sys: TimeVaryingSystem, cov: CovarianceProfile) -> KalmanSolution:
    """Forward Kalman recursion.

        Sigma_{0|-1} = X0
        Sigma_t = Sigma_{t|t-1} - Sigma_{t|t-1} C_t' (C_t Sigma_{t|t-1} C_t' + V_t)^{-1} C_t Sigma_{t|t-1}
        Sigma_{t+1|t} = A_t Sigma_t A_t' + W_t
        L_t = Sigma_t C_t' V_t^{-1}
    """
    _check_dims(sys, cov)
    return _kalman_forward_raw(sys, cov.X0, cov.W, cov.V)


def _check_dims(sys: TimeVaryingSystem, cov: CovarianceProfile):
    if cov.T != sys.T or cov.n != sys.n or cov.p != sys.p:
        raise ValueError(
            f"covariance profile (n={cov.n}, p={cov.p}, T={cov.T}) does not match "
            f"system (n={sys.n}, p={sys.p}, T={sys.T})"
        )


def _value_from_solutions(
    sys: TimeVaryingSystem, ric: RiccatiSolution, kal: KalmanSolution, X0
) -> float:
    """Expected optimal cost from precomputed recursions.

        f = sum_{t<T} tr((Q_t - P_t) Sigma_t)
          + sum_{t=1..T} tr(P_t Sigma_{t|t-1}) + tr(P_0 X0)
    """
    T = sys.T
    f = float(np.trace(ric.P[0] @ X0))
    for t in range(T):
        f += float(np.trace((sys.Q[t] - ric.P[t]) @ kal.Sigma[t]))
        f += float(np.trace(ric.P[t + 1] @ kal.Sigma_pred[t + 1]))
    return f


def lqg_value(
    sys: TimeVaryingSystem,
    cov: CovarianceProfile,
    riccati: RiccatiSolution | None = None,
    kalman: KalmanSolution | None = None,
) -> float:
    """Exact expected cost of the optimal output-feedback controller.

    Precomputed ``riccati``/``kalman`` solutions may be supplied to avoid
    re-running the recursions when evaluating many profiles on one system.
    """
    ric = riccati if riccati is not None else riccati_backward(sys)
    kal = kalman if kalman is not None else kalman_forward(sys, cov)
    return _value_from_solutions(sys, ric, kal, cov.X0)


@dataclass(frozen=True)
class KalmanController:
    """Certainty-equivalence output-feedback controller u_t = K_t xhat_t.

    The state estimate follows

        xhat_0 = L_0 y_0
        xhat_{t+1} = A_t xhat_t + B_t u_t
                     + L_{t+1} (y_{t+1} - C_{t+1} (A_t xhat_t + B_t u_t)).

    Instances are immutable; per-rollout filter state lives in the policy
    object returned by :meth:`make_policy`.
    """

    riccati: RiccatiSolution
    kalman: KalmanSolution
    system: TimeVaryingSystem

    def make_policy(self, sys: TimeVaryingSystem | None = None):
        return _KalmanPolicy(sys or self.system, self.riccati.K, self.kalman.L)


@dataclass(frozen=True)
class GainController:
    """Controller specified directly by gain sequences (K_t, L_t)."""

    K: tuple
    L: tuple

    def make_policy(self, sys: TimeVaryingSystem):
        return _KalmanPolicy(sys, self.K, self.L)


class _KalmanPolicy:
    """Stateful causal rollout of a Kalman-filter controller.

    Supports batched observations: ``step(t, y)`` accepts ``y`` of shape
    ``(p,)`` or ``(N, p)`` and returns inputs of matching leading shape.
    """

    def __init__(self, sys, K, L):
        self._sys = sys
        self._K = K
        self._L = L
        self._t = 0
        self._xhat = None
        self._u = None

    def step(self, t: int, y):
        if t != self._t:
            raise ValueError(f"policy stepped out of order: expected t={self._t}, got {t}")
        sys = self._sys
        if t == 0:
            self._xhat = y @ self._L[0].T
        else:
            pred = self._xhat @ sys.A[t - 1].T + self._u @ sys.B[t - 1].T
            self._xhat = pred + (y - pred @ sys.C[t].T) @ self._L[t].T
        self._u = self._xhat @ self._K[t].T
        self._t += 1
        return self._u


def assemble_controller(sys: TimeVaryingSystem, cov: CovarianceProfile) -> KalmanController:
    """Run both recursions and package the optimal controller for ``cov``."""
    return KalmanController(
        riccati=riccati_backward(sys), kalman=kalman_forward(sys, cov), system=sys
    )


@dataclass(frozen=True)
class SimulationResult:
    cost: float
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray


def _quad(x, M):
    return np.einsum("...i,ij,...j->...", x, M, x)


def _roll(sys: TimeVaryingSystem, policy, x0, w, v):
    """Roll out a policy; all arrays may carry one leading batch dimension."""
    T = sys.T
    x = x0
    cost = _quad(x, sys.Q[0]) * 0.0  # zeros with the right batch shape
    xs, us, ys = [x], [], []
    for t in range(T):
        y = x @ sys.C[t].T + v[..., t, :]
        u = policy.step(t, y)
        cost = cost + _quad(x, sys.Q[t]) + _quad(u, sys.R[t])
        x = x @ sys.A[t].T + u @ sys.B[t].T + w[..., t, :]
        xs.append(x)
        us.append(u)
        ys.append(y)
    cost = cost + _quad(x, sys.Q[T])
    return cost, np.stack(xs, axis=-2), np.stack(us, axis=-2), np.stack(ys, axis=-2)


def simulate(sys: TimeVaryingSystem, controller, x0, w, v) -> SimulationResult:
    """Causal closed-loop rollout for one noise realization.

    ``controller`` is anything exposing ``make_policy(sys)``; the returned
    policy sees y_0..y_t before choosing u_t.
    """
    x0 = np.asarray(x0, dtype=float)
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if x0.shape != (sys.n,) or w.shape != (sys.T, sys.n) or v.shape != (sys.T, sys.p):
        raise ValueError("noise trajectory shapes do not match the system")
    policy = controller.make_policy(sys)
    cost, xs, us, ys = _roll(sys, policy, x0, w, v)
    return SimulationResult(cost=float(cost), x=xs, u=us, y=ys)


def sample_noise(
    cov: CovarianceProfile, n_samples: int, rng: np.random.Generator, antithetic: bool = False
):
    """Draw noise realizations (x0, w, v) with the pinned draw order.

    A single ``standard_normal`` call of shape ``(n_samples, n + T n + T p)``
    is split into the x0 block, then w_0..w_{T-1}, then v_0..v_{T-1}, and
    colored by the symmetric PSD square roots of the covariance blocks.
    With ``antithetic=True`` (requires even ``n_samples``) only half the
    normals are drawn and the other half are their negations.
    """
    n, p, T = cov.n, cov.p, cov.T
    dim = n + T * n + T * p
    if antithetic:
        if n_samples % 2:
            raise ValueError("antithetic sampling needs an even sample count")
        half = rng.standard_normal((n_samples // 2, dim))
        z = np.concatenate([half, -half], axis=0)
    else:
        z = rng.standard_normal((n_samples, dim))
    x0 = z[:, :n] @ psd_sqrt(cov.X0)
    w = np.empty((n_samples, T, n))
    v = np.empty((n_samples, T, p))
    for t in range(T):
        w[:, t, :] = z[:, n + t * n : n + (t + 1) * n] @ psd_sqrt(cov.W[t])
    off = n + T * n
    for t in range(T):
        v[:, t, :] = z[:, off + t * p : off + (t + 1) * p] @ psd_sqrt(cov.V[t])
    return x0, w, v


@dataclass(frozen=True)
class MonteCarloStats:
    mean: float
    stderr: float
    n_samples: int
    costs: np.ndarray


def monte_carlo_cost(
    sys: TimeVaryingSystem,
    controller,
    cov: CovarianceProfile,
    n_samples: int,
    rng: np.random.Generator | int | None = None,
    antithetic: bool = False,
) -> MonteCarloStats:
    """Estimate the expected closed-loop cost by batched simulation."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    x0, w, v = sample_noise(cov, n_samples, rng, antithetic=antithetic)
    policy = controller.make_policy(sys)
    costs, _, _, _ = _roll(sys, policy, x0, w, v)
    mean = float(np.mean(costs))
    stderr = float(np.std(costs, ddof=1) / np.sqrt(n_samples))
    return MonteCarloStats(mean=mean, stderr=stderr, n_samples=n_samples, costs=costs)
