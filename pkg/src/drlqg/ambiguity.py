"""Gelbrich ambiguity sets and the linear-maximization oracle over them.

The Gelbrich distance between PSD matrices is

    G(S1, S2) = sqrt( tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}) ),

the 2-Wasserstein distance between the centered Gaussians they define.  An
ambiguity ball around a nominal Zhat keeps, in addition, every member above
the spectral floor lambda_min(Zhat) I; the floor never cuts off a maximizer
because the objective gradients handed to the oracle are PSD.

``oracle_maximize`` solves  max <Gamma, L - Z>  over the floored ball to a
relative accuracy ``delta`` by bisection on the scalar dual variable gamma.
For gamma > lambda_max(Gamma) the candidate

    L(gamma) = gamma^2 (gamma I - Gamma)^{-1} Zhat (gamma I - Gamma)^{-1}

has squared distance psi(gamma) = <Zhat, Gamma^2 (gamma I - Gamma)^{-2}>
from the center, the dual function is

    phi(gamma) = gamma (rho^2 + <gamma (gamma I - Gamma)^{-1} - I, Zhat>) - <Z, Gamma>,

and phi'(gamma) = rho^2 - psi(gamma), so the sign of the analytic derivative
tells simultaneously which way to move and whether L(gamma) is feasible.
The loop accepts once phi'(gamma) > 0 and <Gamma, L - Z> >= delta * phi(gamma)
(weak duality makes phi an upper bound on the primal maximum); if the bracket
collapses to its common limit first -- which happens immediately in the
scalar case, where both bracket ends coincide with the exact dual solution --
the right endpoint is accepted, staying on the feasible side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import min_eigval, psd_eig, psd_sqrt, symmetrize
from .lqg import CovarianceProfile, _frozen

_MAX_BISECT = 200


class OracleError(RuntimeError):
    """Bisection failed to terminate within the iteration cap."""


def gelbrich_distance(s1, s2) -> float:
    """Gelbrich distance between two PSD matrices."""
    s1 = symmetrize(s1)
    s2 = symmetrize(s2)
    if np.array_equal(s1, s2):
        # the trace expression cancels catastrophically near coincidence;
        # the exact case is known
        psd_eig(s1)
        return 0.0
    root2 = psd_sqrt(s2)
    cross = psd_sqrt(root2 @ s1 @ root2)
    arg = float(np.trace(s1) + np.trace(s2) - 2.0 * np.trace(cross))
    return math.sqrt(max(arg, 0.0))


@dataclass(frozen=True)
class GelbrichBall:
    """Floored Gelbrich ball {Z : G(Z, center) <= radius, Z >= floor * I}.

    The floor is the smallest eigenvalue of the center and is computed on
    construction.  The oracle's optimality guarantee assumes a PD center.
    """

    center: np.ndarray
    radius: float
    floor: float = 0.0

    def __post_init__(self):
        center = symmetrize(self.center)
        psd_eig(center)  # raises if genuinely indefinite
        if not self.radius >= 0.0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")
        object.__setattr__(self, "center", _frozen(center))
        object.__setattr__(self, "floor", min_eigval(center))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, z, tol: float = 1e-9) -> bool:
        z = symmetrize(z)
        if min_eigval(z) < self.floor - tol:
            return False
        return gelbrich_distance(z, self.center) <= self.radius + tol


@dataclass(frozen=True)
class AmbiguitySpec:
    """Per-block balls around a nominal noise model.

    Radii follow the block order X0, W_0..W_{T-1}, V_0..V_{T-1}; the nominal
    observation covariances must be PD so the filter stays well posed on the
    whole feasible set.
    """

    nominal: CovarianceProfile
    rho_x0: float
    rho_w: tuple
    rho_v: tuple

    def __post_init__(self):
        rho_w = tuple(float(r) for r in self.rho_w)
        rho_v = tuple(float(r) for r in self.rho_v)
        if len(rho_w) != self.nominal.T or len(rho_v) != self.nominal.T:
            raise ValueError("per-stage radius counts must match the horizon")
        for name, r in [("rho_x0", self.rho_x0)] + [
            (f"rho_w[{t}]", r) for t, r in enumerate(rho_w)
        ] + [(f"rho_v[{t}]", r) for t, r in enumerate(rho_v)]:
            if not r >= 0.0:
                raise ValueError(f"{name} must be nonnegative, got {r}")
        for t, v in enumerate(self.nominal.V):
            if min_eigval(v) <= 0.0:
                raise ValueError(f"nominal V[{t}] must be positive definite")
        object.__setattr__(self, "rho_x0", float(self.rho_x0))
        object.__setattr__(self, "rho_w", rho_w)
        object.__setattr__(self, "rho_v", rho_v)

    def balls(self) -> tuple[GelbrichBall, ...]:
        """Balls in the fixed block order X0, W_0.., V_0.."""
        out = [GelbrichBall(center=self.nominal.X0, radius=self.rho_x0)]
        out += [
            GelbrichBall(center=w, radius=r) for w, r in zip(self.nominal.W, self.rho_w)
        ]
        out += [
            GelbrichBall(center=v, radius=r) for v, r in zip(self.nominal.V, self.rho_v)
        ]
        return tuple(out)


@dataclass(frozen=True)
class OracleResult:
    maximizer: np.ndarray
    gamma: float
    gap_contribution: float
    iterations: int


def oracle_maximize(
    ball: GelbrichBall, gradient, reference, delta: float = 0.95
) -> OracleResult:
    """delta-approximate maximizer of <gradient, L - reference> over the ball.

    ``gradient`` must be symmetric and PSD up to roundoff (tiny negative
    eigenvalues are clamped; genuinely indefinite input is an error).  The
    returned ``gap_contribution`` is at least ``delta`` times the true
    maximum and never meaningfully negative.  Degenerate cases short-circuit:
    a zero radius returns the center and a zero (clamped) gradient returns
    the reference, both with zero gap.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    zhat = ball.center
    rho = float(ball.radius)
    ref = symmetrize(reference)
    if rho == 0.0:
        return OracleResult(maximizer=zhat.copy(), gamma=math.nan, gap_contribution=0.0, iterations=0)
    lam, vec = psd_eig(gradient)  # clamps roundoff negatives, ascending order
    lam1 = lam[-1]
    if lam1 <= 0.0:
        return OracleResult(maximizer=ref, gamma=math.nan, gap_contribution=0.0, iterations=0)
    gam_clamped = symmetrize((vec * lam) @ vec.T)
    p1 = vec[:, -1]
    zrot = vec.T @ zhat @ vec  # Zhat in the gradient's eigenbasis
    zdiag = np.diag(zrot).copy()
    ref_ip = float(np.sum(gam_clamped * ref))

    lo = lam1 * (1.0 + math.sqrt(max(float(p1 @ zhat @ p1), 0.0)) / rho)
    hi = lam1 * (1.0 + math.sqrt(max(float(np.trace(zhat)), 0.0)) / rho)

    def dual(gamma):
        scale = gamma / (gamma - lam)  # eigenvalues of gamma (gamma I - Gamma)^{-1}
        phi = gamma * (rho**2 + float(np.sum((scale - 1.0) * zdiag))) - ref_ip
        dphi = rho**2 - float(np.sum((lam * zdiag * lam) / (gamma - lam) ** 2))
        return phi, dphi

    def candidate(gamma):
        mult = (vec * (gamma / (gamma - lam))) @ vec.T
        L = symmetrize(mult @ zhat @ mult)
        gap = float(np.sum(gam_clamped * L)) - ref_ip
        return L, gap

    for it in range(1, _MAX_BISECT + 1):
        if hi - lo <= 1e-12 * max(1.0, hi):
            # Bracket exhausted: hi stays on the feasible side (phi' >= 0),
            # and in the scalar case the initial bracket is already the root.
            L, gap = candidate(hi)
            if gap < 0.0:
                return OracleResult(maximizer=ref, gamma=hi, gap_contribution=0.0, iterations=it)
            return OracleResult(maximizer=L, gamma=hi, gap_contribution=gap, iterations=it)
        gamma = 0.5 * (lo + hi)
        phi, dphi = dual(gamma)
        if dphi > 0.0:
            L, gap = candidate(gamma)
            if gap >= delta * phi:
                return OracleResult(
                    maximizer=L, gamma=gamma, gap_contribution=gap, iterations=it
                )
            hi = gamma
        else:
            lo = gamma
    raise OracleError(
        f"bisection did not meet the exit test in {_MAX_BISECT} iterations; "
        f"final bracket [{lo:.17g}, {hi:.17g}]"
    )


def sample_feasible(ball: GelbrichBall, rng: np.random.Generator) -> np.ndarray:
    """Draw a random feasible member of the ball.

    Takes a random convex combination of the center and the oracle maximizer
    along a random PSD direction; feasibility follows from convexity of the
    floored ball.
    """
    if ball.radius == 0.0:
        return ball.center.copy()
    a = rng.standard_normal((ball.dim, ball.dim))
    direction = symmetrize(a @ a.T)
    extreme = oracle_maximize(ball, direction, ball.center, delta=0.9).maximizer
    u = rng.uniform()
    return symmetrize(ball.center + u * (extreme - ball.center))
