"""Large-deviation exponents and asymptotically optimal allocations.

Every optimization here is a one-dimensional monotone root problem, solved by
bisection after geometric bracket expansion.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .burst import ErasureProfile, build_profile, mean_bad_fraction, tilted_moments
from .channel import PathType

LAMBDA_TOL = 1e-10
MAX_LAMBDA = 1e7


class BracketEscape(ArithmeticError):
    """The root lies beyond the largest bracket the solver is allowed to try."""


class InfeasibleCaps(ValueError):
    """Bandwidth caps cannot carry the whole block."""


class SharedProfileRequired(ValueError):
    """Water-filling was asked to mix types with different bad-time laws."""


def _bisect_increasing(f: Callable[[float], float], lo: float, hi: float, tol: float,
                       max_iter: int = 400) -> float:
    """Root of an increasing ``f`` with ``f(lo) <= 0 <= f(hi)``."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        if abs(val) <= tol:
            return mid
        if val < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def _expand_up(f: Callable[[float], float], start: float, limit: float) -> float:
    hi = start
    while f(hi) < 0:
        if hi >= limit:
            raise BracketEscape(f"root exceeds {limit:g}")
        hi = min(2.0 * hi, limit)
    return hi


@dataclass
class RateFunction:
    """Legendre transform of the log-MGF of one path type's bad-time fraction."""

    profile: ErasureProfile
    mean: float = field(init=False)

    def __post_init__(self):
        self.mean = mean_bad_fraction(self.profile)

    def v(self, lam: float) -> float:
        """Tilted mean; strictly increasing from 0 to 1."""
        return tilted_moments(self.profile, lam).tilted_mean

    def legendre_at(self, lam: float) -> float:
        """``lam * v(lam) - log E{e^{lam x}}``, i.e. ``u(v(lam))``."""
        tm = tilted_moments(self.profile, lam)
        return lam * tm.tilted_mean - tm.log_mgf


def solve_lambda(rf: RateFunction, alpha: float, *, allow_below_mean: bool = False,
                 max_lambda: float = MAX_LAMBDA, tol: float = LAMBDA_TOL) -> Optional[float]:
    """Tilt ``lam`` with ``v(lam) = alpha``.

    Returns ``None`` for ``alpha < E{x}`` (the exponent is zero there) unless
    ``allow_below_mean`` asks for the negative root. Raises ``BracketEscape``
    when the root lies beyond ``max_lambda``, which happens as alpha -> 1.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    g = lambda lam: rf.v(lam) - alpha
    if abs(alpha - rf.mean) <= tol:
        return 0.0
    if alpha < rf.mean:
        if not allow_below_mean:
            return None
        lo = -1.0
        while g(lo) > 0:
            if lo <= -max_lambda:
                raise BracketEscape(f"root below {-max_lambda:g}")
            lo = max(2.0 * lo, -max_lambda)
        return _bisect_increasing(g, lo, 0.0, tol)
    hi = _expand_up(g, 1.0, max_lambda)
    return _bisect_increasing(g, 0.0, hi, tol)


def rate_u(rf: RateFunction, alpha: float) -> float:
    """Decay rate per path of the identical-path loss probability."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if alpha <= rf.mean:
        return 0.0
    lam = solve_lambda(rf, alpha)
    return lam * alpha - tilted_moments(rf.profile, lam).log_mgf


def single_path_pe(pt: PathType, t: float, alpha: float) -> float:
    """Closed-form one-path loss probability under the single-burst law."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return pt.pi_b * math.exp(-pt.mu_b * alpha * t) * (1.0 + pt.mu_b * (1.0 - alpha) * t)


def single_path_slope(alpha: float, mu_g_t: float, mu_b_t: float) -> float:
    """``-d log P / d(mu_b T)`` of the closed form at fixed ``mu_g T``.

    Equals ``alpha + 1/(mu_g T + mu_b T) - (1 - alpha)/(1 + (1 - alpha) mu_b T)``
    and tends to ``alpha`` as ``mu_b T`` grows (pass ``math.inf`` for the limit).
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if math.isinf(mu_b_t):
        return alpha
    return alpha + 1.0 / (mu_g_t + mu_b_t) - (1.0 - alpha) / (1.0 + (1.0 - alpha) * mu_b_t)


@dataclass
class TypeEnsemble:
    """Path types with their path fractions ``gammas`` and bad-time laws."""

    types: list[PathType]
    gammas: np.ndarray
    profiles: list[ErasureProfile]

    def __post_init__(self):
        self.types = list(self.types)
        self.gammas = np.asarray(self.gammas, dtype=float)
        if not (len(self.types) == len(self.gammas) == len(self.profiles)):
            raise ValueError("types, gammas and profiles must have equal length")
        if np.any(self.gammas <= 0):
            raise ValueError("every gamma must be positive")
        if abs(self.gammas.sum() - 1.0) > 1e-12:
            raise ValueError(f"gammas must sum to 1, got {self.gammas.sum()!r}")
        self.rates = [RateFunction(p) for p in self.profiles]

    @classmethod
    def from_types(cls, types: Sequence[PathType], t: float, gammas=None,
                   atom0_mode: str = "linear") -> "TypeEnsemble":
        """Ensemble whose gammas default to ``count / total count``."""
        types = list(types)
        if gammas is None:
            counts = np.array([pt.count for pt in types], dtype=float)
            gammas = counts / counts.sum()
        return cls(types, gammas, [build_profile(pt, t, atom0_mode) for pt in types])

    def __len__(self):
        return len(self.types)

    @property
    def means(self) -> np.ndarray:
        return np.array([rf.mean for rf in self.rates])

    @property
    def total_paths(self) -> int:
        return sum(pt.count for pt in self.types)


def allocation_exponent(te: TypeEnsemble, eta, alpha: float) -> float:
    """Asymptotic decay rate in L of the loss probability for allocation fractions ``eta``."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape != te.gammas.shape:
        raise ValueError("eta must have one entry per type")
    if np.any(eta < 0) or abs(eta.sum() - 1.0) > 1e-9:
        raise ValueError("eta must lie on the probability simplex")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    active = np.flatnonzero(eta > 0)
    if float(np.dot(eta[active], te.means[active])) >= alpha:
        return 0.0
    ratio = eta[active] / te.gammas[active]
    rates = [te.rates[j] for j in active]

    def excess(nu):
        return sum(e * rf.v(nu * r) for e, r, rf in zip(eta[active], ratio, rates)) - alpha

    hi = _expand_up(excess, 1.0, MAX_LAMBDA)
    nu = _bisect_increasing(excess, 0.0, hi, LAMBDA_TOL)
    # beta_j / eta_j = v_j(nu eta_j / gamma_j), so u_j there is a plain Legendre value
    return float(sum(te.gammas[j] * rf.legendre_at(nu * r)
                     for j, r, rf in zip(active, ratio, rates)))


@dataclass
class TheoremIIResult:
    eta: np.ndarray
    exponent: float
    lambdas: np.ndarray  # l_j(alpha), nan where alpha <= E{x_j}
    degenerate: bool  # no type beats alpha; exponent is 0 for every allocation


def theorem_ii_allocation(te: TypeEnsemble, alpha: float, n0: Optional[float] = None,
                          t: Optional[float] = None) -> TheoremIIResult:
    """Closed-form maximizer of the allocation exponent.

    With ``n0`` (packets per path) and ``t`` given, warns when the result needs
    more than a type's bandwidth cap; ``waterfill_allocation`` handles that case.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    lams = np.full(len(te), np.nan)
    for j, rf in enumerate(te.rates):
        if alpha > rf.mean:
            lams[j] = solve_lambda(rf, alpha)
    good = ~np.isnan(lams)
    if not good.any():
        return TheoremIIResult(te.gammas.copy(), 0.0, lams, True)
    weights = np.where(good, te.gammas * np.nan_to_num(lams), 0.0)
    eta = weights / weights.sum()
    exponent = float(sum(te.gammas[j] * rate_u(te.rates[j], alpha) for j in np.flatnonzero(good)))
    if n0 is not None and t is not None:
        for j, pt in enumerate(te.types):
            need = eta[j] * n0 / (t * te.gammas[j])
            if need > pt.max_rate_w * (1 + 1e-12):
                warnings.warn(
                    f"type {j} needs {need:.4g} pkt/s per path but is capped at "
                    f"{pt.max_rate_w:.4g}; use waterfill_allocation", RuntimeWarning, stacklevel=2)
    return TheoremIIResult(eta, exponent, lams, False)


def waterfill_allocation(te: TypeEnsemble, alpha: float, n0: float, t: float) -> np.ndarray:
    """Cap-constrained maximizer for types sharing one bad-time law.

    Each type gets ``min(gamma_j W_j t / n0, gamma_j * level)`` with the level
    set so the fractions sum to one. ``alpha`` is accepted for symmetry with
    ``theorem_ii_allocation``; with a shared law the result does not depend on it.
    """
    ref = te.profiles[0]
    if any(p != ref for p in te.profiles[1:]):
        raise SharedProfileRequired("water-filling needs every type to share one erasure profile")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    gam = te.gammas
    caps = np.array([g * pt.max_rate_w * t / n0 for g, pt in zip(gam, te.types)])
    if caps.sum() < 1.0 - 1e-12:
        raise InfeasibleCaps(f"caps sum to {caps.sum():.6g} < 1; the block does not fit")
    if np.all(caps >= gam):
        return gam.copy()

    fill = lambda level: float(np.minimum(caps, gam * level).sum()) - 1.0
    finite = caps[np.isfinite(caps)]
    hi = max(1.0, float(np.max(finite / gam[np.isfinite(caps)]))) if finite.size else 1.0
    level = _bisect_increasing(fill, 0.0, hi, 0.0, max_iter=200)
    # polish: with the binding set known the level is linear
    bound = caps <= gam * level
    if (~bound).any():
        level = (1.0 - caps[bound].sum()) / gam[~bound].sum()
    return np.minimum(caps, gam * level)


def ml_error_bounds(pe: float, q: int) -> tuple[float, float]:
    """Range of the maximum-likelihood decoding error of an MDS code over GF(q)."""
    if not 0 <= pe <= 1:
        raise ValueError("pe must be a probability")
    if q < 2:
        raise ValueError("field size must be at least 2")
    return pe * (1.0 - 1.0 / q), pe
