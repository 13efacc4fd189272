"""Law of the bad-time fraction ``x = B / T`` under the single-burst approximation.

The law has an atom at 0, an atom at 1 and on (0, 1) a density of the form
``exp(-b x) * (p + q x)`` with ``b = mu_b T``. Every moment needed by the
large-deviation layer reduces to integrals ``int_0^1 x^k exp(c x) dx`` with
``k <= 2``, which are evaluated in closed form (series near ``c = 0``) and
rescaled so that large tilts never overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import PathType

# |c| below this uses the power series; the closed forms for k = 1, 2 lose
# roughly 1/|c|^k relative digits to cancellation.
_SERIES_CUTOFF = 1.0
_SERIES_TERMS = 30


@dataclass(frozen=True)
class ErasureProfile:
    """Mixed law of the bad-time fraction of one path over one block."""

    atom0: float
    atom1: float
    # density(x) = exp(-mu_b_t * x) * (lin0 + lin1 * x) on (0, 1)
    lin0: float
    lin1: float
    mu_g_t: float
    mu_b_t: float

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-self.mu_b_t * x) * (self.lin0 + self.lin1 * x)

    def continuous_mass(self) -> float:
        i0, i1, _ = _exp_moments(-self.mu_b_t)
        return self.lin0 * i0 + self.lin1 * i1

    def total_mass(self) -> float:
        return self.atom0 + self.atom1 + self.continuous_mass()

    @property
    def pi_b(self) -> float:
        return self.mu_g_t / (self.mu_g_t + self.mu_b_t)


def build_profile(pt: PathType, t: float, atom0_mode: str = "linear") -> ErasureProfile:
    """Law of ``x`` for path type ``pt`` over a block of ``t`` seconds.

    ``atom0_mode="linear"`` uses ``pi_g (1 - mu_g t)`` for the no-burst atom so
    the total mass is exactly one; ``"exact"`` uses ``pi_g exp(-mu_g t)`` and
    leaves an ``O((mu_g t)^2)`` mass defect.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    g = pt.mu_g * t
    b = pt.mu_b * t
    if g >= 1:
        raise ValueError(
            f"mu_g*t = {g:.4g} >= 1: the block must be much shorter than the mean good "
            "sojourn for the single-bad-burst approximation to hold")
    if pt.mu_b <= pt.mu_g:
        raise ValueError(f"mu_b ({pt.mu_b}) must exceed mu_g ({pt.mu_g}) (pi_b < 1/2 regime)")
    pi_b = g / (g + b)
    pi_g = 1.0 - pi_b
    if atom0_mode == "linear":
        atom0 = pi_g * (1.0 - g)
    elif atom0_mode == "exact":
        atom0 = pi_g * math.exp(-g)
    else:
        raise ValueError(f"unknown atom0_mode {atom0_mode!r}")
    atom1 = pi_b * math.exp(-b)
    # t * [pi_b mu_b e^{-bx} + pi_g mu_g e^{-bx} (1 + b (1 - x))]
    lin0 = pi_b * b + pi_g * g * (1.0 + b)
    lin1 = -pi_g * g * b
    return ErasureProfile(atom0, atom1, lin0, lin1, g, b)


def _exp_moments(c: float) -> tuple[float, float, float]:
    """``int_0^1 x^k exp(c x - max(c, 0)) dx`` for k = 0, 1, 2."""
    if abs(c) < _SERIES_CUTOFF:
        # int_0^1 x^k e^{cx} dx = sum_n c^n / (n! (n + k + 1))
        out = [0.0, 0.0, 0.0]
        term = 1.0
        for n in range(_SERIES_TERMS):
            for k in range(3):
                out[k] += term / (n + k + 1)
            term *= c / (n + 1)
        scale = math.exp(-max(c, 0.0))
        return out[0] * scale, out[1] * scale, out[2] * scale
    if c < 0:
        e = math.exp(c)
        i0 = (e - 1.0) / c
        i1 = (e * (c - 1.0) + 1.0) / c ** 2
        i2 = (e * (c * c - 2.0 * c + 2.0) - 2.0) / c ** 3
        return i0, i1, i2
    # c > 0: integrate x^k e^{c (x - 1)}
    em = math.exp(-c)
    j0 = (1.0 - em) / c
    j1 = 1.0 / c - (1.0 - em) / c ** 2
    j2 = 1.0 / c - 2.0 / c ** 2 + 2.0 * (1.0 - em) / c ** 3
    return j0, j1, j2


def mean_bad_fraction(ep: ErasureProfile) -> float:
    """``E{x}``; exact up to rounding."""
    _, i1, i2 = _exp_moments(-ep.mu_b_t)
    return ep.atom1 + ep.lin0 * i1 + ep.lin1 * i2


class TiltedMoments(NamedTuple):
    mgf: float
    tilted_mean: float
    log_mgf: float


def tilted_moments(ep: ErasureProfile, lam: float) -> TiltedMoments:
    """``E{e^{lam x}}`` and the tilted mean ``E{x e^{lam x}} / E{e^{lam x}}``.

    Both are computed with the common factor ``e^{max(lam, 0)}`` removed, so the
    tilted mean and ``log_mgf`` stay finite for any finite ``lam``; ``mgf``
    itself may overflow to ``inf``.
    """
    lam = float(lam)
    if not math.isfinite(lam):
        raise ValueError("lambda must be finite")
    shift = max(lam, 0.0)
    c = lam - ep.mu_b_t
    i0, i1, i2 = _exp_moments(c)
    dens_scale = math.exp(max(c, 0.0) - shift)
    a1 = ep.atom1 * math.exp(lam - shift)
    m0 = ep.atom0 * math.exp(-shift) + a1 + dens_scale * (ep.lin0 * i0 + ep.lin1 * i1)
    m1 = a1 + dens_scale * (ep.lin0 * i1 + ep.lin1 * i2)
    log_mgf = math.log(m0) + shift
    mgf = math.exp(log_mgf) if log_mgf < 709.0 else math.inf
    return TiltedMoments(mgf, m1 / m0, log_mgf)
