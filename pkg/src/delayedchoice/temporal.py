"""Temporal envelopes, mode overlaps and spin-wave decoherence."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from .model import InterferometerConfig, PacketShape, WavePacket, validate

__all__ = [
    "OverlapResult",
    "OverlapConvergenceError",
    "QUAD_RTOL",
    "envelope",
    "intensity",
    "support",
    "overlap",
    "decoherence_factor",
    "calibrated_packets",
    "storage_time_visibility_profile",
]

QUAD_RTOL = 1e-8
QUAD_ATOL = 1e-12  # overlaps are bounded by 1

# Support cut, in widths.  Gaussian fields are ~e^-50 at 10 sigma; the
# exponential needs a longer cut for its intensity tail to reach ~e^-40.
# Envelopes are normalized over the truncated support.
TAIL_WIDTHS = {
    PacketShape.GAUSSIAN: 10.0,
    PacketShape.EXPONENTIAL_DECAY: 40.0,
    PacketShape.RECTANGULAR: 1.0,
}


class OverlapConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class OverlapResult:
    zeta: complex

    @property
    def magnitude(self) -> float:
        return abs(self.zeta)


def support(p: WavePacket) -> tuple[float, float]:
    """Closed interval outside which the envelope is identically zero."""
    cut = TAIL_WIDTHS[p.shape] * p.width
    if p.shape is PacketShape.GAUSSIAN:
        return p.center - cut, p.center + cut
    if p.shape is PacketShape.EXPONENTIAL_DECAY:
        return p.center, p.center + cut
    return p.center - 0.5 * p.width, p.center + 0.5 * p.width


def _norm(p: WavePacket) -> float:
    if p.shape is PacketShape.GAUSSIAN:
        # integral of exp(-x^2/sigma^2) over +-L sigma
        return (math.sqrt(math.pi) * p.width * math.erf(TAIL_WIDTHS[p.shape])) ** -0.5
    if p.shape is PacketShape.EXPONENTIAL_DECAY:
        return (p.width * -math.expm1(-TAIL_WIDTHS[p.shape])) ** -0.5
    return p.width**-0.5


def envelope(p: WavePacket, t):
    """Normalized complex field envelope at time(s) ``t`` (units ns^-1/2)."""
    t_arr = np.asarray(t, dtype=float)
    lo, hi = support(p)
    x = t_arr - p.center
    inside = (t_arr >= lo) & (t_arr <= hi)
    if p.shape is PacketShape.GAUSSIAN:
        mag = np.exp(-(x**2) / (2.0 * p.width**2))
    elif p.shape is PacketShape.EXPONENTIAL_DECAY:
        mag = np.exp(-np.where(inside, x, 0.0) / (2.0 * p.width))
    else:
        mag = np.ones_like(x)
    out = np.where(inside, _norm(p) * mag, 0.0).astype(complex)
    if p.detuning:
        out = out * np.exp(1j * p.detuning * x)
    return out if out.ndim else complex(out)


def intensity(p: WavePacket, t):
    return np.abs(envelope(p, t)) ** 2


def _quad(func, lo: float, hi: float, points) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(
            func, lo, hi, epsabs=QUAD_ATOL, epsrel=QUAD_RTOL, limit=400,
            points=points or None, full_output=1,
        )
    if len(res) > 3:
        raise OverlapConvergenceError(f"quadrature did not converge on [{lo}, {hi}]: {res[3]}")
    return res[0]


def overlap(p1: WavePacket, p2: WavePacket, delta_t: float = 0.0) -> OverlapResult:
    """Complex overlap of ``p1`` with ``p2`` delayed by ``delta_t``.

    zeta = integral of conj(psi1(t)) * psi2(t - delta_t) dt, by adaptive
    quadrature on the intersection of the two supports.
    """
    p2s = replace(p2, center=p2.center + delta_t)
    lo1, hi1 = support(p1)
    lo2, hi2 = support(p2s)
    lo, hi = max(lo1, lo2), min(hi1, hi2)
    if not lo < hi:
        return OverlapResult(0j)

    def prod(t):
        return np.conj(envelope(p1, t)) * envelope(p2s, t)

    # Split at packet centers so cusps and peaks sit on interval ends.
    points = sorted({c for c in (p1.center, p2s.center) if lo < c < hi})
    re = _quad(lambda t: prod(t).real, lo, hi, points)
    im = 0.0
    if p1.detuning or p2.detuning:
        im = _quad(lambda t: prod(t).imag, lo, hi, points)
    return OverlapResult(complex(re, im))


def decoherence_factor(storage_time: float, T1: float) -> float:
    """Fraction of retrieved intensity surviving ``storage_time``."""
    if storage_time < 0:
        raise ValueError("storage_time must be >= 0")
    if not T1 > 0:
        raise ValueError("T1 must be > 0")
    if math.isinf(T1):
        return 1.0
    return math.exp(-storage_time / T1)


def calibrated_packets(early_edge: float = 40.0, late_edge: float = 60.0,
                       edge_overlap: float = 0.1) -> tuple[WavePacket, WavePacket]:
    """Exponential read-out packets for the two memories.

    For exponential packets with intensity constants tau1, tau2 the overlap
    magnitude falls as exp(-d / (2 tau1)) when the second memory is read
    late by d, and as exp(-d / (2 tau2)) when it is read early.  Each
    constant is chosen so |zeta| drops to ``edge_overlap`` of its matched
    value at the corresponding edge.
    """
    k = 2.0 * math.log(1.0 / edge_overlap)
    return (
        WavePacket(PacketShape.EXPONENTIAL_DECAY, 0.0, late_edge / k),
        WavePacket(PacketShape.EXPONENTIAL_DECAY, 0.0, early_edge / k),
    )


def storage_time_visibility_profile(config: InterferometerConfig, storage_time_2_grid):
    """Visibility against the second memory's storage time.

    Returns ``[(T, V), ...]`` where each point re-evaluates the read-out
    overlap for a mismatch ``T - mbs1.storage_time``.
    """
    from .evolution import visibility_analytic

    validate(config)
    out = []
    for T in storage_time_2_grid:
        T = float(T)
        cfg = replace(config, mbs2=replace(config.mbs2, storage_time=T))
        zeta = overlap(cfg.mbs1.retrieved_packet, cfg.mbs2.retrieved_packet,
                       T - cfg.mbs1.storage_time).zeta
        out.append((T, visibility_analytic(cfg, zeta=zeta)))
    return out
