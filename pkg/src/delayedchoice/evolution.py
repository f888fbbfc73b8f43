"""Complex-amplitude engine for the two-memory temporal interferometer.

The state is tracked as a short list of labelled branches.  A photon is
split at the first memory into a leaked pulse and a stored spin wave; the
spin wave is read out (with the EOM phase applied) and, depending on the
QRNG, the leaked pulse is partly stored in the second memory and read out
after its own storage time.  Detection looks at the two read-out pulses,
which interfere through their temporal overlap ``zeta``.

Closed-form fringe and visibility functions live alongside the branch
evolution so each can be checked against the other.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .model import InterferometerConfig, QrngMode, total_efficiency
from .temporal import decoherence_factor, overlap

__all__ = [
    "Label",
    "QrngBranch",
    "Branch",
    "BranchState",
    "FringeScan",
    "split_at_mbs1",
    "retrieve_and_phase_mbs1",
    "split_at_mbs2",
    "retrieve_mbs2",
    "evolve",
    "mode_overlap",
    "detection_probability",
    "detection_probability_from_state",
    "fringe",
    "visibility_analytic",
]


class Label(str, enum.Enum):
    LEAKED = "leaked"
    SPIN_WAVE_1 = "spin_wave_1"
    RETRIEVED_1 = "retrieved_1"
    SPIN_WAVE_2 = "spin_wave_2"
    RETRIEVED_2 = "retrieved_2"


class QrngBranch(str, enum.Enum):
    IN = "in"
    OUT = "out"


@dataclass(frozen=True)
class Branch:
    label: Label
    amplitude: complex
    time_offset: float


@dataclass(frozen=True)
class BranchState:
    branches: tuple[Branch, ...]
    loss: float = 0.0

    def get(self, label: Label) -> Branch | None:
        for b in self.branches:
            if b.label is label:
                return b
        return None

    def amplitude(self, label: Label) -> complex:
        b = self.get(label)
        return 0j if b is None else b.amplitude

    @property
    def norm(self) -> float:
        """Total probability, kept branches plus accumulated loss."""
        return math.fsum(abs(b.amplitude) ** 2 for b in self.branches) + self.loss

    def _replace(self, label: Label, *new: Branch, extra_loss: float = 0.0) -> "BranchState":
        out = []
        for b in self.branches:
            if b.label is label:
                out.extend(new)
            else:
                out.append(b)
        return BranchState(tuple(out), self.loss + extra_loss)


@dataclass(frozen=True)
class FringeScan:
    phases: np.ndarray
    values: np.ndarray
    total_N: float = 1.0

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if phases.shape != values.shape:
            raise ValueError("phases and values must have equal length")
        if phases.size > 1 and not np.all(np.diff(phases) > 0):
            raise ValueError("phases must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("values must be finite and nonnegative")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.phases.size


def split_at_mbs1(config: InterferometerConfig) -> BranchState:
    eta = config.mbs1.eta_con
    leaked = Branch(Label.LEAKED, complex(math.sqrt(1.0 - eta)), 0.0)
    stored = Branch(Label.SPIN_WAVE_1, cmath.exp(1j * config.theta1) * math.sqrt(eta), 0.0)
    return BranchState((leaked, stored))


def retrieve_and_phase_mbs1(state: BranchState, config: InterferometerConfig) -> BranchState:
    """Read the first spin wave out and apply the EOM phase to it."""
    sw = state.get(Label.SPIN_WAVE_1)
    if sw is None:
        raise ValueError("state has no first-memory spin wave")
    m = config.mbs1
    keep = m.eta_stored * decoherence_factor(m.storage_time, m.coherence_time_T1)
    amp = sw.amplitude * math.sqrt(keep) * cmath.exp(1j * config.eom_phase)
    lost = abs(sw.amplitude) ** 2 * (1.0 - keep)
    retrieved = Branch(Label.RETRIEVED_1, amp, sw.time_offset + m.storage_time)
    return state._replace(Label.SPIN_WAVE_1, retrieved, extra_loss=lost)


def split_at_mbs2(state: BranchState, config: InterferometerConfig,
                  qrng_branch: QrngBranch = QrngBranch.IN) -> BranchState:
    """Partially store the leaked pulse in the second memory.

    With the memory switched in, AMPLITUDE mode writes the leaked amplitude
    as ``xi * (stored + residual) + (1 - xi) * leaked``; ENSEMBLE mode uses
    the pure closed-interferometer split (the xi weighting is applied later
    as a classical mixture).  The probability removed by the xi-weighted
    coefficients is booked as loss.
    """
    if qrng_branch is QrngBranch.OUT:
        return state
    leaked = state.get(Label.LEAKED)
    if leaked is None:
        raise ValueError("state has no leaked branch")
    eta = config.mbs2.eta_con
    xi = config.qrng.xi if config.qrng.mode is QrngMode.AMPLITUDE else 1.0
    a = leaked.amplitude
    residual = a * (xi * math.sqrt(1.0 - eta) + (1.0 - xi))
    stored = a * xi * math.sqrt(eta) * cmath.exp(1j * config.theta2)
    lost = max(abs(a) ** 2 - abs(residual) ** 2 - abs(stored) ** 2, 0.0)
    return state._replace(
        Label.LEAKED,
        Branch(Label.LEAKED, residual, leaked.time_offset),
        Branch(Label.SPIN_WAVE_2, stored, leaked.time_offset),
        extra_loss=lost,
    )


def retrieve_mbs2(state: BranchState, config: InterferometerConfig) -> BranchState:
    """Propagate through the delay fiber and read the second spin wave out.

    Every branch is shifted by ``fiber_delay``; the second read-out lands
    ``mbs2.storage_time`` after the leaked pulse reached the second memory.
    """
    d = config.fiber_delay
    shifted = tuple(replace(b, time_offset=b.time_offset + d) for b in state.branches)
    state = BranchState(shifted, state.loss)
    sw = state.get(Label.SPIN_WAVE_2)
    if sw is None:
        return state
    m = config.mbs2
    keep = m.eta_stored * decoherence_factor(m.storage_time, m.coherence_time_T1)
    retrieved = Branch(Label.RETRIEVED_2, sw.amplitude * math.sqrt(keep), sw.time_offset + m.storage_time)
    lost = abs(sw.amplitude) ** 2 * (1.0 - keep)
    return state._replace(Label.SPIN_WAVE_2, retrieved, extra_loss=lost)


def evolve(config: InterferometerConfig, qrng_branch: QrngBranch = QrngBranch.IN) -> BranchState:
    state = split_at_mbs1(config)
    state = retrieve_and_phase_mbs1(state, config)
    state = split_at_mbs2(state, config, qrng_branch)
    return retrieve_mbs2(state, config)


def mode_overlap(config: InterferometerConfig) -> complex:
    """Overlap of the two read-out packets at their actual arrival offset."""
    delta = config.mbs2.storage_time - config.mbs1.storage_time
    return overlap(config.mbs1.retrieved_packet, config.mbs2.retrieved_packet, delta).zeta


def detection_probability_from_state(state: BranchState, zeta: complex = 1.0) -> float:
    """Probability of a click in the read-out window for a final state."""
    a1 = state.amplitude(Label.RETRIEVED_1)
    a2 = state.amplitude(Label.RETRIEVED_2)
    return abs(a2 * zeta + a1) ** 2


def _arm_amplitudes(config: InterferometerConfig, zeta: complex):
    """Closed-interferometer amplitudes (first read-out, second read-out * zeta)."""
    m1, m2 = config.mbs1, config.mbs2
    eta1 = total_efficiency(m1) * decoherence_factor(m1.storage_time, m1.coherence_time_T1)
    eta2 = total_efficiency(m2) * decoherence_factor(m2.storage_time, m2.coherence_time_T1)
    a1 = math.sqrt(eta1) * cmath.exp(1j * config.theta1)
    a2 = math.sqrt((1.0 - m1.eta_con) * eta2) * cmath.exp(1j * config.theta2) * zeta
    return a1, a2


def _resolve_zeta(config, zeta):
    return mode_overlap(config) if zeta is None else complex(zeta)


def detection_probability(config: InterferometerConfig, phi=None, zeta: complex | None = None):
    """Read-out click probability at EOM phase ``phi`` (array or scalar).

    ``phi`` defaults to ``config.eom_phase``.  ``zeta`` defaults to the
    quadrature overlap of the configured packets; pass 1 for perfectly
    matched read-outs.
    """
    phi_arr = np.asarray(config.eom_phase if phi is None else phi, dtype=float)
    a1, a2 = _arm_amplitudes(config, _resolve_zeta(config, zeta))
    xi = config.qrng.xi
    r1 = a1 * np.exp(1j * phi_arr)
    if config.qrng.mode is QrngMode.AMPLITUDE:
        p = np.abs(xi * a2 + r1) ** 2
    else:
        p = xi * np.abs(a2 + r1) ** 2 + (1.0 - xi) * abs(a1) ** 2
    return float(p) if p.ndim == 0 else p


def fringe(config: InterferometerConfig, phase_grid, N: float = 1.0,
           zeta: complex | None = None) -> FringeScan:
    phases = np.asarray(phase_grid, dtype=float).reshape(-1)
    if phases.size == 0:
        raise ValueError("phase grid is empty")
    p = np.atleast_1d(detection_probability(config, phases, _resolve_zeta(config, zeta)))
    return FringeScan(phases, N * p, N)


def visibility_analytic(config: InterferometerConfig, zeta: complex | None = None) -> float:
    """Fringe visibility (Pmax - Pmin) / (Pmax + Pmin) in closed form."""
    a1, a2 = _arm_amplitudes(config, _resolve_zeta(config, zeta))
    xi = config.qrng.xi
    s1, s2 = abs(a1) ** 2, abs(a2) ** 2
    cross = 2.0 * xi * abs(a1) * abs(a2)
    if config.qrng.mode is QrngMode.AMPLITUDE:
        denom = s1 + xi**2 * s2
    else:
        denom = s1 + xi * s2
    if denom == 0.0:
        return 0.0
    return min(cross / denom, 1.0)
