"""Trial-level Monte Carlo of the delayed-choice experiment.

Each trial is one gated experimental window: a heralded photon may or may
not be present, the QRNG decides whether the second memory is switched in,
and the detector clicks on the read-out signal (with its efficiency) or on
a dark count.  At most one detection is recorded per gate, the earliest.

Randomness is counter based: trial ``i`` of a run seeded with ``s`` uses
six uniforms derived only from ``(s, i)`` through splitmix64 mixing, so any
split of the trials across workers gives the same result as a serial run.

Per-trial QRNG sampling realizes the ensemble reading of the QRNG; the
amplitude-mode prediction has no trial-level counterpart.
"""

from __future__ import annotations

import enum
import functools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from . import _kernel_py
from .evolution import FringeScan, QrngBranch, _arm_amplitudes, _resolve_zeta
from .model import InterferometerConfig, QrngMode, QrngSpec, validate
from .temporal import envelope

try:
    if os.environ.get("DELAYEDCHOICE_PURE_PYTHON"):
        raise ImportError("pure-Python kernel requested")
    from ._kernel import simulate_block as _simulate_compiled
except ImportError:
    _simulate_compiled = None

BACKEND = "cython" if _simulate_compiled is not None else "numpy"
_BACKENDS = {"numpy": _kernel_py.simulate_block}
if _simulate_compiled is not None:
    _BACKENDS["cython"] = _simulate_compiled

CHUNK = 1 << 18
QUANTILE_POINTS = 1025
DENSITY_POINTS = 8193
READOUT_LEAD = 0.2  # first read-out starts this fraction of the gate after it opens

__all__ = [
    "BACKEND",
    "DetectionKind",
    "Detection",
    "TrialRecord",
    "CountHistogram",
    "SeedSpec",
    "TrialStream",
    "ExperimentResult",
    "available_backends",
    "sample_qrng",
    "trial_plan",
    "expected_detection_fraction",
    "expected_histogram",
    "arrival_densities",
    "decoherence_config",
    "run_trial",
    "run_trials",
    "run_experiment",
    "decoherence_scan",
    "iter_trial_records",
    "write_trial_records",
    "read_trial_records",
]


class DetectionKind(str, enum.Enum):
    SIGNAL = "signal"
    DARK = "dark"


@dataclass(frozen=True)
class Detection:
    time_bin: float
    kind: DetectionKind


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    herald_fired: bool
    qrng_outcome: QrngBranch
    detection: Detection | None = None


@dataclass(frozen=True)
class CountHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total_trials: int

    @classmethod
    def from_times(cls, times, gate: float, bin_width: float, total_trials: int) -> "CountHistogram":
        nbins = max(1, int(math.ceil(gate / bin_width)))
        edges = np.linspace(0.0, gate, nbins + 1)
        counts, _ = np.histogram(np.asarray(times, dtype=float), bins=edges)
        return cls(edges, counts.astype(np.int64), int(total_trials))

    def __add__(self, other: "CountHistogram") -> "CountHistogram":
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise ValueError("histograms have different binning")
        return CountHistogram(self.bin_edges, self.counts + other.counts,
                              self.total_trials + other.total_trials)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & ((1 << 64) - 1))

    @property
    def key(self) -> int:
        return _kernel_py.stream_key(self.master_seed)

    def derive(self, *labels) -> "SeedSpec":
        """Child seed for a named sub-run (e.g. one sweep point)."""
        z = self.master_seed
        for label in labels:
            h = int.from_bytes(str(label).encode(), "little") & ((1 << 64) - 1)
            z = int(_kernel_py.mix64(np.uint64((z ^ h) & ((1 << 64) - 1))))
            z = int(_kernel_py.mix64(np.uint64((z + int(_kernel_py.GOLDEN)) & ((1 << 64) - 1))))
        return SeedSpec(z)

    def stream(self, trial_index: int) -> "TrialStream":
        return TrialStream(self.key, int(trial_index))


@dataclass(frozen=True)
class TrialStream:
    """Random stream of one trial: fixed uniforms addressed by slot."""

    key: int
    index: int

    def uniform(self, slot: int) -> float:
        return float(_kernel_py.trial_uniforms(self.key, [self.index], [slot])[0, 0])


def available_backends() -> list[str]:
    return list(_BACKENDS)


def sample_qrng(xi: float, stream: TrialStream) -> QrngBranch:
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi out of range: {xi!r}")
    return QrngBranch.IN if stream.uniform(_kernel_py.QRNG) < xi else QrngBranch.OUT


@dataclass(frozen=True)
class TrialPlan:
    herald_p: float
    xi: float
    p_in: float  # click probability (efficiency included) with the memory in
    p_out: float
    dark_p: float
    gate: float
    q_in: np.ndarray = None
    q_out: np.ndarray = None

    def args(self):
        return (self.herald_p, self.xi, self.p_in, self.p_out, self.dark_p,
                self.gate, self.q_in, self.q_out)


def _quantiles(density: np.ndarray, t: np.ndarray) -> np.ndarray:
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(t))])
    if not cdf[-1] > 0:
        return np.linspace(t[0], t[-1], QUANTILE_POINTS)
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(np.linspace(0.0, 1.0, QUANTILE_POINTS), cdf[keep], t[keep])


def arrival_densities(config: InterferometerConfig, phi: float):
    """Time grid over the gate and normalized arrival-time densities.

    The closed-interferometer density is the coherent read-out intensity
    |a1 e^{i phi} psi1 + a2 psi2|^2; the open one is |psi1|^2.  Times are
    measured from the gate opening.
    """
    gate = config.detector.gate_window
    t = np.linspace(0.0, gate, DENSITY_POINTS)
    t1 = READOUT_LEAD * gate
    t2 = t1 + (config.mbs2.storage_time - config.mbs1.storage_time)
    psi1 = envelope(replace(config.mbs1.retrieved_packet, center=t1), t)
    psi2 = envelope(replace(config.mbs2.retrieved_packet, center=t2), t)
    a1, a2 = _arm_amplitudes(config, 1.0)
    r1 = a1 * complex(math.cos(phi), math.sin(phi))
    out = []
    for dens in (np.abs(r1 * psi1 + a2 * psi2) ** 2, np.abs(psi1) ** 2):
        total = np.trapezoid(dens, t) if hasattr(np, "trapezoid") else np.trapz(dens, t)
        out.append(dens / total if total > 0 else np.full_like(t, 1.0 / gate))
    return t, out[0], out[1]


@functools.lru_cache(maxsize=256)
def _plan(config: InterferometerConfig, phi: float, zeta: complex) -> TrialPlan:
    eff = config.detector.efficiency
    a1, a2 = _arm_amplitudes(config, zeta)
    r1 = a1 * complex(math.cos(phi), math.sin(phi))
    t, dens_in, dens_out = arrival_densities(config, phi)
    return TrialPlan(
        herald_p=config.herald_probability,
        xi=config.qrng.xi,
        p_in=eff * abs(a2 + r1) ** 2,
        p_out=eff * abs(a1) ** 2,
        dark_p=config.detector.dark_probability,
        gate=config.detector.gate_window,
        q_in=_quantiles(dens_in, t),
        q_out=_quantiles(dens_out, t),
    )


def trial_plan(config: InterferometerConfig, phi: float, zeta: complex | None = None) -> TrialPlan:
    validate(config)
    return _plan(config, float(phi), _resolve_zeta(config, zeta))


def expected_detection_fraction(config: InterferometerConfig, phi, zeta: complex | None = None):
    """Exact per-trial detection probability under ensemble semantics."""
    zeta = _resolve_zeta(config, zeta)
    phis = np.atleast_1d(np.asarray(phi, dtype=float))
    out = np.empty(phis.shape)
    for i, ph in enumerate(phis):
        p = trial_plan(config, ph, zeta)
        signal = p.herald_p * (p.xi * p.p_in + (1.0 - p.xi) * p.p_out)
        out[i] = 1.0 - (1.0 - signal) * (1.0 - p.dark_p)
    return out if np.ndim(phi) else float(out[0])


def expected_histogram(config: InterferometerConfig, phi: float, trials: int,
                       bin_width: float = 2.0, zeta: complex | None = None):
    """Mean detection counts per time bin over ``trials`` gates.

    Returns ``(bin_edges, expected)``.  Signal and dark contributions are
    combined as independent processes; the first-event rule only matters
    when both occur in one gate, which is second order in the dark rate.
    """
    plan = trial_plan(config, phi, zeta)
    t, dens_in, dens_out = arrival_densities(config, float(phi))
    edges = CountHistogram.from_times([], plan.gate, bin_width, 0).bin_edges
    cdf_in = np.concatenate([[0.0], np.cumsum(0.5 * (dens_in[1:] + dens_in[:-1]) * np.diff(t))])
    cdf_out = np.concatenate([[0.0], np.cumsum(0.5 * (dens_out[1:] + dens_out[:-1]) * np.diff(t))])
    w_in = np.diff(np.interp(edges, t, cdf_in / cdf_in[-1]))
    w_out = np.diff(np.interp(edges, t, cdf_out / cdf_out[-1]))
    signal = plan.herald_p * (plan.xi * plan.p_in * w_in + (1.0 - plan.xi) * plan.p_out * w_out)
    dark = plan.dark_p * np.diff(edges) / plan.gate
    return edges, trials * (signal + dark)


def _simulate(key, start, n, plan: TrialPlan, backend: str | None):
    fn = _BACKENDS[backend or BACKEND]
    return fn(key, start, n, *plan.args())


def run_trials(config: InterferometerConfig, phi: float, seed: SeedSpec, start: int, n: int,
               zeta: complex | None = None, backend: str | None = None):
    """Raw outcome arrays ``(herald, qrng_in, kind, time)`` for a trial range."""
    plan = trial_plan(config, phi, zeta)
    return _simulate(seed.key, int(start), int(n), plan, backend)


def run_trial(config: InterferometerConfig, phi: float, rng_stream: TrialStream,
              zeta: complex | None = None, backend: str | None = None) -> TrialRecord:
    plan = trial_plan(config, phi, zeta)
    herald, qrng, kind, time = _simulate(rng_stream.key, rng_stream.index, 1, plan, backend)
    return _record(rng_stream.index, herald[0], qrng[0], kind[0], time[0])


def _record(index, herald, qrng, kind, time) -> TrialRecord:
    detection = None
    if kind == _kernel_py.SIGNAL_KIND:
        detection = Detection(float(time), DetectionKind.SIGNAL)
    elif kind == _kernel_py.DARK_KIND:
        detection = Detection(float(time), DetectionKind.DARK)
    return TrialRecord(int(index), bool(herald), QrngBranch.IN if qrng else QrngBranch.OUT, detection)


class _PhaseTally(NamedTuple):
    counts: int
    signal: int
    dark: int
    heralded: int
    histogram: CountHistogram


def _tally(config, phi, seed, start, n, zeta, bin_width, backend) -> _PhaseTally:
    plan = trial_plan(config, phi, zeta)
    counts = signal = dark = heralded = 0
    hist = CountHistogram.from_times([], plan.gate, bin_width, 0)
    for lo in range(0, n, CHUNK):
        m = min(CHUNK, n - lo)
        h, _, kind, time = _simulate(seed.key, start + lo, m, plan, backend)
        detected = kind != _kernel_py.NONE
        counts += int(detected.sum())
        signal += int((kind == _kernel_py.SIGNAL_KIND).sum())
        dark += int((kind == _kernel_py.DARK_KIND).sum())
        heralded += int(h.sum())
        hist = hist + CountHistogram.from_times(time[detected], plan.gate, bin_width, m)
    return _PhaseTally(counts, signal, dark, heralded, hist)


class ExperimentResult(NamedTuple):
    scan: FringeScan
    histogram: CountHistogram
    phase_histograms: list
    expected: np.ndarray  # ensemble-mode mean counts per phase
    signal_counts: np.ndarray
    dark_counts: np.ndarray
    heralded: np.ndarray


def run_experiment(config: InterferometerConfig, phase_grid, trials_per_phase: int,
                   seed: SeedSpec | int, *, zeta: complex | None = None, workers: int = 1,
                   bin_width: float = 2.0, backend: str | None = None) -> ExperimentResult:
    """Run ``trials_per_phase`` gated trials at every phase of the grid.

    Trial indices are global: phase ``k`` uses indices
    ``k * trials_per_phase ...``.  ``workers > 1`` spreads phases over a
    thread pool; results are identical to a serial run.
    """
    if trials_per_phase <= 0:
        raise ValueError("trials_per_phase must be positive")
    validate(config)
    seed = seed if isinstance(seed, SeedSpec) else SeedSpec(seed)
    phases = np.asarray(phase_grid, dtype=float).reshape(-1)
    if phases.size == 0:
        raise ValueError("phase grid is empty")
    zeta = _resolve_zeta(config, zeta)

    def job(k):
        return _tally(config, phases[k], seed, k * trials_per_phase, trials_per_phase,
                      zeta, bin_width, backend)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tallies = list(pool.map(job, range(phases.size)))
    else:
        tallies = [job(k) for k in range(phases.size)]

    counts = np.array([t.counts for t in tallies], dtype=np.int64)
    scale = trials_per_phase * config.herald_probability * config.detector.efficiency
    scan = FringeScan(phases, counts.astype(float), scale)
    total = tallies[0].histogram
    for t in tallies[1:]:
        total = total + t.histogram
    expected = trials_per_phase * np.atleast_1d(expected_detection_fraction(config, phases, zeta))
    return ExperimentResult(
        scan=scan,
        histogram=total,
        phase_histograms=[t.histogram for t in tallies],
        expected=expected,
        signal_counts=np.array([t.signal for t in tallies], dtype=np.int64),
        dark_counts=np.array([t.dark for t in tallies], dtype=np.int64),
        heralded=np.array([t.heralded for t in tallies], dtype=np.int64),
    )


def decoherence_config(config: InterferometerConfig, storage_time: float,
                       target: str = "mbs1", phi: float = 0.0) -> InterferometerConfig:
    """Configuration measuring read-out after ``storage_time`` in one arm.

    ``mbs1``: second memory switched out, so only the first read-out counts.
    ``mbs2``: first memory made transparent, second always switched in.
    ``interferometer``: both memories store for ``storage_time``, closed
    interferometer at EOM phase ``phi``.
    """
    m1 = replace(config.mbs1, storage_time=storage_time)
    m2 = replace(config.mbs2, storage_time=storage_time)
    if target == "mbs1":
        return replace(config, mbs1=m1, qrng=QrngSpec(0.0, QrngMode.ENSEMBLE))
    if target == "mbs2":
        return replace(config, mbs1=replace(config.mbs1, eta_con=0.0, storage_time=storage_time),
                       mbs2=m2, qrng=QrngSpec(1.0, QrngMode.ENSEMBLE))
    if target == "interferometer":
        return replace(config, mbs1=m1, mbs2=m2, eom_phase=phi,
                       qrng=QrngSpec(1.0, QrngMode.ENSEMBLE))
    raise ValueError(f"unknown decoherence target {target!r}")


def decoherence_scan(config: InterferometerConfig, storage_time_grid, trials: int,
                     seed: SeedSpec | int, *, target: str = "mbs1", phi: float = 0.0,
                     zeta: complex | None = None, workers: int = 1,
                     backend: str | None = None) -> list[tuple[float, int]]:
    """Detected counts against storage time, ``trials`` gates per point."""
    grid = [float(t) for t in storage_time_grid]
    if not grid:
        raise ValueError("storage time grid is empty")
    if trials <= 0:
        raise ValueError("trials must be positive")
    seed = seed if isinstance(seed, SeedSpec) else SeedSpec(seed)

    def job(k):
        cfg = decoherence_config(config, grid[k], target, phi)
        res = run_experiment(cfg, [phi], trials, seed.derive(target, k), zeta=zeta,
                             backend=backend)
        return int(res.scan.values[0])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(job, range(len(grid))))
    else:
        counts = [job(k) for k in range(len(grid))]
    return list(zip(grid, counts))


def iter_trial_records(config: InterferometerConfig, phi: float, seed: SeedSpec | int,
                       start: int, n: int, zeta: complex | None = None,
                       backend: str | None = None) -> Iterator[TrialRecord]:
    seed = seed if isinstance(seed, SeedSpec) else SeedSpec(seed)
    for lo in range(0, n, CHUNK):
        m = min(CHUNK, n - lo)
        arrays = run_trials(config, phi, seed, start + lo, m, zeta, backend)
        for j, row in enumerate(zip(*arrays)):
            yield _record(start + lo + j, *row)


def _record_to_json(r: TrialRecord) -> str:
    d = {
        "trial_index": r.trial_index,
        "herald_fired": r.herald_fired,
        "qrng_outcome": r.qrng_outcome.value,
        "detection_time_ns": None if r.detection is None else r.detection.time_bin,
        "detection_kind": None if r.detection is None else r.detection.kind.value,
    }
    return json.dumps(d, separators=(",", ":"))


def write_trial_records(records: Iterable[TrialRecord], dest) -> int:
    """Write records as JSON lines; ``dest`` is a path or text stream."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8") as fh:
            return write_trial_records(records, fh)
    n = 0
    for r in records:
        dest.write(_record_to_json(r) + "\n")
        n += 1
    return n


def read_trial_records(src) -> list[TrialRecord]:
    if isinstance(src, (str, os.PathLike)):
        with open(src, encoding="utf-8") as fh:
            return read_trial_records(fh)
    out = []
    for line in src:
        line = line.strip()
        if not line:
            continue
        d = json.loads(line)
        det = None
        if d.get("detection_kind") is not None:
            det = Detection(float(d["detection_time_ns"]), DetectionKind(d["detection_kind"]))
        out.append(TrialRecord(int(d["trial_index"]), bool(d["herald_fired"]),
                               QrngBranch(d["qrng_outcome"]), det))
    return out
