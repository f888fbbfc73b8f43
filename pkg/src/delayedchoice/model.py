"""Domain types for the memory-based delayed-choice interferometer.

All durations are in nanoseconds unless a field name says otherwise
(``TimingSequence`` uses milliseconds and hertz, like the lab sequence it
describes).  Types are frozen dataclasses; use :func:`dataclasses.replace`
to derive variants.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, is_dataclass

__all__ = [
    "PacketShape",
    "WavePacket",
    "MemoryBeamSplitter",
    "QrngMode",
    "QrngSpec",
    "DetectorModel",
    "CarrierPhase",
    "InterferometerConfig",
    "TimingSequence",
    "ODCalibration",
    "ValidationError",
    "validate",
    "total_efficiency",
    "od_to_efficiency",
    "as_dict",
    "set_parameter",
    "parameter_names",
    "config_from_flat",
]


class PacketShape(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL_DECAY = "exponential_decay"
    RECTANGULAR = "rectangular"


@dataclass(frozen=True)
class WavePacket:
    """Temporal envelope of a photonic mode.

    ``width`` is shape specific: the Gaussian field parameter sigma, the
    intensity time constant of an exponential decay, or the full width of a
    rectangle.  ``detuning`` (rad/ns) adds a linear phase ramp about
    ``center``, which makes overlaps between unequal packets complex.
    """

    shape: PacketShape = PacketShape.EXPONENTIAL_DECAY
    center: float = 0.0
    width: float = 10.0
    detuning: float = 0.0


@dataclass(frozen=True)
class MemoryBeamSplitter:
    eta_con: float
    eta_stored: float
    storage_time: float = 200.0
    coherence_time_T1: float = math.inf
    retrieved_packet: WavePacket = field(default_factory=WavePacket)

    @classmethod
    def from_total(cls, eta_con: float, eta_total: float, **kwargs) -> "MemoryBeamSplitter":
        """Build from a write-in efficiency and a total efficiency.

        Efficiencies are often quoted as a total and a conversion part only,
        so the retrieval part is recovered as ``eta_total / eta_con``.
        """
        if eta_con == 0.0:
            if eta_total != 0.0:
                raise ValidationError(["eta_total > 0 requires eta_con > 0"])
            return cls(eta_con=0.0, eta_stored=0.0, **kwargs)
        return cls(eta_con=eta_con, eta_stored=eta_total / eta_con, **kwargs)

    @property
    def eta_total(self) -> float:
        return total_efficiency(self)


class QrngMode(str, enum.Enum):
    """How the QRNG weight enters the prediction.

    AMPLITUDE puts xi inside the interfering amplitude (the form used for the
    fringe fits).  ENSEMBLE treats the QRNG as a classical mixture
    of closed and open runs, which is what per-trial sampling produces.
    """

    AMPLITUDE = "amplitude"
    ENSEMBLE = "ensemble"


@dataclass(frozen=True)
class QrngSpec:
    xi: float = 1.0
    mode: QrngMode = QrngMode.AMPLITUDE


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 0.6
    dark_rate: float = 25.0  # counts per second
    gate_window: float = 500.0

    @property
    def dark_probability(self) -> float:
        """Probability of at least one dark count inside one gate."""
        return -math.expm1(-self.dark_rate * self.gate_window * 1e-9)


class CarrierPhase(str, enum.Enum):
    """Convention for the storage phases theta1/theta2.

    EQUAL_STORAGE drops the common carrier phase (theta1 = 0) and keeps only
    ``theta_residual`` on the second memory.  CARRIER evaluates
    theta_k = carrier_angular_frequency * storage_time_k, with theta_residual
    still added to theta2.
    """

    EQUAL_STORAGE = "equal_storage"
    CARRIER = "carrier"


# Read-out packets whose overlap falls to 10% when the second memory is read
# 40 ns early or 60 ns late (see temporal.calibrated_packets).
_EDGE_K = 2.0 * math.log(10.0)
DEFAULT_PACKET_1 = WavePacket(PacketShape.EXPONENTIAL_DECAY, 0.0, 60.0 / _EDGE_K)
DEFAULT_PACKET_2 = WavePacket(PacketShape.EXPONENTIAL_DECAY, 0.0, 40.0 / _EDGE_K)


def _default_mbs1() -> MemoryBeamSplitter:
    return MemoryBeamSplitter.from_total(0.850, 0.133, retrieved_packet=DEFAULT_PACKET_1)


def _default_mbs2() -> MemoryBeamSplitter:
    return MemoryBeamSplitter.from_total(0.5, 0.24, retrieved_packet=DEFAULT_PACKET_2)


@dataclass(frozen=True)
class InterferometerConfig:
    mbs1: MemoryBeamSplitter = field(default_factory=_default_mbs1)
    mbs2: MemoryBeamSplitter = field(default_factory=_default_mbs2)
    eom_phase: float = 0.0
    fiber_delay: float = 1000.0
    qrng: QrngSpec = field(default_factory=QrngSpec)
    detector: DetectorModel = field(default_factory=DetectorModel)
    carrier_phase_convention: CarrierPhase = CarrierPhase.EQUAL_STORAGE
    theta_residual: float = 0.0
    carrier_angular_frequency: float = 0.0  # rad/ns, CARRIER convention only
    herald_probability: float = 1.0

    @property
    def theta1(self) -> float:
        if self.carrier_phase_convention is CarrierPhase.CARRIER:
            return self.carrier_angular_frequency * self.mbs1.storage_time
        return 0.0

    @property
    def theta2(self) -> float:
        if self.carrier_phase_convention is CarrierPhase.CARRIER:
            return self.carrier_angular_frequency * self.mbs2.storage_time + self.theta_residual
        return self.theta_residual


@dataclass(frozen=True)
class TimingSequence:
    repetition_rate: float = 100.0  # Hz
    trap_duration: float = 8.7  # ms
    experiment_window: float = 1.3  # ms

    @property
    def period_ms(self) -> float:
        return 1e3 / self.repetition_rate


@dataclass(frozen=True)
class ODCalibration:
    eta_max: float = 0.331
    od_sat: float = 15.0


class ValidationError(ValueError):
    """Raised with every violated invariant, not just the first one."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _check_probability(name: str, value: float, problems: list[str]) -> None:
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        problems.append(f"{name}: probability out of range ({value!r})")


def _check_packet(name: str, p: WavePacket, problems: list[str]) -> None:
    if not (math.isfinite(p.width) and p.width > 0):
        problems.append(f"{name}.width must be positive ({p.width!r})")
    if not math.isfinite(p.center):
        problems.append(f"{name}.center must be finite")
    if not math.isfinite(p.detuning):
        problems.append(f"{name}.detuning must be finite")


def _check_memory(name: str, m: MemoryBeamSplitter, problems: list[str]) -> None:
    _check_probability(f"{name}.eta_con", m.eta_con, problems)
    _check_probability(f"{name}.eta_stored", m.eta_stored, problems)
    if not (m.storage_time >= 0 and math.isfinite(m.storage_time)):
        problems.append(f"{name}.storage_time must be >= 0 ({m.storage_time!r})")
    if not m.coherence_time_T1 > 0:
        problems.append(f"{name}.coherence_time_T1: nonpositive coherence time ({m.coherence_time_T1!r})")
    _check_packet(f"{name}.retrieved_packet", m.retrieved_packet, problems)


def _collect(obj, problems: list[str], name: str = "") -> None:
    if isinstance(obj, InterferometerConfig):
        _check_memory("mbs1", obj.mbs1, problems)
        _check_memory("mbs2", obj.mbs2, problems)
        if not math.isfinite(obj.eom_phase):
            problems.append("eom_phase must be finite")
        if not (obj.fiber_delay >= 0 and math.isfinite(obj.fiber_delay)):
            problems.append(f"fiber_delay must be >= 0 ({obj.fiber_delay!r})")
        _collect(obj.qrng, problems)
        _collect(obj.detector, problems)
        for attr in ("theta_residual", "carrier_angular_frequency"):
            if not math.isfinite(getattr(obj, attr)):
                problems.append(f"{attr} must be finite")
        _check_probability("herald_probability", obj.herald_probability, problems)
    elif isinstance(obj, MemoryBeamSplitter):
        _check_memory(name or "mbs", obj, problems)
    elif isinstance(obj, QrngSpec):
        _check_probability("qrng.xi", obj.xi, problems)
        if not isinstance(obj.mode, QrngMode):
            problems.append(f"qrng.mode must be a QrngMode ({obj.mode!r})")
    elif isinstance(obj, DetectorModel):
        _check_probability("detector.efficiency", obj.efficiency, problems)
        if not (obj.dark_rate >= 0 and math.isfinite(obj.dark_rate)):
            problems.append(f"detector.dark_rate must be >= 0 ({obj.dark_rate!r})")
        if not (obj.gate_window > 0 and math.isfinite(obj.gate_window)):
            problems.append(f"detector.gate_window must be > 0 ({obj.gate_window!r})")
    elif isinstance(obj, TimingSequence):
        if not obj.repetition_rate > 0:
            problems.append("timing.repetition_rate must be > 0")
        elif obj.trap_duration < 0 or obj.experiment_window < 0:
            problems.append("timing durations must be >= 0")
        elif obj.trap_duration + obj.experiment_window > obj.period_ms * (1 + 1e-12):
            problems.append(
                "inconsistent timing sequence: trap_duration + experiment_window "
                f"({obj.trap_duration + obj.experiment_window} ms) exceeds the period ({obj.period_ms} ms)"
            )
    elif isinstance(obj, WavePacket):
        _check_packet(name or "packet", obj, problems)
    else:
        raise TypeError(f"cannot validate {type(obj).__name__}")


def validate(config):
    """Return ``config`` unchanged if every invariant holds.

    Accepts an :class:`InterferometerConfig` or any of its component types
    (and :class:`TimingSequence`).  Raises :class:`ValidationError` listing
    all violations otherwise.
    """
    problems: list[str] = []
    _collect(config, problems)
    if problems:
        raise ValidationError(problems)
    return config


def total_efficiency(m: MemoryBeamSplitter) -> float:
    return m.eta_con * m.eta_stored


def od_to_efficiency(od: float, calib: ODCalibration = ODCalibration()) -> float:
    """Map optical depth to the second memory's total efficiency.

    Saturating form ``eta_max * (1 - exp(-od / od_sat))``; monotone, zero for
    an empty medium and ``eta_max`` in the optically thick limit.
    """
    if od < 0 or math.isnan(od):
        raise ValueError(f"negative OD: {od!r}")
    if math.isinf(od):
        return calib.eta_max
    return calib.eta_max * -math.expm1(-od / calib.od_sat)


def as_dict(obj) -> dict:
    """Plain-data snapshot of a config tree (enums become their values)."""
    if is_dataclass(obj):
        return {f.name: as_dict(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


# Parameters that are not stored directly but derived from stored fields.
VIRTUAL_PARAMETERS = ("mbs1.eta_total", "mbs2.eta_total", "od")


def _coerce(current, value):
    if isinstance(current, enum.Enum):
        return type(current)(value.lower() if isinstance(value, str) else value)
    if isinstance(current, bool):
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if isinstance(current, int) and not isinstance(current, bool):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def parameter_names(obj=None, prefix: str = "") -> list[str]:
    """Every settable dotted parameter path of a config tree."""
    obj = InterferometerConfig() if obj is None else obj
    names = []
    for f in fields(obj):
        value = getattr(obj, f.name)
        if is_dataclass(value):
            names.extend(parameter_names(value, f"{prefix}{f.name}."))
        else:
            names.append(prefix + f.name)
    if not prefix:
        names.extend(VIRTUAL_PARAMETERS)
    return names


def set_parameter(config, path: str, value, od_calibration: ODCalibration = ODCalibration()):
    """Return a copy of ``config`` with the dotted parameter ``path`` set.

    Besides plain fields (``qrng.xi``, ``mbs2.storage_time``, ...) this
    accepts ``mbs1.eta_total`` / ``mbs2.eta_total``, which keep the write-in
    efficiency and adjust the retrieval efficiency, and ``od``, which sets
    the second memory's total efficiency through :func:`od_to_efficiency`.
    Strings are coerced to the field's type.
    """
    from dataclasses import replace

    if path == "od":
        return set_parameter(config, "mbs2.eta_total", od_to_efficiency(float(value), od_calibration))
    head, _, rest = path.partition(".")
    if path.endswith("eta_total") and rest == "eta_total":
        m = getattr(config, head)
        total = float(value)
        if m.eta_con == 0.0:
            if total != 0.0:
                raise ValidationError([f"{path}: eta_con is 0, total must be 0"])
            return config
        stored = total / m.eta_con
        if stored > 1.0 + 1e-12:
            raise ValidationError([f"{path}={total} exceeds {head}.eta_con={m.eta_con}"])
        return replace(config, **{head: replace(m, eta_stored=min(stored, 1.0))})
    names = {f.name for f in fields(config)}
    if head not in names:
        raise KeyError(f"unknown parameter {path!r}")
    current = getattr(config, head)
    if rest:
        if not is_dataclass(current):
            raise KeyError(f"unknown parameter {path!r}")
        new = set_parameter(current, rest, value)
    else:
        if is_dataclass(current):
            raise KeyError(f"{path!r} is a group, not a parameter")
        new = _coerce(current, value)
    return replace(config, **{head: new})


def config_from_flat(flat: dict, base: "InterferometerConfig | None" = None) -> "InterferometerConfig":
    """Apply dotted ``key: value`` pairs to ``base`` (defaults if omitted).

    Derived parameters are applied after plain ones so that, e.g.,
    ``mbs1.eta_total`` uses the ``mbs1.eta_con`` given in the same mapping.
    """
    config = InterferometerConfig() if base is None else base
    items = sorted(flat.items(), key=lambda kv: kv[0] in VIRTUAL_PARAMETERS)
    for key, value in items:
        config = set_parameter(config, key, value)
    return config


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(flatten(v, f"{prefix}{k}."))
        else:
            out[prefix + k] = v
    return out
