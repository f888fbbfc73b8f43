"""Simulator of a delayed-choice interferometer built from two quantum-memory
beam splitters: analytic amplitudes, trial-level Monte Carlo, temporal mode
overlap and fitting of fringe and decay data."""

from .model import (
    CarrierPhase,
    DetectorModel,
    InterferometerConfig,
    MemoryBeamSplitter,
    ODCalibration,
    PacketShape,
    QrngMode,
    QrngSpec,
    TimingSequence,
    ValidationError,
    WavePacket,
    od_to_efficiency,
    total_efficiency,
    validate,
)

__version__ = "0.1.0"
