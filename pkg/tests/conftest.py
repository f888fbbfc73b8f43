import math

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from delayedchoice.model import (
    CarrierPhase,
    DetectorModel,
    InterferometerConfig,
    MemoryBeamSplitter,
    PacketShape,
    QrngMode,
    QrngSpec,
    WavePacket,
)

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

unit = st.floats(0.0, 1.0, allow_nan=False)
open_unit = st.floats(0.01, 0.99, allow_nan=False)


@st.composite
def packets(draw, shapes=tuple(PacketShape)):
    return WavePacket(
        draw(st.sampled_from(shapes)),
        draw(st.floats(-20.0, 20.0)),
        draw(st.floats(2.0, 40.0)),
        draw(st.sampled_from([0.0, 0.0, draw(st.floats(-0.2, 0.2))])),
    )


@st.composite
def memories(draw):
    return MemoryBeamSplitter(
        eta_con=draw(unit),
        eta_stored=draw(unit),
        storage_time=draw(st.floats(0.0, 3000.0)),
        coherence_time_T1=draw(st.sampled_from([math.inf, draw(st.floats(10.0, 5000.0))])),
        retrieved_packet=draw(packets()),
    )


@st.composite
def configs(draw, mode=None):
    return InterferometerConfig(
        mbs1=draw(memories()),
        mbs2=draw(memories()),
        eom_phase=draw(st.floats(-10.0, 10.0)),
        fiber_delay=draw(st.floats(0.0, 5000.0)),
        qrng=QrngSpec(draw(unit), mode or draw(st.sampled_from(list(QrngMode)))),
        detector=DetectorModel(draw(unit), draw(st.floats(0.0, 1e4)), draw(st.floats(50.0, 2000.0))),
        carrier_phase_convention=draw(st.sampled_from(list(CarrierPhase))),
        theta_residual=draw(st.floats(-math.pi, math.pi)),
        carrier_angular_frequency=draw(st.floats(-1.0, 1.0)),
        herald_probability=draw(unit),
    )


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
