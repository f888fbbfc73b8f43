import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import packets
from delayedchoice.model import DEFAULT_PACKET_1, DEFAULT_PACKET_2, InterferometerConfig, PacketShape, WavePacket
from delayedchoice.temporal import (
    calibrated_packets,
    decoherence_factor,
    envelope,
    intensity,
    overlap,
    storage_time_visibility_profile,
    support,
)

G, E, R = PacketShape.GAUSSIAN, PacketShape.EXPONENTIAL_DECAY, PacketShape.RECTANGULAR


def _grid_norm(p):
    lo, hi = support(p)
    t = np.linspace(lo, hi, 400_001)
    return np.trapezoid(intensity(p, t), t) if hasattr(np, "trapezoid") else np.trapz(intensity(p, t), t)


@pytest.mark.parametrize("p", [WavePacket(G, 3.0, 7.0), WavePacket(E, -2.0, 11.0), WavePacket(R, 0.0, 30.0)])
def test_envelopes_are_normalized(p):
    assert _grid_norm(p) == pytest.approx(1.0, rel=1e-6)
    assert overlap(p, p).zeta == pytest.approx(1.0, abs=1e-9)


def test_envelope_vanishes_outside_support():
    p = WavePacket(E, 5.0, 10.0)
    assert envelope(p, 4.999) == 0
    assert envelope(p, 5.0) != 0
    assert support(WavePacket(R, 0.0, 10.0)) == (-5.0, 5.0)


# Closed-form overlaps of the three shape families (oracles derived by hand).

@given(st.floats(1.0, 50.0), st.floats(-60.0, 60.0))
def test_gaussian_shift(sigma, d):
    z = overlap(WavePacket(G, 0.0, sigma), WavePacket(G, 0.0, sigma), d).zeta
    assert z.real == pytest.approx(math.exp(-d * d / (4 * sigma * sigma)), abs=1e-8)


@given(st.floats(1.0, 50.0), st.floats(1.0, 50.0))
def test_gaussian_width_mismatch(s1, s2):
    z = overlap(WavePacket(G, 0.0, s1), WavePacket(G, 0.0, s2)).zeta
    assert z.real == pytest.approx(math.sqrt(2 * s1 * s2 / (s1 * s1 + s2 * s2)), abs=1e-8)


@given(st.floats(2.0, 40.0), st.floats(-0.3, 0.3))
def test_gaussian_detuning(sigma, delta):
    z = overlap(WavePacket(G, 0.0, sigma), WavePacket(G, 0.0, sigma, delta)).zeta
    assert abs(z) == pytest.approx(math.exp(-(delta * sigma) ** 2 / 4), abs=1e-8)


@given(st.floats(2.0, 40.0), st.floats(2.0, 40.0), st.floats(-80.0, 80.0))
def test_exponential_shift(t1, t2, d):
    z = overlap(WavePacket(E, 0.0, t1), WavePacket(E, 0.0, t2), d).zeta
    tail = t1 if d >= 0 else t2
    expected = 2 * math.sqrt(t1 * t2) / (t1 + t2) * math.exp(-abs(d) / (2 * tail))
    assert z.real == pytest.approx(expected, abs=1e-8)


@given(st.floats(5.0, 100.0), st.floats(0.0, 1.0))
def test_rectangle_shift(w, frac):
    d = frac * w
    assert overlap(WavePacket(R, 0.0, w), WavePacket(R, 0.0, w), d).zeta.real == pytest.approx((w - d) / w, abs=1e-8)


def test_disjoint_supports_give_zero():
    assert overlap(WavePacket(R, 0.0, 10.0), WavePacket(R, 0.0, 10.0), 10.5).zeta == 0


@given(packets(), packets(), st.floats(-50.0, 50.0))
def test_overlap_bounded_and_hermitian(p1, p2, d):
    z12 = overlap(p1, p2, d).zeta
    z21 = overlap(p2, p1, -d).zeta
    assert abs(z12) <= 1.0 + 1e-7
    assert z12 == pytest.approx(z21.conjugate(), abs=1e-7)


def test_decoherence_factor():
    assert decoherence_factor(0.0, 420.0) == 1.0
    assert decoherence_factor(420.0, 420.0) == pytest.approx(math.exp(-1))
    assert decoherence_factor(1e6, math.inf) == 1.0
    with pytest.raises(ValueError):
        decoherence_factor(10.0, 0.0)
    with pytest.raises(ValueError):
        decoherence_factor(-1.0, 10.0)


@given(st.floats(0.0, 5000.0), st.floats(0.0, 5000.0), st.floats(1.0, 5000.0))
def test_decoherence_monotone(a, b, T1):
    lo, hi = sorted((a, b))
    assert 0.0 <= decoherence_factor(hi, T1) <= decoherence_factor(lo, T1) <= 1.0


def test_calibrated_packets_hit_edge_overlap():
    p1, p2 = calibrated_packets()
    assert (p1, p2) == (DEFAULT_PACKET_1, DEFAULT_PACKET_2)
    peak = overlap(p1, p2).zeta.real
    assert peak == pytest.approx(2 * math.sqrt(p1.width * p2.width) / (p1.width + p2.width), abs=1e-9)
    assert overlap(p1, p2, 60.0).zeta.real == pytest.approx(0.1 * peak, abs=1e-9)
    assert overlap(p1, p2, -40.0).zeta.real == pytest.approx(0.1 * peak, abs=1e-9)


def test_profile_peaks_at_matched_storage():
    profile = storage_time_visibility_profile(InterferometerConfig(), [160, 180, 200, 220, 240])
    times, vis = zip(*profile)
    assert times[int(np.argmax(vis))] == 200
