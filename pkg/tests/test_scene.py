import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from directgeo.geodesy import WGS84_A, GeodeticCoord, lla_to_ecef
from directgeo.scene import (
    MU_EARTH,
    SPEED_OF_LIGHT,
    CircularOrbit,
    EcefStateVector,
    EmitterDef,
    Scenario,
    StateTable,
    channel_parameters,
    propagate_circular_orbit,
    simulate_scenario,
    synthesize_received,
)
from directgeo.waveform import GPS_L1_HZ, BasebandCapture, Chirp, Spoofer, Tone, generate

LAM = SPEED_OF_LIGHT / GPS_L1_HZ


def test_wavelength_value():
    assert LAM == pytest.approx(0.19029, abs=5e-6)


def test_circular_orbit_radius_speed_and_circularity():
    states = propagate_circular_orbit(550e3, 53.0, 40.0, 10.0, np.linspace(0, 600, 61))
    r = np.array([np.linalg.norm(s.position) for s in states])
    assert np.ptp(r) / r[0] < 1e-6
    speed = math.sqrt(MU_EARTH / (WGS84_A + 550e3))
    assert speed == pytest.approx(7585, abs=1)
    for s in states:
        assert np.linalg.norm(s.velocity) == pytest.approx(speed, rel=1e-12)
        assert abs(s.position @ s.velocity) / (np.linalg.norm(s.position) * speed) < 1e-12


def test_orbit_altitude_range():
    with pytest.raises(ValueError):
        propagate_circular_orbit(100e3, 53, 0, 0, [0.0])
    with pytest.raises(ValueError):
        propagate_circular_orbit(3000e3, 53, 0, 0, [0.0])


def test_overpass_hits_target():
    orb = CircularOrbit.overpass(35.0, 25.0, 4.5, 550e3, 53.0, ascending=False)
    p = orb.states([4.5])[0].position
    target = lla_to_ecef(GeodeticCoord(35.0, 25.0, 0.0))
    u, t = p / np.linalg.norm(p), target / np.linalg.norm(target)
    assert np.linalg.norm(u - t) < 1e-12


def test_state_vector_validation():
    with pytest.raises(ValueError):
        EcefStateVector(np.array([1e3, 0, 0]), np.zeros(3))
    with pytest.raises(ValueError):
        EcefStateVector(np.array([7e6, 0, 0]), np.array([2e5, 0, 0]))
    with pytest.raises(ValueError):
        EmitterDef(GeodeticCoord(0, 0), Tone(), ref_range_m=0.0)


def test_state_table_interpolates():
    tab = StateTable(np.array([0.0, 10.0]), np.array([[7e6, 0, 0], [7e6, 1e4, 0]]),
                     np.array([[0, 1e3, 0], [0, 1e3, 0]]))
    s = tab.states([5.0])[0]
    np.testing.assert_allclose(s.position, [7e6, 5e3, 0])
    with pytest.raises(ValueError):
        tab.states([11.0])


def _state_from(emitter_pos, unit_offset, dist, velocity):
    return EcefStateVector(emitter_pos + dist * unit_offset, velocity)


def test_doppler_zero_when_velocity_orthogonal():
    e = lla_to_ecef(GeodeticCoord(10, 20, 0))
    up = e / np.linalg.norm(e)
    side = np.cross(up, [0, 0, 1.0])
    side /= np.linalg.norm(side)
    rho, tau, f = channel_parameters(e, _state_from(e, up, 600e3, 7500 * side), LAM)
    assert f == 0.0 or abs(f) < 1e-9
    assert rho == pytest.approx(600e3)
    assert tau == rho / SPEED_OF_LIGHT


def test_doppler_closing_is_positive():
    e = lla_to_ecef(GeodeticCoord(10, 20, 0))
    up = e / np.linalg.norm(e)
    _, _, f = channel_parameters(e, _state_from(e, up, 600e3, -7000.0 * up), LAM)
    assert f == pytest.approx(7000.0 / LAM, rel=1e-12)
    assert f > 0


@settings(max_examples=200, deadline=None)
@given(st.floats(-80, 80), st.floats(-179, 179), st.floats(0, 360), st.floats(30, 150),
       st.floats(-200, 200))
def test_doppler_bound(lat, lon, raan, inc, t):
    e = lla_to_ecef(GeodeticCoord(lat, lon, 0.0))
    s = propagate_circular_orbit(550e3, inc, raan, 0.0, [t])[0]
    _, _, f = channel_parameters(e, s, LAM)
    assert abs(f) <= np.linalg.norm(s.velocity) / LAM * (1 + 1e-12)
    assert abs(f) <= 39.42e3


def _above(lat, lon, alt, vel=(0.0, 0.0, 0.0)):
    return EcefStateVector(lla_to_ecef(GeodeticCoord(lat, lon, alt)), np.array(vel))


def test_amplitude_halves_when_range_doubles():
    em = EmitterDef(GeodeticCoord(0.0, 0.0, 0.0), Tone(0.0), ref_snr_db=0.0, ref_range_m=500e3)
    fs = 1e6
    tx = generate(Tone(0.0), fs, 0.01, start_time_s=-0.005)
    tx.center_freq_hz = GPS_L1_HZ
    near = synthesize_received(em, _above(0, 0, 500e3), tx, 0.0, 1000)
    far = synthesize_received(em, _above(0, 0, 1000e3), tx, 0.0, 1000)
    np.testing.assert_allclose(np.abs(near.samples), 1.0, rtol=1e-9)
    np.testing.assert_allclose(np.abs(far.samples), 0.5, rtol=1e-9)


def test_delay_applied_to_integer_sample():
    # range chosen so the delay is exactly 7 samples at 1 MHz
    fs = 1e6
    rho = 7 * SPEED_OF_LIGHT / fs
    em = EmitterDef(GeodeticCoord(0.0, 0.0, 0.0), Tone(0.0))
    tx = BasebandCapture(np.arange(64) + 0j, fs, start_time_s=-32 / fs)
    rx = EcefStateVector(em.position + np.array([rho, 0, 0]), np.zeros(3))
    y = synthesize_received(em, rx, tx, 0.0, 8)
    a = em.ref_range_m / rho
    np.testing.assert_allclose(y.samples / a, np.arange(32 - 7, 40 - 7), atol=1e-9)


def test_delay_outside_buffer_rejected():
    em = EmitterDef(GeodeticCoord(0.0, 0.0, 0.0), Tone(0.0))
    tx = generate(Tone(0.0), 1e6, 1e-3)
    with pytest.raises(ValueError, match="transmit buffer"):
        synthesize_received(em, _above(0, 0, 500e3), tx, 0.0, 100)


def _rx_pair():
    return [CircularOrbit.overpass(35.0, 27.0, 1.0, 550e3, 53, True),
            CircularOrbit.overpass(35.0, 23.0, 1.0, 550e3, 53, False)]


def test_noise_only_variance():
    sc = Scenario(_rx_pair(), [], duration_s=0.05, sample_rate_hz=25e6, noise_power=2.0, noise_seed=3)
    snap = simulate_scenario(sc)[0]
    for c in snap.captures:
        assert c.n_samples >= 1_000_000
        assert np.mean(np.abs(c.samples) ** 2) == pytest.approx(2.0, rel=0.01)


def test_same_seed_is_byte_identical():
    em = [EmitterDef(GeodeticCoord(35.0, 25.0), Spoofer(prn=3, data_seed=5), -5.0, 700e3)]
    kw = dict(n_snapshots=2, duration_s=0.002, sample_rate_hz=2.048e6, noise_seed=9)
    a = simulate_scenario(Scenario(_rx_pair(), em, **kw))
    b = simulate_scenario(Scenario(_rx_pair(), em, **kw))
    for sa, sb in zip(a, b):
        for ca, cb in zip(sa.captures, sb.captures):
            assert ca.samples.tobytes() == cb.samples.tobytes()
    c = simulate_scenario(Scenario(_rx_pair(), em, **{**kw, "noise_seed": 10}))
    assert c[0].captures[0].samples.tobytes() != a[0].captures[0].samples.tobytes()


def test_superposition():
    e1 = EmitterDef(GeodeticCoord(35.0, 25.0), Spoofer(prn=7, data_seed=1), 3.0, 700e3)
    e2 = EmitterDef(GeodeticCoord(34.8, 25.3), Chirp(2e6, 20e-6), 0.0, 700e3)
    kw = dict(n_snapshots=2, duration_s=0.002, sample_rate_hz=2.048e6, add_noise=False)
    s1 = simulate_scenario(Scenario(_rx_pair(), [e1], **kw))
    s2 = simulate_scenario(Scenario(_rx_pair(), [e2], **kw))
    s12 = simulate_scenario(Scenario(_rx_pair(), [e1, e2], **kw))
    for a, b, ab in zip(s1, s2, s12):
        for ca, cb, cab in zip(a.captures, b.captures, ab.captures):
            ref = cab.samples
            err = np.max(np.abs(ca.samples + cb.samples - ref)) / np.max(np.abs(ref))
            assert err < 1e-12


def test_snapshot_shapes_and_epochs():
    sc = Scenario(_rx_pair(), [], n_snapshots=3, snapshot_spacing_s=1.0, duration_s=1e-3,
                  sample_rate_hz=1e6, start_epoch_s=2.0)
    snaps = simulate_scenario(sc)
    assert [s.epoch_s for s in snaps] == [2.0, 3.0, 4.0]
    for s in snaps:
        assert len(s.captures) == 2
        assert all(c.n_samples == 1000 and c.start_time_s == s.epoch_s for c in s.captures)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(_rx_pair()[:1], [])
    with pytest.raises(ValueError):
        Scenario(_rx_pair(), [], duration_s=0.06)
    with pytest.raises(ValueError):
        Scenario(_rx_pair(), [], n_snapshots=0)


def test_received_tone_has_applied_doppler():
    em = EmitterDef(GeodeticCoord(35.0, 25.0), Tone(0.0), 20.0, 700e3)
    sc = Scenario(_rx_pair(), [em], duration_s=0.01, sample_rate_hz=1e6, add_noise=False)
    snap = simulate_scenario(sc)[0]
    for st_, cap in zip(snap.states, snap.captures):
        _, _, f = channel_parameters(em.position, st_, LAM)
        ph = np.unwrap(np.angle(cap.samples))
        slope = np.polyfit(np.arange(cap.n_samples) / 1e6, ph, 1)[0] / (2 * np.pi)
        assert slope == pytest.approx(f, abs=1e-3)
