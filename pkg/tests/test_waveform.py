import numpy as np
import pytest

from directgeo.waveform import (
    BasebandCapture,
    Chirp,
    Sawtooth,
    Spoofer,
    Tone,
    compute_spectrogram,
    estimate_psd,
    generate,
    generate_ca_code,
    generate_chirp,
    generate_sawtooth,
    generate_spoofer,
    generate_tone,
)

# Published G2 delays (chips) for PRN 1..32 and the first-10-chip octal words.
G2_DELAY = [5, 6, 7, 8, 17, 18, 139, 140, 141, 251, 252, 254, 255, 256, 257, 258,
            469, 470, 471, 472, 473, 474, 509, 512, 513, 514, 515, 516, 859, 860, 861, 862]
FIRST10_OCTAL = ["1440", "1620", "1710", "1744", "1133", "1455", "1131", "1454",
                 "1626", "1504", "1642", "1750", "1764", "1772", "1775", "1776",
                 "1156", "1467", "1633", "1715", "1746", "1763", "1063", "1706",
                 "1743", "1761", "1770", "1774", "1127", "1453", "1625", "1712"]


def _mseq(feedback_stages):
    """Stage-10 output of an all-ones 10-stage register in +/-1 form (1 -> -1)."""
    reg = -np.ones(10, dtype=int)
    out = np.empty(1023, dtype=int)
    for i in range(1023):
        out[i] = reg[9]
        fb = np.prod(reg[[s - 1 for s in feedback_stages]])
        reg = np.roll(reg, 1)
        reg[0] = fb
    return out


G1 = _mseq([3, 10])
G2 = _mseq([2, 3, 6, 8, 9, 10])


def oracle_ca(prn):
    idx = (np.arange(1023) - G2_DELAY[prn - 1]) % 1023
    # product of +/-1 streams equals the XOR in the 0 -> +1 mapping
    return G1 * G2[idx]


def _octal(chips):
    bits = "".join("1" if c < 0 else "0" for c in chips[:10])
    return format(int(bits, 2), "o")


@pytest.mark.parametrize("prn", range(1, 33))
def test_ca_code_matches_delay_table_oracle(prn):
    code = generate_ca_code(prn)
    assert code.shape == (1023,)
    np.testing.assert_array_equal(code, oracle_ca(prn))
    assert _octal(code) == FIRST10_OCTAL[prn - 1]


def test_prn1_first_chips():
    assert _octal(generate_ca_code(1)) == "1440"


def test_ca_code_balance_and_correlations():
    codes = np.array([generate_ca_code(p) for p in range(1, 33)], dtype=float)
    assert set(np.unique(codes)) == {-1.0, 1.0}
    assert np.all((codes == -1).sum(axis=1) == 512)
    spec = np.fft.fft(codes, axis=1)
    auto = np.rint(np.fft.ifft(spec * spec.conj(), axis=1).real)
    assert np.all(auto[:, 0] == 1023)
    assert np.max(np.abs(auto[:, 1:])) <= 65
    for a in range(32):
        cross = np.rint(np.fft.ifft(spec[a] * spec[a + 1:].conj(), axis=1).real)
        assert set(np.unique(cross)) <= {-65.0, -1.0, 63.0}


@pytest.mark.parametrize("prn", [0, 33, -1, 1.5])
def test_bad_prn(prn):
    with pytest.raises(ValueError):
        generate_ca_code(prn)


def test_spoofer_five_samples_per_chip():
    fs = 5.115e6
    cap = generate_spoofer(Spoofer(prn=3, data_seed=9), fs, 0.004)
    y = cap.samples.real
    code = generate_ca_code(3)
    # repeats every 5115 samples up to the nav-bit sign
    for start in (0, 5115, 10230):
        seg = y[start:start + 5115]
        np.testing.assert_array_equal(np.abs(seg - seg[0] * np.repeat(code, 5) * code[0]), 0)
    np.testing.assert_array_equal(y[:5115] * y[0], np.repeat(code, 5) * code[0])
    np.testing.assert_allclose(np.abs(cap.samples), 1.0)


def test_spoofer_nav_bit_changes_only_on_20ms_edges():
    fs = 2.046e6
    cap = generate_spoofer(Spoofer(prn=5, data_seed=1234), fs, 0.2)
    chip = np.floor(np.arange(cap.n_samples) * 1.023e6 / fs).astype(int)
    data = cap.samples.real * generate_ca_code(5)[chip % 1023]
    changes = np.flatnonzero(np.diff(data) != 0) + 1
    assert changes.size > 0
    np.testing.assert_array_equal(changes % int(0.02 * fs), 0)


def test_spoofer_is_windowable_and_deterministic():
    fs = 2.046e6
    spec = Spoofer(prn=7, data_seed=5)
    whole = generate(spec, fs, 0.05, start_time_s=-0.01)
    part = generate(spec, fs, 0.01, start_time_s=0.02)
    off = int(round(0.03 * fs))
    np.testing.assert_array_equal(part.samples, whole.samples[off:off + part.n_samples])
    again = generate(spec, fs, 0.05, start_time_s=-0.01)
    assert again.samples.tobytes() == whole.samples.tobytes()
    other = generate(spec, fs, 0.05, seed=6, start_time_s=-0.01)
    assert other.samples.tobytes() != whole.samples.tobytes()


def test_multi_prn_spoofer():
    cap = generate_spoofer(Spoofer(prn=1, extra_prns=(2, 3)), 2.046e6, 0.002)
    assert np.mean(np.abs(cap.samples) ** 2) == pytest.approx(1.0, rel=0.1)


def test_tone_cases():
    fs = 4e3
    np.testing.assert_array_equal(generate_tone(Tone(0.0), fs, 0.01).samples, 1 + 0j)
    y = generate_tone(Tone(fs / 4), fs, 0.002).samples
    np.testing.assert_allclose(y[:8], [1, 1j, -1, -1j] * 2, atol=1e-12)
    np.testing.assert_allclose(np.abs(generate_tone(Tone(123.4), fs, 0.1).samples), 1.0)
    with pytest.raises(ValueError):
        generate_tone(Tone(fs / 2), fs, 0.01)


def test_chirp_phase_and_sweep():
    fs, B, T = 10e6, 2e6, 100e-6
    cap = generate_chirp(Chirp(B, T), fs, 3 * T)
    y = cap.samples
    assert y[0] == pytest.approx(1 + 0j)
    n_per = int(round(T * fs))
    # periodic, and phase returns to 0 mod 2 pi at u = T
    np.testing.assert_allclose(y[n_per], 1 + 0j, atol=1e-9)
    np.testing.assert_allclose(y[n_per:2 * n_per], y[:n_per], atol=1e-9)
    inst = np.angle(y[1:n_per] * np.conj(y[:n_per - 1])) * fs / (2 * np.pi)
    expected = -B / 2 + B / T * (np.arange(n_per - 1) + 0.5) / fs
    np.testing.assert_allclose(inst, expected, atol=1.0)
    np.testing.assert_allclose(np.abs(y), 1.0)


def test_sawtooth_second_half_is_conjugate():
    fs, B, tc = 1e6, 200e3, 2.5e-3
    y = generate_sawtooth(Sawtooth(B, tc), fs, 4 * tc).samples
    n = int(round(tc * fs))
    np.testing.assert_allclose(y[n:2 * n], np.conj(y[:n]), atol=1e-9)
    np.testing.assert_allclose(y[2 * n:4 * n], y[:2 * n], atol=1e-9)
    assert Sawtooth(B, tc).period_s == 2 * tc
    np.testing.assert_allclose(np.abs(y), 1.0)


def test_sawtooth_full_period_is_twice_the_chirp():
    spec = Sawtooth(200e3, 2.5e-3)
    assert spec.bandwidth_hz == 200e3 and spec.period_s == pytest.approx(5e-3)


def test_bandwidth_must_be_below_sample_rate():
    with pytest.raises(ValueError):
        generate_chirp(Chirp(3e6, 1e-3), 2e6, 0.01)
    with pytest.raises(ValueError):
        Chirp(-1.0, 1e-3)


def test_off_grid_start_time_rejected():
    with pytest.raises(ValueError):
        generate_tone(Tone(0.0), 1e3, 0.1, start_time_s=0.0005)


def test_psd_tone_peak_and_total_power():
    fs = 1e6
    cap = generate_tone(Tone(123e3), fs, 0.05)
    f, p = estimate_psd(cap, 1024)
    df = f[1] - f[0]
    assert abs(f[np.argmax(p)] - 123e3) <= df
    assert p.sum() * df == pytest.approx(1.0, rel=0.05)


def test_psd_chirp_power_inside_band():
    fs, B = 5e6, 2e6
    cap = generate_chirp(Chirp(B, 1e-3), fs, 0.01)
    f, p = estimate_psd(cap, 256)
    df = f[1] - f[0]
    band = np.abs(f) <= B / 2 + 2 * df
    assert p[band].sum() / p.sum() >= 0.99
    # full-record periodogram as an independent integration
    spec = np.abs(np.fft.fft(cap.samples)) ** 2
    freqs = np.fft.fftfreq(cap.n_samples, 1 / fs)
    assert spec[np.abs(freqs) <= B / 2 + 2 * df].sum() / spec.sum() >= 0.99


def test_short_chirp_spreads_past_its_sweep():
    # 2 MHz over 20 us has a time-bandwidth product of 40; sidebands carry a few percent
    fs, B = 5e6, 2e6
    cap = generate_chirp(Chirp(B, 20e-6), fs, 0.01)
    f, p = estimate_psd(cap, 256)
    df = f[1] - f[0]
    frac = p[np.abs(f) <= B / 2 + 2 * df].sum() / p.sum()
    assert 0.95 < frac < 0.99


def test_psd_white_noise_is_flat():
    rng = np.random.default_rng(3)
    seg = 64
    x = (rng.standard_normal(seg * 51) + 1j * rng.standard_normal(seg * 51)) / np.sqrt(2)
    f, p = estimate_psd(BasebandCapture(x, 1e6), seg)
    assert p.max() / p.min() < 3
    assert p.sum() * (f[1] - f[0]) == pytest.approx(np.mean(np.abs(x) ** 2), rel=0.05)


def test_psd_errors():
    cap = BasebandCapture(np.ones(10), 1.0)
    with pytest.raises(ValueError):
        estimate_psd(cap, 11)
    with pytest.raises(ValueError):
        BasebandCapture(np.array([], dtype=complex), 1.0)


def test_spectrogram_shape_and_tone():
    fs = 1e6
    cap = generate_tone(Tone(-200e3), fs, 0.01)
    f, t, mag = compute_spectrogram(cap, 128, 50)
    assert mag.shape == (128, (cap.n_samples - 128) // 50 + 1)
    assert t.size == mag.shape[1]
    peaks = f[np.argmax(mag, axis=0)]
    assert np.all(np.abs(peaks + 200e3) <= f[1] - f[0])
    _, _, mag2 = compute_spectrogram(cap, 128, 300)
    assert mag2.shape[1] == (cap.n_samples - 128) // 300 + 1


def test_spectrogram_chirp_rises_within_period():
    fs, T = 5e6, 1e-3
    cap = generate_chirp(Chirp(2e6, T), fs, T)
    f, t, mag = compute_spectrogram(cap, 128, 64)
    peaks = f[np.argmax(mag, axis=0)]
    assert np.all(np.diff(peaks) >= 0)
    assert peaks[-1] - peaks[0] > 1.5e6


def test_spectrogram_sawtooth_slope_changes_sign_at_half_period():
    fs, tc = 1e6, 2.5e-3
    cap = generate_sawtooth(Sawtooth(200e3, tc), fs, 2 * tc)
    f, t, mag = compute_spectrogram(cap, 256, 64)
    peaks = f[np.argmax(mag, axis=0)]
    first = t < tc - 128 / fs
    second = t > tc + 128 / fs
    assert np.all(np.diff(peaks[first]) >= 0) and peaks[first][-1] > peaks[first][0]
    assert np.all(np.diff(peaks[second]) <= 0) and peaks[second][-1] < peaks[second][0]


def test_spectrogram_errors():
    cap = BasebandCapture(np.ones(10), 1.0)
    with pytest.raises(ValueError):
        compute_spectrogram(cap, 11, 1)
    with pytest.raises(ValueError):
        compute_spectrogram(cap, 4, 0)


@pytest.mark.parametrize("spec", [Spoofer(prn=2, data_seed=3), Tone(1e3), Chirp(1e5, 1e-4),
                                  Sawtooth(1e5, 1e-4)])
def test_generators_are_deterministic_and_unit_modulus(spec):
    a = generate(spec, 2.048e6, 0.003)
    b = generate(spec, 2.048e6, 0.003)
    assert a.samples.tobytes() == b.samples.tobytes()
    np.testing.assert_allclose(np.abs(a.samples), 1.0, atol=1e-12)
