"""DSP front end: framing, filterbank, log floor, padding, WAV I/O."""

import math

import numpy as np
import pytest

from mamlab.dsp import (
    ENERGY_FLOOR,
    LOG_FLOOR,
    MelSpectrogram,
    Waveform,
    extract_features,
    frame_signal,
    grid_frames,
    hann_window,
    load_wav,
    log_mel_spectrogram,
    mel_filterbank,
    pad_to_grid,
    resample_sinc,
    save_wav,
)
from mamlab.errors import InputError


def _tone(freq, seconds, rate=16000, amp=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return np.sin(2 * np.pi * freq * t) * amp


class TestFraming:
    def test_ten_second_clip_gives_998_frames(self):
        frames = frame_signal(Waveform(np.zeros(160000)))
        assert frames.shape == (998, 400)

    def test_exactly_one_window_is_one_frame(self):
        frames = frame_signal(Waveform(np.zeros(400)))
        assert frames.shape == (1, 400)

    def test_constant_input_frame_equals_hann_window(self):
        frames = frame_signal(Waveform(np.ones(800)))
        np.testing.assert_allclose(frames[0], hann_window(400), atol=1e-15)

    def test_too_short_input_reports_minimum(self):
        with pytest.raises(InputError, match="400"):
            frame_signal(Waveform(np.zeros(399)))


class TestLogMel:
    def test_silence_maps_to_floor(self):
        spec = log_mel_spectrogram(Waveform(np.zeros(16000)))
        assert (spec.values == LOG_FLOOR).all()

    def test_ten_second_clip_shape_before_padding(self):
        spec = log_mel_spectrogram(Waveform(np.zeros(160000)))
        assert spec.values.shape == (998, 128)

    def test_pure_tone_argmax_bin_constant_and_derived(self):
        # Derive the expected mel bin from the HTK construction: the filter
        # with the largest triangular response at exactly 1000 Hz.
        n_mels = 128
        mel_max = 2595.0 * math.log10(1.0 + 8000.0 / 700.0)
        points_hz = [700.0 * (10.0 ** (m / 2595.0) - 1.0)
                     for m in np.linspace(0.0, mel_max, n_mels + 2)]
        responses = []
        for m in range(n_mels):
            left, center, right = points_hz[m], points_hz[m + 1], points_hz[m + 2]
            rising = (1000.0 - left) / (center - left)
            falling = (right - 1000.0) / (right - center)
            responses.append(max(0.0, min(rising, falling)))
        expected_bin = int(np.argmax(responses))

        spec = log_mel_spectrogram(Waveform(_tone(1000.0, 2.0)))
        argmax = spec.values.argmax(axis=1)
        interior = argmax[5:-5]
        assert (interior == interior[0]).all()
        assert interior[0] == expected_bin

    def test_amplitude_scaling_shifts_by_two_log_c(self):
        base = Waveform(_tone(440.0, 1.0, amp=0.3))
        c = 2.5
        scaled = Waveform(base.samples * c)
        s_base = log_mel_spectrogram(base).values
        s_scaled = log_mel_spectrogram(scaled).values
        above = s_base > LOG_FLOOR + 1e-9
        np.testing.assert_allclose(s_scaled[above] - s_base[above],
                                   2.0 * np.log(c), atol=1e-9)


class TestFilterbank:
    def test_rows_nonnegative(self):
        fb = mel_filterbank()
        assert (fb >= 0.0).all()

    def test_full_coverage_between_first_and_last_centers(self):
        fb = mel_filterbank()
        mel_max = 2595.0 * math.log10(1.0 + 8000.0 / 700.0)
        points_hz = 700.0 * (10.0 ** (np.linspace(0.0, mel_max, 130) / 2595.0) - 1.0)
        bin_freqs = np.arange(257) * 16000.0 / 512.0
        covered = (bin_freqs > points_hz[1]) & (bin_freqs < points_hz[-2])
        assert (fb.sum(axis=0)[covered] > 0.0).all()


class TestPadding:
    def test_pad_998_to_1024_with_floor(self):
        spec = log_mel_spectrogram(Waveform(_tone(500.0, 10.0)))
        padded = pad_to_grid(spec, 1024)
        assert padded.values.shape == (1024, 128)
        np.testing.assert_array_equal(padded.values[:998], spec.values)
        assert (padded.values[998:] == LOG_FLOOR).all()

    def test_already_at_target_unchanged(self):
        spec = MelSpectrogram(np.random.default_rng(0).normal(size=(1024, 128)))
        padded = pad_to_grid(spec, 1024)
        np.testing.assert_array_equal(padded.values, spec.values)

    def test_longer_input_truncates_with_warning(self, caplog):
        spec = MelSpectrogram(np.random.default_rng(1).normal(size=(1030, 128)))
        with caplog.at_level("WARNING", logger="mamlab.dsp"):
            padded = pad_to_grid(spec, 1024)
        assert padded.values.shape == (1024, 128)
        assert any("truncat" in r.message for r in caplog.records)

    def test_grid_frames_matches_canonical_sizes(self):
        assert grid_frames(998) == 1024
        assert grid_frames(498) == 512
        assert grid_frames(98) == 128

    def test_ten_second_pipeline_is_1024_by_128(self):
        spec = extract_features(Waveform(np.zeros(160000)))
        assert spec.values.shape == (1024, 128)


class TestWavIO:
    def test_pcm16_round_trip(self, tmp_path):
        path = tmp_path / "tone.wav"
        samples = _tone(440.0, 0.5)
        save_wav(path, samples)
        wave = load_wav(path)
        assert wave.sample_rate == 16000
        assert len(wave.samples) == len(samples)
        assert np.abs(wave.samples - samples).max() < 1e-4  # 16-bit quantization

    def test_float32_wav_reads(self, tmp_path):
        from scipy.io import wavfile
        path = tmp_path / "f32.wav"
        samples = _tone(440.0, 0.25).astype(np.float32)
        wavfile.write(path, 16000, samples)
        wave = load_wav(path)
        np.testing.assert_allclose(wave.samples, samples, atol=1e-7)

    def test_non_16k_input_is_resampled(self, tmp_path):
        from scipy.io import wavfile
        path = tmp_path / "slow.wav"
        t = np.arange(8000) / 8000.0
        wavfile.write(path, 8000, (np.sin(2 * np.pi * 440.0 * t) * 0.5).astype(np.float32))
        wave = load_wav(path)
        assert wave.sample_rate == 16000
        assert len(wave.samples) == 16000
        expected = np.sin(2 * np.pi * 440.0 * np.arange(16000) / 16000.0) * 0.5
        interior = slice(2000, 14000)
        assert np.abs(wave.samples[interior] - expected[interior]).max() < 1e-3


class TestResample:
    def test_identity_when_rates_match(self):
        x = np.random.default_rng(2).normal(size=100)
        np.testing.assert_array_equal(resample_sinc(x, 16000, 16000), x)

    def test_downsample_preserves_low_frequency_tone(self):
        rate_in = 48000
        t = np.arange(rate_in) / rate_in
        x = np.sin(2 * np.pi * 1000.0 * t)
        y = resample_sinc(x, rate_in, 16000)
        assert len(y) == 16000
        expected = np.sin(2 * np.pi * 1000.0 * np.arange(16000) / 16000.0)
        interior = slice(1000, 15000)
        assert np.abs(y[interior] - expected[interior]).max() < 1e-3
