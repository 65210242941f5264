"""Waveform-to-log-mel front end.

16 kHz mono input, 25 ms periodic Hann frames every 10 ms, 512-point power
spectra, 128 triangular HTK-mel filters spanning 0-8000 Hz, natural log with
an energy floor of 1e-10. A 10 s clip frames to 998 rows and pads to the
1024x128 patch grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import FormatError, InputError

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
WINDOW_SAMPLES = 400   # 25 ms at 16 kHz
HOP_SAMPLES = 160      # 10 ms
N_FFT = 512
N_MELS = 128
ENERGY_FLOOR = 1e-10
LOG_FLOOR = math.log(ENERGY_FLOOR)
PATCH_EXTENT = 16


@dataclass
class Waveform:
    """Mono float64 samples at 16 kHz."""
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InputError(f"waveform must be mono, got shape {self.samples.shape}")
        if not np.isfinite(self.samples).all():
            raise InputError("waveform contains non-finite samples")


@dataclass
class MelSpectrogram:
    """frames x 128 grid of log filterbank energies."""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != N_MELS:
            raise InputError(
                f"mel spectrogram must be frames x {N_MELS}, got shape {self.values.shape}")

    @property
    def frames(self) -> int:
        return self.values.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def hann_window(length: int = WINDOW_SAMPLES) -> np.ndarray:
    """Periodic Hann window (denominator is the length, not length-1)."""
    n = np.arange(length, dtype=np.float64)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def frame_signal(wave: Waveform, window_samples: int = WINDOW_SAMPLES,
                 hop_samples: int = HOP_SAMPLES) -> np.ndarray:
    """Slice into overlapping windowed frames; count = floor((len-win)/hop)+1."""
    x = wave.samples
    if len(x) < window_samples:
        raise InputError(
            f"waveform has {len(x)} samples; at least {window_samples} required")
    n_frames = (len(x) - window_samples) // hop_samples + 1
    idx = np.arange(window_samples)[None, :] + hop_samples * np.arange(n_frames)[:, None]
    return x[idx] * hann_window(window_samples)[None, :]


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT,
                   sample_rate: int = SAMPLE_RATE, f_min: float = 0.0,
                   f_max: float = 8000.0) -> np.ndarray:
    """Triangular HTK-mel filters over rfft bin centers; not area-normalized.

    Returns an (n_mels, n_fft//2 + 1) nonnegative weight matrix.
    """
    mel_points = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1, dtype=np.float64) * sample_rate / n_fft
    fb = np.zeros((n_mels, len(bin_freqs)))
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


_FILTERBANK_CACHE: dict[tuple, np.ndarray] = {}


def _cached_filterbank() -> np.ndarray:
    key = (N_MELS, N_FFT, SAMPLE_RATE)
    if key not in _FILTERBANK_CACHE:
        _FILTERBANK_CACHE[key] = mel_filterbank()
    return _FILTERBANK_CACHE[key]


def log_mel_spectrogram(wave: Waveform) -> MelSpectrogram:
    """Log mel-filterbank energies, floored at log(1e-10)."""
    frames = frame_signal(wave)
    spectrum = np.fft.rfft(frames, n=N_FFT, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    energies = power @ _cached_filterbank().T
    return MelSpectrogram(np.log(np.maximum(energies, ENERGY_FLOOR)))


def grid_frames(native_frames: int) -> int:
    """Canonical padded frame count: next multiple of 64.

    Reproduces the usual fixed grids: 998 -> 1024 (10 s), 498 -> 512 (5 s),
    98 -> 128 (1 s).
    """
    return 64 * math.ceil(native_frames / 64)


def pad_to_grid(spec: MelSpectrogram, target_frames: int) -> MelSpectrogram:
    """Pad with the log floor up to target_frames (a multiple of 16).

    Longer inputs are truncated with a warning rather than rejected.
    """
    if target_frames % PATCH_EXTENT != 0:
        raise InputError(f"target_frames must be a multiple of {PATCH_EXTENT}, got {target_frames}")
    if spec.frames > target_frames:
        log.warning("truncating spectrogram from %d to %d frames", spec.frames, target_frames)
        return MelSpectrogram(spec.values[:target_frames].copy())
    if spec.frames == target_frames:
        return MelSpectrogram(spec.values.copy())
    pad = np.full((target_frames - spec.frames, N_MELS), LOG_FLOOR)
    return MelSpectrogram(np.concatenate([spec.values, pad], axis=0))


def resample_sinc(samples: np.ndarray, src_rate: int, dst_rate: int = SAMPLE_RATE,
                  half_width: int = 32) -> np.ndarray:
    """Windowed-sinc resampling (Hann-windowed, anti-aliased on decimation)."""
    if src_rate == dst_rate:
        return np.asarray(samples, dtype=np.float64)
    x = np.asarray(samples, dtype=np.float64)
    ratio = dst_rate / src_rate
    n_out = int(math.floor(len(x) * ratio))
    cutoff = min(1.0, ratio)  # relative to src Nyquist
    t_out = np.arange(n_out) / ratio  # output sample times in input units
    centers = np.floor(t_out).astype(np.intp)
    out = np.zeros(n_out)
    for k in range(-half_width, half_width + 1):
        taps = centers + k
        valid = (taps >= 0) & (taps < len(x))
        delta = t_out - taps
        arg = np.pi * cutoff * delta
        kern = np.where(delta == 0.0, cutoff, cutoff * np.sin(arg) / np.where(arg == 0.0, 1.0, arg))
        window = 0.5 + 0.5 * np.cos(np.pi * delta / (half_width + 1))
        window = np.where(np.abs(delta) <= half_width + 1, window, 0.0)
        out[valid] += x[taps[valid]] * kern[valid] * window[valid]
    return out


def load_wav(path) -> Waveform:
    """Read mono PCM16 or float32 WAV; resample to 16 kHz when needed."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except ValueError as e:
        raise FormatError(f"cannot parse WAV file {path}: {e}") from e
    if data.ndim != 1:
        raise InputError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported WAV sample format {data.dtype}")
    if rate != SAMPLE_RATE:
        samples = resample_sinc(samples, rate, SAMPLE_RATE)
    return Waveform(samples, SAMPLE_RATE)


def save_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write PCM16 WAV, clipping to [-1, 1)."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 32767.0 / 32768.0)
    wavfile.write(path, sample_rate, (clipped * 32768.0).astype(np.int16))


def extract_features(wave: Waveform, target_frames: int | None = None) -> MelSpectrogram:
    """Full front end: log-mel then padding to the patch grid."""
    spec = log_mel_spectrogram(wave)
    if target_frames is None:
        target_frames = grid_frames(spec.frames)
    return pad_to_grid(spec, target_frames)
