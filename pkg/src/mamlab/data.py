"""Synthetic audio dataset generation and the clip-loading pipeline.

Each class gets a distinct spectral signature: a log-spaced center band plus
one of four event kinds (steady tone, chirp, band-noise bursts, amplitude-
modulated tone). Generation is a pure function of the dataset seed, so the
same spec always produces bit-identical WAV files.

Loading turns clips into padded log-mel grids, computes global mean/variance
over the training split, and hands out cached patch sequences. Feature
extraction fans out over worker threads (capped by MAMLAB_THREADS); results
are placed by index, so threading never changes the outcome.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, MelSpectrogram, Waveform, extract_features, grid_frames, load_wav, save_wav
from .errors import ConfigError, InputError
from .patching import PatchGrid, PatchSequence, patchify

MANIFEST_NAME = "manifest.tsv"
EVENT_KINDS = ("tone", "chirp", "noise_burst", "am_tone")
BACKGROUND_NOISE = 0.002
EVENT_AMPLITUDE = 0.4
EVAL_STRIDE = 5  # every 5th clip goes to the eval split


def worker_count() -> int:
    """Thread cap from MAMLAB_THREADS, defaulting to a small pool."""
    env = os.environ.get("MAMLAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"MAMLAB_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise ConfigError(f"MAMLAB_THREADS must be >= 1, got {n}")
        return n
    return min(4, os.cpu_count() or 1)


@dataclass
class SynthDatasetSpec:
    num_classes: int = 4
    clips_per_class: int = 50
    clip_seconds: float = 1.0
    label_mode: str = "single"  # or "multi"
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.clips_per_class < 1:
            raise ConfigError(f"clips_per_class must be >= 1, got {self.clips_per_class}")
        if self.clip_seconds * SAMPLE_RATE < 400:
            raise ConfigError(f"clips of {self.clip_seconds}s are shorter than one frame")
        if self.label_mode not in ("single", "multi"):
            raise ConfigError(f"label_mode must be 'single' or 'multi', got {self.label_mode!r}")


def class_center_freq(class_index: int, num_classes: int) -> float:
    """Log-spaced band centers between 400 Hz and 4 kHz."""
    if num_classes == 1:
        return 1000.0
    return 400.0 * 10.0 ** (class_index / (num_classes - 1))


def _render_event(kind: str, fc: float, n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    if kind == "tone":
        freq = fc * rng.uniform(0.95, 1.05)
        return np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    if kind == "chirp":
        f0, f1 = fc * 0.7, fc * rng.uniform(1.3, 1.5)
        phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) * t * t / t[-1])
        return np.sin(phase + rng.uniform(0, 2 * np.pi))
    if kind == "noise_burst":
        # band-limited noise: many random sines inside the class band
        sines = np.zeros(n)
        for _ in range(20):
            freq = fc * rng.uniform(0.8, 1.2)
            sines += np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
        sines /= np.sqrt(20.0)
        envelope = np.zeros(n)
        for _ in range(rng.integers(3, 7)):
            width = int(rng.uniform(0.05, 0.12) * SAMPLE_RATE)
            start = rng.integers(0, max(1, n - width))
            envelope[start:start + width] = 1.0
        return sines * envelope
    if kind == "am_tone":
        rate = rng.uniform(4.0, 10.0)
        carrier = np.sin(2 * np.pi * fc * t + rng.uniform(0, 2 * np.pi))
        return carrier * (1.0 + 0.9 * np.sin(2 * np.pi * rate * t)) / 1.9
    raise ConfigError(f"unknown event kind {kind!r}")


def render_clip(classes: list[int], spec: SynthDatasetSpec,
                rng: np.random.Generator) -> np.ndarray:
    n = int(spec.clip_seconds * SAMPLE_RATE)
    clip = rng.normal(0.0, BACKGROUND_NOISE, size=n)
    for c in classes:
        kind = EVENT_KINDS[c % len(EVENT_KINDS)]
        fc = class_center_freq(c, spec.num_classes)
        clip += EVENT_AMPLITUDE * _render_event(kind, fc, n, rng)
    peak = np.abs(clip).max()
    if peak >= 1.0:
        clip = clip / (peak * 1.01)
    return clip


def generate_synth_dataset(spec: SynthDatasetSpec, out_dir) -> Path:
    """Write WAV clips and a manifest; returns the manifest path."""
    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    total = spec.num_classes * spec.clips_per_class
    lines = []
    for i in range(total):
        rng = np.random.default_rng([spec.seed, i])
        if spec.label_mode == "single":
            classes = [i % spec.num_classes]
        else:
            picks = rng.uniform(size=spec.num_classes) < 0.4
            if not picks.any():
                picks[rng.integers(spec.num_classes)] = True
            classes = [int(c) for c in np.where(picks)[0]]
        name = f"clip_{i:05d}.wav"
        save_wav(out_dir / name, render_clip(classes, spec, rng))
        lines.append(f"{name}\t{','.join(str(c) for c in classes)}\n")
    manifest = out_dir / MANIFEST_NAME
    manifest.write_text("".join(lines))
    return manifest


def load_manifest(dataset_dir) -> list[tuple[Path, list[int]]]:
    dataset_dir = Path(dataset_dir)
    manifest = dataset_dir / MANIFEST_NAME
    if not manifest.exists():
        raise InputError(f"no {MANIFEST_NAME} in {dataset_dir}")
    entries = []
    for line_no, line in enumerate(manifest.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise InputError(f"{manifest}:{line_no}: expected 'path<TAB>labels'")
        labels = [int(v) for v in parts[1].split(",") if v != ""]
        entries.append((dataset_dir / parts[0], labels))
    if not entries:
        raise InputError(f"{manifest} lists no clips")
    return entries


@dataclass
class LoadedDataset:
    """Clips as normalized padded spectrograms plus cached patch sequences."""
    specs: list[np.ndarray]
    seqs: list[PatchSequence]
    labels: list[list[int]]
    num_classes: int
    label_mode: str
    grid: PatchGrid
    norm_mean: float
    norm_std: float
    train_indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    eval_indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    @property
    def size(self) -> int:
        return len(self.specs)

    def single_labels(self, indices) -> np.ndarray:
        return np.array([self.labels[i][0] for i in indices], dtype=np.intp)

    def label_matrix(self, indices) -> np.ndarray:
        out = np.zeros((len(indices), self.num_classes))
        for row, i in enumerate(indices):
            out[row, self.labels[i]] = 1.0
        return out


def split_indices(total: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic stride split: every EVAL_STRIDE-th clip evaluates."""
    idx = np.arange(total)
    eval_idx = idx[idx % EVAL_STRIDE == 0]
    train_idx = idx[idx % EVAL_STRIDE != 0]
    return train_idx, eval_idx


def load_dataset(dataset_dir, norm_stats: tuple[float, float] | None = None) -> LoadedDataset:
    """Extract features for every manifest clip and normalize globally.

    When norm_stats is None the mean/std come from the training split;
    passing stats (e.g. from a checkpoint) reuses them instead.
    """
    entries = load_manifest(dataset_dir)
    raw: list[np.ndarray | None] = [None] * len(entries)

    def extract(i: int) -> None:
        wave = load_wav(entries[i][0])
        raw[i] = extract_features(wave).values

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        list(pool.map(extract, range(len(entries))))

    frames = {r.shape[0] for r in raw}
    if len(frames) != 1:
        target = max(frames)
        raw = [r if r.shape[0] == target else
               extract_features(Waveform(load_wav(entries[i][0]).samples), target).values
               for i, r in enumerate(raw)]
    grid = PatchGrid.for_frames(raw[0].shape[0])

    train_idx, eval_idx = split_indices(len(entries))
    if norm_stats is None:
        train_values = np.stack([raw[i] for i in train_idx])
        mean = float(train_values.mean())
        std = float(train_values.std())
        if std < 1e-12:
            std = 1.0
    else:
        mean, std = norm_stats

    specs = [(r - mean) / std for r in raw]
    seqs = [patchify(MelSpectrogram(s)) for s in specs]
    labels = [labels for _, labels in entries]
    num_classes = max(max(ls) for ls in labels) + 1
    label_mode = "multi" if any(len(ls) != 1 for ls in labels) else "single"
    return LoadedDataset(specs=specs, seqs=seqs, labels=labels, num_classes=num_classes,
                         label_mode=label_mode, grid=grid, norm_mean=mean, norm_std=std,
                         train_indices=train_idx, eval_indices=eval_idx)
