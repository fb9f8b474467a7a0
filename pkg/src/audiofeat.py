"""Audiofeat module – PCM-16 WAV ingestion, framing, ZCR/RMS/MFCC and augmentations."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import librosa
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct
from scipy.signal import get_window

from src.errors import WavParseError

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-10
PCM16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Normalized PCM samples at their native rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be > 0, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FrameConfig:
    """Frame and filterbank sizes shared by the feature extractors."""

    frame: int = 2048
    hop: int = 512
    n_mfcc: int = 13
    n_mels: int = 26


# ── WAV ──────────────────────────────────────────────────────────────


def _chunk_name(cid: bytes) -> str:
    return cid.decode("latin-1")


def parse_wav(data: bytes) -> AudioBuffer:
    """Decode a little-endian RIFF/WAVE PCM-16 file; stereo is averaged to mono."""
    if len(data) < 12:
        raise WavParseError("file is shorter than the 12-byte RIFF header", "RIFF")
    if data[:4] == b"RIFX":
        raise WavParseError("big-endian RIFX files are not supported", "RIFX")
    if data[:4] != b"RIFF":
        raise WavParseError(f"missing RIFF tag, found {data[:4]!r}", "RIFF")
    if data[8:12] != b"WAVE":
        raise WavParseError(f"RIFF form type is {data[8:12]!r}, not WAVE", "WAVE")

    channels = rate = 0
    raw: bytes | None = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        name = _chunk_name(cid)
        (size,) = struct.unpack_from("<I", data, pos + 4)
        start, end = pos + 8, pos + 8 + size
        if end > len(data):
            raise WavParseError(
                f"chunk {name!r} declares {size} bytes but only {len(data) - start} remain", name
            )
        if cid == b"fmt ":
            if size < 16:
                raise WavParseError(f"fmt chunk is {size} bytes, need at least 16", name)
            fmt_tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from(
                "<HHIIHH", data, start
            )
            if fmt_tag != 1:
                raise WavParseError(f"codec tag {fmt_tag:#06x} is not integer PCM", name)
            if bits != 16:
                raise WavParseError(f"{bits}-bit samples are not supported, need 16", name)
            if channels not in (1, 2):
                raise WavParseError(f"{channels} channels are not supported", name)
            if rate == 0:
                raise WavParseError("sample rate is zero", name)
            if block_align != 2 * channels:
                raise WavParseError(f"block align {block_align} does not match {channels} channel(s)", name)
        elif cid == b"data":
            if not channels:
                raise WavParseError("data chunk appears before the fmt chunk", name)
            if size % (2 * channels):
                raise WavParseError(f"data chunk of {size} bytes ends mid-frame", name)
            raw = data[start:end]
        pos = end + (size & 1)

    if not channels:
        raise WavParseError("no fmt chunk found", "fmt ")
    if raw is None:
        raise WavParseError("no data chunk found", "data")
    pcm = np.frombuffer(raw, dtype="<i2").astype(float) / PCM16_SCALE
    return AudioBuffer(pcm.reshape(-1, channels).mean(axis=1), int(rate))


def read_wav(path: Path) -> AudioBuffer:
    try:
        return parse_wav(path.read_bytes())
    except WavParseError as exc:
        raise WavParseError(f"{path.name}: {exc.message}", exc.chunk) from exc


# ── Trimming and framing ─────────────────────────────────────────────


def trim(a: AudioBuffer, offset_s: float = 0.6, duration_s: float = 2.5) -> AudioBuffer:
    """Keep ``duration_s`` seconds starting at ``offset_s``; pad the tail with zeros."""
    if offset_s < 0 or duration_s < 0:
        raise ValueError("offset and duration must be >= 0")
    start = int(round(offset_s * a.sample_rate))
    length = int(round(duration_s * a.sample_rate))
    segment = a.samples[start : start + length]
    if start >= len(a):
        logger.warning(
            "offset %.3fs is past the end of a %.3fs buffer; returning silence",
            offset_s, a.duration,
        )
    elif segment.shape[0] < length:
        logger.warning("buffer shorter than offset + duration; padding %d samples", length - segment.shape[0])
    out = np.zeros(length)
    out[: segment.shape[0]] = segment
    return AudioBuffer(out, a.sample_rate)


def frames(samples: np.ndarray, frame: int, hop: int) -> np.ndarray:
    """Overlapping frames as rows; a signal shorter than one frame becomes one padded frame."""
    if frame <= 1 or hop < 1:
        raise ValueError(f"need frame > 1 and hop >= 1, got frame={frame}, hop={hop}")
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < frame:
        padded = np.zeros(frame)
        padded[: samples.shape[0]] = samples
        return padded[None, :]
    return sliding_window_view(samples, frame)[::hop]


def zcr_frames(a: AudioBuffer, frame: int = 2048, hop: int = 512) -> np.ndarray:
    """Fraction of sign changes per frame, counting zero as positive."""
    positive = frames(a.samples, frame, hop) >= 0.0
    changes = positive[:, 1:] != positive[:, :-1]
    return changes.sum(axis=1) / (frame - 1)


def rms_frames(a: AudioBuffer, frame: int = 2048, hop: int = 512) -> np.ndarray:
    return np.sqrt(np.mean(frames(a.samples, frame, hop) ** 2, axis=1))


# ── Spectral features ────────────────────────────────────────────────


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _check_fft_size(n_fft: int) -> None:
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")


def power_spectrum(frame_rows: np.ndarray, n_fft: int) -> np.ndarray:
    """One-sided ``|FFT|^2`` of every row, ``n_fft // 2 + 1`` bins."""
    _check_fft_size(n_fft)
    return np.abs(np.fft.rfft(frame_rows, n=n_fft, axis=-1)) ** 2


def mel_band_edges(sample_rate: int, n_mels: int) -> np.ndarray:
    """``n_mels + 2`` frequencies in Hz, evenly spaced on the HTK mel scale from 0 to Nyquist."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int = 26) -> np.ndarray:
    """Triangular filters, shape ``(n_mels, n_fft // 2 + 1)``, each peaking at 1."""
    _check_fft_size(n_fft)
    edges = mel_band_edges(sample_rate, n_mels)
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    bank = np.zeros((n_mels, bins.shape[0]))
    for m in range(n_mels):
        lower, center, upper = edges[m], edges[m + 1], edges[m + 2]
        rising = (bins - lower) / (center - lower)
        falling = (upper - bins) / (upper - center)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def mel_energies(a: AudioBuffer, n_fft: int = 2048, hop: int = 512, n_mels: int = 26) -> np.ndarray:
    """Hann-windowed mel filterbank energies per frame, shape ``(frames, n_mels)``."""
    _check_fft_size(n_fft)
    window = get_window("hann", n_fft)
    spectrum = power_spectrum(frames(a.samples, n_fft, hop) * window, n_fft)
    return spectrum @ mel_filterbank(a.sample_rate, n_fft, n_mels).T


def mfcc_frames(
    a: AudioBuffer, n_mfcc: int = 13, n_fft: int = 2048, hop: int = 512, n_mels: int = 26
) -> np.ndarray:
    """MFCCs per frame, shape ``(frames, n_mfcc)``."""
    if n_mfcc > n_mels:
        raise ValueError(f"n_mfcc ({n_mfcc}) cannot exceed n_mels ({n_mels})")
    log_mel = np.log(np.maximum(mel_energies(a, n_fft, hop, n_mels), LOG_FLOOR))
    return dct(log_mel, type=2, norm="ortho", axis=1)[:, :n_mfcc]


def feature_vector(a: AudioBuffer, config: FrameConfig = FrameConfig()) -> np.ndarray:
    """Frame means of ZCR, RMS and every MFCC, in that order."""
    return np.concatenate(
        [
            [np.mean(zcr_frames(a, config.frame, config.hop))],
            [np.mean(rms_frames(a, config.frame, config.hop))],
            np.mean(mfcc_frames(a, config.n_mfcc, config.frame, config.hop, config.n_mels), axis=0),
        ]
    )


# ── Augmentation ─────────────────────────────────────────────────────


def _rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _resample_linear(samples: np.ndarray, length: int) -> np.ndarray:
    if samples.shape[0] == 0 or length <= 0:
        return np.zeros(max(length, 0))
    if samples.shape[0] == 1:
        return np.full(length, samples[0])
    positions = np.linspace(0.0, samples.shape[0] - 1, length)
    return np.interp(positions, np.arange(samples.shape[0]), samples)


def augment_noise(
    a: AudioBuffer, factor: float = 0.035, rng: np.random.Generator | int | None = None
) -> AudioBuffer:
    """Add white Gaussian noise of std ``factor * u * max|s|`` with ``u ~ U(0, 1)``.

    ``u`` is drawn first, then the noise samples.
    """
    gen = _rng(rng)
    peak = float(np.max(np.abs(a.samples))) if len(a) else 0.0
    amplitude = factor * gen.uniform() * peak
    noise = amplitude * gen.standard_normal(len(a))
    return AudioBuffer(a.samples + noise, a.sample_rate)


def augment_stretch(a: AudioBuffer, rate: float = 0.8) -> AudioBuffer:
    """Linear-interpolation resampling to ``round(len / rate)`` samples."""
    if rate <= 0:
        raise ValueError(f"stretch rate must be > 0, got {rate}")
    return AudioBuffer(_resample_linear(a.samples, int(round(len(a) / rate))), a.sample_rate)


def augment_shift(
    a: AudioBuffer, max_frac: float = 0.25, rng: np.random.Generator | int | None = None
) -> AudioBuffer:
    """Shift by a uniform integer in ``[-max_frac*sr, +max_frac*sr]``; vacated samples are zero.

    A shift longer than the buffer leaves silence.
    """
    limit = int(max_frac * a.sample_rate)
    k = int(_rng(rng).integers(-limit, limit + 1))
    n = len(a)
    out = np.zeros(n)
    if abs(k) >= n:
        return AudioBuffer(out, a.sample_rate)
    if k > 0:
        out[k:] = a.samples[: n - k]
    elif k < 0:
        out[: n + k] = a.samples[-k:]
    else:
        out[:] = a.samples
    return AudioBuffer(out, a.sample_rate)


def augment_pitch(a: AudioBuffer, semitones: float = 0.7) -> AudioBuffer:
    """Pitch shift by ``semitones`` at constant length (resample, then phase-vocoder stretch back)."""
    if abs(semitones) >= 12:
        raise ValueError(f"|semitones| must be < 12, got {semitones}")
    if len(a) == 0:
        return a
    shifted = librosa.effects.pitch_shift(a.samples, sr=a.sample_rate, n_steps=semitones)
    return AudioBuffer(librosa.util.fix_length(shifted, size=len(a)), a.sample_rate)


AUGMENTATIONS = ("noise", "stretch", "shift", "pitch")


def augment(a: AudioBuffer, technique: str, rng: np.random.Generator | int | None = None) -> AudioBuffer:
    """Apply one named augmentation with its default strength."""
    if technique == "noise":
        return augment_noise(a, rng=rng)
    if technique == "stretch":
        return augment_stretch(a)
    if technique == "shift":
        return augment_shift(a, rng=rng)
    if technique == "pitch":
        return augment_pitch(a)
    raise ValueError(f"unknown augmentation {technique!r}; expected one of {', '.join(AUGMENTATIONS)}")
