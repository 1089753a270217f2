"""Acoustic front-ends: framed power spectra, mel filterbank, log-mel, MFCC,
and statistics pooling.

Framing: frame t covers samples [t*hop, t*hop + frame_len), pre-emphasis is
applied inside each frame, followed by a Hamming window and a zero-padded
DFT. T = floor((N - frame_samples) / hop_samples) + 1.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .corpus import AudioClip

LOG_FLOOR_EPS = 1e-10


@dataclass(frozen=True)
class FrameSpec:
    frame_len: float = 0.025
    hop: float = 0.010
    window: str = "hamming"
    pre_emphasis: float = 0.97

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("need 0 < hop <= frame_len")
        if not 0 <= self.pre_emphasis < 1:
            raise ValueError("pre_emphasis must be in [0, 1)")
        if self.window != "hamming":
            raise ValueError(f"unsupported window {self.window!r}")


@dataclass(frozen=True)
class MelSpec:
    n_mels: int = 80
    f_min: float = 20.0
    f_max: float | None = None  # defaults to sample_rate / 2
    n_fft: int | None = None  # defaults to next power of two >= frame samples

    def __post_init__(self):
        if self.n_mels < 2:
            raise ValueError("n_mels must be >= 2")
        if self.f_min < 0:
            raise ValueError("f_min must be nonnegative")


@dataclass
class FeatureSequence:
    """T x D frame-level features for one segment."""

    segment_id: str
    kind: str  # "logmel" or "mfcc"
    data: np.ndarray
    frame_hop: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError("feature data must be a T x D matrix with T >= 1")
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"features for {self.segment_id!r} contain non-finite values")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def frame_count(n_samples: int, frame_samples: int, hop_samples: int) -> int:
    if n_samples < frame_samples:
        raise ValueError(
            f"clip of {n_samples} samples is shorter than one frame ({frame_samples})"
        )
    return (n_samples - frame_samples) // hop_samples + 1


def default_n_fft(frame_samples: int) -> int:
    n = 1
    while n < frame_samples:
        n *= 2
    return n


def stft_power(clip: AudioClip, fs: FrameSpec, n_fft: int) -> np.ndarray:
    """Squared-magnitude spectra, one row per frame, n_fft//2 + 1 bins."""
    frame_samples = int(round(fs.frame_len * clip.sample_rate))
    hop_samples = int(round(fs.hop * clip.sample_rate))
    if n_fft < frame_samples:
        raise ValueError(f"n_fft ({n_fft}) must be >= frame samples ({frame_samples})")
    n_frames = frame_count(len(clip.samples), frame_samples, hop_samples)

    idx = np.arange(frame_samples)[None, :] + hop_samples * np.arange(n_frames)[:, None]
    frames = clip.samples[idx]
    if fs.pre_emphasis > 0:
        emphasized = np.empty_like(frames)
        emphasized[:, 1:] = frames[:, 1:] - fs.pre_emphasis * frames[:, :-1]
        emphasized[:, 0] = frames[:, 0] - fs.pre_emphasis * frames[:, 0]
        frames = emphasized
    frames = frames * np.hamming(frame_samples)
    spec = np.fft.rfft(frames, n=n_fft, axis=1)
    return np.abs(spec) ** 2


def mel_filterbank(ms: MelSpec, sample_rate: int, n_fft: int) -> np.ndarray:
    """Triangular filters with centers uniform on the mel scale."""
    f_max = ms.f_max if ms.f_max is not None else sample_rate / 2.0
    if f_max > sample_rate / 2.0:
        raise ValueError(f"f_max ({f_max}) exceeds Nyquist ({sample_rate / 2.0})")
    if ms.f_min >= f_max:
        raise ValueError("need f_min < f_max")

    mel_edges = np.linspace(hz_to_mel(ms.f_min), hz_to_mel(f_max), ms.n_mels + 2)
    hz_edges = mel_to_hz(mel_edges)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft

    fb = np.zeros((ms.n_mels, n_fft // 2 + 1))
    for i in range(ms.n_mels):
        left, center, right = hz_edges[i], hz_edges[i + 1], hz_edges[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def filter_centers_hz(ms: MelSpec, sample_rate: int) -> np.ndarray:
    f_max = ms.f_max if ms.f_max is not None else sample_rate / 2.0
    mel_edges = np.linspace(hz_to_mel(ms.f_min), hz_to_mel(f_max), ms.n_mels + 2)
    return mel_to_hz(mel_edges[1:-1])


def log_mel(clip: AudioClip, fs: FrameSpec, ms: MelSpec) -> FeatureSequence:
    """log(mel filterbank energies + eps); D = n_mels."""
    frame_samples = int(round(fs.frame_len * clip.sample_rate))
    n_fft = ms.n_fft if ms.n_fft is not None else default_n_fft(frame_samples)
    power = stft_power(clip, fs, n_fft)
    fb = mel_filterbank(ms, clip.sample_rate, n_fft)
    feats = np.log(power @ fb.T + LOG_FLOOR_EPS)
    return FeatureSequence(clip.clip_id, "logmel", feats, fs.hop)


def mfcc(clip: AudioClip, fs: FrameSpec, ms: MelSpec, n_coeffs: int = 13) -> FeatureSequence:
    """Orthonormal DCT-II of log-mel rows, coefficients 0..n_coeffs-1."""
    if n_coeffs > ms.n_mels:
        raise ValueError(f"n_coeffs ({n_coeffs}) exceeds n_mels ({ms.n_mels})")
    lm = log_mel(clip, fs, ms)
    coeffs = dct(lm.data, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    return FeatureSequence(clip.clip_id, "mfcc", coeffs, fs.hop)


def pool_stats(f: FeatureSequence) -> np.ndarray:
    """Per-dimension mean then population std, concatenated (2D entries)."""
    mean = f.data.mean(axis=0)
    std = f.data.std(axis=0)  # population std; zero when T == 1
    return np.concatenate([mean, std])
