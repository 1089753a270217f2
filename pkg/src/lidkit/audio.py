"""WAV I/O and band-limited resampling."""

import math
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, upfirdn

from .corpus import AudioClip
from .errors import MissingInputError

# Kaiser-windowed sinc, 64 taps per polyphase branch.
KAISER_BETA = 8.6
TAPS_PER_PHASE = 64


def read_wav(path, clip_id: str | None = None) -> AudioClip:
    """Read a mono PCM16 or float32 RIFF WAVE file."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"audio file not found: {path}")
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path.name}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path.name}: unsupported sample format {data.dtype}")
    return AudioClip(clip_id or path.stem, int(rate), samples)


def write_wav(path, clip: AudioClip) -> None:
    """Write IEEE float32 mono WAV (exact round trip at float32 precision)."""
    wavfile.write(Path(path), clip.sample_rate, clip.samples.astype(np.float32))


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Polyphase windowed-sinc resampling to target_hz.

    Cutoff at min(source, target)/2 Hz; identical rates return the samples
    bitwise unchanged. Output length is round(n * target / source) +- 1.
    """
    if target_hz <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    src = clip.sample_rate
    if target_hz == src:
        return AudioClip(clip.clip_id, src, clip.samples.copy())

    g = math.gcd(src, target_hz)
    up, down = target_hz // g, src // g
    n_in = len(clip.samples)
    n_out = int(round(n_in * target_hz / src))

    ntaps = TAPS_PER_PHASE * up + 1  # odd length centers the filter exactly
    h = firwin(ntaps, 1.0 / max(up, down), window=("kaiser", KAISER_BETA))
    h = h * up  # compensate the 1/up gain of zero-insertion
    half = (ntaps - 1) // 2

    # Zero-pad the filter so the group delay lands on an output sample,
    # then trim the transient (same alignment scheme as polyphase texts).
    n_pre_pad = (down - half % down) % down
    n_pre_remove = (half + n_pre_pad) // down
    h = np.concatenate([np.zeros(n_pre_pad), h])
    y = upfirdn(h, clip.samples, up=up, down=down)
    while len(y) < n_pre_remove + n_out:
        y = np.concatenate([y, np.zeros(1)])
    y = y[n_pre_remove : n_pre_remove + n_out]
    return AudioClip(clip.clip_id, target_hz, y)
