"""Float-WAV reading/writing and polyphase resampling."""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DimensionError, ParameterError
from .signals import Waveform

__all__ = ["read_wav", "write_wav", "resample"]

# Kaiser taper for >= 60 dB stopband rejection in the polyphase resampler.
_KAISER_BETA = 5.653


def write_wav(path, samples, sample_rate: int) -> None:
    """Write mono samples as a 32-bit float WAV."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise DimensionError(f"expected mono samples, got shape {samples.shape}")
    wavfile.write(str(path), int(sample_rate), samples.astype(np.float32))


def read_wav(path) -> Waveform:
    """Read a mono WAV file; integer PCM is scaled to [-1, 1)."""
    path = Path(path)
    rate, data = wavfile.read(str(path))
    if data.ndim == 2:
        if data.shape[1] != 1:
            raise ParameterError(f"{path} has {data.shape[1]} channels, expected mono")
        data = data[:, 0]
    if data.dtype.kind == "i":
        scale = float(np.iinfo(data.dtype).max) + 1.0
        samples = data.astype(np.float64) / scale
    elif data.dtype.kind == "u":
        scale = (float(np.iinfo(data.dtype).max) + 1.0) / 2.0
        samples = data.astype(np.float64) / scale - 1.0
    else:
        samples = data.astype(np.float64)
    return Waveform(samples=samples, sample_rate=int(rate))


def resample(wave: Waveform, target_rate: int) -> Waveform:
    """Rational polyphase resampling to a new sample rate."""
    if target_rate <= 0:
        raise ParameterError(f"target_rate must be positive, got {target_rate}")
    if target_rate == wave.sample_rate:
        return wave
    ratio = Fraction(int(target_rate), int(wave.sample_rate))
    out = resample_poly(
        wave.samples, ratio.numerator, ratio.denominator, window=("kaiser", _KAISER_BETA)
    )
    return Waveform(samples=out, sample_rate=int(target_rate))
