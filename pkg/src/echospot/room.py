"""Room impulse responses: shoebox simulation, sweep measurement, file grids.

Provides the per-(listener, loudspeaker) acoustic channels three ways: an
image-source simulator for rectangular rooms, an exponential sine sweep
generator/deconvolver for simulated measurement round trips, and float-WAV
load/save for measured grids.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .convop import fft_conv
from .errors import DimensionError, GeometryError, ParameterError
from .signals import Waveform

__all__ = [
    "RirSet",
    "ShoeboxSpec",
    "SweepSpec",
    "simulate_shoebox",
    "simulate_rir_grid",
    "jitter_positions",
    "ess_generate",
    "ess_deconvolve",
    "band_l2_error",
    "load_rirs",
    "save_rirs",
]

_SINC_HALF = 40  # 81-tap fractional-delay kernel
_SINC_WINDOW = np.hanning(2 * _SINC_HALF + 1)


@dataclass(frozen=True)
class RirSet:
    """A grid of room impulse responses, one per (listening point, loudspeaker)."""

    rirs: np.ndarray  # shape (n_points, n_speakers, rir_len)
    sample_rate: int
    geometry: dict = field(default_factory=dict)

    def __post_init__(self):
        rirs = np.asarray(self.rirs, dtype=np.float64)
        if rirs.ndim != 3:
            raise DimensionError(f"rirs must be 3-d, got shape {rirs.shape}")
        if not np.all(np.isfinite(rirs)):
            raise ParameterError("rirs contain non-finite values")
        if rirs.size and not np.all(np.any(rirs != 0.0, axis=2)):
            raise ParameterError("every impulse response needs at least one nonzero sample")
        rirs.setflags(write=False)
        object.__setattr__(self, "rirs", rirs)

    @property
    def n_points(self) -> int:
        return self.rirs.shape[0]

    @property
    def n_speakers(self) -> int:
        return self.rirs.shape[1]

    @property
    def rir_len(self) -> int:
        return self.rirs.shape[2]


@dataclass(frozen=True)
class ShoeboxSpec:
    """Rectangular room for the image-source model."""

    dimensions: tuple[float, float, float]
    absorption: float | tuple[float, ...] = 0.3
    max_order: int = 20
    speed_of_sound: float = 343.0
    sample_rate: int = 16000

    def wall_absorptions(self) -> np.ndarray:
        """Six per-wall coefficients, ordered (x0, x1, y0, y1, z0, z1)."""
        absorption = np.asarray(self.absorption, dtype=np.float64)
        if absorption.ndim == 0:
            absorption = np.full(6, float(absorption))
        if absorption.shape != (6,):
            raise ParameterError(
                f"absorption must be a scalar or 6 per-wall values, got shape {absorption.shape}"
            )
        if np.any(absorption <= 0.0) or np.any(absorption > 1.0):
            raise ParameterError("absorption coefficients must lie in (0, 1]")
        return absorption

    def validate(self):
        dims = np.asarray(self.dimensions, dtype=np.float64)
        if dims.shape != (3,) or np.any(dims <= 0.0):
            raise ParameterError(f"room dimensions must be 3 positive lengths, got {self.dimensions}")
        if self.max_order < 0:
            raise ParameterError(f"max_order must be >= 0, got {self.max_order}")
        if self.speed_of_sound <= 0.0 or self.sample_rate <= 0:
            raise ParameterError("speed of sound and sample rate must be positive")
        self.wall_absorptions()


@dataclass(frozen=True)
class SweepSpec:
    """Exponential sine sweep band and duration."""

    f_start: float
    f_end: float
    duration: float
    sample_rate: int

    def __post_init__(self):
        if not (0.0 < self.f_start < self.f_end < self.sample_rate / 2.0):
            raise ParameterError(
                f"need 0 < f_start < f_end < sample_rate/2, got "
                f"({self.f_start}, {self.f_end}) at {self.sample_rate} Hz"
            )
        if self.duration <= 0.0:
            raise ParameterError(f"duration must be positive, got {self.duration}")


def _axis_images(n_bound: int, source_coord: float, room_len: float, beta_low: float, beta_high: float):
    """Per-axis image coordinates, reflection-coefficient products and orders."""
    shifts = np.arange(-n_bound, n_bound + 1)
    coords, gains, orders = [], [], []
    for parity in (0, 1):
        coords.append((1 - 2 * parity) * source_coord + 2.0 * shifts * room_len)
        orders.append(np.abs(shifts - parity) + np.abs(shifts))
        gains.append(beta_low ** np.abs(shifts - parity) * beta_high ** np.abs(shifts))
    return (
        np.concatenate(coords),
        np.concatenate(gains),
        np.concatenate(orders),
    )


def simulate_shoebox(
    spec: ShoeboxSpec,
    source,
    receiver,
    length: int,
) -> Waveform:
    """Image-source impulse response between one source and one receiver.

    Every mirror image up to the reflection order bound contributes an
    impulse at its propagation delay, attenuated by the product of wall
    reflection coefficients and spherical spreading.  Fractional delays are
    realized with an 81-tap Hann-windowed sinc so image timing is accurate to
    well under a thousandth of a sample.
    """
    spec.validate()
    room = np.asarray(spec.dimensions, dtype=np.float64)
    src = np.asarray(source, dtype=np.float64)
    rcv = np.asarray(receiver, dtype=np.float64)
    for name, pos in (("source", src), ("receiver", rcv)):
        if pos.shape != (3,):
            raise GeometryError(f"{name} must be a 3-d position, got {pos}")
        if np.any(pos <= 0.0) or np.any(pos >= room):
            raise GeometryError(f"{name} at {pos.tolist()} is not strictly inside the room")
    direct = float(np.linalg.norm(src - rcv))
    if direct == 0.0:
        raise GeometryError("source and receiver coincide")
    fs = spec.sample_rate
    direct_delay = direct / spec.speed_of_sound * fs
    if length <= direct_delay:
        raise ParameterError(
            f"length {length} does not reach the direct path at {direct_delay:.1f} samples"
        )

    absorption = spec.wall_absorptions()
    beta = np.sqrt(1.0 - absorption)
    n_bound = spec.max_order // 2 + 1
    per_axis = [
        _axis_images(n_bound, src[ax], room[ax], beta[2 * ax], beta[2 * ax + 1])
        for ax in range(3)
    ]

    cx, gx, ox = per_axis[0]
    cy, gy, oy = per_axis[1]
    cz, gz, oz = per_axis[2]
    order = ox[:, None, None] + oy[None, :, None] + oz[None, None, :]
    keep = order <= spec.max_order
    ix, iy, iz = np.nonzero(keep)

    dx = cx[ix] - rcv[0]
    dy = cy[iy] - rcv[1]
    dz = cz[iz] - rcv[2]
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    gain = gx[ix] * gy[iy] * gz[iz] / (4.0 * np.pi * dist)
    delay = dist / spec.speed_of_sound * fs

    # Drop images whose whole kernel lands past the end of the response.
    reachable = delay - _SINC_HALF < length
    delay = delay[reachable]
    gain = gain[reachable]

    h = np.zeros(length)
    offsets = np.arange(-_SINC_HALF, _SINC_HALF + 1)
    chunk = 8192
    for start in range(0, delay.size, chunk):
        dly = delay[start : start + chunk]
        amp = gain[start : start + chunk]
        centers = np.round(dly).astype(np.int64)
        idx = centers[:, None] + offsets[None, :]
        taps = amp[:, None] * np.sinc(idx - dly[:, None]) * _SINC_WINDOW[None, :]
        valid = (idx >= 0) & (idx < length)
        np.add.at(h, idx[valid], taps[valid])
    return Waveform(samples=h, sample_rate=fs)


def simulate_rir_grid(
    spec: ShoeboxSpec,
    speaker_positions,
    receiver_positions,
    length: int,
) -> RirSet:
    """Simulate the full (receiver, loudspeaker) response grid."""
    speakers = [np.asarray(p, dtype=np.float64) for p in speaker_positions]
    receivers = [np.asarray(p, dtype=np.float64) for p in receiver_positions]
    rirs = np.zeros((len(receivers), len(speakers), length))
    for row, rcv in enumerate(receivers):
        for col, src in enumerate(speakers):
            rirs[row, col] = simulate_shoebox(spec, src, rcv, length).samples
    geometry = {
        "room_dimensions": list(np.asarray(spec.dimensions, dtype=float)),
        "speaker_positions": [list(map(float, p)) for p in speakers],
        "receiver_positions": [list(map(float, p)) for p in receivers],
    }
    return RirSet(rirs=rirs, sample_rate=spec.sample_rate, geometry=geometry)


def jitter_positions(positions, sigma: float, seed: int, room_dimensions, margin: float = 0.05):
    """Gaussian-perturb receiver positions, kept strictly inside the room.

    Models the drift between measurement time and playback time; used to
    build a second evaluation grid that does not match the design grid.
    """
    if sigma < 0.0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    room = np.asarray(room_dimensions, dtype=np.float64)
    rng = np.random.default_rng([int(seed), 0x3177E2])
    out = []
    for pos in positions:
        pos = np.asarray(pos, dtype=np.float64)
        moved = pos + rng.normal(0.0, sigma, size=3)
        out.append(np.clip(moved, margin, room - margin))
    return out


def ess_generate(spec: SweepSpec) -> tuple[Waveform, Waveform]:
    """Exponential sine sweep and its amplitude-compensated inverse filter.

    The inverse is the time-reversed sweep with a +6 dB/octave tilt, shifted
    and scaled so that ``sweep (*) inverse`` peaks at exactly
    ``len(inverse) - 1`` with amplitude one; convolving a recording of the
    sweep with it therefore puts the impulse response right after that index.
    """
    fs = spec.sample_rate
    n = int(round(spec.duration * fs))
    if n < 2:
        raise ParameterError("sweep too short")
    t = np.arange(n) / fs
    ratio = spec.f_end / spec.f_start
    log_ratio = np.log(ratio)
    sweep = np.sin(
        2.0 * np.pi * spec.f_start * spec.duration / log_ratio
        * (np.exp(t * log_ratio / spec.duration) - 1.0)
    )
    # Short raised-cosine fades suppress the switch-on/off splatter that
    # otherwise ripples through the measurement band; longer fades would eat
    # noticeably into the band-edge coverage.
    fade_in = min(int(0.01 * fs), n // 8)
    fade_out = min(int(0.001 * fs), n // 8)
    if fade_in:
        sweep[:fade_in] *= 0.5 * (1.0 - np.cos(np.pi * np.arange(fade_in) / fade_in))
    if fade_out:
        sweep[-fade_out:] *= 0.5 * (1.0 + np.cos(np.pi * np.arange(fade_out) / fade_out))
    inverse = sweep[::-1] * np.exp(-t * log_ratio / spec.duration)

    round_trip = fft_conv(sweep, inverse)
    peak = int(np.argmax(np.abs(round_trip)))
    shift = peak - (n - 1)
    if shift > 0:
        inverse = np.concatenate([inverse[shift:], np.zeros(shift)])
    elif shift < 0:
        inverse = np.concatenate([np.zeros(-shift), inverse[:shift]])
    inverse = inverse / fft_conv(sweep, inverse)[n - 1]
    return (
        Waveform(samples=sweep, sample_rate=fs),
        Waveform(samples=inverse, sample_rate=fs),
    )


def ess_deconvolve(recording: Waveform, inverse_filter: Waveform, length: int) -> Waveform:
    """Recover an impulse response from a sweep recording.

    ``recording`` is the room's answer to the sweep (possibly noisy); the
    linear-response segment after the round-trip peak is cropped to
    ``length`` samples.
    """
    if len(recording) < len(inverse_filter):
        raise DimensionError(
            f"recording ({len(recording)} samples) shorter than the "
            f"inverse filter ({len(inverse_filter)} samples)"
        )
    if length < 1:
        raise ParameterError(f"length must be positive, got {length}")
    if not np.any(recording.samples):
        warnings.warn("recording is all zero; recovered response is degenerate")
        return Waveform(samples=np.zeros(length), sample_rate=recording.sample_rate)
    full = fft_conv(recording.samples, inverse_filter.samples)
    start = len(inverse_filter) - 1
    segment = full[start : start + length]
    if segment.size < length:
        segment = np.concatenate([segment, np.zeros(length - segment.size)])
    return Waveform(samples=segment, sample_rate=recording.sample_rate)


def band_l2_error(estimate: Waveform, reference: Waveform, band: tuple[float, float]) -> float:
    """Relative L2 error between two responses, restricted to a frequency band."""
    if estimate.sample_rate != reference.sample_rate:
        raise DimensionError("sample rates differ")
    n = max(len(estimate), len(reference))
    n_fft = sfft.next_fast_len(2 * n)
    freqs = np.arange(n_fft // 2 + 1) * estimate.sample_rate / n_fft
    mask = (freqs >= band[0]) & (freqs <= band[1])
    est_spec = sfft.rfft(estimate.samples, n_fft)[mask]
    ref_spec = sfft.rfft(reference.samples, n_fft)[mask]
    ref_norm = np.linalg.norm(ref_spec)
    if ref_norm == 0.0:
        raise ParameterError("reference has no energy in the requested band")
    return float(np.linalg.norm(est_spec - ref_spec) / ref_norm)


# ---------------------------------------------------------------------------
# File grids: one float WAV per (point, speaker) plus a JSON manifest.
# ---------------------------------------------------------------------------


def rir_filename(point: int, speaker: int) -> str:
    return f"rir_k{point}_l{speaker}.wav"


def save_rirs(rir_set: RirSet, directory) -> None:
    """Write a response grid as 32-bit float WAVs plus a geometry manifest."""
    from .audio_io import write_wav

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for point in range(rir_set.n_points):
        for speaker in range(rir_set.n_speakers):
            write_wav(
                directory / rir_filename(point, speaker),
                rir_set.rirs[point, speaker],
                rir_set.sample_rate,
            )
    manifest = {
        "n_points": rir_set.n_points,
        "n_speakers": rir_set.n_speakers,
        "rir_len": rir_set.rir_len,
        "sample_rate": rir_set.sample_rate,
        "geometry": rir_set.geometry,
    }
    (directory / "rir_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_rirs(paths) -> RirSet:
    """Load a response grid from a (points x speakers) nested list of files.

    Files must share one sample rate; shorter responses are zero-padded to
    the longest.  A missing file is reported with its grid slot.
    """
    from .audio_io import read_wav

    rows = [list(row) for row in paths]
    if not rows or not rows[0]:
        raise ParameterError("need a nonempty grid of file paths")
    n_speakers = len(rows[0])
    waves = []
    rate = None
    for point, row in enumerate(rows):
        if len(row) != n_speakers:
            raise DimensionError(f"row {point} has {len(row)} files, expected {n_speakers}")
        wave_row = []
        for speaker, path in enumerate(row):
            path = Path(path)
            if not path.exists():
                raise FileNotFoundError(
                    f"missing impulse response for point {point}, loudspeaker {speaker}: {path}"
                )
            wave = read_wav(path)
            if rate is None:
                rate = wave.sample_rate
            elif wave.sample_rate != rate:
                raise DimensionError(
                    f"sample rate mismatch at point {point}, loudspeaker {speaker}: "
                    f"{wave.sample_rate} != {rate} (no silent resampling)"
                )
            wave_row.append(wave.samples)
        waves.append(wave_row)
    length = max(max(len(s) for s in row) for row in waves)
    rirs = np.zeros((len(waves), n_speakers, length))
    for point, row in enumerate(waves):
        for speaker, samples in enumerate(row):
            rirs[point, speaker, : len(samples)] = samples
    return RirSet(rirs=rirs, sample_rate=rate)


def load_rir_directory(directory, n_points: int, n_speakers: int) -> RirSet:
    """Load a saved grid by its conventional file names."""
    directory = Path(directory)
    paths = [
        [directory / rir_filename(point, speaker) for speaker in range(n_speakers)]
        for point in range(n_points)
    ]
    rir_set = load_rirs(paths)
    manifest_path = directory / "rir_manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        return RirSet(
            rirs=rir_set.rirs,
            sample_rate=rir_set.sample_rate,
            geometry=manifest.get("geometry", {}),
        )
    return rir_set
