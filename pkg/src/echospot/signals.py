"""Waveforms, crossfade masks and design signals.

A message destined for one listener is split across loudspeakers by a set of
multiplicative masks.  Each mask is a chain of flat plateaus joined by smooth
cosine-squared crossfades, and for every listener the masks over all
loudspeakers sum to one at every sample, so an anechoic superposition of the
masked pieces reproduces the message exactly.  The masked pieces (chopped
speech, or chopped Gaussian noise when the message is only used as the solver
target) are the design signals that the spot filters act on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError, ParameterError

__all__ = [
    "Waveform",
    "MaskSet",
    "DesignSignalSet",
    "SourceKind",
    "tukey_edge",
    "generate_masks",
    "make_design_signals",
    "anechoic_sum_check",
    "synthetic_speech",
]


def _as_float_samples(samples) -> np.ndarray:
    out = np.ascontiguousarray(samples, dtype=np.float64)
    if out.ndim != 1:
        raise DimensionError(f"samples must be one-dimensional, got shape {out.shape}")
    return out


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled mono audio: float64 samples plus a sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = _as_float_samples(self.samples)
        if not np.all(np.isfinite(samples)):
            raise ParameterError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


class SourceKind(Enum):
    """What the design signals are chopped from."""

    CHOPPED_SPEECH = "speech"
    CHOPPED_NOISE = "noise"


@dataclass(frozen=True)
class MaskSet:
    """Per-(listener, loudspeaker) masks of common length, summing to one per listener."""

    masks: np.ndarray  # shape (n_users, n_speakers, n_samples)
    transition_len: int
    flat_len: int
    seed: int

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=np.float64)
        if masks.ndim != 3:
            raise DimensionError(f"masks must be 3-d (users, speakers, samples), got {masks.shape}")
        masks.setflags(write=False)
        object.__setattr__(self, "masks", masks)

    @property
    def n_users(self) -> int:
        return self.masks.shape[0]

    @property
    def n_speakers(self) -> int:
        return self.masks.shape[1]

    @property
    def n_samples(self) -> int:
        return self.masks.shape[2]


@dataclass(frozen=True)
class DesignSignalSet:
    """The masked signals assigned to each (listener, loudspeaker) slot."""

    signals: np.ndarray  # shape (n_users, n_speakers, n_samples)
    source_kind: SourceKind
    noise_seed: int
    sample_rate: int

    def __post_init__(self):
        signals = np.asarray(self.signals, dtype=np.float64)
        if signals.ndim != 3:
            raise DimensionError(f"signals must be 3-d, got shape {signals.shape}")
        signals.setflags(write=False)
        object.__setattr__(self, "signals", signals)

    @property
    def n_users(self) -> int:
        return self.signals.shape[0]

    @property
    def n_speakers(self) -> int:
        return self.signals.shape[1]

    @property
    def n_samples(self) -> int:
        return self.signals.shape[2]


def tukey_edge(transition_len: int, rising: bool = True) -> np.ndarray:
    """Cosine-squared crossfade edge over ``transition_len`` samples.

    The rising edge is ``cos^2[(pi/2) * (1 - n/(T-1))]`` for ``n = 0..T-1``,
    going from exactly 0 to exactly 1; the falling edge is its time reversal.
    An edge and its reversal sum to one at every sample, which is what makes
    crossfaded masks partition unity.
    """
    if transition_len < 2:
        raise ParameterError(f"transition_len must be >= 2, got {transition_len}")
    n = np.arange(transition_len, dtype=np.float64)
    edge = np.cos(0.5 * np.pi * (1.0 - n / (transition_len - 1))) ** 2
    edge[0] = 0.0
    edge[-1] = 1.0
    if not rising:
        edge = edge[::-1].copy()
    return edge


def generate_masks(
    n_users: int,
    n_speakers: int,
    n_samples: int,
    transition_len: int,
    flat_len: int,
    seed: int,
) -> MaskSet:
    """Randomly segment each listener's timeline across loudspeakers.

    For each listener the timeline is cut into consecutive segments, each
    owned by one loudspeaker (never the same one twice in a row).  Plateau
    lengths are drawn uniformly from ``[flat_len, 2*flat_len]`` and adjacent
    segments crossfade over ``transition_len`` samples with complementary
    cosine-squared edges, so the masks of one listener sum to one everywhere.
    The first and last segments sit at full amplitude at the signal
    boundaries.  Deterministic in all arguments.
    """
    if n_speakers < 2:
        raise ParameterError(f"need at least 2 loudspeakers, got {n_speakers}")
    if n_users < 1:
        raise ParameterError(f"need at least 1 user, got {n_users}")
    if transition_len < 2:
        raise ParameterError(f"transition_len must be >= 2, got {transition_len}")
    if flat_len < 0:
        raise ParameterError(f"flat_len must be >= 0, got {flat_len}")
    if n_samples < 2 * transition_len + flat_len:
        raise ParameterError(
            f"n_samples={n_samples} cannot fit one full segment "
            f"(needs >= 2*transition_len + flat_len = {2 * transition_len + flat_len})"
        )

    rise = tukey_edge(transition_len, rising=True)
    fall = rise[::-1]
    masks = np.zeros((n_users, n_speakers, n_samples), dtype=np.float64)

    for k in range(n_users):
        rng = np.random.default_rng([int(seed), k])
        owner = int(rng.integers(n_speakers))
        pos = 0
        while True:
            flat = int(rng.integers(flat_len, 2 * flat_len + 1))
            # Keep room for the crossfade plus a minimum plateau for the next
            # segment; otherwise this segment is the last and runs to the end.
            if pos + flat + transition_len + flat_len > n_samples:
                masks[k, owner, pos:] = 1.0
                break
            masks[k, owner, pos : pos + flat] = 1.0
            nxt = int(rng.integers(n_speakers - 1))
            if nxt >= owner:
                nxt += 1
            masks[k, owner, pos + flat : pos + flat + transition_len] = fall
            masks[k, nxt, pos + flat : pos + flat + transition_len] = rise
            pos += flat + transition_len
            owner = nxt

    return MaskSet(masks=masks, transition_len=transition_len, flat_len=flat_len, seed=int(seed))


def make_design_signals(
    messages: list[Waveform],
    masks: MaskSet,
    kind: SourceKind = SourceKind.CHOPPED_SPEECH,
    noise_seed: int = 0,
) -> DesignSignalSet:
    """Multiply each mask with its message (chopped speech) or a seeded
    unit-variance Gaussian stream (chopped noise).

    With chopped noise the message is deliberately absent from the design
    signals; it only enters the filter design through the solver target.  Each
    (listener, loudspeaker) slot gets an independent noise stream derived from
    ``(noise_seed, listener, loudspeaker)`` so subsets are reproducible.
    """
    if len(messages) != masks.n_users:
        raise DimensionError(
            f"got {len(messages)} messages for {masks.n_users} mask rows"
        )
    n_samples = masks.n_samples
    rates = {wave.sample_rate for wave in messages}
    if len(rates) > 1:
        raise DimensionError(f"messages have mixed sample rates: {sorted(rates)}")
    for k, wave in enumerate(messages):
        if len(wave) != n_samples:
            raise DimensionError(
                f"message {k} has {len(wave)} samples, masks expect {n_samples}"
            )

    signals = np.empty_like(masks.masks)
    for k in range(masks.n_users):
        for l in range(masks.n_speakers):
            if kind is SourceKind.CHOPPED_SPEECH:
                source = messages[k].samples
            else:
                rng = np.random.default_rng([int(noise_seed), k, l])
                source = rng.standard_normal(n_samples)
            signals[k, l] = source * masks.masks[k, l]

    return DesignSignalSet(
        signals=signals,
        source_kind=kind,
        noise_seed=int(noise_seed),
        sample_rate=messages[0].sample_rate,
    )


def anechoic_sum_check(design: DesignSignalSet, messages: list[Waveform]) -> float:
    """Largest deviation of the per-listener design-signal sum from the message.

    Only meaningful for chopped speech, where the partition-of-unity masks
    guarantee the masked pieces add back up to the original message.
    """
    if design.source_kind is not SourceKind.CHOPPED_SPEECH:
        raise ParameterError("anechoic sum identity only holds for chopped speech")
    if len(messages) != design.n_users:
        raise DimensionError(
            f"got {len(messages)} messages for {design.n_users} design rows"
        )
    worst = 0.0
    for k, wave in enumerate(messages):
        if len(wave) != design.n_samples:
            raise DimensionError(
                f"message {k} has {len(wave)} samples, design expects {design.n_samples}"
            )
        deviation = np.abs(design.signals[k].sum(axis=0) - wave.samples)
        worst = max(worst, float(deviation.max(initial=0.0)))
    return worst


# ---------------------------------------------------------------------------
# Synthetic speech, used by demos and tests when no recorded material is at
# hand.  A phoneme-like segment sequence: voiced segments are a glottal
# pulse source (-12 dB/oct tilt) through vowel formant triples, unvoiced
# segments are shaped noise, joined by short transitions under a fluent
# syllable envelope.
# ---------------------------------------------------------------------------

# Rough vowel inventory: (F1, F2, F3) targets in Hz.
_VOWELS = (
    (310.0, 2020.0, 2960.0),
    (360.0, 640.0, 2390.0),
    (520.0, 1190.0, 2290.0),
    (700.0, 1220.0, 2600.0),
    (660.0, 1700.0, 2410.0),
    (490.0, 1350.0, 1690.0),
    (390.0, 1990.0, 2550.0),
)
_FORMANT_BANDWIDTHS = (60.0, 90.0, 140.0)
# Unvoiced noise shaping: (center, bandwidth) in Hz.
_FRICATIVES = ((2500.0, 1200.0), (4000.0, 1600.0), (5500.0, 2000.0), (1800.0, 900.0))


def _resonator_coeffs(freq_hz: float, bandwidth_hz: float, sample_rate: int):
    r = np.exp(-np.pi * bandwidth_hz / sample_rate)
    theta = 2.0 * np.pi * freq_hz / sample_rate
    b = np.array([1.0 - r])
    a = np.array([1.0, -2.0 * r * np.cos(theta), r * r])
    return b, a


def synthetic_speech(duration: float, sample_rate: int, seed: int) -> Waveform:
    """Deterministic speech-like test signal.

    A random phoneme chain: voiced stretches hop between vowel formant
    targets over a declining, slowly drifting fundamental; unvoiced
    stretches are band-shaped noise.  The syllable envelope dips rather than
    going fully silent, like fluent read speech, and the long-term spectrum
    has the usual low-frequency dominance.
    """
    from scipy.signal import lfilter, lfilter_zi

    if duration <= 0:
        raise ParameterError(f"duration must be positive, got {duration}")
    rng = np.random.default_rng([int(seed), 0x5EEC])
    n_total = int(round(duration * sample_rate))

    # Phoneme chain: per-segment voicing flag, vowel target, level.
    bounds = [0]
    while bounds[-1] < n_total:
        bounds.append(bounds[-1] + int(rng.uniform(0.06, 0.25) * sample_rate))
    bounds[-1] = n_total
    n_segments = len(bounds) - 1
    voiced_flags = rng.random(n_segments) < 0.7
    vowel_ids = rng.integers(len(_VOWELS), size=n_segments)
    fricative_ids = rng.integers(len(_FRICATIVES), size=n_segments)
    seg_levels = 10.0 ** (rng.uniform(-3.0, 0.0, size=n_segments) / 20.0)

    # Piecewise-constant tracks, smoothed so formants glide between targets.
    formant_track = np.zeros((3, n_total))
    voiced_track = np.zeros(n_total)
    level_track = np.zeros(n_total)
    fric_center = np.zeros(n_total)
    fric_width = np.zeros(n_total)
    for seg in range(n_segments):
        sl = slice(bounds[seg], bounds[seg + 1])
        for f_idx in range(3):
            formant_track[f_idx, sl] = _VOWELS[vowel_ids[seg]][f_idx]
        voiced_track[sl] = 1.0 if voiced_flags[seg] else 0.0
        level_track[sl] = seg_levels[seg]
        fric_center[sl], fric_width[sl] = _FRICATIVES[fricative_ids[seg]]
    glide = max(2, int(0.03 * sample_rate))
    kernel = np.ones(glide) / glide

    def smooth(track):
        padded = np.concatenate([np.full(glide, track[0]), track, np.full(glide, track[-1])])
        return np.convolve(padded, kernel, mode="same")[glide:-glide]

    for f_idx in range(3):
        formant_track[f_idx] = smooth(formant_track[f_idx])
    voiced_track = smooth(voiced_track)
    level_track = smooth(level_track)

    # Fundamental: slow drift plus a phrase-level declination.
    block = max(1, int(round(0.02 * sample_rate)))
    n_blocks = int(np.ceil(n_total / block))
    f0_walk = np.cumsum(rng.normal(0.0, 0.01, n_blocks))
    f0_walk -= f0_walk.mean()
    decline = np.linspace(0.1, -0.15, n_total)
    f0 = 115.0 * np.exp(np.clip(np.repeat(f0_walk, block)[:n_total], -0.25, 0.25) + decline)
    phase = np.cumsum(f0 / sample_rate)
    source = 2.0 * (phase % 1.0) - 1.0
    # Glottal tilt cornered near 250 Hz: speech rolls off above the low
    # harmonics without piling energy below the fundamental.
    tilt_pole = np.exp(-2.0 * np.pi * 250.0 / sample_rate)
    source = lfilter([1.0 - tilt_pole], [1.0, -tilt_pole], source)
    source -= source.mean()
    source *= voiced_track

    # Formant resonators applied blockwise with gliding centers.
    out = np.zeros(n_total)
    states = [None] * 3
    clipped = np.clip
    for b_idx in range(n_blocks):
        start = b_idx * block
        stop = min(start + block, n_total)
        chunk = source[start:stop]
        mid = (start + stop) // 2
        for f_idx in range(3):
            freq = float(clipped(formant_track[f_idx, mid], 200.0, 0.45 * sample_rate))
            b, a = _resonator_coeffs(freq, _FORMANT_BANDWIDTHS[f_idx], sample_rate)
            if states[f_idx] is None:
                states[f_idx] = lfilter_zi(b, a) * chunk[0]
            chunk, states[f_idx] = lfilter(b, a, chunk, zi=states[f_idx])
        out[start:stop] = chunk
    voiced_rms = np.sqrt(np.mean(out**2)) + 1e-12

    # Unvoiced segments: noise shaped by a wandering fricative resonance,
    # over a soft broadband breath floor so low bands never empty out.
    noise = rng.standard_normal(n_total)
    shaped = np.zeros(n_total)
    state = None
    for b_idx in range(n_blocks):
        start = b_idx * block
        stop = min(start + block, n_total)
        mid = (start + stop) // 2
        center = float(clipped(fric_center[mid], 500.0, 0.45 * sample_rate))
        b, a = _resonator_coeffs(center, max(300.0, fric_width[mid]), sample_rate)
        if state is None:
            state = lfilter_zi(b, a) * noise[start]
        shaped[start:stop], state = lfilter(b, a, noise[start:stop], zi=state)
    breath = lfilter([1.0], [1.0, -0.9], rng.standard_normal(n_total))
    shaped = shaped / (np.sqrt(np.mean(shaped**2)) + 1e-12)
    shaped += 0.25 * breath / (np.sqrt(np.mean(breath**2)) + 1e-12)
    out = out + (1.0 - voiced_track) * 0.35 * voiced_rms * shaped

    # Fluent syllable envelope: dips, never full silence.
    gate = np.full(n_total, 0.3)
    pos = 0
    while pos < n_total:
        burst = int(rng.uniform(0.12, 0.45) * sample_rate)
        dip = int(rng.uniform(0.03, 0.12) * sample_rate)
        end = min(pos + burst, n_total)
        gate[pos:end] = 1.0
        pos = end + dip
    ramp = max(2, int(0.02 * sample_rate))
    ramp_win = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
    smoother = np.convolve(gate, ramp_win / ramp_win.sum(), mode="same")
    out *= smoother * np.maximum(level_track, 0.1)

    # Keep the material inside the usual wideband-speech bandwidth: little
    # below the fundamental, little above 6.5 kHz.
    from scipy.signal import butter, sosfilt

    sos_hp = butter(2, 90.0, btype="high", fs=sample_rate, output="sos")
    out = sosfilt(sos_hp, out)
    if sample_rate > 13000:
        sos_lp = butter(6, 6500.0, btype="low", fs=sample_rate, output="sos")
        out = sosfilt(sos_lp, out)

    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.5 / peak
    return Waveform(samples=out, sample_rate=sample_rate)
