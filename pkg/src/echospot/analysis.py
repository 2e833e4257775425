"""Diagnostics for a designed system and the intelligibility metric.

Three quantities explain how well the spot delivery will work: coherence
between system-matrix columns belonging to different loudspeakers (a proxy
for conditioning), the decay of the driving-signal autocorrelation (a proxy
for how fast sound decorrelates away from the spots), and the residual decay
recorded by the solver.  Delivered quality itself is scored with a short-time
objective intelligibility measure on one-third-octave band envelopes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import coherence as welch_coherence

from .audio_io import resample
from .convop import SystemOperator, fft_corr
from .errors import DegenerateSignalError, DimensionError, ParameterError
from .signals import Waveform

__all__ = [
    "CoherenceReport",
    "AutocorrReport",
    "IntelligibilityScore",
    "ContrastRow",
    "ContrastReport",
    "column_coherence",
    "driving_autocorr",
    "stoi",
    "alignment_search",
    "contrast_report",
]


# ---------------------------------------------------------------------------
# Column coherence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoherenceReport:
    """Welch coherence curves for sampled cross-loudspeaker column pairs."""

    frequencies: np.ndarray
    coherence_curves: np.ndarray  # shape (n_pairs, n_frequencies)
    pair_descriptors: list  # [((speaker, column), (speaker, column)), ...]

    def band_average(self) -> float:
        """Mean coherence over all pairs and frequency bins."""
        return float(self.coherence_curves.mean())


def column_coherence(
    op: SystemOperator,
    n_pairs: int = 50,
    seed: int = 0,
    welch_segment: int = 512,
) -> CoherenceReport:
    """Coherence between randomly sampled columns from different loudspeaker blocks.

    Each column of the stacked system matrix is materialized by pushing a
    canonical basis filter through the forward operator; pairs are always
    drawn from two different loudspeakers, since within-block columns are
    correlated by construction.  Low cross-block coherence indicates a
    well-conditioned fit.
    """
    if n_pairs < 1:
        raise ParameterError(f"n_pairs must be >= 1, got {n_pairs}")
    if welch_segment < 64:
        raise ParameterError(f"welch_segment must be >= 64, got {welch_segment}")
    if welch_segment > op.dims.n_rows:
        raise ParameterError(
            f"welch_segment {welch_segment} longer than a column ({op.dims.n_rows} samples)"
        )
    dims = op.dims
    rng = np.random.default_rng([int(seed), 0xC04E])
    curves = []
    descriptors = []
    freqs = None
    for _ in range(n_pairs):
        spk_a = int(rng.integers(dims.n_speakers))
        spk_b = int(rng.integers(dims.n_speakers - 1))
        if spk_b >= spk_a:
            spk_b += 1
        user_a = int(rng.integers(dims.n_users))
        user_b = int(rng.integers(dims.n_users))
        tap_a = int(rng.integers(dims.filter_len))
        tap_b = int(rng.integers(dims.filter_len))
        col_a = op.column(user_a, spk_a, tap_a)
        col_b = op.column(user_b, spk_b, tap_b)
        freqs, gamma = welch_coherence(
            col_a,
            col_b,
            fs=op.sample_rate,
            window="hann",
            nperseg=welch_segment,
            noverlap=welch_segment // 2,
        )
        curves.append(np.nan_to_num(gamma, nan=0.0, posinf=0.0, neginf=0.0))
        descriptors.append(
            (
                (spk_a, (user_a * dims.n_speakers + spk_a) * dims.filter_len + tap_a),
                (spk_b, (user_b * dims.n_speakers + spk_b) * dims.filter_len + tap_b),
            )
        )
    return CoherenceReport(
        frequencies=freqs,
        coherence_curves=np.asarray(curves),
        pair_descriptors=descriptors,
    )


# ---------------------------------------------------------------------------
# Autocorrelation decay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AutocorrReport:
    """Normalized autocorrelation magnitude envelopes of the driving signals."""

    lags: np.ndarray
    envelopes: np.ndarray  # shape (n_speakers, n_lags), envelope[:, 0] == 1
    decay_lags: list  # first lag with envelope < 0.1, or None per speaker


def driving_autocorr(driving: list[Waveform], threshold: float = 0.1) -> AutocorrReport:
    """Autocorrelation envelope per loudspeaker, normalized to one at lag zero."""
    if not driving:
        raise ParameterError("need at least one driving signal")
    envelopes = []
    decay_lags = []
    for wave in driving:
        samples = wave.samples
        if not np.any(samples):
            raise DegenerateSignalError("driving signal is all zero")
        full = fft_corr(samples, samples)
        nonneg = full[len(samples) - 1 :]
        envelope = np.abs(nonneg) / nonneg[0]
        envelope[0] = 1.0
        envelopes.append(envelope)
        below = np.nonzero(envelope < threshold)[0]
        decay_lags.append(int(below[0]) if below.size else None)
    envelopes = np.asarray(envelopes)
    return AutocorrReport(
        lags=np.arange(envelopes.shape[1]),
        envelopes=envelopes,
        decay_lags=decay_lags,
    )


# ---------------------------------------------------------------------------
# Short-time objective intelligibility
# ---------------------------------------------------------------------------

_STOI_RATE = 10000
_STOI_FRAME = 256
_STOI_HOP = 128
_STOI_NFFT = 512
_STOI_BANDS = 15
_STOI_MIN_FREQ = 150.0
_STOI_SEG_FRAMES = 30
_STOI_CLIP_DB = -15.0
_STOI_DYN_RANGE_DB = 40.0


@dataclass(frozen=True)
class IntelligibilityScore:
    value: float
    clean_ref: str = ""
    degraded: str = ""


def _periodic_hann(length: int) -> np.ndarray:
    # MATLAB-style hanning without the zero endpoints.
    return np.hanning(length + 2)[1:-1]


def _frame_signal(samples: np.ndarray, frame: int, hop: int) -> np.ndarray:
    n_frames = 1 + (len(samples) - frame) // hop
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    return samples[idx]


def _remove_silent_frames(clean: np.ndarray, degraded: np.ndarray):
    """Drop frames more than 40 dB below the loudest clean frame.

    The retained frames of both signals are overlap-added back into shorter
    signals; the mask comes from the clean signal alone.
    """
    window = _periodic_hann(_STOI_FRAME)
    if len(clean) < _STOI_FRAME:
        raise ParameterError("signal shorter than one analysis frame")
    clean_frames = _frame_signal(clean, _STOI_FRAME, _STOI_HOP) * window
    degraded_frames = _frame_signal(degraded, _STOI_FRAME, _STOI_HOP) * window
    energies_db = 20.0 * np.log10(np.linalg.norm(clean_frames, axis=1) + np.finfo(float).eps)
    keep = energies_db > energies_db.max() - _STOI_DYN_RANGE_DB
    if not np.any(keep):
        raise DegenerateSignalError("clean signal has no active frames")
    clean_frames = clean_frames[keep]
    degraded_frames = degraded_frames[keep]
    out_len = _STOI_FRAME + _STOI_HOP * (clean_frames.shape[0] - 1)
    clean_out = np.zeros(out_len)
    degraded_out = np.zeros(out_len)
    for i in range(clean_frames.shape[0]):
        start = i * _STOI_HOP
        clean_out[start : start + _STOI_FRAME] += clean_frames[i]
        degraded_out[start : start + _STOI_FRAME] += degraded_frames[i]
    return clean_out, degraded_out


def _third_octave_matrix(sample_rate: int, n_fft: int):
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    centers = _STOI_MIN_FREQ * 2.0 ** (np.arange(_STOI_BANDS) / 3.0)
    matrix = np.zeros((_STOI_BANDS, freqs.size))
    half_band = 2.0 ** (1.0 / 6.0)
    for j, center in enumerate(centers):
        matrix[j] = (freqs >= center / half_band) & (freqs < center * half_band)
    return matrix


def _band_envelopes(samples: np.ndarray, band_matrix: np.ndarray) -> np.ndarray:
    window = _periodic_hann(_STOI_FRAME)
    frames = _frame_signal(samples, _STOI_FRAME, _STOI_HOP) * window
    spectra = np.abs(np.fft.rfft(frames, _STOI_NFFT, axis=1)) ** 2
    return np.sqrt(spectra @ band_matrix.T).T  # (bands, frames)


def _segment_correlations(clean_env: np.ndarray, degraded_env: np.ndarray) -> float:
    clip_gain = 1.0 + 10.0 ** (-_STOI_CLIP_DB / 20.0)
    n_frames = clean_env.shape[1]
    total = 0.0
    count = 0
    for stop in range(_STOI_SEG_FRAMES, n_frames + 1):
        x = clean_env[:, stop - _STOI_SEG_FRAMES : stop]
        y = degraded_env[:, stop - _STOI_SEG_FRAMES : stop]
        x_norm = np.linalg.norm(x, axis=1)
        y_norm = np.linalg.norm(y, axis=1)
        scale = np.where(y_norm > 0.0, x_norm / np.where(y_norm > 0.0, y_norm, 1.0), 0.0)
        y_scaled = np.minimum(y * scale[:, None], x * clip_gain)
        xc = x - x.mean(axis=1, keepdims=True)
        yc = y_scaled - y_scaled.mean(axis=1, keepdims=True)
        xc_norm = np.linalg.norm(xc, axis=1)
        yc_norm = np.linalg.norm(yc, axis=1)
        dots = np.einsum("bt,bt->b", xc, yc)
        both_flat = (xc_norm == 0.0) & (yc_norm == 0.0)
        one_flat = (xc_norm == 0.0) ^ (yc_norm == 0.0)
        denom = np.where(xc_norm * yc_norm > 0.0, xc_norm * yc_norm, 1.0)
        corr = dots / denom
        # Zero-variance convention: two flat envelopes agree perfectly, a flat
        # against a varying one not at all.
        corr = np.where(both_flat, 1.0, corr)
        corr = np.where(one_flat, 0.0, corr)
        total += float(corr.sum())
        count += corr.size
    return total / count


def stoi(clean: Waveform, degraded: Waveform) -> IntelligibilityScore:
    """Short-time objective intelligibility of ``degraded`` given ``clean``.

    Both signals are resampled to 10 kHz; silent frames are removed by the
    clean signal's energy profile; one-third-octave band envelopes (15 bands
    from 150 Hz) are compared over 30-frame segments by normalized, clipped
    correlation.  Scores run from roughly 0 (unintelligible) to 1 (fully
    intelligible).
    """
    if clean.sample_rate != degraded.sample_rate:
        raise DimensionError(
            f"sample rates differ: {clean.sample_rate} != {degraded.sample_rate}"
        )
    if clean.sample_rate < _STOI_RATE:
        raise ParameterError(
            f"sample rate {clean.sample_rate} below the {_STOI_RATE} Hz analysis rate"
        )
    if len(degraded) < len(clean):
        raise DimensionError(
            f"degraded signal ({len(degraded)}) shorter than clean ({len(clean)})"
        )
    degraded = Waveform(samples=degraded.samples[: len(clean)], sample_rate=degraded.sample_rate)

    clean_10k = resample(clean, _STOI_RATE).samples
    degraded_10k = resample(degraded, _STOI_RATE).samples
    clean_active, degraded_active = _remove_silent_frames(clean_10k, degraded_10k)

    min_len = _STOI_FRAME + _STOI_HOP * (_STOI_SEG_FRAMES - 1)
    if len(clean_active) < min_len:
        raise ParameterError(
            f"only {len(clean_active)} active samples, need {min_len} for one segment"
        )
    band_matrix = _third_octave_matrix(_STOI_RATE, _STOI_NFFT)
    clean_env = _band_envelopes(clean_active, band_matrix)
    degraded_env = _band_envelopes(degraded_active, band_matrix)
    value = _segment_correlations(clean_env, degraded_env)
    # Mean correlation can drift a hair outside [0, 1] for adversarial
    # envelopes; the reported score is pinned to the metric's range.
    return IntelligibilityScore(value=float(min(1.0, max(0.0, value))))


def alignment_search(clean: Waveform, degraded: Waveform, max_shift: int) -> int:
    """Delay of ``degraded`` relative to ``clean`` maximizing cross-correlation.

    Receptions are delayed copies of the message by design, so this runs
    before scoring; only non-negative shifts up to ``max_shift`` are searched.
    """
    if max_shift < 0:
        raise ParameterError(f"max_shift must be >= 0, got {max_shift}")
    full = fft_corr(degraded.samples, clean.samples)
    zero_lag = len(clean) - 1
    window = full[zero_lag : zero_lag + max_shift + 1]
    return int(np.argmax(window))


# ---------------------------------------------------------------------------
# Contrast summary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContrastRow:
    message: int
    spot_score: float
    max_control_score: float
    max_crosstalk_score: float
    contrast: float


@dataclass(frozen=True)
class ContrastReport:
    rows: list = field(default_factory=list)

    def min_contrast(self) -> float:
        return min(row.contrast for row in self.rows)


def contrast_report(
    spots: list[IntelligibilityScore],
    controls: list[list[IntelligibilityScore]],
    crosstalk: list[list[IntelligibilityScore]] | None = None,
) -> ContrastReport:
    """Per-message delivery summary: spot score against the best eavesdropper.

    ``controls[k]`` holds message ``k`` scored at each control location and
    ``crosstalk[k]`` message ``k`` scored at the other listeners' spots; the
    contrast is the spot score minus the worst-case leak.
    """
    if not spots:
        raise ParameterError("need at least one spot score")
    if len(controls) != len(spots):
        raise ParameterError(
            f"got control scores for {len(controls)} messages, expected {len(spots)}"
        )
    if not any(controls):
        raise ParameterError("need at least one control score")
    if crosstalk is None:
        crosstalk = [[] for _ in spots]
    rows = []
    for k, spot in enumerate(spots):
        control_best = max((s.value for s in controls[k]), default=0.0)
        crosstalk_best = max((s.value for s in crosstalk[k]), default=0.0)
        rows.append(
            ContrastRow(
                message=k,
                spot_score=spot.value,
                max_control_score=control_best,
                max_crosstalk_score=crosstalk_best,
                contrast=spot.value - max(control_best, crosstalk_best),
            )
        )
    return ContrastReport(rows=rows)
