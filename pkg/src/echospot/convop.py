"""FFT convolution/correlation and the matrix-free reception operator.

The reception of listener ``k`` is a sum over loudspeakers of room-filtered
driving signals, each driving signal itself a sum over listeners of design
signals convolved with the unknown spot filters.  Stacking everything gives a
tall block-Toeplitz linear map from filters to receptions.  At useful sizes
that matrix is far too large to materialize, so this module applies it and its
transpose through cached real FFTs; dense Toeplitz construction lives only in
the test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import DimensionError
from .signals import DesignSignalSet, Waveform

__all__ = [
    "ConvDims",
    "SystemOperator",
    "FeasibilityReport",
    "fft_conv",
    "fft_corr",
    "rank_feasibility",
]


def _pow2_at_least(n: int) -> int:
    size = 1
    while size < n:
        size *= 2
    return size


def fft_conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Linear convolution of two real sequences via zero-padded real FFTs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise DimensionError("fft_conv expects two nonempty 1-d sequences")
    out_len = a.size + b.size - 1
    n_fft = _pow2_at_least(out_len)
    spec = sfft.rfft(a, n_fft) * sfft.rfft(b, n_fft)
    return sfft.irfft(spec, n_fft)[:out_len]


def fft_corr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-correlation ``a`` against time-reversed ``b``.

    Output index ``i`` holds the lag ``i - (len(b) - 1)``; for ``a is b`` this
    is the autocorrelation, symmetric with its peak at lag zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise DimensionError("fft_corr expects two nonempty 1-d sequences")
    out_len = a.size + b.size - 1
    n_fft = _pow2_at_least(out_len)
    spec = sfft.rfft(a, n_fft) * np.conj(sfft.rfft(b, n_fft))
    # conj in frequency corresponds to correlation; negative lags wrap to the
    # end of the inverse transform, so roll them back in front.
    full = sfft.irfft(spec, n_fft)
    return np.concatenate([full[-(b.size - 1):], full[: a.size]]) if b.size > 1 else full[: a.size]


@dataclass(frozen=True)
class ConvDims:
    """All lengths that define the stacked filter-to-reception map."""

    n_samples: int  # design-signal length
    filter_len: int
    rir_len: int
    n_users: int
    n_speakers: int

    def __post_init__(self):
        for name in ("n_samples", "filter_len", "rir_len", "n_users", "n_speakers"):
            if getattr(self, name) < 1:
                raise DimensionError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def driving_len(self) -> int:
        return self.n_samples + self.filter_len - 1

    @property
    def reception_len(self) -> int:
        return self.n_samples + self.filter_len + self.rir_len - 2

    @property
    def n_rows(self) -> int:
        return self.n_users * self.reception_len

    @property
    def n_cols(self) -> int:
        return self.n_users * self.n_speakers * self.filter_len


@dataclass(frozen=True)
class FeasibilityReport:
    is_overdetermined: bool
    slack: int


def rank_feasibility(dims: ConvDims) -> FeasibilityReport:
    """Check the filters-long-enough condition for the stacked system.

    The system has at least as many unknowns as equations exactly when
    ``filter_len * (n_speakers - 1) >= rir_len + n_samples - 2``; the report's
    slack is the left side minus the right.  A negative slack means the
    least-squares fit cannot be exact no matter the design signals.
    """
    slack = dims.filter_len * (dims.n_speakers - 1) - (dims.rir_len + dims.n_samples - 2)
    return FeasibilityReport(is_overdetermined=slack < 0, slack=slack)


class SystemOperator:
    """Matrix-free forward/adjoint map from spot filters to receptions.

    Frequency-domain transforms of the design signals and the room impulse
    responses are cached once at construction; every application then costs a
    handful of FFTs.  Instances are immutable and safe to share.  All
    reductions run in fixed (user, speaker) order so repeated applications are
    bit-identical.
    """

    def __init__(self, design: DesignSignalSet, rirs, filter_len: int):
        rir_array = np.asarray(rirs.rirs, dtype=np.float64)
        if rir_array.ndim != 3:
            raise DimensionError(f"rirs must be 3-d, got shape {rir_array.shape}")
        if rir_array.shape[:2] != (design.n_users, design.n_speakers):
            raise DimensionError(
                f"rir grid {rir_array.shape[:2]} does not match design grid "
                f"{(design.n_users, design.n_speakers)}"
            )
        if filter_len < 1:
            raise DimensionError(f"filter_len must be positive, got {filter_len}")

        self.design = design
        self.rirs = rirs
        self.dims = ConvDims(
            n_samples=design.n_samples,
            filter_len=int(filter_len),
            rir_len=rir_array.shape[2],
            n_users=design.n_users,
            n_speakers=design.n_speakers,
        )
        self.sample_rate = design.sample_rate
        self._n_fft = _pow2_at_least(self.dims.reception_len)
        self._design_spec = sfft.rfft(design.signals, self._n_fft, axis=2)
        self._rir_spec = sfft.rfft(rir_array, self._n_fft, axis=2)

    # -- vector plumbing ----------------------------------------------------

    def filters_to_vec(self, filters: np.ndarray) -> np.ndarray:
        filters = np.asarray(filters, dtype=np.float64)
        expected = (self.dims.n_users, self.dims.n_speakers, self.dims.filter_len)
        if filters.shape != expected:
            raise DimensionError(f"filters shape {filters.shape}, expected {expected}")
        return filters.reshape(-1)

    def vec_to_filters(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dims.n_cols,):
            raise DimensionError(f"filter vector length {vec.shape}, expected {self.dims.n_cols}")
        return vec.reshape(self.dims.n_users, self.dims.n_speakers, self.dims.filter_len)

    # -- forward / adjoint ----------------------------------------------------

    def _driving_spec(self, filters: np.ndarray) -> np.ndarray:
        """Frequency-domain driving signals, one row per loudspeaker."""
        filt_spec = sfft.rfft(filters, self._n_fft, axis=2)
        return np.einsum("kls,kls->ls", self._design_spec, filt_spec)

    def apply(self, filter_vec: np.ndarray) -> np.ndarray:
        """Stacked receptions for a stacked filter vector."""
        filters = self.vec_to_filters(filter_vec)
        driving_spec = self._driving_spec(filters)
        reception_spec = np.einsum("kls,ls->ks", self._rir_spec, driving_spec)
        receptions = sfft.irfft(reception_spec, self._n_fft, axis=1)[:, : self.dims.reception_len]
        return receptions.reshape(-1)

    def apply_adjoint(self, reception_vec: np.ndarray) -> np.ndarray:
        """Exact transpose of :meth:`apply`, realized as FFT correlations."""
        reception_vec = np.asarray(reception_vec, dtype=np.float64)
        if reception_vec.shape != (self.dims.n_rows,):
            raise DimensionError(
                f"reception vector length {reception_vec.shape}, expected {self.dims.n_rows}"
            )
        receptions = reception_vec.reshape(self.dims.n_users, self.dims.reception_len)
        reception_spec = sfft.rfft(receptions, self._n_fft, axis=1)
        # Correlate with the RIRs (sum over listeners), then with the design
        # signals, truncating to the filter length.
        mid_spec = np.einsum("kls,ks->ls", np.conj(self._rir_spec), reception_spec)
        grad_spec = np.conj(self._design_spec) * mid_spec[np.newaxis, :, :]
        grads = sfft.irfft(grad_spec, self._n_fft, axis=2)[:, :, : self.dims.filter_len]
        return grads.reshape(-1)

    def forward(self, filters: np.ndarray):
        """Receptions and driving signals as waveforms, for rendering.

        Returns ``(receptions, driving)`` where receptions has one waveform
        per listener (length ``n_samples + filter_len + rir_len - 2``) and
        driving one per loudspeaker (length ``n_samples + filter_len - 1``).
        """
        filters = np.asarray(filters, dtype=np.float64)
        expected = (self.dims.n_users, self.dims.n_speakers, self.dims.filter_len)
        if filters.shape != expected:
            raise DimensionError(f"filters shape {filters.shape}, expected {expected}")
        driving_spec = self._driving_spec(filters)
        driving = sfft.irfft(driving_spec, self._n_fft, axis=1)[:, : self.dims.driving_len]
        reception_spec = np.einsum("kls,ls->ks", self._rir_spec, driving_spec)
        receptions = sfft.irfft(reception_spec, self._n_fft, axis=1)[:, : self.dims.reception_len]
        rate = self.sample_rate
        return (
            [Waveform(samples=row, sample_rate=rate) for row in receptions],
            [Waveform(samples=row, sample_rate=rate) for row in driving],
        )

    def column(self, user: int, speaker: int, tap: int) -> np.ndarray:
        """Materialize one column of the stacked system matrix."""
        dims = self.dims
        if not (0 <= user < dims.n_users and 0 <= speaker < dims.n_speakers and 0 <= tap < dims.filter_len):
            raise DimensionError(f"column index ({user}, {speaker}, {tap}) out of range")
        basis = np.zeros(dims.n_cols)
        basis[(user * dims.n_speakers + speaker) * dims.filter_len + tap] = 1.0
        return self.apply(basis)
