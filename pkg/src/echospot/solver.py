"""Least-squares design of the spot filters.

The filters minimize the squared distance between the stacked receptions and
a delayed copy of the messages.  The system is rectangular and matrix-free,
so we run conjugate gradients on the normal equations (CGNR): each iteration
needs one forward and one adjoint application of the reception operator and
monotonically decreases the data misfit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .convop import SystemOperator
from .errors import DimensionError, NumericalError, ParameterError
from .signals import Waveform

__all__ = [
    "FilterSet",
    "SolveReport",
    "TargetSpec",
    "RenderResult",
    "build_target",
    "default_delay",
    "solve_cgnr",
    "render",
    "evaluate_at",
]

# Once the normal-equations gradient has shrunk this many orders of magnitude
# the optimality conditions hold to machine precision; iterating further only
# amplifies rounding noise through the search-direction recursion.
_GRADIENT_STOP_REL = 1e-14


@dataclass(frozen=True)
class FilterSet:
    """The spot filters, one FIR filter per (listener, loudspeaker) slot."""

    filters: np.ndarray  # shape (n_users, n_speakers, filter_len)

    def __post_init__(self):
        filters = np.asarray(self.filters, dtype=np.float64)
        if filters.ndim != 3:
            raise DimensionError(f"filters must be 3-d, got shape {filters.shape}")
        if not np.all(np.isfinite(filters)):
            raise ParameterError("filters contain non-finite values")
        filters.setflags(write=False)
        object.__setattr__(self, "filters", filters)

    @property
    def n_users(self) -> int:
        return self.filters.shape[0]

    @property
    def n_speakers(self) -> int:
        return self.filters.shape[1]

    @property
    def filter_len(self) -> int:
        return self.filters.shape[2]


@dataclass(frozen=True)
class SolveReport:
    """Convergence record of one CGNR run."""

    residual_history: np.ndarray  # misfit norm after each completed iteration
    iterations_run: int
    relative_residual: float
    converged: bool
    wall_time: float


@dataclass(frozen=True)
class TargetSpec:
    """Where the messages should appear inside the reception window."""

    delay: int
    total_length: int

    def __post_init__(self):
        if self.delay < 0:
            raise ParameterError(f"delay must be >= 0, got {self.delay}")
        if self.total_length < 1:
            raise ParameterError(f"total_length must be positive, got {self.total_length}")


def default_delay(rirs, filter_len: int) -> int:
    """Delay that centers the fit inside the filter's temporal support.

    Uses the sample index of the strongest arrival of the mean absolute
    room response, plus half the filter length.
    """
    rir_array = np.asarray(rirs.rirs, dtype=np.float64)
    profile = np.abs(rir_array).mean(axis=(0, 1))
    return int(np.argmax(profile)) + filter_len // 2


def build_target(messages: list[Waveform], spec: TargetSpec) -> np.ndarray:
    """Stack delayed copies of the messages into the reception-space target."""
    if not messages:
        raise ParameterError("need at least one message")
    n_samples = len(messages[0])
    for k, wave in enumerate(messages):
        if len(wave) != n_samples:
            raise DimensionError(f"message {k} has {len(wave)} samples, expected {n_samples}")
    if spec.delay + n_samples > spec.total_length:
        raise ParameterError(
            f"delay {spec.delay} pushes a {n_samples}-sample message past the "
            f"{spec.total_length}-sample reception window"
        )
    target = np.zeros((len(messages), spec.total_length))
    for k, wave in enumerate(messages):
        target[k, spec.delay : spec.delay + n_samples] = wave.samples
    return target.reshape(-1)


def solve_cgnr(
    op: SystemOperator,
    target: np.ndarray,
    max_iters: int = 1000,
    rel_tol: float = 1e-4,
    tikhonov: float = 0.0,
) -> tuple[FilterSet, SolveReport]:
    """Conjugate gradients on the normal equations, starting from zero filters.

    Stops when the misfit ``||target - A g||`` drops below ``rel_tol`` times
    ``||target||``, when the normal-equations gradient vanishes, or after
    ``max_iters`` iterations.  An optional Tikhonov weight damps the filter
    norm; the default of zero reproduces the plain least-squares fit.
    """
    if max_iters < 1:
        raise ParameterError(f"max_iters must be >= 1, got {max_iters}")
    if not (0.0 < rel_tol < 1.0):
        raise ParameterError(f"rel_tol must be in (0, 1), got {rel_tol}")
    if tikhonov < 0.0:
        raise ParameterError(f"tikhonov weight must be >= 0, got {tikhonov}")
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.shape != (op.dims.n_rows,):
        raise DimensionError(f"target length {target.shape[0]}, expected {op.dims.n_rows}")

    start = time.perf_counter()
    filters_shape = (op.dims.n_users, op.dims.n_speakers, op.dims.filter_len)
    target_norm = float(np.linalg.norm(target))
    if target_norm == 0.0:
        report = SolveReport(
            residual_history=np.zeros(0),
            iterations_run=0,
            relative_residual=0.0,
            converged=True,
            wall_time=time.perf_counter() - start,
        )
        return FilterSet(filters=np.zeros(filters_shape)), report

    g = np.zeros(op.dims.n_cols)
    residual = target.copy()
    grad = op.apply_adjoint(residual)
    direction = grad.copy()
    grad_sq = float(grad @ grad)
    grad_sq_stop = grad_sq * _GRADIENT_STOP_REL**2

    history: list[float] = []
    converged = False
    iterations = 0
    for iteration in range(1, max_iters + 1):
        if grad_sq <= grad_sq_stop:
            converged = True
            break
        forwarded = op.apply(direction)
        denom = float(forwarded @ forwarded) + tikhonov * float(direction @ direction)
        if denom == 0.0:
            break
        alpha = grad_sq / denom
        g += alpha * direction
        residual -= alpha * forwarded
        iterations = iteration
        res_norm = float(np.linalg.norm(residual))
        history.append(res_norm)
        if not np.isfinite(res_norm):
            raise NumericalError(
                f"non-finite residual at iteration {iteration}", iteration=iteration
            )
        if res_norm <= rel_tol * target_norm:
            converged = True
            break
        grad = op.apply_adjoint(residual)
        if tikhonov:
            grad -= tikhonov * g
        grad_sq_next = float(grad @ grad)
        beta = grad_sq_next / grad_sq
        direction = grad + beta * direction
        grad_sq = grad_sq_next

    final_res = history[-1] if history else target_norm
    report = SolveReport(
        residual_history=np.asarray(history),
        iterations_run=iterations,
        relative_residual=final_res / target_norm,
        converged=converged,
        wall_time=time.perf_counter() - start,
    )
    return FilterSet(filters=g.reshape(filters_shape)), report


@dataclass(frozen=True)
class RenderResult:
    driving: list[Waveform]
    receptions: list[Waveform]
    driving_peak: float


def render(op: SystemOperator, filters: FilterSet) -> RenderResult:
    """Driving signals and design-point receptions for a filter set.

    The driving peak is reported so callers can check headroom before writing
    audio; the waveforms themselves are left unnormalized.
    """
    receptions, driving = op.forward(filters.filters)
    peak = max((float(np.max(np.abs(wave.samples))) if len(wave) else 0.0) for wave in driving)
    return RenderResult(driving=driving, receptions=receptions, driving_peak=peak)


def evaluate_at(rirs_eval, driving: list[Waveform]) -> list[Waveform]:
    """Receptions at arbitrary evaluation points, given the driving signals.

    The evaluation responses need not be the design responses: perturbed or
    control-point RIR grids plug in here, as long as the loudspeaker count
    matches.
    """
    rir_array = np.asarray(rirs_eval.rirs, dtype=np.float64)
    if rir_array.ndim != 3:
        raise DimensionError(f"evaluation rirs must be 3-d, got shape {rir_array.shape}")
    if rir_array.shape[1] != len(driving):
        raise DimensionError(
            f"evaluation grid has {rir_array.shape[1]} loudspeaker columns, "
            f"got {len(driving)} driving signals"
        )
    if not driving:
        raise DimensionError("need at least one driving signal")
    from .convop import fft_conv  # local import keeps module load light

    rate = driving[0].sample_rate
    driving_len = len(driving[0])
    out_len = driving_len + rir_array.shape[2] - 1
    receptions = []
    for row in range(rir_array.shape[0]):
        acc = np.zeros(out_len)
        for l, wave in enumerate(driving):
            if len(wave) != driving_len:
                raise DimensionError("driving signals have mixed lengths")
            acc += fft_conv(rir_array[row, l], wave.samples)
        receptions.append(Waveform(samples=acc, sample_rate=rate))
    return receptions
