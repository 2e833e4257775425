"""echospot: private audio messages delivered through room echoes.

Messages are chopped across loudspeakers by partition-of-unity masks, each
piece is filtered so the room's echoes reassemble it at chosen focusing
spots, and everywhere else the pieces arrive scrambled.  The package covers
mask and design-signal construction, the matrix-free reception operator, a
conjugate-gradient least-squares filter solver, shoebox room simulation with
sweep-based measurement, and the evaluation stack (coherence,
autocorrelation decay, residual decay, intelligibility contrast).
"""

from .analysis import (
    AutocorrReport,
    CoherenceReport,
    ContrastReport,
    IntelligibilityScore,
    alignment_search,
    column_coherence,
    contrast_report,
    driving_autocorr,
    stoi,
)
from .audio_io import read_wav, resample, write_wav
from .convop import ConvDims, FeasibilityReport, SystemOperator, fft_conv, fft_corr, rank_feasibility
from .errors import (
    ConfigError,
    DegenerateSignalError,
    DimensionError,
    EchoSpotError,
    GeometryError,
    MissingArtifactError,
    NumericalError,
    ParameterError,
)
from .room import (
    RirSet,
    ShoeboxSpec,
    SweepSpec,
    band_l2_error,
    ess_deconvolve,
    ess_generate,
    jitter_positions,
    load_rirs,
    save_rirs,
    simulate_rir_grid,
    simulate_shoebox,
)
from .signals import (
    DesignSignalSet,
    MaskSet,
    SourceKind,
    Waveform,
    anechoic_sum_check,
    generate_masks,
    make_design_signals,
    synthetic_speech,
    tukey_edge,
)
from .solver import (
    FilterSet,
    RenderResult,
    SolveReport,
    TargetSpec,
    build_target,
    default_delay,
    evaluate_at,
    render,
    solve_cgnr,
)

__version__ = "0.1.0"
