"""Distill long convolution filters into low-order state-space recurrences.

Submodules
----------
linsys    system representations, conversions and impulse responses
spectral  Hankel singular values, order estimates and AAK bounds
distill   modal fitting, truncation baselines and bank distillation
runtime   prefill and token-by-token generation with operation counters
hblock    a toy gated long-convolution block with a recurrent mode
banks     binary bank formats and synthetic banks
"""

__version__ = "0.1.0"

from .errors import (
    BankFormatError,
    ConsistencyError,
    DistillationError,
    IllConditionedError,
    NonDiagonalizableError,
    NumericalFailureError,
    PoleProximityError,
    SSMDistillError,
    SystemOverflowError,
)
from .linsys import (
    CompanionSSM,
    DenseSSM,
    Filter,
    FrequencyResponse,
    ModalSSM,
    OpCounter,
    ShiftSSM,
    TransferFunction,
    canonicalize,
    dense_to_modal,
    fir_to_shift_ssm,
    frequency_response,
    impulse_response,
    modal_to_dense,
    ss_to_tf,
    step,
    tf_eval_unit_circle,
    tf_impulse_response,
    tf_to_companion,
    tf_to_filter,
    tf_to_modal,
    truncation_correction,
)
from .spectral import (
    HankelSpectrum,
    aak_lower_bound,
    error_hankel_norm,
    estimate_order,
    hankel_matrix,
    hankel_spectrum,
)
from .distill import (
    BankResult,
    DistillConfig,
    DistillReport,
    ModalParams,
    balanced_truncation,
    distill_bank,
    grad_modal,
    init_params,
    modal_truncation,
    optimize,
    spectral_init,
)
from .runtime import (
    complexity_report,
    fft_prefill,
    generate_conv,
    generate_recurrent,
    recurrent_prefill,
    run_benchmark,
)
from .hblock import (
    HBlockSpec,
    forward_conv,
    forward_recurrent,
    hyena_forward,
    multihead_forward,
    qkv_project,
)
from .banks import read_filter_bank, read_ssm_bank, synth_bank, write_filter_bank, write_ssm_bank

__all__ = [name for name in dir() if not name.startswith("_")]
