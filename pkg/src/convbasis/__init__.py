"""conv-basis attention kernels.

Decomposes causal-masked attention score matrices into sums of
sub-convolution matrices recovered from column queries, evaluates attention
and its training gradient through FFT matvecs, and provides masked low-rank
attention for several structured mask families. Dense oracles sit next to
every fast path; `python -m convbasis.cli verify` (or the `convbasis`
entry point) compares them.
"""

from .attention import (
    conv_error_bound,
    conv_forward,
    exact_forward_via_conv,
    forward_from_basis,
    full_self_attention_forward,
)
from .backend import active_backend, available_backends, use_kernels
from .dense import (
    MAX_SCORE,
    l1_norm,
    linf_norm,
    masked_attention_weights,
    masked_exp_scores,
    naive_masked_attention,
    norm_product_bound,
    relative_frobenius_diff,
)
from .errors import (
    FactorizationError,
    NormalizationError,
    ScoreOverflowError,
    UnderRankError,
    VerificationError,
)
from .fourier import fft, ifft, is_pow2, next_pow2
from .gradient import (
    KronReport,
    TrainingInstance,
    exp_score_oracle,
    fast_gradient,
    finite_difference_gradient,
    kron_vect_check,
    loss,
    naive_gradient,
    raw_score_oracle,
    training_forward,
)
from .io_formats import (
    load_basis_cbb,
    load_matrix_cbm,
    load_matrix_csv,
    save_basis_cbb,
    save_matrix_cbm,
    save_matrix_csv,
)
from .lowrank import (
    LowRankFactors,
    best_rank_factors,
    causal_matvec,
    continuous_matvec,
    dense_masked_product,
    distinct_columns_matvec,
    distinct_rows_matvec,
    entrywise_relative_error,
    epsk_factors,
    lowrank_error_bound,
    masked_lowrank_attention,
    masked_matvec,
    rowchange_matvec,
    scaled_exp_scores,
)
from .masks import (
    CausalMask,
    ContinuousRowMask,
    DenseMask,
    DistinctColumnsMask,
    DistinctRowsMask,
    Mask,
    RowChangeMask,
    mask_column,
)
from .recovery import (
    ColumnOracle,
    RecoveryParams,
    RecoveryResult,
    masked_score_column,
    recover,
    recover_qk,
    score_column_oracle,
    search,
)
from .structures import (
    ConvBasis,
    SubConvTerm,
    circulant_matvec,
    conv_matvec,
    conv_matvec_naive,
    conv_transpose_matvec,
    decompose_lower_triangular,
    exp_transform,
    subconv_matvec,
    subconv_transpose_matvec,
    toeplitz_matvec,
)
from .verification import ERROR_LEMMAS, run_verification_suite

__version__ = "0.1.0"
