"""Certified-radius computation, rounding-search attacks, and sound interval mitigation."""

from .attack import (
    AttackBudget,
    AttackResult,
    ReluAttackOutcome,
    attack_linear,
    attack_relu_exact,
    attack_smoothed,
    fp_neighbors,
    relu_pgd,
    scale_to_radius,
)
from .certify import (
    CertificateReport,
    exact_radius_linear,
    exact_radius_relu_matched,
    rhat_search,
    sound_radius_linear,
)
from .data_io import (
    Dataset,
    DecimalFallbackWarning,
    gen_error_scale_case,
    gen_random_linear_case,
    load_idx,
    load_model,
    save_model,
)
from .errors import (
    AbstainedTarget,
    BadMagic,
    BitPatternMismatch,
    CountMismatch,
    DegenerateData,
    DimensionMismatch,
    DivisorSpansZero,
    DomainError,
    FpcertError,
    InternalInvariant,
    InvalidBracket,
    NegativeOperand,
    NonFiniteInput,
    Overflow,
    SameLabels,
    SchemaError,
    TruncatedFile,
    ZeroDirection,
    ZeroWeightNorm,
)
from .fp_core import Direction, FloatStep, dot_lr, next_after, norm_lr, step_n, ulps_between
from .interval import (
    Interval,
    install_rounding,
    iv_abs,
    iv_add,
    iv_div,
    iv_dot,
    iv_mul,
    iv_norm2,
    iv_sqrt,
    iv_sub,
    singleton,
    singletons,
)
from .models import (
    LinearModel,
    Linearization,
    ReluNetwork,
    linear_predict,
    linearize,
    patterns_equal,
    perturb_dir,
    relu_forward,
    runner_up,
)
from .smoothing import (
    SmoothCertificate,
    SmoothingConfig,
    clopper_pearson_lower,
    phi_inv,
    smooth_certify,
    smooth_predict,
)
from .train import TrainConfig, train_linear_svm, train_mlp

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
