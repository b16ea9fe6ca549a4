"""Cancelable face-template protection on the hypersphere.

Templates are rotated group-wise toward per-sample random key templates via
constant-speed spherical interpolation, then partially zeroed by feature
dropout. The package ships the matching protocol for the shared (protected,
key) records, a root-finding inversion attack for red-team evaluation, and a
security suite covering recognition accuracy, unlinkability, and revocability.
"""

from .attacks import (
    AttackReport,
    DeltaThetaStudy,
    FullAttackReport,
    NRConfig,
    delta_theta_experiment,
    full_template_attack,
    nr_invert_group,
)
from .errors import (
    BudgetTooLarge,
    CalibrationFailure,
    DegenerateAngle,
    DimensionMismatch,
    EmptyStore,
    InfeasibleBudget,
    InsufficientPairs,
    LayoutMismatch,
    SlerpShieldError,
    StoreFormatError,
    ZeroGroup,
)
from .evaluation import (
    LinkabilityReport,
    Population,
    SweepResult,
    SyntheticPopulation,
    accuracy_sweep,
    alpha_ablation,
    eer_from_scores,
    enroll_population,
    generate_population,
    revocability_check,
    revocability_study,
    sswl,
    unprotected_scores,
)
from .matching import EnrollmentRecord, MatchResult, identify, verify
from .protection import (
    DropoutMask,
    KeyTemplate,
    ProtectedTemplate,
    ProtectionParams,
    group_slerp,
    protect,
    protect_query,
    random_dropout_mask,
    sample_key,
    sample_mask,
    slerp,
    weighted_dropout_counts,
)
from .store import TemplateStore, load_store, save_store
from .templates import (
    GroupLayout,
    GroupWeights,
    Template,
    group_normalize,
    groupwise_similarity,
    included_angle,
)

__version__ = "0.1.0"
