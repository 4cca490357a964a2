"""Blind subspace deconvolution toolkit.

Recovers groups of dependent coordinates (independent subspaces) from
causal FIR-filtered mixtures: lag stacking turns the convolutive problem
into an instantaneous one, PCA whitening makes it square and white, ICA
plus a greedy permutation search under a configurable inter-subspace
dependence cost (JFD, KCCA, KGV or KC) separates the subspaces, and the
Amari index scores the result against provenance.
"""

from .datagen import (
    RngSeed,
    SourceSpec,
    apply_fir,
    gen_component,
    gen_random_fir,
    gen_source,
    letter_grid,
    load_pgm,
)
from .dependency import (
    DependencyMeasure,
    FunctionSet,
    GramFactor,
    KernelConfig,
    aggregate_pairwise,
    block_mask,
    default_function_set,
    generalized_variance_gap,
    gram_factor,
    jfd_cost,
    kc_multi,
    kcca_multi,
    kcca_pair,
    kgv_cost,
)
from .evaluation import (
    GlobalMap,
    amari_index,
    entropy_1d,
    hinton_export,
    is_block_permutation,
    w_epi_check,
)
from .ica import IcaConfig, IcaResult, run_ica
from .model import (
    BlockStructure,
    FirFilter,
    IsaTask,
    OrthonormalMap,
    SampleMatrix,
    validate_block_structure,
)
from .permutation import PermutationResult, exhaustive_search, greedy_sweeps
from .pipeline import (
    ExperimentConfig,
    RunRecord,
    RunReport,
    emit_curve,
    fit_power_law,
    prepare_isa_task,
    run_pipeline,
)
from .preprocess import (
    ConcatPlan,
    Whitener,
    apply_whitener,
    build_concat_mixing,
    concat_source,
    fit_whitener,
    plan_concat,
    temporal_concat,
    whitener_from_covariance,
)

__version__ = "0.1.0"
