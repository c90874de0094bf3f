"""Semi-supervised SVM toolkit: QP relaxation and submodular greedy labeling."""

from .dataio import (
    Dataset,
    EmptyDataError,
    ParseError,
    RegistryEntry,
    SplitSpec,
    load_dataset,
    make_split,
    normalize_features,
    parse_libsvm,
    parse_registry,
    serialize_libsvm,
)
from .harness import RunReport, run_experiment, verify
from .kernels import (
    KernelBlocks,
    KernelBoundError,
    KernelSpec,
    build_blocks,
    kernel_eval,
    load_blocks,
    save_blocks,
)
from .qp_relax import (
    BoxViolationError,
    DualPoint,
    S3vmConfig,
    SoftLabels,
    decompose_objective,
    dual_objective,
    dual_upper_bound,
    positive_count,
    project_capped_simplex,
    qp_objective,
    qp_objective_standard,
    round_to_labels,
    solve_qp,
)
from .submodular import (
    SelectionState,
    brute_force_max,
    check_submodularity,
    greedy_maximize,
    labels_from_selection,
    lazy_greedy_maximize,
    marginal_gain,
    set_value,
)
from .svm_supervised import (
    LinearModel,
    SvmFit,
    objective_value,
    parse_model,
    predict,
    predict_many,
    serialize_model,
    train_supervised,
)

__version__ = "0.1.0"
