"""Quantum-fidelity-kernel one-class SVM anomaly detection.

Classical features are scaled into rotation angles, dense-angle-encoded
into simulated qubit states, pairwise state fidelities form a kernel
matrix, and a nu one-class SVM trained on baseline-only data labels test
points normal or anomalous. Classical linear and RBF kernels are included
for comparison runs.
"""

from .data_io import (
    AngleScaler,
    DataError,
    DataFormatError,
    DatasetTable,
    Label,
    SplitSpec,
    generate_synthetic,
    load_csv,
    parse_csv,
    split,
    split_indices,
    write_csv,
)
from .feature_map import DenseAngleFeatureMap, EncodedPoint
from .feature_select import (
    FeatureRanking,
    GiniFeatureSelector,
    TreeNode,
    dump_tree,
    fit_tree,
    gini,
    impurity_decrease,
    rank_features,
    select_top_k,
)
from .kernel import (
    CacheFormatError,
    FidelityKernel,
    KernelKind,
    KernelMatrix,
    LinearKernel,
    Projection2D,
    Provenance,
    ProvenanceKind,
    RbfKernel,
    SampledFidelityKernel,
    gram_test,
    gram_train,
    kernel_pca_2d,
    load_kernel,
    psd_clip,
    save_kernel,
)
from .ocsvm import (
    ConvergenceError,
    ModelFormatError,
    PrecomputedOneClassSVM,
    load_model,
    save_model,
)
from .pipeline import RunConfig, run_experiment
from .statevector import (
    GateKind,
    GateOp,
    StateVector,
    apply_circuit,
    apply_gate,
    cnot,
    inner_product,
    inverse_gate,
    outcome_probabilities,
    rx,
    rz,
    sample_outcomes,
    u3,
    zero_state,
)

__version__ = "0.1.0"
