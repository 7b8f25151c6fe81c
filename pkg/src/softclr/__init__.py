"""Soft contrastive representation learning on vector data.

Core pieces: pseudo-label construction (one-hot / hard / adaptive-hard /
adaptive-soft), a soft cross-entropy contrastive objective with analytic
gradients, an MLP encoder with momentum copy and memory bank, a
negative-free predictor variant, and frozen-encoder evaluation probes.
"""

from .config import RunConfig, Strategy
from .datapipe import (
    AugmentPolicy,
    Dataset,
    ViewPair,
    augment,
    gen_gaussian_clusters,
    gen_two_moons,
    load_dataset,
    make_batches,
    save_dataset,
    split_dataset,
    strong_policy,
    weak_policy,
)
from .errors import (
    EmptyBankError,
    InvalidDistributionError,
    InvalidLabelError,
    InvalidStateError,
)
from .estimator import ContrastiveEncoder, SoftKnnClassifier
from .membank import MemoryBank
from .model import (
    MlpSpec,
    ModelParams,
    backward,
    ema_update,
    encode,
    forward_momentum,
    forward_online,
    init_params,
)
from .numerics import (
    Rng,
    cosine_sim,
    derive_seed,
    l2_normalize,
    shannon_entropy,
    tempered_softmax,
    topk_indices,
)
from .objective import byol_soft_loss, infonce, soft_infonce, soft_infonce_batch
from .optim import OptimizerState, cosine_lr, sgd_step
from .probes import ProbeConfig, knn_probe, linear_probe
from .relabel import (
    LabelConfig,
    LabelStrategy,
    ahcl_label,
    ascl_label,
    byol_inbatch_labels,
    confidence,
    hard_label,
    label_matrix,
    normalize_label,
    onehot_label,
    relative_distribution,
    similarity_row,
)
from .train import MetricsRecord, TrainResult, train, train_byol, train_contrastive

__version__ = "0.1.0"
