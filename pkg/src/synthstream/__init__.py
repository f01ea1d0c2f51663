"""Synthetic clickstream toolkit.

Learns direct-sequence (DS) and common-view (CVS) count matrices from a
corpus of item sequences, generates privacy-friendly synthetic sequences with
a memory-biased random walk plus random jumps, and evaluates the result both
statistically (row-wise rank correlation of the matrices) and by downstream
recommender utility.
"""

__version__ = "0.1.0"

from .corpus import (
    Clickstream,
    ClickstreamSet,
    FoldPlan,
    LengthDistribution,
    StartDistribution,
    Vocabulary,
    empirical_length_distribution,
    empirical_start_distribution,
    horizontal_split,
    load_clickstreams,
    make_folds,
    save_clickstreams,
    vertical_split,
)
from .fidelity import FidelityReport, matrix_fidelity, row_top_z_correlation, spearman
from .generator import (
    DEAD_END,
    MbrwConfig,
    MemoryDistribution,
    TransitionDistribution,
    generate_clickstream,
    generate_set,
    generate_set_with_stats,
    mbrw_kernel,
    mix_epsilon,
    sample_step,
    split64,
)
from .recsys import (
    ItemKnnModel,
    UserItemMatrix,
    UtilityReport,
    average_precision,
    ndcg,
    precision_at,
    recommend,
    run_utility_experiment,
    train_item_knn,
)
from .seqgraph import (
    CvsMatrix,
    DsMatrix,
    SparseCountMatrix,
    build_cvs,
    build_ds,
    k_anonymity_filter,
    load_matrix,
    save_matrix,
)
