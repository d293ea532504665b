"""Context-tree embeddings of symbol sequences, with clustering and classification in tree space."""

__version__ = "0.1.0"

from .learn import (
    DistanceMatrix,
    EvaluationReport,
    KMeansResult,
    cluster_report,
    distance_matrix,
    evaluate,
    kmeans,
    knn_classify,
    pairwise_distances,
    prototype_classify,
    split_train_test,
)
from .sequence_io import AMINO_ACIDS, BREAK, Alphabet, LabeledDataset, SymbolSequence, encode, parse_fasta
from .tree import ContextTree, WeightSpec, bffs_distance, centroid, insert_context, validate
from .vlmc import ProbabilisticContextTree, PstParams, count_contexts, fit_pst, generate, lookup_context
from .estimators import PSTTransformer, TreeKMeans, TreeKNeighborsClassifier, TreePrototypeClassifier

__all__ = [
    "AMINO_ACIDS",
    "BREAK",
    "Alphabet",
    "ContextTree",
    "DistanceMatrix",
    "EvaluationReport",
    "KMeansResult",
    "LabeledDataset",
    "PSTTransformer",
    "ProbabilisticContextTree",
    "PstParams",
    "SymbolSequence",
    "TreeKMeans",
    "TreeKNeighborsClassifier",
    "TreePrototypeClassifier",
    "WeightSpec",
    "bffs_distance",
    "centroid",
    "cluster_report",
    "count_contexts",
    "distance_matrix",
    "encode",
    "evaluate",
    "fit_pst",
    "generate",
    "insert_context",
    "kmeans",
    "knn_classify",
    "lookup_context",
    "pairwise_distances",
    "parse_fasta",
    "prototype_classify",
    "split_train_test",
    "validate",
]
