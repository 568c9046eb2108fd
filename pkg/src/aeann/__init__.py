"""Approximate nearest neighbor search in l_p through an explicit average embedding into l_2."""

from .errors import (AeannError, CalibrationError, GenerationError, InvalidInputError,
                     InvalidParameterError, ParseError, UndefinedRatioError)
from .evaluation import EvalReport, PlantedInstance, brute_force_nn, evaluate, plant_instance
from .forest import (BallNode, Forest, IndexParams, Leaf, PartitionNode, QueryResult, build_forest,
                     build_tree, derive_params, find_dense_center, lemma_alpha_check, query_forest,
                     query_tree)
from .lsh import (LshFunction, LshParams, calibrate_width, collision_probability, lsh_exponent, lsh_hash,
                  sample_lsh)
from .mazur import (AvgEmbedding, EmbedVerifyReport, center_scan, embed_f, lipschitz_probe, mazur_h,
                    mazur_h_inverse, noncontraction_ratio, verify_average_embedding)
from .metric import (BoundedInstanceParams, Dataset, is_beta_bounded, lp_distance, lp_norm,
                     pairwise_distance_stats)

__version__ = "0.1.0"

__all__ = ["AeannError", "CalibrationError", "GenerationError", "InvalidInputError",
           "InvalidParameterError", "ParseError", "UndefinedRatioError", "EvalReport",
           "PlantedInstance", "brute_force_nn", "evaluate", "plant_instance", "BallNode", "Forest",
           "IndexParams", "Leaf", "PartitionNode", "QueryResult", "build_forest", "build_tree",
           "derive_params", "find_dense_center", "lemma_alpha_check", "query_forest", "query_tree",
           "LshFunction", "LshParams", "calibrate_width", "collision_probability", "lsh_exponent",
           "lsh_hash", "sample_lsh", "AvgEmbedding", "EmbedVerifyReport", "center_scan", "embed_f",
           "lipschitz_probe", "mazur_h", "mazur_h_inverse", "noncontraction_ratio",
           "verify_average_embedding", "BoundedInstanceParams", "Dataset", "is_beta_bounded",
           "lp_distance", "lp_norm", "pairwise_distance_stats"]
