"""Differentially private universally consistent learners.

Histogram and Voronoi-cell classifiers, a private histogram density
estimator, a private semi-supervised threshold learner, and an experiment
harness with empirical privacy audits.
"""

from .classify import (
    CellVoteTable,
    LabeledSample,
    PartitionClassifier,
    PluginClassifier,
    decide_cell,
    empirical_error,
    pcl2_fit,
    pcl2b_fit,
    pcl_fit,
    plugin_classify,
)
from .density import (
    PiecewiseConstantDensity,
    histogram_density,
    l1_distance,
    normalize_density,
    normalize_or_uniform,
    pcde_fit,
)
from .dp import (
    NoisyHistogram,
    PrivacyBudget,
    laplace_mechanism,
    sample_laplace,
    stability_threshold,
    stable_histogram,
)
from .errors import (
    CapacityError,
    ConfigError,
    DegenerateEstimateError,
    InvalidInputError,
    InvalidParameterError,
)
from .partition import (
    GridPartition,
    MetricPartition,
    MetricSpaceDescriptor,
    build_maximal_packing,
    cell_of,
    grid_side_length,
    packing_side_length,
    voronoi_cell,
)
from .rng import SeededRng, derive_stream_id
from .ssl import (
    SslBudgets,
    ThresholdHypothesis,
    private_cssl,
    sample_from_density,
    semi_private_learn,
)
from .synthetic import SyntheticDistribution, bayes_classifier, make_box_mixture, make_checkerboard

__version__ = "0.1.0"
