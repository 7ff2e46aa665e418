"""Building condition estimation from exterior photographs.

Dense multi-scale patches are described by gradient-orientation histograms,
reduced per image by k-means and contrast/relevance filters, classified into
condition classes A/B/C and aggregated per building. A dummy-coded OLS
relates the condition to the retained share of replacement cost.
"""

from .dataset import (BuildingRecord, ConditionCategory, ConditionClass, DatasetSplit, map_category,
                      parse_manifest, partition, write_manifest)
from .imaging import GradientField, PatchSpec, compute_gradients, crop, dense_grid, load_gray
from .descriptor import Descriptor, PatchRecord, describe, raw_norm
from .selection import (ClusterResult, SelectionConfig, contrast_filter, kmeans, relevance_filter,
                        select_pipeline, select_representatives, train_relevance)
from .classifier import SoftmaxModel, TrainConfig, augment, load_model, predict, save_model, train
from .aggregation import (BuildingPrediction, ambiguity_filter, average_likelihood, majority_vote,
                          predict_building)
from .evaluation import accuracy, confidence_rank, confuse, pearson, zero_rule
from .regression import RegressionFit, build_design, compare_models, ols_fit, predict_value
from .synth import synth_generate

__version__ = "0.1.0"
