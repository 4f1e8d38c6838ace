"""Semantics-conditioned feature generation for point-cloud segmentation.

A conditional WGAN-GP learns to draw point features from class semantic
vectors. A feature-space mixup widens its training set. Its samples train
a softmax classifier that can label classes never seen with real features.
"""

from .classifier import ClassifierModel, predict, synthesize_training_set, train_classifier
from .condgan import CondGanModel, ConditionedFeatures, generate
from .datamodel import (
    ClassCatalog,
    LabeledFeatureSet,
    PipelineConfig,
    SemanticTable,
    SplitSpec,
    TaskMode,
)
from .errors import FormatError, LabelSpaceError, NonFiniteError, SemcondError, ShapeError
from .metrics import EvalReport, evaluate, harmonic
from .mixup import synthesize_mixup
from .pipeline import PipelinePaths, run_pipeline

__version__ = "0.1.0"
