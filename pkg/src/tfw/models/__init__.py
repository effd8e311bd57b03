from tfw.models.backbone import Backbone, ResidualBlock
from tfw.models.heads import (
    AttentionModel,
    GRUSequenceModel,
    ImageClassifier,
    Model,
    build_model,
    mean_vote,
    param_count,
)
from tfw.models.spec import BackboneSpec, HeadSpec, ModelSpec
from tfw.models.weave import unweave, weave, weave_table
