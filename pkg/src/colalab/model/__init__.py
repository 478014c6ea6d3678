"""Network components: backbone, slot attention, decoder, teacher."""

from .backbone import Backbone, CartesianPositionEmbedding, cartesian_grid
from .cola import FIXED, SAMPLED, CoLaNet, ComponentSet, SlotInit, sample_components
from .config import DESK_MODEL, PAPER_MODEL, TINY_MODEL, ModelConfig
from .decoder import DecodedOutput, SpatialBroadcastDecoder
from .slot_attention import GRUUpdate, SlotAttention
from .teacher import TeacherClassifier, TeacherEncoder, teacher_features, train_teacher

__all__ = [
    "Backbone", "CartesianPositionEmbedding", "CoLaNet", "ComponentSet", "DESK_MODEL",
    "DecodedOutput", "FIXED", "GRUUpdate", "ModelConfig", "PAPER_MODEL", "SAMPLED",
    "SlotAttention", "SlotInit", "SpatialBroadcastDecoder", "TINY_MODEL", "TeacherClassifier",
    "TeacherEncoder", "cartesian_grid", "sample_components", "teacher_features", "train_teacher",
]
