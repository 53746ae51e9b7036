"""Joint intent detection and slot filling with intent-slot attention and a CRF slot decoder."""

from .attention import AttentionVariant
from .checkpoint import load_checkpoint, save_checkpoint
from .data import CorpusSplits, LabelSchema, TokenVocab, Utterance, build_schema, load_corpus, load_split
from .encoder import EncoderConfig
from .evaluation import EvalReport
from .model import JointModel, joint_loss
from .training import GridSpec, TrainConfig, grid_search, multi_seed, train

__version__ = "0.1.0"

__all__ = [
    "AttentionVariant",
    "CorpusSplits",
    "EncoderConfig",
    "EvalReport",
    "GridSpec",
    "JointModel",
    "LabelSchema",
    "TokenVocab",
    "TrainConfig",
    "Utterance",
    "build_schema",
    "grid_search",
    "joint_loss",
    "load_checkpoint",
    "load_corpus",
    "load_split",
    "multi_seed",
    "save_checkpoint",
    "train",
]
