"""Sequence labelers with GP label scores and pairwise label dependencies, trained variationally."""

from .corpus import (
    Corpus,
    TemplateSet,
    apply_templates,
    mask_labels,
    read_conll,
    synth_generate,
    synth_split,
    write_conll,
)
from .decode import predictive_local, rns_decode, viterbi_decode
from .errors import (
    CorpusFormatError,
    EmptyCorpusError,
    GPSLError,
    ModelFormatError,
    NumericalError,
    TemplateError,
    UnsupportedDependencyError,
    UnsupportedVersionError,
)
from .evaluation import compare_decoders, evaluate, hamming, missing_sweep
from .inference import TrainOptions, lower_bound, train
from .kernel import KernelSpec, gram, kernel_eval
from .model import GPSL0, GPSL1, GPSL2, GPSL4, DependencySet, TrainedModel, load, save

__version__ = "0.1.0"

__all__ = [
    "Corpus", "TemplateSet", "apply_templates", "mask_labels", "read_conll", "synth_generate",
    "synth_split", "write_conll", "predictive_local", "rns_decode", "viterbi_decode",
    "CorpusFormatError", "EmptyCorpusError", "GPSLError", "ModelFormatError", "NumericalError",
    "TemplateError", "UnsupportedDependencyError", "UnsupportedVersionError", "compare_decoders",
    "evaluate", "hamming", "missing_sweep", "TrainOptions", "lower_bound", "train", "KernelSpec",
    "gram", "kernel_eval", "GPSL0", "GPSL1", "GPSL2", "GPSL4", "DependencySet", "TrainedModel",
    "load", "save",
]
