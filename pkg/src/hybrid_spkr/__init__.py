"""Speaker identification fusing LPCC vector quantization with per-speaker MLPs."""

from .errors import HybridSpkrError
from .frontend import AudioClip, FrontendConfig, extract_lpcc, read_wav, write_wav
from .hybrid import (
    CostModelParams,
    HybridConfig,
    SpeakerModel,
    Utterance,
    combine_measure,
    cost_combined,
    cost_vq,
    evaluate,
    hybrid_identify,
    score_correlation,
    sweep_alpha,
    sweep_k,
)
from .neural import MlpModel, TrainConfig, lm_train, mlp_identify
from .vq import Codebook, DistortionCriterion, lbg_train, quantize_distortion, vq_identify

__version__ = "0.1.0"
