"""Synthetic-speech detection by comparing a voice against pristine references of the claimed speaker."""

__version__ = "0.1.0"

from .audio_io import Waveform, load_wav, resample, take_segment
from .embeddings import Embedding, baseline_embed, l2_normalize, load_embedding_store
from .frontend import FeatureMatrix, FrontendConfig, log_mel, mel_filterbank, stft_power
from .metrics import LabeledScores, TdcfCosts, auc, eer, min_norm_tdcf, roc_curve
from .verification import Metric, ReferenceSet, Strategy, cb_score, compute_centroid, decide, ms_score, similarity

__all__ = [
    "Waveform", "load_wav", "resample", "take_segment",
    "Embedding", "baseline_embed", "l2_normalize", "load_embedding_store",
    "FeatureMatrix", "FrontendConfig", "log_mel", "mel_filterbank", "stft_power",
    "LabeledScores", "TdcfCosts", "auc", "eer", "min_norm_tdcf", "roc_curve",
    "Metric", "ReferenceSet", "Strategy", "cb_score", "compute_centroid", "decide", "ms_score", "similarity",
]
