"""
COCOA toolkit package
Cross-modality contrastive learning for multimodal time series: a small
numpy autodiff engine, temporal conv encoders, the COCOA objective and its
baselines, and the pretrain / probe / fine-tune pipeline around them.
"""

__version__ = "1.0.0"

from .batching import ModalityBatch, WindowedDataset, make_windows, sample_batch, split_dataset
from .bench import BenchReport, run_bench
from .dataset_io import export_embeddings, read_dataset, write_dataset
from .encoder import EmbeddingSet, EncoderConfig, EncoderParams, encode, encode_concat, init_params
from .errors import CocoaError, ValidationError
from .losses import (
    CocoaHyper, LossHyper, OpCounter, barlow_twins_loss, cmc_loss, cocoa_loss, count_formula,
    dcl_loss, hard_dcl_loss, infonce_loss,
)
from .pipeline import (
    TrainConfig, batch_sweep, evaluate_macro_f1, finetune, label_curve, linear_probe, pretrain,
)
from .synthgen import SynthConfig, generate

__all__ = [
    'ModalityBatch', 'WindowedDataset', 'make_windows', 'sample_batch', 'split_dataset',
    'BenchReport', 'run_bench',
    'export_embeddings', 'read_dataset', 'write_dataset',
    'EmbeddingSet', 'EncoderConfig', 'EncoderParams', 'encode', 'encode_concat', 'init_params',
    'CocoaError', 'ValidationError',
    'CocoaHyper', 'LossHyper', 'OpCounter', 'barlow_twins_loss', 'cmc_loss', 'cocoa_loss',
    'count_formula', 'dcl_loss', 'hard_dcl_loss', 'infonce_loss',
    'TrainConfig', 'batch_sweep', 'evaluate_macro_f1', 'finetune', 'label_curve',
    'linear_probe', 'pretrain',
    'SynthConfig', 'generate',
]
