"""Human activity recognition with a depthwise-separable 1D CNN written in numpy."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .evaluation import confusion, evaluate_directory, metrics, predict, render_report
from .ingest import DatasetManifest, TimeSeriesRecording, class_index, parse_recording, scan_dataset
from .model import ModelConfig, backward, forward, init_params, loss, shape_trace
from .preprocessing import (
    Normalizer, Window, WindowedDataset, apply_normalizer, build_dataset, fit_normalizer,
    one_hot, segment, split,
)
from .training import TrainConfig, TrainHistory, adam_step, sgd_step, train

__version__ = "0.1.0"
