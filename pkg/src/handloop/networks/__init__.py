"""Predictor, synthesizer and updater networks and their training procedures."""
from .builders import (build_predictor, build_synthesizer, build_updater, check_resolution,
                       synth_stages, updater_strides)
from .training import (SynthesizerResult, TrainingConfig, UpdaterTrainingSet, apply_updater,
                       box_downsample, build_updater_training_set, hinge_loss,
                       inject_error_samples, predict, predictor_loss, sample_error_distribution,
                       self_augment, synth_heldout_mse, synthesize, synthesizer_loss,
                       train_predictor, train_synthesizer_layerwise, train_updater,
                       upsample_bilinear)

__all__ = [
    "SynthesizerResult", "TrainingConfig", "UpdaterTrainingSet", "apply_updater",
    "box_downsample", "build_predictor", "build_synthesizer", "build_updater",
    "build_updater_training_set", "check_resolution", "hinge_loss", "inject_error_samples",
    "predict", "predictor_loss", "sample_error_distribution", "self_augment",
    "synth_heldout_mse", "synth_stages", "synthesize", "synthesizer_loss", "train_predictor",
    "train_synthesizer_layerwise", "train_updater", "updater_strides", "upsample_bilinear",
]
