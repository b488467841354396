from src.model.inputs import ModelInputs, control_track, mel_input, utterance_inputs
from src.model.losses import LossTerms, loss_terms, masked_mse
from src.model.timbre import FeatureStats, TimbreModel, fit_feature_stats, switch_embedding

__all__ = [
    "ModelInputs", "control_track", "mel_input", "utterance_inputs",
    "LossTerms", "loss_terms", "masked_mse",
    "FeatureStats", "TimbreModel", "fit_feature_stats", "switch_embedding",
]
