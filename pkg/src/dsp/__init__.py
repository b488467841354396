from src.dsp.audio import AudioClip, load_wav, save_wav
from src.dsp.augment import sample_transpose_factor, semitones_to_factor, transpose_augment
from src.dsp.features import MelSpectrogram, band_centers, compute_mel, mel_filterbank, mel_to_audio, nearest_band
from src.dsp.pitch import F0Stats, F0Track, fit_f0_stats, normalize_f0

__all__ = [
    "AudioClip", "load_wav", "save_wav",
    "MelSpectrogram", "band_centers", "compute_mel", "mel_filterbank", "mel_to_audio", "nearest_band",
    "sample_transpose_factor", "semitones_to_factor", "transpose_augment",
    "F0Stats", "F0Track", "fit_f0_stats", "normalize_f0",
]
