from src.evalcli.experiments import SYSTEMS, run_experiment_matrix, supervised_variant
from src.evalcli.inference import convert, read_mel, render_audio, synthesize, write_mel
from src.evalcli.metrics import MetricReport, evaluate, fit_probe, reports_frame, resynthesis_error, save_reports
from src.evalcli.plotting import mel_figure, plot_mel, plot_training_log, training_figure

__all__ = [
    "SYSTEMS", "run_experiment_matrix", "supervised_variant",
    "convert", "read_mel", "render_audio", "synthesize", "write_mel",
    "MetricReport", "evaluate", "fit_probe", "reports_frame", "resynthesis_error", "save_reports",
    "mel_figure", "plot_mel", "plot_training_log", "training_figure",
]
