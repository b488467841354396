"""
plotting.py

Plotly figures: mel-spectrogram heatmaps and training-loss curves, exported to
PNG through kaleido.
"""

import logging
from pathlib import Path
from typing import Optional

import numpy as np
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from src.dsp.features import MelSpectrogram
from src.evalcli.inference import read_mel
from src.train.trainer import load_training_log

logger = logging.getLogger(__name__)


def mel_figure(mel: MelSpectrogram, title: str = "Mel-spectrogram") -> go.Figure:
    """Heatmap with one row per band, time in seconds on x."""
    z = mel.values.T.astype(np.float64)
    zmin, zmax = float(z.min()), float(z.max())
    if zmax <= zmin:
        zmax = zmin + 1.0
    fig = go.Figure(data=go.Heatmap(
        z=z, x=mel.seconds, y=np.arange(mel.n_bands),
        zmin=zmin, zmax=zmax, colorscale="Viridis",
        colorbar=dict(title="log energy"),
    ))
    fig.update_layout(
        title_text=title,
        xaxis_title="time (s)",
        yaxis_title="mel band",
        template="plotly_white",
        margin=dict(l=60, r=30, t=50, b=50),
    )
    return fig


def plot_mel(source, out_png, width: int = 900, height: int = 450) -> go.Figure:
    """Render a mel container (or MelSpectrogram) to PNG."""
    mel = source if isinstance(source, MelSpectrogram) else read_mel(source)
    fig = mel_figure(mel, title=Path(source).name if not isinstance(source, MelSpectrogram) else "Mel-spectrogram")
    _write(fig, out_png, width, height)
    return fig


def training_figure(log_path) -> go.Figure:
    df = load_training_log(log_path)
    fig = make_subplots(rows=2, cols=1, shared_xaxes=True, subplot_titles=("loss", "learning rate"))
    for column in ("L", "L_recon", "L_enc"):
        if column in df and not df.empty:
            fig.add_trace(go.Scatter(x=df["step"], y=df[column], mode="lines", name=column), row=1, col=1)
    if "lr" in df and not df.empty:
        fig.add_trace(go.Scatter(x=df["step"], y=df["lr"], mode="lines", name="lr"), row=2, col=1)
    fig.update_yaxes(type="log", row=1, col=1)
    fig.update_layout(template="plotly_white", title_text=f"Training log: {Path(log_path).name}",
                      xaxis2_title="step", margin=dict(l=60, r=30, t=60, b=50))
    return fig


def plot_training_log(log_path, out_png, width: int = 900, height: int = 600) -> go.Figure:
    fig = training_figure(log_path)
    _write(fig, out_png, width, height)
    return fig


def _write(fig: go.Figure, out_png: Optional[Path], width: int, height: int) -> None:
    if out_png is None:
        raise ValueError("no output path given for the figure")
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.write_image(str(out_png), width=width, height=height)
    logger.info(f"Wrote {out_png}")
