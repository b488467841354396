"""
labels.py

Text label files for real recordings and for synthesis requests:

    phone timing file:  one "phone start_s end_s" per line
    F0 file:            one "time_s f0_hz" per line (0 = unvoiced)
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from src.config import MelConfig
from src.corpus.inventory import LinguisticFrames, PhoneInventory
from src.corpus.synth import Utterance
from src.dsp.audio import load_wav
from src.dsp.features import compute_mel
from src.dsp.pitch import F0Track
from src.errors import LabelError

logger = logging.getLogger(__name__)


def _read_table(path, names, kind) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{kind} file not found: {path}")
    try:
        df = pd.read_csv(path, sep=r"\s+", header=None, names=names, comment="#", engine="python")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise LabelError(f"malformed {kind} file {path}: {e}") from e
    if df.empty:
        raise LabelError(f"{kind} file {path} is empty")
    if df.isna().any().any():
        raise LabelError(f"{kind} file {path}: every line needs {len(names)} fields")
    return df


def read_phone_timing(path) -> pd.DataFrame:
    df = _read_table(path, ["phone", "start", "end"], "phone timing")
    try:
        df[["start", "end"]] = df[["start", "end"]].astype(float)
    except ValueError as e:
        raise LabelError(f"phone timing file {path}: non-numeric time ({e})") from e
    df["phone"] = df["phone"].astype(str)
    if (df["end"] <= df["start"]).any():
        bad = df[df["end"] <= df["start"]].iloc[0]
        raise LabelError(f"phone '{bad.phone}' ends at {bad.end} before it starts at {bad.start}")
    return df


def read_f0_file(path) -> pd.DataFrame:
    df = _read_table(path, ["time", "f0"], "F0")
    try:
        df = df.astype(float)
    except ValueError as e:
        raise LabelError(f"F0 file {path}: non-numeric value ({e})") from e
    if (df["f0"] < 0).any():
        raise LabelError(f"F0 file {path}: negative F0")
    return df.sort_values("time").reset_index(drop=True)


def timing_duration(timing: pd.DataFrame) -> float:
    return float(timing["end"].max())


def check_durations(timing: pd.DataFrame, f0: pd.DataFrame, config: MelConfig) -> None:
    phones_end, f0_end = timing_duration(timing), float(f0["time"].max())
    if abs(phones_end - f0_end) > config.hop_ms / 1000.0:
        raise LabelError(
            f"phone timings cover {phones_end:.3f}s but F0 covers {f0_end:.3f}s (more than one frame apart)")


def timing_to_frames(timing: pd.DataFrame, inventory: PhoneInventory, n_frames: int,
                     config: MelConfig) -> LinguisticFrames:
    """Frame t takes the phone whose interval holds t * hop; gaps are silence."""
    ids = np.array([inventory.index(p) for p in timing["phone"]])
    frame_times = np.arange(n_frames) * config.hop_ms / 1000.0
    starts, ends = timing["start"].to_numpy(), timing["end"].to_numpy()
    out = np.full(n_frames, inventory.sil_id, dtype=np.int64)
    for pid, s, e in zip(ids, starts, ends):
        out[(frame_times >= s) & (frame_times < e)] = pid
    # final frame sits exactly on the end time
    last = frame_times >= ends.max()
    out[last] = ids[np.argmax(ends)]
    return LinguisticFrames(out)


def f0_to_track(f0: pd.DataFrame, n_frames: int, config: MelConfig) -> F0Track:
    times, values = f0["time"].to_numpy(), f0["f0"].to_numpy()
    frame_times = np.arange(n_frames) * config.hop_ms / 1000.0
    nearest = np.clip(np.searchsorted(times, frame_times), 0, len(times) - 1)
    left = np.clip(nearest - 1, 0, len(times) - 1)
    pick_left = np.abs(times[left] - frame_times) <= np.abs(times[nearest] - frame_times)
    nearest = np.where(pick_left, left, nearest)
    voiced = values[nearest] > 0
    if not voiced.any():
        return F0Track(np.zeros(n_frames))
    v = values > 0
    interp = np.interp(frame_times, times[v], values[v])
    return F0Track(np.where(voiced, interp, 0.0))


def load_recording(wav_path, timing_path, f0_path, config: MelConfig, inventory: PhoneInventory,
                   singer_id: int = 0) -> Utterance:
    clip = load_wav(wav_path)
    mel = compute_mel(clip, config)
    f0 = read_f0_file(f0_path)
    ling = None
    if timing_path is not None:
        timing = read_phone_timing(timing_path)
        check_durations(timing, f0, config)
        ling = timing_to_frames(timing, inventory, mel.n_frames, config)
    logger.info(f"Loaded recording {wav_path}: {mel.n_frames} frames")
    return Utterance(name=Path(wav_path).stem, singer_id=singer_id, audio=clip, mel=mel,
                     f0=f0_to_track(f0, mel.n_frames, config), ling=ling)
