"""
container.py

Named-tensor container shared by feature sets and checkpoints.

Byte layout:
    [0:8)      uint64 little-endian N, length of the JSON header
    [8:8+N)    UTF-8 JSON header:
                 {"format": "timbre-container", "version": 1,
                  "fingerprint": str | null, "metadata": {...},
                  "arrays": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    [8+N:...)  raw C-order little-endian array bytes; offsets are relative
               to the start of this body
"""

import json
import logging
import os
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.config import MelConfig, config_fingerprint
from src.corpus.inventory import LinguisticFrames
from src.corpus.synth import Utterance
from src.dsp.audio import AudioClip
from src.dsp.features import MelSpectrogram
from src.dsp.pitch import F0Track
from src.errors import ContainerError, FingerprintError

logger = logging.getLogger(__name__)

FORMAT = "timbre-container"
VERSION = 1


def _little_endian(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    return array.astype(array.dtype.newbyteorder("<"), copy=False)


def write_container(path, arrays: Dict[str, np.ndarray], metadata: Optional[dict] = None,
                    fingerprint: Optional[str] = None) -> Path:
    """Write atomically (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    entries, blobs, offset = [], [], 0
    for name, array in arrays.items():
        data = _little_endian(np.asarray(array))
        raw = data.tobytes(order="C")
        entries.append({"name": name, "dtype": data.dtype.str, "shape": list(data.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)

    header = json.dumps({"format": FORMAT, "version": VERSION, "fingerprint": fingerprint,
                         "metadata": metadata or {}, "arrays": entries}).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)
    os.replace(tmp, path)
    return path


def read_container(path, expected_fingerprint: Optional[str] = None
                   ) -> Tuple[Dict[str, np.ndarray], dict, Optional[str]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Container not found: {path}")
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 8:
        raise ContainerError(f"{path}: truncated header length")
    (n,) = struct.unpack("<Q", blob[:8])
    if 8 + n > len(blob):
        raise ContainerError(f"{path}: header length {n} exceeds file size")
    try:
        header = json.loads(blob[8:8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"{path}: corrupt header ({e})") from e
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise ContainerError(f"{path}: not a {FORMAT} file")

    fingerprint = header.get("fingerprint")
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise FingerprintError(
            f"{path}: config fingerprint {fingerprint} does not match expected {expected_fingerprint}")

    body = memoryview(blob)[8 + n:]
    arrays = {}
    try:
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            end = entry["offset"] + entry["nbytes"]
            if end > len(body):
                raise ContainerError(f"{path}: array '{entry['name']}' runs past end of file")
            flat = np.frombuffer(body[entry["offset"]:end], dtype=dtype)
            arrays[entry["name"]] = flat.reshape(entry["shape"]).astype(dtype.newbyteorder("="))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ContainerError):
            raise
        raise ContainerError(f"{path}: corrupt array table ({e})") from e
    return arrays, header.get("metadata", {}), fingerprint


def save_features(utterances: List[Utterance], path, config: MelConfig,
                  metadata: Optional[dict] = None) -> Path:
    arrays, items = {}, []
    for i, utt in enumerate(utterances):
        prefix = f"utt/{i}"
        arrays[f"{prefix}/audio"] = utt.audio.samples
        arrays[f"{prefix}/mel"] = utt.mel.values
        arrays[f"{prefix}/f0_hz"] = utt.f0.f0_hz
        if utt.has_labels:
            arrays[f"{prefix}/phone_ids"] = utt.ling.phone_ids
        items.append({"name": utt.name, "singer_id": utt.singer_id,
                      "sample_rate": utt.audio.sample_rate, "has_labels": utt.has_labels})
    meta = dict(metadata or {})
    meta.update({"kind": "features", "items": items, "mel_config": config.model_dump(mode="json")})
    logger.info(f"Writing {len(utterances)} utterances to {path}")
    return write_container(path, arrays, meta, fingerprint=config_fingerprint(config))


def load_features(path, config: MelConfig) -> List[Utterance]:
    arrays, meta, _ = read_container(path, expected_fingerprint=config_fingerprint(config))
    if meta.get("kind") != "features":
        raise ContainerError(f"{path}: container holds '{meta.get('kind')}', not features")
    utterances = []
    for i, item in enumerate(meta.get("items", [])):
        prefix = f"utt/{i}"
        try:
            ling = LinguisticFrames(arrays[f"{prefix}/phone_ids"]) if item["has_labels"] else None
            utterances.append(Utterance(
                name=item["name"], singer_id=int(item["singer_id"]),
                audio=AudioClip(arrays[f"{prefix}/audio"], int(item["sample_rate"])),
                mel=MelSpectrogram(arrays[f"{prefix}/mel"], hop_ms=config.hop_ms),
                f0=F0Track(arrays[f"{prefix}/f0_hz"]), ling=ling))
        except KeyError as e:
            raise ContainerError(f"{path}: missing array {e}") from e
    return utterances
