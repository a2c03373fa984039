"""JSON checkpoints and atomic file output.

Floats are written with Python's shortest round-trip repr, so
save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .embedding import Normalizer
from .koppen import KstParams
from .model import KgamModel
from .neural import Mlp

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def atomic_write(path, text: str):
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def csv_text(header, rows) -> str:
    """CSV with ``header``; floats formatted to 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format(v, ".17g") if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def model_to_dict(model: KgamModel) -> dict:
    return {
        "kst": model.params.to_dict(),
        "a": model.params.a,
        "lambda": list(model.params.lam),
        "normalizer": model.normalizer.to_dict(),
        "outer_mode": model.outer_mode,
        "task": model.task,
        "intercept": model.intercept,
        "badic_base": model.badic_base,
        "z_ranges": model.z_ranges,
        "input_scaling": model.input_scaling,
        "target_scaling": list(model.target_scaling),
        "nets": [net.to_dict() for net in model.nets],
    }


def model_from_dict(data: dict) -> KgamModel:
    params = KstParams.from_dict(data["kst"])
    if list(params.lam) != list(data["lambda"]) or params.a != data["a"]:
        raise CheckpointError("stored lambda/a do not match the recomputed embedding constants")
    return KgamModel(
        params,
        Normalizer.from_dict(data["normalizer"]),
        data["outer_mode"],
        [Mlp.from_dict(n) for n in data["nets"]],
        data["task"],
        float(data["intercept"]),
        data["badic_base"],
        [list(r) for r in data["z_ranges"]],
        [list(s) for s in data["input_scaling"]],
        list(data["target_scaling"]),
    )


def checkpoint_dict(model: KgamModel, config: dict | None = None, trace=None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "model": model_to_dict(model),
        "trace": [float(v) for v in (trace or [])],
    }


def save_checkpoint(path, model: KgamModel, config: dict | None = None, trace=None):
    atomic_write(path, dumps(checkpoint_dict(model, config, trace)))


def load_checkpoint(path) -> tuple[KgamModel, dict, list[float]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from None
    if data.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format_version {data.get('format_version')!r}")
    try:
        model = model_from_dict(data["model"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from None
    return model, data.get("config", {}), list(data.get("trace", []))
