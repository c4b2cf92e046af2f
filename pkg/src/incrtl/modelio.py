"""Atomic file output and the line-oriented model file format.

Model files look like::

    # incrtl model
    format_version=1
    kind=DataPooling
    d_S=2
    d_T=3
    theta=2.0,2.0,-2.0
    shift=0.0,0.0,0.1
    ...

Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import IoError, ValidationError
from .estimators import FittedModel, ModelKind, PoolingWeights

FORMAT_VERSION = 1


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_csv(path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def _vec(v) -> str:
    return ",".join(repr(float(x)) for x in np.asarray(v).ravel())


def _float(x) -> float:
    return float(x) if x not in ("", "nan") else float("nan")


def model_to_text(model: FittedModel, features: tuple[str, ...] | None = None) -> str:
    lines = [
        "# incrtl model",
        f"format_version={FORMAT_VERSION}",
        f"kind={model.kind.value}",
        f"d_S={model.d_hist}",
        f"d_T={model.d}",
    ]
    if features is not None:
        lines.append("features=" + ",".join(features))
    lines.append("theta=" + _vec(model.theta))
    lines.append("shift=" + _vec(model.shift))
    w = model.weights
    if w is not None:
        lines += [
            f"alpha_S={w.alpha_S!r}",
            f"alpha_T={w.alpha_T!r}",
            f"sigma2_S_hat={w.sigma2_S_hat!r}",
            f"sigma2_hat={w.sigma2_hat!r}",
        ]
    for key in sorted(model.meta):
        lines.append(f"meta.{key}={model.meta[key]}")
    return "\n".join(lines) + "\n"


def save_model(path, model: FittedModel, features: tuple[str, ...] | None = None) -> None:
    atomic_write_text(path, model_to_text(model, features))


def load_model(path) -> tuple[FittedModel, tuple[str, ...] | None]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read model file {path}: {exc}") from exc
    fields: dict[str, str] = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"malformed model file line: {line!r}")
        fields[key] = value
    if int(fields.get("format_version", "0")) != FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {fields.get('format_version')}")
    theta = np.array([float(t) for t in fields["theta"].split(",")])
    shift = np.array([float(t) for t in fields["shift"].split(",")])
    weights = None
    if "alpha_S" in fields:
        weights = PoolingWeights(
            float(fields["alpha_S"]),
            float(fields["alpha_T"]),
            _float(fields.get("sigma2_S_hat", "nan")),
            _float(fields.get("sigma2_hat", "nan")),
        )
    meta = {k[5:]: v for k, v in fields.items() if k.startswith("meta.")}
    model = FittedModel(theta, shift, ModelKind(fields["kind"]), int(fields["d_S"]), weights, meta)
    features = tuple(fields["features"].split(",")) if "features" in fields else None
    return model, features
