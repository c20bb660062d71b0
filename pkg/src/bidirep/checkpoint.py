"""Parameter checkpoints: a manifest plus one raw float64 file per array.

A checkpoint is a directory.  ``manifest.txt`` is UTF-8 ``key=value`` text
listing the format version, free-form metadata (``meta.*``), and one block
per parameter: logical name, shape, backing file, byte offset and length.
Each parameter's values live in their own file as raw little-endian 64-bit
floats in C order, so round trips are bit-exact and the files are readable
from any language without a deserializer.
"""

from __future__ import annotations

import os

import numpy as np

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.txt"


class CheckpointError(RuntimeError):
    """Malformed, incomplete, or mismatched checkpoint contents."""


def save_params(
    dirpath: str | os.PathLike,
    params: dict[str, np.ndarray],
    meta: dict[str, str] | None = None,
) -> None:
    """Write every array (and metadata) into ``dirpath``, creating it."""
    dirpath = os.fspath(dirpath)
    os.makedirs(dirpath, exist_ok=True)
    lines = [f"version={FORMAT_VERSION}", f"count={len(params)}"]
    for key, value in (meta or {}).items():
        _check_token(key, "meta key")
        value = str(value)
        if "\n" in value:
            raise CheckpointError(f"meta value for {key!r} contains a newline")
        lines.append(f"meta.{key}={value}")
    for i, (name, array) in enumerate(params.items()):
        _check_token(name, "parameter name")
        data = np.ascontiguousarray(array, dtype="<f8")
        filename = f"p{i}.bin"
        with open(os.path.join(dirpath, filename), "wb") as fh:
            fh.write(data.tobytes())
        # ascontiguousarray promotes 0-d to 1-d; keep the caller's shape
        shape = ",".join(str(s) for s in np.shape(array))
        lines.append(f"p{i}.name={name}")
        lines.append(f"p{i}.shape={shape}")
        lines.append(f"p{i}.file={filename}")
        lines.append(f"p{i}.offset=0")
        lines.append(f"p{i}.length={data.nbytes}")
    with open(os.path.join(dirpath, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(
    dirpath: str | os.PathLike,
) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read a checkpoint directory back into name->array plus metadata."""
    dirpath = os.fspath(dirpath)
    manifest_path = os.path.join(dirpath, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        raise CheckpointError(f"no manifest at {manifest_path}")
    entries: dict[str, str] = {}
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise CheckpointError(
                    f"{manifest_path}:{lineno}: expected key=value, got {line!r}"
                )
            key, value = line.split("=", 1)
            if key in entries:
                raise CheckpointError(f"duplicate manifest key {key!r}")
            entries[key] = value
    version = entries.get("version")
    if version != str(FORMAT_VERSION):
        raise CheckpointError(
            f"unsupported checkpoint version {version!r} (expected {FORMAT_VERSION})"
        )
    try:
        count = int(entries["count"])
    except (KeyError, ValueError):
        raise CheckpointError("manifest is missing a valid count") from None
    meta = {
        key[len("meta."):]: value
        for key, value in entries.items()
        if key.startswith("meta.")
    }
    params: dict[str, np.ndarray] = {}
    for i in range(count):
        prefix = f"p{i}."
        try:
            name = entries[prefix + "name"]
            shape_text = entries[prefix + "shape"]
            filename = entries[prefix + "file"]
            offset = int(entries[prefix + "offset"])
            length = int(entries[prefix + "length"])
        except KeyError as exc:
            raise CheckpointError(f"manifest is missing {exc.args[0]!r}") from None
        shape = tuple(int(s) for s in shape_text.split(",")) if shape_text else ()
        expected = int(np.prod(shape, dtype=np.int64)) * 8
        if length != expected:
            raise CheckpointError(
                f"{name!r}: byte length {length} does not match shape {shape}"
            )
        path = os.path.join(dirpath, filename)
        if not os.path.isfile(path):
            raise CheckpointError(f"{name!r}: missing data file {path}")
        with open(path, "rb") as fh:
            fh.seek(offset)
            raw = fh.read(length)
        if len(raw) != length:
            raise CheckpointError(
                f"{name!r}: file {path} holds {len(raw)} bytes, manifest says {length}"
            )
        if name in params:
            raise CheckpointError(f"duplicate parameter name {name!r}")
        params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return params, meta


def _check_token(token: str, what: str) -> None:
    if not token or "=" in token or "\n" in token or token != token.strip():
        raise CheckpointError(f"invalid {what}: {token!r}")
