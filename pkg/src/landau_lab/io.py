"""Deterministic artifact I/O: binary array containers, CSV tables, JSON manifests.

Everything written here is a pure function of its inputs (no timestamps, sorted
keys), so reruns with the same configuration produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__

MAGIC = b"LANDAULAB\x00"
FORMAT_VERSION = 1


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def provenance(config: Mapping[str, Any], **extra) -> dict:
    out = {"config_hash": config_hash(config), "package_version": __version__}
    out.update(extra)
    return out


# ----------------------------------------------------------------------------
# binary container


def write_arrays(path: str | Path, header: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> None:
    """Write float64 arrays with a JSON header. Layout:

    MAGIC | u32 format version | u64 header length | header JSON | raw arrays
    """
    names = sorted(arrays)
    meta = dict(header)
    meta["arrays"] = [{"name": n, "shape": list(np.shape(arrays[n]))} for n in names]
    blob = canonical_json(meta).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
    buf.write(blob)
    for n in names:
        buf.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def read_arrays(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a landau_lab array file")
    off = len(MAGIC)
    version, hlen = struct.unpack_from("<IQ", data, off)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    off += struct.calcsize("<IQ")
    header = json.loads(data[off : off + hlen])
    off += hlen
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(float)
        arrays[spec["name"]] = arr
        off += 8 * count
    return header, arrays


# ----------------------------------------------------------------------------
# tables


def fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (tuple, list)):
        return "-".join(str(int(a)) for a in x)
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return str(x)


def write_csv(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    prov: Mapping[str, Any] | None = None,
) -> None:
    """CSV with one '# key=value' provenance comment line per entry."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = io.StringIO()
    for k, v in sorted((prov or {}).items()):
        out.write(f"# {k}={v if isinstance(v, str) else canonical_json(v)}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    path.write_text(out.getvalue())


def read_csv(path: str | Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    prov = {}
    lines = Path(path).read_text().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            prov[k] = v
        else:
            body.append(line)
    return prov, list(csv.DictReader(body))


def write_json(path: str | Path, obj: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")
