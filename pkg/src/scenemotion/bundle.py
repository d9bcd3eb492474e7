"""Single-file model bundle.

Layout: magic ``AFE1``, version as little-endian u16, section count u16, then
for each section a u16 name length, the UTF-8 name, a u64 payload length and
the payload. Payloads are canonical JSON (sorted keys, no whitespace) in which
numpy arrays appear as base64 little-endian buffers, so equal models always
produce equal bytes.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .ensemble import BaseBank, EnsembleModel, FrozenPreprocessing, MetaModel
from .errors import BundleFormatError
from .features import FrameParams
from .learners.nn import NnModel
from .learners.svm import SvmModel
from .preprocess import OutlierModel, Preprocessor, Scaler
from .selection import SelectionMask

MAGIC = b"AFE1"
VERSION = 1
_HEAD = struct.Struct("<4sHH")
_NAME = struct.Struct("<H")
_SIZE = struct.Struct("<Q")


def _encode(obj):
    if isinstance(obj, np.ndarray):
        if obj.dtype == bool:
            obj = obj.astype(np.int64)
        kind = "f8" if obj.dtype.kind == "f" else "i8"
        data = np.ascontiguousarray(obj, dtype="<" + kind).tobytes()
        return {"__array__": kind, "shape": list(obj.shape), "data": base64.b64encode(data).decode("ascii")}
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            raw = base64.b64decode(obj["data"])
            return np.frombuffer(raw, dtype="<" + obj["__array__"]).reshape(obj["shape"]).astype(
                np.float64 if obj["__array__"] == "f8" else np.int64)
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def dumps_payload(obj) -> bytes:
    return json.dumps(_encode(obj), sort_keys=True, separators=(",", ":"), allow_nan=True).encode("utf-8")


def loads_payload(blob: bytes):
    return _decode(json.loads(blob.decode("utf-8")))


def pack_sections(sections: list[tuple[str, bytes]]) -> bytes:
    out = [_HEAD.pack(MAGIC, VERSION, len(sections))]
    for name, payload in sections:
        raw = name.encode("utf-8")
        out += [_NAME.pack(len(raw)), raw, _SIZE.pack(len(payload)), payload]
    return b"".join(out)


def unpack_sections(blob: bytes) -> dict[str, bytes]:
    if len(blob) < _HEAD.size:
        raise BundleFormatError("bundle is truncated: header incomplete")
    magic, version, count = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BundleFormatError(f"not a model bundle: magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise BundleFormatError(f"unsupported bundle version {version}; this build reads version {VERSION}")
    pos, sections = _HEAD.size, {}
    try:
        for _ in range(count):
            (n,) = _NAME.unpack_from(blob, pos)
            pos += _NAME.size
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (size,) = _SIZE.unpack_from(blob, pos)
            pos += _SIZE.size
            if pos + size > len(blob):
                raise BundleFormatError(f"section {name!r} is truncated")
            sections[name] = blob[pos:pos + size]
            pos += size
    except struct.error as exc:
        raise BundleFormatError(f"bundle is truncated: {exc}") from exc
    if pos != len(blob):
        raise BundleFormatError(f"{len(blob) - pos} trailing bytes after the last section")
    return sections


def _learner_dict(model):
    if isinstance(model, SvmModel):
        return {"family": "svm", **model.to_dict()}
    return {"family": "nn", **model.to_dict()}


def _learner_from(d):
    return SvmModel.from_dict(d) if d["family"] == "svm" else NnModel.from_dict(d)


def to_bytes(model: EnsembleModel) -> bytes:
    prep = model.prep
    sections = [
        ("preprocessing", dumps_payload({
            "sample_rate": prep.sample_rate,
            "window_seconds": prep.window_seconds,
            "frame_params": prep.frame_params.to_dict(),
            "outliers": prep.preprocessor.outliers.to_dict(),
            "scaler": prep.preprocessor.scaler.to_dict(),
            "state_hash": prep.state_hash(),
        })),
        ("selection", dumps_payload(prep.mask.to_dict())),
    ]
    for tag, m in zip(model.bank.tags, model.bank.models):
        sections.append((f"learner/{tag}", dumps_payload(_learner_dict(m))))
    sections.append(("meta", dumps_payload(model.meta.to_dict())))
    sections.append(("provenance", dumps_payload({
        "train_rows": {t: list(model.bank.train_rows.get(t, [])) for t in model.bank.tags},
        "meta_rows": list(model.meta_rows),
    })))
    return pack_sections(sections)


def from_bytes(blob: bytes) -> EnsembleModel:
    from .ensemble import assemble

    sec = unpack_sections(blob)
    try:
        p = loads_payload(sec["preprocessing"])
        prep = FrozenPreprocessing(
            int(p["sample_rate"]), float(p["window_seconds"]), FrameParams.from_dict(p["frame_params"]),
            Preprocessor(OutlierModel.from_dict(p["outliers"]), Scaler.from_dict(p["scaler"])),
            SelectionMask.from_dict(loads_payload(sec["selection"])))
        tags = [name.split("/", 1)[1] for name in sec if name.startswith("learner/")]
        models = [_learner_from(loads_payload(sec[f"learner/{t}"])) for t in tags]
        prov = loads_payload(sec["provenance"])
        bank = BaseBank(tags, models, prov["train_rows"])
        meta = MetaModel.from_dict(loads_payload(sec["meta"]))
    except KeyError as exc:
        raise BundleFormatError(f"bundle lacks section or field {exc}") from exc
    except ValueError as exc:
        raise BundleFormatError(f"bundle content is invalid: {exc}") from exc
    if prep.state_hash() != p["state_hash"]:
        raise BundleFormatError("preprocessing state hash does not match its recorded value")
    try:
        return assemble(bank, meta, prep, prov["meta_rows"])
    except ValueError as exc:
        raise BundleFormatError(f"bundle fails validation: {exc}") from exc


def save_bundle(path, model: EnsembleModel) -> str:
    """Write the bundle and return its sha256 hex digest."""
    blob = to_bytes(model)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_bundle(path) -> EnsembleModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise BundleFormatError(f"cannot read bundle {path}: {exc}") from exc
    return from_bytes(blob)


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
