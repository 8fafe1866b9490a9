"""Dataset directories: manifest.json plus raw little-endian arrays per split."""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from .generate import Dataset, ScenarioSpec, Split, GENERATOR_VERSION

FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")

# file stem -> (Split attribute, dtype, per-sample trailing shape)
_FIELDS = {
    "x": ("x", "<f4", "grid"),
    "y": ("y", "u1", ()),
    "mask": ("masks", "u1", "grid"),
    "transform": ("transforms", "<i4", (3,)),
    "case": ("cases", "u1", ()),
}
_SUFFIX = {"<f4": "f32", "u1": "u8", "<i4": "i32"}


class DatasetFormatError(ValueError):
    pass


class MissingFileError(DatasetFormatError, FileNotFoundError):
    pass


class LengthMismatchError(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


class VersionError(DatasetFormatError):
    pass


def _filename(stem: str, split: str) -> str:
    return f"{stem}_{split}.{_SUFFIX[_FIELDS[stem][1]]}"


def save_dataset(dataset: Dataset, root) -> Path:
    """Write ``dataset`` under ``root/<dataset name>`` atomically; returns the directory."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    final = root / dataset.name
    tmp = Path(tempfile.mkdtemp(prefix=f".{dataset.name}.", dir=root))
    try:
        checksums, counts = {}, {}
        for split in SPLITS:
            part = dataset.split(split)
            counts[split] = len(part)
            for stem, (attr, dtype, _) in _FIELDS.items():
                raw = np.ascontiguousarray(getattr(part, attr), dtype=dtype).tobytes()
                name = _filename(stem, split)
                (tmp / name).write_bytes(raw)
                checksums[name] = hashlib.sha256(raw).hexdigest()
        manifest = {
            "format_version": FORMAT_VERSION,
            "generator_version": dataset.provenance.get("generator_version", GENERATOR_VERSION),
            "name": dataset.name,
            "spec": dataset.spec.to_dict(),
            "offsets": dataset.offsets,
            "counts": counts,
            "xor_cases": "stratified-exact within each label",
            "checksums": checksums,
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def read_manifest(path) -> dict:
    path = Path(path)
    mf = path / "manifest.json"
    if not mf.is_file():
        raise MissingFileError(f"{mf}: dataset manifest not found")
    manifest = json.loads(mf.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"{mf}: format version {manifest.get('format_version')} "
                           f"is not supported (expected {FORMAT_VERSION})")
    return manifest


def load_dataset(path, verify: bool = True) -> Dataset:
    path = Path(path)
    manifest = read_manifest(path)
    spec = ScenarioSpec.from_dict(manifest["spec"])
    side = spec.side
    splits = {}
    for split in SPLITS:
        n = manifest["counts"][split]
        arrays = {}
        for stem, (attr, dtype, tail) in _FIELDS.items():
            name = _filename(stem, split)
            f = path / name
            if not f.is_file():
                raise MissingFileError(f"{f}: array file missing")
            raw = f.read_bytes()
            shape = (n,) + ((side, side) if tail == "grid" else tail)
            expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
            if len(raw) != expected:
                raise LengthMismatchError(f"{f}: expected {expected} bytes for shape {shape}, "
                                          f"found {len(raw)}")
            if verify and hashlib.sha256(raw).hexdigest() != manifest["checksums"].get(name):
                raise ChecksumError(f"{f}: checksum does not match manifest")
            arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
            if stem == "x":
                arr = arr.astype(np.float32)
            elif stem == "mask":
                arr = arr.astype(bool)
            elif stem == "transform":
                arr = arr.astype(np.int32)
            else:
                arr = arr.copy()
            arrays[attr] = arr
        splits[split] = Split(**arrays)
    return Dataset(spec, splits["train"], splits["val"], splits["test"],
                   manifest.get("offsets", {}),
                   {"generator_version": manifest.get("generator_version"), "seed": spec.seed})


def dataset_checksum(path) -> str:
    """Digest of the manifest; identifies a dataset's content for caching."""
    return hashlib.sha256((Path(path) / "manifest.json").read_bytes()).hexdigest()
