"""On-disk formats.

Binary matrix (``*.bin``)
    16-byte header of two little-endian u64 ``(rows, cols)`` followed by
    ``rows * cols`` little-endian float64 values in row-major order.

Dataset directory
    ``params.csv`` (header of parameter names, one row per shot in
    acquisition order, floats written with ``repr`` so they round-trip),
    ``profiles.bin`` (binary matrix, one row per shot) and ``meta.json``.

Phase-image directory
    ``images.json`` (energy axis, calibrations, shot list), ``params.csv``
    and one binary matrix per shot (rows = energy, cols = time).

Checkpoint (``*.vprd``)
    ``b"VPRDCKPT"``, u32 format version, u32 zero, u64 JSON header length,
    the UTF-8 JSON header, then the binary-matrix blobs named in
    ``header["blobs"]`` in that order.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .data_model import Dataset, Standardization
from .mlp import MlpModel
from .preprocess import PhaseImage

DATASET_VERSION = 1
IMAGES_VERSION = 1
CHECKPOINT_VERSION = 1
CHECKPOINT_MAGIC = b"VPRDCKPT"
_HEADER = struct.Struct("<QQ")
_LE_F8 = np.dtype("<f8")
MANIFEST_NAME = "manifest.json"


class FormatError(ValueError):
    pass


# --- JSON -----------------------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


# --- binary matrices ------------------------------------------------------

def matrix_bytes(a) -> bytes:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("only 1-D or 2-D arrays can be stored")
    return _HEADER.pack(*a.shape) + np.ascontiguousarray(a, dtype=_LE_F8).tobytes()


def parse_matrix(buf: bytes, offset: int = 0, name: str = "matrix") -> tuple[np.ndarray, int]:
    """Decode one matrix starting at ``offset``; return it and the next offset."""
    if len(buf) - offset < _HEADER.size:
        raise FormatError(f"{name}: truncated header ({len(buf) - offset} of {_HEADER.size} bytes)")
    rows, cols = _HEADER.unpack_from(buf, offset)
    start = offset + _HEADER.size
    need = rows * cols * 8
    have = len(buf) - start
    if have < need:
        raise FormatError(f"{name}: expected {need} data bytes for {rows}x{cols}, found {have}")
    data = np.frombuffer(buf, dtype=_LE_F8, count=rows * cols, offset=start)
    return data.reshape(rows, cols).astype(np.float64), start + need


def write_matrix(path, a) -> None:
    Path(path).write_bytes(matrix_bytes(a))


def read_matrix(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    m, end = parse_matrix(buf, 0, str(path))
    if end != len(buf):
        raise FormatError(f"{path}: expected {end} bytes, found {len(buf)} (trailing data)")
    return m


# --- CSV ------------------------------------------------------------------

def write_params_csv(path, names, params) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in np.asarray(params, dtype=np.float64):
            w.writerow([repr(float(v)) for v in row])


def read_params_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    names, body = rows[0], rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(names):
            raise FormatError(f"{path}:{i}: {len(r)} fields, header has {len(names)}")
    try:
        values = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return names, values.reshape(len(body), len(names))


# --- dataset directory ----------------------------------------------------

def write_dataset(dirpath, ds: Dataset) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    write_params_csv(d / "params.csv", ds.param_names, ds.params)
    write_matrix(d / "profiles.bin", ds.profiles)
    write_json(d / "meta.json", {
        "format": "vprd-dataset",
        "version": DATASET_VERSION,
        "D_in": ds.d_in,
        "D": ds.d_out,
        "n": len(ds),
        "time_bin_fs": ds.time_bin_fs,
        "shot_index": [int(s) for s in ds.shot_index],
        "provenance": ds.provenance,
    })


def read_dataset(dirpath) -> Dataset:
    d = Path(dirpath)
    meta = read_json(d / "meta.json")
    if meta.get("format") != "vprd-dataset" or meta.get("version") != DATASET_VERSION:
        raise FormatError(f"{d}: unsupported dataset format {meta.get('format')!r} "
                          f"version {meta.get('version')!r}")
    names, params = read_params_csv(d / "params.csv")
    if len(names) != meta["D_in"]:
        raise FormatError(f"{d}: params.csv has {len(names)} columns, meta says D_in={meta['D_in']}")
    profiles = read_matrix(d / "profiles.bin")
    n = meta["n"]
    if params.shape[0] != n or profiles.shape != (n, meta["D"]):
        raise FormatError(f"{d}: expected {n} shots of width {meta['D']}, found params "
                          f"{params.shape[0]} rows and profiles {profiles.shape}")
    return Dataset(params, profiles, meta["shot_index"], names, float(meta["time_bin_fs"]),
                   meta.get("provenance", {}))


# --- phase-image directory ------------------------------------------------

def write_images(dirpath, images, names, params, shot_index=None) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    if not images:
        raise ValueError("no images to write")
    first = images[0]
    shot_index = range(len(images)) if shot_index is None else shot_index
    shots = []
    for i, (im, s) in enumerate(zip(images, shot_index)):
        if not np.array_equal(im.energy_axis, first.energy_axis):
            raise ValueError("all images in a directory must share the energy axis")
        fname = f"shot_{i:06d}.bin"
        write_matrix(d / fname, im.charge)
        shots.append({"file": fname, "shot_index": int(s)})
    write_params_csv(d / "params.csv", names, params)
    write_json(d / "images.json", {
        "format": "vprd-phase-images",
        "version": IMAGES_VERSION,
        "energy_axis": [float(v) for v in first.energy_axis],
        "time_calibration_fs_per_px": first.time_calibration_fs_per_px,
        "energy_calibration_kev_per_px": first.energy_calibration_kev_per_px,
        "shots": shots,
    })


def read_images(dirpath) -> tuple[list[PhaseImage], list[str], np.ndarray, list[int]]:
    d = Path(dirpath)
    meta = read_json(d / "images.json")
    if meta.get("format") != "vprd-phase-images" or meta.get("version") != IMAGES_VERSION:
        raise FormatError(f"{d}: unsupported image directory format")
    energy = np.asarray(meta["energy_axis"], dtype=np.float64)
    images = [
        PhaseImage(read_matrix(d / s["file"]), energy, float(meta["time_calibration_fs_per_px"]),
                   float(meta["energy_calibration_kev_per_px"]))
        for s in meta["shots"]
    ]
    names, params = read_params_csv(d / "params.csv")
    if params.shape[0] != len(images):
        raise FormatError(f"{d}: {params.shape[0]} parameter rows for {len(images)} images")
    return images, names, params, [int(s["shot_index"]) for s in meta["shots"]]


# --- checkpoints ----------------------------------------------------------

@dataclass
class Checkpoint:
    model: MlpModel
    label_mean: np.ndarray
    standardization: Standardization | None
    time_bin_fs: float
    param_names: list[str]
    dropout_p: float = 0.45
    split_seed: int = 42
    split_fractions: tuple = (0.8, 0.1, 0.1)
    train_config: dict | None = None


_BLOBS = ("W1", "b1", "W2", "b2", "label_mean")


def checkpoint_bytes(ck: Checkpoint) -> bytes:
    st = ck.standardization
    header = {
        "format": "vprd-checkpoint",
        "version": CHECKPOINT_VERSION,
        "dims": list(ck.model.dims),
        "activation": ck.model.activation,
        "dropout_p": ck.dropout_p,
        "standardization": None if st is None else {
            "mean": [float(v) for v in st.mean], "std": [float(v) for v in st.std]},
        "time_bin_fs": ck.time_bin_fs,
        "param_names": list(ck.param_names),
        "split": {"seed": ck.split_seed, "fractions": list(ck.split_fractions)},
        "train_config": ck.train_config,
        "blobs": list(_BLOBS),
        "code_version": __version__,
    }
    hb = dumps(header).encode()
    arrays = {**ck.model.params(), "label_mean": ck.label_mean}
    parts = [CHECKPOINT_MAGIC, struct.pack("<IIQ", CHECKPOINT_VERSION, 0, len(hb)), hb]
    parts += [matrix_bytes(arrays[name]) for name in _BLOBS]
    return b"".join(parts)


def write_checkpoint(path, ck: Checkpoint) -> None:
    Path(path).write_bytes(checkpoint_bytes(ck))


def read_checkpoint(path) -> Checkpoint:
    buf = Path(path).read_bytes()
    if buf[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a vprd checkpoint (bad magic {buf[:8]!r})")
    if len(buf) < 24:
        raise FormatError(f"{path}: truncated checkpoint header")
    version, _, hlen = struct.unpack_from("<IIQ", buf, 8)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    try:
        header = json.loads(buf[24:24 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header ({exc})") from None
    offset = 24 + hlen
    arrays = {}
    for name in header["blobs"]:
        arrays[name], offset = parse_matrix(buf, offset, f"{path}:{name}")
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes")
    model = MlpModel(arrays["W1"], arrays["b1"][0], arrays["W2"], arrays["b2"][0],
                     header["activation"])
    if list(model.dims) != header["dims"]:
        raise FormatError(f"{path}: blob shapes {model.dims} disagree with dims {header['dims']}")
    st = header["standardization"]
    return Checkpoint(
        model=model,
        label_mean=arrays["label_mean"][0],
        standardization=None if st is None else Standardization(
            np.asarray(st["mean"], dtype=np.float64), np.asarray(st["std"], dtype=np.float64)),
        time_bin_fs=float(header["time_bin_fs"]),
        param_names=list(header["param_names"]),
        dropout_p=float(header["dropout_p"]),
        split_seed=int(header["split"]["seed"]),
        split_fractions=tuple(header["split"]["fractions"]),
        train_config=header.get("train_config"),
    )


# --- manifests ------------------------------------------------------------

def content_hash(path) -> str | None:
    p = Path(path)
    if not p.exists():
        return None
    h = hashlib.sha256()
    if p.is_dir():
        files = sorted(f for f in p.rglob("*") if f.is_file() and f.name != MANIFEST_NAME)
    else:
        files = [p]
    for f in files:
        if p.is_dir():
            h.update(str(f.relative_to(p)).encode() + b"\0")
        h.update(f.read_bytes())
    return h.hexdigest()


def write_manifest(path, command: str, config: dict, inputs: dict, outputs: dict) -> dict:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {k: {"path": str(v), "sha256": content_hash(v)} for k, v in inputs.items()},
        "outputs": {k: {"path": str(v), "sha256": content_hash(v)} for k, v in outputs.items()},
        "timestamp_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "code_version": __version__,
    }
    write_json(path, manifest)
    return manifest
