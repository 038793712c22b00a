"""File formats: binary strain stacks, mask tables, TC map CSV, 8-bit PGM
images with value-range sidecars, and plain-text run manifests.

Stack files are self-describing little-endian binary:

    bytes 0..11   magic "STRAINSTACK\\0"
    bytes 12..15  uint32 format version (currently 1)
    uint32 x 3    N, H, W
    float64       sample_time_s
    uint8         kind flag (0 = incremental, 1 = cumulative)
    float64 x N*H*W   frames, frame-major then row-major

Everything here is trivially parseable from any language without scientific
file-format dependencies.
"""

from __future__ import annotations

import struct

import numpy as np

from .degrade import FrameQualityMask
from .phantom import StrainStack

__all__ = ["write_stack", "read_stack", "write_mask", "read_mask",
           "write_tc_csv", "read_tc_csv", "write_pgm", "write_manifest",
           "read_manifest"]

MAGIC = b"STRAINSTACK\0"
VERSION = 1
_KIND_FLAGS = {"incremental": 0, "cumulative": 1}
_FLAG_KINDS = {v: k for k, v in _KIND_FLAGS.items()}


def write_stack(path, stack: StrainStack) -> None:
    n, h, w = stack.frames.shape
    header = MAGIC + struct.pack("<IIIIdB", VERSION, n, h, w,
                                 stack.sample_time_s, _KIND_FLAGS[stack.kind])
    payload = np.ascontiguousarray(stack.frames, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_stack(path) -> StrainStack:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a strain stack file (bad magic)")
        fixed = fh.read(struct.calcsize("<IIIIdB"))
        version, n, h, w, sample_time_s, kind_flag = struct.unpack("<IIIIdB", fixed)
        if version != VERSION:
            raise ValueError(f"{path}: unsupported stack format version {version}")
        if kind_flag not in _FLAG_KINDS:
            raise ValueError(f"{path}: unknown stack kind flag {kind_flag}")
        data = fh.read(n * h * w * 8)
    frames = np.frombuffer(data, dtype="<f8")
    if frames.size != n * h * w:
        raise ValueError(f"{path}: truncated stack payload")
    return StrainStack(frames.reshape(n, h, w).astype(np.float64),
                       sample_time_s, _FLAG_KINDS[kind_flag])


def write_mask(path, mask: FrameQualityMask) -> None:
    """Frame quality table as CSV: frame index, good/bad label, applied SNR."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frame,label,snr_db\n")
        for i in range(mask.n_frames):
            label = "good" if mask.good[i] else "bad"
            fh.write(f"{i},{label},{float(mask.applied_snr_db[i])!r}\n")


def read_mask(path) -> FrameQualityMask:
    good, snrs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "frame,label,snr_db":
            raise ValueError(f"{path}: not a mask file")
        for expected, line in enumerate(fh):
            idx, label, snr = line.strip().split(",")
            if int(idx) != expected:
                raise ValueError(f"{path}: frame indices must be 0..N-1 in order")
            if label not in ("good", "bad"):
                raise ValueError(f"{path}: bad label {label!r}")
            good.append(label == "good")
            snrs.append(float(snr))
    return FrameQualityMask(np.array(good, dtype=bool), np.array(snrs))


def write_tc_csv(path, values: np.ndarray) -> None:
    """H x W map as CSV, row-major, one value per cell; NaN spelled 'nan'."""
    values = np.asarray(values)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in values:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_tc_csv(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.array(rows, dtype=np.float64)


def write_pgm(path, values: np.ndarray, bounds_path=None) -> None:
    """8-bit grayscale PGM (P5) of a value map plus a text sidecar recording
    the linear mapping bounds.

    Values are scaled linearly from [vmin, vmax] (finite range of the map) to
    0..255; non-finite pixels render as 0.  The sidecar defaults to
    <path>.bounds.txt.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("PGM output expects a 2-D map")
    finite = np.isfinite(values)
    if finite.any():
        vmin = float(values[finite].min())
        vmax = float(values[finite].max())
    else:
        vmin = vmax = 0.0
    span = vmax - vmin
    scaled = np.zeros(values.shape, dtype=np.uint8)
    if span > 0:
        scaled[finite] = np.round((values[finite] - vmin) / span * 255.0).astype(np.uint8)
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
    if bounds_path is None:
        bounds_path = str(path) + ".bounds.txt"
    with open(bounds_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"vmin = {vmin!r}\nvmax = {vmax!r}\n")


def write_manifest(path, entries: dict) -> None:
    """Resolved run configuration as 'key = value' lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")


def read_manifest(path) -> dict:
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed manifest line {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            entries[key] = value
    return entries
