"""File formats: dense CSV, raw binary matrices, group files, point clouds, regularizer flags."""
from __future__ import annotations

import hashlib
import re
import struct
from pathlib import Path

import numpy as np

from .datagen import PointCloud
from .groups import GroupPartition
from .regularizers import Forbidden, GroupLasso, Hypentropic, Quadratic, Regularizer, WeightedL1, Zero

MAGIC = b"OTPB"
_HEADER = struct.Struct("<4sIII")  # magic, m, n, reserved (keeps 16-byte alignment)


class FormatError(ValueError):
    pass


def read_matrix(path) -> np.ndarray:
    """Dense matrix from CSV (one row per line) or OTPB binary, chosen by magic bytes."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_binary(path)
    try:
        M = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return M


def read_vector(path) -> np.ndarray:
    M = read_matrix(path)
    if 1 not in M.shape:
        raise FormatError(f"{path}: expected a vector, got shape {M.shape}")
    return M.ravel()


def write_matrix(path, M, fmt: str = "%.17g") -> None:
    np.savetxt(path, np.atleast_2d(np.asarray(M, dtype=np.float64)), delimiter=",", fmt=fmt)


def write_vector(path, v, fmt: str = "%.17g") -> None:
    np.savetxt(path, np.asarray(v, dtype=np.float64).reshape(-1, 1), fmt=fmt)


def write_binary(path, M) -> None:
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim != 2:
        raise FormatError("binary format stores 2-D matrices only")
    m, n = M.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, m, n, 0))
        fh.write(M.tobytes())


def read_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, m, n, _ = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != m * n:
        raise FormatError(f"{path}: header says {m}x{n}, payload has {data.size} values")
    return data.reshape(m, n).astype(np.float64)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# --- group files -----------------------------------------------------------
#
#   # comment
#   g <label>: (i,j) (i,j) ...
#   cols <label>: j1..j2 rows i1..i2
#
# The ``cols`` form creates one group per column in the inclusive range,
# each holding the inclusive row range.  Indices are zero-based.

_PAIR = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_COLS = re.compile(r"^cols\s+(\S+?)\s*:\s*(\d+)\.\.(\d+)\s+rows\s+(\d+)\.\.(\d+)\s*$")
_G = re.compile(r"^g\s+(\S+?)\s*:(.*)$")


def parse_groups(text: str, shape) -> GroupPartition:
    groups, labels = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        mc = _COLS.match(line)
        if mc:
            label, j1, j2, i1, i2 = mc.group(1), *map(int, mc.groups()[1:])
            if j2 < j1 or i2 < i1:
                raise FormatError(f"line {lineno}: empty range")
            for j in range(j1, j2 + 1):
                groups.append([(i, j) for i in range(i1, i2 + 1)])
                labels.append(f"{label}@{j}")
            continue
        mg = _G.match(line)
        if mg:
            body = mg.group(2)
            pairs = [(int(a), int(b)) for a, b in _PAIR.findall(body)]
            if not pairs or _PAIR.sub("", body).strip():
                raise FormatError(f"line {lineno}: expected '(i,j)' pairs")
            groups.append(pairs)
            labels.append(mg.group(1))
            continue
        raise FormatError(f"line {lineno}: cannot parse {raw!r}")
    try:
        return GroupPartition.from_entries(tuple(shape), groups, labels)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def read_groups(path, shape) -> GroupPartition:
    return parse_groups(Path(path).read_text(), shape)


# --- point clouds ----------------------------------------------------------

def read_points(path) -> PointCloud:
    """CSV with header ``x0,x1,...[,label]``."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or not header[0].startswith("x"):
        raise FormatError(f"{path}: missing 'x0,...' header")
    has_label = header[-1] == "label"
    ncoord = len(header) - has_label
    raw = np.loadtxt(path, delimiter=",", skiprows=1, dtype=str, ndmin=2)
    if raw.shape[1] != len(header):
        raise FormatError(f"{path}: rows have {raw.shape[1]} fields, header has {len(header)}")
    pts = raw[:, :ncoord].astype(np.float64)
    labels = None
    if has_label:
        col = raw[:, -1]
        try:
            labels = col.astype(np.int64)
        except ValueError:
            labels = col
    return PointCloud(pts, labels)


def write_points(path, cloud: PointCloud, fmt: str = "%.17g") -> None:
    d = cloud.dim
    header = ",".join(f"x{k}" for k in range(d))
    with open(path, "w") as fh:
        fh.write(header + (",label" if cloud.labels is not None else "") + "\n")
        for i, row in enumerate(cloud.points):
            fields = [fmt % v for v in row]
            if cloud.labels is not None:
                fields.append(str(cloud.labels[i]))
            fh.write(",".join(fields) + "\n")


# --- regularizer flag ------------------------------------------------------

_KEYS = {
    "none": {},
    "quad": {"alpha": float},
    "gl": {"lambda": float},
    "wl1": {"w": float, "weights": str},
    "forbid": {"mask": str},
    "hypent": {"beta": float},
}


def parse_reg_flag(flag: str) -> tuple[str, dict]:
    """Split ``name:key=val[,key=val]`` into (name, typed params)."""
    name, _, rest = flag.partition(":")
    name = name.strip()
    if name not in _KEYS:
        raise ValueError(f"--reg: unknown regularizer {name!r} (choose from {', '.join(_KEYS)})")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"--reg: expected key=value, got {item!r}")
        if key not in _KEYS[name]:
            raise ValueError(f"--reg: unknown key {key!r} for {name!r}")
        try:
            params[key] = _KEYS[name][key](val)
        except ValueError:
            raise ValueError(f"--reg: bad value {val!r} for {key!r}") from None
    return name, params


def build_regularizer(flag: str, shape, groups: GroupPartition | None = None) -> Regularizer:
    name, kw = parse_reg_flag(flag)
    try:
        if name == "none":
            return Zero()
        if name == "quad":
            return Quadratic(kw.get("alpha", 1.0))
        if name == "gl":
            if groups is None:
                raise ValueError("--reg gl needs --groups")
            return GroupLasso(kw.get("lambda", 1e-3), groups)
        if name == "wl1":
            if "weights" in kw:
                w = read_matrix(kw["weights"])
                if w.shape != tuple(shape):
                    raise ValueError(f"--reg: weights shape {w.shape} != cost shape {tuple(shape)}")
                return WeightedL1(w)
            return WeightedL1(np.float64(kw.get("w", 1.0)))
        if name == "forbid":
            if "mask" not in kw:
                raise ValueError("--reg forbid needs mask=<file>")
            mask = read_matrix(kw["mask"]) != 0
            if mask.shape != tuple(shape):
                raise ValueError(f"--reg: mask shape {mask.shape} != cost shape {tuple(shape)}")
            return Forbidden(mask)
        return Hypentropic(kw.get("beta", 1.0))
    except ValueError as exc:
        msg = str(exc)
        raise ValueError(msg if msg.startswith("--reg") else f"--reg: {msg}") from None
