"""File formats: ``.hcube`` rasters, headerless CSV matrices and ``key = value`` text."""

import struct
from pathlib import Path

import numpy as np

from .core import HyperCube

CUBE_MAGIC = b"HCUB"
CUBE_VERSION = 1
_CUBE_HEADER = struct.Struct("<4sIIII")


class FormatError(ValueError):
    """A file does not follow the expected layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def cube_to_bytes(cube):
    header = _CUBE_HEADER.pack(CUBE_MAGIC, CUBE_VERSION, cube.height, cube.width, cube.bands)
    return header + np.ascontiguousarray(cube.data, dtype="<f4").tobytes()


def cube_from_bytes(buf):
    if len(buf) < _CUBE_HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} bytes", offset=len(buf))
    magic, version, h, w, l = _CUBE_HEADER.unpack_from(buf, 0)
    if magic != CUBE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CUBE_MAGIC!r}", offset=0)
    if version != CUBE_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    expected = h * w * l * 4
    body = len(buf) - _CUBE_HEADER.size
    if body != expected:
        raise FormatError(
            f"payload is {body} bytes but {h}x{w}x{l} needs {expected}",
            offset=_CUBE_HEADER.size + min(body, expected))
    data = np.frombuffer(buf, dtype="<f4", offset=_CUBE_HEADER.size).reshape(h, w, l)
    return HyperCube(data.astype(np.float64))


def save_cube(path, cube):
    Path(path).write_bytes(cube_to_bytes(cube))


def load_cube(path):
    return cube_from_bytes(Path(path).read_bytes())


def save_matrix_csv(path, M):
    """Write a 2-D array as headerless CSV; ``%.17g`` round-trips float64 exactly."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    lines = [",".join(format(v, ".17g") for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix_csv(path):
    rows = []
    text = Path(path).read_text()
    for r, line in enumerate(text.split("\n")):
        if not line.strip():
            continue
        row = []
        for c, cell in enumerate(line.split(",")):
            try:
                row.append(float(cell))
            except ValueError:
                raise FormatError(f"{path}: non-numeric cell {cell!r} at row {r + 1}, "
                                  f"column {c + 1}") from None
        if rows and len(row) != len(rows[0]):
            raise FormatError(f"{path}: row {r + 1} has {len(row)} columns, "
                              f"expected {len(rows[0])}")
        rows.append(row)
    if not rows:
        raise FormatError(f"{path}: empty matrix")
    return np.array(rows, dtype=np.float64)


def em_tensor_to_cube(em, height, width):
    """Pack an ``(L, P, N)`` tensor as a cube whose pixels hold row-major ``L x P`` matrices."""
    L, P, N = em.shape
    return HyperCube(np.transpose(em, (2, 0, 1)).reshape(height, width, L * P))


def em_tensor_from_cube(cube, materials):
    L = cube.bands // materials
    if L * materials != cube.bands:
        raise FormatError(f"{cube.bands} values per pixel is not a multiple of P={materials}")
    return np.transpose(cube.data.reshape(cube.n_pixels, L, materials), (1, 2, 0)).copy()


def write_keyvalue(path, items):
    lines = [f"{k} = {v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_keyvalue(path):
    out = {}
    for i, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}: line {i} is not 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
