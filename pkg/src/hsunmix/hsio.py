"""File formats and rendering.

Binary cube ("HSCUBE1"): an ASCII header of key=value lines terminated by a
blank line, then a raw little-endian float32 payload::

    HSCUBE1
    n1=<rows>
    n2=<cols>
    bands=<L>
    dtype=f32
    order=band-sequential
    endianness=little
    <blank line>
    <payload>

The payload is band-sequential with the row index varying fastest inside a
band: element (n1, n2, l) sits at position n1 + N1*(n2 + N2*l).  The 4-D
tensor format ("HSTEN1") is identical with an extra ``components`` key and
element order n1 + N1*(n2 + N2*(l + L*k)).  Round trips are bit-exact for
float32-valued data.

Matrices are stored as headered CSV: a first line ``hsmat,<rows>,<cols>``
followed by one comma-separated row per line, floats written with full
``repr`` precision (bit-exact round trip).

Heatmaps are written as binary PPM (P6) with the linear blue-to-red map
r = floor(255*v + 0.5), g = 0, b = floor(255*(1 - v) + 0.5) for v clamped
to [0, 1]; v = 0.5 maps to (128, 0, 128).
"""

import json
from pathlib import Path

import numpy as np

from .exceptions import (
    BadMagicError,
    CsvParseError,
    DataFormatError,
    DimensionMismatchError,
    TruncatedPayloadError,
)
from .extraction import PurePixelSets

_CUBE_MAGIC = "HSCUBE1"
_TENSOR_MAGIC = "HSTEN1"


def _write_headered_binary(path, magic, dims_kv, payload):
    lines = [magic]
    lines += [f"{k}={v}" for k, v in dims_kv]
    lines += ["dtype=f32", "order=band-sequential", "endianness=little"]
    header = "\n".join(lines) + "\n\n"
    Path(path).write_bytes(header.encode("ascii") + payload)


def _read_headered_binary(path, magic, dim_keys):
    data = Path(path).read_bytes()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise DataFormatError(f"{path}: missing blank line after header")
    try:
        header = data[:sep].decode("ascii")
    except UnicodeDecodeError as e:
        raise DataFormatError(f"{path}: header is not ASCII") from e
    lines = header.splitlines()
    if not lines or lines[0] != magic:
        got = lines[0] if lines else ""
        raise BadMagicError(f"{path}: expected magic {magic!r}, got {got!r}")
    kv = {}
    for line in lines[1:]:
        if "=" not in line:
            raise DataFormatError(f"{path}: malformed header line {line!r}")
        k, v = line.split("=", 1)
        kv[k] = v
    dims = []
    for key in dim_keys:
        if key not in kv:
            raise DataFormatError(f"{path}: missing header key {key!r}")
        try:
            d = int(kv[key])
        except ValueError as e:
            raise DataFormatError(f"{path}: bad integer for {key!r}") from e
        if d < 1:
            raise DataFormatError(f"{path}: {key} must be positive, got {d}")
        dims.append(d)
    if kv.get("dtype", "f32") != "f32":
        raise DataFormatError(f"{path}: unsupported dtype {kv.get('dtype')!r}")
    payload = data[sep + 2 :]
    expected = 4 * int(np.prod(dims))
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload truncated, expected {expected} bytes but file "
            f"ends at byte offset {sep + 2 + len(payload)} "
            f"({expected - len(payload)} bytes short)"
        )
    if len(payload) > expected:
        raise DimensionMismatchError(
            f"{path}: payload has {len(payload)} bytes, header dims "
            f"{tuple(dims)} require {expected}"
        )
    arr = np.frombuffer(payload, dtype="<f4")
    return arr.reshape(dims, order="F").astype(np.float64)


def write_cube(path, cube):
    cube = np.asarray(cube)
    if cube.ndim != 3:
        raise ValueError("cube must be a 3-D array (N1, N2, L)")
    n1, n2, nb = cube.shape
    payload = np.asarray(cube, dtype="<f4").tobytes(order="F")
    _write_headered_binary(
        path, _CUBE_MAGIC, [("n1", n1), ("n2", n2), ("bands", nb)], payload
    )


def read_cube(path):
    return _read_headered_binary(path, _CUBE_MAGIC, ("n1", "n2", "bands"))


def write_tensor4(path, t):
    t = np.asarray(t)
    if t.ndim != 4:
        raise ValueError("tensor must be a 4-D array (N1, N2, L, R)")
    n1, n2, nb, r = t.shape
    payload = np.asarray(t, dtype="<f4").tobytes(order="F")
    _write_headered_binary(
        path,
        _TENSOR_MAGIC,
        [("n1", n1), ("n2", n2), ("bands", nb), ("components", r)],
        payload,
    )


def read_tensor4(path):
    return _read_headered_binary(
        path, _TENSOR_MAGIC, ("n1", "n2", "bands", "components")
    )


def write_matrix_csv(path, m):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    rows, cols = m.shape
    lines = [f"hsmat,{rows},{cols}"]
    for row in m:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_matrix_csv(path):
    text = Path(path).read_text(encoding="ascii")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    head = lines[0].split(",")
    if head[0] != "hsmat" or len(head) != 3:
        raise BadMagicError(
            f"{path}: expected header 'hsmat,<rows>,<cols>', got {lines[0]!r}"
        )
    try:
        rows, cols = int(head[1]), int(head[2])
    except ValueError as e:
        raise DataFormatError(f"{path}: bad dimensions in header") from e
    if len(lines) - 1 != rows:
        raise DimensionMismatchError(
            f"{path}: header declares {rows} rows, found {len(lines) - 1}"
        )
    out = np.empty((rows, cols))
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != cols:
            raise DimensionMismatchError(
                f"{path}: row {i} has {len(cells)} cells, expected {cols}"
            )
        for j, cell in enumerate(cells):
            try:
                out[i, j] = float(cell)
            except ValueError as e:
                raise CsvParseError(
                    f"{path}: non-numeric value {cell.strip()!r} at row {i}, "
                    f"column {j}"
                ) from e
    return out


def write_purepixels(path, pure):
    doc = {
        "threshold_used": pure.threshold_used,
        "sets": [[[int(i), int(j)] for (i, j) in s] for s in pure.sets],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="ascii")


def read_purepixels(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="ascii"))
        sets = [[(int(i), int(j)) for i, j in s] for s in doc["sets"]]
        return PurePixelSets(sets=sets, threshold_used=float(doc["threshold_used"]))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"{path}: bad pure-pixel file: {e}") from e


def read_keyvalue_config(path, valid_keys):
    """Parse a key=value config file; unknown keys raise with the valid list."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in valid_keys:
            raise ValueError(
                f"{path}:{lineno}: unknown key {key!r}; valid keys: "
                + ", ".join(sorted(valid_keys))
            )
        out[key] = value
    return out


def render_heatmap(field, path):
    """Write an (N1, N2) map as a PPM image with the documented colormap."""
    field = np.asarray(field, dtype=float)
    if field.ndim != 2:
        raise ValueError("field must be a 2-D array")
    if not np.all(np.isfinite(field)):
        raise ValueError("field contains non-finite values")
    v = np.clip(field, 0.0, 1.0)
    red = np.floor(255.0 * v + 0.5).astype(np.uint8)
    blue = np.floor(255.0 * (1.0 - v) + 0.5).astype(np.uint8)
    rgb = np.zeros(field.shape + (3,), dtype=np.uint8)
    rgb[:, :, 0] = red
    rgb[:, :, 2] = blue
    n1, n2 = field.shape
    header = f"P6\n{n2} {n1}\n255\n".encode("ascii")
    Path(path).write_bytes(header + rgb.tobytes())
