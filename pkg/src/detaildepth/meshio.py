"""Depth, normal, mask and heatmap files, and OBJ export of depth maps.

PFM
    ``Pf`` (one channel) or ``PF`` (three channels), ``width height``, then a
    scale line whose sign gives the byte order (negative: little-endian, as
    written here), then float32 rows stored bottom-to-top. Masked-out pixels
    are NaN.

PNG-16
    Depth in millimeters, 0 marks an invalid pixel, so depths above
    65.535 m are not representable. Normal maps store ``(n + 1) / 2`` per
    channel scaled to 0..65535 in x, y, z order; an all-zero pixel is
    invalid. An optional sidecar mask PNG (any bit depth, nonzero = valid)
    further restricts the mask on read.

Heatmap stack
    A ``PFMSTACK 1`` line, a ``width height bins channels`` line, then
    ``channels * bins`` single-channel PFM images, channel-major, each the
    ``height x width`` slice of one depth bin.
"""
from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .core import UNIT_TOL, CameraModel, DepthGrid, NormalGrid, back_project_grid
from .errors import EmptyInputError, FormatError, OutOfRangeError
from .regression import VolumeHeatmap

__all__ = [
    "MeshExportParams",
    "MeshStats",
    "read_pfm",
    "write_pfm",
    "read_depth",
    "write_depth",
    "read_depth_pfm",
    "write_depth_pfm",
    "read_depth_png",
    "write_depth_png",
    "read_mask_png",
    "write_mask_png",
    "read_normals",
    "write_normals",
    "read_normals_pfm",
    "write_normals_pfm",
    "read_normals_png",
    "write_normals_png",
    "read_heatmap",
    "write_heatmap",
    "write_obj",
    "mesh_from_depth",
]

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
MAX_PNG_DEPTH_M = 65.535
UNIT_WARN_TOL = 1e-2
PNG_ZERO_TOL = 4.0 / 65535.0


# --- PFM ---------------------------------------------------------------


def _read_token_line(buf, pos, path):
    end = buf.find(b"\n", pos)
    if end < 0:
        raise FormatError("truncated header", path, len(buf))
    return buf[pos:end].decode("ascii", errors="replace").strip(), end + 1


def _parse_pfm(buf, pos, path):
    """Decode one PFM image starting at ``pos``; returns ``(array, next_pos)``."""
    start = pos
    magic, pos = _read_token_line(buf, pos, path)
    if magic == "PF":
        channels = 3
    elif magic == "Pf":
        channels = 1
    else:
        raise FormatError(f"bad PFM magic {magic!r}", path, start)
    dims_at = pos
    dims, pos = _read_token_line(buf, pos, path)
    try:
        width, height = (int(t) for t in dims.split())
    except ValueError:
        raise FormatError(f"bad PFM dimensions {dims!r}", path, dims_at) from None
    if width < 1 or height < 1:
        raise FormatError(f"bad PFM dimensions {dims!r}", path, dims_at)
    scale_at = pos
    scale_line, pos = _read_token_line(buf, pos, path)
    try:
        scale = float(scale_line)
    except ValueError:
        raise FormatError(f"bad PFM scale {scale_line!r}", path, scale_at) from None
    if scale == 0:
        raise FormatError("PFM scale must be nonzero", path, scale_at)
    dtype = "<f4" if scale < 0 else ">f4"
    nbytes = width * height * channels * 4
    if pos + nbytes > len(buf):
        raise FormatError(
            f"truncated PFM data: need {nbytes} bytes, {len(buf) - pos} available", path, len(buf))
    data = np.frombuffer(buf, dtype=dtype, count=width * height * channels, offset=pos)
    img = data.reshape(height, width, channels)[::-1].astype(np.float32)
    if channels == 1:
        img = img[..., 0]
    return img, pos + nbytes


def _encode_pfm(img) -> bytes:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        magic, body = b"Pf", img
    elif img.ndim == 3 and img.shape[2] == 3:
        magic, body = b"PF", img
    else:
        raise ValueError(f"PFM holds 1 or 3 channels, got shape {img.shape}")
    h, w = img.shape[:2]
    header = magic + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n"
    return header + np.ascontiguousarray(body[::-1], dtype="<f4").tobytes()


def read_pfm(path) -> np.ndarray:
    """float32 array, ``(h, w)`` or ``(h, w, 3)``, top row first."""
    path = Path(path)
    buf = path.read_bytes()
    img, end = _parse_pfm(buf, 0, path)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after PFM data", path, end)
    return img


def write_pfm(path, img):
    Path(path).write_bytes(_encode_pfm(img))


def write_depth_pfm(path, grid: DepthGrid):
    write_pfm(path, np.where(grid.mask, grid.values, np.nan))


def read_depth_pfm(path, mask_path=None) -> DepthGrid:
    img = read_pfm(path)
    if img.ndim != 2:
        raise FormatError(f"expected a single-channel depth PFM, got {img.shape[2]} channels", path)
    mask = np.isfinite(img)
    if mask_path is not None:
        mask &= _sidecar(mask_path, img.shape)
    return DepthGrid(img.astype(np.float64), mask)


# --- PNG ---------------------------------------------------------------


def _check_png(buf, path):
    """Walk the chunk list so truncation is reported with a byte offset."""
    if len(buf) < 8 or buf[:8] != PNG_SIGNATURE:
        raise FormatError("not a PNG file (bad signature)", path, 0)
    pos = 8
    while True:
        if pos + 8 > len(buf):
            raise FormatError("truncated PNG chunk header", path, pos)
        length, ctype = struct.unpack(">I4s", buf[pos:pos + 8])
        if pos + 12 + length > len(buf):
            raise FormatError(f"truncated PNG chunk {ctype.decode('latin-1')!r}", path, pos)
        pos += 12 + length
        if ctype == b"IEND":
            return


def _read_png(path, flags=cv2.IMREAD_UNCHANGED):
    path = Path(path)
    buf = path.read_bytes()
    _check_png(buf, path)
    img = cv2.imdecode(np.frombuffer(buf, dtype=np.uint8), flags)
    if img is None:
        raise FormatError("PNG decoding failed", path)
    return img


def _write_png(path, img):
    ok, data = cv2.imencode(".png", img, [cv2.IMWRITE_PNG_COMPRESSION, 6])
    if not ok:
        raise FormatError("PNG encoding failed", path)
    Path(path).write_bytes(data.tobytes())


def _sidecar(mask_path, shape):
    img = _read_png(mask_path)
    if img.ndim == 3:
        img = img.max(axis=2)
    if img.shape != shape:
        raise FormatError(f"mask shape {img.shape} does not match image shape {shape}", mask_path)
    return img != 0


def write_depth_png(path, grid: DepthGrid):
    """16-bit millimeter depth; invalid pixels and depths that round to 0 mm are 0."""
    valid = grid.valid_values()
    if valid.size and (valid.max() > MAX_PNG_DEPTH_M or valid.min() < 0):
        bad = np.argwhere(grid.mask & ((grid.filled() > MAX_PNG_DEPTH_M) | (grid.filled() < 0)))[0]
        raise OutOfRangeError(
            f"depth {grid.values[tuple(bad)]:.4f} m at pixel {tuple(int(i) for i in bad)} "
            f"outside PNG-16 range [0, {MAX_PNG_DEPTH_M}] m")
    mm = np.where(grid.mask, np.rint(grid.filled() * 1000.0), 0).astype(np.uint16)
    _write_png(path, mm)


def read_depth_png(path, mask_path=None) -> DepthGrid:
    img = _read_png(path)
    if img.ndim != 2 or img.dtype != np.uint16:
        raise FormatError(f"expected a single-channel 16-bit PNG, got {img.dtype} {img.shape}", path)
    mask = img != 0
    if mask_path is not None:
        mask &= _sidecar(mask_path, img.shape)
    return DepthGrid(img.astype(np.float64) / 1000.0, mask)


def write_mask_png(path, mask):
    _write_png(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def read_mask_png(path) -> np.ndarray:
    img = _read_png(path)
    if img.ndim == 3:
        img = img.max(axis=2)
    return img != 0


# --- normals -----------------------------------------------------------


def _orient_loaded(n, mask, path, zero_tol, keep_unit=False):
    length = np.linalg.norm(np.where(mask[..., None], n, 0.0), axis=-1)
    zero = mask & (length < zero_tol)
    if zero.any():
        r, c = np.argwhere(zero)[0]
        raise FormatError(f"zero-length normal at pixel ({r}, {c})", path)
    off = mask & (np.abs(length - 1.0) > UNIT_WARN_TOL)
    if off.any():
        logger.warning("%s: %d normals deviate from unit length by more than %g; renormalised",
                       path, int(off.sum()), UNIT_WARN_TOL)
    if keep_unit:
        # float32 storage leaves unit vectors a few 1e-8 off; renormalising
        # them in float64 would break bit-exact round trips
        v = n[mask]
        if np.all(np.abs(length[mask] - 1.0) <= UNIT_TOL) and np.all(v[:, 2] < 0.0):
            return NormalGrid(n, mask)
    return NormalGrid.oriented(n, mask)


def write_normals_pfm(path, normals: NormalGrid):
    write_pfm(path, np.where(normals.mask[..., None], normals.normals, np.nan))


def read_normals_pfm(path, mask_path=None) -> NormalGrid:
    img = read_pfm(path)
    if img.ndim != 3:
        raise FormatError("expected a three-channel normal PFM", path)
    n = img.astype(np.float64)
    mask = np.all(np.isfinite(n), axis=-1)
    if mask_path is not None:
        mask &= _sidecar(mask_path, mask.shape)
    return _orient_loaded(n, mask, path, 1e-12, keep_unit=True)


def write_normals_png(path, normals: NormalGrid):
    enc = np.rint((normals.filled() + 1.0) * 0.5 * 65535.0).astype(np.uint16)
    enc[~normals.mask] = 0
    _write_png(path, enc[..., ::-1])  # OpenCV stores BGR


def read_normals_png(path, mask_path=None) -> NormalGrid:
    img = _read_png(path)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint16:
        raise FormatError(f"expected a 3-channel 16-bit PNG, got {img.dtype} {img.shape}", path)
    raw = img[..., ::-1]
    mask = np.any(raw != 0, axis=-1)
    if mask_path is not None:
        mask &= _sidecar(mask_path, mask.shape)
    n = raw.astype(np.float64) / 65535.0 * 2.0 - 1.0
    # the zero vector sits between two codes; anything within a few codes of it is zero
    return _orient_loaded(n, mask, path, PNG_ZERO_TOL)


# --- format dispatch -----------------------------------------------------


def _suffix(path):
    s = Path(path).suffix.lower()
    if s not in (".pfm", ".png"):
        raise FormatError(f"unsupported file extension {s!r} (expected .pfm or .png)", path)
    return s


def read_depth(path, mask_path=None) -> DepthGrid:
    if _suffix(path) == ".pfm":
        return read_depth_pfm(path, mask_path)
    return read_depth_png(path, mask_path)


def write_depth(path, grid: DepthGrid):
    if _suffix(path) == ".pfm":
        write_depth_pfm(path, grid)
    else:
        write_depth_png(path, grid)


def read_normals(path, mask_path=None) -> NormalGrid:
    if _suffix(path) == ".pfm":
        return read_normals_pfm(path, mask_path)
    return read_normals_png(path, mask_path)


def write_normals(path, normals: NormalGrid):
    if _suffix(path) == ".pfm":
        write_normals_pfm(path, normals)
    else:
        write_normals_png(path, normals)


# --- heatmap stack -------------------------------------------------------

_STACK_MAGIC = "PFMSTACK 1"


def write_heatmap(path, hm: VolumeHeatmap):
    c, h, w, b = hm.values.shape
    out = io.BytesIO()
    out.write(f"{_STACK_MAGIC}\n{w} {h} {b} {c}\n".encode())
    for ch in range(c):
        for k in range(b):
            out.write(_encode_pfm(hm.values[ch, :, :, k]))
    Path(path).write_bytes(out.getvalue())


def read_heatmap(path) -> VolumeHeatmap:
    """Read a heatmap stack; values come back as float32-rounded float64."""
    path = Path(path)
    buf = path.read_bytes()
    magic, pos = _read_token_line(buf, 0, path)
    if magic != _STACK_MAGIC:
        raise FormatError(f"bad heatmap stack magic {magic!r}", path, 0)
    dims_at = pos
    dims, pos = _read_token_line(buf, pos, path)
    try:
        w, h, b, c = (int(t) for t in dims.split())
    except ValueError:
        raise FormatError(f"bad heatmap dimensions {dims!r}", path, dims_at) from None
    if min(w, h, b, c) < 1:
        raise FormatError(f"bad heatmap dimensions {dims!r}", path, dims_at)
    out = np.empty((c, h, w, b), dtype=np.float64)
    for ch in range(c):
        for k in range(b):
            at = pos
            img, pos = _parse_pfm(buf, pos, path)
            if img.shape != (h, w):
                raise FormatError(f"slice shape {img.shape} does not match header {(h, w)}", path, at)
            out[ch, :, :, k] = img
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after heatmap stack", path, pos)
    return VolumeHeatmap(out)


# --- OBJ -----------------------------------------------------------------


@dataclass(frozen=True)
class MeshExportParams:
    discontinuity_threshold: float = 0.05
    flip_faces: bool = False

    def __post_init__(self):
        if not self.discontinuity_threshold > 0:
            raise ValueError(
                f"discontinuity_threshold must be > 0, got {self.discontinuity_threshold}")


@dataclass(frozen=True)
class MeshStats:
    vertices: int
    faces: int


def mesh_from_depth(depth: DepthGrid, camera: CameraModel = CameraModel(),
                    params: MeshExportParams = MeshExportParams()):
    """Vertices ``(n, 3)`` and 0-based triangles ``(m, 3)``.

    One vertex per valid pixel in row-major order. Each 2x2 block of valid
    pixels yields up to two triangles; a triangle is dropped when any of its
    edges spans a depth jump above the threshold. Default winding is
    counter-clockwise seen from the camera.
    """
    if depth.count == 0:
        raise EmptyInputError("cannot mesh a depth grid with no valid pixels")
    x, y, z = back_project_grid(depth, camera)
    mask = depth.mask
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[mask] = np.arange(depth.count)
    verts = np.stack([x[mask], y[mask], z[mask]], axis=1)

    h, w = mask.shape
    quad = mask[:-1, :-1] & mask[:-1, 1:] & mask[1:, :-1] & mask[1:, 1:]
    r, c = np.nonzero(quad)
    a = (r, c)
    b = (r, c + 1)
    cc = (r + 1, c)
    d = (r + 1, c + 1)
    thr = params.discontinuity_threshold

    def jump(p, q):
        return np.abs(z[p] - z[q]) > thr

    t1_ok = ~(jump(a, cc) | jump(cc, b) | jump(b, a))
    t2_ok = ~(jump(b, cc) | jump(cc, d) | jump(d, b))
    t1 = np.stack([index[a], index[cc], index[b]], axis=1)
    t2 = np.stack([index[b], index[cc], index[d]], axis=1)
    # interleave per quad so faces stay in row-major quad order
    faces = np.empty((len(r), 2, 3), dtype=np.int64)
    faces[:, 0] = t1
    faces[:, 1] = t2
    keep = np.stack([t1_ok, t2_ok], axis=1)
    faces = faces[keep]
    if params.flip_faces:
        faces = faces[:, ::-1]
    return verts, faces


def write_obj(path, depth: DepthGrid, camera: CameraModel = CameraModel(),
              params: MeshExportParams = MeshExportParams()) -> MeshStats:
    verts, faces = mesh_from_depth(depth, camera, params)
    lines = [f"# {len(verts)} vertices, {len(faces)} faces"]
    lines += [f"v {vx:.9g} {vy:.9g} {vz:.9g}" for vx, vy, vz in verts]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in faces]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
    return MeshStats(len(verts), len(faces))
