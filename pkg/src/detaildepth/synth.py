"""Procedural surfaces with analytic normals, and depth corruptions.

Random draws use SplitMix64 in counter mode: draw ``k`` (0-based) of a
stream with seed ``s`` is ``mix(s + (k + 1) * 0x9E3779B97F4A7C15)`` modulo
2**64, where ``mix`` is the SplitMix64 finaliser. Uniforms are
``((x >> 11) + 0.5) / 2**53``; normals use the cosine branch of Box-Muller
on consecutive uniform pairs. The scheme is stateless, so fixtures are
reproducible from the seed alone.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .core import CameraModel, DepthGrid, NormalGrid

__all__ = [
    "KINDS",
    "CORRUPTIONS",
    "SurfaceSpec",
    "generate",
    "corrupt",
    "splitmix64",
    "uniforms",
    "normals_rng",
    "parse_kv",
    "format_kv",
]

KINDS = ("plane", "ramp", "sine", "sphere-cap", "wrinkled-plane")
CORRUPTIONS = ("smooth-bias", "flatten", "seeded-noise")

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed, count, start=0) -> np.ndarray:
    """``count`` raw 64-bit outputs of the counter-mode stream."""
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2 ** 64) + k * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(seed, count, start=0) -> np.ndarray:
    """Uniforms in the open interval (0, 1)."""
    return ((splitmix64(seed, count, start) >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0 ** 53


def normals_rng(seed, count) -> np.ndarray:
    """Standard normal draws (Box-Muller, cosine branch)."""
    u = uniforms(seed, 2 * count).reshape(count, 2)
    return np.sqrt(-2.0 * np.log(u[:, 0])) * np.cos(2.0 * math.pi * u[:, 1])


@dataclass(frozen=True)
class SurfaceSpec:
    """Analytic test surface sampled on a ``height x width`` raster.

    Coordinates are metric and centred on the middle pixel, except that a
    sine has zero phase at column 0. ``depth`` is the depth at the origin
    (the apex for a sphere cap). Slopes are ``dZ/dX`` and
    ``dZ/dY``; ``period`` is in pixels at the centre depth; ``cap_angle``
    is the half-angle, in degrees, of the visible sphere cap.
    """

    kind: str = "plane"
    width: int = 64
    height: int = 64
    depth: float = 2.0
    slope_x: float = 0.0
    slope_y: float = 0.0
    amplitude: float = 0.05
    period: float = 16.0
    radius: float = 0.5
    cap_angle: float = 60.0
    wrinkles: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}; expected one of {KINDS}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"raster must be at least 1x1, got {self.height}x{self.width}")
        if not self.depth > 0:
            raise ValueError(f"depth must be > 0, got {self.depth}")
        if self.kind in ("sine", "wrinkled-plane"):
            if not self.amplitude > 0:
                raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
            if not self.period > 0:
                raise ValueError(f"period must be > 0, got {self.period}")
        if self.kind == "wrinkled-plane" and self.wrinkles < 1:
            raise ValueError(f"wrinkles must be >= 1, got {self.wrinkles}")
        if self.kind == "ramp" and self.slope_x == 0 and self.slope_y == 0:
            raise ValueError("a ramp needs a nonzero slope_x or slope_y")
        if self.kind == "sphere-cap":
            if not self.radius > 0:
                raise ValueError(f"radius must be > 0, got {self.radius}")
            if not 0 < self.cap_angle < 90:
                raise ValueError(f"cap_angle must lie in (0, 90) degrees, got {self.cap_angle}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")

    @classmethod
    def from_kv(cls, mapping) -> SurfaceSpec:
        return cls(**_coerce(cls, mapping))


def _coerce(cls, mapping):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in mapping.items():
        if key not in types:
            raise ValueError(f"unknown key {key!r} for {cls.__name__}")
        t = types[key]
        try:
            if t in ("int", int):
                out[key] = int(raw)
            elif t in ("float", float):
                out[key] = float(raw)
            else:
                out[key] = str(raw)
        except ValueError as exc:
            raise ValueError(f"{key}: cannot parse {raw!r} ({exc})") from None
    return out


def _wrinkle_terms(spec, pitch):
    u = uniforms(spec.seed, 4 * spec.wrinkles).reshape(spec.wrinkles, 4)
    amp = spec.amplitude / spec.wrinkles * (0.5 + u[:, 0])
    wavelength = spec.period * pitch * (0.75 + 0.5 * u[:, 1])
    theta = math.pi * u[:, 2]
    phase = 2.0 * math.pi * u[:, 3]
    return amp, 2.0 * math.pi / wavelength, np.cos(theta), np.sin(theta), phase


def _height_field(spec, pitch):
    """``f(X', Y') -> (Z, dZ/dX, dZ/dY)`` for the height-field kinds."""
    a, b = spec.slope_x, spec.slope_y
    if spec.kind in ("plane", "ramp"):
        def f(x, y):
            return spec.depth + a * x + b * y, np.full_like(x, a), np.full_like(x, b)
    elif spec.kind == "sine":
        w = 2.0 * math.pi / (spec.period * pitch)

        def f(x, y):
            z = spec.depth + a * x + b * y + spec.amplitude * np.sin(w * x)
            return z, a + spec.amplitude * w * np.cos(w * x), np.full_like(x, b)
    else:
        amp, k, cs, sn, ph = _wrinkle_terms(spec, pitch)

        def f(x, y):
            z = spec.depth + a * x + b * y
            fx = np.full_like(x, a)
            fy = np.full_like(x, b)
            for i in range(len(amp)):
                arg = k[i] * (x * cs[i] + y * sn[i]) + ph[i]
                z = z + amp[i] * np.sin(arg)
                d = amp[i] * k[i] * np.cos(arg)
                fx = fx + d * cs[i]
                fy = fy + d * sn[i]
            return z, fx, fy
    return f


def generate(spec: SurfaceSpec, camera: CameraModel = CameraModel()):
    """Sample ``spec`` through ``camera``; returns ``(DepthGrid, NormalGrid)``.

    Normals are analytic, not fitted.
    """
    rows, cols = np.indices((spec.height, spec.width), dtype=np.float64)
    cr, cc = (spec.height - 1) / 2.0, (spec.width - 1) / 2.0
    mask = np.ones(rows.shape, dtype=bool)

    if spec.kind == "sphere-cap":
        z, n, mask = _sphere(spec, camera, rows, cols, cr, cc)
        return DepthGrid(z, mask), NormalGrid(n, mask)

    pitch = camera.pixel_pitch(spec.depth)
    f = _height_field(spec, pitch)
    # the sine runs from column 0 so that Z = A sin(2 pi col / period)
    xc, yc = camera.xy(cr, 0.0 if spec.kind == "sine" else cc, spec.depth)
    if camera.is_orthographic:
        x, y = camera.xy(rows, cols, 1.0)
        z, fx, fy = f(x - xc, y - yc)
    else:
        # solve z = f(X(z), Y(z)) along each ray by fixed-point iteration
        z = np.full(rows.shape, float(spec.depth))
        for _ in range(200):
            x, y = camera.xy(rows, cols, z)
            z_new, fx, fy = f(x - xc, y - yc)
            if np.max(np.abs(z_new - z)) < 1e-14 * spec.depth:
                z = z_new
                break
            z = z_new
        x, y = camera.xy(rows, cols, z)
        z, fx, fy = f(x - xc, y - yc)
    n = np.stack([fx, fy, -np.ones_like(fx)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return DepthGrid(z, mask), NormalGrid(n, mask)


def _sphere(spec, camera, rows, cols, cr, cc):
    r = spec.radius
    rho_max = r * math.sin(math.radians(spec.cap_angle))
    zc = spec.depth + r
    if camera.is_orthographic:
        x, y = camera.xy(rows, cols, 1.0)
        xc, yc = camera.xy(cr, cc, 1.0)
        dx, dy = x - xc, y - yc
        rho2 = dx * dx + dy * dy
        mask = rho2 <= rho_max * rho_max
        dz = -np.sqrt(np.maximum(r * r - rho2, 0.0))
        z = zc + dz
    else:
        # sphere centred on the ray through the middle pixel
        cx, cy = camera.xy(cr, cc, zc)
        ux, uy = camera.xy(rows, cols, 1.0)
        dd = ux * ux + uy * uy + 1.0
        dc = ux * cx + uy * cy + zc
        disc = dc * dc - dd * (cx * cx + cy * cy + zc * zc - r * r)
        t = (dc - np.sqrt(np.maximum(disc, 0.0))) / dd
        z = t
        dx, dy, dz = ux * t - cx, uy * t - cy, t - zc
        mask = (disc > 0) & (-dz >= r * math.cos(math.radians(spec.cap_angle)))
    n = np.stack([dx, dy, dz], axis=-1) / r
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    z = np.where(mask, z, np.nan)
    n = np.where(mask[..., None], n, np.nan)
    return z, n, mask


def corrupt(depth: DepthGrid, mode: str, magnitude: float, *, seed: int = 0,
            sigma_space: float = 8.0, sigma_depth: float = 0.10) -> DepthGrid:
    """Degrade a depth map.

    ``smooth-bias`` blends towards a bilateral blur (``magnitude`` in [0, 1],
    1 is the full blur). ``flatten`` scales deviations from the masked mean
    by ``1 - magnitude``. ``seeded-noise`` adds Gaussian noise of standard
    deviation ``magnitude`` meters, drawn in row-major order over valid
    pixels.
    """
    if mode not in CORRUPTIONS:
        raise ValueError(f"unknown corruption {mode!r}; expected one of {CORRUPTIONS}")
    if not (np.isfinite(magnitude) and magnitude >= 0):
        raise ValueError(f"magnitude must be a finite value >= 0, got {magnitude}")
    if mode in ("smooth-bias", "flatten") and magnitude > 1:
        raise ValueError(f"{mode} magnitude must lie in [0, 1], got {magnitude}")
    if magnitude == 0:
        return depth.with_values(depth.values)
    v = depth.values
    if mode == "smooth-bias":
        from .decompose import BilateralParams, bilateral_base

        blurred = bilateral_base(depth, BilateralParams(sigma_depth, sigma_space)).values
        return depth.with_values(v + magnitude * (blurred - v))
    if mode == "flatten":
        mean = depth.valid_values().mean()
        return depth.with_values(mean + (1.0 - magnitude) * (v - mean))
    out = v.copy()
    out[depth.mask] += magnitude * normals_rng(seed, depth.count)
    return depth.with_values(out)


def parse_kv(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_kv(obj) -> str:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            for sub in dataclasses.fields(value):
                lines.append(f"{f.name}.{sub.name} = {getattr(value, sub.name)}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
