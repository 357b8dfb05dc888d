"""Command-line front end: ``detaildepth <subcommand> ...``.

Results go to stdout as whitespace-delimited tables with a header line;
diagnostics go to stderr. Exit status is 0 on success, 2 for usage errors
and missing input files, 1 for any other failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import meshio
from .core import CameraModel, DepthGrid
from .decompose import BilateralParams, decompose
from .errors import DetailDepthError
from .fusion import FusionParams, ToyParams, global_oracle, refine, sine_toy_report
from .losses import LossParams, ablation_losses, huber, stage1_losses, stage2_loss, truncated_l1
from .metrics import evaluate
from .normals import PlaneFitParams, normals_from_depth
from .regression import DepthBinning
from .synth import CORRUPTIONS, KINDS, SurfaceSpec, corrupt, format_kv, generate, parse_kv

logger = logging.getLogger("detaildepth")


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable constant of the pipeline, with the published defaults."""

    bilateral: BilateralParams = field(default_factory=BilateralParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    loss: LossParams = field(default_factory=LossParams)
    binning: DepthBinning = field(default_factory=DepthBinning)
    camera: CameraModel = field(default_factory=CameraModel)
    plane_fit: PlaneFitParams = field(default_factory=PlaneFitParams)
    mesh: meshio.MeshExportParams = field(default_factory=meshio.MeshExportParams)
    thresholds: str = "1.25,2.5,5.0"

    def threshold_values(self):
        return tuple(float(t) for t in self.thresholds.split(","))


def _convert(type_name, raw, key):
    t = str(type_name)
    try:
        if "None" in t and raw in ("None", "none", ""):
            return None
        if t.startswith("int"):
            return int(raw)
        if t.startswith("float"):
            return float(raw)
        if t.startswith("bool"):
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return str(raw)
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: {exc}") from None


def apply_overrides(cfg: PipelineConfig, mapping: dict) -> PipelineConfig:
    """Return ``cfg`` with dotted ``section.field`` keys replaced.

    Component invariants are re-checked on construction, and failures name
    the offending key.
    """
    sections = {f.name: f for f in dataclasses.fields(cfg)}
    grouped: dict = {}
    top: dict = {}
    for key, raw in mapping.items():
        head, _, tail = key.partition(".")
        if head not in sections:
            raise ValueError(f"unknown config key {key!r}")
        if not tail:
            if dataclasses.is_dataclass(getattr(cfg, head)):
                raise ValueError(f"config key {key!r} names a section, not a field")
            top[head] = _convert(sections[head].type, raw, key)
            continue
        sub = getattr(cfg, head)
        if not dataclasses.is_dataclass(sub):
            raise ValueError(f"unknown config key {key!r}")
        types = {f.name: f.type for f in dataclasses.fields(sub)}
        if tail not in types:
            raise ValueError(f"unknown config key {key!r}")
        grouped.setdefault(head, {})[tail] = (_convert(types[tail], raw, key), key)
    for head, fields in grouped.items():
        try:
            top[head] = dataclasses.replace(getattr(cfg, head), **{k: v for k, (v, _) in fields.items()})
        except ValueError as exc:
            keys = ", ".join(sorted(key for _, key in fields.values()))
            raise ValueError(f"config [{keys}]: {exc}") from None
    out = dataclasses.replace(cfg, **top)
    out.threshold_values()  # validate early
    return out


# --- helpers --------------------------------------------------------------


def _out(text):
    sys.stdout.write(text)


def _fmt(v):
    return f"{v:.9e}"


def _need(path):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _read_depth(path, mask=None):
    return meshio.read_depth(_need(path), None if mask is None else _need(mask))


def _read_normals(path, mask=None):
    return meshio.read_normals(_need(path), None if mask is None else _need(mask))


def _max_delta(a: DepthGrid, b: DepthGrid) -> float:
    m = a.mask & b.mask
    return float(np.max(np.abs(a.values[m] - b.values[m]))) if m.any() else 0.0


# --- subcommands -----------------------------------------------------------


def cmd_decompose(args, cfg):
    grid = _read_depth(args.depth, args.mask)
    parts = decompose(grid, cfg.bilateral)
    meshio.write_depth(args.base, parts.base)
    meshio.write_depth(args.detail, parts.detail)
    centered = parts.base.values + parts.detail.values
    from .decompose import center_median

    ref = center_median(grid)
    err = float(np.max(np.abs(centered[ref.mask] - ref.values[ref.mask])))
    _out("max_reconstruction_error detail_rms\n")
    _out(f"{_fmt(err)} {_fmt(float(np.sqrt(np.mean(parts.detail.valid_values() ** 2))))}\n")


def cmd_refine(args, cfg):
    depth0 = _read_depth(args.depth, args.mask)
    normals = _read_normals(args.normals)
    fp = cfg.fusion
    refined = refine(depth0, normals, cfg.camera, fp)
    meshio.write_depth(args.out, refined)
    oracle = None
    if args.oracle:
        oracle = global_oracle(depth0, normals, cfg.camera, fp.lam, nz_epsilon=fp.nz_epsilon)
        oracle_path = args.oracle_out or str(Path(args.out).with_suffix(".oracle" + Path(args.out).suffix))
        meshio.write_depth(oracle_path, oracle)
    _out("max_delta\n" + _fmt(_max_delta(refined, depth0)) + "\n")
    if args.gt:
        from .core import rmse

        gt = _read_depth(args.gt)
        cols = ["initial", "iterative"] + (["oracle"] if oracle is not None else [])
        vals = [rmse(depth0, gt), rmse(refined, gt)] + ([rmse(oracle, gt)] if oracle is not None else [])
        _out(" ".join(f"rmse_{c}" for c in cols) + "\n")
        _out(" ".join(_fmt(v) for v in vals) + "\n")


def cmd_normals(args, cfg):
    grid = _read_depth(args.depth, args.mask)
    n = normals_from_depth(grid, cfg.camera, cfg.plane_fit)
    meshio.write_normals(args.out, n)
    _out("valid_pixels input_pixels\n" + f"{n.count} {grid.count}\n")


def cmd_evaluate(args, cfg):
    pred = _read_depth(args.pred, args.mask)
    gt = _read_depth(args.gt)
    report = evaluate(pred, gt, cfg.threshold_values())
    if args.json:
        _out(json.dumps(report.as_record(), sort_keys=True) + "\n")
    else:
        _out(report.table())


def cmd_toy(args, cfg):
    params = ToyParams(corruption=args.corruption, magnitude=args.magnitude,
                       seed=args.seed, fusion=cfg.fusion)
    report = sine_toy_report(params)
    _out(report.table())
    if args.profile == "-":
        _out("\n" + report.profile_table())
    elif args.profile:
        Path(args.profile).write_text(report.profile_table())


def _spec_from_args(args):
    values = {}
    if args.spec:
        values.update(parse_kv(_need(args.spec).read_text(), args.spec))
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        values[key.strip()] = value.strip()
    values["kind"] = args.kind
    return SurfaceSpec.from_kv(values)


def cmd_synth(args, cfg):
    spec = _spec_from_args(args)
    depth, normals = generate(spec, cfg.camera)
    meshio.write_depth(args.out, depth)
    if args.normals:
        meshio.write_normals(args.normals, normals)
    _out("kind height width valid\n" + f"{spec.kind} {spec.height} {spec.width} {depth.count}\n")


def cmd_corrupt(args, cfg):
    grid = _read_depth(args.depth, args.mask)
    out = corrupt(grid, args.mode, args.magnitude, seed=args.seed)
    meshio.write_depth(args.out, out)
    diff = out.values[out.mask] - grid.values[out.mask]
    _out("mode magnitude rms_change\n" + f"{args.mode} {args.magnitude:g} {_fmt(float(np.sqrt(np.mean(diff ** 2))))}\n")


def cmd_mesh(args, cfg):
    grid = _read_depth(args.depth, args.mask)
    stats = meshio.write_obj(args.out, grid, cfg.camera, cfg.mesh)
    _out("vertices faces\n" + f"{stats.vertices} {stats.faces}\n")


def _fd_check(fn, x, alpha, h=1e-6):
    """Max relative error of the analytic derivative against central differences."""
    x = np.asarray(x, dtype=np.float64)
    keep = (np.abs(np.abs(x) - alpha) > 10 * h) & (np.abs(x) > 10 * h)
    x = x[keep]
    if x.size == 0:
        return 0, 0.0
    _, g = fn(x)
    fd = (fn(x + h)[0] - fn(x - h)[0]) / (2 * h)
    rel = np.abs(g - fd) / np.maximum(1.0, np.abs(fd))
    return int(x.size), float(rel.max())


def cmd_loss_eval(args, cfg):
    pred = _read_depth(args.pred, args.mask)
    gt = _read_depth(args.gt)
    lp = cfg.loss
    bp = cfg.bilateral
    gt_parts = decompose(gt, bp)
    gt_c = gt_parts.base.with_values(gt_parts.reconstruct())
    pred_parts = decompose(pred, bp)
    s1 = stage1_losses(pred_parts.base, pred_parts.detail, gt_parts, lp)
    s2 = stage2_loss(pred_parts.base, pred_parts.detail, gt_c, gt_parts, lp)
    ab = ablation_losses(pred_parts.base.with_values(pred_parts.reconstruct()), gt_c, pred_parts.base, pred_parts.detail, lp)
    _out("loss value\n")
    for name, value in [
        ("stage1_base", s1.base), ("stage1_detail", s1.detail),
        ("stage2_base", s2.base), ("stage2_detail", s2.detail),
        ("stage2_composed", s2.composed), ("stage2_total", s2.total),
        ("ablation_single_branch", ab.single_branch), ("ablation_huber_composed", ab.huber_composed),
    ]:
        _out(f"{name} {_fmt(value)}\n")
    mask = pred.mask & gt.mask
    resid_b = (pred_parts.base.values - gt_parts.base.values)[mask]
    resid_d = (pred_parts.detail.values - gt_parts.detail.values)[mask]
    resid_c = (pred_parts.reconstruct() - gt_c.values)[mask]
    v = lp.huber_variant
    _out("\ngradient_check points max_rel_error\n")
    for name, fn, x, a in [
        ("huber_base", lambda t: huber(t, lp.alpha1, v), resid_b, lp.alpha1),
        ("huber_detail", lambda t: huber(t, lp.alpha2, v), resid_d, lp.alpha2),
        ("truncated_l1_composed", lambda t: truncated_l1(t, lp.alpha3), resid_c, lp.alpha3),
    ]:
        n, err = _fd_check(fn, x, a)
        _out(f"{name} {n} {_fmt(err)}\n")


# --- parser ------------------------------------------------------------------


def _camera_flags(p):
    g = p.add_argument_group("camera")
    g.add_argument("--camera", choices=("orthographic", "pinhole"), dest="camera_variant")
    g.add_argument("--scale", type=float, help="orthographic meters per pixel")
    g.add_argument("--fx", type=float)
    g.add_argument("--fy", type=float)
    g.add_argument("--cx", type=float)
    g.add_argument("--cy", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file (e.g. fusion.lam = 0.4)")
    common.add_argument("--print-config", action="store_true",
                        help="print the effective configuration to stderr")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="detaildepth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", parents=[common], help="split depth into base and detail")
    p.add_argument("depth")
    p.add_argument("--base", required=True)
    p.add_argument("--detail", required=True)
    p.add_argument("--mask")
    p.add_argument("--sigma-depth", type=float)
    p.add_argument("--sigma-space", type=float)
    p.add_argument("--radius", type=int)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("refine", parents=[common], help="depth-normal fusion")
    p.add_argument("depth")
    p.add_argument("normals")
    p.add_argument("--out", required=True)
    p.add_argument("--mask")
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--iters", type=int)
    p.add_argument("--oracle", action="store_true", help="also run the global least-squares solve")
    p.add_argument("--oracle-out", help="path for the oracle depth (default: <out>.oracle.<ext>)")
    p.add_argument("--gt", help="reference depth for RMSE reporting")
    _camera_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("normals", parents=[common], help="plane-fit normals from depth")
    p.add_argument("depth")
    p.add_argument("--out", required=True)
    p.add_argument("--mask")
    p.add_argument("--window-radius", type=int)
    _camera_flags(p)
    p.set_defaults(func=cmd_normals)

    p = sub.add_parser("evaluate", parents=[common], help="threshold accuracy and MAE")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--mask")
    p.add_argument("--json", action="store_true", help="print the full record including the CDF")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("toy", parents=[common], help="sine-surface fusion experiment")
    p.add_argument("--corruption", choices=CORRUPTIONS, default=ToyParams.corruption)
    p.add_argument("--magnitude", type=float, default=ToyParams.magnitude)
    p.add_argument("--seed", type=int, default=ToyParams.seed)
    p.add_argument("--profile", help="write profile samples here ('-' for stdout)")
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--iters", type=int)
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("synth", parents=[common], help="generate an analytic surface")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--normals", help="also write analytic normals")
    p.add_argument("--spec", help="key = value surface spec file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="surface spec field")
    _camera_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("corrupt", parents=[common], help="degrade a depth map")
    p.add_argument("depth")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=CORRUPTIONS, default="seeded-noise")
    p.add_argument("--magnitude", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("mesh", parents=[common], help="export depth as an OBJ mesh")
    p.add_argument("depth")
    p.add_argument("--out", required=True)
    p.add_argument("--mask")
    p.add_argument("--threshold", type=float, help="discontinuity threshold in meters")
    p.add_argument("--flip", action="store_true", default=None)
    _camera_flags(p)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("loss-eval", parents=[common], help="training losses and gradient checks")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--mask")
    p.set_defaults(func=cmd_loss_eval)
    return parser


_FLAG_KEYS = {
    "sigma_depth": "bilateral.sigma_depth",
    "sigma_space": "bilateral.sigma_space",
    "radius": "bilateral.kernel_radius",
    "lam": "fusion.lam",
    "iters": "fusion.iterations",
    "window_radius": "plane_fit.window_radius",
    "threshold": "mesh.discontinuity_threshold",
    "flip": "mesh.flip_faces",
    "camera_variant": "camera.variant",
    "scale": "camera.scale",
    "fx": "camera.fx",
    "fy": "camera.fy",
    "cx": "camera.cx",
    "cy": "camera.cy",
}


def resolve_config(args) -> PipelineConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = PipelineConfig()
    if args.config:
        cfg = apply_overrides(cfg, parse_kv(_need(args.config).read_text(), args.config))
    flags = {key: str(getattr(args, attr)) for attr, key in _FLAG_KEYS.items()
             if getattr(args, attr, None) is not None}
    return apply_overrides(cfg, flags)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        if args.print_config:
            sys.stderr.write(format_kv(cfg))
        args.func(args, cfg)
    except FileNotFoundError as exc:
        print(f"detaildepth {args.command}: {exc}", file=sys.stderr)
        return 2
    except (DetailDepthError, ValueError, OSError) as exc:
        print(f"detaildepth {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
