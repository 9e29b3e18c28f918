"""Configuration-driven experiment runner.

Subcommands: flag, nilpotent, metric, distance, ball, group, perimeter,
blowup, verify.  Options come from defaults, then an INI config file
(sections [structure] and [options]), then command-line flags.  All JSON
outputs carry the schema version, a hash of the resolved configuration and
the seed, and are byte-identical for identical inputs.

Exit codes: 0 success, 2 configuration error, 3 non-convergence,
4 precondition violation.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from fractions import Fraction

from . import builtins as builtin_lib
from .blowup import BlowupOptions, blowup_run
from .carnot import group_law_from_flows
from .ccdist import SolverOptions, ball_mask, distance
from .errors import (
    CharacteristicPointError,
    DegenerateGradientError,
    DegenerateNormalError,
    DimensionMismatchError,
    HormanderError,
    IsotropyError,
    NonConvergedError,
    NotPrivilegedError,
    ParseError,
    SpanError,
)
from .grammar import format_vector_field, parse_polynomial, parse_vector_field
from .grids import Box
from .metric import quadratic_form, scalar_product
from .nilpotent import Grading, truncate
from .perimeter import (
    SetRep,
    density_ratio,
    flow_estimator,
    mollified_estimator,
    surface_estimator,
)
from .structure import SubRiemannianStructure, classify_regularity, point_flag

SCHEMA_VERSION = "1"

CONFIG_ERROR, NONCONVERGED, PRECONDITION = 2, 3, 4

_PRECONDITION_ERRORS = (
    HormanderError,
    NotPrivilegedError,
    CharacteristicPointError,
    IsotropyError,
    DegenerateNormalError,
    SpanError,
    DegenerateGradientError,
)

_CONFIG_ERRORS = (ParseError, DimensionMismatchError, KeyError, ValueError, TypeError)


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _parse_number(text):
    text = text.strip()
    if "/" in text:
        return Fraction(text)
    return float(text)


def parse_point(text):
    return tuple(_parse_number(v) for v in text.split(","))


def parse_box(text, dim=None):
    if not text:
        raise CliError("a box is required (--box \"lo,hi;lo,hi;...\")", CONFIG_ERROR)
    los, his = [], []
    for part in text.split(";"):
        lo, hi = part.split(",")
        los.append(float(lo))
        his.append(float(hi))
    if dim is not None and len(los) != dim:
        raise CliError(
            f"box has {len(los)} axes but the structure has dimension {dim} "
            "(quote the --box argument: the ';' separator is shell syntax)",
            CONFIG_ERROR,
        )
    return Box(tuple(los), tuple(his))


def parse_resolution(text):
    vals = [int(v) for v in text.split(",")]
    return vals[0] if len(vals) == 1 else tuple(vals)


def load_structure(args, config):
    if args.structure:
        return builtin_lib.make_structure(args.structure)
    if config is not None and config.has_section("structure"):
        sec = config["structure"]
        dim = int(sec["dim"])
        frame = []
        for i in range(1, dim + 2):
            key = f"X{i}"
            if key not in sec:
                break
            frame.append(parse_vector_field(sec[key], dim))
        if not frame:
            raise CliError("[structure] section defines no frame fields", CONFIG_ERROR)
        weight = None
        if sec.get("volume_weight", "").strip() not in ("", "1"):
            weight = parse_polynomial(sec["volume_weight"], dim)
        return SubRiemannianStructure(
            dim, frame, weight, name=sec.get("name", "inline")
        )
    raise CliError("no structure given (use --structure or a config file)", CONFIG_ERROR)


def merged_option(args, config, name, default=None):
    val = getattr(args, name.replace("-", "_"), None)
    if val is not None:
        return val
    if config is not None and config.has_section("options"):
        if name in config["options"]:
            return config["options"][name]
    return default


def config_hash(payload):
    canon = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def emit_json(args, command, resolved, result):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": config_hash(resolved),
        "seed": resolved.get("seed", 0),
        "result": result,
    }
    text = json.dumps(doc, sort_keys=True, indent=2, default=float)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


# -- subcommand implementations ------------------------------------------------


def cmd_flag(args, config):
    S = load_structure(args, config)
    point = parse_point(merged_option(args, config, "point", "0," * (S.dim - 1) + "0"))
    rank_tol = float(merged_option(args, config, "rank_tol", 1e-9))
    radius = float(merged_option(args, config, "radius", 0.1))
    samples = int(merged_option(args, config, "samples", 16))
    resolved = {
        "structure": S.name,
        "point": [str(v) for v in point],
        "rank_tol": rank_tol,
        "radius": radius,
        "samples": samples,
        "seed": args.seed,
    }
    flag = point_flag(S, [float(v) for v in point], rank_tol=rank_tol)
    report = classify_regularity(
        S, [float(v) for v in point], radius, samples=samples, rank_tol=rank_tol
    )
    regular = {"regular": True, "singular": False, "unknown": None}[report.verdict]
    result = flag.as_dict()
    result["regular"] = regular
    result["verdict"] = report.verdict
    result["witness"] = list(report.witness) if report.witness else None
    emit_json(args, "flag", resolved, result)
    return 0


def cmd_nilpotent(args, config):
    S = load_structure(args, config)
    point = parse_point(merged_option(args, config, "point", "0," * (S.dim - 1) + "0"))
    if any(float(v) != 0 for v in point):
        S = S.translated(list(point))
    grading_text = merged_option(args, config, "grading", None)
    grading = (
        Grading(tuple(int(v) for v in grading_text.split(",")))
        if grading_text
        else None
    )
    NA = truncate(S, grading)
    lines = [
        f"X{i + 1} = {format_vector_field(X)}"
        for i, X in enumerate(NA.truncated_frame)
    ]
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_metric(args, config):
    S = load_structure(args, config)
    point = [float(v) for v in parse_point(merged_option(args, config, "point", "0"))]
    vector = [float(v) for v in parse_point(args.vector)]
    span_tol = float(merged_option(args, config, "span_tol", 1e-8))
    resolved = {
        "structure": S.name,
        "point": point,
        "vector": vector,
        "span_tol": span_tol,
        "seed": args.seed,
    }
    ev = quadratic_form(S, point, vector, span_tol)
    result = {
        "finite": ev.finite,
        "value": ev.value if ev.finite else None,
        "controls": None if ev.controls is None else [float(c) for c in ev.controls],
        "residual": ev.residual,
    }
    if args.vector2:
        v2 = [float(v) for v in parse_point(args.vector2)]
        resolved["vector2"] = v2
        result["scalar_product"] = scalar_product(S, point, vector, v2, span_tol)
    emit_json(args, "metric", resolved, result)
    return 0


def cmd_distance(args, config):
    S = load_structure(args, config)
    x = [float(v) for v in parse_point(getattr(args, "from"))]
    y = [float(v) for v in parse_point(args.to)]
    opts = SolverOptions(
        restarts=int(merged_option(args, config, "restarts", 8)),
        n_start=int(merged_option(args, config, "n_start", 16)),
        maxiter=int(merged_option(args, config, "maxiter", 250)),
        seed=args.seed,
    )
    resolved = {
        "structure": S.name,
        "from": x,
        "to": y,
        "restarts": opts.restarts,
        "n_start": opts.n_start,
        "maxiter": opts.maxiter,
        "seed": args.seed,
    }
    res = distance(S, x, y, opts)
    result = {
        "value": res.value,
        "converged": res.converged,
        "endpoint_gap": res.path.endpoint_gap,
        "action": res.path.action,
        "restarts_used": res.restarts_used,
        "refinements": [[n, v] for n, v in res.refinements],
    }
    emit_json(args, "distance", resolved, result)
    if args.csv:
        N = len(res.path.controls)
        rows = []
        for k, pt in enumerate(res.path.trajectory):
            ctrl = res.path.controls[min(k, N - 1)]
            rows.append([k / N, *pt, *ctrl])
        write_csv(
            args.csv,
            ["t"]
            + [f"x{i + 1}" for i in range(S.dim)]
            + [f"c{i + 1}" for i in range(len(S.frame))],
            rows,
        )
    return 0 if res.converged else NONCONVERGED


def cmd_ball(args, config):
    S = load_structure(args, config)
    center = [float(v) for v in parse_point(merged_option(args, config, "center", "0"))]
    r = float(args.radius)
    box = parse_box(merged_option(args, config, "box"), S.dim)
    if len(center) != S.dim:
        raise CliError("center does not match the structure dimension", CONFIG_ERROR)
    resolution = parse_resolution(merged_option(args, config, "resolution", "48"))
    resolved = {
        "structure": S.name,
        "center": center,
        "radius": r,
        "box": [list(box.lo), list(box.hi)],
        "resolution": resolution if isinstance(resolution, int) else list(resolution),
        "seed": args.seed,
    }
    mask = ball_mask(S, center, r, box, resolution)
    result = {
        "grid": {
            "lo": list(box.lo),
            "hi": list(box.hi),
            "resolution": list(mask.resolution),
            "order": "C",
        },
        "radius": r,
        "volume": mask.volume,
        "runs": mask.run_length_encode(),
        "refined": mask.refined,
        "unknown_count": mask.unknown_count,
    }
    emit_json(args, "ball", resolved, result)
    return 0


def cmd_group(args, config):
    S = load_structure(args, config)
    grading_text = merged_option(args, config, "grading", None)
    grading = (
        Grading(tuple(int(v) for v in grading_text.split(",")))
        if grading_text
        else None
    )
    NA = truncate(S, grading)
    law = group_law_from_flows(NA)
    resolved = {"structure": S.name, "seed": args.seed}
    result = {
        "dim": law.dim,
        "weights": list(law.grading.weights),
        "first_layer_coordinates": list(law.weight1_idx),
        "second_layer_coordinates": list(law.weight2_idx),
        "structure_constants": law.structure_constants.tolist(),
    }
    emit_json(args, "group", resolved, result)
    return 0


def _parse_level(args, config, S):
    level_text = merged_option(args, config, "level", None)
    if level_text is None:
        raise CliError("a level function is required (--level)", CONFIG_ERROR)
    return parse_polynomial(level_text, S.dim)


def cmd_perimeter(args, config):
    S = load_structure(args, config)
    level = _parse_level(args, config, S)
    box = parse_box(merged_option(args, config, "box"), S.dim)
    resolution = parse_resolution(
        merged_option(args, config, "resolution", "128" if S.dim <= 3 else "48")
    )
    estimator = merged_option(args, config, "estimator", "surface")
    E = SetRep(level, box, resolution)
    resolved = {
        "structure": S.name,
        "level": merged_option(args, config, "level"),
        "box": [list(box.lo), list(box.hi)],
        "resolution": resolution if isinstance(resolution, int) else list(resolution),
        "estimator": estimator,
        "seed": args.seed,
    }
    result = {}
    if estimator in ("surface", "all"):
        result["surface"] = surface_estimator(S, E).as_dict()
    if estimator in ("mollified", "all"):
        result["mollified"] = mollified_estimator(S, E).as_dict()
    if estimator in ("flow", "all"):
        result["flow_per_field"] = [
            flow_estimator(S, E, X) for X in S.frame
        ]
    emit_json(args, "perimeter", resolved, result)
    if args.csv and args.density_radii:
        radii = [float(v) for v in args.density_radii.split(",")]
        p = [float(v) for v in parse_point(merged_option(args, config, "point", "0"))]
        rows = []
        for r in radii:
            dbox = Box.cube(1.2 * r, S.dim, center=p)
            rep = density_ratio(S, E, p, r, dbox, 64 if S.dim == 2 else 40)
            rows.append([r, rep.ratio, rep.perimeter_in_ball, rep.ball_volume, rep.h])
        write_csv(args.csv, ["radius", "ratio", "perimeter", "volume", "h"], rows)
    return 0


def cmd_blowup(args, config):
    S = load_structure(args, config)
    level = _parse_level(args, config, S)
    point = parse_point(merged_option(args, config, "point", "0," * (S.dim - 1) + "0"))
    radii = tuple(
        float(v)
        for v in merged_option(args, config, "radii", "0.5,0.25,0.125,0.0625").split(",")
    )
    resolution = int(merged_option(args, config, "resolution", 96))
    with_density = merged_option(args, config, "density", "yes") not in ("no", "false")
    box = Box.cube(1.0, S.dim)
    E = SetRep(level, box, resolution)
    opts = BlowupOptions(
        radii=radii,
        resolution=resolution,
        compute_density=with_density,
    )
    resolved = {
        "structure": S.name,
        "level": merged_option(args, config, "level"),
        "point": [str(v) for v in point],
        "radii": list(radii),
        "resolution": resolution,
        "density": with_density,
        "seed": args.seed,
    }
    report = blowup_run(S, E, [float(v) for v in point], opts=opts)
    emit_json(args, "blowup", resolved, report.as_dict())
    if args.csv:
        rows = []
        for i, r in enumerate(report.radii):
            lhs = report.density_lhs[i]
            rows.append([r, report.l1_gap[i], "" if lhs is None else lhs.ratio])
        write_csv(args.csv, ["radius", "l1_gap", "density_lhs"], rows)
    return 0


def cmd_verify(args, config):
    from .verify import run_verification

    S = load_structure(args, config)
    fast = bool(args.fast)
    rows = run_verification(S, seed=args.seed, fast=fast)
    width = max(len(r[0]) for r in rows)
    failed = 0
    for name, ok, detail in rows:
        status = "pass" if ok else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}")
        failed += 0 if ok else 1
    print(f"{failed} of {len(rows)} checks failed" if failed else f"all {len(rows)} checks passed")
    return 0 if failed == 0 else 1


# -- argument parsing ----------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="srgeo",
        description="sub-Riemannian geometry toolkit: flags, nilpotent "
        "approximations, CC distances, perimeters and blowups",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--structure", help="built-in name, e.g. heisenberg, euclidean:2")
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="write JSON here instead of stdout")
        p.add_argument("--csv", help="write CSV artifact here")

    p = sub.add_parser("flag", help="growth vector, weights, Q, regularity")
    common(p)
    p.add_argument("--point")
    p.add_argument("--radius")
    p.add_argument("--samples")
    p.add_argument("--rank-tol", dest="rank_tol")
    p.set_defaults(fn=cmd_flag)

    p = sub.add_parser("nilpotent", help="truncated frame in the text grammar")
    common(p)
    p.add_argument("--point")
    p.add_argument("--grading")
    p.set_defaults(fn=cmd_nilpotent)

    p = sub.add_parser("metric", help="quadratic form / scalar product")
    common(p)
    p.add_argument("--point")
    p.add_argument("--vector", required=True)
    p.add_argument("--vector2")
    p.set_defaults(fn=cmd_metric)

    p = sub.add_parser("distance", help="CC distance by direct optimization")
    common(p)
    p.add_argument("--from", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--restarts")
    p.add_argument("--n-start", dest="n_start")
    p.add_argument("--maxiter")
    p.set_defaults(fn=cmd_distance)

    p = sub.add_parser("ball", help="CC ball voxel mask (RLE JSON)")
    common(p)
    p.add_argument("--center")
    p.add_argument("--radius", required=True)
    p.add_argument("--box")
    p.add_argument("--resolution")
    p.set_defaults(fn=cmd_ball)

    p = sub.add_parser("group", help="tangent group structure constants")
    common(p)
    p.add_argument("--grading")
    p.set_defaults(fn=cmd_group)

    p = sub.add_parser("perimeter", help="perimeter estimators on a level set")
    common(p)
    p.add_argument("--level")
    p.add_argument("--box")
    p.add_argument("--resolution")
    p.add_argument("--estimator", choices=["surface", "flow", "mollified", "all"])
    p.add_argument("--point")
    p.add_argument("--density-radii", dest="density_radii")
    p.set_defaults(fn=cmd_perimeter)

    p = sub.add_parser("blowup", help="blowup experiment report")
    common(p)
    p.add_argument("--level")
    p.add_argument("--point")
    p.add_argument("--radii")
    p.add_argument("--resolution")
    p.add_argument("--density")
    p.set_defaults(fn=cmd_blowup)

    p = sub.add_parser("verify", help="property suite for a structure")
    common(p)
    p.add_argument("--fast", action="store_true", help="skip solver-based checks")
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    config = None
    if args.config:
        config = configparser.ConfigParser()
        try:
            with open(args.config) as fh:
                config.read_file(fh)
        except (OSError, configparser.Error) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return CONFIG_ERROR
    try:
        return args.fn(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except _PRECONDITION_ERRORS as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return PRECONDITION
    except NonConvergedError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return NONCONVERGED
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
