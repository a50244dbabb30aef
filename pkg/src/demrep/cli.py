"""Command-line front end: solve, frame inspection, experiments, self-checks.

Exit codes: 0 success, 1 input error, 2 iteration-cap exit (partial result
still written), 3 experiment failure budget exceeded.  stdout carries only the
paths of written result files (one per line); diagnostics go to stderr.  The
environment variable ``DEMREP_SEED`` overrides configured seeds for CI
fuzzing.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (ExperimentConfig, ExperimentError, PHASE_KINDS,
                          run_experiment_to_files)
from .frames import (DENSE_EIG_CAP, UP_SUPPORT_CAP, FrameOperator, build_dense,
                     build_dft_tone_frame, build_equiangular_parseval,
                     build_gaussian, build_subsampled_dft, frame_bounds,
                     load_frame, up_check_exhaustive, up_support_count)
from .prox import project_l1_ball, prox_inf
from .solvers import SolverConfig, certify, solve_cram, solve_cramp

log = logging.getLogger("demrep")

SOLVE_SCHEMA_KEYS = {"schemaVersion", "frame", "signal", "solver",
                     "writeRepresentation"}
SOLVER_KEYS = {"algorithm", "epsilon", "tau", "sigma", "maxIters", "tolPrimal",
               "tolDual", "tolGap", "adaptive", "norm"}
FRAME_KEYS = {"kind", "n", "m", "seed", "omega", "entries", "iters", "path"}
SIGNAL_KEYS = {"values", "synthetic", "path", "length"}


def _reject_unknown(doc: dict, allowed: set, where: str):
    if not isinstance(doc, dict):
        raise ValueError(f"{where} must be a JSON object")
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {unknown}")


def _complex_from_pairs(values) -> np.ndarray:
    out = np.empty(len(values), dtype=np.complex128)
    for i, v in enumerate(values):
        if isinstance(v, (list, tuple)):
            out[i] = complex(v[0], v[1])
        else:
            out[i] = complex(v)
    return out


def parse_frame_spec(doc: dict, base: Path, seed_override=None) -> FrameOperator:
    _reject_unknown(doc, FRAME_KEYS, "frame spec")
    if "path" in doc:
        return load_frame(base / doc["path"])
    kind = doc.get("kind")
    seed = seed_override if seed_override is not None else doc.get("seed")
    if kind == "dense":
        rows = doc.get("entries")
        if rows is None:
            raise ValueError("dense frame spec requires 'entries'")
        matrix = np.array([_complex_from_pairs(r) for r in rows])
        return build_dense(matrix)
    if kind == "gaussian":
        return build_gaussian(int(doc["n"]), int(doc["m"]), seed)
    if kind == "subsampled-dft":
        if "omega" in doc:
            return build_dft_tone_frame(int(doc["n"]), doc["omega"])
        return build_subsampled_dft(int(doc["n"]), int(doc["m"]), seed)
    if kind == "equiangular":
        return build_equiangular_parseval(int(doc["n"]), int(doc["m"]), seed,
                                          iters=int(doc.get("iters", 2000)))
    raise ValueError(f"unknown frame kind {kind!r}")


def parse_signal_spec(doc: dict, m: int, base: Path, seed_override=None) -> np.ndarray:
    _reject_unknown(doc, SIGNAL_KEYS, "signal spec")
    if "values" in doc:
        return _complex_from_pairs(doc["values"])
    if "synthetic" in doc:
        sub = doc["synthetic"]
        _reject_unknown(sub, {"seed", "normalize"}, "signal.synthetic")
        seed = seed_override if seed_override is not None else sub.get("seed", 0)
        rng = np.random.default_rng(seed)
        y = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        if sub.get("normalize", True):
            y /= np.linalg.norm(y)
        return y
    if "path" in doc:
        raw = np.fromfile(base / doc["path"], dtype="<f8")
        if "length" in doc and raw.size != 2 * int(doc["length"]):
            raise ValueError(f"signal file holds {raw.size // 2} samples, "
                             f"expected {doc['length']}")
        return raw[0::2] + 1j * raw[1::2]
    raise ValueError("signal spec requires 'values', 'synthetic', or 'path'")


def _apply_overrides(doc: dict, overrides) -> dict:
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override must look like dotted.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ValueError(f"override path {dotted!r} crosses a non-object")
        node[keys[-1]] = value
    return doc


def _env_seed():
    raw = os.environ.get("DEMREP_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"DEMREP_SEED must be an integer, got {raw!r}") from exc


def _write_vector_f64(path: Path, x: np.ndarray):
    pairs = np.empty((x.size, 2), dtype="<f8")
    pairs[:, 0] = x.real
    pairs[:, 1] = x.imag
    path.write_bytes(pairs.tobytes())


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ValueError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed JSON in {path}: {exc}")


def cmd_solve(args) -> int:
    outdir = Path(args.output_dir)
    base = Path(args.config).parent
    doc = _apply_overrides(_load_json(Path(args.config)), args.set)
    _reject_unknown(doc, SOLVE_SCHEMA_KEYS, "solve config")
    if doc.get("schemaVersion") != 1:
        raise ValueError(f"schemaVersion must be 1, got {doc.get('schemaVersion')!r}")
    env_seed = _env_seed()
    frame = parse_frame_spec(doc.get("frame", {}), base, seed_override=env_seed)
    y = parse_signal_spec(doc.get("signal", {}), frame.m, base,
                          seed_override=env_seed)

    sdoc = dict(doc.get("solver", {}))
    _reject_unknown(sdoc, SOLVER_KEYS, "solver config")
    algorithm = sdoc.pop("algorithm", "cram")
    if algorithm not in ("cram", "cramp"):
        raise ValueError(f"solver.algorithm must be 'cram' or 'cramp', got {algorithm!r}")
    rename = {"maxIters": "max_iters", "tolPrimal": "tol_primal",
              "tolDual": "tol_dual", "tolGap": "tol_gap"}
    cfg = SolverConfig(**{rename.get(k, k): v for k, v in sdoc.items()})

    solver = solve_cramp if algorithm == "cramp" else solve_cram
    result = solver(frame, y, cfg)
    report = certify(result, frame, y, cfg)

    outdir.mkdir(parents=True, exist_ok=True)
    payload = result.to_json_dict()
    payload.update({
        "algorithm": algorithm,
        "certified": report.certified,
        "certifiedRelativeGap": report.relative_gap,
        "frame": {"kind": frame.kind, "n": frame.n, "m": frame.m},
        "epsilon": cfg.epsilon,
        "norm": cfg.norm,
    })
    paths = []
    if doc.get("writeRepresentation", False):
        xpath = outdir / "solve_x.f64"
        _write_vector_f64(xpath, result.x)
        payload["representation"] = xpath.name
        paths.append(xpath)
    rpath = outdir / "solve_result.json"
    rpath.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    paths.insert(0, rpath)
    for p in paths:
        print(p)
    if not result.converged:
        log.warning("iteration cap reached after %d iterations (gap %.3e)",
                    result.iterations, result.gap)
        return 2
    return 0


def cmd_frame_info(args) -> int:
    base = Path(args.config).parent
    doc = _apply_overrides(_load_json(Path(args.config)), args.set)
    frame = parse_frame_spec(doc, base, seed_override=_env_seed())
    mode = "exact" if frame.m <= DENSE_EIG_CAP else "estimate"
    fb = frame_bounds(frame, mode=mode)
    report = {
        "kind": frame.kind,
        "n": frame.n,
        "m": frame.m,
        "redundancy": frame.redundancy,
        "A": fb.lower,
        "B": fb.upper,
        "boundsMethod": fb.method,
        "parsevalResidualMax": frame.parseval_residual(),
    }
    if frame.info:
        report["info"] = frame.info
    if args.up_delta is not None:
        count = up_support_count(frame.n, args.up_delta)
        if count > UP_SUPPORT_CAP:
            report["up"] = {"delta": args.up_delta, "eta": "refused",
                            "supportCount": count}
        else:
            cert = up_check_exhaustive(frame, args.up_delta)
            report["up"] = {"delta": cert.delta, "eta": cert.eta,
                            "supportBudget": cert.support_budget,
                            "supportCount": count}
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "frame_info.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(path)
    return 0


def cmd_experiment(args) -> int:
    doc = _apply_overrides(_load_json(Path(args.config)), args.set)
    env_seed = _env_seed()
    if env_seed is not None:
        doc["seed"] = env_seed
    cfg = ExperimentConfig.from_json_dict(doc)
    expected = PHASE_KINDS if args.command == "phase-diagram" else ("ofdm-papr",)
    if cfg.kind not in expected:
        raise ValueError(f"subcommand {args.command} cannot run a {cfg.kind!r} config")
    try:
        outputs = run_experiment_to_files(cfg, args.output_dir, workers=args.threads)
    except ExperimentError as exc:
        log.error("%s", exc)
        from .experiments import write_manifest
        outdir = Path(args.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        manifest = write_manifest(outdir / f"{cfg.output_prefix}_manifest.json",
                                  cfg, seconds=0.0, point_stats=exc.point_stats,
                                  outputs=[])
        print(manifest)
        return 3
    for p in outputs:
        print(p)
    return 0


def cmd_prox_check(args) -> int:
    seed = _env_seed()
    if seed is None:
        seed = args.seed
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(args.count):
        n = int(rng.integers(1, 65))
        z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        z *= 10.0 ** rng.uniform(-2, 2)
        tau = float(10.0 ** rng.uniform(-3, 2))
        direct = prox_inf(z, tau).u
        moreau = z - tau * project_l1_ball(z / tau, 1.0)
        worst = max(worst, float(np.abs(direct - moreau).max()))
    report = {"count": args.count, "seed": seed, "maxAbsError": worst,
              "tolerance": 1e-10, "pass": worst <= 1e-10}
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "prox_check.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(path)
    return 0 if report["pass"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demrep",
        description="Minimum max-norm (democratic) representations: solvers, "
                    "frame inspection, and experiment harness")
    parser.add_argument("--version", action="version",
                        version=f"demrep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", help="path to the JSON config")
        p.add_argument("-o", "--output-dir", default="demrep-out",
                       help="directory for result files (default: demrep-out)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override as dotted.key=value (repeatable)")
        p.add_argument("-v", "--verbose", action="count", default=0,
                       help="increase stderr verbosity")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker processes for experiment trials")

    common(sub.add_parser("solve", help="solve one instance from a config file"))
    p = sub.add_parser("frame-info", help="report bounds and properties of a frame")
    common(p)
    p.add_argument("--up-delta", type=float, default=None,
                   help="also run the exhaustive UP check at this delta")
    common(sub.add_parser("phase-diagram", help="run a phase-diagram experiment"))
    common(sub.add_parser("ofdm-papr", help="run the OFDM PAPR-reduction experiment"))
    p = sub.add_parser("prox-check", help="self-check the max-norm prox against "
                                          "its Moreau-decomposition oracle")
    common(p, config=False)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"solve": cmd_solve, "frame-info": cmd_frame_info,
                "phase-diagram": cmd_experiment, "ofdm-papr": cmd_experiment,
                "prox-check": cmd_prox_check}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError, FloatingPointError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
