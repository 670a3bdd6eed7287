"""Command-line front end: ``chaoskit <command> [options]``.

Every command writes ``<out>/<command>.json`` and exits with 0 when its checks
pass, 1 when a check fails and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, acceptance, bsde, chaos_mc, ergodicity, kernel, teugels
from .dyadic import GroupSpec, from_permutation, restricted_group
from .errors import ChaoskitError
from .kernel import ChaosVector, GridKernel
from .levy import LevyModel, cell_increments, dump_paths_csv, sample_paths

SCHEMA = "chaoskit/1"
MAX_LEVEL = 6
MAX_SAMPLES = 10_000_000
DEFAULTS = {
    "model": {"sigma": 1.0, "atoms": [{"x": 1.0, "lambda": 2.0}]},
    "level": 3,
    "seed": 0,
    "samples": 100_000,
    "tolerances": {"exact": 1e-12, "mc_sigmas": 3.0},
}

log = logging.getLogger("chaoskit")


class ConfigError(Exception):
    pass


def _load_json(path: str | None, what: str):
    if path is None:
        return None
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed {what} {path}: {exc}") from None


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and flags; seed order is flag, CHAOSKIT_SEED, file."""
    cfg = json.loads(json.dumps(DEFAULTS))
    loaded = _load_json(args.config, "config") or {}
    if not isinstance(loaded, dict):
        raise ConfigError("config must be a JSON object")
    for key, val in loaded.items():
        if key == "tolerances":
            cfg["tolerances"].update(val)
        else:
            cfg[key] = val
    if getattr(args, "model", None):
        cfg["model"] = _load_json(args.model, "model")
    if getattr(args, "level", None) is not None:
        cfg["level"] = args.level
    if getattr(args, "samples", None) is not None:
        cfg["samples"] = args.samples
    env_seed = os.environ.get("CHAOSKIT_SEED")
    if args.seed is not None:
        cfg["seed"] = args.seed
    elif env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"CHAOSKIT_SEED is not an integer: {env_seed!r}") from None
    try:
        cfg["level"] = int(cfg["level"])
        cfg["samples"] = int(cfg["samples"])
        cfg["seed"] = int(cfg["seed"])
        LevyModel.from_json(cfg["model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    if cfg["level"] < 0 or cfg["samples"] < 1 or cfg["seed"] < 0:
        raise ConfigError("level and seed must be non-negative and samples positive")
    if not args.force and (cfg["level"] > MAX_LEVEL or cfg["samples"] > MAX_SAMPLES):
        raise ConfigError(f"level <= {MAX_LEVEL} and samples <= {MAX_SAMPLES} unless --force")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _model(cfg: dict) -> LevyModel:
    return LevyModel.from_json(cfg["model"])


def _kernel_arg(path: str | None, what: str = "kernel") -> GridKernel | None:
    obj = _load_json(path, what)
    if obj is None:
        return None
    try:
        return GridKernel.from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from None


def _group_arg(path: str | None) -> GroupSpec | None:
    obj = _load_json(path, "group")
    if obj is None:
        return None
    try:
        return GroupSpec.from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid group: {exc}") from None


def _random_kernel(rng, n: int, level: int, atom_count: int) -> GridKernel:
    P = (1 << level) * atom_count
    return GridKernel(level, atom_count, rng.normal(size=(P,) * n))


def cmd_simulate(args, cfg):
    model, d = _model(cfg), cfg["level"]
    paths = sample_paths(model, d, cfg["samples"], cfg["seed"])
    if args.dump_paths:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        dump_paths_csv(paths, Path(args.out) / "paths.csv")
    x1 = cell_increments(model, paths).sum(axis=-1)
    se = float(x1.std(ddof=1) / np.sqrt(len(x1))) if len(x1) > 1 else 0.0
    rep = chaos_mc.MCReport(float(x1.mean()), se, len(x1), cfg["seed"], 0.0)
    sig = cfg["tolerances"]["mc_sigmas"]
    return rep.passes(sig), {"mean_increment": rep.to_json(sig), "paths_dumped": bool(args.dump_paths)}


def cmd_verify_diagram(args, cfg):
    model, d = _model(cfg), cfg["level"]
    rng = np.random.default_rng(cfg["seed"])
    f = _kernel_arg(args.kernel) or _random_kernel(rng, args.degree, d, model.atom_count)
    g = from_permutation(d, rng.permutation(1 << d))
    paths = sample_paths(model, f.level, args.paths, rng)
    per_path = [chaos_mc.verify_diagram(f, g, paths[i], model) for i in range(args.paths)]
    worst = max(per_path)
    return worst <= cfg["tolerances"]["exact"], {
        "kernel_hash": f.content_hash(),
        "map": g.to_json(),
        "max_residual": worst,
        "per_path_residual": per_path,
    }


def cmd_isometry(args, cfg):
    model, d = _model(cfg), cfg["level"]
    rng = np.random.default_rng(cfg["seed"])
    f = _kernel_arg(args.kernel) or _random_kernel(rng, args.degree, d, model.atom_count)
    rep = chaos_mc.isometry_check(f, model, cfg["samples"], cfg["seed"])
    sig = cfg["tolerances"]["mc_sigmas"]
    return rep.passes(sig), {"kernel_hash": f.content_hash(), **rep.to_json(sig)}


def cmd_extract(args, cfg):
    model, d = _model(cfg), cfg["level"]
    terminal = _load_json(args.terminal, "terminal")
    if terminal is not None:
        cv = ChaosVector.from_json(terminal)
        functional = lambda p: chaos_mc.evaluate_chaos(p, cv, model)  # noqa: E731
        n_max, level = max(cv.degree, 1), cv.level
        target = cv.symmetrized().padded(n_max)
    else:
        functional = lambda p: chaos_mc.doleans_exponential(model, p)  # noqa: E731
        n_max, level = args.nmax, d
        target = ChaosVector(
            level, model.atom_count, 1.0, tuple(kernel.dolean_kernel(0, 1 << level, n, level, model) for n in range(1, n_max + 1))
        )
    est = chaos_mc.chaos_coefficients(model, functional, n_max, level, cfg["samples"], cfg["seed"])
    z_max = abs(est.vector.constant - target.constant) / max(est.std_error.constant, 1e-300)
    for n in range(1, n_max + 1):
        diff = np.abs(est.vector.kernel(n).values - target.kernel(n).values)
        se = est.std_error.kernel(n).values
        mask = se > 0
        if mask.any():
            z_max = max(z_max, float(np.max(diff[mask] / se[mask])))
    sig = args.sigmas
    return z_max <= sig, {
        "estimate": est.vector.to_json(),
        "estimate_hash": est.vector.content_hash(),
        "target_hash": target.content_hash(),
        "max_z": z_max,
        "sigmas": sig,
    }


def cmd_project(args, cfg):
    f = _kernel_arg(args.kernel)
    group = _group_arg(args.group)
    if f is None or group is None:
        raise ConfigError("project needs --kernel and --group")
    out = kernel.orbit_project(f, group)
    ok = kernel.is_invariant(out, group, cfg["tolerances"]["exact"])
    return ok, {"input_hash": f.content_hash(), "kernel_hash": out.content_hash(), "kernel": out.to_json()}


def _partition_arg(path: str | None) -> list[list[int]]:
    obj = _load_json(path, "partition")
    if not isinstance(obj, list) or not all(isinstance(b, list) for b in obj):
        raise ConfigError("partition must be a JSON list of cell lists")
    return obj


def cmd_reduce(args, cfg):
    f = _kernel_arg(args.kernel)
    if f is None:
        raise ConfigError("reduce needs --kernel")
    blocks = _partition_arg(args.partition)
    group = _group_arg(args.group) or restricted_group(blocks, f.level, f.level)
    model = _model(cfg)
    out, residual = ergodicity.reduce_kernel(f, blocks, group, model)
    ok = kernel.is_cuboid_constant(out, blocks, cfg["tolerances"]["exact"])
    return ok, {"input_hash": f.content_hash(), "kernel_hash": out.content_hash(), "residual": residual, "kernel": out.to_json()}


def cmd_check_ergodic(args, cfg):
    try:
        cells = [int(c) for c in args.set.split(",") if c.strip()]
    except ValueError:
        raise ConfigError(f"--set must be comma-separated cells, got {args.set!r}") from None
    set_level = cfg["level"] if args.set_level is None else args.set_level
    group = _group_arg(args.group) or restricted_group([cells], set_level, args.dmax)
    cert = ergodicity.check_locally_ergodic(cells, set_level, group, args.dmax)
    return cert.passed, cert.to_json()


def cmd_ns_transform(args, cfg):
    f = _kernel_arg(args.kernel)
    if f is None:
        raise ConfigError("ns-transform needs --kernel")
    model = _model(cfg)
    basis = teugels.build_basis(model)
    res = teugels.ns_transform(f, basis, model)
    parseval = teugels.ns_parseval_check(f, basis, model)
    return parseval <= 1e-10, {
        "kernel_hash": f.content_hash(),
        "basis": basis.to_json(),
        "transform": res.to_json(),
        "parseval_residual": parseval,
    }


def cmd_bsde(args, cfg):
    model = _model(cfg)
    terminal = _load_json(args.terminal, "terminal")
    gen_obj = _load_json(args.generator, "generator")
    if terminal is None or gen_obj is None:
        raise ConfigError("bsde needs --terminal and --generator")
    try:
        F = ChaosVector.from_json(terminal)
        gen = bsde.AffineGenerator.from_json(gen_obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid bsde input: {exc}") from None
    res = bsde.picard_solve(F, gen, model, args.iters, args.tol)
    report = {
        "converged": res.converged,
        "history": res.history,
        "Y": [{"t": t, "constant": y.constant, "hash": y.content_hash()} for t, y in enumerate(res.Y)],
        "Z": {"degree": res.Z.degree, "norm_sq": res.Z.norm_sq(model)},
    }
    ok = True
    if args.partition:
        blocks = _partition_arg(args.partition)
        prop = bsde.invariance_propagation_check(F, gen, blocks, model, args.iters, cfg["tolerances"]["exact"])
        report["propagation"] = prop.to_json()
        ok = prop.passed
    return ok, report


def cmd_suite(args, cfg):
    results = acceptance.run_all(cfg["seed"])
    for r in results:
        print(r.line(), file=sys.stderr)
    return all(r.passed for r in results), {
        "criteria": [r.to_json() for r in results],
        "timing": {str(r.number): r.seconds for r in results},
    }


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-diagram": cmd_verify_diagram,
    "isometry": cmd_isometry,
    "extract": cmd_extract,
    "project": cmd_project,
    "reduce": cmd_reduce,
    "check-ergodic": cmd_check_ergodic,
    "ns-transform": cmd_ns_transform,
    "bsde": cmd_bsde,
    "suite": cmd_suite,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="RNG seed (overrides CHAOSKIT_SEED and the config)")
    common.add_argument("--out", default=".", help="directory for report files")
    common.add_argument("--force", action="store_true", help="lift the desk-scale guards")
    common.add_argument("--dump-paths", action="store_true", help="write sampled paths as CSV")
    common.add_argument("--model", help="model JSON (overrides the config)")
    common.add_argument("--level", type=int, help="grid level d")
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="chaoskit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"chaoskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="sample paths and check the mean increment")
    p = sub.add_parser("verify-diagram", parents=[common], help="pathwise T_g / S_g diagram residuals")
    p.add_argument("--paths", type=int, default=100)
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--kernel")
    p = sub.add_parser("isometry", parents=[common], help="MC check of E[I_n(f)^2] = n! ||f||^2")
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--kernel")
    p = sub.add_parser("extract", parents=[common], help="MC chaos coefficients of a functional")
    p.add_argument("--terminal", help="ChaosVector JSON to round-trip (default: grid exponential)")
    p.add_argument("--nmax", type=int, default=3)
    p.add_argument("--sigmas", type=float, default=4.0)
    p = sub.add_parser("project", parents=[common], help="orbit projection of a kernel")
    p.add_argument("--kernel")
    p.add_argument("--group")
    p = sub.add_parser("reduce", parents=[common], help="cuboid-constant reduction of a kernel")
    p.add_argument("--kernel")
    p.add_argument("--partition", required=True)
    p.add_argument("--group")
    p = sub.add_parser("check-ergodic", parents=[common], help="locally ergodic certificate")
    p.add_argument("--set", required=True, help="comma-separated cells")
    p.add_argument("--set-level", type=int)
    p.add_argument("--group")
    p.add_argument("--dmax", type=int, required=True)
    p = sub.add_parser("ns-transform", parents=[common], help="orthogonal-polynomial kernel transform")
    p.add_argument("--kernel")
    p = sub.add_parser("bsde", parents=[common], help="Picard iteration for an affine BSDE")
    p.add_argument("--terminal")
    p.add_argument("--generator")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--partition")
    sub.add_parser("suite", parents=[common], help="run the full acceptance battery")
    return parser


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    start = time.perf_counter()
    cfg = None
    try:
        cfg = resolve_config(args)
        ok, results = COMMANDS[args.command](args, cfg)
        code = 0 if ok else 1
    except (ConfigError, ChaoskitError) as exc:
        kind = "config error" if isinstance(exc, ConfigError) else type(exc).__name__
        print(f"chaoskit: {kind}: {exc}", file=sys.stderr)
        ok, results, code = False, {"error": f"{kind}: {exc}"}, 2
    report = {
        "schema": SCHEMA,
        "command": args.command,
        "version": __version__,
        "config_hash": config_hash(cfg) if cfg is not None else None,
        "seed": cfg["seed"] if cfg is not None else None,
        "pass": bool(ok),
        "results": results,
        "timing": {"seconds": time.perf_counter() - start},
    }
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        target = Path(args.out) / f"{args.command}.json"
        target.write_text(json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as exc:
        print(f"chaoskit: cannot write report: {exc}", file=sys.stderr)
        return 2
    if code == 1:
        print(f"chaoskit: {args.command} check failed, see {target}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
