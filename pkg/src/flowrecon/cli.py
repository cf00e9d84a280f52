"""Command line entry point: ``flowrecon generate|train|reconstruct|evaluate``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, EmptyCell, NumericalError, OutOfRange, TagMismatch
from .observation import add_noise
from .pipeline import (MODES, Context, RunConfig, evaluate, generate, load_test_set, load_trained,
                       reconstruct, save_trained, train)
from .store import load_manifold, read_array, write_array, write_json

log = logging.getLogger("flowrecon")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


def _config(args) -> RunConfig:
    return RunConfig.from_json(args.config) if args.config else RunConfig()


def _out(args, cfg: RunConfig, sub: str) -> Path:
    return Path(args.out) if args.out else Path(cfg.out) / sub


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg, "manifold")
    info = generate(cfg, out, args.seed,
                    progress=lambda k, n: log.info("trajectory %d/%d", k, n))
    print(f"snapshots: {info['snapshots']}  wall time: {info['wall_time_s']:.1f} s  -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    root = Path(args.manifold) if args.manifold else Path(cfg.out) / "manifold"
    man, domain, _ = load_manifold(root)
    ctx = Context(domain, cfg.voxels)
    t0 = time.perf_counter()
    tr = train(man, ctx, cfg, args.seed)
    out = _out(args, cfg, "trained")
    meta = save_trained(tr, out, root, cfg)
    for name, g in meta["grids"].items():
        print(f"{name}: K={g['K']} K'={g['K_prime']} score={g['score']:.4g}")
    print(f"trained in {time.perf_counter() - t0:.2f} s -> {out}")
    return EXIT_OK


def _read_vector(path) -> np.ndarray:
    path = Path(path)
    if path.suffix in (".csv", ".txt"):
        return np.loadtxt(path, delimiter=",", ndmin=1).ravel()
    return read_array(path)


def cmd_reconstruct(args) -> int:
    tr, cfg = load_trained(args.trained)
    lvals = _read_vector(args.measurements)
    if args.alpha is not None:
        seed = cfg.manifold["seed"] if args.seed is None else args.seed
        lvals = add_noise(lvals, args.alpha, seed, tr.sigma_ref)
    u, diag = reconstruct(tr, lvals, args.t, args.hr, args.mode)
    if args.truth:
        x = read_array(args.truth)
        g = tr.ctx.g_up if args.mode == "joint" else tr.ctx.g_u
        x = x[: g.dim]
        num = float(np.linalg.norm(g.whiten(x - u)))
        den = float(np.linalg.norm(g.whiten(x)))
        diag["relative_error"] = num / den if den > 0 else math.nan
        if math.isfinite(diag["bound"]):
            diag["relative_bound"] = diag["bound"] / den if den > 0 else math.nan
    out = Path(args.out) if args.out else Path(cfg.out) / "reconstruction"
    out.mkdir(parents=True, exist_ok=True)
    write_array(out / "field.bin", u)
    write_json(out / "diagnostics.json", diag)
    print(json.dumps({k: v for k, v in diag.items() if k != "coefficients"}))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    tr, cfg = load_trained(args.trained)
    if args.config:
        cfg = RunConfig.from_json(args.config)
    test = load_test_set(tr)
    out = _out(args, cfg, "report")
    rep = evaluate(tr, test, cfg, out)
    s = rep["summary"]
    print(json.dumps(s, default=float))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowrecon", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="run configuration (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="overrides manifold.seed")
        sp.add_argument("--out", default=None, help="output directory")

    g = sub.add_parser("generate", help="solve the forward model and store the manifold")
    common(g)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="POD bases, partition search and certificates")
    common(t)
    t.add_argument("--manifold", default=None, help="manifold directory")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("reconstruct", help="reconstruct a state from measurements")
    common(r)
    r.add_argument("--trained", required=True)
    r.add_argument("--measurements", required=True, help=".bin (<f8) or .csv vector of length m")
    r.add_argument("--t", type=float, required=True, help="time within the cycle (s)")
    r.add_argument("--hr", type=float, required=True, help="heart rate (beats/min)")
    r.add_argument("--mode", choices=MODES, default="pbdw")
    r.add_argument("--alpha", type=float, default=None, help="add noise at level sigma_ref/alpha")
    r.add_argument("--truth", default=None, help="reference snapshot file for error diagnostics")
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("evaluate", help="noiseless and noisy campaigns on the held-out set")
    common(e)
    e.add_argument("--trained", required=True)
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError, TagMismatch, OutOfRange, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EmptyCell as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        params = getattr(exc, "params", None)
        print(f"numerical failure: {exc}" + (f" (parameters {params})" if params is not None else ""),
              file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
