"""Command-line interface.

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure,
4 ``compare`` disagreement beyond three standard errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace

import numpy as np

from .config import ProblemConfig, bundled_fluid_text, load_config, parse_config
from .exceptions import ConfigError, ModelError, NumericalError
from .factorization import block_factorize, classical_factorize, direct_augmented_factorize
from .functionals import functional
from .laplace import InversionConfig
from .montecarlo import estimate_functional

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DISAGREE = 0, 2, 3, 4
RECORD_FIELDS = ("command", "inputs_digest", "value", "std_error", "residual", "method", "M", "seed", "wall_ms")
SE_GATE = 3.0


def _record(command, cfg, **fields):
    rec = dict.fromkeys(RECORD_FIELDS)
    rec["command"] = command
    rec["inputs_digest"] = cfg.digest
    rec.update(fields)
    return rec


class _Timer:
    def __init__(self, enabled):
        self.enabled = enabled

    def __enter__(self):
        self._t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = round((time.perf_counter() - self._t) * 1000, 1) if self.enabled else None


def _apply_overrides(cfg: ProblemConfig, args) -> ProblemConfig:
    inv, mc = cfg.inversion, cfg.mc
    if getattr(args, "method", None) or getattr(args, "terms", None):
        inv = InversionConfig(args.method or inv.method, args.terms or inv.terms, inv.precision)
    if getattr(args, "paths", None) is not None:
        mc = replace(mc, paths=args.paths)
    if getattr(args, "seed", None) is not None:
        mc = replace(mc, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        mc = replace(mc, workers=args.workers)
    return replace(cfg, inversion=inv, mc=mc)


def _label(cfg):
    f = cfg.functional
    lvl = f"{f.level:g}, " if f.level is not None else ""
    return f"{f.kind}({lvl}{f.i}, {f.j})"


def _wh(cfg: ProblemConfig, timing):
    f = cfg.functional
    with _Timer(timing) as tm:
        fv = functional(f.kind, cfg.schedule, cfg.drift, cfg.discount, f.i, f.j, f.level, cfg.inversion)
    d = fv.diagnostics
    # a-posteriori accuracy indicator: change from one fewer term
    spread = None
    if d["method"] != "closed" and d["terms"] > 1:
        coarse = replace(cfg.inversion, terms=d["terms"] - 1)
        other = functional(f.kind, cfg.schedule, cfg.drift, cfg.discount, f.i, f.j, f.level, coarse)
        spread = abs(fv.value - other.value)
    rec = _record(
        "passage", cfg, value=fv.value, residual=d["residual"], method=d["method"], M=d["terms"],
        wall_ms=tm.ms, functional=_label(cfg), inversion_spread=spread, in_range=d["in_range"],
    )
    return fv, rec


def _mc(cfg: ProblemConfig, timing):
    f = cfg.functional
    with _Timer(timing) as tm:
        res = estimate_functional(cfg.schedule, cfg.drift, cfg.discount, f.kind, f.i, f.j, f.level, cfg.mc)
    rec = _record(
        "mc", cfg, value=res.mean, std_error=res.std_error, method="monte-carlo", seed=res.seed,
        wall_ms=tm.ms, functional=_label(cfg), paths=res.paths, horizon=res.horizon,
        truncation_bias_bound=res.truncation_bias_bound, censored=res.censored,
    )
    return res, rec


def _fmt(x, spec=".6f"):
    return "n/a" if x is None else format(x, spec)


def _print_human(records, out):
    for rec in records:
        cmd = rec["command"]
        if cmd == "check":
            out.write(f"config OK  digest {rec['inputs_digest']}\n")
            out.write(f"  {rec['summary']}\n")
        elif cmd == "factorize":
            out.write(f"block factorization at q = {rec['rates']}, c = {rec['killing']:g}\n")
            out.write(f"  augmented residual        {rec['residual']:.3e}\n")
            out.write(f"  block vs direct (max)     {rec['direct_gap']:.3e}\n")
            for k, (res, lam) in enumerate(zip(rec["diagonal_residuals"], rec["lambda_norms"])):
                out.write(f"  level {k}: classical residual {res:.3e}, |Lambda+_0{k}| = {lam:.6f}\n")
        elif cmd == "passage":
            out.write(f"{rec['functional']} = {rec['value']:.6f}  "
                      f"(+/- {_fmt(rec['inversion_spread'], '.1e')} change vs M-1)\n")
            out.write(f"  method {rec['method']}, M = {rec['M']}, factorization residual {rec['residual']:.1e}, "
                      f"time {_fmt(rec['wall_ms'], '.1f')} ms\n")
        elif cmd == "mc":
            out.write(f"{rec['functional']} = {rec['value']:.6f} +/- {rec['std_error']:.6f} (1 SE)\n")
            out.write(f"  {rec['paths']} paths, seed {rec['seed']}, horizon {rec['horizon']:g}, "
                      f"truncation bias <= {rec['truncation_bias_bound']:.1e}, time {_fmt(rec['wall_ms'], '.1f')} ms\n")
        elif cmd == "compare":
            out.write(f"\n{'Method':<16}{'Wiener-Hopf':>14}{'Monte-Carlo':>14}\n")
            out.write(f"{rec['functional']:<16}{rec['wh_value']:>14.4f}{rec['value']:>14.4f}\n")
            out.write(f"{'(+/-)':<16}{_fmt(rec['inversion_spread'], '.1e'):>14}{rec['std_error']:>14.4f}\n")
            out.write(f"{'Execution time':<16}{_fmt(_sec(rec['wh_ms']), '.2f') + ' s':>14}"
                      f"{_fmt(_sec(rec['wall_ms']), '.2f') + ' s':>14}\n")
            out.write(f"verdict: {rec['verdict']} (|diff| = {rec['difference']:.4f}, "
                      f"{rec['z']:.2f} SE)\n")


def _sec(ms):
    return None if ms is None else ms / 1000


def _emit(records, args, out):
    if args.json:
        for rec in records:
            out.write(json.dumps(rec) + "\n")
    else:
        _print_human(records, out)


def cmd_check(cfg, args):
    f = cfg.functional
    summary = (f"{len(cfg.states)} states, {cfg.schedule.n} breakpoints, c = {cfg.discount:g}, "
               f"functional {_label(cfg)}")
    return [_record("check", cfg, summary=summary)], EXIT_OK


def _default_rates(cfg):
    return [1.0 / h for h in cfg.schedule.increments()]


def cmd_factorize(cfg, args):
    q = args.rates if args.rates else _default_rates(cfg)
    if len(q) != cfg.schedule.n:
        raise ConfigError("--rates", f"expected {cfg.schedule.n} rates, got {len(q)}")
    drift = cfg.drift.reflected() if cfg.functional.kind.endswith("-") else cfg.drift
    with _Timer(not args.no_timing) as tm:
        blk = block_factorize(cfg.schedule, drift, cfg.discount, q)
    direct = direct_augmented_factorize(cfg.schedule, drift, cfg.discount, q)
    gap = max(
        max(float(np.abs(blk.lambda_blocks[k] - direct.lambda_blocks[k]).max()) for k in blk.lambda_blocks),
        max(float(np.abs(blk.g_blocks[k] - direct.g_blocks[k]).max()) for k in blk.g_blocks),
    )
    kills = blk.shifted_killings
    diag = [classical_factorize(G, drift, ck).residual for G, ck in zip(cfg.schedule.generators, kills)]
    norms = [float(np.abs(blk.lambda_blocks[0, l]).sum(axis=1).max()) for l in range(blk.levels)]
    rec = _record(
        "factorize", cfg, residual=blk.residual(), method="block-recursion", wall_ms=tm.ms,
        rates=[float(x) for x in q], killing=cfg.discount, direct_gap=gap,
        diagonal_residuals=diag, lambda_norms=norms,
        orientation="reflected" if drift is not cfg.drift else "original",
    )
    return [rec], EXIT_OK


def cmd_passage(cfg, args):
    _, rec = _wh(cfg, not args.no_timing)
    return [rec], EXIT_OK


def cmd_mc(cfg, args):
    _, rec = _mc(cfg, not args.no_timing)
    return [rec], EXIT_OK


def cmd_compare(cfg, args):
    fv, wh = _wh(cfg, not args.no_timing)
    res, mc = _mc(cfg, not args.no_timing)
    diff = abs(fv.value - res.mean)
    z = diff / res.std_error if res.std_error > 0 else (0.0 if diff == 0 else float("inf"))
    agree = z <= SE_GATE
    verdict = "AGREE (within 3 SE)" if agree else "DISAGREE (beyond 3 SE)"
    rec = _record(
        "compare", cfg, value=res.mean, std_error=res.std_error, residual=wh["residual"],
        method=wh["method"], M=wh["M"], seed=res.seed, wall_ms=mc["wall_ms"],
        functional=_label(cfg), wh_value=fv.value, wh_ms=wh["wall_ms"],
        inversion_spread=wh["inversion_spread"], paths=res.paths, difference=diff, z=z, verdict=verdict,
    )
    return [wh, mc, rec], EXIT_OK if agree else EXIT_DISAGREE


COMMANDS = {
    "check": cmd_check,
    "factorize": cmd_factorize,
    "passage": cmd_passage,
    "mc": cmd_mc,
    "compare": cmd_compare,
}


def build_parser():
    p = argparse.ArgumentParser(prog="inhomwh", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="problem description (YAML)")
        sp.add_argument("--json", action="store_true", help="one JSON record per line")
        sp.add_argument("--no-timing", action="store_true", help="omit wall-clock times (byte-stable output)")

    def inversion(sp):
        sp.add_argument("--method", choices=("gaver-stehfest", "gaver", "talbot"))
        sp.add_argument("--terms", type=int, help="inversion terms per dimension")

    def montecarlo(sp):
        sp.add_argument("--paths", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, help="worker processes for path simulation")

    common(sub.add_parser("check", help="validate a config without computing"))
    sp = sub.add_parser("factorize", help="block factorization diagnostics")
    common(sp)
    sp.add_argument("--rates", type=float, nargs="+", help="randomization rates q_1..q_n")
    sp = sub.add_parser("passage", help="Wiener-Hopf value of the configured functional")
    common(sp)
    inversion(sp)
    sp = sub.add_parser("mc", help="Monte Carlo estimate of the configured functional")
    common(sp)
    montecarlo(sp)
    for name, text in (("compare", "Wiener-Hopf vs Monte Carlo"), ("example-fluid", "bundled fluid example")):
        sp = sub.add_parser(name, help=text)
        common(sp, config=name == "compare")
        inversion(sp)
        montecarlo(sp)
    return p


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        if args.command == "example-fluid":
            cfg = parse_config(bundled_fluid_text())
            handler = cmd_compare
        else:
            cfg = load_config(args.config)
            handler = COMMANDS[args.command]
        cfg = _apply_overrides(cfg, args)
        records, code = handler(cfg, args)
    except (ConfigError, ModelError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    _emit(records, args, out)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
