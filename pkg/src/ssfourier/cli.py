"""Command-line entry point.

Frequencies are in radians, rates and pressures in nats.  Exit codes:
0 success, 1 invalid input, 2 numerics not resolved (or a verification
check failed).
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .deviation import (
    deviation_profile,
    strichartz_averages,
    system_bound,
    theorem_bound,
    word_deviation,
)
from .envelope import build_partitions, envelope_recursion, verify_lipschitz, verify_main_estimate
from .errors import ResolutionError, ValidationError
from .fourier import fit_log_slope, fourier_chaos_game, fourier_mu_n, grid_points
from .ifs import IfsSystem, kappa, normalize_coordinates
from .io import CACHE_ENV, ResultCache, csv_text, json_text, load_system, parse_system
from .rate import LOG2, check_observations, rate_function, transfer_pressure

EXIT_OK, EXIT_INVALID, EXIT_UNRESOLVED = 0, 1, 2

SUBCOMMANDS = ("transform", "profile", "strichartz", "words", "bound",
               "rate-fn", "pressure", "envelope", "verify-all")
# options that never change an artifact and are left out of cache keys
NON_SEMANTIC = {"out", "cache_dir", "threads", "command", "system"}


@dataclass
class RunConfig:
    command: str
    system: dict | None
    params: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        return {"command": self.command, "system": self.system, "params": self.params}


@dataclass
class Outcome:
    text: str
    summary: str
    exit_code: int = EXIT_OK


def _float_list(values) -> list[float]:
    out = []
    for v in values:
        out.extend(float(x) for x in str(v).split(",") if x.strip())
    return out


def _chunks(n: int, parts: int) -> list[slice]:
    parts = max(1, min(parts, n))
    edges = np.linspace(0, n, parts + 1).round().astype(int)
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _pmap(fn, items, threads: int):
    """Ordered map; results are merged by index so thread count never matters."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _need_system(system):
    if system is None:
        raise ValidationError("--system is required for this subcommand")
    return system


def cmd_transform(system: IfsSystem, p: dict, threads: int) -> Outcome:
    xi = grid_points(p["xi_min"], p["xi_max"], p["step"])
    if p["oracle"] == "chaos":
        def work(sl):
            est = fourier_chaos_game(system, xi[sl], p["samples"], seed=p["seed"])
            return np.asarray(est.value)
    else:
        def work(sl):
            return np.asarray(fourier_mu_n(system, p["n"], xi[sl]))
    values = np.concatenate(_pmap(work, _chunks(xi.size, threads), threads))
    rows = [{"xi": x, "re": v.real, "im": v.imag, "abs": abs(v)} for x, v in zip(xi.tolist(), values.tolist())]
    peak = max(r["abs"] for r in rows)
    return Outcome(csv_text(rows, ["xi", "re", "im", "abs"]),
                   f"transform: {len(rows)} points, max |F| = {peak:.6g}")


def cmd_profile(system: IfsSystem, p: dict, threads: int) -> Outcome:
    def work(t):
        return deviation_profile(system, [t], p["c_list"], step=p["step"], n=p["n"])[0]
    profiles = _pmap(work, p["t_list"], threads)
    rows = []
    for prof in profiles:
        for c, leb, e, ok in zip(prof.c_values, prof.leb_estimates, prof.exponents, prof.resolved):
            rows.append({"t": prof.t, "c": c, "leb": leb, "exponent": e, "resolved": ok})
    unresolved = sum(not r["resolved"] for r in rows)
    code = EXIT_UNRESOLVED if unresolved else EXIT_OK
    return Outcome(csv_text(rows, ["t", "c", "leb", "exponent", "resolved"]),
                   f"profile: {len(rows)} cells, {unresolved} unresolved", code)


def cmd_strichartz(system: IfsSystem, p: dict, threads: int) -> Outcome:
    R = np.asarray(p["r_list"], dtype=float)
    avg = strichartz_averages(system, R, p["n"], p["step"])
    rows = [{"R": r, "average": a} for r, a in zip(R.tolist(), avg.tolist())]
    slope = fit_log_slope(np.log(R), avg) if R.size >= 2 else float("nan")
    return Outcome(csv_text(rows, ["R", "average"]), f"strichartz: slope = {slope:.6g}")


def cmd_words(system: IfsSystem, p: dict, threads: int) -> Outcome:
    w = word_deviation(system, p["n"], p["delta"])
    row = asdict(w)
    return Outcome(csv_text([row], list(row)),
                   f"words: lower = {w.lower_tail:.6g}, upper = {w.upper_tail:.6g}, band miss = {w.band_miss:.6g}")


def cmd_bound(system: IfsSystem | None, p: dict, threads: int) -> Outcome:
    if system is not None and (p["kappa"] is None or p["r_lo"] is None):
        b = system_bound(system, p["s"], p["eta"])
    else:
        b = theorem_bound(p["s"], p["eta"], 6 if p["kappa"] is None else p["kappa"],
                          2 if p["r_lo"] is None else p["r_lo"])
    row = asdict(b)
    return Outcome(csv_text([row], list(row)), f"bound: c = {b.c_out:.6g}, R <= {b.bound:.6g}")


def cmd_rate_fn(system, p: dict, threads: int) -> Outcome:
    def work(c):
        return rate_function([c], p["clip"], p["grid"], p["beta_max"])
    parts = _pmap(work, p["c_list"], threads)
    rows = [{"c": pr.c_values[0], "rhat": pr.rhat[0], "beta_star": pr.attained_beta[0]} for pr in parts]
    summary = f"rate-fn: {len(rows)} values, rhat in [{min(r['rhat'] for r in rows):.6g}, {max(r['rhat'] for r in rows):.6g}]"
    if len(rows) >= 8:
        from .rate import RateProfile
        rep = check_observations(RateProfile([r["c"] for r in rows], [r["rhat"] for r in rows],
                                             [r["beta_star"] for r in rows]))
        summary += f", observations A={rep.A} B={rep.B} C={rep.C}"
    return Outcome(csv_text(rows, ["c", "rhat", "beta_star"]), summary)


def cmd_pressure(system, p: dict, threads: int) -> Outcome:
    def work(beta):
        return transfer_pressure(beta, p["clip"], p["grid"])
    values = _pmap(work, p["beta_list"], threads)
    rows = [{"beta": b, "P": v} for b, v in zip(p["beta_list"], values)]
    return Outcome(csv_text(rows, ["beta", "P"]), f"pressure: {len(rows)} values")


def _envelope_report(system: IfsSystem, p: dict) -> dict:
    table = envelope_recursion(system, p["n"], p["h"])
    parts = build_partitions(system, p["n"], table=table)
    lip = verify_lipschitz(table)
    main = verify_main_estimate(table, parts)
    return {
        "n": p["n"], "h": p["h"], "n0": table.n0, "r_lo": table.r_lo,
        "system": table.system.to_json(), "kappa": kappa(table.system),
        "lipschitz": lip.to_json(), "main_estimate": main.to_json(),
        "ok": bool(lip.ok and main.max_exceptions <= 2 and main.eta > 0),
    }


def cmd_envelope(system: IfsSystem, p: dict, threads: int) -> Outcome:
    rep = _envelope_report(system, p)
    m = rep["main_estimate"]
    return Outcome(json_text(rep),
                   f"envelope: eta = {m['eta']:.6g}, max exceptions = {m['max_exceptions']}, "
                   f"Lipschitz violations = {len(rep['lipschitz']['violations'])}")


def cmd_verify_all(system: IfsSystem, p: dict, threads: int) -> Outcome:
    rep = _envelope_report(system, p)
    m = rep["main_estimate"]
    ok = rep["ok"]
    return Outcome(json_text(rep),
                   f"verify-all: {'PASS' if ok else 'FAIL'} (eta = {m['eta']:.6g}, "
                   f"max exceptions = {m['max_exceptions']}, "
                   f"Lipschitz violations = {len(rep['lipschitz']['violations'])})",
                   EXIT_OK if ok else EXIT_UNRESOLVED)


HANDLERS = {
    "transform": (cmd_transform, True),
    "profile": (cmd_profile, True),
    "strichartz": (cmd_strichartz, True),
    "words": (cmd_words, True),
    "bound": (cmd_bound, False),
    "rate-fn": (cmd_rate_fn, False),
    "pressure": (cmd_pressure, False),
    "envelope": (cmd_envelope, True),
    "verify-all": (cmd_verify_all, True),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--system", help="system JSON: {\"maps\": [[a, b], ...], \"probs\": [...]}")
    common.add_argument("--out", help="artifact path (stdout when omitted)")
    common.add_argument("--cache-dir", help=f"result cache directory (env {CACHE_ENV})")
    common.add_argument("--threads", type=int, default=1, help="worker thread hint; results do not depend on it")

    parser = _Parser(prog="ssfourier", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("transform", parents=[common], help="F mu_n on a frequency grid (radians)")
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--xi-min", type=float, default=-100.0)
    p.add_argument("--xi-max", type=float, default=100.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--oracle", choices=["recursion", "chaos"], default="recursion")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("profile", parents=[common], help="large-deviation exponents (nats per unit t)")
    p.add_argument("--t-list", nargs="+", default=[str(math.log(3 ** 8 * math.pi))])
    p.add_argument("--c-list", nargs="+", default=["0.1", "0.2", "0.3"])
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--n", type=int, default=None)

    p = sub.add_parser("strichartz", parents=[common], help="averages of |F mu_n|^2 over [-R, R]")
    p.add_argument("--r-list", nargs="+", default=[str(3.0 ** k) for k in range(3, 11)])
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--step", type=float, default=0.05)

    p = sub.add_parser("words", parents=[common], help="exact word-product tail probabilities")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--delta", type=float, default=0.1)

    p = sub.add_parser("bound", parents=[common], help="closed-form bound on R(c; mu) in nats")
    p.add_argument("--s", type=float, default=0.01)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--r-lo", type=int, default=None)
    p.add_argument("--kappa", type=int, default=None)

    p = sub.add_parser("rate-fn", parents=[common], help="entropy rate function for the x3 map (nats)")
    p.add_argument("--c-list", nargs="+", default=[str(k * LOG2 / 8) for k in range(1, 9)])
    p.add_argument("--clip", type=float, default=20.0)
    p.add_argument("--grid", type=int, default=4096)
    p.add_argument("--beta-max", type=float, default=50.0)

    p = sub.add_parser("pressure", parents=[common], help="transfer-operator pressure P(beta psi_M) in nats")
    p.add_argument("--beta-list", nargs="+", default=["0", "0.5", "1", "2", "4"])
    p.add_argument("--clip", type=float, default=20.0)
    p.add_argument("--grid", type=int, default=4096)

    for name, text in (("envelope", "envelope recursion and main-estimate report (JSON)"),
                       ("verify-all", "envelope checks with a pass/fail exit code")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--n", type=int, default=8)
        p.add_argument("--h", type=float, default=0.02)
    return parser


def parse_config(argv) -> tuple[RunConfig, argparse.Namespace]:
    args = build_parser().parse_args(argv)
    params = {k: v for k, v in vars(args).items() if k not in NON_SEMANTIC}
    for key in ("t_list", "c_list", "r_list", "beta_list"):
        if key in params:
            params[key] = _float_list(params[key])
    if args.threads < 1:
        raise ValidationError("--threads must be >= 1")
    system = load_system(args.system).to_json() if args.system else None
    return RunConfig(args.command, system, params), args


def _execute(config: RunConfig, threads: int) -> Outcome:
    handler, needs_system = HANDLERS[config.command]
    system = None
    if config.system is not None:
        system = parse_system(config.system)
    if needs_system:
        _need_system(system)
        norm = normalize_coordinates(system)
        print(f"system (normal form): {norm.to_json()}", file=sys.stderr)
    return handler(system, config.params, threads)


def run(argv=None) -> int:
    try:
        config, args = parse_config(argv)
        cache_dir = args.cache_dir or os.environ.get(CACHE_ENV)
        cache = ResultCache(cache_dir, __version__) if cache_dir else None
        hit = cache.get(config.canonical()) if cache else None
        if hit is not None:
            data, summary, code = hit
            summary += " (cached)"
        else:
            outcome = _execute(config, args.threads)
            data, summary, code = outcome.text.encode(), outcome.summary, outcome.exit_code
            if cache:
                cache.put(config.canonical(), data, outcome.summary, code)
        if args.out:
            try:
                Path(args.out).write_bytes(data)
            except OSError as exc:
                raise ValidationError(f"cannot write {args.out}: {exc}") from None
            print(summary)
        else:
            sys.stdout.write(data.decode())
            print(summary, file=sys.stderr)
        return code
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ResolutionError as exc:
        print(f"unresolved: {exc}", file=sys.stderr)
        return EXIT_UNRESOLVED


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
