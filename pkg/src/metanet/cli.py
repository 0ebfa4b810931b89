"""Command-line entry point: ``metanet {gen,infer,predict,simulate,rank,eval}``.

Every command writes its outputs plus a ``manifest.json`` recording the
resolved configuration, SHA-256 digests of inputs and outputs, the seed, the
tool version and the wall-clock duration.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import InferenceConfig, InfectionNetwork, MobilityVolumes
from .dynamics import states_from_deltas
from .errors import MetanetError
from .evaluation import (
    DEFAULT_HORIZONS,
    cosine_similarity,
    degree_distribution,
    infection_count_importance,
    pagerank_importance,
    prediction_report,
    simulate_comparison,
)
from .features import build_feature_tensor, self_feature
from .inference import ACTIVE_WEIGHTS, VARIANTS, fit_alpha_adjustment, spgd_infer
from .io import (
    fmt,
    read_config,
    read_deltas,
    read_feature_slices,
    read_network,
    read_zones,
    write_config,
    write_deltas,
    write_features,
    write_matrix,
    write_network,
    write_vector,
    write_zones,
)
from .synthetic import generate_outbreak, make_scenario, scenario_features

log = logging.getLogger("metanet")

# Hyperparameters used when a flag is neither given nor set in --config.
CLI_DEFAULTS = {"lam": 1e-9, "eta": 1e3, "mu": 1.0, "l1": 1e-6, "l2": 1e3}
_FLAG_FOR = {"lam": "--lambda", "eta": "--eta", "mu": "--mu", "l1": "--l1", "l2": "--l2"}


class UsageError(Exception):
    """Inconsistent or missing command-line arguments."""


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    duration_s: float = 0.0

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256(path)

    def add_output(self, path) -> None:
        self.outputs[Path(path).name] = sha256(path)

    def write(self, directory) -> Path:
        p = Path(directory) / "manifest.json"
        with open(p, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p


def _out_dir(path) -> Path:
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {d}: {exc}") from exc
    return d


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _day_range(text: str) -> list[int]:
    if ":" in text:
        a, b = text.split(":", 1)
        return list(range(int(a), int(b) + 1))
    return _int_list(text)


# ---------------------------------------------------------------- inputs


def _data_file(args, attr: str, name: str) -> Path:
    explicit = getattr(args, attr, None)
    if explicit:
        return Path(explicit)
    if args.data:
        return Path(args.data) / name
    raise UsageError(f"--{attr.replace('_', '-')} (or --data DIR) is required")


def _beta(args) -> float:
    if args.beta is not None:
        return float(args.beta)
    if args.data and (Path(args.data) / "scenario.json").exists():
        with open(Path(args.data) / "scenario.json") as fh:
            return float(json.load(fh)["beta"])
    raise UsageError("--beta is required when the data directory has no scenario.json")


def _load_outbreak(args, manifest: RunManifest):
    zones = _data_file(args, "zones", "zones.csv")
    deltas = _data_file(args, "deltas", "deltas.csv")
    pop = read_zones(zones)
    series = read_deltas(deltas, pop, _beta(args))
    manifest.add_input(zones)
    manifest.add_input(deltas)
    return pop, series


def _feature_paths(args) -> list[Path]:
    if args.features:
        return [Path(p) for p in args.features.split(",") if p]
    if args.data and (Path(args.data) / "features").is_dir():
        return sorted((Path(args.data) / "features").glob("*.csv"))
    return []


def _add_data_flags(p, deltas=True):
    p.add_argument("--data", help="directory written by 'gen' (zones.csv, deltas.csv, ...)")
    p.add_argument("--zones", help="zone registry CSV")
    if deltas:
        p.add_argument("--deltas", help="daily new cases CSV")
        p.add_argument("--beta", type=float, help="recovery rate (default: from scenario.json)")


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> RunManifest:
    if args.zones < 2:
        raise UsageError("--zones must be at least 2")
    if not 1 <= args.attach_m < args.zones:
        raise UsageError(f"--attach-m must satisfy 1 <= attach_m < zones (got {args.attach_m}, zones {args.zones})")
    if args.days < 1:
        raise UsageError("--days must be at least 1")
    if args.noise < 0 or not 0 < args.beta <= 1:
        raise UsageError("need --noise >= 0 and 0 < --beta <= 1")
    if not 1 <= args.seed_zones <= args.zones:
        raise UsageError("--seed-zones must be between 1 and --zones")
    out = _out_dir(args.out)
    sc = make_scenario(args.zones, args.attach_m, beta=args.beta, noise_sigma=args.noise,
                       volume_scale=args.volume_scale, seed=args.seed)
    if args.alpha is not None:
        if args.alpha < 0:
            raise UsageError("--alpha must be non-negative")
        sc = dataclasses.replace(sc, alpha=float(args.alpha))
    rng = np.random.default_rng(args.seed)
    d1 = np.zeros(sc.pop.n)
    d1[rng.choice(sc.pop.n, args.seed_zones, replace=False)] = args.seed_cases
    series = generate_outbreak(sc, args.days, d1)
    x = scenario_features(sc, seed=args.seed)

    manifest = RunManifest("gen", {k: v for k, v in vars(args).items() if k != "func"}, seed=args.seed)
    write_zones(out / "zones.csv", sc.pop)
    write_matrix(out / "mobility.csv", sc.h.h)
    write_network(out / "network.csv", sc.g_true)
    write_deltas(out / "deltas.csv", series, sc.pop)
    (out / "features").mkdir(exist_ok=True)
    # The identity slice is added by 'infer' itself.
    keep = [k for k, name in enumerate(x.names) if name != "self"]
    sub = dataclasses.replace(x, x=x.x[:, :, keep], names=tuple(x.names[k] for k in keep))
    feature_files = write_features(out / "features", sub)
    with open(out / "scenario.json", "w") as fh:
        json.dump({"alpha": sc.alpha, "beta": sc.beta, "noise_sigma": sc.noise_sigma}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    for name in ("zones.csv", "mobility.csv", "network.csv", "deltas.csv", "scenario.json"):
        manifest.add_output(out / name)
    for p in feature_files:
        manifest.add_output(p)
    total = series.deltas.sum()
    print(f"gen: {sc.pop.n} zones, {series.t} days, {total:.0f} cases "
          f"({total / sc.pop.total:.1%} of population) -> {out}")
    return manifest


def _resolve_config(args) -> InferenceConfig:
    base = read_config(args.config) if args.config else InferenceConfig()
    active = ACTIVE_WEIGHTS[args.model]
    given = {k: getattr(args, k) for k in CLI_DEFAULTS if getattr(args, k) is not None}
    stray = [k for k in given if k not in active]
    if stray:
        flags = ", ".join(_FLAG_FOR[k] for k in stray)
        raise UsageError(f"{flags} not used by --model {args.model}")
    kw = {}
    from_file = args.config is not None
    for k in active:
        if k in given:
            kw[k] = float(given[k])
        elif not (from_file and getattr(base, k) != 0):
            kw[k] = CLI_DEFAULTS[k]
    for name, attr in (("tol", "tol"), ("max_iters", "max_iters"), ("seed", "seed")):
        val = getattr(args, attr)
        if val is not None:
            kw[name] = val
    return dataclasses.replace(base, **kw)


def cmd_infer(args) -> RunManifest:
    cfg = _resolve_config(args)
    out = _out_dir(args.out)
    manifest = RunManifest("infer", {}, seed=cfg.seed)
    pop, series = _load_outbreak(args, manifest)
    states = states_from_deltas(series, pop)
    x = None
    if args.model in ("datpri", "d2pri"):
        paths = _feature_paths(args)
        if not paths:
            raise UsageError(f"--model {args.model} needs feature files (--features a.csv,b.csv)")
        slices, names = read_feature_slices(paths)
        for p in paths:
            manifest.add_input(p)
        x = build_feature_tensor([self_feature(pop.n), *slices], ["self", *names])
    if args.config:
        manifest.add_input(args.config)

    t0 = time.perf_counter()
    res = spgd_infer(states, x, cfg, variant=args.model)
    elapsed = time.perf_counter() - t0

    write_network(out / "network.csv", res.g)
    res.write_trace(out / "trace.csv")
    write_config(out / "config.json", cfg)
    manifest.config = {"model": args.model, **cfg.to_dict()}
    for name in ("network.csv", "trace.csv", "config.json"):
        manifest.add_output(out / name)
    if res.w is not None:
        write_vector(out / "weights.csv", ["feature", "weight"], zip(x.names, map(float, res.w)))
        manifest.add_output(out / "weights.csv")
    summary = (f"infer: model={args.model} iterations={res.iterations} converged={res.converged} "
               f"objective={fmt(res.objective)} time={elapsed:.2f}s")
    truth = args.truth or (Path(args.data) / "network.csv" if args.data else None)
    if truth and Path(truth).exists():
        g_true = read_network(truth, pop)
        summary += f" cosine={cosine_similarity(res.g, g_true):.4f}"
    print(summary)
    return manifest


def cmd_predict(args) -> RunManifest:
    out = _out_dir(args.out)
    manifest = RunManifest("predict", {k: v for k, v in vars(args).items() if k != "func"})
    pop, series = _load_outbreak(args, manifest)
    g = read_network(args.network, pop)
    manifest.add_input(args.network)
    horizons = tuple(args.horizons)
    fit_days = args.fit_days
    starts = args.start_days
    if starts is None:
        first = fit_days or max(2, series.t // 3)
        starts = list(range(first, series.t - max(horizons) + 1))
    if args.alpha_adj is not None:
        alpha = float(args.alpha_adj)
    else:
        days = fit_days or min(starts)
        alpha = fit_alpha_adjustment(g, states_from_deltas(series.prefix(days), pop))
    rep = prediction_report(g, alpha, series, pop, starts, horizons)
    rep.write_csv(out / "prediction.csv")
    manifest.config["alpha_adj"] = alpha
    manifest.add_output(out / "prediction.csv")
    print(f"predict: alpha_adj={alpha:.6g}, {len(rep.start_days)} start days")
    for _, h, v in rep.rows():
        print(f"  horizon {h}: MAPE {v:.4f}")
    return manifest


def cmd_simulate(args) -> RunManifest:
    out = _out_dir(args.out)
    manifest = RunManifest("simulate", {k: v for k, v in vars(args).items() if k != "func"})
    pop, series = _load_outbreak(args, manifest)
    g_d2 = read_network(args.d2pri, pop)
    g_b = read_network(args.basic, pop)
    manifest.add_input(args.d2pri)
    manifest.add_input(args.basic)
    curves = simulate_comparison(g_d2, g_b, series, pop, warmup=args.warmup)
    curves.write_csv(out / "curves.csv")
    manifest.add_output(out / "curves.csv")
    for name in curves.names:
        day, height = curves.peak(name)
        print(f"simulate: {name:7s} peak day {day:4d}, height {height:.1f}")
    return manifest


def cmd_rank(args) -> RunManifest:
    out = _out_dir(args.out)
    manifest = RunManifest("rank", {k: v for k, v in vars(args).items() if k != "func"})
    pop, series = _load_outbreak(args, manifest)
    g = read_network(args.network, pop)
    manifest.add_input(args.network)
    pr = pagerank_importance(g, damping=args.damping)
    share = infection_count_importance(series)
    rows = sorted(zip(pop.zone_ids, pr, share), key=lambda r: (-r[1], r[0]))
    write_vector(out / "ranking.csv", ["zone_id", "pagerank", "infection_share"],
                 [(z, float(a), float(b)) for z, a, b in rows])
    manifest.add_output(out / "ranking.csv")
    print("rank: top zones by PageRank: " + ", ".join(r[0] for r in rows[:5]))
    return manifest


def cmd_eval(args) -> RunManifest:
    out = _out_dir(args.out)
    manifest = RunManifest("eval", {k: v for k, v in vars(args).items() if k != "func"})
    g = read_network(args.network)
    ref = read_network(args.truth)
    manifest.add_input(args.network)
    manifest.add_input(args.truth)
    report = {"cosine": cosine_similarity(g, ref)}
    for name, net in (("network", g), ("truth", ref)):
        try:
            fit = degree_distribution(net, args.bins)
            report[f"{name}_degree_exponent"] = fit.exponent
            report[f"{name}_degree_residual"] = fit.residual
        except MetanetError as exc:
            log.warning("degree fit for %s skipped: %s", name, exc)
    write_vector(out / "eval.csv", ["metric", "value"], sorted(report.items()))
    manifest.add_output(out / "eval.csv")
    for k, v in sorted(report.items()):
        print(f"eval: {k} = {v:.6g}")
    return manifest


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metanet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scenario and outbreak")
    p.add_argument("--zones", type=int, default=50)
    p.add_argument("--attach-m", type=int, default=3, help="edges added per new zone")
    p.add_argument("--alpha", type=float, help="infection rate (default: within-zone R0 of 2)")
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--days", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.0, help="std of the noise on incidence rates")
    p.add_argument("--volume-scale", type=float, default=5000.0)
    p.add_argument("--seed-zones", type=int, default=3, help="zones infected on day 1")
    p.add_argument("--seed-cases", type=float, default=20.0, help="cases per seeded zone")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("infer", help="infer the infection network")
    _add_data_flags(p)
    p.add_argument("--features", help="comma-separated feature CSVs (default: DATA/features/*.csv)")
    p.add_argument("--model", choices=VARIANTS, default="d2pri")
    p.add_argument("--lambda", dest="lam", type=float, help=f"degree prior weight (default {CLI_DEFAULTS['lam']:g})")
    p.add_argument("--eta", type=float, help=f"data prior weight (default {CLI_DEFAULTS['eta']:g})")
    p.add_argument("--mu", type=float, help=f"feature weight penalty (default {CLI_DEFAULTS['mu']:g})")
    p.add_argument("--l1", type=float, help=f"L1 weight (default {CLI_DEFAULTS['l1']:g})")
    p.add_argument("--l2", type=float, help=f"L2 weight (default {CLI_DEFAULTS['l2']:g})")
    p.add_argument("--tol", type=float, help="relative objective change to stop (default 1e-7)")
    p.add_argument("--max-iters", type=int, help="iteration cap (default 5000)")
    p.add_argument("--seed", type=int, help="seed of the random starting point (default 0)")
    p.add_argument("--config", help="JSON inference config; flags override it")
    p.add_argument("--truth", help="ground-truth network CSV for the summary cosine")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("predict", help="multi-day rollout prediction error")
    _add_data_flags(p)
    p.add_argument("--network", required=True)
    p.add_argument("--horizons", type=_int_list, default=list(DEFAULT_HORIZONS))
    p.add_argument("--start-days", type=_day_range, help="'a:b' or comma list (1-based)")
    p.add_argument("--fit-days", type=int, help="days used to fit the rate adjustment")
    p.add_argument("--alpha-adj", type=float, help="fixed rate adjustment instead of fitting")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="compare whole-outbreak simulations")
    _add_data_flags(p)
    p.add_argument("--d2pri", required=True, help="network inferred with priors")
    p.add_argument("--basic", required=True, help="network inferred without priors")
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rank", help="rank zones by PageRank and by case share")
    _add_data_flags(p)
    p.add_argument("--network", required=True)
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="compare a network with a reference")
    p.add_argument("--network", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        manifest = args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (MetanetError, OSError, ValueError) as exc:
        print(f"metanet {args.command}: error: {exc}", file=sys.stderr)
        return 1
    manifest.duration_s = round(time.perf_counter() - t0, 3)
    manifest.write(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
