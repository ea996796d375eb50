"""Command-line surface: ``simulate``, ``test``, ``power``, ``propensity``
and ``combine``.

All randomness flows from a single ``--seed``; worker counts never change
results, so reruns with the same inputs produce byte-identical output
files. Every file-producing run also writes a JSON manifest recording the
command, inputs, seed, library versions and output paths.

Exit codes: 0 success, 2 configuration or usage error, 3 data validation
failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .adjustment import AdjustmentSpec
from .data import load_cohort, load_genetic_map, write_cohort, write_genetic_map
from .errors import AemrError, ConfigError, DataError
from .experiments import run_power
from .meiosis import ImpossibleHaplotype
from .randtest import (
    STATISTICS,
    _prepare,
    almost_exact_test,
    fisher_combine,
)
from .simgen import default_params, make_cohort, sidecar_dict

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _fmt(x) -> str:
    """Numbers at 6 significant digits for TSV output."""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("AEMR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"AEMR_THREADS must be an integer, got {env!r}")
    return 1


def _write_manifest(path: Path, command: str, inputs: dict, outputs: list) -> None:
    manifest = {
        "command": command,
        "inputs": inputs,
        "versions": {
            "aemr": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": [str(o) for o in outputs],
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _emit(args, lines: list, command: str, inputs: dict) -> None:
    """Write TSV lines to --out (with manifest) or stdout (no manifest)."""
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.write_text(text, encoding="utf-8")
        _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), command, inputs, [out])
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    params = default_params(n_trios=args.n, beta=args.beta, p=args.p)
    sim = make_cohort(params, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    map_path = out / "genetic_map.tsv"
    hap_path = out / "haplotypes.tsv"
    pheno_path = out / "phenotypes.tsv"
    sidecar_path = out / "cohort.json"
    write_genetic_map(sim.cohort.map, map_path)
    write_cohort(sim.cohort, hap_path, pheno_path)
    sidecar_path.write_text(
        json.dumps(sidecar_dict(sim), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_manifest(
        out / "manifest.json",
        "simulate",
        {"n": args.n, "p": args.p, "beta": args.beta, "seed": args.seed},
        [map_path, hap_path, pheno_path, sidecar_path],
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# test
# ---------------------------------------------------------------------------


def _spec_from_config(entry: dict, gmap, default_side: str) -> AdjustmentSpec:
    if "locus" not in entry:
        raise ConfigError(f"instrument entry needs a 'locus': {entry}")
    locus = int(entry["locus"])
    side = entry.get("side", default_side)
    if "heterozygous_span" in entry:
        return AdjustmentSpec(
            instrument=locus, side=side, heterozygous_span=int(entry["heterozygous_span"])
        )
    if "window_cm" in entry:
        return AdjustmentSpec.from_map_distance(gmap, locus, side, float(entry["window_cm"]))
    if "window_radius_loci" in entry:
        return AdjustmentSpec.from_locus_radius(
            locus, side, int(entry["window_radius_loci"]), gmap.p
        )
    lower = entry.get("lower")
    upper = entry.get("upper")
    return AdjustmentSpec(instrument=locus, side=side, lower=lower, upper=upper)


def _load_config(path: Path) -> dict:
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _load_config_cohort(cfg: dict, base: Path):
    for key in ("map", "haplotypes", "phenotypes"):
        if key not in cfg:
            raise ConfigError(f"config is missing the {key!r} path")
    gmap = load_genetic_map(_resolve(base, cfg["map"]))
    cohort = load_cohort(
        gmap, _resolve(base, cfg["haplotypes"]), _resolve(base, cfg["phenotypes"])
    )
    return gmap, cohort


_TEST_HEADER = "instrument\tbeta0\tstat\tp\tp_corrected\tK\tseed"


def _test_row(label, result) -> str:
    cells = [
        label,
        _fmt(result.beta0),
        _fmt(result.observed_stat),
        _fmt(result.p_value),
        _fmt(result.p_value_corrected),
        str(result.draws),
        str(result.seed if result.seed is not None else ""),
    ]
    return "\t".join(cells)


def _cmd_test(args) -> int:
    cfg_path = Path(args.config)
    cfg = _load_config(cfg_path)
    base = cfg_path.parent
    gmap, cohort = _load_config_cohort(cfg, base)

    entries = cfg.get("instruments")
    if not entries:
        raise ConfigError("config must list at least one instrument")
    default_side = cfg.get("side", "maternal")
    specs = [_spec_from_config(e, gmap, default_side) for e in entries]
    for spec in specs:
        if not 1 <= spec.instrument <= gmap.p:
            raise ConfigError(f"config references unknown locus {spec.instrument}")

    K = int(args.K if args.K is not None else cfg.get("K", 1000))
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    statistic = args.statistic or cfg.get("statistic", "clever_F")
    epsilon = float(cfg.get("epsilon", 0.0))
    tail = cfg.get("tail", "upper")
    beta0_cfg = args.beta0 if args.beta0 is not None else cfg.get("beta0", 0.0)
    beta0_list = [float(b) for b in (beta0_cfg if isinstance(beta0_cfg, list) else [beta0_cfg])]
    joint = bool(cfg.get("joint", False))
    combine = bool(cfg.get("combine", not joint))
    threads = _threads(args)

    lines = [_TEST_HEADER]
    records = []
    for beta0 in beta0_list:
        if joint:
            result = almost_exact_test(
                cohort, specs, beta0, statistic, K, seed,
                epsilon=epsilon, tail=tail, threads=threads,
            )
            label = "+".join(str(s.instrument) for s in specs)
            lines.append(_test_row(label, result))
            records.append((label, result))
        else:
            results = []
            for spec in specs:
                result = almost_exact_test(
                    cohort, spec, beta0, statistic, K, seed,
                    epsilon=epsilon, tail=tail, threads=threads,
                )
                lines.append(_test_row(str(spec.instrument), result))
                records.append((str(spec.instrument), result))
                results.append(result)
            if combine and len(results) > 1:
                fisher = fisher_combine(
                    [r.p_value for r in results], zero_clamp=1.0 / (K + 1)
                )
                fisher_corr = fisher_combine([r.p_value_corrected for r in results])
                lines.append(
                    "\t".join(
                        [
                            "fisher",
                            _fmt(beta0),
                            _fmt(fisher.statistic),
                            _fmt(fisher.p_value),
                            _fmt(fisher_corr.p_value),
                            str(K),
                            str(seed),
                        ]
                    )
                )

    if args.json:
        payload = [
            {
                "instrument": label,
                "beta0": r.beta0,
                "stat": r.observed_stat,
                "p": r.p_value,
                "p_corrected": r.p_value_corrected,
                "K": r.draws,
                "seed": r.seed,
                "statistic": r.statistic,
                "informative": r.informative,
            }
            for label, r in records
        ]
        lines = [json.dumps(payload, indent=2, sort_keys=True)]
    _emit(args, lines, "test", {"config": str(cfg_path), "seed": seed, "K": K, "statistic": statistic})
    return EXIT_OK


# ---------------------------------------------------------------------------
# power
# ---------------------------------------------------------------------------


def _cmd_power(args) -> int:
    beta0_grid = args.beta0 if args.beta0 else [0.0]
    statistics = args.statistic if args.statistic else ["plain_F", "clever_F"]
    for stat in statistics:
        if stat not in STATISTICS:
            raise ConfigError(f"unknown statistic {stat!r}; choose from {STATISTICS}")
    params = default_params(n_trios=args.n, beta=args.true_beta, p=args.p)
    cells = run_power(
        params,
        beta0_grid=beta0_grid,
        statistics=statistics,
        reps=args.reps,
        K=args.K,
        alpha=args.alpha,
        seed=args.seed,
        threads=_threads(args),
    )
    lines = ["statistic\tbeta0\treps\trejections\trate"]
    for cell in cells:
        lines.append(
            "\t".join(
                [cell.statistic, _fmt(cell.beta0), str(cell.reps), str(cell.rejections), _fmt(cell.rate)]
            )
        )
    if args.json:
        payload = [
            {
                "statistic": c.statistic,
                "beta0": c.beta0,
                "reps": c.reps,
                "rejections": c.rejections,
                "rate": c.rate,
                "alpha": c.alpha,
                "p_values": list(c.p_values),
            }
            for c in cells
        ]
        lines = [json.dumps(payload, indent=2, sort_keys=True)]
    _emit(
        args,
        lines,
        "power",
        {
            "n": args.n,
            "reps": args.reps,
            "K": args.K,
            "alpha": args.alpha,
            "seed": args.seed,
            "true_beta": args.true_beta,
            "beta0_grid": beta0_grid,
            "statistics": statistics,
        },
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# propensity
# ---------------------------------------------------------------------------


def _cmd_propensity(args) -> int:
    gmap = load_genetic_map(args.map)
    cohort = load_cohort(gmap, args.haplotypes, args.phenotypes)
    entry = {"locus": args.instrument, "side": args.side}
    if args.lower is not None:
        entry["lower"] = args.lower
    if args.upper is not None:
        entry["upper"] = args.upper
    if args.window_radius_loci is not None:
        entry["window_radius_loci"] = args.window_radius_loci
    if args.window_cm is not None:
        entry["window_cm"] = args.window_cm
    spec = _spec_from_config(entry, gmap, args.side)
    prep = _prepare(cohort, [spec], args.epsilon)
    ps = prep.specs[0]
    lines = ["family\tlocus\tside\tpi\tinformative"]
    for side_name, pis in (("maternal", ps.pi_m), ("paternal", ps.pi_f)):
        if pis is None:
            continue
        for trio, pi in zip(cohort.trios, pis):
            informative = "1" if 0.0 < pi < 1.0 else "0"
            lines.append(
                f"{trio.family_id}\t{spec.instrument}\t{side_name}\t{pi!r}\t{informative}"
            )
    _emit(
        args,
        lines,
        "propensity",
        {
            "map": str(args.map),
            "haplotypes": str(args.haplotypes),
            "phenotypes": str(args.phenotypes),
            "instrument": args.instrument,
            "side": args.side,
            "epsilon": args.epsilon,
        },
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# combine
# ---------------------------------------------------------------------------


def _cmd_combine(args) -> int:
    path = Path(args.input)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {path}")
    if not lines or lines[0] != _TEST_HEADER:
        raise ConfigError(f"{path}: expected a test TSV with header {_TEST_HEADER!r}")
    rows = [line.split("\t") for line in lines[1:] if line.strip()]
    rows = [r for r in rows if r[0] != "fisher"]
    if not rows:
        raise ConfigError(f"{path}: no per-instrument rows to combine")

    by_beta0: dict = {}
    for r in rows:
        by_beta0.setdefault(r[1], []).append(r)
    out_lines = [_TEST_HEADER] + ["\t".join(r) for r in rows]
    for beta0, group in by_beta0.items():
        ps = [float(r[3]) for r in group]
        ks = {int(r[5]) for r in group}
        clamp = 1.0 / (min(ks) + 1)
        fisher = fisher_combine(ps, zero_clamp=clamp)
        ps_corr = [float(r[4]) for r in group]
        fisher_corr = fisher_combine(ps_corr)
        seeds = {r[6] for r in group}
        out_lines.append(
            "\t".join(
                [
                    "fisher",
                    beta0,
                    _fmt(fisher.statistic),
                    _fmt(fisher.p_value),
                    _fmt(fisher_corr.p_value),
                    str(min(ks)) if len(ks) == 1 else "",
                    seeds.pop() if len(seeds) == 1 else "",
                ]
            )
        )
    _emit(args, out_lines, "combine", {"input": str(path)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aemr",
        description=(
            "Within-family Mendelian randomization via randomization tests "
            "under a Haldane meiosis model."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic trio cohort")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--n", type=int, default=2000, help="number of trios (default 2000)")
    sim.add_argument("--p", type=int, default=150, help="number of loci (default 150)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--beta", type=float, default=0.0, help="true causal effect")
    sim.set_defaults(func=_cmd_simulate)

    test = sub.add_parser("test", help="run randomization tests from a config file")
    test.add_argument("--config", required=True, help="JSON analysis config")
    test.add_argument("--out", help="output TSV (default stdout)")
    test.add_argument("--K", type=int, help="override Monte Carlo draw count")
    test.add_argument("--seed", type=int, help="override master seed")
    test.add_argument("--beta0", type=float, help="override hypothesized effect")
    test.add_argument("--statistic", choices=STATISTICS, help="override test statistic")
    test.add_argument("--threads", type=int, help="worker threads (or AEMR_THREADS)")
    test.add_argument("--json", action="store_true", help="full-precision JSON output")
    test.set_defaults(func=_cmd_test)

    power = sub.add_parser("power", help="size/power experiment on synthetic cohorts")
    power.add_argument("--out", help="output TSV (default stdout)")
    power.add_argument("--n", type=int, default=2000)
    power.add_argument("--p", type=int, default=150)
    power.add_argument("--reps", type=int, default=400)
    power.add_argument("--K", type=int, default=500)
    power.add_argument("--alpha", type=float, default=0.05)
    power.add_argument("--seed", type=int, default=0)
    power.add_argument("--true-beta", type=float, default=0.0, dest="true_beta")
    power.add_argument(
        "--beta0", type=float, action="append", help="hypothesized effect (repeatable)"
    )
    power.add_argument(
        "--statistic", action="append", choices=STATISTICS, help="statistic (repeatable)"
    )
    power.add_argument("--threads", type=int, help="worker threads (or AEMR_THREADS)")
    power.add_argument("--json", action="store_true")
    power.set_defaults(func=_cmd_power)

    prop = sub.add_parser("propensity", help="print per-trio propensity scores")
    prop.add_argument("--map", required=True)
    prop.add_argument("--haplotypes", required=True)
    prop.add_argument("--phenotypes", required=True)
    prop.add_argument("--instrument", type=int, required=True)
    prop.add_argument("--side", choices=("maternal", "paternal", "genotype"), default="maternal")
    prop.add_argument("--lower", type=int)
    prop.add_argument("--upper", type=int)
    prop.add_argument("--window-radius", type=int, dest="window_radius_loci")
    prop.add_argument("--window-cm", type=float, dest="window_cm")
    prop.add_argument("--epsilon", type=float, default=0.0)
    prop.add_argument("--out", help="output TSV (default stdout)")
    prop.set_defaults(func=_cmd_propensity)

    comb = sub.add_parser("combine", help="append Fisher-combined rows to a test TSV")
    comb.add_argument("--input", required=True, help="TSV produced by `aemr test`")
    comb.add_argument("--out", help="output TSV (default stdout)")
    comb.set_defaults(func=_cmd_combine)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"aemr: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ImpossibleHaplotype) as err:
        print(f"aemr: data validation error: {err}", file=sys.stderr)
        return EXIT_DATA
    except AemrError as err:
        print(f"aemr: error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
