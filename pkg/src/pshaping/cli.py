"""Command-line experiment runner.

Every subcommand reads an optional TOML config, applies flag overrides,
logs the resolved config and its hash, and appends rows to a CSV whose
header names units. Rows already present for the same config hash and
grid point are not written again.

Exit codes: 0 success, 2 configuration error, 3 non-convergence (partial
output is kept).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import replace
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import gnmodel as gn
from .air import awgn_capacity_4d, rbmd_quadrature
from .constellation import make_pam, make_qam, moments, product_qam, write_table
from .errors import ConfigError, ConvergenceError
from .inputs import pam_for_order, parse_pmf_spec
from .mbopt import RateGrid, fixed_pmf_search, optimize_mb, write_plan
from .pmf import PRESETS, Pmf
from .tables import Table, units_line

log = logging.getLogger("pshaping")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3

# allowed keys and defaults per subcommand; "link" is a nested table
SCHEMAS: dict[str, dict] = {
    "awgn-sweep": {"snr_db": {"lo": -2.0, "hi": 26.0, "step": 0.5}, "formats": [16, 64, 256],
                   "presets": "all", "include_mb": True},
    "fixed-pmf": {"qam_order": 64, "snr_lo_db": 4.0, "snr_hi_db": 20.0, "penalty_db": 0.1},
    "gn-power": {"chi_file": "", "link": {}, "sigma2_ase": 0.0, "qam_order": 64,
                 "pmfs": ["uniform", "64qam-d", "mb"], "p_tx_dbm": {"lo": -8.0, "hi": 6.0, "step": 0.5}},
    "gn-reach": {"chi_file": "", "link": {}, "qam_order": 64, "pmfs": ["uniform", "mb", "64qam-d"],
                 "distances_km": {"lo": 1000.0, "hi": 3000.0, "step": 100.0},
                 "p_tx_dbm": {"lo": -8.0, "hi": 6.0, "step": 0.5}, "rate_4d": 8.86},
    "gn-mismatch": {"chi_file": "", "link": {}, "sigma2_ase": 0.0, "qam_order": 64,
                    "p_tx_dbm": -1.5, "delta_db": {"lo": -4.0, "hi": 6.0, "step": 0.5},
                    "awgn_reference": True},
    "optimize-pmf": {"chi_file": "", "link": {}, "sigma2_ase": 0.0, "qam_order": 64,
                     "p_tx_dbm": [-8.0, 3.0, -1.5], "modes": ["1d"], "pmf_dir": ""},
    "moments": {"presets": "all"},
}


# -- config handling ------------------------------------------------------------

def load_config(path: str | None, command: str) -> dict:
    raw = {}
    if path:
        from .ssfm.config import load_toml

        raw = load_toml(path)
    schema = SCHEMAS[command]
    bad = set(raw) - set(schema)
    if bad:
        raise ConfigError(f"unknown keys for {command}: {', '.join(sorted(bad))}")
    cfg = json.loads(json.dumps(schema))
    cfg.update(raw)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def grid(spec, name: str) -> np.ndarray:
    """A list of values or a ``{lo, hi, step}`` range (inclusive)."""
    if isinstance(spec, dict):
        try:
            lo, hi, step = float(spec["lo"]), float(spec["hi"]), float(spec["step"])
        except KeyError as exc:
            raise ConfigError(f"{name}: range needs lo, hi and step (missing {exc})") from None
        if not step > 0 or hi < lo:
            raise ConfigError(f"{name}: need step > 0 and hi >= lo")
        g = np.round(np.arange(lo, hi + step / 2, step), 10)
    elif isinstance(spec, (int, float)):
        g = np.array([float(spec)])
    else:
        g = np.asarray(spec, dtype=float)
    if g.size == 0:
        raise ConfigError(f"{name}: grid is empty")
    return g


def _gn_setup(cfg: dict):
    ref = gn.read_chi_file(cfg["chi_file"]) if cfg.get("chi_file") else gn.chi_2000km_reference()
    try:
        link = replace(ref.link, **cfg.get("link", {}))
    except TypeError as exc:
        raise ConfigError(f"link: {exc}") from None
    if link.n_spans != ref.link.n_spans and not cfg.get("chi_file"):
        chi = gn.chi_linear_in_spans(ref, link.n_spans)
    else:
        chi = ref.chi
    s2 = float(cfg.get("sigma2_ase") or 0.0) or gn.ase_variance(link)
    return ref, link, chi, s2


def _input(spec, qam_order: int):
    if spec == gn.MATCHED_MB:
        return spec
    return parse_pmf_spec(spec, qam_order)


def _pmf_id(spec) -> str:
    return spec if isinstance(spec, str) else "custom:" + "/".join(f"{v:g}" for v in spec)


# -- output ----------------------------------------------------------------------

def emit(table: Table, out: str | None, cfg: dict, keys: tuple[str, ...]) -> int:
    """Append rows not yet present for this config hash; returns rows written."""
    h = config_hash(cfg)
    if not out:
        sys.stdout.write(units_line(("config_hash",) + table.columns))
        w = csv.writer(sys.stdout)
        w.writerow(("config_hash",) + table.columns)
        for r in table.rows:
            w.writerow((h,) + tuple(_cell(v) for v in r))
        return len(table)
    path = Path(out)
    seen = set()
    exists = path.exists() and path.stat().st_size > 0
    if exists:
        with path.open(newline="") as fh:
            rows = csv.DictReader(line for line in fh if not line.startswith("#"))
            for row in rows:
                seen.add((row.get("config_hash"),) + tuple(row.get(k) for k in keys))
    new = [r for r in table.rows
           if (h,) + tuple(_cell(r[table.columns.index(k)]) for k in keys) not in seen]
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", newline="") as fh:
        if not exists:
            fh.write(units_line(("config_hash",) + table.columns))
            csv.writer(fh).writerow(("config_hash",) + table.columns)
        if new:
            fh.write(f"# config {h} {json.dumps(cfg, sort_keys=True, default=str)}\n")
            w = csv.writer(fh)
            for r in new:
                w.writerow((h,) + tuple(_cell(v) for v in r))
    log.info("wrote %d new rows to %s (%d already present)", len(new), path, len(table) - len(new))
    return len(new)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.ndarray):
        return " ".join(f"{float(x):.6g}" for x in v)
    return str(v)


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# -- subcommands -----------------------------------------------------------------

def cmd_awgn_sweep(cfg: dict, args) -> Table:
    snr = grid(cfg["snr_db"], "snr_db")
    t = Table(("snr_db", "format", "pmf_id", "rbmd_4d", "capacity_4d"))
    presets = cfg["presets"]
    if presets != "all":
        unknown = [p for p in presets if p not in PRESETS]
        if unknown:
            raise ConfigError(f"unknown preset {unknown[0]!r}; available: {', '.join(PRESETS)}")
    for order in cfg["formats"]:
        pam = pam_for_order(int(order))
        inputs = [("uniform", Pmf.uniform(pam.M))]
        for name, pre in PRESETS.items():
            if pre.qam_order == order and (presets == "all" or name in presets):
                inputs.append((name, pre.pmf()))

        def point(s, pam=pam, inputs=inputs):
            rows = [(s, f"{order}qam", n, rbmd_quadrature(pam, p, s).value) for n, p in inputs]
            if cfg["include_mb"]:
                rows.append((s, f"{order}qam", "mb", optimize_mb(pam, s).rbmd))
            return rows

        for rows in _pool_map(point, snr, args.threads):
            for s, f, n, r in rows:
                t.append(float(s), f, n, r, float(awgn_capacity_4d(s)))
    return t


def cmd_fixed_pmf(cfg: dict, args) -> Table:
    order = int(cfg["qam_order"])
    pam = pam_for_order(order)
    lo, hi = float(cfg["snr_lo_db"]), float(cfg["snr_hi_db"])
    if not lo < hi:
        raise ConfigError("snr_lo_db must be below snr_hi_db")
    plan = fixed_pmf_search(pam, lo, hi, float(cfg["penalty_db"]), grid=RateGrid.build(pam, lo, hi))
    if args.out:
        out_dir = Path(args.out).with_suffix("")
        write_plan(plan, out_dir.parent / (out_dir.name + "-pmfs"), f"{order}qam")
    t = Table(("format", "entry", "shaping_snr_db", "snr_lo_db", "snr_hi_db", "capacity_limit_db",
               "one_sided_pmf"))
    for k, e in enumerate(plan.entries):
        t.append(f"{order}qam", k, e.shaping_snr_db, e.snr_range_db[0], e.snr_range_db[1],
                 plan.capacity_limit_db, e.pmf.one_sided())
    return t


def cmd_gn_power(cfg: dict, args) -> Table:
    _, link, chi, s2 = _gn_setup(cfg)
    order = int(cfg["qam_order"])
    pam = pam_for_order(order)
    powers = grid(cfg["p_tx_dbm"], "p_tx_dbm")
    t = Table(("pmf_id", "p_tx_dbm", "snr_eff_db", "mu4", "mu6", "rbmd_4d"))
    for spec in cfg["pmfs"]:
        sw = gn.air_power_sweep(link, chi, pam, _input(spec, order), powers, sigma2_ase=s2)
        log.info("%s: best %.3f bit/4D at %.1f dBm (SNR %.2f dB)", _pmf_id(spec), sw.best_rbmd,
                 sw.best_power_dbm, sw.best_snr_db)
        for r in sw.table.rows:
            t.append(_pmf_id(spec), *r)
    return t


def cmd_gn_reach(cfg: dict, args) -> Table:
    ref, link, _, _ = _gn_setup(cfg)
    order = int(cfg["qam_order"])
    pam = pam_for_order(order)
    policies = {_pmf_id(s): _input(s, order) for s in cfg["pmfs"]}
    t = gn.reach_sweep(link, ref, pam, policies, grid(cfg["distances_km"], "distances_km"),
                       powers_dbm=grid(cfg["p_tx_dbm"], "p_tx_dbm"))
    rate = cfg.get("rate_4d")
    if rate:
        for name in policies:
            log.info("%s reaches %.2f bit/4D up to %.0f km", name, rate,
                     gn.distance_at_rate(t, name, float(rate)))
    return t


def cmd_gn_mismatch(cfg: dict, args) -> Table:
    _, link, chi, s2 = _gn_setup(cfg)
    pam = pam_for_order(int(cfg["qam_order"]))
    deltas = grid(cfg["delta_db"], "delta_db")
    p = float(cfg["p_tx_dbm"])
    fiber = gn.mismatch_sweep(link, chi, pam, deltas, p, sigma2_ase=s2)
    t = Table(("channel",) + fiber.columns)
    for r in fiber.rows:
        t.append("fiber", *r)
    if cfg["awgn_reference"]:
        s0 = gn.effective_snr(float(gn.dbm_to_w(p)), s2, chi,
                              gn.input_moments(pam, Pmf.uniform(pam.M))).snr_eff
        aw = gn.mismatch_sweep(link, gn.ChiCoefficients.zero(), pam, deltas, p,
                               sigma2_ase=float(gn.dbm_to_w(p)) / s0)
        for r in aw.rows:
            t.append("awgn", *r)
    return t


def cmd_optimize_pmf(cfg: dict, args) -> Table:
    from .nlopt import NloptProblem, optimize_pmf, table_v

    _, link, chi, s2 = _gn_setup(cfg)
    pam = pam_for_order(int(cfg["qam_order"]))
    results = []
    for p in grid(cfg["p_tx_dbm"], "p_tx_dbm"):
        for mode in cfg["modes"]:
            r = optimize_pmf(NloptProblem(pam, s2, chi, float(gn.dbm_to_w(p)), mode, args.seed))
            if r.warning:
                log.warning("p_tx %.1f dBm, %s: optimizer flagged non-convergence", p, mode)
            results.append(r)
            if cfg.get("pmf_dir"):
                d = Path(cfg["pmf_dir"])
                d.mkdir(parents=True, exist_ok=True)
                if mode == "1d":
                    qam, p2 = product_qam(pam, r.pmf)
                else:
                    qam, p2 = r.constellation, r.pmf
                write_table(d / f"opt-{mode}-{p:+.1f}dBm.pmf", qam, p2)
    return table_v(results)


def moments_table(presets="all") -> Table:
    """Standardized moments of reference inputs and shaped presets.

    Each preset appears twice: as the MB input optimized at its quoted
    shaping SNR (``source = "mb@<snr>dB"``) and as the rounded one-sided
    probabilities of the catalog (``source = "table"``).
    """
    t = Table(("format", "pmf", "source", "mu4", "mu6"))
    t.append("M-PSK", "uniform", "exact", 1.0, 1.0)
    for order in (16, 64, 256):
        q, p = make_qam(order)
        m = moments(q, p)
        t.append(f"{order}QAM", "uniform", "exact", m.mu4, m.mu6)
    # square with uniform density: closed form
    t.append("continuous 2D", "uniform", "exact", 7 / 5, 81 / 35)
    for name, pre in PRESETS.items():
        if presets != "all" and name not in presets:
            continue
        pam = make_pam(pre.pam_levels)
        for source, p1 in ((f"mb@{pre.shaping_snr_db:g}dB", optimize_mb(pam, pre.shaping_snr_db).pmf),
                           ("table", pre.pmf())):
            q, p = product_qam(pam, p1)
            m = moments(q, p)
            t.append(f"{pre.qam_order}QAM", name, source, m.mu4, m.mu6)
    t.append("continuous 2D", "gaussian", "exact", 2.0, 6.0)
    return t


def cmd_moments(cfg: dict, args) -> Table:
    presets = cfg["presets"]
    if presets != "all":
        unknown = [p for p in presets if p not in PRESETS]
        if unknown:
            raise ConfigError(f"unknown preset {unknown[0]!r}; available: {', '.join(PRESETS)}")
    t = moments_table(presets)
    if not args.out:
        print(f"{'format':<14} {'pmf':<10} {'source':<12} {'mu4':>7} {'mu6':>7}")
        for f, p, src, m4, m6 in t.rows:
            print(f"{f:<14} {p:<10} {src:<12} {m4:7.3f} {m6:7.3f}")
    return t


def cmd_ssfm(args) -> int:
    from .ssfm import SimConfig, append_result, gn_prediction, run_link
    from .ssfm.config import MIN_SYMBOLS, load_toml
    from .ssfm.link import existing_hashes

    raw = load_toml(args.config) if args.config else {}
    sweep = raw.pop("sweep", {}) if args.action == "sweep" else {}
    if args.action == "run" and "sweep" in raw:
        raise ConfigError("[sweep] section is only valid for 'ssfm sweep'")
    base = SimConfig.from_dict(raw)
    if args.seed is not None:
        base = base.replace(seed=args.seed)
    base = base.replace(threads=args.threads)
    bad = set(sweep) - {"seeds", "p_tx_dbm"}
    if bad:
        raise ConfigError(f"unknown sweep keys: {', '.join(sorted(bad))}")
    seeds = [int(s) for s in sweep.get("seeds", [base.seed])]
    powers = grid(sweep["p_tx_dbm"], "p_tx_dbm") if "p_tx_dbm" in sweep else [base.p_tx_dbm]
    out = args.out or "ssfm-results.csv"
    done = existing_hashes(out)
    for p in powers:
        cfgs = [base.replace(p_tx_dbm=float(p), seed=s) for s in seeds]
        for cfg in cfgs:
            log.info("config %s %s", cfg.config_hash(), json.dumps(cfg.to_dict(), sort_keys=True))
        todo = [c for c in cfgs if c.config_hash() not in done]
        if len(todo) < len(cfgs):
            log.info("skipping %d runs already in %s", len(cfgs) - len(todo), out)
        # runs are independent; only the writes are serialized
        results = _pool_map(run_link, todo, args.threads)
        for cfg, r in zip(todo, results):
            append_result(out, cfg, r)
            g = gn_prediction(cfg)
            log.info("p_tx %.2f dBm seed %d: SNR %.3f dB (GN %.3f dB), R_BMD %.3f bit/4D",
                     cfg.p_tx_dbm, cfg.seed, r.channel_snr_db, g.snr_eff_db, r.rbmd_4d)
            if r.warning:
                log.warning("seed %d: fewer than %d symbols, AIR estimate is noisy", cfg.seed,
                            MIN_SYMBOLS)
        snrs = [r.channel_snr_db for r in results]
        if len(snrs) > 1:
            m, sd = float(np.mean(snrs)), float(np.std(snrs, ddof=1))
            log.info("p_tx %.2f dBm: SNR %.3f +- %.3f dB over %d seeds", p, m, sd, len(snrs))
            print(f"p_tx_dbm={p:g} snr_db_mean={m:.4f} snr_db_std={sd:.4f} n={len(snrs)}")
    return EXIT_OK


# keys forming the grid point of each command's rows
KEYS = {
    "awgn-sweep": ("snr_db", "format", "pmf_id"),
    "fixed-pmf": ("format", "entry"),
    "gn-power": ("pmf_id", "p_tx_dbm"),
    "gn-reach": ("distance_km", "policy"),
    "gn-mismatch": ("channel", "delta_db"),
    "optimize-pmf": ("p_tx_dbm", "mode"),
    "moments": ("format", "pmf", "source"),
}

HANDLERS = {
    "awgn-sweep": cmd_awgn_sweep,
    "fixed-pmf": cmd_fixed_pmf,
    "gn-power": cmd_gn_power,
    "gn-reach": cmd_gn_reach,
    "gn-mismatch": cmd_gn_mismatch,
    "optimize-pmf": cmd_optimize_pmf,
    "moments": cmd_moments,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--out", help="output CSV (appended; stdout if omitted)")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--print-schema", action="store_true",
                        help="print the config keys and defaults, then exit")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="pshaping", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("awgn-sweep", parents=[common], help="AWGN rate curves")
    sub.add_parser("fixed-pmf", parents=[common], help="two-PMF plan per QAM")
    g = sub.add_parser("gn", parents=[common], help="GN-model sweeps")
    g.add_argument("action", choices=("power", "reach", "mismatch"))
    sub.add_parser("optimize-pmf", parents=[common], help="PMF optimization on the GN model")
    s = sub.add_parser("ssfm", parents=[common], help="split-step link simulation")
    s.add_argument("action", choices=("run", "sweep"))
    m = sub.add_parser("moments", parents=[common], help="standardized moments table")
    m.add_argument("--preset", nargs="*", help="only these presets")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    name = f"gn-{args.action}" if args.command == "gn" else args.command
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if name == "ssfm":
            if args.print_schema:
                from .ssfm import SimConfig

                print(json.dumps(SimConfig().to_dict(), indent=2))
                return EXIT_OK
            return cmd_ssfm(args)
        if args.print_schema:
            print(json.dumps(SCHEMAS[name], indent=2))
            return EXIT_OK
        if not hasattr(args, "preset"):
            args.preset = None
        cfg = load_config(args.config, name)
        cfg["seed"] = 0 if args.seed is None else args.seed
        args.seed = cfg["seed"]
        if args.preset:
            cfg["presets"] = list(args.preset)
        log.info("command %s config %s %s", name, config_hash(cfg), json.dumps(cfg, sort_keys=True))
        table = HANDLERS[name](cfg, args)
        if name == "moments" and not args.out:
            return EXIT_OK
        emit(table, args.out, cfg, KEYS[name])
        return EXIT_OK
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        log.error("did not converge: %s", exc)
        if exc.partial is not None and args.out:
            Path(args.out).with_suffix(".partial.json").write_text(json.dumps(exc.partial, default=str))
        return EXIT_CONVERGENCE
    except (ValueError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
