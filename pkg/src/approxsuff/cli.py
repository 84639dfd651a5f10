"""Command-line experiment runner.

Subcommands write CSV/JSON tables and SVG charts into ``--out``.  Exit
status is 0 when every check passes, 1 when a check fails and 2 for usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import asymptotics as asy
from .checks import run_all
from .codec import CRITERIA, CSV_COLUMNS, CodeSpec, PointCodebook, error, evaluate
from .families import Family
from .lattice import Lattice
from .quadrature import Prior
from .report import line_chart, write_csv, write_json
from .typespace import DEFAULT_MAX_TYPES, enumerate_types, product_type_dist

log = logging.getLogger("approxsuff")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

RATE_COLUMNS = CSV_COLUMNS + ["code_length_over_log_n"]


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


DEFAULT_CODES = {
    "visible_point": CodeSpec("visible", "quantize_euclid", "point", 1.0),
    "blind_mdl": CodeSpec("blind", "mdl_fisher", "point", 1.0),
    "blind_cells": CodeSpec("blind", "quantize_euclid", "cell_mixture", 1.0),
}


@dataclass
class ExperimentConfig:
    """Everything a run needs; read from an INI file with ``load_config``."""

    k: int = 2
    eps_bd: float = 0.02
    prior_kind: str = "uniform"
    prior_support: tuple | None = None
    nodes: int = 64
    ns: list = field(default_factory=lambda: [64, 256, 1024, 4096])
    ts: list = field(default_factory=lambda: [1.0])
    codes: dict = field(default_factory=lambda: dict(DEFAULT_CODES))
    criteria: list = field(default_factory=lambda: list(CRITERIA))
    seed: int = 0
    max_types: int = DEFAULT_MAX_TYPES
    mc_samples: int = 4000
    units: str = "nats"
    converse_ns: list = field(default_factory=lambda: [64, 256, 1024])
    divergence_ns: list = field(default_factory=lambda: [64, 256, 1024, 4096])
    packing_ns: list = field(default_factory=lambda: [256, 1024, 4096])
    qg_ts: list = field(default_factory=lambda: [0.8, 0.4, 0.2, 0.1])

    def family(self) -> Family:
        return Family(self.k, self.eps_bd)

    def prior(self) -> Prior:
        return Prior(self.family(), self.prior_kind, self.prior_support, self.nodes)

    def validate(self) -> None:
        if any(n < 1 for n in self.ns + self.converse_ns + self.divergence_ns + self.packing_ns):
            raise ConfigError("all sample sizes must be positive")
        if any(t <= 0 for t in self.ts + self.qg_ts):
            raise ConfigError("all spans must be positive")
        if not self.codes:
            raise ConfigError("the code list is empty")
        bad = set(self.criteria) - set(CRITERIA)
        if bad or not self.criteria:
            raise ConfigError(f"criteria must be a non-empty subset of {CRITERIA}, got {self.criteria}")
        if self.units not in ("nats", "bits"):
            raise ConfigError("units must be 'nats' or 'bits'")
        try:
            self.prior()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | None) -> ExperimentConfig:
    """Read a key = value INI file; missing keys keep their defaults.

    Sections: ``[family]`` (k, eps_bd), ``[prior]`` (kind, support, nodes),
    ``[sweep]`` (n, t, criteria), ``[codes]`` (name = mode encoder decoder
    [coords]), ``[run]`` (seed, max_types, mc_samples, units) and
    ``[converse]`` (n, divergence_n, packing_n, quantized_t).
    """
    cfg = ExperimentConfig()
    if path is None:
        cfg.validate()
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if parser.has_section("family"):
            fam = parser["family"]
            cfg.k = fam.getint("k", cfg.k)
            cfg.eps_bd = fam.getfloat("eps_bd", cfg.eps_bd)
        if parser.has_section("prior"):
            pr = parser["prior"]
            cfg.prior_kind = pr.get("kind", cfg.prior_kind)
            cfg.nodes = pr.getint("nodes", cfg.nodes)
            if "support" in pr:
                vals = _floats(pr["support"])
                if len(vals) % 2:
                    raise ConfigError("prior.support needs lo/hi pairs")
                cfg.prior_support = tuple(zip(vals[::2], vals[1::2]))
        if parser.has_section("sweep"):
            sw = parser["sweep"]
            cfg.ns = _ints(sw.get("n", "")) if "n" in sw else cfg.ns
            cfg.ts = _floats(sw.get("t", "")) if "t" in sw else cfg.ts
            if "criteria" in sw:
                cfg.criteria = sw["criteria"].replace(",", " ").split()
        if parser.has_section("codes"):
            codes = {}
            for name, value in parser["codes"].items():
                parts = value.replace(",", " ").split()
                if len(parts) not in (3, 4):
                    raise ConfigError(f"code {name!r}: expected 'mode encoder decoder [coords]'")
                coords = parts[3] if len(parts) == 4 else "moment"
                codes[name] = CodeSpec(parts[0], parts[1], parts[2], 1.0, coords)
            cfg.codes = codes
        if parser.has_section("run"):
            run = parser["run"]
            cfg.seed = run.getint("seed", cfg.seed)
            cfg.max_types = run.getint("max_types", cfg.max_types)
            cfg.mc_samples = run.getint("mc_samples", cfg.mc_samples)
            cfg.units = run.get("units", cfg.units)
        if parser.has_section("converse"):
            cv = parser["converse"]
            cfg.converse_ns = _ints(cv["n"]) if "n" in cv else cfg.converse_ns
            cfg.divergence_ns = _ints(cv["divergence_n"]) if "divergence_n" in cv else cfg.divergence_ns
            cfg.packing_ns = _ints(cv["packing_n"]) if "packing_n" in cv else cfg.packing_ns
            cfg.qg_ts = _floats(cv["quantized_t"]) if "quantized_t" in cv else cfg.qg_ts
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value in {path}: {exc}") from exc
    cfg.validate()
    return cfg


# -- rate sweep ------------------------------------------------------------------


def _run_cell(args):
    cfg, name, spec, n, t, criterion = args
    spec = CodeSpec(spec.mode, spec.encoder, spec.decoder, t, spec.lattice_coords)
    fam = cfg.family()
    try:
        rep = evaluate(spec, fam, n, cfg.prior(), criterion, max_types=cfg.max_types,
                       mc_samples=cfg.mc_samples, seed=cfg.seed)
    except Exception as exc:  # reported per row, the sweep goes on
        return name, None, f"{type(exc).__name__}: {exc}"
    return name, rep, ""


def _map(fn, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_rate_sweep(cfg: ExperimentConfig, out: str, workers: int = 1) -> int:
    scale = 1.0 / math.log(2.0) if cfg.units == "bits" else 1.0
    jobs = [(cfg, name, spec, n, t, crit)
            for name, spec in cfg.codes.items() for t in cfg.ts for crit in cfg.criteria
            for n in cfg.ns]
    rows, curves, failed = [], {}, 0
    for (_, name, spec, n, t, crit), (_, rep, err) in zip(jobs, _map(_run_cell, jobs, workers)):
        if rep is None:
            failed += 1
            log.warning("%s n=%d t=%g %s skipped: %s", name, n, t, crit, err)
            row = {c: "" for c in RATE_COLUMNS}
            row.update(n=n, k=cfg.k, t=repr(float(t)), mode=spec.mode, encoder=spec.encoder,
                       decoder=spec.decoder, criterion=crit, exact_or_mc="infeasible",
                       seed=cfg.seed)
            rows.append(row)
            continue
        row = rep.row()
        if crit == "relative_entropy":
            row["error_nats_or_l1"] = repr(rep.value * scale)
        row["code_length_nats"] = repr(rep.code_length_nats * scale)
        row["code_length_over_log_n"] = repr(rep.code_length_nats / math.log(n)) if n > 1 else ""
        rows.append(row)
        curves.setdefault((name, t, crit), []).append((n, rep.value * (scale if crit == "relative_entropy" else 1.0)))
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "rate_sweep.csv"), RATE_COLUMNS, rows)

    series = [(f"{name} t={t:g} {'KL' if crit == 'relative_entropy' else 'L1'}",
               [p[0] for p in pts], [p[1] for p in pts]) for (name, t, crit), pts in curves.items()]
    line_chart(os.path.join(out, "rate_sweep_error.svg"), series, "Average error against n",
               "n", f"error ({cfg.units} / L1)", logx=True)
    rate = []
    for t in cfg.ts:
        xs = [n for n in cfg.ns if n > 1]
        ys = [Lattice(cfg.family(), n, t).code_length / math.log(n) for n in xs]
        rate.append((f"t={t:g}", xs, ys))
    line_chart(os.path.join(out, "rate_sweep_rate.svg"), rate, "Code length over log n",
               "n", "ln|Z| / ln n", logx=True, hline=(0.5 * cfg.family().d, "d/2"))
    log.info("rate sweep: %d rows, %d infeasible", len(rows), failed)
    return EXIT_OK


# -- converse suite -----------------------------------------------------------------


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _strictly(xs, up: bool) -> bool:
    return all((b > a) if up else (b < a) for a, b in zip(xs, xs[1:]))


def clarke_barron_sweep(cfg: ExperimentConfig) -> dict:
    fam = cfg.family()
    prior = Prior(fam, "uniform", ((fam.eps_bd, 1.0 - fam.eps_bd),) * fam.d) if fam.d == 1 else cfg.prior()
    terms = [asy.clarke_barron(fam, prior, n) for n in cfg.converse_ns]
    disc = [abs(c.discrepancy) for c in terms]
    ok = _strictly(disc, up=False) and disc[-1] < 0.05
    return {"status": _status(ok), "support": prior.support,
            "terms": [c.__dict__ for c in terms],
            "check": "|discrepancy| strictly decreasing and < 0.05 nats at the largest n"}


def pythagoras_checks(cfg: ExperimentConfig, instances: int = 100) -> dict:
    rng = np.random.default_rng(cfg.seed)
    fam = cfg.family()
    worst, rows = 0.0, []
    for n in (4, 8, 16):
        ts = enumerate_types(n, fam.k)
        for _ in range(instances):
            m = int(rng.integers(1, 6))
            zs = [fam.clamp(rng.dirichlet(np.ones(fam.k))[1:]) for _ in range(m + 1)]
            comps = [product_type_dist(fam, z, ts) for z in zs[:-1]]
            r = asy.pythagorean_residual(rng.dirichlet(np.ones(m)), comps,
                                         product_type_dist(fam, zs[-1], ts))
            worst = max(worst, abs(r))
        rows.append({"n": n, "instances": instances})
    return {"status": _status(worst < 1e-10), "max_abs_residual": worst, "runs": rows}


def packing_suite(cfg: ExperimentConfig) -> dict:
    fam = cfg.family()
    support = cfg.prior().support
    base = asy.packing_witness(fam, support, 1, 1024, 1.0)
    sweep = []
    for n in cfg.packing_ns:
        M = math.ceil(n ** 0.25)
        w = asy.best_certified_bound(fam, support, M, n)
        sweep.append({"n": n, "M": M, "alpha": w.alpha, "certified": w.certified,
                      "bound": w.bound if w.certified else 0.0, "min_prob": w.min_prob})
    bounds = [s["bound"] for s in sweep]
    ok = base.certified and base.bound >= 1.0 and all(b >= a for a, b in zip(bounds, bounds[1:]))
    return {"status": _status(ok), "M1_n1024_alpha1": base.__dict__, "sweep": sweep,
            "check": "M=1 certifies >= 1; certified bounds nondecreasing in n"}


def divergence_sweep(cfg: ExperimentConfig) -> dict:
    fam = cfg.family()
    prior = cfg.prior()
    rows = []
    for n in cfg.divergence_ns:
        M = math.ceil(n ** 0.25)
        y = asy.best_point_codebook(fam, prior, M)
        rep = error(PointCodebook(fam, enumerate_types(n, fam.k, cfg.max_types), y), prior,
                    "relative_entropy")
        rows.append({"n": n, "M": M, "codebook": y.tolist(), "error_nats": rep.value})
    errs = [r["error_nats"] for r in rows]
    ok = _strictly(errs, up=True) and errs[-1] / errs[0] >= 3.0
    return {"status": _status(ok), "rows": rows,
            "check": "error of the best M=ceil(n^0.25) visible point code strictly increasing, "
                     "last/first >= 3"}


def run_converse(cfg: ExperimentConfig, out: str, workers: int = 1) -> int:
    if cfg.k != 2:
        raise ConfigError("the converse suite is implemented for the Bernoulli family (k = 2)")
    parts = {
        "clarke_barron": clarke_barron_sweep,
        "pythagoras": pythagoras_checks,
        "packing": packing_suite,
        "divergence": divergence_sweep,
    }
    report = {name: fn(cfg) for name, fn in parts.items()}
    report["seed"] = cfg.seed
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "converse.json"), report)
    d = report["divergence"]["rows"]
    line_chart(os.path.join(out, "converse_divergence.svg"),
               [("best visible point code", [r["n"] for r in d], [r["error_nats"] for r in d])],
               "Relative-entropy error with M = ceil(n^0.25)", "n", "error (nats)", logx=True)
    failed = [name for name in parts if report[name]["status"] != "PASS"]
    for name in parts:
        print(f"{report[name]['status']} {name}")
    return EXIT_FAIL if failed else EXIT_OK


def run_clarke_barron(cfg: ExperimentConfig, out: str, workers: int = 1) -> int:
    res = clarke_barron_sweep(cfg) if cfg.k == 2 else None
    if res is None:
        terms = [asy.clarke_barron(cfg.family(), cfg.prior(), n).__dict__ for n in cfg.converse_ns]
        res = {"status": "PASS", "terms": terms}
    fam = cfg.family()
    if fam.d == 1:
        sanity = asy.clarke_barron(fam, Prior(fam, "uniform", (0.0, 1.0), graded=True), 1)
        ok = abs(sanity.lhs_mi - (math.log(2.0) - 0.5)) < 1e-6
        res["n1_sanity"] = {"lhs_mi": sanity.lhs_mi, "expected": math.log(2.0) - 0.5,
                            "status": _status(ok)}
        if not ok:
            res["status"] = "FAIL"
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "clarke_barron.json"), res)
    print(f"{res['status']} clarke_barron")
    return EXIT_OK if res["status"] == "PASS" else EXIT_FAIL


def run_quantized_gaussian(cfg: ExperimentConfig, out: str, workers: int = 1) -> int:
    rows = []
    for t in cfg.qg_ts:
        kl, a_kl = asy.sup_over_alpha(t, "kl")
        l1, a_l1 = asy.sup_over_alpha(t, "l1")
        rows.append({"t": repr(t), "sup_kl_nats": repr(kl), "argmax_alpha_kl": repr(a_kl),
                     "sup_l1": repr(l1), "argmax_alpha_l1": repr(a_l1)})
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "quantized_gaussian.csv"), list(rows[0]), rows)
    ts = [float(r["t"]) for r in rows]
    line_chart(os.path.join(out, "quantized_gaussian.svg"),
               [("sup KL", ts, [float(r["sup_kl_nats"]) for r in rows]),
                ("sup L1", ts, [float(r["sup_l1"]) for r in rows])],
               "Quantized normal against the normal", "span t", "distance", logx=True)
    kls = [float(r["sup_kl_nats"]) for r in rows]
    order = np.argsort(ts)[::-1]
    ok = _strictly([kls[i] for i in order], up=False)
    print(f"{_status(ok)} quantized_gaussian_decreasing")
    return EXIT_OK if ok else EXIT_FAIL


def run_pythagoras(cfg: ExperimentConfig, out: str, workers: int = 1) -> int:
    res = pythagoras_checks(cfg)
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "pythagoras.json"), res)
    print(f"{res['status']} pythagoras (max |residual| {res['max_abs_residual']:.3g})")
    return EXIT_OK if res["status"] == "PASS" else EXIT_FAIL


def run_selftest(cfg: ExperimentConfig | None = None, out: str | None = None, workers: int = 1) -> int:
    results = run_all()
    for r in results:
        print(f"{_status(r.ok)} {r.name}: {r.detail}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


COMMANDS = {
    "rate-sweep": run_rate_sweep,
    "converse": run_converse,
    "clarke-barron": run_clarke_barron,
    "quantized-gaussian": run_quantized_gaussian,
    "pythagoras-check": run_pythagoras,
    "selftest": run_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="approxsuff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="INI file with experiment settings")
        p.add_argument("--out", metavar="DIR", default="out", help="output directory")
        p.add_argument("--workers", type=int, default=1, metavar="N", help="worker processes")
        p.add_argument("--seed", type=int, default=None, metavar="U64",
                       help="seed for sampled quantities (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return COMMANDS[args.command](cfg, args.out, args.workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
