"""Command-line front end.

    tclevy simulate  --config C [--seed N] [--out DIR]
    tclevy estimate  (--config C | --panel P) [--seed N] [--workers N] [--out DIR]
    tclevy sweep     --config C [--seed N] [--workers N] [--out DIR]
    tclevy verify    [--out DIR]
    tclevy reproduce --figure {1,2,3} [--seed N] [--workers N] [--out DIR]

Exit status: 0 on success, 1 when a verification check fails, 2 on invalid input.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiment import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    SCHEMA,
    load_config,
    parse_config,
    manifest,
    map_replications,
    now_iso,
    preset,
    replication_dir,
    run_replication,
    stream_id_for,
    with_overrides,
    write_json,
    write_replication,
)
from .levy import NigParams, nig_bar_nu, nig_psi2
from .numerics import ContractError, Grid1D, RngStream
from .oracle import ModelTruth, composite_cf, fourier_pair_residual, psi2_from_fd
from .simulate import ConfigurationError, IncrementPanel, empirical_cf, simulate_panel
from .timechange import CirChange, GammaChange, cir_rate_path, integrate_blocks, laplace

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2


class InvalidInput(Exception):
    pass


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    """Shortest decimal that round-trips to the same double; empty for missing values."""
    return "" if v is None else repr(float(v))


# ---------------------------------------------------------------------------
# Runs


def run_simulate(cfg: ExperimentConfig, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in range(cfg.replications):
        panel = simulate_panel(cfg.components, cfg.timechange, cfg.n, cfg.delta,
                               RngStream(cfg.master_seed, stream_id_for(0, r)))
        path = out / f"panel_{r:04d}.csv"
        panel.to_csv(path)
        paths.append(path)
    return paths


def run_estimate(cfg: ExperimentConfig, out: Path, panel: IncrementPanel | None = None) -> dict:
    """Estimate once per replication (or once on ``panel``) and write the manifest."""
    started = now_iso()
    out.mkdir(parents=True, exist_ok=True)
    if panel is not None:
        sid = int(panel.seed.get("stream_id", 0))
        res = run_replication(cfg, 0, sid, panel=panel)
        write_replication(res, replication_dir(out, 0))
        records = [res.record]
    else:
        jobs = [(cfg, r, stream_id_for(0, r), out) for r in range(cfg.replications)]
        records = map_replications(jobs, cfg.workers)
    body = manifest(cfg, records, started)
    write_json(out / "manifest.json", body)
    return body


SWEEP_HEADER = ["kappa", "n", "replication", "error_supw", "error_l1"]
SUMMARY_HEADER = ["kappa", "n", "count", "excluded", "supw_q1", "supw_median", "supw_q3",
                  "l1_q1", "l1_median", "l1_q3"]


def sweep_cells(cfg: ExperimentConfig) -> list[tuple]:
    base_kappa = getattr(cfg.timechange, "kappa_speed", None)
    kappas = cfg.sweep.get("kappa") or [base_kappa]
    ns = cfg.sweep.get("n") or [cfg.n]
    return list(itertools.product(kappas, ns))


def run_sweep(cfg: ExperimentConfig, out: Path) -> dict:
    if not cfg.sweep:
        raise InvalidInput("sweep needs at least one grid axis ('kappa' or 'n')")
    started = now_iso()
    out.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(cfg)
    jobs, keys = [], []
    for c, (kappa, n) in enumerate(cells):
        cell_cfg = with_overrides(cfg, kappa=kappa, n=n)
        for r in range(cfg.replications):
            jobs.append((cell_cfg, r, stream_id_for(c, r), None))
            keys.append((kappa, n))
    records = map_replications(jobs, cfg.workers)
    for rec, (kappa, n) in zip(records, keys):
        rec["kappa"], rec["n"] = kappa, n
    _write_rows(out / "sweep.csv", SWEEP_HEADER,
                [[_fmt(r["kappa"]), r["n"], r["replication"],
                  _fmt(r.get("error_supw")), _fmt(r.get("error_l1"))] for r in records])
    summary, cell_aggs = [], []
    for kappa, n in cells:
        agg = aggregate([r for r in records if r["kappa"] == kappa and r["n"] == n])
        cell_aggs.append({"kappa": kappa, "n": n, **agg})
        row = [_fmt(kappa), n, agg["count"], agg["excluded"]]
        for key in ("error_supw", "error_l1"):
            q = agg[key]
            row += [_fmt(q[s]) if q else "" for s in ("q1", "median", "q3")]
        summary.append(row)
    _write_rows(out / "sweep_summary.csv", SUMMARY_HEADER, summary)
    body = manifest(cfg, records, started, {"cells": cell_aggs})
    write_json(out / "manifest.json", body)
    return body


# ---------------------------------------------------------------------------
# Verification


def _check(name, measured, tolerance, passed) -> dict:
    return {"name": name, "measured": measured, "tolerance": tolerance, "passed": bool(passed)}


def run_verify(seed: int = 7) -> dict:
    """Oracle checks with measured values and tolerances."""
    p = NigParams(1.0, -0.05, 1.0, -0.5)
    checks = []

    res = fourier_pair_residual(p, Grid1D.symmetric(20.0, 0.1), Grid1D.uniform(-60.0, 60.0, 0.005))
    checks.append(_check("fourier_pair_residual", res, 1e-4, res < 1e-4))

    cfg = preset("gamma")
    truth = ModelTruth(cfg.components, cfg.timechange, cfg.delta)
    n = 100_000
    panel = simulate_panel(cfg.components, cfg.timechange, n, cfg.delta, RngStream(seed, 0))
    tol = 3 / np.sqrt(n)
    worst = 0.0
    for u in ([0.5, 0, 0], [0, 0.3, 0], [0, 0, 0.4], [0.2, -0.1, 0.1], [-0.3, 0.2, 0.25]):
        diff = empirical_cf(panel, u) - composite_cf(truth, u)
        worst = max(worst, abs(diff.real), abs(diff.imag))
    checks.append(_check("composite_cf_monte_carlo", worst, tol, worst < tol))

    g = laplace(GammaChange(1.0, 1.0), 1.0, 1.0).real
    checks.append(_check("gamma_laplace_z1", g, 1e-15, abs(g - 0.5) < 1e-15))

    c = CirChange(1.0, 1.0, 0.1, substeps=10)
    rates = cir_rate_path(c, 0.1, 1, RngStream(seed, 1), paths=n)
    t = integrate_blocks(rates, 0.1, c.substeps)[:, 0]
    worst_se = 0.0
    for z in (0.5, 1.0, 2.0):
        e = np.exp(-z * t)
        se = e.std(ddof=1) / np.sqrt(n)
        worst_se = max(worst_se, abs(e.mean() - laplace(c, 0.1, z).real) / se)
    checks.append(_check("cir_laplace_monte_carlo_se", worst_se, 3.0, worst_se < 3.0))

    cir_truth = ModelTruth(cfg.components, c, 0.1)
    err = abs(psi2_from_fd(cir_truth, 0, 1, 1.0) - nig_psi2(p, 1.0))
    checks.append(_check("psi2_ratio_identity_fd", float(err), 1e-5, err < 1e-5))

    return {"toolkit_version": __version__, "passed": all(ch["passed"] for ch in checks),
            "checks": checks}


# ---------------------------------------------------------------------------
# Figures


def _write_truth(cfg: ExperimentConfig, path: Path) -> None:
    x = cfg.xgrid.points
    vals = nig_bar_nu(cfg.components[cfg.target].nig, x)
    _write_rows(path, ["x", "nu_bar"], [[_fmt(a), _fmt(b)] for a, b in zip(x, vals)])


def reproduce(figure: int, out: Path, seed: int | None, workers: int | None,
              replications: int | None = None) -> dict:
    if figure in (1, 2):
        cfg = preset("gamma" if figure == 1 else "cir", master_seed=seed, workers=workers)
        body = run_estimate(cfg, out)
        _write_truth(cfg, out / "truth.csv")
        return body
    base = preset("cir", master_seed=seed, workers=workers, replications=replications or 100)
    kappa_cfg = with_overrides(base, sweep={"kappa": [0.05, 0.1, 0.5, 1.0]})
    n_cfg = with_overrides(base, sweep={"n": [500, 1000, 3000, 5000]})
    return {"kappa": run_sweep(kappa_cfg, out / "kappa"), "n": run_sweep(n_cfg, out / "n")}


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tclevy", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", type=Path, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--workers", type=int, help="parallel worker processes")
        sp.add_argument("--out", type=Path, help="output directory")
        return sp

    common(sub.add_parser("simulate", help="simulate increment panels"))
    est = common(sub.add_parser("estimate", help="estimate x^2 nu_k from a config or panel"))
    est.add_argument("--panel", type=Path, help="panel CSV written by 'simulate'")
    common(sub.add_parser("sweep", help="replications over a kappa and/or n grid"))
    ver = sub.add_parser("verify", help="run the oracle checks")
    ver.add_argument("--seed", type=int, default=7)
    ver.add_argument("--out", type=Path)
    rep = common(sub.add_parser("reproduce", help="emit figure data"), config=False)
    rep.add_argument("--figure", type=int, choices=(1, 2, 3), required=True)
    rep.add_argument("--replications", type=int, help="replications per sweep cell (figure 3)")
    return parser


def _load(args) -> ExperimentConfig:
    if args.config is None:
        raise InvalidInput("--config is required")
    if not args.config.exists():
        raise InvalidInput(f"{args.config}: no such file")
    cfg = load_config(args.config)
    if args.seed is not None or args.workers is not None:
        cfg = with_overrides(cfg, master_seed=args.seed, workers=args.workers)
    return cfg


def _out(args, cfg: ExperimentConfig | None = None) -> Path:
    if args.out is not None:
        return args.out
    return Path(cfg.out) if cfg is not None else Path("results")


def _report_excluded(body: dict) -> None:
    excluded = body["aggregates"]["excluded"]
    if excluded:
        print(f"warning: {excluded} replication(s) hit an estimator singularity and were excluded",
              file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            report = run_verify(args.seed)
            text = json.dumps(report, indent=2, sort_keys=True)
            print(text)
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                write_json(args.out / "verify.json", report)
            return EXIT_OK if report["passed"] else EXIT_FAILED
        if args.command == "reproduce":
            body = reproduce(args.figure, args.out or Path("results") / f"figure{args.figure}",
                             args.seed, args.workers, args.replications)
            for b in (body.values() if args.figure == 3 else [body]):
                _report_excluded(b)
            return EXIT_OK
        if args.command == "estimate" and args.panel is not None:
            if not args.panel.exists():
                raise InvalidInput(f"{args.panel}: no such file")
            panel = IncrementPanel.from_csv(args.panel)
            cfg = _load(args) if args.config is not None else _config_from_panel(panel)
            _report_excluded(run_estimate(cfg, _out(args, cfg), panel))
            return EXIT_OK
        cfg = _load(args)
        out = _out(args, cfg)
        if args.command == "simulate":
            for path in run_simulate(cfg, out):
                print(path)
        elif args.command == "estimate":
            _report_excluded(run_estimate(cfg, out))
        elif args.command == "sweep":
            _report_excluded(run_sweep(cfg, out))
        return EXIT_OK
    except (ConfigError, ConfigurationError, ContractError, InvalidInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def _config_from_panel(panel: IncrementPanel) -> ExperimentConfig:
    """Rebuild a config from a panel's metadata sidecar (model, delta, n, seed)."""
    if not panel.model:
        raise InvalidInput("panel has no model metadata; pass --config as well")
    raw = {
        "schema": SCHEMA,
        "model": {**panel.model, "delta": panel.delta},
        "n": panel.n,
        "master_seed": int(panel.seed.get("master_seed", 0)),
    }
    return parse_config(raw, "<panel metadata>")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
