"""Experiment implementations and the run orchestrator.

Every experiment writes CSV files into the output directory and returns a
list of :class:`Check` results. :func:`run_experiment` writes the manifest
before any data (status ``running``) and finalizes it afterwards with file
hashes, timings and the check outcomes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..circle_kernel import (
    kernel_density,
    kernel_density_fourier,
    kernel_density_wrapped,
    log_kernel,
)
from ..conditioned_model import ConditionedParams, ground_states, yspec_fields
from ..dual_percolation import CSV_HEADER, build_low_energy_graph, connected_clusters
from ..errors import RegimeError, UsageError
from ..gibbs_sampler import (
    SamplerConfig,
    bad_config_probe,
    batch_means_stderr,
    chessboard_check,
    conditioned_model,
    random_invariant_function,
    run_chain,
    torus_model,
    write_series,
)
from ..path_dynamics import PathGrid, free_path_batch, girsanov_log_density, phibound_holds
from ..polymer_expansion import brute_force_logZ, kp_check, random_system, read_system, truncated_expansion
from ..rotor_model import XYParams, dobrushin_sum
from .config import ExperimentConfig, dumps

__all__ = ["Check", "RunRecord", "run_experiment", "EXPERIMENT_FUNCS", "default_out_dir"]

log = logging.getLogger(__name__)

OUT_ENV = "ROTOR_GIBBS_OUT"


@dataclass
class Check:
    name: str
    passed: bool | None  # None: not evaluable (e.g. empty series)
    detail: str = ""


@dataclass
class RunRecord:
    experiment: str
    config: dict
    seed: int
    input_hash: str
    out_dir: str
    status: str = "running"
    files: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    error: str | None = None
    version: str = __version__
    threads: int = 1

    @property
    def failed(self) -> bool:
        return self.status != "ok"


def default_out_dir(experiment: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "rotor-gibbs-out")) / experiment


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _band(mean, stderr, bound):
    """Three-sigma band: ``|mean| + 3 stderr < bound``."""
    return abs(mean) + 3 * stderr < bound


def _high_temperature(beta_J: float) -> bool:
    return dobrushin_sum(XYParams(beta_J), 2)[1]


# --- experiments -------------------------------------------------------------

def exp_kernel_table(cfg: ExperimentConfig, out: Path, threads: int):
    deltas = np.linspace(0.0, np.pi, cfg["n_delta"])
    rows = []
    for t in cfg["times"]:
        dens = kernel_density(deltas, t)
        logs = log_kernel(deltas, t)
        rows += [(t, d, k, lk) for d, k, lk in zip(deltas, dens, logs)]
    _write_csv(out / "kernel_table.csv", ["t", "delta", "density", "log_density"], rows)

    nodes, weights = np.polynomial.legendre.leggauss(256)
    y = np.pi * (nodes + 1.0)
    checks = []
    for t in cfg["times"]:
        total = float(np.pi * np.sum(weights * kernel_density(y, t)))
        checks.append(Check(f"normalization t={t:g}", abs(total - 1) <= 1e-10, f"integral={total:.17g}"))
        if t >= 0.5:
            gap = float(np.max(np.abs(kernel_density_fourier(deltas, t) - kernel_density_wrapped(deltas, t))))
            checks.append(Check(f"representations agree t={t:g}", gap <= 1e-12, f"max gap={gap:.3g}"))
    return checks


def exp_groundstate_scan(cfg: ExperimentConfig, out: Path, threads: int):
    rows, checks = [], []
    for bj in cfg["beta_J"]:
        for t in cfg["times"]:
            p = ConditionedParams(bj, 1.0, t)
            try:
                gs = ground_states(p, cfg["L"], verify=True)
            except RegimeError as exc:
                rows.append((bj, t, p.h, math.nan, math.nan, math.nan, "regime"))
                log.info("skipping beta_J=%g t=%g: %s", bj, t, exc)
                continue
            rows.append((bj, t, p.h, gs.epsilon_t, gs.m, gs.oracle_epsilon, "ok"))
            gap = abs(gs.epsilon_t - gs.oracle_epsilon)
            checks.append(Check(f"epsilon oracle beta_J={bj:g} t={t:g}", gap <= cfg["tolerance"], f"gap={gap:.3g}"))
    _write_csv(out / "groundstate.csv", ["beta_J", "t", "h", "epsilon_t", "m", "oracle_epsilon", "status"], rows)
    return checks


def exp_dobrushin(cfg: ExperimentConfig, out: Path, threads: int):
    d = cfg["dimension"]
    rows = []
    for bj in cfg["beta_J"]:
        total, ok = dobrushin_sum(XYParams(bj), d)
        rows.append((bj, d, total, ok))
    _write_csv(out / "dobrushin.csv", ["beta_J", "dimension", "sum", "satisfied"], rows)
    threshold = 1.0 / (2 * d)
    agree = all(ok == (bj < threshold) for bj, _, _, ok in rows)
    return [Check("satisfied iff beta_J < 1/(2d)", agree, f"threshold={threshold:g}")]


def exp_girsanov_check(cfg: ExperimentConfig, out: Path, threads: int):
    grid = PathGrid(cfg["t"], cfg["n_steps"])
    bj, n, seed = cfg["beta_J"], cfg["n_paths"], cfg["seed"]
    logs, bound_ok = [], 0
    for start in range(0, n, cfg["chunk"]):
        seeds = [seed + k for k in range(start, min(n, start + cfg["chunk"]))]
        traj = free_path_batch(seeds, cfg["L"], grid)
        logs.append(np.atleast_1d(girsanov_log_density(traj, bj, 1.0)))
        bound_ok += int(np.sum(phibound_holds(traj, bj, 1.0)))
    lf = np.concatenate(logs)
    F = np.exp(lf)
    mean, se = float(F.mean()), float(F.std(ddof=1) / math.sqrt(n))
    _write_csv(out / "girsanov_paths.csv", ["path", "log_F"], enumerate(lf))
    _write_csv(out / "girsanov.csv", ["n_paths", "mean_F", "stderr", "z", "phibound_violations"],
               [(n, mean, se, (mean - 1) / se if se > 0 else 0.0, n - bound_ok)])
    return [
        Check("E[F] = 1 within 3 stderr", abs(mean - 1) <= 3 * se, f"mean={mean:.6f} stderr={se:.6f}"),
        Check("pathwise potential bound", bound_ok == n, f"violations={n - bound_ok}"),
    ]


def _chain_cfg(cfg, seed):
    return SamplerConfig(cfg["sweeps"], min(cfg["burn_in"], cfg["sweeps"]), cfg["proposal_width"], seed,
                         cfg.params.get("thin", 1))


def _starts(p, L):
    gs = ground_states(p, L, verify=False) if p.field_ratio < 1 else None
    if gs is None:
        return {"ri": np.full((L, L), np.pi / 2), "le": np.full((L, L), 3 * np.pi / 2)}
    return {"ri": gs.x_ri, "le": gs.x_le}


def exp_metastability(cfg: ExperimentConfig, out: Path, threads: int):
    L, t = cfg["L"], cfg["t"]
    rows, checks = [], []
    for bi, bj in enumerate(cfg["beta_J"]):
        p = ConditionedParams(bj, 1.0, t)
        model = conditioned_model(p, L, cfg["form"])
        for si, (name, x0) in enumerate(_starts(p, L).items()):
            seed = cfg["seed"] + 2 * bi + si
            s = run_chain(x0, model, _chain_cfg(cfg, seed))
            stem = f"series_bJ{bj:g}_{name}"
            write_series(out / f"{stem}.csv", s, {"experiment": "metastability", "beta_J": bj, "t": t, "L": L,
                                                  "start": name, "seed": seed, "form": cfg["form"],
                                                  "width": s.width, **{k: cfg[k] for k in ("sweeps", "burn_in", "thin")}})
            if len(s) == 0:
                rows.append((bj, name, math.nan, math.nan, math.nan, math.nan, s.width))
                checks.append(Check(f"beta_J={bj:g} start={name}", None, "empty series"))
                continue
            mean, se = float(s.m_lr.mean()), batch_means_stderr(s.m_lr)
            lo, hi = float(s.m_lr.min()), float(s.m_lr.max())
            rows.append((bj, name, mean, se, lo, hi, s.width))
            if _high_temperature(bj):
                checks.append(Check(f"beta_J={bj:g} start={name}: |mean M_LR| < 0.05 (3 sigma)",
                                    _band(mean, se, 0.05), f"mean={mean:.4f} stderr={se:.4f}"))
            elif name == "ri":
                checks.append(Check(f"beta_J={bj:g} start=ri: M_LR > 0.9 throughout", lo > 0.9,
                                    f"min={lo:.4f} mean={mean:.4f}"))
            else:
                checks.append(Check(f"beta_J={bj:g} start=le: M_LR < -0.9 throughout", hi < -0.9,
                                    f"max={hi:.4f} mean={mean:.4f}"))
    _write_csv(out / "metastability.csv",
               ["beta_J", "start", "mean_M_LR", "stderr", "min_M_LR", "max_M_LR", "width"], rows)
    return checks


def exp_percolation_scan(cfg: ExperimentConfig, out: Path, threads: int):
    L, t = cfg["L"], cfg["t"]
    summary, checks = [], []
    for bi, bj in enumerate(cfg["beta_J"]):
        p = ConditionedParams(bj, 1.0, t)
        gs = ground_states(p, L, verify=False)
        params, fields = p.xy_params(), yspec_fields(p, L)
        model = conditioned_model(p, L, cfg["form"])
        delta_main = cfg["delta_factor"] * bj
        deltas = sorted(set(cfg["deltas"]) | {delta_main})
        fractions, spans, mono = [], [], True
        for si, (name, x0) in enumerate(_starts(p, L).items()):
            seed = cfg["seed"] + 2 * bi + si
            s = run_chain(x0, model, _chain_cfg(cfg, seed), snapshot_every=cfg["snapshot_every"])
            for sweep, x in s.snapshots:
                rows, prev = [], None
                for d in deltas:
                    g = build_low_energy_graph(x, params, fields, d, gs)
                    rep = connected_clusters(g)
                    if prev is not None and np.any(prev & ~g.vertices):
                        mono = False
                    prev = g.vertices
                    rows.append((d, g.n_vertices, rep.n_clusters, rep.largest_fraction, rep.spans,
                                 rep.orientation_of_largest))
                    if d == delta_main:
                        fractions.append(rep.largest_fraction)
                        spans.append(rep.spans)
                        summary.append((bj, name, sweep, d, rep.largest_fraction, rep.spans,
                                        rep.orientation_of_largest))
                _write_csv(out / f"percolation_bJ{bj:g}_{name}_{sweep}.csv", CSV_HEADER.split(","), rows)
        checks.append(Check(f"beta_J={bj:g}: V_delta monotone in delta", mono))
        if not fractions:
            checks.append(Check(f"beta_J={bj:g}: cluster signature", None, "no snapshots"))
        elif _high_temperature(bj):
            checks.append(Check(f"beta_J={bj:g}: largest fraction < 0.2 and not spanning",
                                max(fractions) < 0.2 and not any(spans), f"max fraction={max(fractions):.3f}"))
        else:
            checks.append(Check(f"beta_J={bj:g}: largest fraction > 0.9 and spanning",
                                min(fractions) > 0.9 and all(spans), f"min fraction={min(fractions):.3f}"))
    _write_csv(out / "percolation_summary.csv",
               ["beta_J", "start", "sweep", "delta", "largest_fraction", "spans", "orientation"], summary)
    return checks


def exp_badprobe(cfg: ExperimentConfig, out: Path, threads: int):
    rows, checks = [], []
    for bi, bj in enumerate(cfg["beta_J"]):
        p = ConditionedParams(bj, 1.0, cfg["t"])
        sc = _chain_cfg(cfg, cfg["seed"] + 2 * bi)
        res = bad_config_probe(cfg["L_list"], p, sampler_config=sc, form=cfg["form"])
        for r in res:
            rows.append((bj, r.L, r.mean_xi, r.stderr_xi, r.mean_eta, r.stderr_eta, r.gap, r.stderr))
        if cfg["sweeps"] <= cfg["burn_in"]:
            checks.append(Check(f"beta_J={bj:g}: gap", None, "empty series"))
        elif _high_temperature(bj):
            last = max(res, key=lambda r: r.L)
            checks.append(Check(f"beta_J={bj:g}: gap(L={last.L}) <= 0.1 (3 sigma)",
                                last.gap + 3 * last.stderr <= 0.1, f"gap={last.gap:.4f} stderr={last.stderr:.4f}"))
        else:
            worst = min(r.gap for r in res)
            checks.append(Check(f"beta_J={bj:g}: gap >= 0.5 for every L", worst >= 0.5, f"min gap={worst:.4f}"))
    _write_csv(out / "badprobe.csv",
               ["beta_J", "L", "mean_xi", "stderr_xi", "mean_eta", "stderr_eta", "gap", "stderr"], rows)
    return checks


def exp_chessboard(cfg: ExperimentConfig, out: Path, threads: int):
    rows, ok = [], True
    for bi, bj in enumerate(cfg["beta_J"]):
        p = ConditionedParams(bj, 1.0, cfg["t"])
        model = torus_model(2, p.xy_params(), yspec_fields(p, 2))
        for k in range(cfg["n_functions"]):
            rng = np.random.default_rng(cfg["seed"] + bi * cfg["n_functions"] + k)
            fs = [random_invariant_function(rng) for _ in range(4)]
            lhs, rhs, holds = chessboard_check(fs, model, cfg["n_grid"], seed=cfg["seed"] + k)
            rows.append((bj, k, lhs, rhs, holds))
            ok &= holds
    _write_csv(out / "chessboard.csv", ["beta_J", "index", "lhs", "rhs", "holds"], rows)
    return [Check("chessboard estimate holds for every f-set", ok, f"{len(rows)} cases")]


def exp_polymer_check(cfg: ExperimentConfig, out: Path, threads: int):
    from ..polymer_expansion import PolymerSystem

    checks = []
    single = [kp_check(PolymerSystem.from_lists([[0]], [w]))[1] for w in (0.3, 0.4)]
    checks.append(Check("single-polymer KP values 0.8155 / 1.0873",
                        abs(single[0] - 0.8155) < 5e-5 and abs(single[1] - 1.0873) < 5e-5,
                        f"{single[0]:.6f} / {single[1]:.6f}"))
    systems = []
    if cfg["system_file"]:
        systems.append(read_system(cfg["system_file"]))
    rng = np.random.default_rng(cfg["seed"])
    while len(systems) < cfg["n_systems"] + (1 if cfg["system_file"] else 0):
        n = int(rng.integers(1, cfg["max_polymers"] + 1))
        s = random_system(rng, n, cfg["n_sites"], cfg["max_support"], cfg["weight_scale"])
        if kp_check(s)[0]:
            systems.append(s)
    rows, worst = [], 0.0
    for k, s in enumerate(systems):
        holds, ratio = kp_check(s)
        exact = brute_force_logZ(s)
        approx = truncated_expansion(s, cfg["max_order"])
        gap = abs(approx - exact)
        rows.append((k, len(s), ratio, holds, exact, approx, gap))
        if holds:
            worst = max(worst, gap)
    _write_csv(out / "polymer.csv", ["index", "n_polymers", "worst_ratio", "kp_holds", "logZ", "truncated", "gap"], rows)
    checks.append(Check(f"|truncated({cfg['max_order']}) - logZ| <= {cfg['tolerance']:g}",
                        worst <= cfg["tolerance"], f"max gap={worst:.3g}"))
    return checks


EXPERIMENT_FUNCS = {
    "kernel-table": exp_kernel_table,
    "groundstate-scan": exp_groundstate_scan,
    "dobrushin": exp_dobrushin,
    "girsanov-check": exp_girsanov_check,
    "metastability": exp_metastability,
    "percolation-scan": exp_percolation_scan,
    "badprobe": exp_badprobe,
    "chessboard": exp_chessboard,
    "polymer-check": exp_polymer_check,
}


# --- orchestration -----------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out: Path, record: RunRecord) -> None:
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(asdict(record), indent=2, sort_keys=True, default=str) + "\n")
    tmp.replace(out / "manifest.json")


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> RunRecord:
    """Run one experiment; never raises for numeric failures (they land in the record)."""
    if threads < 1:
        raise UsageError(f"threads must be >= 1, got {threads}")
    out = Path(out_dir) if out_dir is not None else default_out_dir(cfg.experiment)
    out.mkdir(parents=True, exist_ok=True)
    text = dumps(cfg)
    record = RunRecord(cfg.experiment, dict(cfg.params), cfg["seed"],
                       hashlib.sha256((text + __version__).encode()).hexdigest(), str(out), threads=threads)
    _write_manifest(out, record)
    (out / "config.toml").write_text(text)
    started = time.perf_counter()
    try:
        checks = EXPERIMENT_FUNCS[cfg.experiment](cfg, out, threads)
        record.checks = [asdict(c) for c in checks]
        record.status = "failed" if any(c.passed is False for c in checks) else "ok"
    except (FloatingPointError, ArithmeticError, RuntimeError, ValueError) as exc:
        record.status = "error"
        record.error = f"{type(exc).__name__}: {exc}"
        log.error("experiment %s aborted: %s", cfg.experiment, record.error)
    record.timings = {"wall_seconds": time.perf_counter() - started, "platform": platform.platform()}
    record.files = {p.name: _sha256(p) for p in sorted(out.iterdir())
                    if p.is_file() and p.name not in ("manifest.json", "manifest.json.tmp")}
    _write_manifest(out, record)
    return record
