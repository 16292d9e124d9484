"""Convert experiment CSV output to gnuplot-style ``.dat`` files.

Columns are whitespace separated and headers are ``#`` comments.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from ..errors import UsageError

__all__ = ["emit_plot_data"]


def _read(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path} is empty")
    return rows[0], rows[1:]


def _write(path: Path, header, rows, comments=()):
    with open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(str(v) for v in row) + "\n")
    return path


def _num(v):
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def _series_files(files):
    return [f for f in files if f.name.startswith("series_") and f.suffix == ".csv"]


def _aggregate_series(series, out: Path):
    """Per-replica M_LR traces and mean +- stderr across replicas per recorded sweep."""
    made = []
    traces = {}
    for f in series:
        header, rows = _read(f)
        i_s, i_m = header.index("sweep"), header.index("M_LR")
        traces[f.stem] = {int(r[i_s]): float(r[i_m]) for r in rows}
        made.append(_write(out / f"{f.stem}_mlr.dat", ["sweep", "M_LR"],
                           ([r[i_s], r[i_m]] for r in rows)))
    sweeps = sorted(set().union(*[set(t) for t in traces.values()])) if traces else []
    agg = []
    for s in sweeps:
        vals = np.array([t[s] for t in traces.values() if s in t])
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
        agg.append([s, _num(float(vals.mean())), _num(se), len(vals)])
    made.append(_write(out / "series_aggregate.dat", ["sweep", "mean_M_LR", "stderr", "n_replicas"], agg,
                       [f"replicas: {', '.join(sorted(traces))}"]))
    return made


def emit_plot_data(inputs, out_dir=None):
    """Write ``.dat`` files for the given CSV files or directories.

    * single-column CSV -> ``index value``
    * ``series_*.csv`` -> per-replica ``sweep M_LR`` traces plus an aggregate
    * ``badprobe.csv`` -> ``L gap stderr`` blocks per beta_J
    * any other CSV -> the same columns, whitespace separated

    Returns the list of written paths.
    """
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files += sorted(p.glob("*.csv"))
        elif p.is_file():
            files.append(p)
        else:
            raise UsageError(f"input {p} does not exist")
    if not files:
        raise UsageError("no CSV inputs found")
    out = Path(out_dir) if out_dir is not None else files[0].parent
    out.mkdir(parents=True, exist_ok=True)
    made = []
    series = _series_files(files)
    if series:
        made += _aggregate_series(series, out)
    for f in files:
        if f in series:
            continue
        header, rows = _read(f)
        if f.name == "badprobe.csv":
            i_b, i_l, i_g, i_e = (header.index(k) for k in ("beta_J", "L", "gap", "stderr"))
            with open(out / "badprobe_gap.dat", "w") as fh:
                fh.write("# L gap stderr\n")
                for bj in dict.fromkeys(r[i_b] for r in rows):
                    fh.write(f"\n# beta_J={bj}\n")
                    for r in rows:
                        if r[i_b] == bj:
                            fh.write(f"{r[i_l]} {r[i_g]} {r[i_e]}\n")
            made.append(out / "badprobe_gap.dat")
        elif len(header) == 1:
            made.append(_write(out / f"{f.stem}.dat", ["index", header[0]],
                               ([k, r[0]] for k, r in enumerate(rows))))
        else:
            made.append(_write(out / f"{f.stem}.dat", header, rows))
    return made
