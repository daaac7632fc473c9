"""Cross-run statistics over long-format CSVs ``run,step,metric,value``."""
import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

HEADER = ["run", "step", "metric", "value"]


class SchemaError(ValueError):
    def __init__(self, msg, files=()):
        super().__init__(msg + (": " + ", ".join(map(str, files)) if files else ""))
        self.files = list(files)


@dataclass
class AggregateCurve:
    metric: str
    steps: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_runs: int
    filled: np.ndarray  # True where at least one run was forward-filled
    degenerate: bool

    def rows(self):
        for i, s in enumerate(self.steps):
            yield (int(s), self.metric, self.mean[i], self.std[i], self.lo[i], self.hi[i], self.n_runs,
                   int(self.filled[i]), int(self.degenerate))


def write_long_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for run, step, metric, value in rows:
            w.writerow([run, step, metric, "" if value is None or (isinstance(value, float) and np.isnan(value)) else repr(float(value))])


def read_long_csv(path):
    """Return ``{metric: {run: [(step, value)]}}``; blank values read as NaN."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != HEADER:
            raise SchemaError(f"bad header {header!r}", [path])
        out = {}
        for row in rd:
            if len(row) != 4:
                raise SchemaError(f"row with {len(row)} fields", [path])
            run, step, metric, value = row
            out.setdefault(metric, {}).setdefault(int(run), []).append(
                (int(step), float(value) if value != "" else np.nan)
            )
    return out


def summarize(values):
    """Mean, sample std and 95% t-interval of the runs in ``values`` (axis 0)."""
    values = np.asarray(values, dtype=float)
    n = np.sum(~np.isnan(values), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(values, axis=0) if values.size else np.array([])
        std = np.where(n >= 2, np.nanstd(values, axis=0, ddof=1) if values.shape[0] >= 2 else 0.0, 0.0)
        half = np.where(n >= 2, stats.t.ppf(0.975, np.maximum(n - 1, 1)) * std / np.sqrt(np.maximum(n, 1)), 0.0)
    return mean, std, mean - half, mean + half


def aggregate_series(metric, per_run):
    """Aggregate ``{run: [(step, value)]}`` onto the union of steps with forward fill."""
    steps = np.array(sorted({s for series in per_run.values() for s, _ in series}), dtype=int)
    runs = sorted(per_run)
    grid = np.full((len(runs), len(steps)), np.nan)
    filled = np.zeros(len(steps), dtype=bool)
    pos = {s: i for i, s in enumerate(steps)}
    for r, run in enumerate(runs):
        seen = np.zeros(len(steps), dtype=bool)
        for s, v in per_run[run]:
            grid[r, pos[s]] = v
            seen[pos[s]] = True
        last = np.nan
        started = False
        for j in range(len(steps)):
            if seen[j]:
                last = grid[r, j]
                started = True
            elif started:
                grid[r, j] = last
                filled[j] = True
    mean, std, lo, hi = summarize(grid)
    return AggregateCurve(metric, steps, mean, std, lo, hi, len(runs), filled, len(runs) < 2)


def aggregate(paths):
    """Aggregate several per-run CSVs into one ``AggregateCurve`` per metric.

    All files must carry the same metric set; otherwise the offending files
    are listed in the error.
    """
    paths = list(paths)
    if not paths:
        raise SchemaError("no run files given")
    tables = [(p, read_long_csv(p)) for p in paths]
    ref = set(tables[0][1])
    bad = [str(p) for p, t in tables if set(t) != ref]
    if bad:
        raise SchemaError("metric sets differ from the first file", bad)
    merged = {}
    for p, t in tables:
        for metric, runs in t.items():
            for run, series in runs.items():
                key = (str(p), run)
                merged.setdefault(metric, {})[key] = series
    return {m: aggregate_series(m, merged[m]) for m in sorted(merged)}


AGG_HEADER = ["step", "metric", "mean", "std", "ci_low", "ci_high", "n_runs", "filled", "degenerate"]


def write_aggregate_csv(path, curves):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGG_HEADER)
        for c in curves.values():
            for row in c.rows():
                w.writerow([row[0], row[1]] + [("" if np.isnan(x) else repr(float(x))) for x in row[2:6]] + list(row[6:]))


def read_aggregate_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != AGG_HEADER:
            raise SchemaError(f"bad aggregate header {header!r}", [path])
        cols = {}
        for row in rd:
            cols.setdefault(row[1], []).append(row)
    out = {}
    for metric, rows in cols.items():
        f = lambda i: np.array([float(r[i]) if r[i] != "" else np.nan for r in rows])
        out[metric] = AggregateCurve(
            metric, f(0).astype(int), f(2), f(3), f(4), f(5), int(rows[0][6]),
            np.array([r[7] == "1" for r in rows]), rows[0][8] == "1",
        )
    return out
