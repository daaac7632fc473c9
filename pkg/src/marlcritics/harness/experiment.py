"""Multi-seed experiment orchestration.

An experiment spec is a JSON document::

    {
      "name": "climb",
      "env": {"name": "climb", "params": {}},
      "algorithms": ["IAC", "IACC", "JAC"],
      "runs": 50,
      "seed": 0,
      "config": {"actor_step": 0.1, "n_updates": 500, "k": 0},
      "overrides": {"JAC": {"actor_step": 0.05}},
      "final_eval_episodes": 200,
      "gradient_window": null,
      "workers": 1,
      "output": "climb"
    }

``sweep`` adds ``"grid": {"actor_step": [0.01, 0.1]}`` whose cross product
is run cell by cell.
"""
import copy
import hashlib
import itertools
import json
import os
import platform
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .. import __version__
from ..envs import GENERATIVE, MODELS, make_env
from ..learners import (
    TrainConfig,
    evaluate,
    per_rollout_gradient_variance,
    train,
    variance_by_action,
)
from ..validation import ConfigurationError
from . import curves as agg
from .svgplot import plot

OUTPUT_ENV = "MARLCRITICS_OUTPUT"
CONFIG_FIELDS = {f.name for f in fields(TrainConfig)} - {"algorithm", "seed"}


class SpecError(ConfigurationError):
    pass


class OutputExistsError(FileExistsError):
    pass


@dataclass
class ExperimentSpec:
    name: str
    env: str
    env_params: dict = field(default_factory=dict)
    algorithms: list = field(default_factory=lambda: ["IAC", "IACC", "JAC"])
    runs: int = 20
    seed: int = 0
    config: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    final_eval_episodes: int = 100
    gradient_window: int = None
    workers: int = 1
    output: str = None
    grid: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise SpecError("spec must be a JSON object")
        env = doc.get("env")
        if isinstance(env, str):
            env = {"name": env}
        if not isinstance(env, dict) or "name" not in env:
            raise SpecError("spec needs env.name")
        known = {"name", "env", "algorithms", "runs", "seed", "config", "overrides", "final_eval_episodes",
                 "gradient_window", "workers", "output", "grid"}
        extra = set(doc) - known
        if extra:
            raise SpecError(f"unknown spec keys {sorted(extra)}")
        spec = cls(
            name=str(doc.get("name", env["name"])),
            env=env["name"],
            env_params=dict(env.get("params", {})),
            algorithms=list(doc.get("algorithms", ["IAC", "IACC", "JAC"])),
            runs=doc.get("runs", 20),
            seed=doc.get("seed", 0),
            config=dict(doc.get("config", {})),
            overrides=dict(doc.get("overrides", {})),
            final_eval_episodes=doc.get("final_eval_episodes", 100),
            gradient_window=doc.get("gradient_window"),
            workers=doc.get("workers", 1),
            output=doc.get("output"),
            grid=dict(doc.get("grid", {})),
        )
        return spec.validate()

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read spec {path}: {exc}") from exc
        return cls.from_dict(doc)

    def validate(self):
        if self.env not in MODELS and self.env not in GENERATIVE:
            raise SpecError(f"unknown environment {self.env!r}")
        if not isinstance(self.runs, int) or self.runs < 1:
            raise SpecError("runs must be a positive integer")
        if not self.algorithms:
            raise SpecError("no algorithms given")
        for cfg in [self.config] + list(self.overrides.values()):
            bad = set(cfg) - CONFIG_FIELDS
            if bad:
                raise SpecError(f"unknown config keys {sorted(bad)}")
        bad = set(self.grid) - CONFIG_FIELDS
        if bad:
            raise SpecError(f"unknown grid keys {sorted(bad)}")
        for alg in self.algorithms:
            self.train_config(alg, 0).validate()
        if self.gradient_window is not None and self.gradient_window < 2:
            raise SpecError("gradient_window must be >= 2")
        return self

    def train_config(self, algorithm, seed):
        params = dict(self.config)
        params.update(self.overrides.get(algorithm, {}))
        if self.gradient_window:
            params["record_gradients"] = True
        try:
            return TrainConfig(algorithm=algorithm, seed=seed, **params)
        except TypeError as exc:
            raise SpecError(str(exc)) from exc

    def to_dict(self):
        return {
            "name": self.name,
            "env": {"name": self.env, "params": self.env_params},
            "algorithms": self.algorithms,
            "runs": self.runs,
            "seed": self.seed,
            "config": self.config,
            "overrides": self.overrides,
            "final_eval_episodes": self.final_eval_episodes,
            "gradient_window": self.gradient_window,
            "workers": self.workers,
            "output": self.output,
            "grid": self.grid,
        }


def run_seed(root_seed, run):
    """Seed of run ``run``: a counter-based child of the root seed, so
    adding runs never changes the seeds of existing ones."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=(run,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _one_run(job):
    """Worker: train one (algorithm, run) and return plain data."""
    spec_doc, alg, run = job
    spec = ExperimentSpec.from_dict(spec_doc)
    seed = run_seed(spec.seed, run)
    cfg = spec.train_config(alg, seed)
    out = {"algorithm": alg, "run": run, "seed": seed, "aborted": False, "diagnostic": ""}
    try:
        env = make_env(spec.env, **copy.deepcopy(spec.env_params))
        res = train(env, cfg, run=run)
    except Exception as exc:  # recorded in the manifest, other runs go on
        out.update(aborted=True, diagnostic=f"{type(exc).__name__}: {exc}", rows=[], grads=[], variance=[])
        return out
    rows = res.curve.rows(run)
    if spec.final_eval_episodes and not res.aborted:
        ret, disc, _ = evaluate(env, res.policies, cfg.k, spec.final_eval_episodes, seed + 1, joint=alg == "JAC")
        last = res.curve.update[-1] if res.curve.update else 0
        rows += [(run, last, "final_return", ret), (run, last, "final_discounted_return", disc)]
    grads, variance = [], []
    if spec.gradient_window:
        for rec in res.records:
            for j, v in zip(rec.indices, rec.values):
                grads.append((run, rec.update, rec.agent, int(j), float(v)))
        n_agents = 1 if alg == "JAC" else env.n_agents
        for i in range(n_agents):
            recs = [r for r in res.records if r.agent == i]
            n_act = res.policies.policy.n_actions if alg == "JAC" else env.n_actions[i]
            n_params = (res.policies.policy if alg == "JAC" else res.policies[i]).n_params
            for a in range(n_act):
                sub = [r for r in recs if r.actions and r.actions[0] == a]
                var = per_rollout_gradient_variance(sub, spec.gradient_window, n_params)
                per_action = variance_by_action(var, n_act)[:, a] if len(sub) else np.zeros(0)
                for t, v in zip((r.update for r in sub), per_action):
                    variance.append((run, t, f"agent{i}_action{a}", v))
    out.update(rows=rows, grads=grads, variance=variance, aborted=res.aborted, diagnostic=res.diagnostic)
    return out


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _collapse_variance(rows):
    """Average duplicate (run, update, metric) entries from one batch."""
    acc = {}
    for run, step, metric, v in rows:
        acc.setdefault((run, step, metric), []).append(v)
    out = []
    for (run, step, metric), vs in sorted(acc.items()):
        vs = [v for v in vs if not np.isnan(v)]
        out.append((run, step, metric, float(np.mean(vs)) if vs else np.nan))
    return out


def resolve_output(spec, out_dir=None):
    if out_dir:
        return out_dir
    root = os.environ.get(OUTPUT_ENV, "results")
    return os.path.join(root, spec.output or spec.name)


def run_experiment(spec, out_dir=None, force=False, workers=None):
    """Run every (algorithm, run) job and write CSVs, aggregates, plots and
    a manifest. Returns ``(out_dir, manifest)``."""
    if isinstance(spec, dict):
        spec = ExperimentSpec.from_dict(spec)
    out_dir = resolve_output(spec, out_dir)
    if os.path.exists(out_dir) and os.listdir(out_dir):
        if not force:
            raise OutputExistsError(f"{out_dir} exists; pass force to overwrite")
        shutil.rmtree(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    doc = spec.to_dict()
    jobs = [(doc, alg, r) for alg in spec.algorithms for r in range(spec.runs)]
    workers = workers or spec.workers or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]

    files = []
    failures = []
    aggregates = {}
    variances = {}
    for alg in spec.algorithms:
        mine = [r for r in results if r["algorithm"] == alg]
        run_dir = os.path.join(out_dir, "runs", alg)
        os.makedirs(run_dir, exist_ok=True)
        paths = []
        for r in mine:
            if r["aborted"]:
                failures.append({"algorithm": alg, "run": r["run"], "seed": r["seed"], "diagnostic": r["diagnostic"]})
            if not r["rows"]:
                continue
            p = os.path.join(run_dir, f"run_{r['run']:03d}.csv")
            agg.write_long_csv(p, r["rows"])
            paths.append(p)
            files.append(p)
        if paths:
            try:
                curves = agg.aggregate(paths)
            except agg.SchemaError:
                # aborted runs may miss the final metrics; aggregate the common ones
                curves = {}
                for p in paths:
                    for m, c in agg.read_long_csv(p).items():
                        curves.setdefault(m, {}).update({(p, k): v for k, v in c.items()})
                curves = {m: agg.aggregate_series(m, v) for m, v in sorted(curves.items())}
            aggregates[alg] = curves
            ap = os.path.join(out_dir, "aggregate", f"{alg}.csv")
            os.makedirs(os.path.dirname(ap), exist_ok=True)
            agg.write_aggregate_csv(ap, curves)
            files.append(ap)
        if spec.gradient_window:
            gdir = os.path.join(out_dir, "gradients", alg)
            os.makedirs(gdir, exist_ok=True)
            vrows = []
            for r in mine:
                gp = os.path.join(gdir, f"run_{r['run']:03d}.csv")
                with open(gp, "w") as fh:
                    fh.write("run,update,agent,param_index,grad_value\n")
                    for row in r["grads"]:
                        fh.write(",".join(map(repr, row)) + "\n")
                files.append(gp)
                vrows += _collapse_variance(r["variance"])
            vp = os.path.join(out_dir, "variance", f"{alg}.csv")
            os.makedirs(os.path.dirname(vp), exist_ok=True)
            agg.write_long_csv(vp, vrows)
            files.append(vp)
            per_metric = {}
            for run, step, metric, v in vrows:
                per_metric.setdefault(metric, {}).setdefault(run, []).append((step, v))
            variances[alg] = {m: agg.aggregate_series(m, s) for m, s in per_metric.items()}

    if aggregates:
        pdir = os.path.join(out_dir, "plots")
        os.makedirs(pdir, exist_ok=True)
        metrics = sorted({m for c in aggregates.values() for m in c if m != "env_steps"})
        for m in metrics:
            files.append(plot(aggregates, os.path.join(pdir, f"{m}.svg"), m, f"{spec.name}: {m}"))
        vmetrics = sorted({m for c in variances.values() for m in c})
        for m in vmetrics:
            files.append(plot(variances, os.path.join(pdir, f"variance_{m}.svg"), m, f"{spec.name}: per-rollout variance {m}"))

    manifest = {
        "spec": doc,
        "seeds": {f"{r['algorithm']}/{r['run']}": r["seed"] for r in results},
        "versions": {
            "package": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
        "failures": failures,
        "files": {os.path.relpath(p, out_dir): _sha256(p) for p in sorted(files)},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return out_dir, manifest


def expand_grid(spec):
    """Cross product of ``spec.grid`` as a list of ``(tag, spec)`` cells."""
    if isinstance(spec, dict):
        spec = ExperimentSpec.from_dict(spec)
    if not spec.grid:
        return [("base", spec)]
    keys = sorted(spec.grid)
    cells = []
    for values in itertools.product(*(spec.grid[k] for k in keys)):
        cfg = dict(spec.config)
        cfg.update(zip(keys, values))
        tag = "_".join(f"{k}={v}" for k, v in zip(keys, values))
        cell = copy.deepcopy(spec)
        cell.config = cfg
        cell.grid = {}
        cells.append((tag, cell.validate()))
    return cells


def run_sweep(spec, out_dir=None, force=False, workers=None):
    if isinstance(spec, dict):
        spec = ExperimentSpec.from_dict(spec)
    out_dir = resolve_output(spec, out_dir)
    if os.path.exists(out_dir) and os.listdir(out_dir):
        if not force:
            raise OutputExistsError(f"{out_dir} exists; pass force to overwrite")
        shutil.rmtree(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    cells = []
    n_fail = 0
    for tag, cell in expand_grid(spec):
        d, man = run_experiment(cell, os.path.join(out_dir, tag), force=False, workers=workers)
        n_fail += len(man["failures"])
        cells.append({"tag": tag, "config": cell.config, "dir": tag, "failures": len(man["failures"]),
                      "manifest_sha256": _sha256(os.path.join(d, "manifest.json"))})
    sweep = {"spec": spec.to_dict(), "cells": cells}
    with open(os.path.join(out_dir, "sweep.json"), "w") as fh:
        json.dump(sweep, fh, indent=1, sort_keys=True)
    return out_dir, sweep, n_fail


def replot(out_dir):
    """Regenerate SVGs from the aggregate CSVs in an experiment directory."""
    adir = os.path.join(out_dir, "aggregate")
    if not os.path.isdir(adir):
        raise FileNotFoundError(f"no aggregate/ directory under {out_dir}")
    aggregates = {}
    for fn in sorted(os.listdir(adir)):
        if fn.endswith(".csv"):
            aggregates[fn[:-4]] = agg.read_aggregate_csv(os.path.join(adir, fn))
    if not aggregates:
        raise FileNotFoundError(f"no aggregate CSVs under {adir}")
    pdir = os.path.join(out_dir, "plots")
    os.makedirs(pdir, exist_ok=True)
    metrics = sorted({m for c in aggregates.values() for m in c if m != "env_steps"})
    return [plot(aggregates, os.path.join(pdir, f"{m}.svg"), m, m) for m in metrics]
