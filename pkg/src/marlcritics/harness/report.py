"""Exact-analysis report: JSON document plus long-format CSV."""
import json
import os

import numpy as np

from ..core import DecPomdpModel
from ..envs import make_model
from ..exact import ExactAnalysis, mav, mov
from ..policies import TabularPolicy, uniform_policies
from ..validation import ConfigurationError
from .curves import write_long_csv

TOL_MARGINAL = 1e-8
TOL_GRADIENT = 1e-10
TOL_VARIANCE = -1e-12


def history_to_json(h):
    return [list(p) for p in h]


def history_from_json(h):
    return tuple((int(a), int(o)) for a, o in h)


def load_policies(path, model):
    """Read per-agent probability tables.

    Format::

        {"agents": [{"default": [...], "histories": [{"history": [[a, o], ...], "probs": [...]}]}, ...]}
    """
    with open(path) as fh:
        doc = json.load(fh)
    agents = doc.get("agents")
    if not isinstance(agents, list) or len(agents) != model.n_agents:
        raise ConfigurationError(f"policy file needs one entry per agent ({model.n_agents})")
    out = []
    for n, spec in zip(model.n_actions, agents):
        table = {}
        for item in spec.get("histories", []):
            p = np.asarray(item["probs"], dtype=float)
            if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ConfigurationError(f"bad probability row {item['probs']!r}")
            table[history_from_json(item["history"])] = p / p.sum()
        default = spec.get("default")
        out.append(TabularPolicy(n, table, None if default is None else np.asarray(default, dtype=float)))
    return out


def save_policies(path, policies, histories):
    """Write policies in the format read by :func:`load_policies`."""
    doc = {"agents": []}
    for pol, hs in zip(policies, histories):
        doc["agents"].append(
            {"histories": [{"history": history_to_json(h), "probs": list(map(float, pol.probs(h)))} for h in hs]}
        )
    with open(path, "w") as fh:
        json.dump(doc, fh)


def exact_report(model, policies=None, k=1, tol=1e-10, contraction_pairs=100, seed=0):
    """Run the exact pipeline and collect every table into a JSON-able dict.

    ``model`` is a registry name or a ``DecPomdpModel``; ``policies`` is
    ``None`` (uniform), a list of policy objects, or a path to a policy file.
    """
    if isinstance(model, str):
        model = make_model(model)
    if not isinstance(model, DecPomdpModel):
        raise ConfigurationError("exact analysis needs an explicit model")
    source = "uniform"
    if policies is None:
        policies = uniform_policies(model.n_actions)
    elif isinstance(policies, (str, os.PathLike)):
        source = str(policies)
        policies = load_policies(policies, model)
    else:
        source = "given"
    ea = ExactAnalysis(k=k, tol=tol).fit(model, policies)
    space, steady = ea.space_, ea.steady_
    n = model.n_agents
    joint_actions = [model.joint_action(a) for a in range(model.n_joint_actions)]
    ph = steady.p_history
    rep = {
        "model": model.name,
        "k": k,
        "gamma": model.gamma,
        "policy_source": source,
        "truncated_histories": bool(space.truncated),
        "index": {
            "joint_histories": [[history_to_json(h) for h in jh] for jh in space.joint],
            "local_histories": [[history_to_json(h) for h in space.local[i]] for i in range(n)],
            "joint_actions": [list(a) for a in joint_actions],
        },
        "steady_state": {
            "p_history_state": steady.joint.tolist(),
            "p_history": ph.tolist(),
            "p_state": steady.p_state.tolist(),
            "condition": steady.condition,
        },
        "central_q": {
            "values": ea.central_.values.tolist(),
            "iterations": ea.central_.iterations,
            "residual": ea.central_.residual,
        },
        "decentral_q": [
            {"agent": i, "values": d.values.tolist(), "iterations": d.iterations, "residual": d.residual}
            for i, d in enumerate(ea.decentral_)
        ],
        "marginalized_central": [m.tolist() for m in ea.marginals_],
        "marginalization_residual": ea.marginalization_residual(),
        "gradients": [
            {"agent": i, "central": c.mean.ravel().tolist(), "decentral": d.mean.ravel().tolist()}
            for i, (c, d) in enumerate(zip(ea.moments_central_, ea.moments_decentral_))
        ],
        "gradient_equality_residual": ea.gradient_gap(),
        "variance": [
            {
                "agent": i,
                "central": c.variance.ravel().tolist(),
                "decentral": d.variance.ravel().tolist(),
                "gap": (c.second - c.mean**2 - (d.second - d.mean**2)).ravel().tolist(),
            }
            for i, (c, d) in enumerate(zip(ea.moments_central_, ea.moments_decentral_))
        ],
        "min_variance_gap": ea.variance_gap(),
    }
    mav_rows, mov_rows = [], []
    for i in range(n):
        for hid, jh in enumerate(space.joint):
            if ph[hid] <= 0:
                continue
            for a in range(model.n_actions[i]):
                mav_rows.append(
                    {"agent": i, "history": hid, "action": a, "value": mav(ea.central_, policies, jh, a, i)}
                )
        pl = steady.p_local(i)
        for l, h in enumerate(space.local[i]):
            if pl[l] <= 0:
                continue
            for ja in joint_actions:
                mov_rows.append(
                    {"agent": i, "local_history": l, "joint_action": list(ja), "value": mov(ea.central_, steady, h, ja, i)}
                )
    rep["mav"] = mav_rows
    rep["mov"] = mov_rows
    reports = ea.contraction(contraction_pairs, seed)
    rep["contraction"] = [
        {"operator": "central" if j == 0 else f"decentral_{j - 1}", "worst_ratio": r.worst_ratio, "ok": r.ok}
        for j, r in enumerate(reports)
    ]
    violations, warnings = [], []
    identity_checks = [
        ("marginalization", rep["marginalization_residual"] > TOL_MARGINAL),
        ("gradient_equality", rep["gradient_equality_residual"] > TOL_GRADIENT),
    ]
    for name, bad in identity_checks:
        if bad and space.truncated:
            # the identities assume histories are never cut short
            warnings.append(f"{name} residual is nonzero with truncated histories (k={k})")
        elif bad:
            violations.append(name)
    if rep["min_variance_gap"] < TOL_VARIANCE and not space.truncated:
        violations.append("variance_ordering")
    violations += [f"contraction_{c['operator']}" for c in rep["contraction"] if not c["ok"]]
    rep["violations"] = violations
    rep["warnings"] = warnings
    notes = []
    if model.name == "climb":
        q1 = ea.decentral_[0].values[0]
        q2 = ea.decentral_[1].values[0]
        notes.append(
            f"agent 1 value of u3 = {q1[2]:.4f} (column mean); agent 2 value of u3 = {q2[2]:.4f} (row mean)"
        )
    rep["notes"] = notes
    rep["_analysis"] = ea
    return rep


def csv_rows(rep):
    rows = []

    def add(metric, values):
        for j, v in enumerate(np.ravel(values)):
            rows.append((0, j, metric, float(v)))

    add("q_central", rep["central_q"]["values"])
    add("p_history", rep["steady_state"]["p_history"])
    for d in rep["decentral_q"]:
        add(f"q_decentral_agent{d['agent']}", d["values"])
    for i, m in enumerate(rep["marginalized_central"]):
        add(f"q_marginal_agent{i}", m)
    for g in rep["gradients"]:
        add(f"grad_central_agent{g['agent']}", g["central"])
        add(f"grad_decentral_agent{g['agent']}", g["decentral"])
    for v in rep["variance"]:
        add(f"var_central_agent{v['agent']}", v["central"])
        add(f"var_decentral_agent{v['agent']}", v["decentral"])
        add(f"var_gap_agent{v['agent']}", v["gap"])
    for i in range(len(rep["decentral_q"])):
        add(f"mav_agent{i}", [r["value"] for r in rep["mav"] if r["agent"] == i])
        add(f"mov_agent{i}", [r["value"] for r in rep["mov"] if r["agent"] == i])
    return rows


def write_report(rep, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    doc = {k: v for k, v in rep.items() if not k.startswith("_")}
    jpath = os.path.join(out_dir, "exact_report.json")
    with open(jpath, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    cpath = os.path.join(out_dir, "exact_report.csv")
    write_long_csv(cpath, csv_rows(rep))
    return jpath, cpath
