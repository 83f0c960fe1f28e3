"""Presets, config ingestion and experiment orchestration.

Config grammar (YAML; JSON is accepted too, so a run manifest can be fed
back in)::

    experiment_kind: sir_ensemble | control_curves | network_trace |
                     tv_report | fk_check | steady_state      # required
    preset: table1 | uk2021                                     # optional
    outputs: <directory>
    write_replicates: false
    params:   {eta, kappa, zeta, mu, rho, n_pop, beta0, beta1, beta2,
               theta1, theta2, m_pm, q_mod, temp, r_disc,
               alpha11 .. alpha23, sigma1 .. sigma4,
               x_star: auto | {beta, S, I, R},
               incidence_denominator, gxx_sign}
    x0:       {beta, S, I, R}
    sim:      {t_end, n_steps, n_replicates, seed, state_floor, control_mode,
               e, v, schedule: [[t, e, v], ...], t_start, denom_eps}
    network:  {nodes, prob, level_counts, updates, homophily, activity, seed}
    tv:       {bins, component, seed_b, overrides_b: {<param>: value}}
    fk:       {tau, n_paths, n_steps, seed, component}
    metadata: {free-form, echoed into the manifest}
    manifest: {ignored on input; written by run_experiment}

The preset is applied first and every other key overrides it. Unknown keys
are errors. Without a preset every ``params`` and ``x0`` field must be given.
``temp`` is a number or a list of ``[time, value]`` knots.
"""

from __future__ import annotations

import copy
import dataclasses
import csv
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .control import MCConfig, feynman_kac_estimate, find_steady_state, optimal_controls
from .errors import ConfigError, ValidationError
from .measures import histogram_distribution, shared_edges, tv_all
from .model import Controls, ModelParams, StateVector, validate_params
from .network import DEFAULT_LEVEL_COUNTS, density, generate_er, modularity, run_updates, write_edge_list, write_levels
from .sim import SimConfig, ensemble_stats, estimate_cost, simulate_ensemble

EXPERIMENT_KINDS = ("sir_ensemble", "control_curves", "network_trace", "tv_report", "fk_check", "steady_state")
DEFAULT_OUT = "epictl_out"

PARAM_KEYS = ("eta", "kappa", "zeta", "mu", "rho", "n_pop", "beta0", "beta1", "beta2", "theta1", "theta2",
              "m_pm", "q_mod", "temp", "r_disc", "alpha11", "alpha12", "alpha13", "alpha21", "alpha22",
              "alpha23", "sigma1", "sigma2", "sigma3", "sigma4", "x_star", "incidence_denominator", "gxx_sign")
STATE_KEYS = ("beta", "S", "I", "R")
SIM_KEYS = ("t_end", "n_steps", "n_replicates", "seed", "state_floor", "control_mode", "e", "v", "schedule",
            "t_start", "denom_eps")
NETWORK_KEYS = ("nodes", "prob", "level_counts", "updates", "homophily", "activity", "seed")
TV_KEYS = ("bins", "component", "seed_b", "overrides_b")
FK_KEYS = ("tau", "n_paths", "n_steps", "seed", "component")
TOP_KEYS = ("experiment_kind", "preset", "outputs", "write_replicates", "params", "x0", "sim", "network", "tv",
            "fk", "metadata", "manifest")
SECTION_KEYS = {"params": PARAM_KEYS, "x0": STATE_KEYS, "sim": SIM_KEYS, "network": NETWORK_KEYS,
                "tv": TV_KEYS, "fk": FK_KEYS}


@dataclass(frozen=True)
class NetworkSettings:
    nodes: int = 100
    prob: float = 0.06
    level_counts: tuple = DEFAULT_LEVEL_COUNTS
    updates: int = 1000
    homophily: float = 0.9
    activity: float = 1.0
    seed: int = 1


@dataclass(frozen=True)
class TVSettings:
    bins: int = 20
    component: str = "I"
    seed_b: int | None = None
    overrides_b: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FKSettings:
    tau: float = 0.1
    n_paths: int = 2000
    n_steps: int = 100
    seed: int = 77
    component: str = "S"


@dataclass
class ExperimentConfig:
    experiment_kind: str
    params: ModelParams
    sim: SimConfig
    x0: StateVector
    network: NetworkSettings = NetworkSettings()
    tv: TVSettings = TVSettings()
    fk: FKSettings = FKSettings()
    outputs: Path | None = None
    preset: str | None = None
    write_replicates: bool = False
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------- presets

_TABLE1 = {
    "params": {
        "eta": 0.001, "kappa": 0.2, "zeta": 0.001, "mu": 0.3, "rho": 0.5, "n_pop": 100.0,
        "beta0": 0.0, "beta1": 0.2, "beta2": 0.2, "theta1": 2.0, "theta2": 2.0,
        "m_pm": 12.5, "q_mod": 0.5, "temp": 1.0, "r_disc": 0.05,
        "alpha11": 1 / 3, "alpha12": 1 / 3, "alpha13": 1 / 3,
        "alpha21": 1 / 3, "alpha22": 1 / 3, "alpha23": 1 / 3,
        "sigma1": 0.1, "sigma2": 0.06, "sigma3": 0.12, "sigma4": 0.05,
        "x_star": "auto", "incidence_denominator": "eq1", "gxx_sign": "printed",
    },
    "x0": {"beta": 1.0, "S": 99.8, "I": 0.1, "R": 0.1},
    "sim": {"t_end": 1.0, "n_steps": 1000, "n_replicates": 100, "seed": 20210101, "state_floor": 1e-8,
            "control_mode": "fixed", "e": 1.0, "v": 0.674, "schedule": [], "t_start": 0.0,
            "denom_eps": 1e-12},
    "network": {"nodes": 100, "prob": 0.06, "level_counts": list(DEFAULT_LEVEL_COUNTS), "updates": 1000,
                "homophily": 0.9, "activity": 1.0, "seed": 1},
    "metadata": {"assumed_defaults": ["r_disc", "sigma4", "x_star", "temp"]},
}

_UK_S0, _UK_I0 = 84.19, 1.89


def _uk_preset() -> dict:
    d = copy.deepcopy(_TABLE1)
    d["params"].update({"kappa": 0.01, "eta": 0.0558, "beta1": 0.536, "beta2": 0.536, "zeta": 0.000152,
                        "sigma1": 0.05, "sigma2": 0.08557, "sigma3": 0.12})
    d["x0"] = {"beta": 1.0, "S": _UK_S0, "I": _UK_I0, "R": 100.0 - _UK_S0 - _UK_I0}
    d["sim"].update({"e": 0.75, "v": 0.00557})
    d["metadata"] = {
        "assumed_defaults": ["r_disc", "sigma4", "x_star", "temp"],
        "population_millions": 67.22,
        "first_dose_rate": 0.0291,
        "day_scale": 100.0,
        "horizon": "first 100 days of 2021 mapped to [0, 1]",
    }
    return d


PRESETS = {"table1": lambda: copy.deepcopy(_TABLE1), "uk2021": _uk_preset}


def preset_dict(name: str) -> dict:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset_table1(kind: str = "sir_ensemble") -> ExperimentConfig:
    return build_config({"experiment_kind": kind, "preset": "table1"})


def preset_uk2021(kind: str = "sir_ensemble") -> ExperimentConfig:
    return build_config({"experiment_kind": kind, "preset": "uk2021"})


# ---------------------------------------------------------------- building

def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("overrides_b", "x_star"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _num(section: str, key: str, val, kind=float):
    if isinstance(val, bool):
        raise ConfigError(f"{section}.{key} must be numeric, got {val!r}")
    try:
        if kind is int:
            f = float(val)
            if not f.is_integer():
                raise ValueError
            return int(f)
        out = float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} must be {'an integer' if kind is int else 'a number'}, got {val!r}") from None
    return out


def _require(section: str, d: dict, keys) -> None:
    missing = [k for k in keys if k not in d]
    if missing:
        raise ConfigError(f"missing {section} fields: {', '.join(missing)}")


def _state(section: str, d) -> StateVector:
    if not isinstance(d, dict):
        raise ConfigError(f"{section} must be a mapping with keys {STATE_KEYS}")
    unknown = set(d) - set(STATE_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")
    _require(section, d, STATE_KEYS)
    return StateVector(*(_num(section, k, d[k]) for k in STATE_KEYS))


def _temp(val):
    if isinstance(val, (list, tuple)):
        try:
            return tuple((float(t), float(v)) for t, v in val)
        except (TypeError, ValueError):
            raise ConfigError("params.temp table must be a list of [time, value] pairs") from None
    return _num("params", "temp", val)


def _params(d: dict, x_star: StateVector | None) -> ModelParams:
    _require("params", d, [k for k in PARAM_KEYS if k not in ("incidence_denominator", "gxx_sign")])
    f = {k: _num("params", k, d[k]) for k in PARAM_KEYS
         if k not in ("temp", "x_star", "incidence_denominator", "gxx_sign")}
    return ModelParams(
        eta=f["eta"], kappa=f["kappa"], zeta=f["zeta"], mu=f["mu"], rho=f["rho"], n_pop=f["n_pop"],
        beta0=f["beta0"], beta1=f["beta1"], beta2=f["beta2"], theta1=f["theta1"], theta2=f["theta2"],
        m_pm=f["m_pm"], q_mod=f["q_mod"], temp=_temp(d["temp"]), r_disc=f["r_disc"],
        alpha=((f["alpha11"], f["alpha12"], f["alpha13"]), (f["alpha21"], f["alpha22"], f["alpha23"])),
        sigma=(f["sigma1"], f["sigma2"], f["sigma3"], f["sigma4"]),
        x_star=x_star if x_star is not None else StateVector(0.0, 0.0, 0.0, 0.0),
        incidence_denominator=str(d.get("incidence_denominator", "eq1")),
        gxx_sign=str(d.get("gxx_sign", "printed")),
    )


def _sim(d: dict) -> SimConfig:
    _require("sim", d, ("t_end", "n_steps", "n_replicates", "seed"))
    sched = d.get("schedule") or []
    try:
        sched = tuple(tuple(float(c) for c in row) for row in sched)
    except (TypeError, ValueError):
        raise ConfigError("sim.schedule must be a list of [t, e, v] rows") from None
    try:
        return SimConfig(
            t_end=_num("sim", "t_end", d["t_end"]),
            n_steps=_num("sim", "n_steps", d["n_steps"], int),
            n_replicates=_num("sim", "n_replicates", d["n_replicates"], int),
            seed=_num("sim", "seed", d["seed"], int),
            state_floor=_num("sim", "state_floor", d.get("state_floor", 1e-8)),
            control_mode=str(d.get("control_mode", "fixed")),
            fixed_controls=Controls(_num("sim", "e", d.get("e", 1.0)), _num("sim", "v", d.get("v", 0.0))),
            schedule=sched,
            t_start=_num("sim", "t_start", d.get("t_start", 0.0)),
            denom_eps=_num("sim", "denom_eps", d.get("denom_eps", 1e-12)),
        )
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(f"sim: {exc}") from None


def build_config(data: dict) -> ExperimentConfig:
    """Resolve a parsed config mapping (preset first, then overrides)."""
    if not isinstance(data, dict) or not data:
        raise ConfigError("experiment_kind required")
    unknown = [k for k in data if k not in TOP_KEYS]
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    for sec, allowed in SECTION_KEYS.items():
        if sec in data and data[sec] is not None:
            if not isinstance(data[sec], dict):
                raise ConfigError(f"section {sec} must be a mapping")
            bad = [k for k in data[sec] if k not in allowed]
            if bad:
                raise ConfigError(f"unknown key(s) in {sec}: {', '.join(map(str, bad))}")
    kind = data.get("experiment_kind")
    if kind is None:
        raise ConfigError("experiment_kind required")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"experiment_kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    preset = data.get("preset")
    base = preset_dict(preset) if preset is not None else {}
    merged = _merge(base, {k: v for k, v in data.items() if k not in ("manifest",) and v is not None})

    xs = merged.get("params", {}).get("x_star", "auto")
    x_star = None if xs == "auto" else _state("params.x_star", xs)
    params = _params(merged.get("params", {}), x_star)
    sim = _sim(merged.get("sim", {}))
    x0 = _state("x0", merged.get("x0", {}))
    if x_star is None:
        params = validate_params(params.replace(x_star=StateVector(0.0, 0.0, 0.0, 0.0)))
        ss = find_steady_state(params, sim.fixed_controls, x0, state_floor=sim.state_floor)
        params = params.replace(x_star=ss.state)
    validate_params(params)

    net = merged.get("network", {}) or {}
    network = NetworkSettings(
        nodes=_num("network", "nodes", net.get("nodes", 100), int),
        prob=_num("network", "prob", net.get("prob", 0.06)),
        level_counts=tuple(_num("network", "level_counts", c, int)
                           for c in net.get("level_counts", DEFAULT_LEVEL_COUNTS)),
        updates=_num("network", "updates", net.get("updates", 1000), int),
        homophily=_num("network", "homophily", net.get("homophily", 0.9)),
        activity=_num("network", "activity", net.get("activity", 1.0)),
        seed=_num("network", "seed", net.get("seed", 1), int),
    )
    tvd = merged.get("tv", {}) or {}
    over_b = tvd.get("overrides_b") or {}
    if not isinstance(over_b, dict) or any(k not in PARAM_KEYS for k in over_b):
        raise ConfigError("tv.overrides_b must map params keys to values")
    tv = TVSettings(bins=_num("tv", "bins", tvd.get("bins", 20), int), component=str(tvd.get("component", "I")),
                    seed_b=None if tvd.get("seed_b") is None else _num("tv", "seed_b", tvd["seed_b"], int),
                    overrides_b=dict(over_b))
    fkd = merged.get("fk", {}) or {}
    fk = FKSettings(tau=_num("fk", "tau", fkd.get("tau", 0.1)), n_paths=_num("fk", "n_paths", fkd.get("n_paths", 2000), int),
                    n_steps=_num("fk", "n_steps", fkd.get("n_steps", 100), int),
                    seed=_num("fk", "seed", fkd.get("seed", 77), int), component=str(fkd.get("component", "S")))
    for comp in (tv.component, fk.component):
        if comp not in STATE_KEYS:
            raise ConfigError(f"component must be one of {STATE_KEYS}, got {comp!r}")
    out = merged.get("outputs")
    return ExperimentConfig(
        experiment_kind=kind, params=params, sim=sim, x0=x0, network=network, tv=tv, fk=fk,
        outputs=Path(out) if out is not None else None, preset=preset,
        write_replicates=bool(merged.get("write_replicates", False)),
        metadata=dict(merged.get("metadata") or {}),
    )


def _key_line(text: str, key: str) -> int | None:
    m = re.search(rf'^\s*"?{re.escape(str(key))}"?\s*:', text, flags=re.M)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(path)) from None
    if not text.strip():
        raise ConfigError("experiment_kind required", path=str(path))
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error: {exc.msg}", line=exc.lineno, path=str(path)) from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"parse error: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark is not None else None, path=str(path)) from None
    if data is None:
        raise ConfigError("experiment_kind required", path=str(path))
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", path=str(path))
    try:
        return build_config(data)
    except ConfigError as exc:
        line = None
        m = re.search(r"unknown key\(s\)(?: in \w+)?: ([^,]+)", str(exc))
        if m:
            line = _key_line(text, m.group(1).strip())
        raise ConfigError(str(exc), line=line, path=str(path)) from None


# ---------------------------------------------------------------- serialising

def config_to_dict(cfg: ExperimentConfig) -> dict:
    p = cfg.params
    (a11, a12, a13), (a21, a22, a23) = p.alpha
    temp = p.temp if isinstance(p.temp, (int, float)) else [list(r) for r in p.temp]
    s = cfg.sim
    return {
        "experiment_kind": cfg.experiment_kind,
        "preset": cfg.preset,
        "outputs": None if cfg.outputs is None else str(cfg.outputs),
        "write_replicates": cfg.write_replicates,
        "params": {
            "eta": p.eta, "kappa": p.kappa, "zeta": p.zeta, "mu": p.mu, "rho": p.rho, "n_pop": p.n_pop,
            "beta0": p.beta0, "beta1": p.beta1, "beta2": p.beta2, "theta1": p.theta1, "theta2": p.theta2,
            "m_pm": p.m_pm, "q_mod": p.q_mod, "temp": temp, "r_disc": p.r_disc,
            "alpha11": a11, "alpha12": a12, "alpha13": a13, "alpha21": a21, "alpha22": a22, "alpha23": a23,
            "sigma1": p.sigma[0], "sigma2": p.sigma[1], "sigma3": p.sigma[2], "sigma4": p.sigma[3],
            "x_star": p.x_star.to_dict(),
            "incidence_denominator": p.incidence_denominator, "gxx_sign": p.gxx_sign,
        },
        "x0": cfg.x0.to_dict(),
        "sim": {
            "t_end": s.t_end, "n_steps": s.n_steps, "n_replicates": s.n_replicates, "seed": s.seed,
            "state_floor": s.state_floor, "control_mode": s.control_mode,
            "e": s.fixed_controls.e_lock, "v": s.fixed_controls.v_vacc,
            "schedule": [list(r) for r in s.schedule], "t_start": s.t_start, "denom_eps": s.denom_eps,
        },
        "network": {
            "nodes": cfg.network.nodes, "prob": cfg.network.prob, "level_counts": list(cfg.network.level_counts),
            "updates": cfg.network.updates, "homophily": cfg.network.homophily,
            "activity": cfg.network.activity, "seed": cfg.network.seed,
        },
        "tv": {"bins": cfg.tv.bins, "component": cfg.tv.component, "seed_b": cfg.tv.seed_b,
               "overrides_b": dict(cfg.tv.overrides_b)},
        "fk": {"tau": cfg.fk.tau, "n_paths": cfg.fk.n_paths, "n_steps": cfg.fk.n_steps, "seed": cfg.fk.seed,
               "component": cfg.fk.component},
        "metadata": dict(cfg.metadata),
    }


def dump_config_yaml(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


# ---------------------------------------------------------------- running

def _fmt(x: float) -> str:
    return repr(float(x))


class _Writer:
    """All output goes through here, so nothing lands outside ``root``."""

    def __init__(self, root: Path):
        self.root = root.resolve()
        self.files: list[str] = []

    def path(self, rel: str) -> Path:
        target = (self.root / rel).resolve()
        if self.root != target and self.root not in target.parents:
            raise ValidationError(f"refusing to write outside {self.root}: {rel}")
        target.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(rel)
        return target

    def csv(self, rel: str, header, rows) -> None:
        with open(self.path(rel), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def json(self, rel: str, obj) -> None:
        with open(self.path(rel), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=False, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _series_rows(times, states, controls=None, day_scale=None):
    rows = []
    for k, t in enumerate(times):
        row = [_fmt(t)] + [_fmt(x) for x in states[k]]
        if controls is not None:
            row += [_fmt(controls[k, 0]), _fmt(controls[k, 1])]
        if day_scale is not None:
            row.append(_fmt(day_scale * t))
        rows.append(row)
    return rows


def _series_header(with_controls: bool, with_day: bool):
    h = ["time", "beta", "S", "I", "R"]
    if with_controls:
        h += ["e_opt", "v_opt"]
    if with_day:
        h.append("day")
    return h


def resolve_output_dir(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> Path:
    if out is not None:
        return Path(out)
    if cfg.outputs is not None:
        return Path(cfg.outputs)
    return Path(os.environ.get("EPICTL_OUT", DEFAULT_OUT))


def _write_ensemble(w: _Writer, cfg: ExperimentConfig, ens, with_controls: bool) -> dict:
    day = cfg.metadata.get("day_scale")
    st = ensemble_stats(ens)
    ctrl_mean = ens.controls.mean(axis=0) if with_controls else None
    header = _series_header(with_controls, day is not None)
    w.csv("means.csv", header, _series_rows(st.times, st.mean, ctrl_mean, day))
    ctrl_std = ens.controls.std(axis=0) if with_controls else None
    w.csv("std.csv", header, _series_rows(st.times, st.std, ctrl_std, day))
    if cfg.write_replicates:
        for j in range(ens.states.shape[0]):
            c = ens.controls[j] if with_controls else None
            w.csv(f"replicates/rep_{int(ens.replicate_indices[j]):05d}.csv", header,
                  _series_rows(st.times, ens.states[j], c, day))
    cost, cost_se = estimate_cost(ens)
    return {"sup_moment": st.sup_moment, "c0": st.c0, "cost": cost, "cost_std_error": cost_se,
            "clamp_events": int(ens.clamp_events.sum()),
            "n_replicates": int(ens.states.shape[0]), "backend": ens.backend}


def run_experiment(cfg: ExperimentConfig, out_dir=None, backend: str | None = None) -> dict:
    """Run ``cfg.experiment_kind``, write its files plus ``manifest.json``.

    Returns the manifest dict. The manifest's config part is a complete,
    explicit config; feeding it to :func:`load_config` reproduces the run.
    """
    root = resolve_output_dir(cfg, out_dir)
    w = _Writer(root)
    kind = cfg.experiment_kind
    summary: dict[str, Any] = {}

    if kind == "sir_ensemble":
        ens = simulate_ensemble(cfg.params, cfg.sim, cfg.x0, backend=backend)
        summary = _write_ensemble(w, cfg, ens, with_controls=cfg.sim.control_mode != "fixed")
        w.json("stats.json", summary)

    elif kind == "control_curves":
        sim = cfg.sim
        if sim.control_mode != "optimal_feedback":
            sim = dataclasses.replace(sim, control_mode="optimal_feedback")
        ens = simulate_ensemble(cfg.params, sim, cfg.x0, backend=backend)
        summary = _write_ensemble(w, cfg, ens, with_controls=True)
        summary["fraction_clamped_e"], summary["fraction_clamped_v"], summary["condition_violated"] = (
            _control_clamp_fractions(ens))
        w.json("stats.json", summary)

    elif kind == "network_trace":
        ns = cfg.network
        net = generate_er(ns.nodes, ns.prob, ns.level_counts, ns.seed)
        write_edge_list(net, w.path("edges_initial.txt"))
        write_levels(net, w.path("levels.txt"))
        trace = run_updates(net, ns.updates, ns.homophily, ns.activity, backend=backend)
        w.csv("trace.csv", ["update", "removed", "added", "modularity", "density"], list(trace.rows()))
        write_edge_list(net, w.path("edges_final.txt"))
        summary = {"initial_modularity": trace.initial_modularity, "initial_density": trace.initial_density,
                   "final_modularity": float(trace.modularity[-1]) if len(trace) else trace.initial_modularity,
                   "final_density": float(trace.density[-1]) if len(trace) else trace.initial_density}
        w.json("stats.json", summary)

    elif kind == "tv_report":
        comp = STATE_KEYS.index(cfg.tv.component)
        ens_a = simulate_ensemble(cfg.params, cfg.sim, cfg.x0, backend=backend)
        params_b = _override_params(cfg, cfg.tv.overrides_b)
        seed_b = cfg.sim.seed if cfg.tv.seed_b is None else cfg.tv.seed_b
        sim_b = dataclasses.replace(cfg.sim, seed=seed_b)
        ens_b = simulate_ensemble(params_b, sim_b, cfg.x0, backend=backend)
        a = ens_a.states[:, -1, comp]
        b = ens_b.states[:, -1, comp]
        edges = shared_edges(a, b, cfg.tv.bins)
        pa, pb = histogram_distribution(a, edges), histogram_distribution(b, edges)
        res = tv_all(pa, pb)
        w.csv("tv_hist.csv", ["bin_lo", "bin_hi", "p_a", "p_b"],
              [[_fmt(edges[k]), _fmt(edges[k + 1]), _fmt(pa[k]), _fmt(pb[k])] for k in range(len(pa))])
        summary = {"tv_sup": res.tv_sup, "tv_coupling": res.tv_coupling, "tv_partition": res.tv_partition,
                   "component": cfg.tv.component, "note": "illustration on empirical terminal histograms"}
        w.json("tv.json", summary)

    elif kind == "fk_check":
        summary = fk_check(cfg, backend=backend)
        w.json("fk.json", summary)

    elif kind == "steady_state":
        ss = find_steady_state(cfg.params, cfg.sim.fixed_controls, cfg.x0, state_floor=cfg.sim.state_floor)
        summary = {"state": ss.state.to_dict(), "method": ss.method, "residual": ss.residual,
                   "iterations": ss.iterations}
        w.json("steady_state.json", summary)

    manifest = config_to_dict(cfg)
    manifest["outputs"] = str(root)
    manifest["manifest"] = {
        "seed": cfg.sim.seed,
        "version": __version__,
        "files": list(w.files),
        "summary": summary,
    }
    w.json("manifest.json", manifest)
    return manifest


def _override_params(cfg: ExperimentConfig, overrides: dict) -> ModelParams:
    if not overrides:
        return cfg.params
    d = config_to_dict(cfg)
    d["params"].update(overrides)
    d["preset"] = None
    return build_config(d).params


def _control_clamp_fractions(ens):
    ce = cv = viol = 0
    n = 0
    for j in range(ens.states.shape[0]):
        for k in range(ens.states.shape[1]):
            try:
                diag = optimal_controls(float(ens.times[k]), ens.states[j, k], ens.params, ens.config.denom_eps)
            except Exception:  # noqa: BLE001 - diagnostics only
                continue
            n += 1
            ce += diag.clamped_e
            cv += diag.clamped_v
            viol += diag.condition_violated
    return (ce / n, cv / n, viol / n) if n else (math.nan, math.nan, math.nan)


def fk_check(cfg: ExperimentConfig, backend: str | None = None) -> dict:
    """Feynman-Kac sampler vs. an independently seeded compiled ensemble."""
    fk = cfg.fk
    comp = STATE_KEYS.index(fk.component)
    u = cfg.sim.fixed_controls
    s0 = cfg.sim.t_start
    mc = MCConfig(n_paths=fk.n_paths, n_steps=fk.n_steps, seed=fk.seed, state_floor=cfg.sim.state_floor)
    est, se = feynman_kac_estimate(s0, cfg.x0, s0 + fk.tau, lambda x: x.as_array()[comp], cfg.params, u, mc)
    sim = dataclasses.replace(cfg.sim, t_end=s0 + fk.tau, n_steps=fk.n_steps, n_replicates=fk.n_paths,
                              control_mode="fixed")
    ens = simulate_ensemble(cfg.params, sim, cfg.x0, backend=backend)
    vals = ens.states[:, -1, comp]
    m = float(vals.mean())
    se_e = float(vals.std(ddof=1) / math.sqrt(vals.size))
    comb = math.hypot(se, se_e)
    z = abs(est - m) / comb if comb > 0 else (0.0 if est == m else math.inf)
    return {"fk_estimate": est, "fk_std_error": se, "ensemble_mean": m, "ensemble_std_error": se_e,
            "z": z, "within_3_se": bool(z <= 3.0), "component": fk.component, "tau": fk.tau}
