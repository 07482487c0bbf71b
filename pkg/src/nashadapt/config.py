"""Scenario configuration: YAML schema, validation and the built-in presets.

A config is a nested mapping.  Graph edges use 1-based labels and the
receive convention ``[receiver, sender, weight]``.  Strategies with several
coordinates (``coordinates: 2``) expand into one scalar scenario per
coordinate sharing the graph and plants.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import graph as gr
from .controller import ControllerGains, hurwitz_check
from .errors import NashAdaptError, ValidationError
from .game import AffineGame, InventoryGame, SensorGame, VanDerPolGame, estimate_constants
from .generator import GeneratorConfig, GradientMode, alpha_min
from .plant import AgentModel, Exosystem, exo_as_basis, resolve_basis, rotation_exosystem, \
    sensor_exosystem
from .sim import InitialConditions, Scenario, TimedEvent

log = logging.getLogger(__name__)

PRESET_NAMES = ("example1", "example2", "example3", "generator-only")

TOP_KEYS = {"name", "t_end", "dt", "decimation", "seed", "tol", "graph", "game", "generator",
            "coordinates", "agents", "initial", "events", "adaptation", "notes"}
AGENT_KEYS = {"order", "basis", "theta_true", "frequency", "k", "epsilon", "lambda_gain",
              "exosystem"}
EXO_BOUNDS = {"sensor": 0.2, "rotation": 0.5}


# -- presets ---------------------------------------------------------------------

def _example1():
    n = 10
    agents = []
    for i in range(1, n + 1):
        # dI/dt = -gamma I + P - D  ==  theta^T (-I, 1) + u  with theta = (gamma, -D)
        agents.append({"order": 1, "basis": "inventory", "theta_true": [i / 2, -(10.0 - i)],
                       "k": [-4.0], "epsilon": 1.0, "lambda_gain": 1.0})
    return {
        "name": "example1",
        "notes": "inventory game on a 10-node directed ring; adaptation off on [100, 150)",
        "t_end": 200.0, "dt": 1e-3, "decimation": 10, "seed": 0, "tol": 1e-2,
        "graph": {"preset": "cycle", "n": n},
        "game": {"preset": "inventory", "storage_cost": [i / 10 for i in range(1, n + 1)],
                 "target_total": 22.0, "subsidy_rate": 1.0},
        "generator": {"alpha": 4.0, "gradient_mode": "full"},
        "coordinates": 1,
        "agents": agents,
        "initial": {"output_range": [0.0, 5.0], "derivative_range": [-1.0, 1.0],
                    "z_range": [0.0, 5.0], "theta_hat": 0.0},
        "events": [{"t_start": 100.0, "t_end": 150.0, "action": "freeze_adaptation"}],
        "adaptation": "on",
    }


SENSOR_R = [[2.0, -2.0], [-2.0, -2.0], [-4.0, 2.0], [2.0, -4.0], [3.0, 3.0]]
SENSOR_MU = [0.1, -0.1, 0.2, -0.2, 0.15, -0.15]
SENSOR_V0 = [1.0, 1.0, 0.0]


def _example2():
    agents = [{"order": 2, "basis": "none", "theta_true": [], "k": [-4.0, -4.0], "epsilon": 1.0,
               "lambda_gain": 5.0,
               "exosystem": {"kind": "sensor", "rate": float(i), "mu": list(SENSOR_MU),
                             "v0": list(SENSOR_V0)}}
              for i in range(1, 6)]
    return {
        "name": "example2",
        "notes": "planar robots, one scalar game per coordinate; epsilon=1 and Lambda=5I "
                 "read off the explicit controller; mu and v0 are fixed choices within |mu|<=0.2",
        "t_end": 50.0, "dt": 1e-3, "decimation": 10, "seed": 0, "tol": 1e-2,
        "graph": {"preset": "undirected-path-with-chords"},
        "game": {"preset": "sensor", "r": copy.deepcopy(SENSOR_R)},
        "generator": {"alpha_margin": 2.0, "gradient_mode": "full"},
        "coordinates": 2,
        "agents": agents,
        "initial": {"output_range": [-3.0, 3.0], "derivative_range": [-1.0, 1.0],
                    "z_range": [-3.0, 3.0], "theta_hat": 0.0},
        "events": [],
        "adaptation": "on",
    }


def _example3():
    agents = [{"order": 2, "basis": "vanderpol", "theta_true": [1.0, 1.0], "k": [-4.0, -4.0],
               "epsilon": 0.8, "lambda_gain": 5.0,
               "exosystem": {"kind": "rotation", "rate": float(i), "mu": [0.1, -0.1],
                             "v0": [0.0, 2.0]}}
              for i in range(1, 5)]
    return {
        "name": "example3",
        "notes": "Van der Pol agents with real-time gradients",
        "t_end": 60.0, "dt": 1e-3, "decimation": 10, "seed": 0, "tol": 2e-2,
        "graph": {"preset": "ring-with-chords"},
        "game": {"preset": "vanderpol", "p": [0.1] * 4, "q": [1.0] * 4,
                 "center": [1.0, 2.0, 3.0, 4.0]},
        "generator": {"alpha": 4.0, "gradient_mode": "realtime"},
        "coordinates": 1,
        "agents": agents,
        "initial": {"output_range": [0.0, 5.0], "derivative_range": [-1.0, 1.0],
                    "z_range": [0.0, 5.0], "theta_hat": 0.0},
        "events": [],
        "adaptation": "on",
    }


def _generator_only():
    cfg = _example1()
    cfg.update(name="generator-only", notes="inventory generator alone, alpha = 4",
               agents=[], events=[])
    return cfg


_PRESETS = {"example1": _example1, "example2": _example2, "example3": _example3,
            "generator-only": _generator_only}


def preset_config(name) -> dict:
    if name not in _PRESETS:
        raise ValidationError(f"scenario: unknown preset {name!r}; choose from {list(_PRESETS)}")
    return _PRESETS[name]()


def dump_config(cfg) -> str:
    return yaml.safe_dump(cfg, sort_keys=False)


# -- overrides -------------------------------------------------------------------

def _paths(tree, prefix=()):
    if isinstance(tree, dict):
        for k, v in tree.items():
            yield prefix + (k,)
            yield from _paths(v, prefix + (k,))


def apply_overrides(cfg, overrides) -> dict:
    """Set ``key=value`` pairs; a bare key must name exactly one existing entry."""
    cfg = copy.deepcopy(cfg)
    problems = []
    for key, value in overrides.items():
        if isinstance(value, str):
            value = yaml.safe_load(value)
        path = tuple(key.split("."))
        if len(path) == 1:
            matches = [p for p in _paths(cfg) if p[-1] == key]
            if len(matches) != 1:
                problems.append(f"{key}: override matches {len(matches)} config keys")
                continue
            path = matches[0]
        node = cfg
        try:
            for part in path[:-1]:
                node = node[int(part)] if isinstance(node, list) else node[part]
        except (KeyError, IndexError, ValueError):
            problems.append(f"{key}: no such config key")
            continue
        last = path[-1]
        if isinstance(node, list):
            node[int(last)] = value
        elif last in node or (len(path) > 1 and path[-2] == "generator"):
            node[last] = value
        else:
            problems.append(f"{key}: no such config key")
    # alpha and alpha_margin are alternatives
    gen = cfg.get("generator", {})
    if "alpha" in overrides or "generator.alpha" in overrides:
        gen.pop("alpha_margin", None)
    if "alpha_margin" in overrides or "generator.alpha_margin" in overrides:
        gen.pop("alpha", None)
    if problems:
        raise ValidationError(problems)
    return cfg


# -- building ----------------------------------------------------------------------

def _build_graph(spec):
    spec = dict(spec)
    preset = spec.pop("preset", None)
    if preset is not None:
        if preset not in gr.PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(gr.PRESETS)}")
        return gr.PRESETS[preset](**spec)
    n = int(spec["n"])
    edges = [(e[0] - 1, e[1] - 1, *e[2:]) for e in spec.get("edges", [])]
    return gr.Digraph.from_edges(n, edges, undirected=bool(spec.get("undirected", False)))


def _build_game(spec, coord):
    spec = dict(spec)
    preset = spec.pop("preset", "affine")

    def column(values):
        arr = np.asarray(values, dtype=float)
        return arr[:, coord] if arr.ndim == 2 else arr

    if preset == "inventory":
        return InventoryGame(spec["storage_cost"], spec["target_total"], spec["subsidy_rate"])
    if preset == "sensor":
        return SensorGame(column(spec["r"]))
    if preset == "vanderpol":
        return VanDerPolGame(spec["p"], spec["q"], spec["center"])
    if preset == "affine":
        return AffineGame(spec["G"], column(spec["g"]))
    raise ValueError(f"unknown preset {preset!r}")


def _exosystem(spec, coord):
    kind = spec.get("kind", "general")
    if kind == "sensor":
        exo = sensor_exosystem(spec["rate"], spec["mu"], spec["v0"])
    elif kind == "rotation":
        exo = rotation_exosystem(spec["rate"], spec["mu"], spec["v0"])
    elif kind == "general":
        exo = Exosystem(spec["D"], spec["S"], spec["v0"])
    else:
        raise ValueError(f"unknown exosystem kind {kind!r}")
    row = min(coord, exo.D.shape[0] - 1)
    return Exosystem(exo.D[row:row + 1], exo.S, exo.v0)


def _build_agent(spec, coord, key, problems):
    unknown = set(spec) - AGENT_KEYS
    if unknown:
        problems.append(f"{key}: unknown keys {sorted(unknown)}")
    terms = list(resolve_basis(spec.get("basis", "none")))
    theta = list(np.asarray(spec.get("theta_true", []), dtype=float).reshape(-1))
    freq = float(spec.get("frequency", 1.0))
    exo_spec = spec.get("exosystem")
    if exo_spec is not None:
        kind = exo_spec.get("kind", "general")
        bound = exo_spec.get("mu_bound", EXO_BOUNDS.get(kind))
        if bound is not None and "mu" in exo_spec:
            mu = np.abs(np.asarray(exo_spec["mu"], dtype=float))
            if np.any(mu > bound):
                problems.append(f"{key}.exosystem.mu: |mu| must be <= {bound}, got {mu.max()}")
        eb = exo_as_basis(_exosystem(exo_spec, coord))
        for term, coef in zip(eb.terms, eb.coefficients[:, 0]):
            if term in terms:
                theta[terms.index(term)] += coef
            else:
                terms.append(term)
                theta.append(coef)
        if eb.frequency:
            freq = eb.frequency
    model = AgentModel(order=int(spec["order"]), terms=tuple(terms), theta_true=theta, frequency=freq)
    k = spec.get("k")
    if k is None:
        raise ValueError("missing gains 'k'")
    if not hurwitz_check(k):
        problems.append(f"{key}.k: non-Hurwitz gains {list(k)} (stabilising gains are negative)")
        return model, None
    gains = ControllerGains.build(k, epsilon=float(spec.get("epsilon", 1.0)),
                                  lambda_gain=spec.get("lambda_gain", 1.0), n_params=model.n_params)
    return model, gains


def build_scenarios(cfg, seed=None, decimation=None) -> list:
    """Validate a config mapping and build one :class:`Scenario` per coordinate."""
    problems = []
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        problems.append(f"config: unknown keys {sorted(unknown)}")
    for required in ("graph", "game", "t_end"):
        if required not in cfg:
            problems.append(f"{required}: missing")
    if problems:
        raise ValidationError(problems)

    try:
        g = _build_graph(cfg["graph"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ValidationError(f"graph: {exc}") from None
    cert = gr.certify(g)
    if not cert.weight_balanced:
        problems.append("graph: not weight-balanced")
    if not cert.strongly_connected:
        problems.append("graph: not strongly connected")

    n_coords = int(cfg.get("coordinates", 1))
    gen_spec = dict(cfg.get("generator", {}))
    unknown = set(gen_spec) - {"alpha", "alpha_margin", "gradient_mode"}
    if unknown:
        problems.append(f"generator: unknown keys {sorted(unknown)}")
    try:
        mode = GradientMode(gen_spec.get("gradient_mode", "full"))
    except ValueError:
        problems.append(f"generator.gradient_mode: expected 'full' or 'realtime', "
                        f"got {gen_spec.get('gradient_mode')!r}")
        mode = GradientMode.FULL_INFORMATION

    t_end = float(cfg["t_end"])
    adaptation = str(cfg.get("adaptation", "on")).lower()
    if adaptation in ("true", "1"):
        adaptation = "on"
    if adaptation in ("false", "0"):
        adaptation = "off"
    if adaptation not in ("on", "off"):
        problems.append(f"adaptation: expected on/off, got {cfg.get('adaptation')!r}")
    events = []
    for idx, ev in enumerate(cfg.get("events", []) or []):
        try:
            events.append(TimedEvent(float(ev["t_start"]), float(ev["t_end"]),
                                     ev.get("action", "freeze_adaptation")))
        except (KeyError, ValueError) as exc:
            problems.append(f"events[{idx}]: {exc}")
    if adaptation == "off":
        events = [TimedEvent(0.0, t_end + 1.0)]

    init = dict(cfg.get("initial", {}))
    unknown = set(init) - set(InitialConditions.__dataclass_fields__)
    if unknown:
        problems.append(f"initial: unknown keys {sorted(unknown)}")
        init = {k: v for k, v in init.items() if k not in unknown}
    initial = InitialConditions(**{k: (tuple(v) if isinstance(v, list) else v)
                                   for k, v in init.items()})

    seed = int(cfg.get("seed", 0) if seed is None else seed)
    decimation = int(cfg.get("decimation", 10) if decimation is None else decimation)

    scenarios = []
    for coord in range(n_coords):
        try:
            game = _build_game(cfg["game"], coord)
        except (ValueError, TypeError, KeyError) as exc:
            problems.append(f"game: {exc}")
            break
        if game.n_players != g.n_nodes:
            problems.append(f"game: {game.n_players} players but graph has {g.n_nodes} nodes")
            break
        agents, gains = [], []
        for idx, spec in enumerate(cfg.get("agents", []) or []):
            key = f"agents[{idx}]"
            try:
                model, gain = _build_agent(spec, coord, key, problems)
            except (ValueError, TypeError, KeyError, NashAdaptError) as exc:
                problems.append(f"{key}: {exc}")
                continue
            agents.append(model)
            gains.append(gain)
        if agents and len(agents) != g.n_nodes:
            problems.append(f"agents: {len(agents)} agents for {g.n_nodes} players")
        try:
            consts = estimate_constants(game)
        except NashAdaptError as exc:
            problems.append(f"game: {exc}")
            break
        bound = alpha_min(cert, consts) if cert.lambda2 > 0 else float("inf")
        if "alpha" in gen_spec:
            alpha = float(gen_spec["alpha"])
            if coord == 0 and alpha <= bound:
                log.warning("generator.alpha=%g is not above the sufficient bound %.4g; "
                            "convergence is not guaranteed", alpha, bound)
        else:
            margin = float(gen_spec.get("alpha_margin", 2.0))
            alpha = margin * bound
            if coord == 0 and "alpha_margin" not in gen_spec:
                log.info("generator.alpha not set; using 2 x alpha_min = %.6g", alpha)
        if not np.isfinite(alpha) or alpha <= 0:
            problems.append(f"generator.alpha: invalid value {alpha}")
            break
        if problems:
            continue
        dt = cfg.get("dt")
        if dt is None:
            dt = 1e-4 if any(gn.epsilon <= 0.5 for gn in gains) else 1e-3
        try:
            scenarios.append(Scenario(
                graph=g, game=game, agents=tuple(agents), gains=tuple(gains),
                generator=GeneratorConfig(alpha, mode), t_end=t_end, dt=float(dt),
                events=tuple(events), initial=initial, seed=seed + coord, decimation=decimation,
                name=str(cfg.get("name", "custom")) + (f"/c{coord + 1}" if n_coords > 1 else ""),
                meta={"tol": float(cfg.get("tol", 1e-2)), "coordinate": coord,
                      "alpha_min": bound, "lambda2": cert.lambda2},
            ))
        except ValidationError as exc:
            problems.extend(exc.problems)
    if problems:
        raise ValidationError(problems)
    return scenarios


@dataclass
class RunConfig:
    scenario: str = "example1"
    overrides: dict = field(default_factory=dict)
    seed: int | None = None
    output_dir: str = "out"
    decimation: int | None = None

    def __post_init__(self):
        if self.decimation is not None and int(self.decimation) < 1:
            raise ValidationError("decimation: must be a positive integer")


def raw_config(cfg: RunConfig) -> dict:
    if cfg.scenario in _PRESETS:
        base = preset_config(cfg.scenario)
    else:
        path = Path(cfg.scenario)
        if not path.is_file():
            raise ValidationError(f"scenario: {cfg.scenario!r} is neither a preset "
                                  f"({', '.join(PRESET_NAMES)}) nor a readable file")
        base = yaml.safe_load(path.read_text()) or {}
        if not isinstance(base, dict):
            raise ValidationError("scenario: config file must hold a mapping")
    return apply_overrides(base, cfg.overrides)


def load_scenarios(cfg: RunConfig) -> list:
    return build_scenarios(raw_config(cfg), seed=cfg.seed, decimation=cfg.decimation)


def load_scenario(cfg: RunConfig, coordinate=0) -> Scenario:
    return load_scenarios(cfg)[coordinate]
