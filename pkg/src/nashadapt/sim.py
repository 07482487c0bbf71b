"""Closed-loop assembly and fixed-step RK4 integration.

State is kept in physical coordinates: plant chains ``x``, parameter
estimates ``theta_hat`` and the estimate stack ``z``.  Scaled tracking
coordinates are computed on demand by the controller.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import controller as ctl
from .errors import NonFiniteState, ValidationError
from .game import Game, nash_oracle
from .generator import (GeneratorConfig, GradientMode, generator_matrices, realtime_matrices,
                        rhs_full_info, rhs_real_time)
from .graph import Digraph, laplacian
from .plant import AgentModel, eval_terms, plant_rhs


class EventAction(str, enum.Enum):
    # holds theta_hat and removes the estimate feedforward from u
    FREEZE_ADAPTATION = "freeze_adaptation"


@dataclass(frozen=True)
class TimedEvent:
    t_start: float
    t_end: float
    action: EventAction = EventAction.FREEZE_ADAPTATION

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"event needs t_start < t_end, got [{self.t_start}, {self.t_end}]")
        object.__setattr__(self, "action", EventAction(self.action))

    def active(self, t) -> bool:
        return self.t_start <= t < self.t_end


@dataclass
class SystemState:
    x: np.ndarray
    theta_hat: np.ndarray
    z: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.theta_hat, self.z.reshape(-1)])

    @classmethod
    def from_vector(cls, v, nx, nth, n):
        v = np.asarray(v, dtype=float)
        return cls(v[:nx].copy(), v[nx:nx + nth].copy(), v[nx + nth:].reshape(n, n).copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.to_vector()))


@dataclass(frozen=True)
class InitialConditions:
    """Uniform ranges for the seeded initial-state sampler.

    Explicit arrays (``x0``, ``theta_hat0``, ``z0``) take precedence.
    """

    output_range: tuple = (0.0, 5.0)
    derivative_range: tuple = (-1.0, 1.0)
    z_range: tuple = (0.0, 5.0)
    theta_hat: float = 0.0
    x0: tuple | None = None
    theta_hat0: tuple | None = None
    z0: tuple | None = None


@dataclass(frozen=True, eq=False)
class Scenario:
    graph: Digraph
    game: Game
    agents: tuple
    gains: tuple
    generator: GeneratorConfig
    t_end: float
    dt: float = 1e-3
    events: tuple = ()
    initial: InitialConditions = InitialConditions()
    seed: int = 0
    decimation: int = 10
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "gains", tuple(self.gains))
        object.__setattr__(self, "events", tuple(self.events))
        problems = []
        n = self.graph.n_nodes
        if self.game.n_players != n:
            problems.append(f"game: {self.game.n_players} players but graph has {n} nodes")
        if self.agents and len(self.agents) != n:
            problems.append(f"agents: {len(self.agents)} agents for {n} players")
        if len(self.gains) != len(self.agents):
            problems.append(f"gains: {len(self.gains)} gain sets for {len(self.agents)} agents")
        for i, (model, gains) in enumerate(zip(self.agents, self.gains)):
            if gains.order != model.order:
                problems.append(f"agents[{i}].k: {gains.order} gains for an order-{model.order} plant")
            if gains.Lambda is not None and gains.Lambda.shape != (model.n_params,) * 2:
                problems.append(f"agents[{i}].lambda_gain: shape {gains.Lambda.shape} "
                                f"for {model.n_params} parameters")
        if not self.dt > 0:
            problems.append(f"dt: must be positive, got {self.dt}")
        if not self.t_end > 0:
            problems.append(f"t_end: must be positive, got {self.t_end}")
        if int(self.decimation) < 1:
            problems.append("decimation: must be a positive integer")
        if not self.agents and self.generator.mode is GradientMode.REAL_TIME:
            problems.append("gradient_mode: real-time gradients need plants")
        if problems:
            raise ValidationError(problems)

    @property
    def n_players(self) -> int:
        return self.graph.n_nodes

    @property
    def plants_enabled(self) -> bool:
        return bool(self.agents)

    @property
    def nx(self) -> int:
        return sum(a.order for a in self.agents)

    @property
    def nth(self) -> int:
        return sum(a.n_params for a in self.agents)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def x_offsets(self):
        return np.cumsum([0] + [a.order for a in self.agents])

    def theta_offsets(self):
        return np.cumsum([0] + [a.n_params for a in self.agents])

    def theta_true(self) -> np.ndarray:
        if not self.agents:
            return np.zeros(0)
        return np.concatenate([a.theta_true for a in self.agents])

    def nash(self) -> np.ndarray:
        return nash_oracle(self.game)

    def adaptation_on(self, t) -> bool:
        return not any(ev.active(t) for ev in self.events
                       if ev.action is EventAction.FREEZE_ADAPTATION)

    def fingerprint(self) -> str:
        """Hash of every numerical ingredient; equal scenarios hash equal."""
        payload = {
            "adjacency": self.graph.adjacency.tolist(),
            "game": self.game.describe(),
            "agents": [{"order": a.order, "terms": list(a.terms), "theta": a.theta_true.tolist(),
                        "freq": a.frequency} for a in self.agents],
            "gains": [{"k": g.k.tolist(), "eps": g.epsilon,
                       "Lambda": None if g.Lambda is None else g.Lambda.tolist()} for g in self.gains],
            "generator": [self.generator.alpha, self.generator.mode.value],
            "t_end": self.t_end, "dt": self.dt, "decimation": int(self.decimation),
            "events": [[e.t_start, e.t_end, e.action.value] for e in self.events],
            "initial": _jsonable(self.initial.__dict__), "seed": self.seed,
        }
        text = json.dumps(payload, sort_keys=True, default=float)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


# -- initial states -------------------------------------------------------------

def initial_state(s: Scenario, rng=None) -> SystemState:
    rng = np.random.default_rng(s.seed) if rng is None else rng
    ic = s.initial
    n = s.n_players
    if ic.x0 is not None:
        x = np.array(ic.x0, dtype=float).reshape(-1)
    else:
        parts = []
        for a in s.agents:
            xi = np.empty(a.order)
            xi[0] = rng.uniform(*ic.output_range)
            xi[1:] = rng.uniform(*ic.derivative_range, a.order - 1)
            parts.append(xi)
        x = np.concatenate(parts) if parts else np.zeros(0)
    if ic.theta_hat0 is not None:
        th = np.array(ic.theta_hat0, dtype=float).reshape(-1)
    else:
        th = np.full(s.nth, float(ic.theta_hat))
    if ic.z0 is not None:
        z = np.array(ic.z0, dtype=float).reshape(n, n)
    else:
        z = rng.uniform(*ic.z_range, (n, n))
    if x.size != s.nx or th.size != s.nth:
        raise ValidationError(f"initial: expected {s.nx} plant states and {s.nth} estimates, "
                              f"got {x.size} and {th.size}")
    return SystemState(x, th, z)


def equilibrium_state(s: Scenario) -> SystemState:
    """Outputs at the Nash equilibrium, higher states 0, exact estimates, consensus stack."""
    ystar = s.nash()
    x = np.zeros(s.nx)
    x[s.x_offsets()[:-1]] = ystar
    n = s.n_players
    return SystemState(x, s.theta_true().copy(), np.tile(ystar, (n, 1)))


# -- right-hand sides -----------------------------------------------------------

def plant_outputs(s: Scenario, state: SystemState) -> np.ndarray:
    if not s.plants_enabled:
        return np.diag(state.z).copy()
    return state.x[s.x_offsets()[:-1]]


def composite_rhs(s: Scenario, state: SystemState, t, adaptation_on=True) -> SystemState:
    """Reference closed-loop derivative, evaluated agent by agent."""
    g, game, alpha = s.graph, s.game, s.generator.alpha
    if s.generator.mode is GradientMode.REAL_TIME:
        dz = rhs_real_time(g, game, state.z, plant_outputs(s, state), alpha)
    else:
        dz = rhs_full_info(g, game, state.z, alpha)
    xo, to = s.x_offsets(), s.theta_offsets()
    dx = np.zeros(s.nx)
    dth = np.zeros(s.nth)
    for i, (model, gains) in enumerate(zip(s.agents, s.gains)):
        xi = state.x[xo[i]:xo[i + 1]]
        thi = state.theta_hat[to[i]:to[i + 1]]
        zi = state.z[i, i]
        u = ctl.control_law(gains, model, xi, thi, zi, t, adaptive=adaptation_on)
        dx[xo[i]:xo[i + 1]] = plant_rhs(model, xi, u, t)
        if adaptation_on:
            dth[to[i]:to[i + 1]] = ctl.adaptation_rhs(gains, model, xi, zi, t)
    out = SystemState(dx, dth, dz)
    if not np.all(np.isfinite(out.to_vector())):
        raise NonFiniteState(t)
    return out


def controls(s: Scenario, state: SystemState, t, adaptation_on=True) -> np.ndarray:
    xo, to = s.x_offsets(), s.theta_offsets()
    return np.array([
        ctl.control_law(gains, model, state.x[xo[i]:xo[i + 1]], state.theta_hat[to[i]:to[i + 1]],
                        state.z[i, i], t, adaptive=adaptation_on)
        for i, (model, gains) in enumerate(zip(s.agents, s.gains))
    ])


class CompiledRHS:
    """Vectorised closed-loop derivative over the flat state vector.

    Layout: ``[x (nx), theta_hat (nth), vec(z) (N^2, row-major)]``.
    Agrees with :func:`composite_rhs` to round-off.
    """

    def __init__(self, s: Scenario):
        self.s = s
        n = s.n_players
        self.n = n
        self.nx, self.nth = s.nx, s.nth
        self.own = np.arange(n) * n + np.arange(n)
        xo, to = s.x_offsets(), s.theta_offsets()
        self.first = xo[:-1]
        self.last = xo[1:] - 1
        chain_dst = [j for i in range(len(s.agents)) for j in range(xo[i], xo[i + 1] - 1)]
        self.chain_dst = np.array(chain_dst, dtype=int)
        self.chain_src = self.chain_dst + 1

        na = len(s.agents)
        self.Kx = np.zeros((na, self.nx))
        self.kz = np.zeros(na)
        self.Wx = np.zeros((na, self.nx))
        self.wz = np.zeros(na)
        lam = np.zeros((self.nth, self.nth))
        self.agg = np.zeros((na, self.nth))
        self.param_agent = np.zeros(self.nth, dtype=int)
        for i, (model, gains) in enumerate(zip(s.agents, s.gains)):
            order, eps = model.order, gains.epsilon
            powers = eps ** np.arange(order)
            self.Kx[i, xo[i]:xo[i + 1]] = gains.k * powers / eps**order
            self.kz[i] = gains.k[0] / eps**order
            self.Wx[i, xo[i]:xo[i + 1]] = gains.P[-1] * powers
            self.wz[i] = gains.P[-1, 0]
            sl = slice(to[i], to[i + 1])
            if model.n_params:
                lam[sl, sl] = gains.adaptation_gain(model.n_params)
            self.agg[i, sl] = 1.0
            self.param_agent[sl] = i
        diag = np.diag(lam).copy()
        self.lam_diag = diag if np.allclose(lam, np.diag(diag)) else None
        self.lam = lam
        self.theta_true = s.theta_true()

        # regressor groups: agents sharing (terms, order) are evaluated together
        groups = {}
        for i, model in enumerate(s.agents):
            if model.n_params:
                groups.setdefault((model.terms, model.order), []).append(i)
        self.groups = []
        for (terms, order), members in groups.items():
            members = np.array(members)
            xidx = xo[members][:, None] + np.arange(order)[None, :]
            pidx = to[members][:, None] + np.arange(len(terms))[None, :]
            freq = np.array([s.agents[i].frequency for i in members])
            self.groups.append((terms, xidx, pidx, freq))

        self.realtime = s.generator.mode is GradientMode.REAL_TIME
        self.affine = s.game.affine is not None
        alpha = s.generator.alpha
        if self.affine:
            if self.realtime:
                self.M, self.c, self.B = realtime_matrices(s.graph, s.game, alpha)
            else:
                self.M, self.c = generator_matrices(s.graph, s.game, alpha)
        self.lap = laplacian(s.graph)

    def regressor(self, x, t):
        p = np.empty(self.nth)
        for terms, xidx, pidx, freq in self.groups:
            p[pidx] = eval_terms(terms, x[xidx], t, freq)
        return p

    def outputs(self, v):
        if not self.s.plants_enabled:
            return v[self.nx + self.nth:][self.own]
        return v[self.first]

    def control(self, v, t, adaptation_on=True, p=None):
        x = v[:self.nx]
        zown = v[self.nx + self.nth:][self.own]
        u = self.Kx @ x - self.kz * zown
        if adaptation_on and self.nth:
            if p is None:
                p = self.regressor(x, t)
            u = u - self.agg @ (v[self.nx:self.nx + self.nth] * p)
        return u

    def __call__(self, t, v, adaptation_on=True):
        nx, nth, n = self.nx, self.nth, self.n
        x = v[:nx]
        th = v[nx:nx + nth]
        zv = v[nx + nth:]
        out = np.empty_like(v)

        if self.affine:
            dz = self.M @ zv + self.c
            if self.realtime:
                dz += self.B @ x[self.first]
        else:
            z = zv.reshape(n, n)
            if self.realtime:
                dz = rhs_real_time(self.s.graph, self.s.game, z, x[self.first], self.s.generator.alpha)
            else:
                dz = rhs_full_info(self.s.graph, self.s.game, z, self.s.generator.alpha)
            dz = dz.reshape(-1)
        out[nx + nth:] = dz

        if nx:
            zown = zv[self.own]
            u = self.Kx @ x - self.kz * zown
            dx = out[:nx]
            dx[self.chain_dst] = x[self.chain_src]
            if nth:
                p = self.regressor(x, t)
                drift = self.agg @ (self.theta_true * p)
                if adaptation_on:
                    u = u - self.agg @ (th * p)
                    s_track = self.Wx @ x - self.wz * zown
                    grad = p * s_track[self.param_agent]
                    out[nx:nx + nth] = self.lam_diag * grad if self.lam_diag is not None else self.lam @ grad
                else:
                    out[nx:nx + nth] = 0.0
                dx[self.last] = drift + u
            else:
                dx[self.last] = u
        return out


# -- integration -----------------------------------------------------------------

def rk4_solve(f: Callable, y0, dt, n_steps, decimation=1, t0=0.0, select: Callable | None = None):
    """Classical fixed-step RK4.

    ``f(t, y)`` is the right-hand side; when ``select`` is given it is called
    at each step start and returns the right-hand side to use for that step.
    Returns ``(times, samples)`` every ``decimation`` steps, endpoints included.
    """
    y = np.array(y0, dtype=float)
    n_rec = n_steps // decimation + 1 + (1 if n_steps % decimation else 0)
    times = np.empty(n_rec)
    out = np.empty((n_rec, y.size))
    times[0], out[0] = t0, y
    rec = 1
    h2, h6 = dt / 2, dt / 6
    for k in range(n_steps):
        t = t0 + k * dt
        rhs = f if select is None else select(t)
        k1 = rhs(t, y)
        k2 = rhs(t + h2, y + h2 * k1)
        k3 = rhs(t + h2, y + h2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + h6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.isfinite(y).all():
            raise NonFiniteState(t + dt)
        if (k + 1) % decimation == 0 or k + 1 == n_steps:
            times[rec] = t0 + (k + 1) * dt
            out[rec] = y
            rec += 1
    return times[:rec], out[:rec]


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    theta_hat: np.ndarray
    z: np.ndarray
    u: np.ndarray
    y: np.ndarray
    y_star: np.ndarray
    adaptation_on: np.ndarray
    scenario: Scenario

    @property
    def n_players(self) -> int:
        return self.y.shape[1]

    @property
    def z_own(self) -> np.ndarray:
        idx = np.arange(self.n_players)
        return self.z[:, idx, idx]

    @property
    def tracking_error(self) -> np.ndarray:
        return self.y - self.z_own

    @property
    def dist_nash(self) -> np.ndarray:
        return np.linalg.norm(self.y - self.y_star, axis=1)

    @property
    def max_nash_error(self) -> np.ndarray:
        return np.abs(self.y - self.y_star).max(axis=1)

    @property
    def consensus_error(self) -> np.ndarray:
        """``||z - 1 y*^T||`` per sample."""
        return np.linalg.norm((self.z - self.y_star[None, None, :]).reshape(len(self.times), -1), axis=1)

    def theta_hat_agent(self, i) -> np.ndarray:
        to = self.scenario.theta_offsets()
        return self.theta_hat[:, to[i]:to[i + 1]]

    def x_agent(self, i) -> np.ndarray:
        xo = self.scenario.x_offsets()
        return self.x[:, xo[i]:xo[i + 1]]

    def regressor_series(self, i) -> np.ndarray:
        """``p_i(x_i(t), t)`` along the logged grid, shape ``(T, n_params)``."""
        model = self.scenario.agents[i]
        if not model.n_params:
            return np.zeros((len(self.times), 0))
        # terms broadcast elementwise, so the time grid can stand in for t
        return eval_terms(model.terms, self.x_agent(i), self.times, np.array([model.frequency]))

    def window(self, t0, t1) -> np.ndarray:
        return (self.times >= t0 - 1e-9) & (self.times <= t1 + 1e-9)

    def csv_header(self):
        n = self.n_players
        cols = ["t"]
        cols += [f"y_{i + 1}" for i in range(n)]
        cols += [f"z_{i + 1}" for i in range(n)]
        cols += [f"u_{i + 1}" for i in range(n)]
        cols += [f"err_track_{i + 1}" for i in range(n)]
        cols += ["dist_nash"]
        for i, a in enumerate(self.scenario.agents):
            cols += [f"theta_hat_{i + 1}_{j + 1}" for j in range(a.n_params)]
        return cols

    def table(self) -> np.ndarray:
        return np.column_stack([self.times, self.y, self.z_own, self.u, self.tracking_error,
                                self.dist_nash, self.theta_hat])

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.csv_header())
            for row in self.table():
                w.writerow([repr(float(v)) for v in row])


def integrate(s: Scenario, state0: SystemState | None = None) -> Trajectory:
    """Fixed-step RK4 over ``[0, t_end]``; events toggle on step boundaries."""
    rhs = CompiledRHS(s)
    if state0 is None:
        state0 = initial_state(s)
    v0 = state0.to_vector()

    def on(t, v):
        return rhs(t, v, True)

    def off(t, v):
        return rhs(t, v, False)

    select = None
    if s.events:
        def select(t):
            return on if s.adaptation_on(t) else off

    times, V = rk4_solve(on, v0, s.dt, s.n_steps, decimation=int(s.decimation), select=select)
    nx, nth, n = s.nx, s.nth, s.n_players
    flags = np.array([s.adaptation_on(t) for t in times])
    U = np.zeros((len(times), n))
    if s.plants_enabled:
        for k, (t, v) in enumerate(zip(times, V)):
            U[k] = rhs.control(v, t, flags[k])
    Z = V[:, nx + nth:].reshape(-1, n, n)
    Y = V[:, s.x_offsets()[:-1]] if s.plants_enabled else Z[:, np.arange(n), np.arange(n)]
    return Trajectory(times=times, x=V[:, :nx], theta_hat=V[:, nx:nx + nth], z=Z, u=U,
                      y=np.array(Y), y_star=s.nash(), adaptation_on=flags, scenario=s)


def find_convergence_time(traj: Trajectory, tol) -> float | None:
    """First logged time after which every output stays within ``tol`` of Nash.

    Returns ``None`` when the final sample is still outside the band.
    """
    bad = traj.max_nash_error > tol
    if bad[-1]:
        return None
    idx = np.flatnonzero(bad)
    k = 0 if idx.size == 0 else idx[-1] + 1
    return float(traj.times[k])


def generator_only(s: Scenario, alpha=None) -> Scenario:
    """The same game and graph with plants removed (full-information generator)."""
    gen = GeneratorConfig(alpha if alpha is not None else s.generator.alpha,
                          GradientMode.FULL_INFORMATION)
    return replace(s, agents=(), gains=(), generator=gen, events=(),
                   initial=replace(s.initial, x0=None, theta_hat0=None))


def with_epsilon(s: Scenario, epsilon) -> Scenario:
    gains = tuple(ctl.ControllerGains(k=g.k, epsilon=epsilon, Lambda=g.Lambda) for g in s.gains)
    return replace(s, gains=gains)


def largest_working_epsilon(s: Scenario, grid: Sequence[float], tol=1e-2):
    """Largest ``epsilon`` in ``grid`` whose run ends inside the ``tol`` band.

    An empirical diagnostic only; it says nothing about the theoretical bound.
    """
    for eps in sorted(grid, reverse=True):
        try:
            traj = integrate(with_epsilon(s, eps))
        except NonFiniteState:
            continue
        if find_convergence_time(traj, tol) is not None:
            return eps
    return None


def rk4_stability_dt(s: Scenario) -> float:
    """Step below which RK4 is stable on the linear part of the generator."""
    rhs = CompiledRHS(s)
    if not rhs.affine:
        return math.inf
    rho = np.abs(np.linalg.eigvals(rhs.M)).max()
    return 2.78 / rho if rho > 0 else math.inf
