"""N-player games with scalar strategies: costs, pseudogradients and a Nash oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, NotStronglyMonotone


@dataclass(frozen=True)
class MonotonicityData:
    mono_lower: float
    lip_F: float
    lip_extended: float
    heuristic: bool = False

    @property
    def l_max(self) -> float:
        return max(self.lip_F, self.lip_extended)


class Game:
    """Base game.  Subclasses provide ``cost`` and usually ``partial_gradient``.

    ``partial_gradient(i, y)`` is the derivative of player ``i``'s cost with
    respect to its own strategy ``y[i]``.  The default uses central differences.
    """

    fd_step = 1e-6

    def __init__(self, n_players: int):
        if n_players < 1:
            raise ValueError("need at least one player")
        self.n_players = int(n_players)

    def cost(self, i: int, y) -> float:
        raise NotImplementedError

    def partial_gradient(self, i: int, y) -> float:
        y = np.asarray(y, dtype=float)
        h = self.fd_step * max(1.0, abs(y[i]))
        yp, ym = y.copy(), y.copy()
        yp[i] += h
        ym[i] -= h
        return (self.cost(i, yp) - self.cost(i, ym)) / (2 * h)

    def pseudogradient(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.array([self.partial_gradient(i, y) for i in range(self.n_players)])

    def extended_pseudogradient(self, z) -> np.ndarray:
        """Player ``i``'s partial gradient evaluated at its own estimate row ``z[i]``."""
        z = np.asarray(z, dtype=float)
        return np.array([self.partial_gradient(i, z[i]) for i in range(self.n_players)])

    def jacobian(self, y) -> np.ndarray:
        """Jacobian of the pseudogradient by central differences."""
        y = np.asarray(y, dtype=float)
        n = self.n_players
        jac = np.empty((n, n))
        for k in range(n):
            h = 1e-6 * max(1.0, abs(y[k]))
            yp, ym = y.copy(), y.copy()
            yp[k] += h
            ym[k] -= h
            jac[:, k] = (self.pseudogradient(yp) - self.pseudogradient(ym)) / (2 * h)
        return jac

    @property
    def affine(self):
        """``(G, g)`` when the pseudogradient is ``G y + g``, else ``None``."""
        return None

    def describe(self) -> dict:
        return {"type": type(self).__name__, "n_players": self.n_players}


class AffineGame(Game):
    """Game whose pseudogradient is ``F(y) = G y + g``.

    Player ``i``'s cost is taken as the one implied by its gradient row,
    ``0.5 G_ii y_i^2 + y_i (sum_{k != i} G_ik y_k + g_i)``, unless a subclass
    knows the closed form.
    """

    def __init__(self, G, g):
        G = np.array(G, dtype=float)
        g = np.array(g, dtype=float).reshape(-1)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] != g.size:
            raise ValueError(f"G must be n x n and g length n; got {G.shape} and {g.shape}")
        super().__init__(G.shape[0])
        G.setflags(write=False)
        g.setflags(write=False)
        self.G = G
        self.g = g

    @property
    def affine(self):
        return self.G, self.g

    def cost(self, i, y):
        y = np.asarray(y, dtype=float)
        off = self.G[i] @ y - self.G[i, i] * y[i]
        return 0.5 * self.G[i, i] * y[i] ** 2 + y[i] * (off + self.g[i])

    def partial_gradient(self, i, y):
        return float(self.G[i] @ np.asarray(y, dtype=float) + self.g[i])

    def pseudogradient(self, y):
        return self.G @ np.asarray(y, dtype=float) + self.g

    def extended_pseudogradient(self, z):
        z = np.asarray(z, dtype=float)
        return np.einsum("ij,ij->i", self.G, z) + self.g

    def jacobian(self, y=None):
        return np.array(self.G)

    def describe(self):
        return {"type": "affine", "G": self.G.tolist(), "g": self.g.tolist()}


class InventoryGame(AffineGame):
    """Perishable-inventory game: ``J_i = a_i I_i - I_i * d0 * (I_r - sum_j I_j)``."""

    def __init__(self, storage_cost, target_total, subsidy_rate):
        a = np.array(storage_cost, dtype=float)
        n = a.size
        self.storage_cost = a
        self.target_total = float(target_total)
        self.subsidy_rate = float(subsidy_rate)
        d0 = self.subsidy_rate
        super().__init__(d0 * (np.eye(n) + np.ones((n, n))), a - d0 * self.target_total)

    def cost(self, i, y):
        y = np.asarray(y, dtype=float)
        return self.storage_cost[i] * y[i] - y[i] * self.subsidy_rate * (self.target_total - y.sum())

    def describe(self):
        return {"type": "inventory", "storage_cost": self.storage_cost.tolist(),
                "target_total": self.target_total, "subsidy_rate": self.subsidy_rate}


class SensorGame(AffineGame):
    """One coordinate of the mobile-sensor game:
    ``J_i = y_i^2 + y_i r_i + sum_j (y_i - y_j)^2``.
    """

    def __init__(self, r):
        r = np.array(r, dtype=float)
        n = r.size
        self.r = r
        super().__init__(2 * (n + 1) * np.eye(n) - 2 * np.ones((n, n)), r)

    def cost(self, i, y):
        y = np.asarray(y, dtype=float)
        return y[i] ** 2 + y[i] * self.r[i] + np.sum((y[i] - y) ** 2)

    def describe(self):
        return {"type": "sensor", "r": self.r.tolist()}


class VanDerPolGame(AffineGame):
    """``J_i = (y_i - c_i)^2 - y_i (p_i sum_j y_j + q_i)``."""

    def __init__(self, p, q, center):
        p = np.array(p, dtype=float)
        q = np.array(q, dtype=float)
        c = np.array(center, dtype=float)
        n = c.size
        self.p, self.q, self.center = p, q, c
        G = -p[:, None] * np.ones((n, n)) + np.diag(2.0 - p)
        super().__init__(G, -2 * c - q)

    def cost(self, i, y):
        y = np.asarray(y, dtype=float)
        return (y[i] - self.center[i]) ** 2 - y[i] * (self.p[i] * y.sum() + self.q[i])

    def describe(self):
        return {"type": "vanderpol", "p": self.p.tolist(), "q": self.q.tolist(),
                "center": self.center.tolist()}


class CallbackGame(Game):
    """Game from user callables ``cost(i, y)`` and optionally ``grad(i, y)``."""

    def __init__(self, n_players, cost, grad=None):
        super().__init__(n_players)
        self._cost = cost
        self._grad = grad

    def cost(self, i, y):
        return float(self._cost(i, np.asarray(y, dtype=float)))

    def partial_gradient(self, i, y):
        if self._grad is None:
            return super().partial_gradient(i, y)
        return float(self._grad(i, np.asarray(y, dtype=float)))


def pseudogradient(game: Game, y) -> np.ndarray:
    return game.pseudogradient(y)


def extended_pseudogradient(game: Game, z) -> np.ndarray:
    return game.extended_pseudogradient(z)


def nash_oracle(game: Game, y0=None, tol=1e-10, max_iter=100, flow_steps=200_000):
    """Solve ``F(y) = 0`` by damped Newton, falling back to the gradient flow.

    Independent of the generator dynamics: it never touches the graph.
    """
    n = game.n_players
    y = np.zeros(n) if y0 is None else np.array(y0, dtype=float)
    res = game.pseudogradient(y)
    for _ in range(max_iter):
        rnorm = np.linalg.norm(res)
        if rnorm <= tol:
            return y
        try:
            step = np.linalg.solve(game.jacobian(y), -res)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-8:
            trial = y + lam * step
            trial_res = game.pseudogradient(trial)
            if np.linalg.norm(trial_res) < (1 - 1e-4 * lam) * rnorm:
                break
            lam *= 0.5
        else:
            break
        y, res = trial, trial_res
    if np.linalg.norm(res) <= tol:
        return y

    # forward-Euler on y' = -F(y); contraction for step < 2 l_lower / l_bar^2
    jac = game.jacobian(y)
    lbar = max(np.linalg.norm(jac, 2), 1e-12)
    llow = max(np.linalg.eigvalsh(0.5 * (jac + jac.T)).min(), 1e-6)
    h = llow / lbar**2
    for _ in range(flow_steps):
        res = game.pseudogradient(y)
        if np.linalg.norm(res) <= tol:
            return y
        y = y - h * res
    raise NonConvergence(f"|F(y)| = {np.linalg.norm(res):.3e} after Newton and gradient flow")


def estimate_constants(game: Game, sample_box=(-10.0, 10.0), n_samples=2000, rng=None):
    """Monotonicity / Lipschitz constants of the pseudogradient.

    Exact for affine games: ``mono_lower`` is the smallest eigenvalue of
    ``Sym(G)``, ``lip_F = ||G||_2``, and the extended pseudogradient has
    Jacobian rows with disjoint supports, so its norm is the largest row norm
    of ``G``.  Other games get sampled bounds flagged ``heuristic=True``.
    """
    aff = game.affine
    if aff is not None:
        G = aff[0]
        low = float(np.linalg.eigvalsh(0.5 * (G + G.T)).min())
        lip = float(np.linalg.norm(G, 2))
        lip_ext = float(np.linalg.norm(G, axis=1).max())
        heuristic = False
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        lo, hi = sample_box
        n = game.n_players
        low, lip, lip_ext = np.inf, 0.0, 0.0
        for _ in range(n_samples):
            y1 = rng.uniform(lo, hi, n)
            y2 = rng.uniform(lo, hi, n)
            d = y1 - y2
            dF = game.pseudogradient(y1) - game.pseudogradient(y2)
            dd = d @ d
            if dd == 0:
                continue
            low = min(low, d @ dF / dd)
            lip = max(lip, np.linalg.norm(dF) / np.sqrt(dd))
            z1 = rng.uniform(lo, hi, (n, n))
            z2 = rng.uniform(lo, hi, (n, n))
            dz = np.linalg.norm(z1 - z2)
            dE = game.extended_pseudogradient(z1) - game.extended_pseudogradient(z2)
            lip_ext = max(lip_ext, np.linalg.norm(dE) / dz)
        heuristic = True
    if not low > 0:
        raise NotStronglyMonotone(f"pseudogradient monotonicity constant {low:.3e} <= 0")
    return MonotonicityData(mono_lower=float(low), lip_F=float(lip),
                            lip_extended=float(lip_ext), heuristic=heuristic)
