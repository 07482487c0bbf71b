"""Virtual-player dynamics: consensus-based gradient play over estimate stacks.

The estimate stack ``z`` is an ``N x N`` array; row ``i`` is player ``i``'s
view of every player's strategy and ``z[i, i]`` is its own virtual strategy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DisconnectedGraph
from .game import Game, MonotonicityData
from .graph import Digraph, GraphCertificate, laplacian


class GradientMode(str, enum.Enum):
    FULL_INFORMATION = "full"
    REAL_TIME = "realtime"


@dataclass(frozen=True)
class GeneratorConfig:
    alpha: float
    mode: GradientMode = GradientMode.FULL_INFORMATION

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "mode", GradientMode(self.mode))


def alpha_min(cert: GraphCertificate, consts: MonotonicityData) -> float:
    """Consensus gain above which the generator is exponentially stable."""
    if not cert.lambda2 > 0:
        raise DisconnectedGraph(f"lambda2 = {cert.lambda2:.3e}; graph is not strongly connected")
    l = consts.l_max
    return (l * l / consts.mono_lower + l) / cert.lambda2


def _consensus_term(g: Digraph, z):
    # row i: sum_j a_ij (z^i - z^j) = (L z)_i
    return laplacian(g) @ z


def rhs_full_info(g: Digraph, game: Game, z, alpha) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    dz = -alpha * _consensus_term(g, z)
    dz[np.diag_indices_from(dz)] -= game.extended_pseudogradient(z)
    return dz


def real_time_gradients(game: Game, z, y) -> np.ndarray:
    """Each player's gradient at its real output combined with its estimates of the others."""
    z = np.asarray(z, dtype=float)
    mixed = z.copy()
    idx = np.arange(z.shape[0])
    mixed[idx, idx] = np.asarray(y, dtype=float)
    return game.extended_pseudogradient(mixed)


def rhs_real_time(g: Digraph, game: Game, z, y, alpha) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    dz = -alpha * _consensus_term(g, z)
    dz[np.diag_indices_from(dz)] -= real_time_gradients(game, z, y)
    return dz


def delta1(game: Game, z, y) -> np.ndarray:
    """Gradient mismatch between the estimate-based and the real-time gradient."""
    return game.extended_pseudogradient(z) - real_time_gradients(game, z, y)


def generator_matrices(g: Digraph, game: Game, alpha):
    """Affine form ``d vec(z)/dt = M vec(z) + c`` of the full-information generator.

    The stack is vectorised row-major (``z.reshape(-1)``), so the consensus
    part is ``-alpha * kron(L, I)``.
    """
    aff = game.affine
    if aff is None:
        raise TypeError("generator_matrices needs an affine game")
    G, gvec = aff
    n = game.n_players
    M = -alpha * np.kron(laplacian(g), np.eye(n))
    c = np.zeros(n * n)
    for i in range(n):
        M[i * n + i, i * n:(i + 1) * n] -= G[i]
        c[i * n + i] = -gvec[i]
    return M, c


def realtime_matrices(g: Digraph, game: Game, alpha):
    """``(M, c, B)`` with ``d vec/dt = M vec + c + B y`` in real-time mode."""
    M, c = generator_matrices(g, game, alpha)
    G = game.affine[0]
    n = game.n_players
    B = np.zeros((n * n, n))
    for i in range(n):
        row = i * n + i
        M[row, row] += G[i, i]
        B[row, i] = -G[i, i]
    return M, c, B
