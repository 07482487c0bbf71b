"""Certainty-equivalence adaptive tracking controller.

Sign convention: gains ``k = (k_1, ..., k_n)`` enter the companion matrix
bottom row as-is, so the characteristic polynomial is
``s^n - k_n s^(n-1) - ... - k_2 s - k_1``.  Stabilising gains are therefore
*negative*; ``k = (-4, -4)`` places both poles at ``-2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotHurwitz

HURWITZ_MARGIN = 1e-9


def companion(k) -> np.ndarray:
    k = np.asarray(k, dtype=float).reshape(-1)
    n = k.size
    if n < 1:
        raise ValueError("need at least one gain")
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = k
    return A


def hurwitz_check(k) -> bool:
    return bool(np.all(np.linalg.eigvals(companion(k)).real < -HURWITZ_MARGIN))


def lyapunov_solve(A) -> np.ndarray:
    """Solve ``A^T P + P A = -2 I`` for symmetric ``P`` over its upper triangle.

    The n(n+1)/2 free entries of ``P`` are the unknowns; each equation is one
    upper-triangular entry of the (symmetric) left-hand side.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if np.any(np.linalg.eigvals(A).real >= 0):
        raise NotHurwitz("Lyapunov equation needs a Hurwitz matrix")
    pairs = [(a, b) for a in range(n) for b in range(a, n)]
    index = {p: k for k, p in enumerate(pairs)}

    def unknown(a, b):
        return index[(a, b) if a <= b else (b, a)]

    m = len(pairs)
    lhs = np.zeros((m, m))
    rhs = np.zeros(m)
    for row, (a, b) in enumerate(pairs):
        # (A^T P)_ab + (P A)_ab = sum_c A_ca P_cb + P_ac A_cb
        for c in range(n):
            lhs[row, unknown(c, b)] += A[c, a]
            lhs[row, unknown(a, c)] += A[c, b]
        rhs[row] = -2.0 if a == b else 0.0
    sol = np.linalg.solve(lhs, rhs)
    P = np.empty((n, n))
    for (a, b), val in zip(pairs, sol):
        P[a, b] = P[b, a] = val
    return P


@dataclass(frozen=True, eq=False)
class ControllerGains:
    k: np.ndarray
    epsilon: float = 1.0
    Lambda: np.ndarray | None = None
    P: np.ndarray | None = None

    def __post_init__(self):
        k = np.array(self.k, dtype=float).reshape(-1)
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not hurwitz_check(k):
            raise NotHurwitz(f"non-Hurwitz gains k={k.tolist()}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "P", lyapunov_solve(companion(k)))
        if self.Lambda is not None:
            lam = np.atleast_2d(np.array(self.Lambda, dtype=float))
            if lam.shape[0] != lam.shape[1] or not np.allclose(lam, lam.T):
                raise ValueError("Lambda must be a symmetric matrix")
            if lam.size and np.linalg.eigvalsh(lam).min() <= 0:
                raise ValueError("Lambda must be positive definite")
            object.__setattr__(self, "Lambda", lam)

    @property
    def order(self) -> int:
        return self.k.size

    @classmethod
    def build(cls, k, epsilon=1.0, lambda_gain=1.0, n_params=0):
        """Gains with ``Lambda = lambda_gain * I`` (scalar) or a full matrix."""
        lam = np.asarray(lambda_gain, dtype=float)
        if lam.ndim == 0:
            lam = float(lam) * np.eye(n_params)
        return cls(k=k, epsilon=epsilon, Lambda=lam)

    def adaptation_gain(self, n_params) -> np.ndarray:
        if self.Lambda is None:
            return np.eye(n_params)
        if self.Lambda.shape != (n_params, n_params):
            raise ValueError(f"Lambda is {self.Lambda.shape}, agent has {n_params} parameters")
        return self.Lambda

    def lyapunov_residual(self) -> float:
        A = companion(self.k)
        return float(np.abs(A.T @ self.P + self.P @ A + 2 * np.eye(self.order)).max())


def scale_state(x, z_i, epsilon) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xh = x * epsilon ** np.arange(x.size)
    xh[0] = x[0] - z_i
    return xh


def control_law(gains: ControllerGains, model, x, theta_hat, z_i, t, adaptive=True) -> float:
    """``u = -theta_hat^T p + eps^-n [k_1 (x_1 - z_i) + sum_j eps^(j-1) k_j x_j]``.

    ``adaptive=False`` drops the parameter-estimate feedforward.
    """
    n = gains.order
    feedback = gains.k @ scale_state(x, z_i, gains.epsilon) / gains.epsilon**n
    if adaptive and model.n_params:
        return float(feedback - np.asarray(theta_hat) @ model.basis(x, t))
    return float(feedback)


def adaptation_rhs(gains: ControllerGains, model, x, z_i, t) -> np.ndarray:
    """``theta_hat' = Lambda p(x, t) (b_2^T P x_hat)``."""
    if not model.n_params:
        return np.zeros(0)
    xh = scale_state(x, z_i, gains.epsilon)
    s = gains.P[-1] @ xh
    return gains.adaptation_gain(model.n_params) @ model.basis(x, t) * s
