"""Agent plants: integrator chains with a linearly parameterised unknown term.

Each agent obeys ``x_j' = x_{j+1}`` for ``j < n`` and
``x_n' = theta^T p(x, t) + u`` with output ``y = x_1``.  The regressor
``p`` is assembled from named terms so it can be evaluated for many agents
at once; see :data:`TERMS`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import UnsupportedExosystem

# Each term maps (X, t, w) -> column, X being (m, n) agent states and w the
# per-agent frequency vector.
TERMS = {
    "one": lambda X, t, w: np.ones(X.shape[0]),
    "neg_x1": lambda X, t, w: -X[:, 0],
    "x1": lambda X, t, w: X[:, 0],
    "x2": lambda X, t, w: X[:, 1],
    "vdp": lambda X, t, w: (1.0 - X[:, 0] ** 2) * X[:, 1],
    "duffing": lambda X, t, w: -X[:, 0] ** 3,
    "sin": lambda X, t, w: np.sin(w * t),
    "cos": lambda X, t, w: np.cos(w * t),
}
_TERM_MIN_ORDER = {"x2": 2, "vdp": 2}

BASIS_PRESETS = {
    "none": (),
    "inventory": ("neg_x1", "one"),
    "vanderpol": ("neg_x1", "vdp"),
    "vanderpol-disturbed": ("neg_x1", "vdp", "sin", "cos"),
    "disturbance": ("one", "sin", "cos"),
    "sinusoid": ("sin", "cos"),
}


def resolve_basis(spec) -> tuple:
    if isinstance(spec, str):
        if spec not in BASIS_PRESETS:
            raise KeyError(f"unknown basis preset {spec!r}; choose from {sorted(BASIS_PRESETS)}")
        return BASIS_PRESETS[spec]
    terms = tuple(spec)
    for term in terms:
        if term not in TERMS:
            raise KeyError(f"unknown basis term {term!r}; choose from {sorted(TERMS)}")
    return terms


def eval_terms(terms, X, t, freq) -> np.ndarray:
    """Regressor rows for a batch of agents sharing the same term list."""
    X = np.atleast_2d(X)
    if not terms:
        return np.zeros((X.shape[0], 0))
    return np.stack([TERMS[name](X, t, freq) for name in terms], axis=1)


@dataclass(frozen=True, eq=False)
class AgentModel:
    order: int
    terms: tuple = ()
    theta_true: np.ndarray = field(default_factory=lambda: np.zeros(0))
    frequency: float = 1.0

    def __post_init__(self):
        if int(self.order) < 1:
            raise ValueError("order must be >= 1")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "terms", resolve_basis(self.terms))
        theta = np.array(self.theta_true, dtype=float).reshape(-1)
        if theta.size != len(self.terms):
            raise ValueError(f"theta_true has {theta.size} entries for {len(self.terms)} basis terms")
        for term in self.terms:
            if _TERM_MIN_ORDER.get(term, 1) > self.order:
                raise ValueError(f"basis term {term!r} needs order >= {_TERM_MIN_ORDER[term]}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta_true", theta)

    @property
    def n_params(self) -> int:
        return len(self.terms)

    def basis(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        p = eval_terms(self.terms, x, t, np.array([self.frequency]))[0]
        if not np.all(np.isfinite(p)):
            raise FloatingPointError(f"basis returned non-finite values at t={t}")
        return p


def plant_rhs(model: AgentModel, x, u, t) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    dx = np.empty(model.order)
    dx[:-1] = x[1:]
    drift = model.theta_true @ model.basis(x, t) if model.n_params else 0.0
    dx[-1] = drift + u
    return dx


# -- exosystem-generated disturbances -----------------------------------------

@dataclass(frozen=True, eq=False)
class Exosystem:
    """Disturbance ``d(t) = D v(t)`` with ``v' = S v``, ``v(0) = v0``."""

    D: np.ndarray
    S: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.array(self.D, dtype=float))
        S = np.atleast_2d(np.array(self.S, dtype=float))
        v0 = np.array(self.v0, dtype=float).reshape(-1)
        m = v0.size
        if S.shape != (m, m) or D.shape[1] != m:
            raise ValueError(f"inconsistent exosystem shapes D{D.shape} S{S.shape} v0({m})")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "v0", v0)

    def output(self, t) -> np.ndarray:
        return self.D @ expm(self.S * t) @ self.v0


@dataclass(frozen=True)
class ExoBasis:
    terms: tuple
    frequency: float
    coefficients: np.ndarray  # (len(terms), n_outputs)


def exo_as_basis(exo: Exosystem, frequency=None) -> ExoBasis:
    """Rewrite ``D exp(St) v0`` as ``theta^T (1, sin(wt), cos(wt))``.

    ``S`` must be a (possibly empty) zero block followed by one rotation block
    ``[[0, w], [-w, 0]]``, or all zeros.  ``frequency`` optionally pins ``w``.
    """
    S, D, v0 = exo.S, exo.D, exo.v0
    m = v0.size
    tol = 1e-12
    if np.all(np.abs(S) <= tol):
        coeffs = (D @ v0)[None, :]
        return ExoBasis(("one",), 0.0 if frequency is None else float(frequency), coeffs)
    if m < 2:
        raise UnsupportedExosystem("non-zero S of size 1 is not a rotation")
    k = m - 2
    rot = S[k:, k:]
    w = rot[0, 1]
    rest = S.copy()
    rest[k:, k:] = 0.0
    if not (abs(rot[0, 0]) <= tol and abs(rot[1, 1]) <= tol and abs(rot[1, 0] + w) <= tol):
        raise UnsupportedExosystem("trailing 2x2 block of S is not [[0, w], [-w, 0]]")
    if np.any(np.abs(rest) > tol) or w == 0:
        raise UnsupportedExosystem("S must be a zero block followed by a rotation block")
    if frequency is not None and abs(float(frequency) - w) > 1e-12:
        raise UnsupportedExosystem(f"rotation rate {w} differs from requested frequency {frequency}")
    # v_a(t) = v_a cos + v_b sin,  v_b(t) = -v_a sin + v_b cos
    va, vb = v0[k], v0[k + 1]
    Da, Db = D[:, k], D[:, k + 1]
    sin_coef = Da * vb - Db * va
    cos_coef = Da * va + Db * vb
    rows, terms = [], []
    if k > 0:
        rows.append(D[:, :k] @ v0[:k])
        terms.append("one")
    rows += [sin_coef, cos_coef]
    terms += ["sin", "cos"]
    return ExoBasis(tuple(terms), float(w), np.array(rows))


def sensor_exosystem(rate, mu, v0) -> Exosystem:
    """Constant-plus-rotation exosystem with ``D`` built from six uncertain ``mu``."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (6,):
        raise ValueError("need six mu values")
    D = np.array([[1 + mu[0], 1 + mu[1], mu[2]],
                  [1 + mu[3], mu[4], 1 + mu[5]]])
    S = np.zeros((3, 3))
    S[1, 2], S[2, 1] = rate, -rate
    return Exosystem(D, S, v0)


def rotation_exosystem(rate, mu, v0) -> Exosystem:
    """Pure rotation exosystem with ``D = [1 + mu_1, mu_2]``."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (2,):
        raise ValueError("need two mu values")
    D = np.array([[1 + mu[0], mu[1]]])
    S = np.array([[0.0, rate], [-rate, 0.0]])
    return Exosystem(D, S, v0)
