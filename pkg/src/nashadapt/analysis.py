"""Post-run diagnostics: decay-rate fits, persistence of excitation and
parameter-convergence verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHorizon
from .sim import Trajectory, find_convergence_time

PE_THRESHOLD = 1e-3
CONVERGED_TOL = 5e-2


@dataclass(frozen=True)
class PEReport:
    agent: int
    window_T0: float
    t0: float
    window_starts: np.ndarray
    min_eig_over_windows: np.ndarray
    m_estimate: float
    component_levels: np.ndarray      # inf over windows of (1/T0) int p_j^2
    component_information: np.ndarray  # inf over windows of the Schur complement for p_j
    excited_components: frozenset      # scalar PE per component
    identifiable_components: frozenset  # excited and not explained by the other components


@dataclass(frozen=True)
class ComponentVerdict:
    index: int
    converged: bool
    final_error: float
    drift: float
    excited: bool | None = None
    identifiable: bool | None = None

    @property
    def status(self) -> str:
        return "Converged" if self.converged else "NotIdentified"


def default_window(traj: Trajectory, agent: int) -> float:
    """One period of the agent's slowest sinusoid, else 1 s."""
    model = traj.scenario.agents[agent]
    if any(term in ("sin", "cos") for term in model.terms) and model.frequency > 0:
        return 2 * math.pi / model.frequency
    return 1.0


def windowed_grams(times, P, T0, t0, stride=None):
    """Trapezoidal ``(1/T0) int_t^{t+T0} p p^T`` over sliding windows.

    ``P`` holds regressor samples row-wise on the grid ``times``.  Window
    ends falling between samples are linearly interpolated, so every
    integral spans exactly ``T0``.  Returns ``(starts, grams)``.
    """
    times = np.asarray(times, dtype=float)
    P = np.asarray(P, dtype=float)
    stride = T0 / 4 if stride is None else stride
    eps = 1e-9 * max(1.0, T0)

    def at(t):
        return np.array([np.interp(t, times, col) for col in P.T])

    starts, grams = [], []
    start = t0
    while start + T0 <= times[-1] + eps and start >= times[0] - eps:
        end = min(start + T0, times[-1])
        inner = (times > start + eps) & (times < end - eps)
        ts = np.concatenate([[start], times[inner], [end]])
        rows = np.vstack([at(start), P[inner], at(end)])
        outer = np.einsum("ki,kj->kij", rows, rows)
        starts.append(start)
        grams.append(np.trapezoid(outer, ts, axis=0) / T0)
        start += stride
    return np.array(starts), np.array(grams)


def _schur_information(gram, threshold=PE_THRESHOLD):
    """Per component: ``Gamma_jj - Gamma_j,-j Gamma_-j,-j^+ Gamma_-j,j``.

    Only components excited in this window (diagonal >= ``threshold``) are
    conditioned on: a vanishing regressor that happens to be collinear with
    the others must not hide them.
    """
    n = gram.shape[0]
    info = np.empty(n)
    live = gram.diagonal() >= threshold
    for j in range(n):
        rest = [k for k in range(n) if k != j and live[k]]
        if not rest:
            info[j] = gram[j, j]
            continue
        cross = gram[j, rest]
        sub = gram[np.ix_(rest, rest)]
        info[j] = gram[j, j] - cross @ np.linalg.pinv(sub, rcond=1e-10, hermitian=True) @ cross
    return info


def pe_check(traj: Trajectory, agent: int, T0=None, t0=None, threshold=PE_THRESHOLD) -> PEReport:
    T0 = default_window(traj, agent) if T0 is None else float(T0)
    t_end = traj.times[-1]
    t0 = t_end / 2 if t0 is None else float(t0)
    if t_end - t0 < 2 * T0 - 1e-9:
        raise InsufficientHorizon(f"need t_end - t0 >= 2 T0 = {2 * T0:.4g}, have {t_end - t0:.4g}")
    P = traj.regressor_series(agent)
    starts, grams = windowed_grams(traj.times, P, T0, t0)
    n = P.shape[1]
    if n == 0:
        empty = np.zeros(0)
        return PEReport(agent, T0, t0, starts, np.zeros(len(starts)), math.inf, empty, empty,
                        frozenset(), frozenset())
    min_eigs = np.array([np.linalg.eigvalsh(gm)[0] for gm in grams])
    levels = np.array([gm.diagonal() for gm in grams]).min(axis=0)
    info = np.array([_schur_information(gm, threshold) for gm in grams]).min(axis=0)
    excited = frozenset(int(j) for j in np.flatnonzero(levels >= threshold))
    identifiable = frozenset(int(j) for j in np.flatnonzero(info >= threshold))
    return PEReport(agent=agent, window_T0=T0, t0=t0, window_starts=starts,
                    min_eig_over_windows=min_eigs, m_estimate=float(min_eigs.min()),
                    component_levels=levels, component_information=info,
                    excited_components=excited, identifiable_components=identifiable)


def classify_parameter_convergence(traj: Trajectory, agent: int, tol=CONVERGED_TOL, pe=None):
    """Per-component verdict for agent ``agent``'s parameter estimate.

    Converged: final error within ``tol`` and the spread over the last tenth
    of the run below ``tol / 10``.  ``pe`` (a :class:`PEReport`) adds the
    excitation flags to each verdict.
    """
    theta = traj.scenario.agents[agent].theta_true
    est = traj.theta_hat_agent(agent)
    if theta.size == 0:
        return []
    tail = traj.times >= traj.times[-1] - 0.1 * (traj.times[-1] - traj.times[0])
    verdicts = []
    for j in range(theta.size):
        err = float(abs(est[-1, j] - theta[j]))
        drift = float(np.ptp(est[tail, j]))
        verdicts.append(ComponentVerdict(
            index=j, converged=err <= tol and drift < tol / 10, final_error=err, drift=drift,
            excited=None if pe is None else j in pe.excited_components,
            identifiable=None if pe is None else j in pe.identifiable_components))
    return verdicts


def fit_decay_rate(t, values, t_skip=0.0):
    """Least-squares slope of ``log(values)`` against ``t`` for ``t >= t_skip``.

    Returns ``(rate, r_squared)``.  Non-positive values after ``t_skip`` give
    ``(-inf, nan)``: the series reached zero, i.e. converged below resolution.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    mask = t >= t_skip
    t, v = t[mask], v[mask]
    if t.size < 2:
        raise ValueError("need at least two samples after t_skip")
    if np.any(v <= 0):
        return -math.inf, math.nan
    logv = np.log(v)
    slope, intercept = np.polyfit(t, logv, 1)
    resid = logv - (slope * t + intercept)
    ss_tot = np.sum((logv - logv.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    if ss_tot == 0:
        slope = 0.0
    return float(slope), float(r2)


def run_report(traj: Trajectory, tol=None) -> dict:
    """Flat key-value summary of a run."""
    s = traj.scenario
    tol = s.meta.get("tol", 1e-2) if tol is None else tol
    conv = find_convergence_time(traj, tol)
    rep = {
        "scenario": s.name,
        "fingerprint": s.fingerprint(),
        "alpha": s.generator.alpha,
        "alpha_min": s.meta.get("alpha_min", float("nan")),
        "gradient_mode": s.generator.mode.value,
        "t_end": float(traj.times[-1]),
        "tol": tol,
        "convergence_time": "NotConverged" if conv is None else conv,
        "final_max_nash_error": float(traj.max_nash_error[-1]),
        "final_consensus_error": float(traj.consensus_error[-1]),
    }
    for i, ys in enumerate(traj.y_star):
        rep[f"y_star_{i + 1}"] = float(ys)
    for i, model in enumerate(s.agents):
        if not model.n_params:
            continue
        try:
            pe = pe_check(traj, i)
        except InsufficientHorizon:
            pe = None
        if pe is not None:
            rep[f"pe_{i + 1}_m"] = pe.m_estimate
            rep[f"pe_{i + 1}_excited"] = ",".join(str(j + 1) for j in sorted(pe.excited_components))
            rep[f"pe_{i + 1}_identifiable"] = ",".join(
                str(j + 1) for j in sorted(pe.identifiable_components))
        for v in classify_parameter_convergence(traj, i, pe=pe):
            rep[f"theta_{i + 1}_{v.index + 1}"] = f"{v.status} err={v.final_error:.3e} drift={v.drift:.3e}"
    return rep


def format_report(rep: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in rep.items())
