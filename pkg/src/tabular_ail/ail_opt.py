"""Occupancy matching as a saddle point.

The reward player runs projected online gradient descent on
``f_t(w) = <w, d^{pi_t} - target>`` over the box ``||w||_inf <= 1``. The
policy player best-responds exactly with value iteration. The output
policy is read off the average occupancy of the best responses.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .mdp import ConfigurationError, OccupancyMeasure, Policy, RewardWeights, TabularMdp, optimal_actions


@dataclass(frozen=True)
class OptimizerConfig:
    """``step_size`` is ``"adaptive"`` (scale = diameter D) or ``"constant"`` (scale = eta).

    ``step_scale=None`` picks D = sqrt(2H|S||A|) or eta = sqrt(|S||A| / (8T)).
    """

    iterations: int = 500
    step_size: str = "adaptive"
    step_scale: float | None = None
    rl_tolerance: float = 0.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if self.step_size not in ("adaptive", "constant"):
            raise ConfigurationError(f"unknown step size mode {self.step_size!r}")
        if self.step_scale is not None and self.step_scale <= 0:
            raise ConfigurationError("step_scale must be positive")
        if self.rl_tolerance != 0.0:
            raise ConfigurationError("only exact inner solves (rl_tolerance=0) are supported")


@dataclass(frozen=True, eq=False)
class SaddleTrace:
    """Per-iteration diagnostics of :func:`solve_matching`."""

    f_values: np.ndarray
    grad_norms: np.ndarray
    step_sizes: np.ndarray
    inner_values: np.ndarray
    w_norms: np.ndarray
    matching_distance: np.ndarray
    cumulative_gradient: np.ndarray
    mean_occupancy: np.ndarray
    weights: tuple = ()

    def __len__(self) -> int:
        return len(self.f_values)

    def regret(self) -> float:
        """Regret against the best fixed w in hindsight.

        The objectives are linear, so the minimizer over the box is
        ``-sign(sum_t grad_t)`` and the minimum equals ``-||sum_t grad_t||_1``.
        """
        return float(self.f_values.sum() + np.abs(self.cumulative_gradient).sum())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "f_value", "grad_norm", "step_size", "matching_distance"])
            for t in range(len(self)):
                writer.writerow([t + 1, repr(float(self.f_values[t])), repr(float(self.grad_norms[t])),
                                 repr(float(self.step_sizes[t])), repr(float(self.matching_distance[t]))])


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, (OccupancyMeasure, RewardWeights)) else np.asarray(x, dtype=float)


def objective_f(w, pi_occ, target) -> float:
    """``sum_h sum_{s,a} w (pi_occ - target)``; its gradient in w is ``pi_occ - target``."""
    wv, pv, tv = _values(w), _values(pi_occ), _values(target)
    if not wv.shape == pv.shape == tv.shape:
        raise ConfigurationError("shapes of w, policy occupancy and target differ")
    return float(np.sum(wv * (pv - tv)))


def project_to_unit_ball(w) -> RewardWeights:
    """Euclidean projection onto the sup-norm ball, i.e. a coordinatewise clamp."""
    return RewardWeights(np.clip(_values(w), -1.0, 1.0))


def adaptive_step(grad_history_sq_norms, D: float) -> float:
    """``D / sqrt(sum of squared gradient norms)``; zero if no gradient mass yet."""
    history = np.asarray(grad_history_sq_norms, dtype=float)
    if history.size == 0:
        raise ConfigurationError("gradient history is empty")
    total = float(history.sum())
    return D / math.sqrt(total) if total > 0 else 0.0


def diameter(horizon: int, num_states: int, num_actions: int) -> float:
    return math.sqrt(2 * horizon * num_states * num_actions)


def _deterministic_occupancy(P: np.ndarray, rho: np.ndarray, actions: np.ndarray, num_actions: int) -> np.ndarray:
    H, S = actions.shape
    d = np.zeros((H, S, num_actions))
    idx = np.arange(S)
    mu = rho
    for h in range(H):
        d[h, idx, actions[h]] = mu
        if h < H - 1:
            mu = mu @ P[h, idx, actions[h]]
    return d


def policy_from_occupancy(d: np.ndarray) -> Policy:
    """``pi_h(a|s) = d_h(s,a) / sum_a d_h(s,a)``, uniform where the state has no mass."""
    totals = d.sum(axis=2, keepdims=True)
    uniform = np.full(d.shape, 1.0 / d.shape[2])
    probs = np.divide(d, totals, out=uniform, where=totals > 0)
    return Policy(probs / probs.sum(axis=2, keepdims=True))


def solve_matching(model: TabularMdp, target, cfg: OptimizerConfig | None = None,
                   record_weights: bool = False) -> tuple[Policy, SaddleTrace]:
    """Approximately minimize ``sum_h ||d^{pi, model} - target||_1`` over policies.

    ``record_weights`` keeps every reward iterate ``w^(t)`` (the one the
    policy best-responded to) in ``trace.weights``.
    """
    cfg = cfg or OptimizerConfig()
    tv = _values(target)
    if tv.shape != model.shape:
        raise ConfigurationError(f"target shape {tv.shape} does not match model {model.shape}")
    H, S, A = model.shape
    P, rho = model.transitions, model.initial_dist
    T = cfg.iterations
    if cfg.step_size == "adaptive":
        scale = cfg.step_scale if cfg.step_scale is not None else diameter(H, S, A)
    else:
        scale = cfg.step_scale if cfg.step_scale is not None else math.sqrt(S * A / (8 * T))

    w = np.zeros((H, S, A))
    d_sum = np.zeros((H, S, A))
    grad_sum = np.zeros((H, S, A))
    sq_total = 0.0
    f_values, grad_norms, steps, inner, w_norms, dist = (np.empty(T) for _ in range(6))
    weights = []
    for t in range(T):
        if record_weights:
            weights.append(w.copy())
        actions, value = optimal_actions(P, rho, w)
        d = _deterministic_occupancy(P, rho, actions, A)
        g = d - tv
        gsq = float(np.sum(g * g))
        f_values[t] = float(np.sum(w * g))
        inner[t] = value
        w_norms[t] = float(np.sqrt(np.sum(w * w)))
        grad_norms[t] = math.sqrt(gsq)
        if cfg.step_size == "adaptive":
            sq_total += gsq
            eta = scale / math.sqrt(sq_total) if sq_total > 0 else 0.0
        else:
            eta = scale
        steps[t] = eta
        w = np.clip(w - eta * g, -1.0, 1.0)
        d_sum += d
        grad_sum += g
        dist[t] = float(np.abs(d_sum / (t + 1) - tv).sum())
    d_bar = d_sum / T
    trace = SaddleTrace(f_values, grad_norms, steps, inner, w_norms, dist, grad_sum, d_bar, tuple(weights))
    return policy_from_occupancy(d_bar), trace


def regret_bound(horizon: int, num_states: int, num_actions: int, iterations: int) -> float:
    """``2H sqrt(2|S||A|T)``."""
    return 2 * horizon * math.sqrt(2 * num_states * num_actions * iterations)


def optimal_matching_distance(model: TabularMdp, target) -> float:
    """Exact ``min_pi sum_h ||d^{pi, model} - target||_1`` by linear programming.

    Optimizes over the occupancy polytope (flow constraints) with slack
    variables for the absolute values.
    """
    tv = _values(target)
    H, S, A = model.shape
    n = H * S * A
    P, rho = model.transitions, model.initial_dist

    def idx(h):
        return h * S * A

    rows, cols, vals = [], [], []
    b_eq = np.zeros(H * S)
    for s in range(S):
        for a in range(A):
            rows.append(s)
            cols.append(idx(0) + s * A + a)
            vals.append(1.0)
    b_eq[:S] = rho
    for h in range(1, H):
        for s2 in range(S):
            r = h * S + s2
            for a in range(A):
                rows.append(r)
                cols.append(idx(h) + s2 * A + a)
                vals.append(1.0)
            inflow = P[h - 1, :, :, s2]
            for s in range(S):
                for a in range(A):
                    if inflow[s, a] != 0.0:
                        rows.append(r)
                        cols.append(idx(h - 1) + s * A + a)
                        vals.append(-inflow[s, a])
    A_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(H * S, 2 * n))
    eye = sparse.identity(n, format="csr")
    A_ub = sparse.vstack([sparse.hstack([eye, -eye]), sparse.hstack([-eye, -eye])], format="csr")
    flat = tv.reshape(-1)
    b_ub = np.concatenate([flat, -flat])
    c = np.concatenate([np.zeros(n), np.ones(n)])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * (2 * n), method="highs")
    if res.status != 0:
        raise RuntimeError(f"matching LP failed: {res.message}")
    return float(res.fun)
