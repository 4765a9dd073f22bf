"""Discrete optimal transport with squared Euclidean cost.

Entropic transport is solved with Sinkhorn scaling, by default on
log-domain potentials so that small regularizations do not underflow the
Gibbs kernel. A small linear-programming solver provides the exact,
unregularized coupling for test instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "DiscreteMeasure",
    "SolverConfig",
    "TransportPlan",
    "SinkhornResult",
    "cost_matrix",
    "sinkhorn",
    "transport_cost",
    "w2_distance",
    "exact_ot_small",
    "barycentric_map",
]

WEIGHT_SUM_TOL = 1e-9
STALL_RATIO = 0.9
BLOCK_COUPLING = 1e-4
EXACT_MAX_ENTRIES = 64


def _frozen(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=np.float64, copy=True)
    x.setflags(write=False)
    return x


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise ValueError(f"support must be a (n, d) array, got shape {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure on finitely many points of R^d.

    ``support`` is an ``(n, d)`` array (a flat sequence is read as ``n``
    points on the line) and ``weights`` the matching probabilities. Both
    arrays are copied and made read-only.
    """

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.support)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if pts.shape[0] < 1:
            raise ValueError("a measure needs at least one support point")
        if w.shape[0] != pts.shape[0]:
            raise ValueError(
                f"{pts.shape[0]} support points but {w.shape[0]} weights"
            )
        if not np.all(np.isfinite(pts)):
            raise ValueError("support points must be finite")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1")
        object.__setattr__(self, "support", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = _as_points(points)
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @classmethod
    def from_masses(cls, points, masses) -> "DiscreteMeasure":
        """Build a measure from unnormalized nonnegative masses."""
        m = np.asarray(masses, dtype=np.float64)
        total = m.sum()
        if not total > 0:
            raise ValueError("total mass must be positive")
        return cls(points, m / total)

    @property
    def size(self) -> int:
        return self.support.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.support

    def __repr__(self) -> str:
        return f"DiscreteMeasure(size={self.size}, dim={self.dim})"


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the Sinkhorn solvers.

    With ``relative=True`` the regularization used is ``epsilon * max(C)``,
    otherwise ``epsilon`` is taken in squared-cost units as is.
    Convergence is the L-infinity marginal violation, tested every
    ``check_every`` iterations. With ``balance_blocks`` the log-domain
    solver also re-balances weakly coupled blocks of the plan whenever
    the marginal error stalls (see :func:`sinkhorn`).
    """

    epsilon: float = 0.01
    relative: bool = True
    max_iterations: int = 10_000
    tolerance: float = 1e-6
    log_domain: bool = True
    check_every: int = 10
    balance_blocks: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.check_every < 1:
            raise ValueError("check_every must be at least 1")

    def regularization(self, cost: np.ndarray) -> float:
        if not self.relative:
            return float(self.epsilon)
        scale = float(np.max(cost)) if cost.size else 0.0
        # all points coincide: any regularization yields the product coupling
        return float(self.epsilon) * (scale if scale > 0 else 1.0)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling matrix together with the marginals it was solved for.

    ``epsilon`` is the absolute regularization that produced the plan,
    0 for an exact linear-programming solution.
    """

    matrix: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    epsilon: float = 0.0
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        object.__setattr__(self, "row_marginal", _frozen(self.row_marginal))
        object.__setattr__(self, "col_marginal", _frozen(self.col_marginal))
        n, m = self.matrix.shape
        if self.row_marginal.shape != (n,) or self.col_marginal.shape != (m,):
            raise ValueError("marginal lengths do not match the plan shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def marginal_error(self) -> float:
        rows = np.abs(self.matrix.sum(axis=1) - self.row_marginal).max()
        cols = np.abs(self.matrix.sum(axis=0) - self.col_marginal).max()
        return float(max(rows, cols))


class SinkhornResult(NamedTuple):
    plan: TransportPlan
    potentials: tuple[np.ndarray, np.ndarray]
    iterations: int
    converged: bool


def cost_matrix(source: DiscreteMeasure, target: DiscreteMeasure) -> np.ndarray:
    """Squared Euclidean distances between the two supports, shape (n, m)."""
    x = source.support if isinstance(source, DiscreteMeasure) else _as_points(source)
    y = target.support if isinstance(target, DiscreteMeasure) else _as_points(target)
    if x.shape[1] != y.shape[1]:
        raise ValueError(
            f"dimension mismatch: source is {x.shape[1]}-d, target is {y.shape[1]}-d"
        )
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _check_marginal(w, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"{name} sums to {w.sum()!r}, expected 1")
    return w


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    top = x.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    out = np.log(np.exp(x - top).sum(axis=axis, keepdims=True)) + top
    return np.squeeze(out, axis=axis)


def sinkhorn(a, b, cost, config: SolverConfig | None = None) -> SinkhornResult:
    """Entropic optimal transport between two weight vectors.

    Parameters
    ----------
    a, b : array-like, shapes (n,) and (m,)
        Source and target weights, each summing to one. Zero entries are
        removed before solving and reappear as zero rows / columns.
    cost : array-like, shape (n, m)
        Ground cost matrix.
    config : SolverConfig, optional

    Returns
    -------
    SinkhornResult
        ``plan`` equals ``exp((f_i + g_j - C_ij) / eps)`` for the returned
        potentials ``(f, g)``; potentials of removed atoms are ``-inf``.
        ``converged`` is False when ``max_iterations`` ran out first.

    Raises
    ------
    FloatingPointError
        If a scaling vector stops being finite; the message names the
        iteration.
    """
    config = config or SolverConfig()
    a = _check_marginal(a, "a")
    b = _check_marginal(b, "b")
    C = np.asarray(cost, dtype=np.float64)
    if C.shape != (a.size, b.size):
        raise ValueError(f"cost has shape {C.shape}, expected {(a.size, b.size)}")
    if np.any(C < 0) or not np.all(np.isfinite(C)):
        raise ValueError("cost entries must be finite and nonnegative")

    rows = a > 0
    cols = b > 0
    ar, br = a[rows], b[cols]
    Cr = C[np.ix_(rows, cols)]
    eps = config.regularization(Cr)

    if config.log_domain:
        P, alpha, beta, it, converged = _sinkhorn_log(ar, br, Cr / eps, config)
        fr, gr = eps * alpha, eps * beta
    else:
        P, u, v, it, converged = _sinkhorn_scaling(ar, br, np.exp(-Cr / eps), config)
        with np.errstate(divide="ignore"):
            fr, gr = eps * np.log(u), eps * np.log(v)

    full = np.zeros_like(C)
    full[np.ix_(rows, cols)] = P
    f = np.full(a.size, -np.inf)
    g = np.full(b.size, -np.inf)
    f[rows] = fr
    g[cols] = gr
    plan = TransportPlan(full, a, b, epsilon=eps, converged=converged)
    return SinkhornResult(plan, (f, g), it, converged)


def _sinkhorn_log(a, b, Ce, config):
    loga, logb = np.log(a), np.log(b)
    alpha = np.zeros(a.size)
    beta = np.zeros(b.size)
    P = None
    converged = False
    it = 0
    last = np.inf
    for it in range(1, config.max_iterations + 1):
        alpha = loga - _logsumexp(beta[None, :] - Ce, axis=1)
        beta = logb - _logsumexp(alpha[:, None] - Ce, axis=0)
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise FloatingPointError(f"non-finite Sinkhorn potentials at iteration {it}")
        if it % config.check_every == 0 or it == config.max_iterations:
            P = np.exp(alpha[:, None] + beta[None, :] - Ce)
            # columns are exact right after the beta update
            err = np.abs(P.sum(axis=1) - a).max()
            if err <= config.tolerance:
                converged = True
                break
            if config.balance_blocks and err > STALL_RATIO * last:
                alpha, beta = _balance_blocks(a, b, alpha, beta, Ce)
            last = err
    return P, alpha, beta, it, converged


def _balance_blocks(a, b, alpha, beta, Ce):
    """Exact dual ascent along the gauge direction of each weakly coupled block.

    When the plan nearly splits into blocks, Sinkhorn corrects the offset
    between their potentials only through the tiny cross-block mass and
    stalls. Shifting a block's row potentials by +t and column potentials
    by -t leaves its internal entries unchanged, and the dual along that
    line, ``d*t - out*exp(t) - in*exp(-t)``, has a closed-form maximizer.
    """
    n, m = a.size, b.size
    logP = alpha[:, None] + beta[None, :] - Ce
    strong = logP > np.log(BLOCK_COUPLING) + np.minimum(np.log(a)[:, None], np.log(b)[None, :])
    i, j = np.nonzero(strong)
    graph = csr_matrix((np.ones(i.size), (i, n + j)), shape=(n + m, n + m))
    count, labels = connected_components(graph, directed=False)
    if count == 1:
        return alpha, beta
    alpha, beta = alpha.copy(), beta.copy()
    # the last block keeps its offset; shifting every block is the global gauge
    for k in range(count - 1):
        rows, cols = labels[:n] == k, labels[n:] == k
        if not (rows.any() and cols.any()):
            continue
        logP = alpha[:, None] + beta[None, :] - Ce
        log_out = _logsumexp(logP[rows][:, ~cols].ravel(), axis=0) if (~cols).any() else -np.inf
        log_in = _logsumexp(logP[~rows][:, cols].ravel(), axis=0) if (~rows).any() else -np.inf
        if not (np.isfinite(log_out) and np.isfinite(log_in)):
            continue
        d = a[rows].sum() - b[cols].sum()
        root = abs(d) + np.sqrt(d * d + 4.0 * np.exp(log_out + log_in))
        if d > 0:
            t = np.log(root) - np.log(2.0) - log_out
        elif d < 0:
            t = np.log(2.0) + log_in - np.log(root)
        else:
            t = 0.5 * (log_in - log_out)
        alpha[rows] += t
        beta[cols] -= t
    return alpha, beta


def _sinkhorn_scaling(a, b, K, config):
    u = np.ones(a.size)
    v = np.ones(b.size)
    P = None
    converged = False
    it = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for it in range(1, config.max_iterations + 1):
            u = a / (K @ v)
            v = b / (K.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise FloatingPointError(
                    f"non-finite Sinkhorn scalings at iteration {it}; "
                    "the kernel underflowed, use log_domain=True"
                )
            if it % config.check_every == 0 or it == config.max_iterations:
                P = u[:, None] * K * v[None, :]
                if np.abs(P.sum(axis=1) - a).max() <= config.tolerance:
                    converged = True
                    break
    return P, u, v, it, converged


def transport_cost(plan, cost) -> float:
    """Total cost <plan, cost> of a coupling."""
    P = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    C = np.asarray(cost, dtype=np.float64)
    if P.shape != C.shape:
        raise ValueError(f"plan shape {P.shape} does not match cost shape {C.shape}")
    return float(np.sum(P * C))


def w2_distance(
    source: DiscreteMeasure,
    target: DiscreteMeasure,
    config: SolverConfig | None = None,
) -> float:
    """Wasserstein-2 distance estimated from the entropic plan.

    The entropic plan is suboptimal for the unregularized problem, so the
    estimate is biased upward by an amount that shrinks with epsilon.
    """
    C = cost_matrix(source, target)
    res = sinkhorn(source.weights, target.weights, C, config)
    return float(np.sqrt(max(transport_cost(res.plan, C), 0.0)))


def exact_ot_small(a, b, cost) -> TransportPlan:
    """Exact optimal coupling of a small instance by linear programming."""
    a = _check_marginal(a, "a")
    b = _check_marginal(b, "b")
    C = np.asarray(cost, dtype=np.float64)
    n, m = a.size, b.size
    if C.shape != (n, m):
        raise ValueError(f"cost has shape {C.shape}, expected {(n, m)}")
    if n * m > EXACT_MAX_ENTRIES:
        raise ValueError(
            f"instance too large for the exact solver: {n}x{m} > {EXACT_MAX_ENTRIES} entries"
        )
    A_eq = np.vstack([
        np.kron(np.eye(n), np.ones((1, m))),
        np.kron(np.ones((1, n)), np.eye(m)),
    ])
    b_eq = np.concatenate([a, b])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"linear program failed: {res.message}")
    P = np.clip(res.x.reshape(n, m), 0.0, None)
    return TransportPlan(P, a, b, epsilon=0.0)


def barycentric_map(plan: TransportPlan, target_support) -> np.ndarray:
    """Send every source atom to the plan-weighted mean of its targets.

    Rows are normalized by their actual sums, so each image point is a
    convex combination of target points.
    """
    P = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    Y = _as_points(target_support)
    if P.shape[1] != Y.shape[0]:
        raise ValueError(
            f"plan has {P.shape[1]} columns but {Y.shape[0]} target points were given"
        )
    if isinstance(plan, TransportPlan) and np.any(plan.row_marginal <= 0):
        raise ValueError("zero row marginal: drop empty source atoms before mapping")
    mass = P.sum(axis=1)
    if np.any(mass <= 0):
        raise ValueError("zero row marginal: drop empty source atoms before mapping")
    return (P / mass[:, None]) @ Y
