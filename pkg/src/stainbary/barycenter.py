"""Fixed-support entropic Wasserstein barycenters and displacement paths.

The barycenter solver runs iterative Bregman projections on log-domain
potentials. Each outer iteration is an exact block maximization of the
entropic dual, so the recorded (negated) dual objective never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .ot_core import (
    DiscreteMeasure,
    SolverConfig,
    _logsumexp,
    barycentric_map,
    cost_matrix,
    sinkhorn,
)

__all__ = [
    "SupportStrategy",
    "BarycenterProblem",
    "BarycenterResult",
    "ScheduleMode",
    "WeightSchedule",
    "build_support",
    "solve_barycenter",
    "transport_map",
    "displacement_interpolation",
    "interpolation_path",
    "schedule_weights",
]

DEDUPE_RADIUS = 1e-9


class SupportStrategy(str, Enum):
    UNION = "union"
    GRID = "grid"
    SOURCE = "source"


class ScheduleMode(str, Enum):
    PAIRWISE = "pairwise"
    SIMPLEX = "simplex"
    UNIFORM = "uniform"


@dataclass(frozen=True, eq=False)
class BarycenterProblem:
    """Weighted barycenter of ``measures``; index 0 is the source.

    ``support`` is a :class:`SupportStrategy` or an explicit ``(m, d)``
    array of candidate points. ``grid_resolution`` is the number of grid
    nodes per axis for :attr:`SupportStrategy.GRID`.
    """

    measures: Sequence[DiscreteMeasure]
    weights: Sequence[float]
    support: SupportStrategy | np.ndarray = SupportStrategy.UNION
    grid_resolution: int = 16
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        measures = tuple(self.measures)
        lam = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(measures) < 2:
            raise ValueError("a barycenter problem needs at least two measures")
        if lam.size != len(measures):
            raise ValueError(f"{len(measures)} measures but {lam.size} weights")
        if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-9:
            raise ValueError("barycenter weights must be nonnegative and sum to 1")
        dims = {m.dim for m in measures}
        if len(dims) != 1:
            raise ValueError(f"measures have mixed dimensions {sorted(dims)}")
        if isinstance(self.support, str):
            object.__setattr__(self, "support", SupportStrategy(self.support))
        if self.grid_resolution < 1:
            raise ValueError("grid_resolution must be positive")
        lam.setflags(write=False)
        object.__setattr__(self, "measures", measures)
        object.__setattr__(self, "weights", lam)

    @property
    def n_intermediate(self) -> int:
        """Number of intermediate references, N - 2."""
        return len(self.measures) - 2


class BarycenterResult(NamedTuple):
    measure: DiscreteMeasure
    iterations: int
    converged: bool
    objective: np.ndarray


@dataclass(frozen=True)
class WeightSchedule:
    mode: ScheduleMode = ScheduleMode.UNIFORM
    vertices: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", ScheduleMode(self.mode))
        if self.vertices is not None:
            object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
            if len(self.vertices) < 2:
                raise ValueError("a schedule needs at least two vertices")


def _canonical_union(points: np.ndarray) -> np.ndarray:
    order = np.lexsort(points.T[::-1])
    pts = points[order]
    keep = np.ones(len(pts), dtype=bool)
    pairs = cKDTree(pts).query_pairs(DEDUPE_RADIUS, output_type="ndarray")
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        for i, j in pairs:
            if keep[i]:
                keep[j] = False
    return pts[keep]


def build_support(problem: BarycenterProblem) -> np.ndarray:
    """Candidate barycenter support for ``problem``.

    The union support is sorted lexicographically, so it does not depend
    on the order of the input measures.
    """
    strategy = problem.support
    if not isinstance(strategy, SupportStrategy):
        pts = np.asarray(strategy, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] == 0:
            raise ValueError("empty barycenter support")
        if pts.shape[1] != problem.measures[0].dim:
            raise ValueError("explicit support has the wrong dimension")
        return pts
    if strategy is SupportStrategy.SOURCE:
        return np.array(problem.measures[0].support)
    allpts = np.concatenate([m.support for m in problem.measures])
    if strategy is SupportStrategy.UNION:
        return _canonical_union(allpts)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    axes = [np.linspace(l, h, problem.grid_resolution) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return _canonical_union(np.stack([g.ravel() for g in mesh], axis=1))


def _sorted_sum(terms: np.ndarray) -> np.ndarray:
    # order-independent summation over axis 0, keeps permutation results bitwise equal
    return np.sort(terms, axis=0).sum(axis=0)


def _atoms_on_support(measure: DiscreteMeasure, support: np.ndarray):
    dist, idx = cKDTree(support).query(measure.support)
    if np.all(dist <= DEDUPE_RADIUS):
        return idx
    return None


def solve_barycenter(problem: BarycenterProblem) -> BarycenterResult:
    """Entropic barycenter minimizing sum_k w_k OT_eps(mu_k, b) over b.

    When the weight vector is a vertex of the simplex and that measure's
    atoms all lie on the support, the exact barycenter (the measure
    itself) is returned without iterating.
    """
    support = build_support(problem)
    lam = problem.weights
    config = problem.solver
    active = [k for k in range(len(lam)) if lam[k] > 0]

    if len(active) == 1:
        only = problem.measures[active[0]]
        idx = _atoms_on_support(only, support)
        if idx is not None:
            w = np.zeros(len(support))
            np.add.at(w, idx, only.weights)
            return BarycenterResult(DiscreteMeasure(support, w), 0, True, np.zeros(0))

    atoms = []
    costs = []
    for k in active:
        mu = problem.measures[k]
        pos = mu.weights > 0
        atoms.append(mu.weights[pos])
        costs.append(cost_matrix(mu.support[pos], support))
    eps = config.regularization(np.array([c.max() for c in costs]))
    scaled = [c / eps for c in costs]
    logs = [np.log(a) for a in atoms]
    lam_a = lam[active]

    m = len(support)
    alphas = [np.zeros(len(a)) for a in atoms]
    betas = [np.zeros(m) for _ in atoms]
    objective = []
    converged = False
    it = 0
    logb = np.zeros(m)
    for it in range(1, config.max_iterations + 1):
        for k, Ce in enumerate(scaled):
            alphas[k] = logs[k] - _logsumexp(betas[k][None, :] - Ce, axis=1)
        colsums = np.stack([_logsumexp(al[:, None] - Ce, axis=0)
                            for al, Ce in zip(alphas, scaled)])
        logb = _sorted_sum(lam_a[:, None] * colsums)
        for k in range(len(scaled)):
            betas[k] = logb - colsums[k]
        if not np.all(np.isfinite(logb)):
            raise FloatingPointError(f"non-finite barycenter at iteration {it}")

        # every plan now has column marginal exp(logb)
        linear = _sorted_sum(np.array([lam_a[k] * (alphas[k] @ atoms[k])
                                       for k in range(len(atoms))]))
        objective.append(eps * (np.exp(logb).sum() - linear))

        if it % config.check_every == 0 or it == config.max_iterations:
            err = max(
                np.abs(np.exp(al + _logsumexp(be[None, :] - Ce, axis=1)) - a).max()
                for al, be, Ce, a in zip(alphas, betas, scaled, atoms)
            )
            if err <= config.tolerance:
                converged = True
                break

    b = np.exp(logb)
    return BarycenterResult(
        DiscreteMeasure(support, b / b.sum()), it, converged, np.array(objective)
    )


def transport_map(source: DiscreteMeasure, target: DiscreteMeasure,
                  config: SolverConfig | None = None, debias: bool = False):
    """Barycentric-projection estimate of the Monge map source -> target.

    Returns the image of every source atom (massless atoms stay put) and
    the list of Sinkhorn results that produced it.

    With ``debias=True`` each atom instead moves by the difference between
    its projections onto ``target`` and onto ``source`` itself, which
    removes the inward shrinkage caused by entropic blur; the mapping onto
    an identical measure is then exactly the identity. Debiased images
    are no longer confined to the convex hull of the target.
    """
    if source.dim != target.dim:
        raise ValueError(
            f"dimension mismatch: source is {source.dim}-d, target is {target.dim}-d"
        )
    rows = source.weights > 0
    x = np.array(source.support)
    res = sinkhorn(source.weights, target.weights, cost_matrix(source, target), config)
    projected = barycentric_map(res.plan.matrix[rows], target.support)
    results = [res]
    if debias:
        own = sinkhorn(source.weights, source.weights, cost_matrix(source, source), config)
        shrunk = barycentric_map(own.plan.matrix[rows], source.support)
        projected = x[rows] + (projected - shrunk)
        results.append(own)
    mapped = x
    mapped[rows] = projected
    return mapped, results


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return t


def _push(source: DiscreteMeasure, mapped: np.ndarray, t: float) -> DiscreteMeasure:
    if t == 0.0:
        return source
    return DiscreteMeasure((1.0 - t) * source.support + t * mapped, source.weights)


def displacement_interpolation(source: DiscreteMeasure, target: DiscreteMeasure,
                               t: float, config: SolverConfig | None = None
                               ) -> DiscreteMeasure:
    """Move every source atom the fraction ``t`` along its transport line."""
    t = _check_t(t)
    if t == 0.0:
        return source
    mapped, _ = transport_map(source, target, config)
    return _push(source, mapped, t)


def interpolation_path(source: DiscreteMeasure, target: DiscreteMeasure,
                       steps: int, config: SolverConfig | None = None
                       ) -> list[DiscreteMeasure]:
    """Displacement interpolants at ``steps`` evenly spaced times in [0, 1]."""
    if steps < 2:
        raise ValueError("steps must be at least 2")
    mapped, _ = transport_map(source, target, config)
    return [_push(source, mapped, float(t)) for t in np.linspace(0.0, 1.0, steps)]


def schedule_weights(schedule: WeightSchedule, t: float, n: int) -> np.ndarray:
    """Barycenter weights at time ``t`` for ``n`` measures.

    ``PAIRWISE`` blends the first vertex into the last, ``SIMPLEX`` walks
    the vertices in order with equal-length legs, ``UNIFORM`` is 1/n.
    """
    t = _check_t(t)
    if n < 2:
        raise ValueError("need at least two measures")
    if schedule.mode is ScheduleMode.UNIFORM:
        return np.full(n, 1.0 / n)
    verts = schedule.vertices if schedule.vertices is not None else tuple(range(n))
    if any(v < 0 or v >= n for v in verts):
        raise ValueError(f"schedule vertices {verts} out of range for {n} measures")
    lam = np.zeros(n)
    if schedule.mode is ScheduleMode.PAIRWISE:
        lam[verts[0]] += 1.0 - t
        lam[verts[-1]] += t
        return lam
    legs = len(verts) - 1
    pos = t * legs
    k = min(int(np.floor(pos)), legs - 1)
    s = pos - k
    lam[verts[k]] += 1.0 - s
    lam[verts[k + 1]] += s
    return lam
