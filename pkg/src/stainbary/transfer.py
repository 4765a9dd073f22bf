"""Stain normalization and augmentation of RGB images.

The source palette is transported onto either the single reference
palette (one reference) or a barycenter of the source and all reference
palettes (two or three references), then pixels are translated by their
cluster's displacement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .barycenter import (
    BarycenterProblem,
    ScheduleMode,
    SupportStrategy,
    WeightSchedule,
    schedule_weights,
    solve_barycenter,
    transport_map,
)
from .ot_core import DiscreteMeasure, SolverConfig, barycentric_map
from .palette import DEFAULT_K, ColorPalette, as_rgb_image, extract_palette, reconstruct

__all__ = [
    "NormalizationRequest",
    "TransferResult",
    "barycentric_map",
    "normalize",
    "augment",
    "DEFAULT_T_SAMPLES",
]

MAX_REFERENCES = 3
DEFAULT_T_SAMPLES = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True, eq=False)
class NormalizationRequest:
    """Inputs for :func:`normalize` and :func:`augment`.

    ``references`` are ordered; the last one is the final target and any
    before it are intermediate references. ``debias`` selects the
    shrinkage-corrected transport map (see
    :func:`~stainbary.barycenter.transport_map`) for single-reference
    requests; barycenter targets always use the plain projection.
    """

    source: np.ndarray
    references: Sequence[np.ndarray]
    schedule: WeightSchedule = field(default_factory=WeightSchedule)
    t_samples: Sequence[float] = (1.0,)
    k: int = DEFAULT_K
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    debias: bool = True

    def __post_init__(self):
        refs = tuple(as_rgb_image(r) for r in self.references)
        if not 1 <= len(refs) <= MAX_REFERENCES:
            raise ValueError(f"need 1 to {MAX_REFERENCES} reference images, got {len(refs)}")
        ts = tuple(float(t) for t in self.t_samples)
        if not ts:
            raise ValueError("t_samples is empty")
        if any(not 0.0 <= t <= 1.0 for t in ts) or list(ts) != sorted(ts):
            raise ValueError(f"t_samples must be sorted values in [0, 1], got {ts}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        object.__setattr__(self, "source", as_rgb_image(self.source))
        object.__setattr__(self, "references", refs)
        object.__setattr__(self, "t_samples", ts)

    @property
    def n_measures(self) -> int:
        return 1 + len(self.references)


@dataclass(frozen=True, eq=False)
class TransferResult:
    image: np.ndarray
    t: float
    weights: np.ndarray | None
    clip_fraction: float
    iterations: int
    converged: bool


def _palette(image, k: int, seed: int) -> ColorPalette:
    h, w = image.shape[:2]
    return extract_palette(image, k=min(k, h * w), seed=seed)


class _Pipeline:
    """Solved state shared by all t samples of one request."""

    def __init__(self, request: NormalizationRequest):
        self.request = request
        self.source = _palette(request.source, request.k, request.seed)
        self.refs = [_palette(r, request.k, request.seed).measure for r in request.references]
        self._fixed = None

    def _barycenter(self, lam):
        problem = BarycenterProblem(
            [self.source.measure, *self.refs], lam,
            support=SupportStrategy.UNION, solver=self.request.solver,
        )
        return solve_barycenter(problem)

    def _map_onto(self, target: DiscreteMeasure):
        # a barycenter target is already entropically spread, only debias toward
        # a single reference
        debias = self.request.debias and self.request.n_measures == 2
        mapped, results = transport_map(self.source.measure, target, self.request.solver,
                                        debias=debias)
        return (mapped, sum(r.iterations for r in results),
                all(r.converged for r in results))

    def _fixed_map(self):
        # one target for the whole sweep: the reference, or the uniform barycenter
        if self._fixed is None:
            req = self.request
            if req.n_measures == 2:
                target, lam, extra, bary_ok = self.refs[0], None, 0, True
            else:
                lam = schedule_weights(req.schedule, 1.0, req.n_measures)
                bary = self._barycenter(lam)
                target, extra, bary_ok = bary.measure, bary.iterations, bary.converged
            mapped, its, ok = self._map_onto(target)
            self._fixed = (mapped, lam, its + extra, ok and bary_ok)
        return self._fixed

    def support_at(self, t: float):
        """Moved palette support at time ``t``, with weights and diagnostics."""
        req = self.request
        if req.n_measures == 2 or req.schedule.mode is ScheduleMode.UNIFORM:
            mapped, lam, its, ok = self._fixed_map()
            x = self.source.measure.support
            return (1.0 - t) * x + t * mapped, lam, its, ok
        lam = schedule_weights(req.schedule, t, req.n_measures)
        bary = self._barycenter(lam)
        mapped, its, ok = self._map_onto(bary.measure)
        return mapped, lam, its + bary.iterations, ok and bary.converged

    def render(self, t: float) -> TransferResult:
        if t == 0.0:
            return TransferResult(self.request.source.copy(), 0.0, None, 0.0, 0, True)
        support, lam, its, ok = self.support_at(t)
        image, clipped = reconstruct(self.source, support, return_clipped=True)
        return TransferResult(image, t, lam, float(clipped.mean()), its, ok)


def normalize(request: NormalizationRequest) -> TransferResult:
    """Stain-normalize the source image toward the references (t = 1)."""
    return _Pipeline(request).render(1.0)


def augment(request: NormalizationRequest) -> list[TransferResult]:
    """One recolored image per entry of ``request.t_samples``.

    t = 0 returns the source unchanged and t = 1 matches :func:`normalize`.
    """
    pipe = _Pipeline(request)
    return [pipe.render(t) for t in request.t_samples]
