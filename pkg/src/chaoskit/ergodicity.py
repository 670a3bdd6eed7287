"""Locally ergodic sets at finite resolution, orbit decompositions and cuboid reduction."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .dyadic import (
    GroupSpec,
    cells_at_level,
    orbits,
    restricted_group,
    shift_group,
)
from .errors import BadSymmetry, ClosureCapExceeded, EmptySet, LevelMismatch
from .kernel import (
    GridKernel,
    cuboid_average,
    invariance_defect,
    l2_norm_sq,
    orbit_project,
)
from .levy import LevyModel


@dataclass(frozen=True)
class PairReport:
    """Outcome for one two-cell union ``A`` of level-``level`` cells ``cells``.

    ``method`` names the subgroup that settled the check: ``"generators"``
    (generators fixing A^c), ``"transpositions"`` (group transpositions inside
    A) or ``"stabilizer"`` (the full pointwise stabilizer of A^c).
    """

    level: int
    cells: tuple[int, int]
    method: str
    transitive: bool

    def to_json(self) -> dict:
        return {"level": self.level, "cells": list(self.cells), "method": self.method, "transitive": self.transitive}


@dataclass(frozen=True)
class ErgodicityCertificate:
    cells: tuple[int, ...]
    set_level: int
    d_max: int
    pair_reports: tuple[PairReport, ...] = field(default=())

    @property
    def checked_levels(self) -> tuple[int, int]:
        return (self.set_level, self.d_max)

    @property
    def passed(self) -> bool:
        return all(r.transitive for r in self.pair_reports)

    def failures(self) -> list[PairReport]:
        return [r for r in self.pair_reports if not r.transitive]

    def to_json(self) -> dict:
        return {
            "cells": list(self.cells),
            "set_level": self.set_level,
            "checked_levels": list(self.checked_levels),
            "passed": self.passed,
            "pair_reports": [r.to_json() for r in self.pair_reports],
        }


def minimal_level(cells, d: int) -> tuple[list[int], int]:
    """Coarsest level at which a union of level-``d`` cells is a union of cells."""
    cells = sorted(set(cells))
    while d > 0:
        pairs = set(c // 2 for c in cells)
        if sorted(c for p in pairs for c in (2 * p, 2 * p + 1)) != cells:
            break
        cells, d = sorted(pairs), d - 1
    return cells, d


def _connected(nodes: list[int], edges) -> bool:
    ds = DisjointSet(nodes)
    for a, b in edges:
        ds.merge(a, b)
        if ds.n_subsets == 1:
            return True
    return ds.n_subsets == 1


def _pair_check(group: GroupSpec, images: np.ndarray, sub: list[int], d: int) -> tuple[str, bool]:
    n_cells = 1 << d
    inside = np.zeros(n_cells, dtype=bool)
    inside[sub] = True
    outside = np.flatnonzero(~inside)
    fixing = images[np.all(images[:, outside] == outside, axis=1)]
    edges = [(c, int(row[c])) for row in fixing for c in sub if row[c] != c]
    if _connected(sub, edges):
        return "generators", True

    perm_group = group.permutation_group(d)
    from sympy.combinatorics import Permutation

    def member_edges():
        for a, b in itertools.combinations(sub, 2):
            if perm_group.contains(Permutation(a, b, size=n_cells)):
                yield a, b

    if _connected(sub, member_edges()):
        return "transpositions", True

    try:
        elems = np.stack([np.asarray(e.images(d)) for e in group.elements])
        stab = elems[np.all(elems[:, outside] == outside, axis=1)]
        edges = [(c, int(row[c])) for row in stab for c in sub if row[c] != c]
    except ClosureCapExceeded:
        stab_group = perm_group.pointwise_stabilizer([int(c) for c in outside])
        edges = [(c, int(p.array_form[c])) for p in stab_group.generators for c in sub if p.array_form[c] != c]
    return "stabilizer", _connected(sub, edges)


def check_locally_ergodic(cells, d_cells: int, group: GroupSpec, d_max: int) -> ErgodicityCertificate:
    """Finite-resolution check that a cell set is finite locally ergodic for ``group``.

    For every level ``N`` between the set's minimal level and ``d_max`` and
    every union ``A`` of two distinct level-``N`` cells of the set, test whether
    the subgroup fixing ``A^c`` pointwise acts transitively on the level-``d_max``
    subcells of ``A``. Cheap sufficient tests run first; the exact pointwise
    stabilizer is computed only when they are inconclusive.
    """
    cells = sorted(set(cells))
    if not cells:
        raise EmptySet("cannot certify an empty set")
    if cells[0] < 0 or cells[-1] >= 1 << d_cells:
        raise ValueError(f"cells must lie in [0, {1 << d_cells}) at level {d_cells}")
    if d_cells > d_max:
        raise LevelMismatch(f"set level {d_cells} above d_max {d_max}")
    if group.max_level > d_max:
        raise LevelMismatch(f"group degree {group.max_level} above d_max {d_max}")
    base, n_e = minimal_level(cells, d_cells)
    images = group.cell_images(d_max)
    reports = []
    for level in range(n_e, d_max + 1):
        level_cells = cells_at_level(base, n_e, level)
        for l, m in itertools.combinations(level_cells, 2):
            sub = cells_at_level([l, m], level, d_max)
            method, ok = _pair_check(group, images, sub, d_max)
            reports.append(PairReport(level, (l, m), method, ok))
    return ErgodicityCertificate(tuple(base), n_e, d_max, tuple(reports))


@dataclass(frozen=True)
class QuasiAtom:
    """One orbit of off-diagonal point tuples with its product-measure mass."""

    cells: np.ndarray
    atoms: np.ndarray
    mass: float

    def __len__(self) -> int:
        return len(self.cells)


def quasi_atoms(group: GroupSpec, n: int, d: int, model: LevyModel) -> list[QuasiAtom]:
    """Orbits of the diagonal action on off-diagonal ``n``-tuples, with masses."""
    part = orbits(group, n, d, model.atom_count)
    w = model.weights / (1 << d)
    masses = np.prod(w[part.atoms], axis=1)
    order = np.argsort(part.labels, kind="stable")
    bounds = np.flatnonzero(np.diff(part.labels[order])) + 1
    out = []
    for idx in np.split(order, bounds):
        if len(idx):
            out.append(QuasiAtom(part.cells[idx], part.atoms[idx], float(masses[idx].sum())))
    return out


def reduce_kernel(f: GridKernel, partition, group: GroupSpec, model: LevyModel) -> tuple[GridKernel, float]:
    """Cuboid-constant representative of ``f`` and the ``L_2`` distance moved.

    Orbit averaging is followed by cuboid averaging; both are orthogonal
    projections, so the residual satisfies Pythagoras with the output norm.
    """
    out = cuboid_average(orbit_project(f, group), partition)
    return out, math.sqrt(l2_norm_sq(f - out, model))


@dataclass(frozen=True)
class ShiftReport:
    shift_invariant: bool
    shift_defect: float
    full_invariant: bool
    full_defect: float
    projection_residual: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def shift_counterexample(
    d: int, g2, h2, model: LevyModel | None = None, tol: float = 1e-12
) -> tuple[GridKernel, ShiftReport]:
    """Kernel ``g2(|s - t|) h2(x, y)`` on level-``d`` cells and its invariance report.

    ``g2[j]`` is the value at cell distance ``j`` (length ``2**d``) and must
    satisfy ``g2[j] == g2[2**d - j]``. The kernel is invariant under the
    periodic shifts but not under all cell permutations unless ``g2`` is
    constant on ``1..2**d - 1``. ``projection_residual`` is the distance moved
    by orbit projection under the full group (unit weights unless ``model``).
    """
    g2 = np.asarray(g2, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    size = 1 << d
    if g2.shape != (size,):
        raise ValueError(f"g2 needs {size} entries, got {g2.shape}")
    if h2.ndim != 2 or h2.shape[0] != h2.shape[1] or not np.allclose(h2, h2.T, atol=tol):
        raise ValueError("h2 must be a symmetric square matrix")
    j = np.arange(1, size)
    if np.any(np.abs(g2[j] - g2[size - j]) > tol):
        raise BadSymmetry("g2 must satisfy g2[j] == g2[2**d - j]")
    A = h2.shape[0]
    if model is not None and model.atom_count != A:
        raise ValueError("h2 size differs from the model's atom count")
    k = np.arange(size)
    dist = np.abs(k[:, None] - k[None, :])
    vals = g2[dist][:, None, :, None] * h2[None, :, None, :]
    f = GridKernel(d, A, vals.reshape(size * A, size * A))
    shifts = shift_group(d)
    full = restricted_group([range(size)], d, d)
    shift_defect = invariance_defect(f, shifts)
    full_defect = invariance_defect(f, full)
    proj = orbit_project(f, full)
    if model is None:
        residual = float(np.sqrt(np.sum((f.values - proj.values) ** 2)) / size)
    else:
        residual = math.sqrt(l2_norm_sq(f - proj, model))
    report = ShiftReport(shift_defect <= tol, shift_defect, full_defect <= tol, full_defect, residual)
    return f, report


__all__ = [
    "ErgodicityCertificate",
    "PairReport",
    "QuasiAtom",
    "ShiftReport",
    "check_locally_ergodic",
    "minimal_level",
    "quasi_atoms",
    "reduce_kernel",
    "shift_counterexample",
]
