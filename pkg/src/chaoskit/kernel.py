"""Chaos kernels on a dyadic grid with an atomic state space.

A degree-``n`` kernel is stored densely as an array of shape ``(P,) * n`` where
``P = 2**level * atom_count`` and axis entry ``p`` stands for the point
``(cell, atom) = divmod(p, atom_count)``. Entries whose time cells repeat are
always zero (off-diagonal convention); constructors discard them.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .dyadic import DyadicMap, GroupSpec, off_diagonal_mask, point_images, refine, tuple_orbit_labels
from .errors import (
    EmptyInterval,
    IndexOutOfRange,
    LevelMismatch,
    LevelTooCoarse,
    ModelMismatch,
)
from .levy import LevyModel

log = logging.getLogger(__name__)

EXACT_TOL = 1e-12


@lru_cache(maxsize=64)
def _mask(n: int, level: int, atom_count: int) -> np.ndarray:
    mask = off_diagonal_mask(n, level, atom_count)
    mask.flags.writeable = False
    return mask


@dataclass(frozen=True, eq=False)
class GridKernel:
    level: int
    atom_count: int
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim < 1:
            raise ValueError("kernels have degree >= 1")
        n_points = (1 << self.level) * self.atom_count
        if any(s != n_points for s in values.shape):
            raise ValueError(f"expected shape {(n_points,) * values.ndim}, got {values.shape}")
        values[~_mask(values.ndim, self.level, self.atom_count)] = 0.0
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def n_cells(self) -> int:
        return 1 << self.level

    @property
    def n_points(self) -> int:
        return self.n_cells * self.atom_count

    @classmethod
    def zeros(cls, n: int, level: int, atom_count: int) -> "GridKernel":
        return cls(level, atom_count, np.zeros(((1 << level) * atom_count,) * n))

    @classmethod
    def from_entries(
        cls, n: int, level: int, atom_count: int, entries: Iterable[tuple[Sequence[int], Sequence[int], float]]
    ) -> "GridKernel":
        """Build from ``(cells, atoms, value)`` triples; repeated-cell tuples are rejected."""
        vals = np.zeros(((1 << level) * atom_count,) * n)
        for cells, atoms, value in entries:
            if len(cells) != n or len(atoms) != n:
                raise ValueError(f"entry {cells}, {atoms} is not of degree {n}")
            if len(set(cells)) != n:
                raise ValueError(f"entry cells {cells} repeat a time cell")
            vals[tuple(c * atom_count + a for c, a in zip(cells, atoms))] = value
        return cls(level, atom_count, vals)

    def point(self, cell: int, atom: int) -> int:
        return cell * self.atom_count + atom

    def value_at(self, cells: Sequence[int], atoms: Sequence[int]) -> float:
        return float(self.values[tuple(self.point(c, a) for c, a in zip(cells, atoms))])

    def entries(self) -> list[tuple[tuple[int, ...], tuple[int, ...], float]]:
        out = []
        for idx in zip(*np.nonzero(self.values)):
            cells = tuple(int(p) // self.atom_count for p in idx)
            atoms = tuple(int(p) % self.atom_count for p in idx)
            out.append((cells, atoms, float(self.values[idx])))
        return out

    def _check_compatible(self, other: "GridKernel") -> None:
        if (self.n, self.level, self.atom_count) != (other.n, other.level, other.atom_count):
            raise ModelMismatch("kernels differ in degree, level or atom count")

    def __add__(self, other: "GridKernel") -> "GridKernel":
        self._check_compatible(other)
        return GridKernel(self.level, self.atom_count, self.values + other.values)

    def __sub__(self, other: "GridKernel") -> "GridKernel":
        self._check_compatible(other)
        return GridKernel(self.level, self.atom_count, self.values - other.values)

    def __mul__(self, scalar: float) -> "GridKernel":
        return GridKernel(self.level, self.atom_count, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "GridKernel":
        return self * -1.0

    def max_abs_diff(self, other: "GridKernel") -> float:
        self._check_compatible(other)
        return float(np.max(np.abs(self.values - other.values))) if self.values.size else 0.0

    def is_symmetric(self, tol: float = EXACT_TOL) -> bool:
        return self.max_abs_diff(symmetrize(self)) <= tol

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "level": self.level,
            "atom_count": self.atom_count,
            "entries": [
                {"cells": list(c), "atoms": list(a), "value": v} for c, a, v in self.entries()
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GridKernel":
        entries = ((e["cells"], e["atoms"], float(e["value"])) for e in obj["entries"])
        return cls.from_entries(int(obj["n"]), int(obj["level"]), int(obj["atom_count"]), entries)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _check_model(f: GridKernel, model: LevyModel) -> None:
    if f.atom_count != model.atom_count:
        raise ModelMismatch(f"kernel has {f.atom_count} atoms, model has {model.atom_count}")


@lru_cache(maxsize=64)
def _weight_tensor(n: int, level: int, model: LevyModel) -> np.ndarray:
    w = model.cell_weights(level)
    out = np.ones((len(w),) * n)
    for axis in range(n):
        shape = [1] * n
        shape[axis] = len(w)
        out = out * w.reshape(shape)
    out.flags.writeable = False
    return out


def l2_inner(f: GridKernel, h: GridKernel, model: LevyModel) -> float:
    f._check_compatible(h)
    _check_model(f, model)
    return float(np.sum(f.values * h.values * _weight_tensor(f.n, f.level, model)))


def l2_norm_sq(f: GridKernel, model: LevyModel) -> float:
    return l2_inner(f, f, model)


def symmetrize(f: GridKernel) -> GridKernel:
    perms = list(itertools.permutations(range(f.n)))
    acc = np.zeros_like(f.values)
    for perm in perms:
        acc += np.transpose(f.values, perm)
    return GridKernel(f.level, f.atom_count, acc / len(perms))


def _point_map(g: DyadicMap, level: int, atom_count: int) -> np.ndarray:
    if level < g.level:
        raise LevelTooCoarse(f"kernel level {level} below map degree {g.level}")
    cells = refine(g, level)
    return (cells[:, None] * atom_count + np.arange(atom_count)[None, :]).ravel()


def pullback(f: GridKernel, g: DyadicMap) -> GridKernel:
    """``(S_g f)(x) = f(g[n] x)``: every time coordinate is moved by ``g``."""
    pmap = _point_map(g, f.level, f.atom_count)
    return GridKernel(f.level, f.atom_count, f.values[np.ix_(*([pmap] * f.n))])


def tensor(f: GridKernel, h: GridKernel) -> GridKernel:
    if (f.level, f.atom_count) != (h.level, h.atom_count):
        raise ModelMismatch("tensor factors live on different grids")
    return GridKernel(f.level, f.atom_count, np.multiply.outer(f.values, h.values))


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def contraction(f: GridKernel, h: GridKernel, k: int, r: int, model: LevyModel):
    """Contraction integrating ``k`` shared coordinates and multiplying ``r`` more.

    Coordinates are split as ``f(alpha, gamma, rho)`` and ``h(rho, gamma, beta)``;
    the result is ``(alpha, beta, gamma) -> prod x(gamma) * sum_rho f h m(rho)``.
    Returns a float when the result has degree 0. Entries that land on repeated
    time cells are dropped and the dropped mass is logged.
    """
    n, m = f.n, h.n
    if not (0 <= k <= min(n, m) and 0 <= r <= min(n, m) - k):
        raise IndexOutOfRange(f"invalid contraction indices k={k}, r={r} for degrees {n}, {m}")
    if (f.level, f.atom_count) != (h.level, h.atom_count):
        raise ModelMismatch("contraction factors live on different grids")
    _check_model(f, model)
    na, nb = n - k - r, m - k - r
    letters = iter(_LETTERS)
    alpha = "".join(next(letters) for _ in range(na))
    gamma = "".join(next(letters) for _ in range(r))
    rho = "".join(next(letters) for _ in range(k))
    beta = "".join(next(letters) for _ in range(nb))
    w = model.cell_weights(f.level)
    xs = np.tile(model.state_values, f.n_cells)
    operands = [f.values, h.values] + [w] * k + [xs] * r
    spec = ",".join([alpha + gamma + rho, rho + gamma + beta] + list(rho) + list(gamma))
    out = np.einsum(spec + "->" + alpha + beta + gamma, *operands, optimize=True)
    if out.ndim == 0:
        return float(out)
    result = GridKernel(f.level, f.atom_count, out)
    dropped = float(np.sum((out - result.values) ** 2 * _weight_tensor(out.ndim, f.level, model)))
    if dropped > 0:
        log.debug("contraction k=%d r=%d dropped diagonal mass %.3e", k, r, dropped)
    return result


def orbit_project(f: GridKernel, group: GroupSpec, method: str = "orbits") -> GridKernel:
    """Average of ``f`` over the group's diagonal action.

    ``method="orbits"`` takes orbit means found by union-find over the
    generators; ``method="average"`` sums pullbacks over the enumerated group
    (ClosureCapExceeded when the group is too large). Both give the same result.
    """
    if f.level < group.max_level:
        raise LevelTooCoarse(f"kernel level {f.level} below group degree {group.max_level}")
    if method == "average":
        elements = group.elements
        acc = np.zeros_like(f.values)
        for g in elements:
            acc += pullback(f, g).values
        return GridKernel(f.level, f.atom_count, acc / len(elements))
    if method != "orbits":
        raise ValueError(f"unknown projection method {method!r}")
    labels = tuple_orbit_labels(point_images(group, f.level, f.atom_count), f.n).ravel()
    sums = np.bincount(labels, weights=f.values.ravel())
    counts = np.bincount(labels)
    return GridKernel(f.level, f.atom_count, (sums / counts)[labels].reshape(f.values.shape))


def invariance_defect(f: GridKernel, group: GroupSpec) -> float:
    return max(f.max_abs_diff(pullback(f, g)) for g in group.generators)


def is_invariant(f: GridKernel, group: GroupSpec, tol: float = EXACT_TOL) -> bool:
    return invariance_defect(f, group) <= tol


def _cuboid_classes(f: GridKernel, partition: Sequence[Iterable[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of off-diagonal entries and their cuboid/atom class ids.

    Cells inside block ``l`` share the key ``l``; every cell outside all blocks
    is its own block, so those coordinates are never averaged across cells.
    """
    n_blocks = len(partition)
    block_of = np.full(f.n_cells, -1)
    for l, block in enumerate(partition):
        block = list(block)
        if np.any(block_of[block] >= 0):
            raise ValueError("partition blocks overlap")
        block_of[block] = l
    outside = block_of < 0
    block_of[outside] = n_blocks + np.flatnonzero(outside)
    points = np.arange(f.n_points)
    point_key = block_of[points // f.atom_count] * f.atom_count + points % f.atom_count
    flat = np.flatnonzero(_mask(f.n, f.level, f.atom_count).ravel())
    if not len(flat):
        return flat, flat
    coords = np.unravel_index(flat, f.values.shape)
    n_keys = (n_blocks + f.n_cells) * f.atom_count
    cls = np.ravel_multi_index(tuple(point_key[c] for c in coords), (n_keys,) * f.n)
    _, inv = np.unique(cls, return_inverse=True)
    return flat, inv


def cuboid_spread(f: GridKernel, partition: Sequence[Iterable[int]]) -> float:
    """Largest max-minus-min of off-diagonal values inside one cuboid and atom tuple."""
    flat, inv = _cuboid_classes(f, partition)
    if not len(flat):
        return 0.0
    vals = f.values.ravel()[flat]
    hi = np.full(inv.max() + 1, -np.inf)
    lo = np.full(inv.max() + 1, np.inf)
    np.maximum.at(hi, inv, vals)
    np.minimum.at(lo, inv, vals)
    return float(np.max(hi - lo))


def is_cuboid_constant(f: GridKernel, partition: Sequence[Iterable[int]], tol: float = EXACT_TOL) -> bool:
    """Whether ``f`` is constant on every cuboid ``E_l1 x ... x E_ln`` for each atom tuple.

    Blocks are disjoint sets of level-``f.level`` cells. A cell outside all
    blocks acts as a block of its own, so ``f`` may vary freely in it.
    """
    return cuboid_spread(f, partition) <= tol


def cuboid_average(f: GridKernel, partition: Sequence[Iterable[int]]) -> GridKernel:
    """Replace each cuboid/atom-tuple class by its mean; other entries are kept."""
    flat, inv = _cuboid_classes(f, partition)
    vals = f.values.ravel().copy()
    if len(flat):
        means = np.bincount(inv, weights=vals[flat]) / np.bincount(inv)
        vals[flat] = means[inv]
    return GridKernel(f.level, f.atom_count, vals.reshape(f.values.shape))


def restrict_time(f: GridKernel, t_cell: int) -> GridKernel:
    """``f`` times the indicator that every time cell is below ``t_cell``."""
    if not 0 <= t_cell <= f.n_cells:
        raise ValueError(f"t_cell {t_cell} outside 0..{f.n_cells}")
    keep = np.arange(f.n_points) // f.atom_count < t_cell
    vals = f.values
    for axis in range(f.n):
        shape = [1] * f.n
        shape[axis] = f.n_points
        vals = vals * keep.reshape(shape)
    return GridKernel(f.level, f.atom_count, vals)


def dolean_kernel(a_cell: int, t_cell: int, n: int, level: int, model: LevyModel) -> GridKernel:
    """Kernel ``1_{(a,t]}^{otimes n} / n!`` of the stochastic exponential, for every atom tuple."""
    if not 0 <= a_cell < t_cell <= 1 << level:
        raise EmptyInterval(f"empty or invalid cell interval [{a_cell}, {t_cell})")
    A = model.atom_count
    inside = (np.arange((1 << level) * A) // A >= a_cell) & (np.arange((1 << level) * A) // A < t_cell)
    vals = np.ones(((1 << level) * A,) * n) / math.factorial(n)
    for axis in range(n):
        shape = [1] * n
        shape[axis] = len(inside)
        vals = vals * inside.reshape(shape)
    return GridKernel(level, A, vals)


@dataclass(frozen=True, eq=False)
class ChaosVector:
    """Truncated chaos expansion: ``constant`` plus kernels of degree 1, 2, ..."""

    level: int
    atom_count: int
    constant: float = 0.0
    kernels: tuple[GridKernel, ...] = ()

    def __post_init__(self):
        kernels = tuple(self.kernels)
        for i, f in enumerate(kernels):
            if f.n != i + 1 or f.level != self.level or f.atom_count != self.atom_count:
                raise ModelMismatch(f"kernel {i} does not have degree {i + 1} on the common grid")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def degree(self) -> int:
        return len(self.kernels)

    def kernel(self, n: int) -> GridKernel:
        if n <= self.degree:
            return self.kernels[n - 1]
        return GridKernel.zeros(n, self.level, self.atom_count)

    def padded(self, degree: int) -> "ChaosVector":
        if degree <= self.degree:
            return self
        return ChaosVector(
            self.level, self.atom_count, self.constant, tuple(self.kernel(n) for n in range(1, degree + 1))
        )

    def _check(self, other: "ChaosVector") -> None:
        if (self.level, self.atom_count) != (other.level, other.atom_count):
            raise ModelMismatch("chaos vectors live on different grids")

    def __add__(self, other: "ChaosVector") -> "ChaosVector":
        self._check(other)
        deg = max(self.degree, other.degree)
        a, b = self.padded(deg), other.padded(deg)
        return ChaosVector(
            self.level,
            self.atom_count,
            a.constant + b.constant,
            tuple(x + y for x, y in zip(a.kernels, b.kernels)),
        )

    def __sub__(self, other: "ChaosVector") -> "ChaosVector":
        return self + other * -1.0

    def __mul__(self, scalar: float) -> "ChaosVector":
        return ChaosVector(
            self.level, self.atom_count, self.constant * scalar, tuple(f * scalar for f in self.kernels)
        )

    __rmul__ = __mul__

    def symmetrized(self) -> "ChaosVector":
        return ChaosVector(self.level, self.atom_count, self.constant, tuple(map(symmetrize, self.kernels)))

    def restrict_time(self, t_cell: int) -> "ChaosVector":
        return ChaosVector(
            self.level, self.atom_count, self.constant, tuple(restrict_time(f, t_cell) for f in self.kernels)
        )

    def inner(self, other: "ChaosVector", model: LevyModel) -> float:
        """``E[F G]`` for the functionals these vectors represent."""
        self._check(other)
        deg = min(self.degree, other.degree)
        total = self.constant * other.constant
        for n in range(1, deg + 1):
            total += math.factorial(n) * l2_inner(
                symmetrize(self.kernel(n)), symmetrize(other.kernel(n)), model
            )
        return total

    def norm_sq(self, model: LevyModel) -> float:
        return self.inner(self, model)

    def max_abs_diff(self, other: "ChaosVector") -> float:
        deg = max(self.degree, other.degree)
        a, b = self.padded(deg), other.padded(deg)
        diffs = [abs(a.constant - b.constant)] + [x.max_abs_diff(y) for x, y in zip(a.kernels, b.kernels)]
        return max(diffs)

    @classmethod
    def zero(cls, level: int, atom_count: int) -> "ChaosVector":
        return cls(level, atom_count, 0.0, ())

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "atom_count": self.atom_count,
            "constant": self.constant,
            "kernels": [f.to_json() for f in self.kernels],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ChaosVector":
        kernels = tuple(GridKernel.from_json(k) for k in obj.get("kernels", []))
        return cls(int(obj["level"]), int(obj["atom_count"]), float(obj.get("constant", 0.0)), kernels)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def check_level(f: GridKernel, level: int) -> None:
    if f.level != level:
        raise LevelMismatch(f"kernel level {f.level} differs from {level}")
