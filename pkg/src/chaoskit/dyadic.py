"""Dyadic measure-preserving maps of (0, 1] and the groups they generate.

A map is stored as a permutation of the ``2**level`` dyadic cells
``((k) / 2**level, (k + 1) / 2**level]`` (0-based ``k``); inside a cell it is a
translation. Every map is kept at its minimal level, so two maps are equal
exactly when their dataclass fields are equal.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    ClosureCapExceeded,
    EmptySet,
    GeneratorMovesComplement,
    LevelMismatch,
    LevelTooCoarse,
    NotABijection,
)

DEFAULT_CLOSURE_CAP = 10_080


def _coarsen(level: int, perm: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    while level > 0:
        coarse = []
        for k in range(0, len(perm), 2):
            lo, hi = perm[k], perm[k + 1]
            if lo % 2 or hi != lo + 1:
                return level, perm
            coarse.append(lo // 2)
        level, perm = level - 1, tuple(coarse)
    return level, perm


@dataclass(frozen=True)
class DyadicMap:
    """Cell permutation ``perm`` at ``level``; ``perm[k]`` is the image cell of ``k``.

    The constructor validates the permutation and canonicalizes it to the
    coarsest level that represents the same point map.
    """

    level: int
    perm: tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        if self.level < 0:
            raise ValueError(f"level must be non-negative, got {self.level}")
        size = 1 << self.level
        if len(perm) != size:
            raise NotABijection(f"expected {size} images at level {self.level}, got {len(perm)}")
        if sorted(perm) != list(range(size)):
            raise NotABijection(f"images {perm} are not a permutation of 0..{size - 1}")
        level, perm = _coarsen(self.level, perm)
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "perm", perm)

    @property
    def degree(self) -> int:
        return self.level

    def is_identity(self) -> bool:
        return self.level == 0

    def images(self, d: int) -> np.ndarray:
        return refine(self, d)

    def __call__(self, t):
        return apply_point(self, t)

    def __matmul__(self, other: "DyadicMap") -> "DyadicMap":
        return compose(self, other)

    def to_json(self) -> dict:
        return {"level": self.level, "perm": list(self.perm)}

    @classmethod
    def from_json(cls, obj: dict) -> "DyadicMap":
        return cls(int(obj["level"]), tuple(obj["perm"]))


def from_permutation(d: int, images: Sequence[int]) -> DyadicMap:
    return DyadicMap(d, tuple(images))


def identity() -> DyadicMap:
    return DyadicMap(0, (0,))


def transposition(d: int, i: int, j: int) -> DyadicMap:
    perm = list(range(1 << d))
    perm[i], perm[j] = perm[j], perm[i]
    return DyadicMap(d, tuple(perm))


def periodic_shift(d: int) -> DyadicMap:
    """The dyadic periodic shift ``t -> t + 2**-d`` (mod 1) on (0, 1]."""
    if d < 1:
        raise ValueError("periodic_shift needs d >= 1")
    size = 1 << d
    return DyadicMap(d, tuple((k + 1) % size for k in range(size)))


def refine(g: DyadicMap, d_target: int) -> np.ndarray:
    """Cell images of ``g`` at the finer level ``d_target``.

    Each coarse cell is shifted as a block, so its fine subcells keep their order.
    """
    if d_target < g.level:
        raise LevelTooCoarse(f"map of degree {g.level} cannot be written at level {d_target}")
    shift = d_target - g.level
    fine = np.arange(1 << d_target)
    coarse = np.asarray(g.perm, dtype=np.int64)
    return (coarse[fine >> shift] << shift) + (fine & ((1 << shift) - 1))


def apply_point(g: DyadicMap, t):
    t_arr = np.asarray(t, dtype=float)
    size = 1 << g.level
    k = np.clip(np.ceil(t_arr * size).astype(np.int64) - 1, 0, size - 1)
    perm = np.asarray(g.perm)
    out = (perm[k] + 1) / size - ((k + 1) / size - t_arr)
    return float(out) if np.ndim(out) == 0 else out


def compose(g: DyadicMap, h: DyadicMap) -> DyadicMap:
    """``g o h``: apply ``h`` first."""
    d = max(g.level, h.level)
    return DyadicMap(d, tuple(refine(g, d)[refine(h, d)]))


def inverse(g: DyadicMap) -> DyadicMap:
    return DyadicMap(g.level, tuple(np.argsort(g.perm)))


def degree(g: DyadicMap) -> int:
    return g.level


def fixes_cells(g: DyadicMap, cells: Iterable[int], d: int) -> bool:
    img = refine(g, d)
    return all(img[c] == c for c in cells)


def cells_at_level(cells: Iterable[int], d_from: int, d_to: int) -> list[int]:
    """Level-``d_to`` subcells of a set of level-``d_from`` cells (``d_to >= d_from``)."""
    if d_to < d_from:
        raise LevelTooCoarse(f"cannot refine level-{d_from} cells to level {d_to}")
    s = d_to - d_from
    return sorted(c2 for c in set(cells) for c2 in range(c << s, (c + 1) << s))


def restricted_group_generators(E: Iterable[int], d_E: int, d: int) -> list[DyadicMap]:
    """Adjacent transpositions generating the level-``d`` truncation of the maps that fix E^c.

    ``E`` is a set of level-``d_E`` cells. Returns ``[identity()]`` when E has
    a single level-``d`` subcell.
    """
    E = set(E)
    if not E:
        raise EmptySet("restricted group of an empty set")
    fine = cells_at_level(E, d_E, d)
    gens = [transposition(d, a, b) for a, b in zip(fine, fine[1:])]
    return gens or [identity()]


class CellTuple(NamedTuple):
    """``n`` (time cell, atom) pairs; time cells are pairwise distinct."""

    cells: tuple[int, ...]
    atoms: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.cells)


def diagonal_apply(g: DyadicMap, x: CellTuple, d: int) -> CellTuple:
    if d < g.level:
        raise LevelMismatch(f"working level {d} below degree {g.level}")
    size = 1 << d
    if any(not 0 <= c < size for c in x.cells):
        raise LevelMismatch(f"cells {x.cells} are not level-{d} cells")
    img = refine(g, d)
    return CellTuple(tuple(int(img[c]) for c in x.cells), tuple(x.atoms))


@dataclass(frozen=True)
class GroupSpec:
    """A finite group of dyadic maps given by generators, with an enumeration cap."""

    generators: tuple[DyadicMap, ...]
    closure_cap: int = DEFAULT_CLOSURE_CAP
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise EmptySet("a group needs at least one generator (identity allowed)")
        if self.closure_cap < 1:
            raise ValueError("closure_cap must be positive")
        object.__setattr__(self, "generators", gens)

    @property
    def max_level(self) -> int:
        return max(g.level for g in self.generators)

    @cached_property
    def elements(self) -> tuple[DyadicMap, ...]:
        """BFS closure of the generators; raises ClosureCapExceeded past ``closure_cap``."""
        d = self.max_level
        gens = [refine(g, d) for g in self.generators]
        start = tuple(range(1 << d))
        seen = {start}
        queue = deque([start])
        while queue:
            cur = np.asarray(queue.popleft())
            for gen in gens:
                nxt = tuple(gen[cur].tolist())
                if nxt not in seen:
                    seen.add(nxt)
                    if len(seen) > self.closure_cap:
                        raise ClosureCapExceeded(
                            f"group closure exceeds cap {self.closure_cap}"
                        )
                    queue.append(nxt)
        return tuple(sorted({DyadicMap(d, p) for p in seen}, key=lambda g: (g.level, g.perm)))

    def order(self) -> int:
        """Group order, via Schreier-Sims when the closure is too large to enumerate."""
        return int(self.permutation_group(self.max_level).order())

    def cell_images(self, d: int) -> np.ndarray:
        """Array ``[n_generators, 2**d]`` of generator cell images at level ``d``."""
        if d < self.max_level:
            raise LevelMismatch(f"level {d} below generator degree {self.max_level}")
        return np.stack([refine(g, d) for g in self.generators])

    def permutation_group(self, d: int):
        """The group as a sympy PermutationGroup on level-``d`` cells (cached per level)."""
        key = ("sympy", d)
        if key not in self._cache:
            from sympy.combinatorics import Permutation, PermutationGroup

            perms = [Permutation(list(map(int, row))) for row in self.cell_images(d)]
            self._cache[key] = PermutationGroup(perms)
        return self._cache[key]

    def to_json(self) -> dict:
        return {
            "generators": [g.to_json() for g in self.generators],
            "closure_cap": self.closure_cap,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroupSpec":
        return cls(
            tuple(DyadicMap.from_json(g) for g in obj["generators"]),
            int(obj.get("closure_cap", DEFAULT_CLOSURE_CAP)),
        )


def trivial_group() -> GroupSpec:
    return GroupSpec((identity(),))


def shift_group(d: int) -> GroupSpec:
    """Cyclic group generated by the periodic shifts ``s_1, ..., s_d``."""
    return GroupSpec(tuple(periodic_shift(k) for k in range(1, d + 1)))


def restricted_group(blocks: Sequence[Iterable[int]], d_blocks: int, d: int) -> GroupSpec:
    """Join of the level-``d`` truncations of the groups fixing each block's complement."""
    gens: list[DyadicMap] = []
    for block in blocks:
        gens.extend(g for g in restricted_group_generators(block, d_blocks, d) if not g.is_identity())
    return GroupSpec(tuple(gens) or (identity(),))


def point_images(group: GroupSpec, d: int, atom_count: int) -> np.ndarray:
    """Generator images on the ``2**d * atom_count`` points ``p = cell * atom_count + atom``."""
    cells = group.cell_images(d)
    atoms = np.arange(atom_count)
    return (cells[:, :, None] * atom_count + atoms[None, None, :]).reshape(len(cells), -1)


def tuple_orbit_labels(images: np.ndarray, n: int) -> np.ndarray:
    """Orbit labels of the diagonal action on all ``n``-tuples of points.

    ``images`` is ``[n_generators, n_points]``. Returns an int array of shape
    ``(n_points,) * n``; labels are connected components of the graph joining
    each tuple to its image under every generator.
    """
    n_points = images.shape[1]
    size = n_points**n
    idx = np.arange(size)
    coords = np.unravel_index(idx, (n_points,) * n)
    rows, cols = [], []
    for img in images:
        target = np.ravel_multi_index(tuple(img[c] for c in coords), (n_points,) * n)
        moved = target != idx
        rows.append(idx[moved])
        cols.append(target[moved])
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(size, size))
    _, labels = connected_components(graph, directed=True, connection="weak")
    return labels.reshape((n_points,) * n)


def off_diagonal_mask(n: int, d: int, atom_count: int) -> np.ndarray:
    """Boolean mask over ``(n_points,) * n`` marking tuples with distinct time cells."""
    n_points = (1 << d) * atom_count
    cell_of = np.arange(n_points) // atom_count
    mask = np.ones((n_points,) * n, dtype=bool)
    for i, j in itertools.combinations(range(n), 2):
        shape_i = [1] * n
        shape_j = [1] * n
        shape_i[i] = n_points
        shape_j[j] = n_points
        mask &= cell_of.reshape(shape_i) != cell_of.reshape(shape_j)
    return mask


@dataclass(frozen=True)
class OrbitPartition:
    """Orbits of a group's diagonal action on off-diagonal cell tuples.

    Row ``i`` of ``cells``/``atoms`` is one tuple; ``labels[i]`` its orbit id
    (ids are consecutive, numbered by first appearance in lexicographic order).
    """

    n: int
    level: int
    atom_count: int
    cells: np.ndarray
    atoms: np.ndarray
    labels: np.ndarray

    @property
    def n_orbits(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def orbit_of(self, x: CellTuple) -> int:
        hit = np.all(self.cells == x.cells, axis=1) & np.all(self.atoms == x.atoms, axis=1)
        return int(self.labels[np.flatnonzero(hit)[0]])

    def blocks(self) -> list[list[CellTuple]]:
        out: list[list[CellTuple]] = [[] for _ in range(self.n_orbits)]
        for c, a, lab in zip(self.cells, self.atoms, self.labels):
            out[lab].append(CellTuple(tuple(map(int, c)), tuple(map(int, a))))
        return out


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[inv]


def orbits(group: GroupSpec, n: int, d: int, atoms: int) -> OrbitPartition:
    """Partition of all off-diagonal ``n``-tuples at level ``d`` into group orbits."""
    images = point_images(group, d, atoms)
    labels = tuple_orbit_labels(images, n)
    mask = off_diagonal_mask(n, d, atoms)
    flat = np.flatnonzero(mask.ravel())
    coords = np.stack(np.unravel_index(flat, mask.shape), axis=1)
    return OrbitPartition(
        n=n,
        level=d,
        atom_count=atoms,
        cells=coords // atoms,
        atoms=coords % atoms,
        labels=_relabel(labels.ravel()[flat]),
    )


def is_transitive_on(group: GroupSpec, cells: Iterable[int], d: int) -> bool:
    """Whether the group acts transitively on the given level-``d`` cells.

    Every generator must fix the complement of ``cells`` pointwise.
    """
    cells = sorted(set(cells))
    if not cells:
        raise EmptySet("transitivity on an empty cell set")
    images = group.cell_images(d)
    inside = np.zeros(1 << d, dtype=bool)
    inside[cells] = True
    outside = np.flatnonzero(~inside)
    if np.any(images[:, outside] != outside):
        raise GeneratorMovesComplement("a generator moves a cell outside the given set")
    labels = tuple_orbit_labels(images, 1)
    return len(set(labels[cells].tolist())) == 1

