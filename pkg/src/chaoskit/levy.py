"""Lévy model with finitely many jump atoms, simulated on a dyadic grid.

States are indexed as in the state measure ``mu = sigma**2 delta_0 + sum lambda_j x_j**2 delta_{x_j}``:
state 0 is the Brownian part (x = 0), state ``j >= 1`` the jump atom ``x_j``.
When ``sigma == 0`` state 0 carries no mass and is dropped, so kernel atom
axes index ``model.states`` rather than raw state numbers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .dyadic import DyadicMap, refine
from .errors import LevelTooCoarse, UnknownAtom


@dataclass(frozen=True)
class LevyModel:
    sigma: float
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        atoms = tuple((float(x), float(lam)) for x, lam in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        xs = [x for x, _ in atoms]
        if any(x == 0 for x in xs):
            raise ValueError("jump atoms must be nonzero")
        if len(set(xs)) != len(xs):
            raise ValueError("jump atoms must be pairwise distinct")
        if any(lam <= 0 for _, lam in atoms):
            raise ValueError("jump intensities must be positive")
        if self.sigma == 0 and not atoms:
            raise ValueError("model has neither a Brownian part nor jumps")

    @property
    def n_jumps(self) -> int:
        return len(self.atoms)

    @property
    def states(self) -> tuple[int, ...]:
        """State numbers carried by kernel atom axes, in axis order."""
        first = (0,) if self.sigma > 0 else ()
        return first + tuple(range(1, self.n_jumps + 1))

    @property
    def atom_count(self) -> int:
        return len(self.states)

    @property
    def state_values(self) -> np.ndarray:
        """Jump size ``x`` of each kernel atom axis (0 for the Brownian state)."""
        xs = [0.0] + [x for x, _ in self.atoms]
        return np.array([xs[s] for s in self.states])

    @property
    def weights(self) -> np.ndarray:
        """``mu`` mass of each kernel atom axis."""
        ws = [self.sigma**2] + [lam * x * x for x, lam in self.atoms]
        return np.array([ws[s] for s in self.states])

    def axis_of(self, state: int) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise UnknownAtom(f"state {state} is not part of this model") from None

    def cell_weights(self, d: int) -> np.ndarray:
        """``m`` mass of every point ``p = cell * atom_count + axis`` at level ``d``."""
        return np.tile(self.weights, 1 << d) / (1 << d)

    def to_json(self) -> dict:
        return {"sigma": self.sigma, "atoms": [{"x": x, "lambda": lam} for x, lam in self.atoms]}

    @classmethod
    def from_json(cls, obj: dict) -> "LevyModel":
        atoms = tuple((float(a["x"]), float(a["lambda"])) for a in obj.get("atoms", []))
        return cls(float(obj["sigma"]), atoms)


def mu_weights(model: LevyModel) -> list[tuple[int, float]]:
    return list(zip(model.states, model.weights.tolist()))


@dataclass(frozen=True)
class PathSample:
    """Cell data of one path, or of a batch of paths along leading axes.

    ``gauss[..., k]`` is the Brownian increment over cell ``k`` and
    ``counts[..., k, j]`` the number of jumps of atom ``j + 1`` in cell ``k``.
    """

    level: int
    gauss: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        gauss = np.asarray(self.gauss, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if gauss.shape[-1] != 1 << self.level or counts.shape[:-1] != gauss.shape:
            raise ValueError("gauss/counts shapes do not match the level")
        if np.any(counts < 0):
            raise ValueError("jump counts must be non-negative")
        gauss.flags.writeable = False
        counts.flags.writeable = False
        object.__setattr__(self, "gauss", gauss)
        object.__setattr__(self, "counts", counts)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.gauss.shape[:-1]

    def __len__(self) -> int:
        return self.gauss.shape[0] if self.gauss.ndim > 1 else 1

    def __getitem__(self, idx) -> "PathSample":
        if self.gauss.ndim == 1:
            raise TypeError("a single path cannot be indexed")
        return PathSample(self.level, self.gauss[idx], self.counts[idx])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PathSample):
            return NotImplemented
        return (
            self.level == other.level
            and np.array_equal(self.gauss, other.gauss)
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None


def sample_paths(model: LevyModel, d: int, size: int | None = None, seed=None) -> PathSample:
    """Draw ``size`` independent paths (one unbatched path if ``size`` is None)."""
    rng = np.random.default_rng(seed)
    shape = () if size is None else (size,)
    n_cells = 1 << d
    dt = 1.0 / n_cells
    gauss = rng.standard_normal(shape + (n_cells,)) * np.sqrt(dt)
    if model.sigma == 0:
        gauss = np.zeros_like(gauss)
    lam = np.array([lam for _, lam in model.atoms])
    counts = rng.poisson(lam * dt, size=shape + (n_cells, model.n_jumps))
    return PathSample(d, gauss, counts)


def sample_path(model: LevyModel, d: int, seed=None) -> PathSample:
    return sample_paths(model, d, None, seed)


def m_values(model: LevyModel, path: PathSample) -> np.ndarray:
    """``M(cell x state)`` for every point, shape ``batch + (2**d * atom_count,)``."""
    dt = 1.0 / (1 << path.level)
    cols = []
    if model.sigma > 0:
        cols.append(model.sigma * path.gauss)
    for j, (x, lam) in enumerate(model.atoms):
        cols.append(x * (path.counts[..., j] - lam * dt))
    return np.stack(cols, axis=-1).reshape(path.batch_shape + (-1,))


def random_measure_eval(model: LevyModel, path: PathSample, cell: int, atom: int):
    """``M`` of one cell times one state (``atom`` is the state number, 0 = Brownian)."""
    if not 0 <= cell < 1 << path.level:
        raise IndexError(f"cell {cell} outside level {path.level}")
    if atom == 0:
        if model.sigma == 0:
            raise UnknownAtom("the model has no Brownian part")
        return model.sigma * path.gauss[..., cell]
    if not 1 <= atom <= model.n_jumps:
        raise UnknownAtom(f"state {atom} is not part of this model")
    x, lam = model.atoms[atom - 1]
    return x * (path.counts[..., cell, atom - 1] - lam / (1 << path.level))


def cell_increments(model: LevyModel, path: PathSample) -> np.ndarray:
    """``X`` increment over every cell, shape ``batch + (2**d,)``."""
    m = m_values(model, path)
    return m.reshape(path.batch_shape + (1 << path.level, model.atom_count)).sum(axis=-1)


def increment(model: LevyModel, path: PathSample, start: int, stop: int):
    """Increment of X over cells ``start <= k < stop``."""
    if not 0 <= start < stop <= 1 << path.level:
        raise ValueError(f"invalid cell range [{start}, {stop})")
    return cell_increments(model, path)[..., start:stop].sum(axis=-1)


def permute_path(g: DyadicMap, path: PathSample) -> PathSample:
    """Path whose cell ``k`` carries the data of cell ``g(k)`` of the input."""
    if path.level < g.level:
        raise LevelTooCoarse(f"path level {path.level} below map degree {g.level}")
    img = refine(g, path.level)
    return PathSample(path.level, path.gauss[..., img], path.counts[..., img, :])


def dump_paths_csv(path: PathSample, target: str | Path) -> None:
    """Write rows ``(path, cell, gauss, count_1..count_J)``."""
    gauss = path.gauss.reshape(-1, path.gauss.shape[-1])
    counts = path.counts.reshape((-1,) + path.counts.shape[-2:])
    n_jumps = counts.shape[-1]
    with open(target, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "cell", "gauss"] + [f"count_{j + 1}" for j in range(n_jumps)])
        for i, (gs, cs) in enumerate(zip(gauss, counts)):
            for k, (gk, ck) in enumerate(zip(gs, cs)):
                writer.writerow([i, k, repr(float(gk))] + [int(c) for c in ck])

