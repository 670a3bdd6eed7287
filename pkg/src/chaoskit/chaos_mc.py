"""Pathwise multiple integrals and Monte Carlo checks of chaos identities.

On a grid with off-diagonal kernels, ``I_n(f)`` is the finite sum of
``f(p_1, ..., p_n) * M(p_1) * ... * M(p_n)``, so every identity that is exact
in ``L_2`` is also exact per path up to float rounding.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dyadic import DyadicMap, inverse
from .errors import LevelMismatch
from .kernel import ChaosVector, GridKernel, l2_norm_sq, pullback, symmetrize
from .levy import LevyModel, PathSample, cell_increments, m_values, permute_path, sample_paths

DEFAULT_CHUNK = 10_000


@dataclass(frozen=True)
class MCReport:
    estimate: float
    std_error: float
    samples: int
    seed: int | None
    target: float | None = None

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("an MC report needs at least one sample")
        if self.std_error < 0:
            raise ValueError("std_error must be non-negative")

    @property
    def z_score(self) -> float:
        if self.target is None:
            raise ValueError("report has no target")
        diff = abs(self.estimate - self.target)
        if self.std_error == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / self.std_error

    def passes(self, sigmas: float = 3.0) -> bool:
        return self.z_score <= sigmas

    def to_json(self, sigmas: float = 3.0) -> dict:
        out = {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "samples": self.samples,
            "seed": self.seed,
        }
        if self.target is not None:
            out["target"] = self.target
            out["pass"] = self.passes(sigmas)
        return out


def _check_level(path: PathSample, level: int) -> None:
    if path.level != level:
        raise LevelMismatch(f"path level {path.level} differs from kernel level {level}")


def _integrate(values: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Contract every axis of ``values`` against per-path ``m`` of shape ``(B, P)``."""
    out = np.einsum("bp,p...->b...", m, values)
    while out.ndim > 1:
        out = np.einsum("bp,bp...->b...", m, out)
    return out


def multiple_integral(path: PathSample, f: GridKernel, model: LevyModel):
    """``I_n(f)`` evaluated on a path (float) or on a batch of paths (array)."""
    _check_level(path, f.level)
    m = m_values(model, path)
    flat = m.reshape(-1, m.shape[-1])
    out = _integrate(f.values, flat).reshape(path.batch_shape)
    return float(out) if out.ndim == 0 else out


def evaluate_chaos(path: PathSample, cv: ChaosVector, model: LevyModel):
    """``F = f_0 + sum_n I_n(f_n)`` on a path or a batch of paths."""
    _check_level(path, cv.level)
    m = m_values(model, path)
    flat = m.reshape(-1, m.shape[-1])
    total = np.full(flat.shape[0], cv.constant)
    for f in cv.kernels:
        total = total + _integrate(f.values, flat)
    total = total.reshape(path.batch_shape)
    return float(total) if total.ndim == 0 else total


def verify_diagram(f: GridKernel, g: DyadicMap, path: PathSample, model: LevyModel) -> float:
    """Largest ``|I_n(S_{g^-1} f)(path) - I_n(f)(T_g path)|`` over the (batched) path."""
    lhs = multiple_integral(path, pullback(f, inverse(g)), model)
    rhs = multiple_integral(permute_path(g, path), f, model)
    return float(np.max(np.abs(np.asarray(lhs) - np.asarray(rhs))))


def _chunks(samples: int, seed, chunk: int):
    """Yield ``(size, SeedSequence)`` pairs; results depend on ``chunk`` but not on the caller."""
    n_chunks = -(-samples // chunk)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    for i, child in enumerate(children):
        yield min(chunk, samples - i * chunk), child


def isometry_check(
    f: GridKernel, model: LevyModel, samples: int = 100_000, seed: int | None = 0, chunk: int = DEFAULT_CHUNK
) -> MCReport:
    """MC estimate of ``E[I_n(f~)^2]`` with target ``n! * ||f~||^2``."""
    fs = symmetrize(f)
    target = math.factorial(f.n) * l2_norm_sq(fs, model)
    s1 = s2 = 0.0
    for size, child in _chunks(samples, seed, chunk):
        paths = sample_paths(model, f.level, size, child)
        sq = multiple_integral(paths, fs, model) ** 2
        s1 += float(np.sum(sq))
        s2 += float(np.sum(sq * sq))
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0)
    se = math.sqrt(var / max(samples - 1, 1)) if samples > 1 else 0.0
    return MCReport(mean, se, samples, seed, target)


@dataclass(frozen=True)
class ChaosEstimate:
    """Estimated expansion with per-entry standard errors in the same layout."""

    vector: ChaosVector
    std_error: ChaosVector
    samples: int
    seed: int | None

    def entry_report(self, n: int, cells, atoms, target: float | None = None) -> MCReport:
        if n == 0:
            est, se = self.vector.constant, self.std_error.constant
        else:
            est = self.vector.kernel(n).value_at(cells, atoms)
            se = self.std_error.kernel(n).value_at(cells, atoms)
        return MCReport(est, se, self.samples, self.seed, target)


def _unordered_supports(n: int, level: int, atom_count: int):
    """Point tuples of every unordered off-diagonal support, cells increasing."""
    out = []
    for cells in itertools.combinations(range(1 << level), n):
        for atoms in itertools.product(range(atom_count), repeat=n):
            out.append([c * atom_count + a for c, a in zip(cells, atoms)])
    return np.array(out, dtype=np.int64).reshape(-1, n)


def chaos_coefficients(
    model: LevyModel,
    functional: Callable[[PathSample], np.ndarray],
    n_max: int,
    level: int,
    samples: int = 100_000,
    seed: int | None = 0,
    chunk: int = DEFAULT_CHUNK,
) -> ChaosEstimate:
    """Estimate the symmetric chaos kernels of ``F = functional(path)``.

    ``functional`` receives a batch of paths and returns one value per path.
    For a support ``{p_1, ..., p_n}`` with distinct cells the symmetrized
    indicators are mutually orthogonal, giving
    ``f~_n(p) = E[F * M(p_1) ... M(p_n)] / (n! * m(p_1) ... m(p_n))``.
    """
    weights = model.cell_weights(level)
    supports = [_unordered_supports(n, level, model.atom_count) for n in range(1, n_max + 1)]
    s1 = [np.zeros(len(s)) for s in supports]
    s2 = [np.zeros(len(s)) for s in supports]
    f1 = f2 = 0.0
    for size, child in _chunks(samples, seed, chunk):
        paths = sample_paths(model, level, size, child)
        F = np.asarray(functional(paths), dtype=float).reshape(size)
        f1 += float(F.sum())
        f2 += float((F * F).sum())
        m = m_values(model, paths)
        for i, sup in enumerate(supports):
            prod = np.prod(m[:, sup], axis=-1) * F[:, None]
            s1[i] += prod.sum(axis=0)
            s2[i] += (prod * prod).sum(axis=0)

    def mean_se(a, b):
        mean = a / samples
        var = np.maximum(b / samples - mean * mean, 0.0)
        return mean, np.sqrt(var / max(samples - 1, 1))

    c0, c0_se = mean_se(f1, f2)
    kernels, errors = [], []
    n_points = (1 << level) * model.atom_count
    for n, sup in enumerate(supports, start=1):
        mean, se = mean_se(s1[n - 1], s2[n - 1])
        scale = math.factorial(n) * np.prod(weights[sup], axis=-1)
        est, err = np.zeros((n_points,) * n), np.zeros((n_points,) * n)
        for perm in itertools.permutations(range(n)):
            idx = tuple(sup[:, j] for j in perm)
            est[idx] = mean / scale
            err[idx] = se / scale
        kernels.append(GridKernel(level, model.atom_count, est))
        errors.append(GridKernel(level, model.atom_count, err))
    A = model.atom_count
    return ChaosEstimate(
        ChaosVector(level, A, float(c0), tuple(kernels)),
        ChaosVector(level, A, float(c0_se), tuple(errors)),
        samples,
        seed,
    )


def doleans_exponential(model: LevyModel, path: PathSample, a_cell: int = 0, t_cell: int | None = None):
    """Grid stochastic exponential ``prod_{a <= k < t} (1 + X_k)`` of the cell increments.

    Expanding the product gives exactly ``1 + sum_n I_n(1_{[a,t)}^{otimes n} / n!)``
    summed over all atoms, the grid form of the Doleans-Dade kernels.
    """
    stop = (1 << path.level) if t_cell is None else t_cell
    x = cell_increments(model, path)[..., a_cell:stop]
    out = np.prod(1.0 + x, axis=-1)
    return float(out) if np.ndim(out) == 0 else out
