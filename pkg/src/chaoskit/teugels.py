"""Orthogonal polynomials of the atomic state measure and the kernel transform onto them.

For a symmetric kernel ``f`` the transform is

    g_i(t_1, ..., t_n) = n! * sum_a f((t_1, a_1), ..., (t_n, a_n)) * prod_j p_{i_j}(x_{a_j}) mu_{a_j} / q_{i_j}

kept on strictly increasing cell tuples. With finitely many atoms every
exponential moment of the jump measure is finite, so no moment condition
needs checking.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicMap, refine
from .errors import DegenerateBasis
from .kernel import GridKernel, l2_norm_sq, pullback, symmetrize, _check_model
from .levy import LevyModel


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """Polynomials ``p_0, p_1, ...`` orthogonal in ``L_2(mu)``.

    ``coeffs[i]`` holds monomial coefficients of ``p_i`` (lowest degree first),
    ``values[i, a]`` its value at the atom of axis ``a`` and ``norms_sq[i]``
    the squared norm ``q_i``.
    """

    support: np.ndarray
    weights: np.ndarray
    coeffs: tuple[np.ndarray, ...]
    values: np.ndarray
    norms_sq: np.ndarray

    @property
    def size(self) -> int:
        return len(self.coeffs)

    def gram(self) -> np.ndarray:
        return (self.values * self.weights) @ self.values.T

    def __call__(self, i: int, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs[i])

    def to_json(self) -> dict:
        return {
            "support": self.support.tolist(),
            "coeffs": [c.tolist() for c in self.coeffs],
            "norms_sq": self.norms_sq.tolist(),
        }


def build_basis(model: LevyModel, rel_tol: float = 1e-12) -> OrthoBasis:
    """Modified Gram-Schmidt of ``1, x, x**2, ...`` in ``L_2(mu)`` with one re-orthogonalization pass.

    Directions whose norm collapses below ``rel_tol`` times the monomial's
    norm are dropped.
    """
    xs = model.state_values
    w = model.weights
    K = len(xs)
    kept_vals: list[np.ndarray] = []
    kept_coeffs: list[np.ndarray] = []
    for deg in range(K):
        coeff = np.zeros(K)
        coeff[deg] = 1.0
        v = xs**deg
        start = math.sqrt(float(np.sum(w * v * v)))
        for _ in range(2):
            for pv, pc in zip(kept_vals, kept_coeffs):
                r = float(np.sum(w * v * pv)) / float(np.sum(w * pv * pv))
                v = v - r * pv
                coeff = coeff - r * pc
        norm = math.sqrt(float(np.sum(w * v * v)))
        if start == 0 or norm <= rel_tol * start:
            continue
        kept_vals.append(v)
        kept_coeffs.append(coeff)
    values = np.array(kept_vals)
    norms = (values * values * w).sum(axis=1)
    return OrthoBasis(xs.copy(), w.copy(), tuple(kept_coeffs), values, norms)


@dataclass(frozen=True, eq=False)
class NSTransform:
    """Transformed kernels; ``coeffs[i_1, ..., i_n, t_1, ..., t_n]`` with zeros off the simplex."""

    n: int
    level: int
    coeffs: np.ndarray

    def __getitem__(self, index: tuple[int, ...]) -> np.ndarray:
        return self.coeffs[tuple(index)]

    def indices(self):
        return itertools.product(range(self.coeffs.shape[0]), repeat=self.n)

    def to_json(self) -> dict:
        out = {}
        for idx in self.indices():
            g = self.coeffs[idx]
            entries = [
                {"cells": [int(c) for c in cells], "value": float(g[cells])}
                for cells in zip(*np.nonzero(g))
            ]
            out[",".join(map(str, idx))] = entries
        return {"n": self.n, "level": self.level, "kernels": out}


def _simplex_mask(n: int, n_cells: int) -> np.ndarray:
    mask = np.ones((n_cells,) * n, dtype=bool)
    c = np.arange(n_cells)
    for j in range(n - 1):
        shape_a = [1] * n
        shape_b = [1] * n
        shape_a[j] = n_cells
        shape_b[j + 1] = n_cells
        mask &= c.reshape(shape_a) < c.reshape(shape_b)
    return mask


def _transform_full(f: GridKernel, basis: OrthoBasis) -> np.ndarray:
    """Transform on every cell tuple (not only the simplex), shape ``(K,)*n + (D,)*n``."""
    if np.any(basis.norms_sq <= 0):
        raise DegenerateBasis("basis contains a direction of zero norm")
    n, D, A = f.n, f.n_cells, f.atom_count
    C = basis.values * basis.weights / basis.norms_sq[:, None]
    vals = f.values.reshape((D, A) * n)
    letters = "abcdefghijklmnopqrstuvwxyz"
    t_idx = letters[:n]
    a_idx = letters[n : 2 * n]
    i_idx = letters[2 * n : 3 * n]
    src = "".join(t + a for t, a in zip(t_idx, a_idx))
    ops = [src] + [i + a for i, a in zip(i_idx, a_idx)]
    out = np.einsum(",".join(ops) + "->" + i_idx + t_idx, vals, *([C] * n), optimize=True)
    return math.factorial(n) * out


def ns_transform(f: GridKernel, basis: OrthoBasis, model: LevyModel) -> NSTransform:
    """Transform of the symmetrization of ``f`` onto products of the basis polynomials."""
    _check_model(f, model)
    full = _transform_full(symmetrize(f), basis)
    mask = _simplex_mask(f.n, f.n_cells)
    return NSTransform(f.n, f.level, full * mask)


def ns_parseval_check(f: GridKernel, basis: OrthoBasis, model: LevyModel) -> float:
    """``|n! ||f~||^2 - sum_i prod q_i * sum_simplex g_i^2 * 2**(-d n)|``."""
    fs = symmetrize(f)
    lhs = math.factorial(f.n) * l2_norm_sq(fs, model)
    g = ns_transform(fs, basis, model).coeffs
    q = basis.norms_sq
    qprod = np.ones((basis.size,) * f.n)
    for axis in range(f.n):
        shape = [1] * f.n
        shape[axis] = basis.size
        qprod = qprod * q.reshape(shape)
    per_index = (g * g).reshape((basis.size,) * f.n + (-1,)).sum(axis=-1)
    rhs = float(np.sum(per_index * qprod)) / (1 << (f.level * f.n))
    return abs(lhs - rhs)


def ns_covariance_check(
    f: GridKernel, basis: OrthoBasis, g: DyadicMap, model: LevyModel, assume_invariant: bool = False
) -> float:
    """Largest deviation in the permutation covariance of the transform under ``g``.

    For every increasing cell tuple ``t`` let ``sigma`` sort ``g(t)``. Compares
    ``G^f_{i o sigma}(sorted g(t))`` with ``G^{S_g f}_i(t)``. With
    ``assume_invariant`` the right side uses ``G^f`` itself, which is the
    literal identity and holds only when ``f`` is ``g``-invariant.
    """
    _check_model(f, model)
    fs = symmetrize(f)
    n, D = f.n, f.n_cells
    gf = _transform_full(fs, basis)
    gh = gf if assume_invariant else _transform_full(pullback(fs, g), basis)
    img = refine(g, f.level)
    tuples = np.array(list(itertools.combinations(range(D), n)), dtype=np.int64).reshape(-1, n)
    if not len(tuples):
        return 0.0
    u = img[tuples]
    sigma = np.argsort(u, axis=1)
    s = np.take_along_axis(u, sigma, axis=1)
    worst = 0.0
    for idx in itertools.product(range(basis.size), repeat=n):
        idx_arr = np.array(idx)
        permuted = idx_arr[sigma]
        lhs = gf[tuple(permuted[:, j] for j in range(n)) + tuple(s[:, j] for j in range(n))]
        rhs = gh[idx + tuple(tuples[:, j] for j in range(n))]
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst
