"""Picard operators for BSDEs with affine generators on truncated grid chaos.

Grid times are ``t = 0, ..., T`` with ``T = 2**level``; cell ``s`` is the
interval between times ``s`` and ``s + 1``. Conditional expectation given the
path up to time ``t`` is ``restrict_time(., t)`` on every kernel.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chaos_mc import evaluate_chaos
from .errors import DegreeOverflow, ModelMismatch, NoConvergence
from .kernel import (
    ChaosVector,
    GridKernel,
    contraction,
    cuboid_spread,
    symmetrize,
    tensor,
)
from .levy import LevyModel, PathSample, m_values


@dataclass(frozen=True, eq=False)
class AffineGenerator:
    """``f(s, y, z) = a[s] y + sum_k b[k][s] z_k + c[s]`` with ``z_k = sum_x Z_{s,x} h[k][x] mu_x``.

    ``h[k]`` is indexed by the model's atom axes.
    """

    a: np.ndarray
    c: np.ndarray
    b: tuple[np.ndarray, ...] = ()
    h: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        c = np.asarray(self.c, dtype=float)
        b = tuple(np.asarray(x, dtype=float) for x in self.b)
        h = tuple(np.asarray(x, dtype=float) for x in self.h)
        if a.ndim != 1 or c.shape != a.shape or any(x.shape != a.shape for x in b):
            raise ValueError("a, b and c must be arrays over the same time cells")
        if len(b) != len(h):
            raise ValueError("every z-coefficient needs a driver h_k")
        n_cells = len(a)
        if n_cells & (n_cells - 1):
            raise ValueError("number of time cells must be a power of two")
        for name, val in (("a", a), ("c", c), ("b", b), ("h", h)):
            object.__setattr__(self, name, val)

    @property
    def level(self) -> int:
        return len(self.a).bit_length() - 1

    @classmethod
    def zero(cls, level: int) -> "AffineGenerator":
        z = np.zeros(1 << level)
        return cls(z, z)

    @classmethod
    def constant(cls, level: int, a: float = 0.0, c: float = 0.0) -> "AffineGenerator":
        T = 1 << level
        return cls(np.full(T, a), np.full(T, c))

    def to_json(self) -> dict:
        return {
            "a": self.a.tolist(),
            "c": self.c.tolist(),
            "b": [x.tolist() for x in self.b],
            "h": [x.tolist() for x in self.h],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AffineGenerator":
        return cls(obj["a"], obj["c"], tuple(obj.get("b", [])), tuple(obj.get("h", [])))


@dataclass(frozen=True, eq=False)
class ZField:
    """Chaos expansions of ``Z_{s,x}`` for every point ``p = s * atom_count + x``.

    ``constant[p]`` is the mean and ``kernels[m - 1][p]`` the degree-``m``
    kernel array, which vanishes unless all its cells are below ``s``.
    """

    level: int
    atom_count: int
    constant: np.ndarray
    kernels: tuple[np.ndarray, ...] = ()

    @property
    def n_points(self) -> int:
        return (1 << self.level) * self.atom_count

    @property
    def degree(self) -> int:
        return len(self.kernels)

    @classmethod
    def zero(cls, level: int, atom_count: int) -> "ZField":
        return cls(level, atom_count, np.zeros((1 << level) * atom_count))

    def at(self, s: int, x: int) -> ChaosVector:
        p = s * self.atom_count + x
        return ChaosVector(
            self.level,
            self.atom_count,
            float(self.constant[p]),
            tuple(GridKernel(self.level, self.atom_count, k[p]) for k in self.kernels),
        )

    def padded(self, degree: int) -> "ZField":
        if degree <= self.degree:
            return self
        P = self.n_points
        extra = tuple(np.zeros((P,) * (m + 1)) for m in range(self.degree + 1, degree + 1))
        return ZField(self.level, self.atom_count, self.constant, self.kernels + extra)

    def combine(self, weights: np.ndarray) -> list[ChaosVector]:
        """``sum_x w[x] Z_{s,x}`` for every cell ``s``."""
        A, T = self.atom_count, 1 << self.level
        out = []
        for s in range(T):
            sl = slice(s * A, (s + 1) * A)
            const = float(weights @ self.constant[sl])
            ks = tuple(
                GridKernel(self.level, A, np.tensordot(weights, k[sl], axes=(0, 0))) for k in self.kernels
            )
            out.append(ChaosVector(self.level, A, const, ks))
        return out

    def norm_sq(self, model: LevyModel) -> float:
        """``E sum_{s,x} Z_{s,x}^2 m(s,x)``."""
        w = model.cell_weights(self.level)
        total = float(np.sum(w * self.constant**2))
        for m, k in enumerate(self.kernels, start=1):
            sym = np.zeros_like(k)
            perms = list(itertools.permutations(range(1, m + 1)))
            for perm in perms:
                sym += np.transpose(k, (0,) + perm)
            sym /= len(perms)
            wt = w
            for _ in range(m):
                wt = np.multiply.outer(wt, model.cell_weights(self.level))
            total += math.factorial(m) * float(np.sum(sym * sym * wt))
        return total

    def __sub__(self, other: "ZField") -> "ZField":
        deg = max(self.degree, other.degree)
        a, b = self.padded(deg), other.padded(deg)
        return ZField(
            self.level,
            self.atom_count,
            a.constant - b.constant,
            tuple(x - y for x, y in zip(a.kernels, b.kernels)),
        )

    def evaluate(self, path: PathSample, model: LevyModel) -> np.ndarray:
        """Values ``Z_{s,x}(path)``, shape ``batch + (n_points,)``."""
        m = m_values(model, path)
        flat = m.reshape(-1, m.shape[-1])
        out = np.broadcast_to(self.constant, (flat.shape[0], self.n_points)).copy()
        for k in self.kernels:
            v = np.einsum("bq,pq...->bp...", flat, k)
            while v.ndim > 2:
                v = np.einsum("bq,bpq...->bp...", flat, v)
            out += v
        return out.reshape(path.batch_shape + (self.n_points,))


def martingale_repr(F: ChaosVector) -> ZField:
    """Representation kernels: ``z_{n-1}(., p) = n f~_n(., p)`` on cells below the cell of ``p``."""
    A, L = F.atom_count, F.level
    P = (1 << L) * A
    cell = np.arange(P) // A
    constant = np.zeros(P)
    kernels = []
    for n, f in enumerate(F.kernels, start=1):
        fs = symmetrize(f).values
        z = n * np.moveaxis(fs, -1, 0)
        if n == 1:
            constant = constant + z
            continue
        for axis in range(1, n):
            shape = [1] * n
            shape[0] = P
            shape[axis] = P
            below = cell[None, :] < cell[:, None]
            z = z * below.reshape(shape)
        kernels.append(z)
    return ZField(L, A, constant, tuple(kernels))


def representation_residual(F: ChaosVector, Z: ZField, path: PathSample, model: LevyModel) -> float:
    """Largest ``|F - E F - sum_p Z_p M(p)|`` over a (batched) path."""
    lhs = np.asarray(evaluate_chaos(path, F, model)) - F.constant
    rhs = np.sum(Z.evaluate(path, model) * m_values(model, path), axis=-1)
    return float(np.max(np.abs(lhs - rhs)))


def _integrands(gen: AffineGenerator, Y: Sequence[ChaosVector], Z: ZField, model: LevyModel) -> list[ChaosVector]:
    T = 1 << Z.level
    zetas = [Z.combine(np.asarray(h) * model.weights) for h in gen.h]
    out = []
    for s in range(T):
        phi = Y[s] * gen.a[s] + ChaosVector(Z.level, Z.atom_count, gen.c[s], ())
        for k, zeta in enumerate(zetas):
            phi = phi + zeta[s] * gen.b[k][s]
        out.append(phi)
    return out


def picard_step(
    F: ChaosVector, gen: AffineGenerator, Y: Sequence[ChaosVector], Z: ZField, model: LevyModel
) -> tuple[list[ChaosVector], ZField]:
    """One application of the Picard operators with left-endpoint time quadrature.

    ``Y`` holds one chaos vector per grid time ``0..T``. Returns the new
    ``Y'_t = restrict(F + sum_{s >= t} phi_s / T, t)`` and the representation
    of ``F + sum_s phi_s / T``.
    """
    T = 1 << F.level
    if gen.level != F.level or Z.level != F.level or len(Y) != T + 1:
        raise ModelMismatch("generator, Y, Z and F must share the grid")
    if F.atom_count != model.atom_count:
        raise ModelMismatch("terminal value and model disagree on atoms")
    n_max = F.degree
    if any(y.degree > n_max for y in Y) or Z.degree > max(n_max - 1, 0):
        raise DegreeOverflow(f"iterates exceed the terminal degree {n_max}")
    phis = _integrands(gen, Y, Z, model)
    dt = 1.0 / T
    tail = ChaosVector.zero(F.level, F.atom_count)
    tails = [tail] * (T + 1)
    for s in range(T - 1, -1, -1):
        tail = tail + phis[s] * dt
        tails[s] = tail
    new_y = [(F + tails[t]).restrict_time(t) for t in range(T + 1)]
    new_z = martingale_repr(F + tails[0])
    return new_y, new_z


def _y_dist(a: Sequence[ChaosVector], b: Sequence[ChaosVector], model: LevyModel) -> float:
    return max(math.sqrt(max((x - y).norm_sq(model), 0.0)) for x, y in zip(a, b))


@dataclass
class PicardResult:
    Y: list[ChaosVector]
    Z: ZField
    history: list[float] = field(default_factory=list)
    converged: bool = False
    iterates: list[tuple[list[ChaosVector], ZField]] = field(default_factory=list)


def picard_solve(
    F: ChaosVector,
    gen: AffineGenerator,
    model: LevyModel,
    iterations: int = 50,
    tol: float = 1e-12,
    keep_iterates: bool = False,
) -> PicardResult:
    """Iterate from ``(Y, Z) = (0, 0)`` until the step distance is at most ``tol``.

    The distance is ``max_t ||Y'_t - Y_t|| + ||Z' - Z||`` in ``L_2``. A
    NoConvergence warning is issued if ``iterations`` steps do not suffice.
    """
    T = 1 << F.level
    Y = [ChaosVector.zero(F.level, F.atom_count)] * (T + 1)
    Z = ZField.zero(F.level, F.atom_count)
    result = PicardResult(Y, Z)
    for _ in range(iterations):
        new_y, new_z = picard_step(F, gen, Y, Z, model)
        dist = _y_dist(new_y, Y, model) + math.sqrt(max((new_z - Z).norm_sq(model), 0.0))
        Y, Z = new_y, new_z
        result.history.append(dist)
        if keep_iterates:
            result.iterates.append((Y, Z))
        if dist <= tol:
            result.converged = True
            break
    result.Y, result.Z = Y, Z
    if not result.converged:
        warnings.warn(f"Picard iteration did not reach tol {tol} in {iterations} steps", NoConvergence)
    return result


@dataclass
class PropagationReport:
    passed: bool
    max_spread: float
    spreads: list[float]
    first_failure: int | None

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _blocks_below(partition, t: int) -> list[list[int]]:
    return [[c for c in block if c < t] for block in partition]


def iterate_spread(Y: Sequence[ChaosVector], Z: ZField, partition) -> float:
    """Worst invariance defect of one iterate under the groups fixing ``(t, 1]``.

    ``Y_t`` and ``Z_{s,x}`` for ``s >= t`` must be constant on cuboids built
    from the blocks cut to cells below ``t``; cells from ``t`` on stay free.
    """
    T = 1 << Z.level
    worst = 0.0
    for t in range(T + 1):
        blocks = _blocks_below(partition, t)
        for f in Y[t].kernels:
            worst = max(worst, cuboid_spread(f, blocks))
        for k in Z.kernels:
            for p in range(t * Z.atom_count, Z.n_points):
                worst = max(worst, cuboid_spread(GridKernel(Z.level, Z.atom_count, k[p]), blocks))
    return worst


def invariance_propagation_check(
    F: ChaosVector,
    gen: AffineGenerator,
    partition,
    model: LevyModel,
    iterations: int = 10,
    tol: float = 1e-12,
) -> PropagationReport:
    """Run ``iterations`` Picard steps and measure cuboid-constancy of every iterate."""
    T = 1 << F.level
    Y = [ChaosVector.zero(F.level, F.atom_count)] * (T + 1)
    Z = ZField.zero(F.level, F.atom_count)
    spreads = []
    for _ in range(iterations):
        Y, Z = picard_step(F, gen, Y, Z, model)
        spreads.append(iterate_spread(Y, Z, partition))
    failures = [i for i, s in enumerate(spreads) if s > tol]
    return PropagationReport(
        not failures, max(spreads, default=0.0), spreads, failures[0] if failures else None
    )


def qv_terminal(partition, level: int, model: LevyModel, coeffs: Sequence[float] | None = None) -> ChaosVector:
    """``F = sum_l c_l Q_l^2`` with ``Q_l = int_{E_l} x dM``, expanded by the product formula.

    ``Q_l^2 = I_2(u_l (x) u_l) + I_1(x^3 1_{E_l}) + ||u_l||^2`` where
    ``u_l(s, x) = x 1_{E_l}(s)``; all three kernels are cuboid-constant.
    """
    A = model.atom_count
    coeffs = [1.0] * len(partition) if coeffs is None else list(coeffs)
    xs = model.state_values
    const = 0.0
    k1 = GridKernel.zeros(1, level, A)
    k2 = GridKernel.zeros(2, level, A)
    for c, block in zip(coeffs, partition):
        ind = np.zeros(1 << level)
        ind[list(block)] = 1.0
        u = GridKernel(level, A, np.outer(ind, xs).ravel())
        const += c * contraction(u, u, 1, 0, model)
        k1 = k1 + contraction(u, u, 0, 1, model) * c
        k2 = k2 + tensor(u, u) * c
    return ChaosVector(level, A, const, (k1, k2))
