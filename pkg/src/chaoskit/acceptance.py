"""Acceptance battery shared by the test suite and the ``suite`` CLI command.

Each criterion returns a :class:`CriterionResult`; ``run_all`` runs the ten
of them in order with a fixed seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bsde, chaos_mc, dyadic, ergodicity, kernel, teugels
from .dyadic import GroupSpec, from_permutation, restricted_group, shift_group
from .kernel import ChaosVector, GridKernel
from .levy import LevyModel, sample_paths

EXACT = 1e-12


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    seconds: float = 0.0
    limit_seconds: float | None = None
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.name} ({self.seconds:.2f}s)"

    def to_json(self) -> dict:
        return {
            "number": self.number,
            "name": self.name,
            "pass": self.passed,
            "limit_seconds": self.limit_seconds,
            "details": self.details,
        }


def _random_model(rng: np.random.Generator, n_jumps: int) -> LevyModel:
    xs = rng.choice([-2.0, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0], size=n_jumps, replace=False)
    lams = rng.uniform(0.5, 3.0, size=n_jumps)
    sigma = float(rng.uniform(0.5, 1.5)) if n_jumps == 0 or rng.random() < 0.7 else 0.0
    return LevyModel(sigma, tuple(zip(xs.tolist(), lams.tolist())))


def _random_kernel(rng: np.random.Generator, n: int, level: int, atom_count: int) -> GridKernel:
    P = (1 << level) * atom_count
    return GridKernel(level, atom_count, rng.normal(size=(P,) * n))


def _random_partition(rng: np.random.Generator, n_cells: int, cover: bool = True) -> list[list[int]]:
    labels = rng.integers(0, rng.integers(1, 4) + 1, size=n_cells)
    blocks = [np.flatnonzero(labels == l).tolist() for l in np.unique(labels)]
    if not cover:
        blocks = [b for b in blocks if rng.random() < 0.8] or blocks[:1]
    return blocks


def _timed(number: int, name: str, limit: float | None, fn: Callable[[], tuple[bool, dict]]) -> CriterionResult:
    start = time.perf_counter()
    ok, details = fn()
    elapsed = time.perf_counter() - start
    if limit is not None:
        details["runtime_ok"] = elapsed < limit
        ok = ok and elapsed < limit
    return CriterionResult(number, name, bool(ok), elapsed, limit, details)


def criterion_1(seed: int = 0) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(1, 4))
            d = int(rng.integers(1, 5))
            model = _random_model(rng, int(rng.integers(0, 3)))
            f = _random_kernel(rng, n, d, model.atom_count)
            g_level = int(rng.integers(0, d + 1))
            g = from_permutation(g_level, rng.permutation(1 << g_level))
            path = sample_paths(model, d, None, rng)
            worst = max(worst, chaos_mc.verify_diagram(f, g, path, model))
        return worst <= EXACT, {"triples": 200, "max_residual": worst}

    return _timed(1, "commutative diagram", 10.0, run)


def criterion_2(seed: int = 0, samples: int = 100_000) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        model = LevyModel(1.0, ((1.0, 2.0), (-0.5, 1.0)))
        reports = {}
        for n in (1, 2):
            f = _random_kernel(rng, n, 2, model.atom_count)
            rep = chaos_mc.isometry_check(f, model, samples, seed + n)
            reports[f"n={n}"] = rep.to_json(3.0)
        ok = all(r["pass"] for r in reports.values())
        return ok, reports

    return _timed(2, "isometry", 60.0, run)


def criterion_3(seed: int = 0) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        model = LevyModel(1.0, ((1.5, 1.0),))
        d = 3
        worst_spread = worst_move = 0.0
        for _ in range(100):
            blocks = _random_partition(rng, 1 << d, cover=bool(rng.random() < 0.7))
            group = restricted_group(blocks, d, d)
            n = int(rng.integers(1, 4))
            f = _random_kernel(rng, n, d, model.atom_count)
            proj = kernel.orbit_project(f, group)
            worst_spread = max(worst_spread, kernel.cuboid_spread(proj, blocks))
            _, moved = ergodicity.reduce_kernel(proj, blocks, group, model)
            worst_move = max(worst_move, moved)
        ok = worst_spread <= EXACT and worst_move <= EXACT
        return ok, {"kernels": 100, "max_cuboid_spread": worst_spread, "max_reduce_residual": worst_move}

    return _timed(3, "cuboid reduction", None, run)


def criterion_4() -> CriterionResult:
    def run():
        d_max = 5
        cases = {
            "(0,1]": ([0], 0, True),
            "(0,1/2]": ([0], 1, True),
            "level-3 cell": ([5], 3, True),
        }
        details = {}
        ok = True
        for name, (cells, lev, expect) in cases.items():
            cert = ergodicity.check_locally_ergodic(cells, lev, restricted_group([cells], lev, d_max), d_max)
            details[name] = {"passed": cert.passed, "pairs": len(cert.pair_reports)}
            ok &= cert.passed == expect
        cert = ergodicity.check_locally_ergodic([0], 0, shift_group(d_max), d_max)
        details["(0,1] under periodic shifts"] = {"passed": cert.passed, "failed_pairs": len(cert.failures())}
        ok &= not cert.passed
        return ok, details

    return _timed(4, "locally ergodic certificates", None, run)


def criterion_5() -> CriterionResult:
    def run():
        d = 3
        g2 = np.array([0.0, 1.0, 2.5, 0.5, -1.0, 0.5, 2.5, 1.0])
        h2 = np.array([[1.0, 0.3], [0.3, -2.0]])
        model = LevyModel(1.0, ((1.0, 1.0),))
        f, rep = ergodicity.shift_counterexample(d, g2, h2, model)
        exact = all(kernel.invariance_defect(f, GroupSpec((dyadic.periodic_shift(k),))) == 0.0 for k in range(1, d + 1))
        ok = rep.shift_invariant and exact and not rep.full_invariant and rep.projection_residual > 0
        return ok, rep.to_json()

    return _timed(5, "shift counterexample", None, run)


def criterion_6(seed: int = 0, samples: int = 100_000) -> CriterionResult:
    def run():
        model = LevyModel(0.0, ((1.0, 1.0),))
        d, n_max = 3, 3
        est = chaos_mc.chaos_coefficients(
            model, lambda p: chaos_mc.doleans_exponential(model, p), n_max, d, samples, seed
        )
        details = {}
        ok = abs(est.vector.constant - 1.0) <= 4 * est.std_error.constant
        details["n=0"] = {"estimate": est.vector.constant, "std_error": est.std_error.constant}
        for n in range(1, n_max + 1):
            target = kernel.dolean_kernel(0, 1 << d, n, d, model)
            mask = target.values != 0
            z = np.abs(est.vector.kernel(n).values[mask] - target.values[mask]) / est.std_error.kernel(n).values[mask]
            details[f"n={n}"] = {"target": 1 / math.factorial(n), "entries": int(mask.sum()), "max_z": float(z.max())}
            ok &= bool(np.all(z <= 4.0))
        return ok, details

    return _timed(6, "Doleans-Dade kernels", 120.0, run)


def criterion_7(seed: int = 0) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        model = LevyModel(1.0, ((1.0, 2.0), (-0.5, 1.5)))
        basis = teugels.build_basis(model)
        d = 3
        parseval = covariance = 0.0
        for i in range(50):
            n = 1 + i % 3
            f = kernel.symmetrize(_random_kernel(rng, n, d, model.atom_count))
            g = from_permutation(d, rng.permutation(1 << d))
            parseval = max(parseval, teugels.ns_parseval_check(f, basis, model))
            covariance = max(covariance, teugels.ns_covariance_check(f, basis, g, model))
        ok = parseval <= 1e-10 and covariance <= EXACT
        return ok, {"kernels": 50, "max_parseval": parseval, "max_covariance": covariance}

    return _timed(7, "kernel transform identities", None, run)


def criterion_8(seed: int = 0) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        model = LevyModel(1.0, ((1.0, 2.0), (-0.5, 1.0)))
        d = 3
        worst = 0.0
        for _ in range(5):
            F = ChaosVector(
                d,
                model.atom_count,
                float(rng.normal()),
                tuple(_random_kernel(rng, n, d, model.atom_count) for n in (1, 2, 3)),
            )
            Z = bsde.martingale_repr(F)
            paths = sample_paths(model, d, 100, rng)
            worst = max(worst, bsde.representation_residual(F, Z, paths, model))
        return worst <= EXACT, {"vectors": 5, "paths_each": 100, "max_residual": worst}

    return _timed(8, "martingale representation", None, run)


def linear_oracle_error(level: int, a: float) -> float:
    """Max over grid times of ``|E Y_t - exp(a (1 - t))|`` for ``f = a y`` and ``F = 1 + I_1(1)``."""
    model = LevyModel(1.0)
    T = 1 << level
    F = ChaosVector(level, 1, 1.0, (GridKernel(level, 1, np.ones(T)),))
    res = bsde.picard_solve(F, bsde.AffineGenerator.constant(level, a=a), model, iterations=80, tol=1e-13)
    return max(abs(res.Y[t].constant - math.exp(a * (1 - t / T))) for t in range(T + 1))


def criterion_9(seed: int = 0) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        model = LevyModel(1.0, ((1.0, 2.0),))
        d = 3
        worst = 0.0
        for _ in range(3):
            blocks = _random_partition(rng, 1 << d)
            F = bsde.qv_terminal(blocks, d, model, rng.uniform(0.5, 2.0, size=len(blocks)))
            a, b, c = (np.zeros(1 << d) for _ in range(3))
            for block in blocks:
                a[block], b[block], c[block] = rng.normal(size=3)
            gen = bsde.AffineGenerator(a, c, (b,), (rng.normal(size=model.atom_count),))
            rep = bsde.invariance_propagation_check(F, gen, blocks, model, iterations=10)
            worst = max(worst, rep.max_spread)
        coef = 0.5
        errs = {lev: linear_oracle_error(lev, coef) for lev in (3, 4)}
        bound = coef**2 * math.exp(abs(coef))
        within = all(e <= bound * 2.0**-lev for lev, e in errs.items())
        ratio = errs[3] / errs[4]
        ok = worst <= EXACT and within and 1.7 <= ratio <= 2.3
        return ok, {
            "max_spread": worst,
            "oracle_error_d3": errs[3],
            "oracle_error_d4": errs[4],
            "richardson_ratio": ratio,
            "bound_constant": bound,
        }

    return _timed(9, "BSDE invariance propagation", 60.0, run)


def random_small_group(rng: np.random.Generator, d: int = 3, cap: int = 10_000) -> GroupSpec:
    """Random group of level-``d`` maps with at most ``cap`` elements."""
    while True:
        kind = rng.integers(0, 3)
        if kind == 0:
            gens = [from_permutation(d, rng.permutation(1 << d)) for _ in range(int(rng.integers(1, 3)))]
        elif kind == 1:
            gens = list(restricted_group(_random_partition(rng, 1 << d, cover=False), d, d).generators)
        else:
            gens = list(shift_group(d).generators) + [dyadic.transposition(d, 0, int(rng.integers(1, 1 << d)))]
        group = GroupSpec(tuple(gens), closure_cap=cap)
        if group.order() <= cap:
            return group


def criterion_10(seed: int = 0) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        model = LevyModel(1.0, ((1.0, 1.0),))
        d = 3
        ok = True
        worst = 0.0
        trials = 0
        for _ in range(12):
            group = random_small_group(rng, d)
            n = int(rng.integers(1, 3))
            atoms = ergodicity.quasi_atoms(group, n, d, model)
            seen = np.concatenate([q.cells * model.atom_count + q.atoms for q in atoms])
            n_off = int(dyadic.off_diagonal_mask(n, d, model.atom_count).sum())
            ok &= len(seen) == n_off and len({tuple(r) for r in seen.tolist()}) == n_off
            ok &= all(q.mass > 0 for q in atoms)
            images = dyadic.point_images(group, d, model.atom_count)
            for q in atoms:
                pts = {tuple(r) for r in (q.cells * model.atom_count + q.atoms).tolist()}
                for img in images:
                    ok &= {tuple(img[list(p)].tolist()) for p in pts} == pts
            f = _random_kernel(rng, n, d, model.atom_count)
            inv = kernel.orbit_project(f, group)
            dual = kernel.orbit_project(f, group, method="average")
            worst = max(worst, inv.max_abs_diff(dual))
            for q in atoms:
                vals = inv.values[tuple((q.cells * model.atom_count + q.atoms).T)]
                worst = max(worst, float(vals.max() - vals.min()))
            trials += 1
        ok = ok and worst <= EXACT
        return ok, {"groups": trials, "max_orbit_spread": worst}

    return _timed(10, "quasi-atom orbits", None, run)


CRITERIA = (
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
)


def run_all(seed: int = 0) -> list[CriterionResult]:
    out = []
    for fn in CRITERIA:
        try:
            out.append(fn(seed) if "seed" in fn.__code__.co_varnames else fn())
        except Exception as exc:
            number = CRITERIA.index(fn) + 1
            out.append(CriterionResult(number, fn.__name__, False, details={"error": repr(exc)}))
    return out
