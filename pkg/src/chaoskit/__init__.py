"""Chaos expansions of Levy functionals on dyadic grids and their invariance under dyadic maps."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.1.0"

from .dyadic import (
    DyadicMap,
    GroupSpec,
    compose,
    from_permutation,
    identity,
    inverse,
    periodic_shift,
    refine,
    restricted_group,
    shift_group,
)
from .errors import ChaoskitError
from .kernel import ChaosVector, GridKernel
from .levy import LevyModel, PathSample, sample_path, sample_paths

__all__ = [
    "ChaosVector",
    "ChaoskitError",
    "DyadicMap",
    "GridKernel",
    "GroupSpec",
    "LevyModel",
    "PathSample",
    "__version__",
    "compose",
    "from_permutation",
    "identity",
    "inverse",
    "periodic_shift",
    "refine",
    "restricted_group",
    "sample_path",
    "sample_paths",
    "shift_group",
]
