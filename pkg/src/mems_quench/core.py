"""Parameter, grid and field types shared across the package.

The domain is a ball of radius R about the origin and every field is radially
symmetric, so a field is a vector of values on a radial grid ``0 = r_0 < ... < r_M = R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

MIN_GRID_INTERVALS = 16


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the nonlocal quenching problem.

    ``general_exponents`` switches on the extra admissibility condition
    ``dim - 2/(p_exp + 1) > 0`` required when (p, q) differ from (2, 2).
    """

    lam: float = 1.0
    gamma: float = 0.0
    p_exp: float = 2.0
    q_exp: float = 2.0
    dim: int = 1
    radius: float = 1.0
    general_exponents: bool = False

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.p_exp > 0 or not self.q_exp > 0:
            raise ValueError("p_exp and q_exp must be positive")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.general_exponents and not self.dim - 2.0 / (self.p_exp + 1.0) > 0:
            raise ValueError("general exponents need dim - 2/(p+1) > 0")
        if self.gamma > 0 and (self.p_exp + 1.0) / self.q_exp <= 1.0:
            # theta^{(p+1)/q} = A + B theta needs a superlinear left side
            raise ValueError("need (p+1)/q > 1 for a unique theta root")

    @property
    def kappa(self) -> float:
        return (self.p_exp + 1.0) ** (-1.0 / (self.p_exp + 1.0))

    @property
    def lam_root(self) -> float:
        """lambda^{1/(p+1)}."""
        return self.lam ** (1.0 / (self.p_exp + 1.0))


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < MIN_GRID_INTERVALS + 1:
            raise ValueError(f"a radial grid needs at least {MIN_GRID_INTERVALS} intervals")
        if r[0] != 0.0:
            raise ValueError("first node must be exactly 0")
        if not np.all(np.diff(r) > 0):
            raise ValueError("nodes must be strictly increasing")
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)

    @property
    def radius(self) -> float:
        return float(self.nodes[-1])

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def min_spacing(self) -> float:
        return float(np.min(np.diff(self.nodes)))

    def scaled(self, factor: float) -> "RadialGrid":
        return RadialGrid(self.nodes * factor)


@dataclass(frozen=True, eq=False)
class Field:
    grid: RadialGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError(f"field has {v.size} values for {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values, time: float | None = None) -> "Field":
        return Field(self.grid, values, self.time if time is None else time)


@dataclass(frozen=True)
class RunConfig:
    """Solver controls.

    ``scheme`` is ``"imex"`` (implicit diffusion, RK4 source, Strang split) or
    ``"rk4"`` (fully explicit with the diffusive CFL limit).
    """

    cfl_safety: float = 0.4
    source_safety: float = 0.05
    quench_stop: float = 1e-3
    max_steps: int = 200_000
    output_cadence: int = 50
    diffusion_enabled: bool = True
    source_enabled: bool = True
    scheme: str = "imex"
    dt_max: float = 1e-4
    snapshot_times: tuple = field(default=())

    def __post_init__(self):
        for name in ("cfl_safety", "source_safety", "quench_stop", "dt_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.quench_stop <= 0.1:
            raise ValueError("quench_stop must lie in (0, 0.1]")
        if self.max_steps < 1 or self.output_cadence < 1:
            raise ValueError("max_steps and output_cadence must be >= 1")
        if self.scheme not in ("imex", "rk4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(t) for t in self.snapshot_times)))

    def replace(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def ball_volume(params: ModelParams) -> float:
    n = params.dim
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0) * params.radius**n


def make_graded_grid(M: int, R: float, cluster: float = 1.0) -> RadialGrid:
    """Nodes ``r_j = R (j/M)^cluster``; ``cluster = 1`` is uniform."""
    if M < MIN_GRID_INTERVALS:
        raise ValueError(f"M must be >= {MIN_GRID_INTERVALS}, got {M}")
    if not R > 0 or not cluster >= 1:
        raise ValueError("need R > 0 and cluster >= 1")
    j = np.arange(M + 1, dtype=float)
    r = R * (j / M) ** cluster
    r[-1] = R
    return RadialGrid(r)


def graded_nodes(M: int, R: float, cluster: float = 1.0) -> np.ndarray:
    """Node formula without the minimum-size rule (small illustrative grids)."""
    j = np.arange(M + 1, dtype=float)
    return R * (j / M) ** cluster
