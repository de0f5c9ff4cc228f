"""Domain records passed between the solvers.

All records are frozen; arrays inside them are made read-only.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from errors import ConfigurationError, DataError, DomainError
from numerics import RadialFunction, check_same_grid


##############################################################################
# Profile


@dataclass(frozen=True, eq=False)
class ProfileTable:
    """Vortex profile w, w' on a grid, with the slope alpha of w at 0."""

    grid: object
    w: RadialFunction
    w_prime: RadialFunction
    alpha: float
    iterations: int = 0
    residual: float = 0.0

    def __repr__(self):
        return f"<ProfileTable alpha={self.alpha:.12f} on {self.grid!r}>"


##############################################################################
# Radial pairs and kernels


@dataclass(frozen=True, eq=False)
class ModePair:
    """Two radial components (psi_1, psi_2) on a common grid."""

    first: RadialFunction
    second: RadialFunction

    def __post_init__(self):
        check_same_grid(self.first, self.second)

    @classmethod
    def from_arrays(cls, grid, values, derivatives=None):
        """Build from (2, n) value and derivative arrays."""

        values = np.asarray(values, dtype=float)
        if derivatives is None:
            return cls(RadialFunction(grid, values[0]), RadialFunction(grid, values[1]))
        derivatives = np.asarray(derivatives, dtype=float)
        return cls(RadialFunction(grid, values[0], derivatives[0]),
                   RadialFunction(grid, values[1], derivatives[1]))

    @classmethod
    def zeros(cls, grid):
        return cls(RadialFunction.zeros(grid), RadialFunction.zeros(grid))

    @property
    def grid(self):
        return self.first.grid

    @property
    def values(self):
        return np.vstack([self.first.values, self.second.values])

    @property
    def derivatives(self):
        return np.vstack([self.first.differentiated(), self.second.differentiated()])

    def sup(self):
        return float(np.max(np.hypot(self.first.values, self.second.values)))

    def scaled(self, factor):
        return ModePair(self.first * factor, self.second * factor)

    def __add__(self, other):
        return ModePair(self.first + other.first, self.second + other.second)

    def __sub__(self, other):
        return ModePair(self.first - other.first, self.second - other.second)

    def flipped(self):
        """(psi_1, -psi_2): maps the second parity family onto the first."""

        return ModePair(self.first, -self.second)


KERNEL_TAGS = (
    "bounded-at-0", "log-at-0", "regular-growth-at-0", "singular-at-0",
    "poly-decay-at-inf", "poly-growth-at-inf", "exp-growth-at-inf", "exp-decay-at-inf",
)


@dataclass(frozen=True, eq=False)
class KernelBasis:
    """Homogeneous solutions of one Fourier mode.

    Mode 0 holds (z_10, z_20) of the decoupled second equation. Modes k >= 1
    hold (z_1, z_2, z_3, z_4) with tags[j] = (tag at 0, tag at infinity).
    """

    k: int
    solutions: tuple
    tags: tuple
    kappa: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = 2 if self.k == 0 else 4
        if len(self.solutions) != expected:
            raise DataError("wrong number of basis solutions", k=self.k,
                            got=len(self.solutions))
        for pair in self.tags:
            for tag in pair:
                if tag not in KERNEL_TAGS:
                    raise ConfigurationError("unknown asymptotic tag", tag=tag)
        object.__setattr__(self, "solutions", tuple(self.solutions))
        object.__setattr__(self, "tags", tuple(tuple(t) for t in self.tags))

    def __repr__(self):
        return f"<KernelBasis k={self.k} kappa={self.kappa:.6g}>"

    @property
    def grid(self):
        return self.solutions[0].grid

    def __getitem__(self, j):
        """z_j with j counted from 1."""

        return self.solutions[j - 1]


##############################################################################
# Mode right-hand sides and solutions


@dataclass(frozen=True, eq=False)
class ModeRHS:
    """Radial right-hand side (h_1, h_2) of mode k, parity l (None for k=0).

    `head_exponent` is the declared small-r exponent of h; `decay_exponent`
    the declared algebraic decay of h_2 (and of r**2 h_1) at infinity.
    """

    k: int
    l: int
    h: ModePair
    head_exponent: float = 0.0
    decay_exponent: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise ConfigurationError("mode must be non-negative", k=self.k)
        if self.k == 0 and self.l is not None:
            raise ConfigurationError("mode 0 carries no parity", l=self.l)
        if self.k > 0 and self.l not in (1, 2):
            raise ConfigurationError("parity must be 1 or 2", l=self.l)
        if self.head_exponent < -1:
            raise DomainError("declared small-r exponent below -1",
                              head_exponent=self.head_exponent)

    @classmethod
    def sample(cls, grid, k, l, h1, h2, **kwargs):
        """Sample callables h1(r), h2(r) on grid."""

        r = grid.nodes
        pair = ModePair(RadialFunction(grid, h1(r)), RadialFunction(grid, h2(r)))
        return cls(k, l, pair, **kwargs)

    @classmethod
    def zeros(cls, grid, k, l):
        return cls(k, l, ModePair.zeros(grid))

    @property
    def grid(self):
        return self.h.grid

    def scaled(self, factor):
        return ModeRHS(self.k, self.l, self.h.scaled(factor),
                       self.head_exponent, self.decay_exponent)

    def __add__(self, other):
        return ModeRHS(self.k, self.l, self.h + other.h,
                       min(self.head_exponent, other.head_exponent),
                       min(self.decay_exponent, other.decay_exponent))


@dataclass(frozen=True, eq=False)
class ModeSolution:
    k: int
    l: int
    psi: ModePair
    diagnostics: dict = field(default_factory=dict)

    def __repr__(self):
        return f"<ModeSolution k={self.k} l={self.l} sup={self.psi.sup():.3e}>"

    @property
    def grid(self):
        return self.psi.grid


##############################################################################
# Reports


@dataclass(frozen=True)
class NormReport:
    """Weighted sup norm split into the r <= 2 and r >= 2 pieces."""

    inner: float
    outer_first: float
    outer_second: float

    def __post_init__(self):
        for val in (self.inner, self.outer_first, self.outer_second):
            if not val >= 0:
                raise DataError("norm pieces must be non-negative", value=val)

    @property
    def total(self):
        return self.inner + self.outer_first + self.outer_second

    def to_dict(self):
        return dict(asdict(self), total=self.total)


@dataclass(frozen=True)
class EstimateReport:
    """Measured ||psi||_* against ||h||_** and their ratio."""

    norm_star_value: float
    norm_dstar_value: float
    star: NormReport
    dstar: NormReport
    residual: float = 0.0

    @property
    def ratio(self):
        if self.norm_dstar_value == 0:
            return 0.0
        return self.norm_star_value / self.norm_dstar_value

    def to_dict(self):
        return dict(
            norm_star_value=self.norm_star_value,
            norm_dstar_value=self.norm_dstar_value,
            ratio=self.ratio,
            residual=self.residual,
            star=self.star.to_dict(),
            dstar=self.dstar.to_dict(),
        )


##############################################################################
# Fields


@dataclass(frozen=True, eq=False)
class PolarField:
    """Complex samples on radii x uniform angles theta_j = 2 pi j / n_theta."""

    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        radii = np.array(self.radii, dtype=float)
        values = np.array(self.values, dtype=complex)
        if values.shape != (radii.size, values.shape[-1]) or values.ndim != 2:
            raise DataError("field values must have shape (radii, angles)",
                            shape=values.shape)
        n_theta = values.shape[1]
        if n_theta < 4 or n_theta & (n_theta - 1):
            raise DataError("angle count must be a power of two", n_theta=n_theta)
        if not np.all(np.isfinite(values)):
            raise DataError("field has non-finite values")
        radii.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "values", values)

    def __repr__(self):
        return f"<PolarField {self.radii.size}x{self.n_theta}>"

    @property
    def n_theta(self):
        return self.values.shape[1]

    @property
    def theta(self):
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    def with_values(self, values):
        return PolarField(self.radii, values)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def scaled(self, factor):
        return self.with_values(factor * self.values)


@dataclass(frozen=True, eq=False)
class FourierField:
    """Mode 0 pair plus parity families {(k, l): pair} for k = 1..K."""

    mode0: ModePair
    families: dict
    K: int

    def __post_init__(self):
        for (k, l) in self.families:
            if not 1 <= k <= self.K or l not in (1, 2):
                raise DataError("family index out of range", k=k, l=l, K=self.K)

    def family(self, k, l):
        """Pair of family (k, l); zeros if absent."""

        if k == 0:
            return self.mode0
        return self.families.get((k, l), ModePair.zeros(self.mode0.grid))

    @property
    def grid(self):
        return self.mode0.grid


##############################################################################
# Run configuration


@dataclass(frozen=True)
class RunConfig:
    r_min: float = 1e-4
    r_max: float = 40.0
    per_decade: int = 128
    h_outer: float = 0.05
    K: int = 16
    n_theta: int = 128
    profile_tol: float = 1e-10
    residual_tol: float = 1e-6
    orth_tol: float = 1e-6
    seed: int = 0
    threads: int = 1

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CriterionResult:
    """Outcome of one acceptance criterion."""

    name: str
    passed: bool
    measured: dict

    def to_dict(self):
        return dict(name=self.name, passed=bool(self.passed), measured=self.measured)
