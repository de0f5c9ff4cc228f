"""Radial grids, quadrature, interpolation and CSV tables shared by the solvers."""

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from errors import (
    ConfigurationError,
    DataError,
    DomainError,
    ExtrapolationError,
    GridMismatchError,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

# geometric grading below this radius, uniform above
R_SPLIT = 2.0

STENCIL_POINTS = 7
QUADRATURE_POINTS = 6

# relative slack when testing whether a radius lies on the grid
RANGE_SLACK = 1e-12

TAIL_MISMATCH = 0.25

HEAD_FIT_NODES = 6
HEAD_FIT_TOL = 1e-2


##############################################################################
# Finite-difference weights


def fd_weights_1d(x_nodes, x0, der):
    """Fornberg weights for the `der`-th derivative at `x0` on `x_nodes`.

    Exact for polynomials of degree len(x_nodes) - 1.
    """

    x = np.asarray(x_nodes, dtype=float)
    m = x.size
    if m < der + 1:
        raise ConfigurationError("need at least der+1 stencil nodes", der=der, m=m)

    c = np.zeros((m, der + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - x0
    for i in range(1, m):
        mn = min(i, der)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, der]


def stencil_indices(n, k, m):
    """Length-m window around index k, shifted inside [0, n-1] at the ends."""

    start = min(max(k - m // 2, 0), n - m)
    return np.arange(start, start + m)


##############################################################################
# Grid


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing radii, geometric up to R_SPLIT and uniform beyond."""

    nodes: np.ndarray
    n_geometric: int = 0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < STENCIL_POINTS:
            raise DataError("grid needs a 1-D array of at least 7 nodes",
                            size=nodes.size)
        if not np.all(np.isfinite(nodes)):
            raise DataError("grid nodes must be finite")
        if nodes[0] <= 0:
            raise DomainError("grid must start at r_min > 0", r_min=nodes[0])
        if np.any(np.diff(nodes) <= 0):
            raise DataError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    def __repr__(self):
        return (f"<RadialGrid {self.size} nodes on "
                f"[{self.r_min:.3g}, {self.r_max:.4g}]>")

    def __len__(self):
        return self.size

    @classmethod
    def graded(cls, r_min=1e-4, r_max=40.0, per_decade=128, h_outer=0.05):
        """Build the default graded grid.

        Nodes are geometric on [r_min, 2] with `per_decade` nodes per decade,
        then uniform with spacing close to `h_outer` up to `r_max`.
        """

        if not 0 < r_min < R_SPLIT:
            raise ConfigurationError("r_min must lie in (0, 2)", r_min=r_min)
        if r_max < 30:
            raise ConfigurationError("r_max must be at least 30", r_max=r_max)
        if per_decade < 8:
            raise ConfigurationError("need at least 8 nodes per decade",
                                     per_decade=per_decade)
        if h_outer <= 0:
            raise ConfigurationError("h_outer must be positive", h_outer=h_outer)

        n_geo = int(math.ceil(per_decade * math.log10(R_SPLIT / r_min)))
        n_uni = int(math.ceil((r_max - R_SPLIT) / h_outer))
        return cls._from_counts(r_min, r_max, n_geo, n_uni)

    @classmethod
    def _from_counts(cls, r_min, r_max, n_geo, n_uni):
        inner = np.geomspace(r_min, R_SPLIT, n_geo + 1)
        outer = np.linspace(R_SPLIT, r_max, n_uni + 1)[1:]
        return cls(np.concatenate([inner, outer]), n_geometric=n_geo)

    @property
    def size(self):
        return self.nodes.size

    @property
    def r_min(self):
        return float(self.nodes[0])

    @property
    def r_max(self):
        return float(self.nodes[-1])

    @property
    def n_uniform(self):
        return self.size - 1 - self.n_geometric

    def refined(self):
        """Grid with every interval halved; contains all current nodes."""

        if not self.n_geometric:
            mids = 0.5 * (self.nodes[1:] + self.nodes[:-1])
            nodes = np.empty(2 * self.size - 1)
            nodes[0::2] = self.nodes
            nodes[1::2] = mids
            return RadialGrid(nodes)
        return RadialGrid._from_counts(
            self.r_min, self.r_max, 2 * self.n_geometric, 2 * self.n_uniform)

    def truncated(self, R):
        """Grid of the nodes up to R; R must be (close to) a node."""

        idx = int(np.argmin(abs(self.nodes - R)))
        if abs(self.nodes[idx] - R) > 1e-9 * max(1.0, R):
            raise ConfigurationError("truncation radius is not a grid node", R=R)
        if idx < STENCIL_POINTS:
            raise ConfigurationError("truncation radius too small", R=R)
        n_geo = min(self.n_geometric, idx)
        return RadialGrid(self.nodes[:idx + 1], n_geometric=n_geo)

    def index_of(self, r):
        """Index of the node nearest to r."""

        return int(np.argmin(abs(self.nodes - r)))

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        lo = self.r_min * (1 - RANGE_SLACK)
        hi = self.r_max * (1 + RANGE_SLACK)
        return (r >= lo) & (r <= hi)

    def _derivative_matrix(self, der):
        n = self.size
        rows, cols, vals = [], [], []
        for i in range(n):
            idx = stencil_indices(n, i, STENCIL_POINTS)
            rows.extend([i] * STENCIL_POINTS)
            cols.extend(idx)
            vals.extend(fd_weights_1d(self.nodes[idx], self.nodes[i], der))
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

    @cached_property
    def D1(self):
        """Sparse first-derivative matrix (7-point stencils)."""

        return self._derivative_matrix(1)

    @cached_property
    def D2(self):
        """Sparse second-derivative matrix (7-point stencils)."""

        return self._derivative_matrix(2)

    @cached_property
    def interval_weights(self):
        """Sparse (n-1) x n matrix Q with (Q @ g)[i] = integral of g over interval i.

        Each row integrates the degree-5 interpolant through 6 nodes around
        the interval.
        """

        n = self.size
        m = QUADRATURE_POINTS
        x = self.nodes
        starts = np.clip(np.arange(n - 1) - (m // 2 - 1), 0, n - m)
        idx = starts[:, None] + np.arange(m)[None, :]
        h = np.diff(x)
        t = (x[idx] - x[:-1, None]) / h[:, None]
        powers = np.arange(m)
        vander_t = t[:, None, :] ** powers[None, :, None]
        moments = np.broadcast_to(1.0 / (powers + 1.0), (n - 1, m))
        w = np.linalg.solve(vander_t, moments[..., None])[..., 0] * h[:, None]
        rows = np.repeat(np.arange(n - 1), m)
        return sparse.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(n - 1, n))


##############################################################################
# Radial functions


@dataclass(frozen=True, eq=False)
class RadialFunction:
    """Real samples on a grid, optionally with derivative samples.

    `extension` is an optional callable r -> values used outside the grid.
    """

    grid: RadialGrid
    values: np.ndarray
    derivative: np.ndarray = None
    notes: tuple = ()
    extension: object = field(default=None, repr=False)

    def __post_init__(self):
        values = self._checked(self.values, "values")
        object.__setattr__(self, "values", values)
        if self.derivative is not None:
            object.__setattr__(self, "derivative",
                               self._checked(self.derivative, "derivative"))
        object.__setattr__(self, "notes", tuple(self.notes))

    def _checked(self, arr, name):
        arr = np.array(arr, dtype=float)
        if arr.shape != (self.grid.size,):
            raise DataError(f"{name} length does not match grid",
                            expected=self.grid.size, got=arr.shape)
        if not np.all(np.isfinite(arr)):
            raise DataError(f"{name} contain non-finite entries")
        arr.setflags(write=False)
        return arr

    def __repr__(self):
        return f"<RadialFunction on {self.grid!r}, sup={self.sup():.3e}>"

    @classmethod
    def sample(cls, grid, fn, dfn=None, extension=None):
        """Sample callables on a grid."""

        r = grid.nodes
        derivative = None if dfn is None else dfn(r)
        return cls(grid, fn(r), derivative, extension=extension)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.size), np.zeros(grid.size))

    def sup(self):
        return float(np.max(abs(self.values))) if self.values.size else 0.0

    def _combine(self, other, sign):
        check_same_grid(self, other)
        derivative = None
        if self.derivative is not None and other.derivative is not None:
            derivative = self.derivative + sign * other.derivative
        return RadialFunction(self.grid, self.values + sign * other.values, derivative)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        derivative = None if self.derivative is None else scalar * self.derivative
        return RadialFunction(self.grid, scalar * self.values, derivative)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    @cached_property
    def interpolant(self):
        if self.derivative is not None:
            return CubicHermiteSpline(self.grid.nodes, self.values, self.derivative)
        return CubicSpline(self.grid.nodes, self.values)

    def differentiated(self):
        """Derivative samples: stored ones if present, else 7-point differences."""

        if self.derivative is not None:
            return self.derivative
        return self.grid.D1 @ self.values


##############################################################################
# Envelopes


def power_envelope(r, e0, e_inf, rate=0.0):
    """g = r**e0 (1 + r**2)**((e_inf - e0)/2) exp(rate sqrt(1 + r**2)).

    Returns (g, a, a') with a = g'/g, all in closed form. Dividing a
    solution by its envelope leaves a slowly varying factor that finite
    differences resolve at every radius.
    """

    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    s = np.sqrt(q)
    half = 0.5 * (e_inf - e0)
    g = np.exp(e0 * np.log(r) + half * np.log(q) + rate * s)
    a = e0 / r + 2 * half * r / q + rate * r / s
    da = -e0 / r**2 + 2 * half * (1 - r * r) / q**2 + rate / (s * q)
    return g, a, da


def enveloped_derivative(grid, values, envelope):
    """d/dr of samples that follow `envelope`, differencing only values / g."""

    g, a = envelope[0], envelope[1]
    u = values / g
    return g * (a * u + grid.D1 @ u)


def check_same_grid(*funcs):
    """Raise GridMismatchError unless all functions share one grid."""

    first = funcs[0].grid
    for f in funcs[1:]:
        if f.grid is first:
            continue
        if f.grid.size != first.size or not np.array_equal(f.grid.nodes, first.nodes):
            raise GridMismatchError("radial functions live on different grids",
                                    sizes=(first.size, f.grid.size))
    return first


##############################################################################
# Quadrature


@dataclass(frozen=True)
class Decay:
    """Declared large-r decay of an integrand.

    kind "exp": g ~ s**power * exp(-rate*s); kind "power": g ~ s**(-rate).
    """

    kind: str
    rate: float
    power: float = 0.0

    def __post_init__(self):
        if self.kind not in ("exp", "power"):
            raise ConfigurationError("decay kind must be 'exp' or 'power'",
                                     kind=self.kind)
        if self.kind == "exp" and self.rate <= 0:
            raise ConfigurationError("exponential rate must be positive",
                                     rate=self.rate)
        if self.kind == "power" and self.rate <= 1:
            raise ConfigurationError("power decay must be faster than 1/s",
                                     rate=self.rate)

    @classmethod
    def exponential(cls, rate=SQRT2, power=0.0):
        return cls("exp", rate, power)

    @classmethod
    def algebraic(cls, exponent):
        return cls("power", exponent)

    def tail(self, g_end, R):
        """Integral from R to infinity of the declared model through g_end."""

        if self.kind == "exp":
            return g_end / (self.rate - self.power / R)
        return g_end * R / (self.rate - 1.0)

    def expected_slope(self, R):
        """d log|g| / ds (exp) or d log|g| / d log s (power) at R."""

        if self.kind == "exp":
            return -self.rate + self.power / R
        return -self.rate


def _integrand(f, weight):
    if weight is None:
        return f.values
    check_same_grid(f, weight)
    return f.values * weight.values


def head_exponent_estimate(grid, g, nodes=HEAD_FIT_NODES):
    """Power-law exponent of g at r_min, fitted over the first few nodes.

    Returns 0 when the samples vanish, change sign, or do not follow a
    power law to within HEAD_FIT_TOL in log|g|.
    """

    head = np.asarray(g[:nodes], dtype=float)
    if np.any(head == 0) or np.any(np.sign(head) != np.sign(head[0])):
        return 0.0
    x = np.log(grid.nodes[:nodes])
    y = np.log(abs(head))
    slope, intercept = np.polyfit(x, y, 1)
    if np.max(abs(y - (slope * x + intercept))) > HEAD_FIT_TOL:
        logger.debug("integrand head is not a power law; using exponent 0")
        return 0.0
    return float(slope)


def _head(grid, g, head_exponent):
    if head_exponent is None:
        head_exponent = head_exponent_estimate(grid, g)
    if head_exponent <= -1:
        raise DomainError("integrand not integrable at 0",
                          head_exponent=head_exponent)
    return g[0] * grid.r_min / (head_exponent + 1.0)


def cumulative_array(grid, g, head_exponent=None):
    """Array form of cumulative_integral for integrand samples g."""

    if not np.all(np.isfinite(g)):
        raise DataError("integrand has non-finite values")
    pieces = grid.interval_weights @ g
    out = np.empty(grid.size)
    out[0] = _head(grid, g, head_exponent)
    out[1:] = out[0] + np.cumsum(pieces)
    return out


def tail_array(grid, g, decay):
    """Array form of tail_integral; returns (values, note or None)."""

    if not np.all(np.isfinite(g)):
        raise DataError("integrand has non-finite values")
    pieces = grid.interval_weights @ g
    R = grid.r_max
    note = _tail_mismatch(grid, g, decay)
    out = np.empty(grid.size)
    out[-1] = decay.tail(g[-1], R)
    out[:-1] = out[-1] + np.cumsum(pieces[::-1])[::-1]
    return out, note


def _tail_mismatch(grid, g, decay):
    """Compare the measured end slope with the declared decay."""

    a, b = g[-4], g[-1]
    if a == 0 or b == 0 or np.sign(a) != np.sign(b):
        return None
    ra, rb = grid.nodes[-4], grid.nodes[-1]
    if decay.kind == "exp":
        measured = math.log(b / a) / (rb - ra)
    else:
        measured = math.log(b / a) / math.log(rb / ra)
    expected = decay.expected_slope(rb)
    if abs(measured - expected) <= TAIL_MISMATCH * abs(expected):
        return None
    note = (f"tail mismatch: measured slope {measured:.4g}, "
            f"declared {expected:.4g}")
    logger.warning(note)
    return note


def cumulative_integral(f, weight=None, head_exponent=None):
    """F(r) = integral from 0 to r of f*weight.

    The [0, r_min] head uses the declared power exponent of the integrand,
    or the exponent fitted over the first few nodes.
    """

    grid = f.grid
    g = _integrand(f, weight)
    return RadialFunction(grid, cumulative_array(grid, g, head_exponent), g)


def tail_integral(f, weight=None, decay=Decay.exponential()):
    """F(r) = integral from r to infinity of f*weight.

    Beyond r_max the integrand follows `decay`. A mismatch between declared
    and measured decay is logged and recorded in the result's notes.
    """

    grid = f.grid
    g = _integrand(f, weight)
    values, note = tail_array(grid, g, decay)
    notes = () if note is None else (note,)
    return RadialFunction(grid, values, -g, notes)


def definite_integral(grid, g, head_exponent=None, decay=None):
    """Integral of samples g over [0, r_max], plus the tail if `decay` is given."""

    total = cumulative_array(grid, g, head_exponent)[-1]
    if decay is not None:
        total += decay.tail(g[-1], grid.r_max)
    return float(total)


##############################################################################
# Interpolation


def interp_eval(f, r):
    """Evaluate f at r (scalar or array) by cubic interpolation.

    Hermite cubics when derivatives are stored, not-a-knot splines otherwise.
    Outside the grid the attached extension is used, if any.
    """

    r_arr = np.asarray(r, dtype=float)
    inside = f.grid.contains(r_arr)
    if not np.all(inside) and f.extension is None:
        raise ExtrapolationError("radius outside grid and no extension attached",
                                 r_min=f.grid.r_min, r_max=f.grid.r_max)

    clipped = np.clip(r_arr, f.grid.r_min, f.grid.r_max)
    out = np.asarray(f.interpolant(clipped), dtype=float)
    if not np.all(inside):
        out = np.where(inside, out, f.extension(r_arr))
    return float(out) if out.ndim == 0 else out


##############################################################################
# CSV tables


def write_table(path, columns):
    """Write named equal-length columns to CSV with 17 significant digits."""

    names = list(columns)
    arrays = [np.asarray(columns[name], dtype=float) for name in names]
    with open(path, 'w', newline='') as out:
        writer = csv.DictWriter(out, fieldnames=names)
        writer.writeheader()
        for row in zip(*arrays):
            writer.writerow({name: f"{val:.17g}" for name, val in zip(names, row)})


def read_table(path, required=()):
    """Read a CSV written by write_table into a dict of float arrays."""

    try:
        with open(path, newline='') as src:
            reader = csv.DictReader(src)
            fieldnames = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise DataError("cannot read table", path=str(path), reason=str(exc)) from exc

    missing = [name for name in required if name not in fieldnames]
    if missing:
        raise DataError("table lacks required columns", path=str(path),
                        missing=missing)
    try:
        table = {name: np.array([float(row[name]) for row in rows])
                 for name in fieldnames}
    except (TypeError, ValueError) as exc:
        raise DataError("table has non-numeric entries", path=str(path)) from exc
    for name, col in table.items():
        if not np.all(np.isfinite(col)):
            raise DataError("table has non-finite entries", path=str(path),
                            column=name)
    return table
