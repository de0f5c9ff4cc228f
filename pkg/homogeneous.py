"""Homogeneous solutions of the per-mode radial systems.

For mode k and the first parity family the system reads

    phi'' + p phi' - M phi / r**2 = 0,   p = 2 w'/w + 1/r,
    M = [[k**2, 2k], [2k, k**2 + 2 w**2 r**2]],

and mode 0 is the k = 0 case, whose second component decouples. The
bilinear form Omega(u, v) = w**2 r (u'.v - u.v') is constant on pairs of
solutions; bases are normalized so that Omega(z_1, z_2) = Omega(z_3, z_4) = 1.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import spsolve
from scipy.special import ive, kve

from errors import (
    ConfigurationError,
    ConvergenceError,
    KernelIntegrityError,
    LinearAlgebraError,
    SignViolationError,
)
from models import KernelBasis, ModePair
from numerics import (
    SQRT2,
    RadialFunction,
    cumulative_integral,
    enveloped_derivative,
    interp_eval,
    power_envelope,
)
from profile_solver import second_derivative

logger = logging.getLogger(__name__)

ZERO_TAGS = ("bounded-at-0", "log-at-0", "regular-growth-at-0", "singular-at-0")
INFINITY_TAGS = ("poly-decay-at-inf", "poly-growth-at-inf",
                 "exp-growth-at-inf", "exp-decay-at-inf")

BASIS_TAGS = (
    ("bounded-at-0", "poly-decay-at-inf"),
    ("log-at-0", "poly-growth-at-inf"),
    ("regular-growth-at-0", "exp-growth-at-inf"),
    ("singular-at-0", "exp-decay-at-inf"),
)
MODE0_TAGS = (("bounded-at-0", "exp-growth-at-inf"), ("singular-at-0", "exp-decay-at-inf"))

MARCH_RTOL = 1e-11
MARCH_CHUNK = 64
WRONSKIAN_TOL = 1e-4
SLOPE_TOL = 0.05
CROSS_CHECK_SPAN = (0.5, 4.0)

# nodes skipped at each end when measuring residuals
EDGE_NODES = 3


##############################################################################
# Mode system


class ModeSystem:
    """Coefficients of the mode-k system sampled from a profile."""

    def __init__(self, profile, k):
        self.profile = profile
        self.k = k

    def __repr__(self):
        return f"<ModeSystem k={self.k}>"

    def coefficients(self, r):
        """(p, w**2) at r; r may be off-grid."""

        w = interp_eval(self.profile.w, r)
        wp = interp_eval(self.profile.w_prime, r)
        return 2 * wp / w + 1 / r, w * w

    def matrix(self, r, w2):
        k = self.k
        return np.array([[k * k, 2 * k], [2 * k, k * k + 2 * w2 * r * r]])

    def rhs(self, r, y):
        """First-order form on the state (phi_1, phi_2, phi_1', phi_2')."""

        p, w2 = self.coefficients(r)
        k = self.k
        phi1, phi2, d1, d2 = y
        dd1 = -p * d1 + (k * k * phi1 + 2 * k * phi2) / (r * r)
        dd2 = -p * d2 + (2 * k * phi1 + k * k * phi2) / (r * r) + 2 * w2 * phi2
        return [d1, d2, dd1, dd2]

    def nodal(self, grid):
        """(p, w**2) at the grid nodes, from the stored profile samples."""

        w = self.profile.w.values
        wp = self.profile.w_prime.values
        return 2 * wp / w + 1 / grid.nodes, w * w

    def block_operator(self, grid, envelope=None):
        """Sparse 2n x 2n discretization acting on [phi_1; phi_2].

        With an envelope (g, a, a') the unknowns are u = phi / g and the
        rows are divided by g, so differences act on u alone.
        """

        r = grid.nodes
        p, w2 = self.nodal(grid)
        k = self.k
        if envelope is None:
            base = grid.D2 + sparse.diags(p) @ grid.D1
        else:
            _, a, da = envelope
            base = (grid.D2 + sparse.diags(2 * a + p) @ grid.D1
                    + sparse.diags(da + a * a + p * a))
        diag_11 = sparse.diags(-k * k / r**2)
        off = sparse.diags(-2 * k / r**2)
        diag_22 = sparse.diags(-k * k / r**2 - 2 * w2)
        return sparse.bmat([[base + diag_11, off], [off, base + diag_22]], format='csr')

    def apply(self, values, derivatives, second):
        """phi'' + p phi' - M phi / r**2 and the term scale, on (2, n) arrays.

        The scale sums the magnitudes of every term before cancellation.
        Arrays shorter than the profile grid live on a prefix of it.
        """

        grid = self.profile.grid
        values = np.asarray(values, dtype=float)
        n = values.shape[1]
        r = grid.nodes[:n]
        p, w2 = (c[:n] for c in self.nodal(grid))
        k = self.k
        m_phi = np.vstack([
            k * k * values[0] + 2 * k * values[1],
            2 * k * values[0] + (k * k + 2 * w2 * r * r) * values[1],
        ]) / r**2
        m_size = np.vstack([
            k * k * abs(values[0]) + 2 * k * abs(values[1]),
            2 * k * abs(values[0]) + (k * k + 2 * w2 * r * r) * abs(values[1]),
        ]) / r**2
        result = second + p * derivatives - m_phi
        scale = abs(second) + abs(p * derivatives) + m_size
        return result, scale


def homogeneous_residual(profile, k, pair, tags=None):
    """Scaled residual of a basis solution, sup over interior nodes.

    Second derivatives are obtained by differentiating the stored first
    derivatives, relative to the envelope of `tags` when given.
    """

    grid = profile.grid
    derivs = pair.derivatives
    if tags is None:
        second = np.vstack([grid.D1 @ derivs[0], grid.D1 @ derivs[1]])
    else:
        envelope = solution_envelope(k, tags, grid.nodes)
        second = np.vstack([enveloped_derivative(grid, d, envelope) for d in derivs])
    result, scale = ModeSystem(profile, k).apply(pair.values, derivs, second)
    inner = slice(EDGE_NODES, grid.size - EDGE_NODES)
    ratio = abs(result[:, inner]) / np.maximum(scale[:, inner], 1e-300)
    return float(ratio.max())


def symplectic_form(profile, u, v):
    """Omega(u, v) = w**2 r (u'.v - u.v') at every node."""

    w = profile.w.values
    r = profile.grid.nodes
    du, dv = u.derivatives, v.derivatives
    return w * w * r * np.sum(du * v.values - u.values * dv, axis=0)


def _band(grid):
    r = grid.nodes
    return (r >= 10 * grid.r_min) & (r <= 1.0)


def band_median(profile, u, v):
    return float(np.median(symplectic_form(profile, u, v)[_band(profile.grid)]))


##############################################################################
# Seeds


@dataclass(frozen=True)
class SeedTerm:
    """coef * r**power * (log r)**log_power * exp(rate * r)."""

    coef: float
    power: float
    log_power: int = 0
    rate: float = 0.0

    def value(self, r):
        return (self.coef * r**self.power * math.log(r) ** self.log_power
                * math.exp(self.rate * r))

    def derivative(self, r):
        log_r = math.log(r)
        base = self.coef * math.exp(self.rate * r)
        out = base * (self.rate * r**self.power + self.power * r**(self.power - 1)) \
            * log_r ** self.log_power
        if self.log_power:
            out += base * self.log_power * r**(self.power - 1) \
                * log_r ** (self.log_power - 1)
        return out


def _evaluate(terms, r):
    return sum(t.value(r) for t in terms), sum(t.derivative(r) for t in terms)


def _power_terms(gamma, sign):
    """r**gamma (1 + c r**2) along (1, sign), c matched at the next order."""

    if gamma == -2:
        terms = [SeedTerm(1.0, -2), SeedTerm(-0.5, 0, 1)]
    else:
        terms = [SeedTerm(1.0, gamma), SeedTerm(gamma / (8 * (gamma + 2)), gamma + 2)]
    return terms, [SeedTerm(sign * t.coef, t.power, t.log_power) for t in terms]


def zero_terms(k, branch):
    """Two-term small-r series of the four families at r = 0."""

    if k < 1:
        raise ConfigurationError("series at 0 are defined for k >= 1", k=k)
    if branch == "bounded-at-0":
        return _power_terms(-k, -1)
    if branch == "log-at-0":
        if k == 1:
            terms = [SeedTerm(1.0, -1, 1), SeedTerm(-0.125, 1, 1), SeedTerm(0.25, 1)]
            return terms, [SeedTerm(-t.coef, t.power, t.log_power) for t in terms]
        return _power_terms(k - 2, -1)
    if branch == "regular-growth-at-0":
        return _power_terms(k, 1)
    if branch == "singular-at-0":
        return _power_terms(-2 - k, 1)
    raise ConfigurationError("unknown branch at 0", branch=branch)


def infinity_terms(k, branch):
    """Two-term large-r expansions of the four families at infinity."""

    if branch in ("poly-decay-at-inf", "poly-growth-at-inf"):
        if k < 1:
            raise ConfigurationError("algebraic branches need k >= 1", k=k)
        gamma = -k if branch == "poly-decay-at-inf" else k
        if gamma == 1:
            return ([SeedTerm(1.0, 1), SeedTerm(2.0, -1, 1)],
                    [SeedTerm(-1.0, -1), SeedTerm(-1.0, -3), SeedTerm(-2.0, -3, 1)])
        c = -(gamma + k * k) / (2 * (1 - gamma))
        d1 = -k * (3 - 2 * gamma) - k * c
        return ([SeedTerm(1.0, gamma), SeedTerm(c, gamma - 2)],
                [SeedTerm(-k, gamma - 2), SeedTerm(d1, gamma - 4)])
    if branch in ("exp-growth-at-inf", "exp-decay-at-inf"):
        sigma = SQRT2 if branch == "exp-growth-at-inf" else -SQRT2
        a = (9 / 4 - k * k) / (2 * sigma)
        first = [SeedTerm(k, -2.5, 0, sigma), SeedTerm(k * (a + 2 * sigma), -3.5, 0, sigma)]
        second = [SeedTerm(1.0, -0.5, 0, sigma), SeedTerm(a, -1.5, 0, sigma)]
        return first, second
    raise ConfigurationError("unknown branch at infinity", branch=branch)


def seed_state(k, branch, r):
    """State (z_1, z_2, z_1', z_2') of a branch's expansion at radius r."""

    if branch in ZERO_TAGS:
        first, second = zero_terms(k, branch)
    else:
        first, second = infinity_terms(k, branch)
    v1, d1 = _evaluate(first, r)
    v2, d2 = _evaluate(second, r)
    return np.array([v1, v2, d1, d2])


def seed_at_zero(k, branch, profile):
    """Seed state of a small-r family at r_min."""

    if branch not in ZERO_TAGS:
        raise ConfigurationError("unknown branch at 0", branch=branch)
    return seed_state(k, branch, profile.grid.r_min)


def seed_at_infinity(k, branch, profile):
    """Seed state of a large-r family at r_max."""

    if branch not in INFINITY_TAGS:
        raise ConfigurationError("unknown branch at infinity", branch=branch)
    if k < 1:
        raise ConfigurationError("seed_at_infinity needs k >= 1", k=k)
    return seed_state(k, branch, profile.grid.r_max)


def model_log_slope(k, branch, r_a, r_b):
    """d log|z| / d log r of a branch's large- or small-r model between two radii.

    For k >= 2 the exponential branches follow modified Bessel functions of
    order sqrt(k**2 - 2) in sqrt2 r; the seed is their two-term expansion.
    """

    if branch in ("exp-growth-at-inf", "exp-decay-at-inf") and k >= 2:
        log_a, log_b = (_bessel_log_norm(k, branch, r) for r in (r_a, r_b))
        return (log_b - log_a) / math.log(r_b / r_a)
    norm_a = np.hypot(*seed_state(k, branch, r_a)[:2])
    norm_b = np.hypot(*seed_state(k, branch, r_b)[:2])
    return math.log(norm_b / norm_a) / math.log(r_b / r_a)


def _bessel_log_norm(k, branch, r):
    """log of |(k/r**2, 1)| B(sqrt2 r), B = I or K of order sqrt(k**2 - 2)."""

    nu = math.sqrt(k * k - 2.0)
    x = SQRT2 * r
    if branch == "exp-growth-at-inf":
        log_b = math.log(ive(nu, x)) + x
    else:
        log_b = math.log(kve(nu, x)) - x
    return log_b + 0.5 * math.log1p((k / (r * r)) ** 2)


def leading_power(k, tag):
    """Power of r that a branch follows at its end (exp branches: r**-0.5)."""

    powers = {
        "bounded-at-0": -k,
        "log-at-0": k - 2,
        "regular-growth-at-0": k,
        "singular-at-0": -2 - k,
        "poly-decay-at-inf": -k,
        "poly-growth-at-inf": k,
        "exp-growth-at-inf": -0.5,
        "exp-decay-at-inf": -0.5,
    }
    if tag not in powers:
        raise ConfigurationError("unknown branch", branch=tag)
    return float(powers[tag])


def solution_envelope(k, tags, r):
    """power_envelope matching a solution's (tag at 0, tag at infinity)."""

    tag0, tag_inf = tags
    rate = {"exp-growth-at-inf": SQRT2, "exp-decay-at-inf": -SQRT2}.get(tag_inf, 0.0)
    return power_envelope(r, leading_power(k, tag0), leading_power(k, tag_inf), rate)


##############################################################################
# Marching


def march(system, radii, y0, rtol=MARCH_RTOL, chunk=MARCH_CHUNK):
    """Integrate the first-order system through `radii` (in marching order).

    The state is renormalized at the start of every chunk, so amplitudes
    spanning many decades keep full relative accuracy.
    """

    radii = np.asarray(radii, dtype=float)
    out = np.empty((radii.size, 4))
    out[0] = y0
    y = np.asarray(y0, dtype=float)
    log_scale = 0.0
    i = 0
    while i < radii.size - 1:
        j = min(i + chunk, radii.size - 1)
        scale = np.max(abs(y))
        y = y / scale
        log_scale += math.log(scale)
        sol = solve_ivp(system.rhs, (radii[i], radii[j]), y, method='DOP853',
                        t_eval=radii[i:j + 1], rtol=rtol, atol=rtol * 1e-3)
        if not sol.success:
            raise ConvergenceError("marching failed", k=system.k, r=radii[i],
                                   reason=sol.message)
        out[i:j + 1] = sol.y.T * math.exp(log_scale)
        y = sol.y[:, -1]
        i = j
    return out


def _pair_from_states(grid, states):
    return ModePair.from_arrays(grid, states[:, :2].T, states[:, 2:].T)


def march_outward(profile, k, branch):
    grid = profile.grid
    states = march(ModeSystem(profile, k), grid.nodes, seed_at_zero(k, branch, profile))
    return _pair_from_states(grid, states)


def march_inward(profile, k, branch):
    grid = profile.grid
    y0 = seed_state(k, branch, grid.r_max)
    states = march(ModeSystem(profile, k), grid.nodes[::-1], y0)
    return _pair_from_states(grid, states[::-1])


##############################################################################
# Collocation for the algebraic solutions


def _seed_matrix(k, branches, r, scaled):
    """Columns are branch states, (phi, r phi') if scaled, unit norm."""

    cols = np.column_stack([seed_state(k, b, r) for b in branches])
    if scaled:
        cols[2:] *= r
    norms = np.linalg.norm(cols, axis=0)
    return cols / norms, norms


def _state_rows(grid, index, envelope, scaled):
    """4 x 2n sparse rows mapping enveloped unknowns to the state at a node."""

    n = grid.size
    g, a = envelope[0][index], envelope[1][index]
    r = grid.nodes[index]
    d_row = g * grid.D1[index].toarray().ravel()
    d_row[index] += g * a
    if scaled:
        d_row = d_row * r
    rows = np.zeros((4, 2 * n))
    rows[0, index] = g
    rows[1, n + index] = g
    rows[2, :n] = d_row
    rows[3, n:] = d_row
    return rows


def algebraic_solution(profile, k, which):
    """z_1 (poly-decay) or z_2 (poly-growth) by global collocation.

    The unknowns are the solution divided by its closed-form envelope.
    Boundary rows impose series conditions at r_min and suppress the
    exp-growth (and, for z_1, poly-growth) directions at r_max.
    """

    grid = profile.grid
    r = grid.nodes
    n = grid.size
    envelope = solution_envelope(k, BASIS_TAGS[which - 1], r)
    g, a = envelope[0], envelope[1]
    op = sparse.diags(np.concatenate([r * r, r * r])) \
        @ ModeSystem(profile, k).block_operator(grid, envelope)

    inv0 = np.linalg.inv(_seed_matrix(k, ZERO_TAGS, r[0], True)[0])
    seeds_inf, norms_inf = _seed_matrix(k, INFINITY_TAGS, r[-1], False)
    inv_inf = np.linalg.inv(seeds_inf)
    at_zero = inv0 @ _state_rows(grid, 0, envelope, True)
    at_inf = inv_inf @ _state_rows(grid, n - 1, envelope, False)

    pd, pg, eg, _ = range(4)
    if which == 1:
        conditions = [(at_zero[3], 0.0), (at_inf[eg], 0.0), (at_inf[pg], 0.0),
                      (at_inf[pd], norms_inf[pd])]
    else:
        conditions = [(at_zero[0], 0.0), (at_zero[3], 0.0), (at_inf[eg], 0.0),
                      (at_inf[pg], norms_inf[pg])]

    replaced = [0, n - 1, n, 2 * n - 1]
    keep = np.ones(2 * n)
    keep[replaced] = 0.0
    bc = np.zeros((4, 2 * n))
    rhs = np.zeros(2 * n)
    for slot, ((row, value), target) in enumerate(zip(conditions, replaced)):
        size = np.max(abs(row))
        bc[slot] = row / size
        rhs[target] = value / size
    placement = sparse.csr_matrix((np.ones(4), (replaced, range(4))), shape=(2 * n, 4))
    system = (sparse.diags(keep) @ op + placement @ sparse.csr_matrix(bc)).tocsc()

    u = spsolve(system, rhs)
    if not np.all(np.isfinite(u)):
        raise LinearAlgebraError("collocation system is singular", k=k, which=which)
    u = np.vstack([u[:n], u[n:]])
    values = g * u
    derivs = g * (a * u + np.vstack([grid.D1 @ u[0], grid.D1 @ u[1]]))
    return ModePair.from_arrays(grid, values, derivs)


def explicit_mode1(profile):
    """z_11 = (1/r, -w'/w)."""

    grid = profile.grid
    r = grid.nodes
    w = profile.w.values
    wp = profile.w_prime.values
    wpp = second_derivative(r, w, wp)
    values = np.vstack([1 / r, -wp / w])
    derivs = np.vstack([-1 / r**2, -(wpp * w - wp * wp) / (w * w)])
    return ModePair.from_arrays(grid, values, derivs)


##############################################################################
# Basis construction


def _check_positive(pair, name, k):
    if np.any(pair.first.values <= 0) or np.any(pair.second.values <= 0):
        raise SignViolationError(f"{name} changes sign", k=k)


def build_mode0_kernel(profile):
    """(z_10, z_20) for the decoupled second equation of mode 0.

    z_20 decays like r**-0.5 exp(-sqrt2 r) and is marched inward. z_10 is
    marched outward from its series 1 + alpha**2 r**4 / 12 and scaled so
    that Omega(z_10, z_20) = 1. The quadrature form
    z_10 = z_20 * integral ds / (w**2 z_20**2 s) is kept as a cross-check.
    """

    grid = profile.grid
    r = grid.nodes
    second = march_inward_scalar(profile)
    z20 = second.values
    if np.any(z20 == 0) or np.any(np.sign(z20) != np.sign(z20[-1])):
        raise SignViolationError("z_20 vanishes", k=0)
    z20 = z20 * np.sign(z20[-1])
    z20p = second.derivative * np.sign(second.values[-1])

    first = march_outward_scalar(profile)
    zero = np.zeros(grid.size)
    z1 = ModePair.from_arrays(grid, [zero, first.values], [zero, first.derivative])
    z2 = ModePair.from_arrays(grid, [zero, z20], [zero, z20p])
    kappa = band_median(profile, z1, z2)
    if kappa <= 0:
        raise KernelIntegrityError("degenerate symplectic pairing", k=0, kappa=kappa)
    z1 = z1.scaled(1 / kappa)
    if np.any(z1.second.values <= 0):
        raise SignViolationError("z_10 changes sign", k=0)

    residuals = [homogeneous_residual(profile, 0, z, tags)
                 for z, tags in zip((z1, z2), MODE0_TAGS)]
    basis = KernelBasis(
        k=0,
        solutions=(z1, z2),
        tags=MODE0_TAGS,
        kappa=band_median(profile, z1, z2),
        diagnostics=dict(residuals=residuals,
                         kappa_marched=kappa,
                         quadrature_deviation=_quadrature_deviation(profile, z1, z20),
                         slope_zero=_log_slope(z20, r, _zero_window(grid)),
                         slope_inf=float(z20p[-1] / z20[-1])),
    )
    logger.info("mode 0 kernel: Omega(z_10, z_20)=%.8f, residuals %s",
                basis.kappa, residuals)
    return basis


def _quadrature_deviation(profile, z10, z20, span=(1.0, 10.0)):
    """Max relative gap on `span` between z_10 and z_20 * int ds / (w**2 z_20**2 s)."""

    grid = profile.grid
    r = grid.nodes
    w = profile.w.values
    density = RadialFunction(grid, 1 / (w * w * z20 * z20 * r))
    integral = cumulative_integral(density, head_exponent=1.0).values
    marched = z10.second.values
    mask = (r >= span[0]) & (r <= span[1])
    anchor = grid.index_of(span[0])
    # z_10 and the quadrature form differ by a multiple of z_20
    shift = marched[anchor] / z20[anchor] - integral[anchor]
    quadrature = z20 * (integral + shift)
    return float(np.max(abs(quadrature[mask] - marched[mask]) / abs(marched[mask])))


def march_outward_scalar(profile):
    """z_10 (unnormalized) as a RadialFunction with derivative."""

    grid = profile.grid
    r0 = grid.r_min
    a2 = profile.alpha ** 2
    y0 = np.array([0.0, 1.0 + a2 * r0**4 / 12, 0.0, a2 * r0**3 / 3])
    states = march(ModeSystem(profile, 0), grid.nodes, y0)
    return RadialFunction(grid, states[:, 1], states[:, 3])


def march_inward_scalar(profile):
    """z_20 as a RadialFunction with derivative, from the k=0 decay seed."""

    grid = profile.grid
    y0 = seed_state(0, "exp-decay-at-inf", grid.r_max)
    y0[[0, 2]] = 0.0
    states = march(ModeSystem(profile, 0), grid.nodes[::-1], y0)[::-1]
    return RadialFunction(grid, states[:, 1], states[:, 3])


def build_kernel(profile, k):
    """Four normalized homogeneous solutions of mode k >= 1."""

    if k < 1:
        raise ConfigurationError("build_kernel needs k >= 1; use build_mode0_kernel", k=k)

    z1 = explicit_mode1(profile) if k == 1 else algebraic_solution(profile, k, 1)
    z2 = algebraic_solution(profile, k, 2)
    z3 = march_outward(profile, k, "regular-growth-at-0")
    z4 = march_inward(profile, k, "exp-decay-at-inf")
    _check_positive(z3, "z_3", k)
    _check_positive(z4, "z_4", k)

    kappa1 = band_median(profile, z1, z2)
    kappa2 = band_median(profile, z3, z4)
    if kappa2 <= 0 or kappa1 == 0:
        raise KernelIntegrityError("degenerate symplectic pairing", k=k,
                                   kappa1=kappa1, kappa2=kappa2)
    z2 = z2.scaled(1 / kappa1)
    z4 = z4.scaled(1 / kappa2)

    solutions = (z1, z2, z3, z4)
    tags = BASIS_TAGS
    defects = {
        f"omega_{i}{j}": band_median(profile, solutions[i - 1], solutions[j - 1])
        for i, j in ((1, 3), (1, 4), (2, 3), (2, 4))
    }
    diagnostics = dict(
        kappa1=kappa1,
        kappa2=kappa2,
        symplectic_defects=defects,
        residuals=[homogeneous_residual(profile, k, z, t)
                   for z, t in zip(solutions, tags)],
    )
    basis = KernelBasis(k=k, solutions=solutions, tags=tags, kappa=0.0,
                        diagnostics=diagnostics)
    kappa, deviation = wronskian_check(basis, profile)
    diagnostics.update(wronskian_deviation=deviation, exponents=measured_exponents(basis))
    basis = KernelBasis(k=k, solutions=solutions, tags=tags, kappa=kappa,
                        diagnostics=diagnostics)
    logger.info("mode %d kernel: kappa=%.8f, kappa1=%.4g, kappa2=%.4g, deviation=%.2e",
                k, kappa, kappa1, kappa2, deviation)
    return basis


def build_kernels(profile, modes, threads=1):
    """Kernels for several modes, keyed by k; built concurrently when threads > 1."""

    def build(k):
        return k, build_mode0_kernel(profile) if k == 0 else build_kernel(profile, k)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return dict(pool.map(build, modes))


##############################################################################
# Checks


def wronskian_check(basis, profile):
    """Median and max relative deviation of det A(r) w**4 r**2.

    Evaluated on the interior 90% of nodes.
    """

    if basis.k < 1:
        raise ConfigurationError("wronskian_check needs k >= 1", k=basis.k)
    grid = profile.grid
    r = grid.nodes
    w = profile.w.values
    mats = np.empty((grid.size, 4, 4))
    for j, z in enumerate(basis.solutions):
        mats[:, :2, j] = z.values.T
        mats[:, 2:, j] = (z.derivatives * r).T
    norms = np.linalg.norm(mats, axis=1)
    sign, logdet = np.linalg.slogdet(mats / norms[:, None, :])
    values = sign * np.exp(logdet + np.log(norms).sum(axis=1) + 4 * np.log(w))

    cut = max(1, int(0.05 * grid.size))
    inner = values[cut:grid.size - cut]
    kappa = float(np.median(inner))
    if kappa == 0 or not np.isfinite(kappa):
        raise KernelIntegrityError("Wronskian vanishes", k=basis.k)
    deviation = float(np.max(abs(inner / kappa - 1)))
    if deviation > WRONSKIAN_TOL:
        raise KernelIntegrityError("Wronskian is not constant", k=basis.k,
                                   deviation=deviation)
    return kappa, deviation


def _zero_window(grid):
    return 10 * grid.r_min, 100 * grid.r_min


def _inf_window(grid):
    return 0.6 * grid.r_max, 0.8 * grid.r_max


def _log_slope(values, r, window):
    a = int(np.argmin(abs(r - window[0])))
    b = int(np.argmin(abs(r - window[1])))
    return float(math.log(abs(values[b] / values[a])) / math.log(r[b] / r[a]))


def measured_exponents(basis):
    """Measured and model log-slopes of every solution at both ends."""

    grid = basis.grid
    r = grid.nodes
    report = []
    for z, (tag0, tag_inf) in zip(basis.solutions, basis.tags):
        norm = np.hypot(z.first.values, z.second.values)
        entry = {}
        for end, tag, window in (("zero", tag0, _zero_window(grid)),
                                 ("inf", tag_inf, _inf_window(grid))):
            measured = _log_slope(norm, r, window)
            ra = r[int(np.argmin(abs(r - window[0])))]
            rb = r[int(np.argmin(abs(r - window[1])))]
            model = model_log_slope(basis.k, tag, ra, rb)
            entry[end] = dict(tag=tag, measured=measured, model=model,
                              ok=abs(measured - model) <= SLOPE_TOL * max(1.0, abs(model)))
        report.append(entry)
    return report


def cross_check_mode1(profile, span=CROSS_CHECK_SPAN):
    """Max relative deviation between marched and explicit z_11 on `span`.

    The system is marched both ways from the explicit state at r = 1.
    """

    grid = profile.grid
    r = grid.nodes
    w, wp = interp_eval(profile.w, 1.0), interp_eval(profile.w_prime, 1.0)
    wpp = second_derivative(1.0, w, wp)
    y0 = np.array([1.0, -wp / w, -1.0, -(wpp * w - wp * wp) / (w * w)])
    system = ModeSystem(profile, 1)

    explicit = explicit_mode1(profile).values
    worst = 0.0
    for lo, hi, order in ((1.0, span[1], 1), (span[0], 1.0, -1)):
        mask = (r > lo) & (r <= hi) if order > 0 else (r >= lo) & (r < 1.0)
        radii = np.concatenate([[1.0], r[mask][::order]])
        states = march(system, radii, y0)[1:]
        exact = explicit[:, mask][:, ::order]
        rel = np.max(abs(states[:, :2].T - exact) / np.hypot(*exact))
        worst = max(worst, float(rel))
    return worst
