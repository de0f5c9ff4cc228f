"""Per-mode inversion by variation of parameters.

With a symplectically normalized basis (Omega(z_1, z_2) = Omega(z_3, z_4) = 1)
the coefficients of psi = sum c_j z_j satisfy c_1' = f.z_2, c_2' = -f.z_1,
c_3' = f.z_4, c_4' = -f.z_3 with f = w**2 r h. The lower limits of the
antiderivatives select the decaying particular solution.
"""

import logging
import math

import numpy as np

from errors import ConfigurationError, DegenerateModeError, PreconditionError
from homogeneous import EDGE_NODES, ModeSystem, leading_power
from models import EstimateReport, ModePair, ModeSolution, NormReport
from numerics import (
    SQRT2,
    Decay,
    RadialFunction,
    cumulative_array,
    definite_integral,
    interp_eval,
    tail_array,
)

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
ORTH_TOL = 1e-6
NORM_SPLIT = 2.0
DEGENERACY_COND = 1e12

GROWTH_WINDOW = (10.0, 36.0)
SMALL_R_WINDOW = (1e-3, 1e-2)


##############################################################################
# Helpers


def _weight(profile, grid):
    """w**2 r on `grid` (a prefix of the profile grid or the grid itself)."""

    w = interp_eval(profile.w, grid.nodes)
    return w * w * grid.nodes


def _dot(h, z):
    return h.first.values * z.first.values + h.second.values * z.second.values


def _exp_decay(rhs):
    return Decay.exponential(SQRT2, 0.5 - rhs.decay_exponent)


def _head(rhs, basis, j):
    """Small-r exponent of w**2 r h.z_j from the declared exponent of h."""

    return 3.0 + rhs.head_exponent + leading_power(basis.k, basis.tags[j - 1][0])


def _first_family(pair, l):
    """Map a pair of parity family l onto the first family (an involution)."""

    return pair if l in (None, 1) else pair.flipped()


def _combine(grid, coefficients, basis):
    """sum c_j z_j and sum c_j z_j' as a ModePair."""

    values = np.zeros((2, grid.size))
    derivs = np.zeros((2, grid.size))
    for c, z in zip(coefficients, basis.solutions):
        values += c * z.values
        derivs += c * z.derivatives
    return ModePair.from_arrays(grid, values, derivs)


##############################################################################
# Mode 0


def solve_mode0(profile, kernel0, rhs, tol=RESIDUAL_TOL):
    """Mode 0: psi_1 by the explicit double integral, psi_2 by two kernels.

    psi_1 = int_0^r (w^2 s)^-1 int_0^s w^2 t h_1 dt ds
    psi_2 = -z_10 int_r^inf w^2 s h_2 z_20 - z_20 int_0^r w^2 s h_2 z_10
    """

    if rhs.k != 0 or kernel0.k != 0:
        raise ConfigurationError("solve_mode0 needs mode-0 data", k=rhs.k)
    grid = profile.grid
    weight = _weight(profile, grid)
    h1, h2 = rhs.h.first.values, rhs.h.second.values

    e_h = rhs.head_exponent
    inner = cumulative_array(grid, weight * h1, head_exponent=3.0 + e_h)
    dpsi1 = inner / weight
    psi1 = cumulative_array(grid, dpsi1, head_exponent=1.0 + e_h)

    z10, z20 = kernel0[1].second, kernel0[2].second
    tail, note = tail_array(grid, weight * h2 * z20.values, _exp_decay(rhs))
    head = cumulative_array(grid, weight * h2 * z10.values, _head(rhs, kernel0, 1))
    psi2 = -z10.values * tail - z20.values * head
    dpsi2 = -z10.derivative * tail - z20.derivative * head

    psi = ModePair(RadialFunction(grid, psi1, dpsi1), RadialFunction(grid, psi2, dpsi2))
    notes = [] if note is None else [note]
    return _finish(profile, rhs, psi, tol, notes=notes)


##############################################################################
# Modes k >= 1


def orthogonality_integral(profile, basis, rhs):
    """int_0^inf w^2 s h.z_11 ds, the mode-1 image of <h, dW/dx_2> (l=1)
    or <h, dW/dx_1> (l=2), up to a positive factor."""

    if basis.k != 1 or rhs.k != 1:
        raise ConfigurationError("orthogonality integral is a mode-1 quantity",
                                 k=rhs.k)
    grid = profile.grid
    g = _weight(profile, grid) * _dot(_first_family(rhs.h, rhs.l), basis[1])
    return definite_integral(grid, g, head_exponent=_head(rhs, basis, 1),
                             decay=Decay.algebraic(2.0 + rhs.decay_exponent))


def _four_term(profile, basis, rhs, decaying_second):
    """Coefficient arrays (c_1, c_2, c_3, c_4) and tail notes."""

    grid = profile.grid
    k = basis.k
    h = _first_family(rhs.h, rhs.l)
    f = _weight(profile, grid)
    notes = []

    c1 = cumulative_array(grid, f * _dot(h, basis[2]), _head(rhs, basis, 2))
    if decaying_second:
        decay = Decay.algebraic(k + 1.0 + rhs.decay_exponent if k > 1
                                else 2.0 + rhs.decay_exponent)
        c2, note = tail_array(grid, f * _dot(h, basis[1]), decay)
        notes.append(note)
    else:
        c2 = -cumulative_array(grid, f * _dot(h, basis[1]), _head(rhs, basis, 1))
    tail3, note = tail_array(grid, f * _dot(h, basis[4]), _exp_decay(rhs))
    notes.append(note)
    c3 = -tail3
    c4 = -cumulative_array(grid, f * _dot(h, basis[3]), _head(rhs, basis, 3))
    return (c1, c2, c3, c4), [n for n in notes if n]


def solve_mode1(profile, basis, rhs, assume_orthogonal=False, tol=RESIDUAL_TOL,
                orth_tol=ORTH_TOL):
    """Mode 1 representation formula.

    Without orthogonality the z_21 coefficient is -int_0^r, and psi_1 may
    grow linearly. With it, the coefficient becomes +int_r^inf.
    """

    if basis.k != 1 or rhs.k != 1:
        raise ConfigurationError("solve_mode1 needs mode-1 data", k=rhs.k)

    orth = orthogonality_integral(profile, basis, rhs)
    if assume_orthogonal:
        scale = mode_norm_dstar(profile, rhs.h).total
        if abs(orth) > orth_tol * max(scale, 1e-300):
            raise PreconditionError("right-hand side is not orthogonal to the mode-1 kernel",
                                    integral=orth, scale=scale)

    coefficients, notes = _four_term(profile, basis, rhs, assume_orthogonal)
    psi = _first_family(_combine(profile.grid, coefficients, basis), rhs.l)
    return _finish(profile, rhs, psi, tol, notes=notes, orthogonality=orth,
                   assume_orthogonal=assume_orthogonal)


def solve_mode_k(profile, basis, rhs, tol=RESIDUAL_TOL):
    """Representation formula for k >= 2 (limits (0,r), (r,inf), (r,inf), (0,r))."""

    if basis.k < 2 or rhs.k != basis.k:
        raise ConfigurationError("solve_mode_k needs k >= 2 and matching data",
                                 k=rhs.k, basis_k=basis.k)
    coefficients, notes = _four_term(profile, basis, rhs, True)
    psi = _first_family(_combine(profile.grid, coefficients, basis), rhs.l)
    return _finish(profile, rhs, psi, tol, notes=notes)


def solve_mode(profile, basis, rhs, assume_orthogonal=False, tol=RESIDUAL_TOL):
    """Dispatch on the mode number."""

    if rhs.k != basis.k:
        raise ConfigurationError("kernel and data belong to different modes",
                                 k=rhs.k, basis_k=basis.k)
    if rhs.k == 0:
        return solve_mode0(profile, basis, rhs, tol)
    if rhs.k == 1:
        return solve_mode1(profile, basis, rhs, assume_orthogonal, tol)
    return solve_mode_k(profile, basis, rhs, tol)


def _finish(profile, rhs, psi, tol, notes=(), **extra):
    solution = ModeSolution(rhs.k, rhs.l, psi)
    residual = mode_residual(profile, solution, rhs)
    r = psi.grid.nodes
    diagnostics = dict(
        residual=residual,
        residual_ok=residual <= tol,
        growth_first=growth_exponent(psi.first.values, r),
        growth_second=growth_exponent(psi.second.values, r),
        small_r_exponent=small_r_exponent(psi, r),
        notes=list(notes),
        **extra,
    )
    if residual > tol:
        logger.warning("mode %d residual %.2e above tolerance %.1e", rhs.k, residual, tol)
    else:
        logger.debug("mode %d solved, residual %.2e", rhs.k, residual)
    return ModeSolution(rhs.k, rhs.l, psi, diagnostics)


##############################################################################
# Residual


def mode_residual(profile, sol, rhs):
    """sup |system(psi) - h| relative to max(1, |h|, operator term size).

    Second derivatives come from differentiating the stored psi'.
    Interior nodes only.
    """

    if sol.k != rhs.k or sol.l != rhs.l:
        raise ConfigurationError("solution and data belong to different families",
                                 k=(sol.k, rhs.k), l=(sol.l, rhs.l))
    psi = _first_family(sol.psi, sol.l)
    h = _first_family(rhs.h, rhs.l)
    grid = psi.grid
    n = grid.size
    values = psi.values
    derivs = psi.derivatives
    second = np.vstack([grid.D1 @ derivs[0], grid.D1 @ derivs[1]])
    system = ModeSystem(profile, sol.k)
    result, scale = system.apply(values, derivs, second)
    target = h.values[:, :n]
    denom = np.maximum(np.maximum(1.0, abs(target)), scale)
    inner = slice(EDGE_NODES, n - EDGE_NODES)
    return float(np.max(abs(result - target)[:, inner] / denom[:, inner]))


def apply_mode_operator(profile, k, values, derivs, second):
    """phi'' + p phi' - M phi / r^2 for analytic samples on the profile grid."""

    return ModeSystem(profile, k).apply(values, derivs, second)[0]


##############################################################################
# Dirichlet problem on [0, R]


def restrict(pair, grid):
    """Restrict a pair to a prefix grid."""

    n = grid.size
    return ModePair.from_arrays(grid, pair.values[:, :n], pair.derivatives[:, :n])


def _admissible(basis, grid):
    """Homogeneous solutions with phi = iW psi bounded at 0 (first family)."""

    if basis.k == 0:
        zero = np.zeros(grid.size)
        constant = ModePair.from_arrays(grid, [np.ones(grid.size), zero], [zero, zero])
        z10 = basis[1].second
        other = ModePair(RadialFunction(grid, zero, zero), z10)
        return constant, other
    if basis.k == 1:
        return basis[1], basis[3]
    return basis[2], basis[3]


def solve_mode_dirichlet(profile, basis, rhs, R, assume_orthogonal=False,
                         tol=RESIDUAL_TOL):
    """Unique solution on [0, R] with psi(R) = 0 and phi = iW psi bounded at 0."""

    grid = profile.grid
    if R > grid.r_max:
        raise ConfigurationError("Dirichlet radius beyond r_max", R=R, r_max=grid.r_max)
    particular = solve_mode(profile, basis, rhs, assume_orthogonal, tol)
    u, v = (_first_family(z, rhs.l) for z in _admissible(basis, grid))

    idx = grid.index_of(R)
    system = np.array([[u.values[0, idx], v.values[0, idx]],
                       [u.values[1, idx], v.values[1, idx]]])
    target = -particular.psi.values[:, idx]
    # columns scaled to unit norm at R
    sizes = np.linalg.norm(system, axis=0)
    if np.any(sizes == 0):
        raise DegenerateModeError("admissible solution vanishes at R", k=rhs.k, R=R)
    system = system / sizes
    if np.linalg.cond(system) > DEGENERACY_COND:
        raise DegenerateModeError("homogeneous correction system is singular",
                                  k=rhs.k, R=R)
    a, b = np.linalg.solve(system, target) / sizes

    full = particular.psi + u.scaled(a) + v.scaled(b)
    truncated = grid.truncated(R)
    psi = restrict(full, truncated)
    boundary = float(np.max(abs(psi.values[:, -1])))
    solution = ModeSolution(rhs.k, rhs.l, psi)
    residual = mode_residual(profile, solution, rhs)
    diagnostics = dict(
        particular.diagnostics,
        residual=residual,
        residual_ok=residual <= tol,
        R=float(truncated.r_max),
        boundary_value=boundary,
        correction=(float(a), float(b)),
    )
    return ModeSolution(rhs.k, rhs.l, psi, diagnostics)


##############################################################################
# Gauge and kernel projection


def gauge_fix(profile, sol, basis, radius=2.0):
    """Remove the z_11 component measured at `radius` (mode 1 only).

    The component is Omega(psi, z_21) at that radius.
    """

    if basis.k != 1:
        return sol
    psi = _first_family(sol.psi, sol.l)
    idx = psi.grid.index_of(radius)
    n = psi.grid.size
    z1 = restrict(basis[1], psi.grid) if n < basis.grid.size else basis[1]
    z2 = restrict(basis[2], psi.grid) if n < basis.grid.size else basis[2]
    w = interp_eval(profile.w, psi.grid.nodes[idx])
    r = psi.grid.nodes[idx]
    omega = w * w * r * float(np.dot(psi.derivatives[:, idx], z2.values[:, idx])
                              - np.dot(psi.values[:, idx], z2.derivatives[:, idx]))
    fixed = _first_family(psi - z1.scaled(omega), sol.l)
    return ModeSolution(sol.k, sol.l, fixed, dict(sol.diagnostics, gauge_component=omega))


def kernel_projected_error(solution, exact, basis, radii=(2.0, 4.0)):
    """Max relative difference after removing the mode-1 gauge components.

    For mode 1 the z_11 and z_21 components are fitted by least squares at
    `radii` and subtracted; they carry the gauge freedom of that mode.
    """

    psi = _first_family(solution.psi, solution.l)
    target = exact if solution.l in (None, 1) else exact.flipped()
    diff = psi.values - target.values
    if basis.k == 1:
        n = psi.grid.size
        kernel = [basis[1].values[:, :n], basis[2].values[:, :n]]
        idx = [psi.grid.index_of(r) for r in radii]
        design = np.column_stack([z[:, idx].reshape(-1) for z in kernel])
        coef = np.linalg.lstsq(design, diff[:, idx].reshape(-1), rcond=None)[0]
        diff = diff - coef[0] * kernel[0] - coef[1] * kernel[1]
    scale = max(float(np.max(abs(target.values))), 1e-300)
    return float(np.max(abs(diff)) / scale)


##############################################################################
# Weighted norms and estimates


def mode_norm_star(pair):
    """sup_{r<=2} |psi| + sup_{r>=2} |psi_1|/(log r)^2 + sup_{r>=2} |psi_2|."""

    r = pair.grid.nodes
    inside = r <= NORM_SPLIT
    outside = r >= NORM_SPLIT
    modulus = np.hypot(pair.first.values, pair.second.values)
    inner = float(modulus[inside].max()) if inside.any() else 0.0
    if not outside.any():
        return NormReport(inner, 0.0, 0.0)
    log_r = np.log(r[outside])
    return NormReport(inner,
                      float(np.max(abs(pair.first.values[outside]) / log_r**2)),
                      float(np.max(abs(pair.second.values[outside]))))


def mode_norm_dstar(profile, pair):
    """sup_{r<=2} w|h| + sup_{r>=2} r^2 |h_1| + sup_{r>=2} |h_2|."""

    r = pair.grid.nodes
    inside = r <= NORM_SPLIT
    outside = r >= NORM_SPLIT
    w = interp_eval(profile.w, r)
    modulus = w * np.hypot(pair.first.values, pair.second.values)
    inner = float(modulus[inside].max()) if inside.any() else 0.0
    if not outside.any():
        return NormReport(inner, 0.0, 0.0)
    return NormReport(inner,
                      float(np.max(r[outside] ** 2 * abs(pair.first.values[outside]))),
                      float(np.max(abs(pair.second.values[outside]))))


def estimate_report(profile, sol, rhs):
    star = mode_norm_star(sol.psi)
    dstar = mode_norm_dstar(profile, rhs.h)
    return EstimateReport(star.total, dstar.total, star, dstar,
                          residual=sol.diagnostics.get('residual', 0.0))


def _window_sup(values, r, hi):
    mask = (r >= 0.8 * hi) & (r <= hi)
    return float(np.max(abs(values[mask]))) if mask.any() else 0.0


def growth_exponent(values, r, window=GROWTH_WINDOW):
    """Large-r growth exponent from sups over two windows."""

    lo, hi = window[0], min(window[1], r[-1])
    a, b = _window_sup(values, r, lo), _window_sup(values, r, hi)
    if a == 0 or b == 0 or hi <= lo:
        return 0.0
    return math.log(b / a) / math.log(hi / lo)


def small_r_exponent(pair, r, window=SMALL_R_WINDOW, log_allowance=False):
    """Small-r exponent of |psi|, optionally of |psi| / |log r|."""

    modulus = np.hypot(pair.first.values, pair.second.values)
    if log_allowance:
        modulus = modulus / abs(np.log(r))
    lo, hi = window
    a, b = _window_sup(modulus, r, lo), _window_sup(modulus, r, hi)
    if a == 0 or b == 0:
        return float('inf')
    return math.log(b / a) / math.log(hi / lo)


def outer_estimate_ratio(profile, basis, rhs, rho, R):
    """sup_{[rho,R]} |psi| / (sup_{r=rho} |psi| + sup r^2|h_1| + sup |h_2|)

    for the Dirichlet solution on [0, R].
    """

    sol = solve_mode_dirichlet(profile, basis, rhs, R)
    r = sol.grid.nodes
    region = r >= rho
    psi = sol.psi
    modulus = np.maximum(abs(psi.first.values), abs(psi.second.values))
    idx = sol.grid.index_of(rho)
    h = rhs.h
    n = sol.grid.size
    bound = (modulus[idx]
             + np.max(r[region] ** 2 * abs(h.first.values[:n][region]))
             + np.max(abs(h.second.values[:n][region])))
    return float(np.max(modulus[region]) / bound) if bound > 0 else 0.0


def uniform_in_R(profile, basis, rhs, radii=(10.0, 20.0, 40.0)):
    """sup |psi| of the Dirichlet solutions for each R and their relative spread."""

    sups = [solve_mode_dirichlet(profile, basis, rhs, R).psi.sup() for R in radii]
    spread = (max(sups) - min(sups)) / max(sups) if max(sups) > 0 else 0.0
    return dict(radii=list(radii), sups=sups, spread=spread)
