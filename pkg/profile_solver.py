"""Degree-one vortex profile.

w'' + w'/r - w/r**2 + (1 - w**2) w = 0,  w(0) = 0,  w -> 1 as r -> infinity.
"""

import logging

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import spsolve

from errors import ConfigurationError, ConvergenceError, DomainError, IntegrityError
from models import ProfileTable
from numerics import (
    SQRT2,
    RadialFunction,
    RadialGrid,
    interp_eval,
    read_table,
    write_table,
)

logger = logging.getLogger(__name__)

ALPHA_BRACKET = (0.1, 2.0)
BISECTION_TOL = 1e-10
SECANT_START = 1e-6
MAX_SECANT = 60

# shooting trajectories are trusted up to this radius
MATCH_RADIUS = 8.0
SHOOT_END = 20.0

MAX_NEWTON = 30
MAX_HALVINGS = 12


##############################################################################
# Series at both ends


def series_profile(alpha, r):
    """Small-r expansion alpha r - alpha r**3 / 8 and its derivative."""

    r = np.asarray(r, dtype=float)
    return alpha * r - alpha * r**3 / 8, alpha - 3 * alpha * r**2 / 8


def asymptotic_profile(r):
    """Large-r expansion 1 - 1/(2r^2) - 9/(8r^4) and its derivative."""

    r = np.asarray(r, dtype=float)
    return 1 - 1 / (2 * r**2) - 9 / (8 * r**4), 1 / r**3 + 9 / (2 * r**5)


def profile_rhs(r, y):
    w, wp = y
    return [wp, -wp / r + w / r**2 - (1 - w * w) * w]


def second_derivative(r, w, wp):
    """w'' from the profile equation."""

    return -wp / r + w / r**2 - (1 - w * w) * w


##############################################################################
# Shooting


def _hit_one(r, y):
    return y[0] - 1.0


_hit_one.terminal = True
_hit_one.direction = 1


def _turn_back(r, y):
    return y[1]


_turn_back.terminal = True
_turn_back.direction = -1


def shoot(alpha, r_min, r_end=SHOOT_END):
    """March the profile equation from the series seed.

    Returns (verdict, solution) where verdict is +1 if the trajectory exits
    through w = 1 (alpha too big) and -1 if it turns back (alpha too small).
    """

    w0, wp0 = series_profile(alpha, r_min)
    sol = solve_ivp(profile_rhs, (r_min, r_end), [w0, wp0], method='DOP853',
                    rtol=1e-12, atol=1e-14, events=(_hit_one, _turn_back),
                    dense_output=True)
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    w_end = sol.y[0, -1]
    return (1 if w_end > asymptotic_profile(r_end)[0] else -1), sol


def miss_distance(verdict, sol):
    """Signed estimate of alpha - alpha* from where a trajectory left (0, 1).

    A trajectory started off by d alpha departs from the profile like
    d alpha exp(sqrt2 r) / sqrt(r). It exits through w = 1 once that reaches
    1/(2r^2), and turns back once its slope reaches the profile slope 1/r^3.
    Zero when no exit happened before SHOOT_END.
    """

    if not (sol.t_events[0].size or sol.t_events[1].size):
        return 0.0
    r_x = float(sol.t[-1])
    decay = np.exp(-SQRT2 * r_x) * np.sqrt(r_x)
    if verdict > 0:
        return decay / (2 * r_x**2)
    return -decay / (SQRT2 * r_x**3)


def shoot_alpha(r_min, bracket=ALPHA_BRACKET, tol=BISECTION_TOL):
    """Bisect on alpha between trajectories that turn back and ones that overshoot,
    then refine by secant steps (Illinois rule) on `miss_distance`.

    Returns (alpha, solution of the last trajectory).
    """

    lo, hi = bracket
    v_lo, sol_lo = shoot(lo, r_min)
    v_hi, sol_hi = shoot(hi, r_min)
    if v_lo != -1 or v_hi != 1:
        raise ConfigurationError("shooting bracket does not enclose the profile slope",
                                 bracket=bracket, verdicts=(v_lo, v_hi))

    steps = 0
    while hi - lo > max(SECANT_START, tol):
        mid = 0.5 * (lo + hi)
        verdict, sol = shoot(mid, r_min)
        if verdict > 0:
            hi, sol_hi = mid, sol
        else:
            lo, sol_lo = mid, sol
        steps += 1
        logger.debug("shooting step %d: alpha in [%.12f, %.12f]", steps, lo, hi)

    f_lo, f_hi = miss_distance(-1, sol_lo), miss_distance(1, sol_hi)
    alpha, sol, side = (hi, sol_hi, 0) if f_hi == 0 else (lo, sol_lo, 0)
    for step in range(1, MAX_SECANT + 1):
        if hi - lo <= tol or f_lo == 0 or f_hi == 0:
            break
        trial = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not lo < trial < hi:
            trial = 0.5 * (lo + hi)
        verdict, sol = shoot(trial, r_min)
        f = miss_distance(verdict, sol)
        moved, alpha = abs(trial - alpha), trial
        logger.debug("secant step %d: alpha=%.14f, miss %.3e", step, alpha, f)
        if f == 0 or moved <= tol:
            break
        if verdict > 0:
            hi, f_hi = trial, f
            if side > 0:
                f_lo *= 0.5
            side = 1
        else:
            lo, f_lo = trial, f
            if side < 0:
                f_hi *= 0.5
            side = -1
    else:
        raise ConvergenceError("secant refinement of alpha did not converge",
                               bracket=(lo, hi), steps=MAX_SECANT)

    logger.info("shooting found alpha=%.12f after %d bisections and %d secant steps",
                alpha, steps, step)
    return alpha, sol


def initial_guess(grid, sol):
    """Shooting trajectory near the core, blended into the large-r expansion."""

    r = grid.nodes
    r_match = min(MATCH_RADIUS, sol.t[-1] - 1.0)
    w_far = asymptotic_profile(r)[0]
    w_near = sol.sol(np.minimum(r, r_match))[0]
    blend = np.clip(r - (r_match - 1.0), 0.0, 1.0)
    blend = blend * blend * (3 - 2 * blend)
    return (1 - blend) * w_near + blend * w_far


##############################################################################
# Newton collocation


def _residual(grid, operator, w):
    """Collocation residual with the two boundary rows."""

    r = grid.nodes
    res = operator @ w + (1 - w * w) * w
    r0 = r[0]
    slope = (grid.D1 @ w)[0]
    res[0] = w[0] - r0 * slope * (1 - r0**2 / 8) / (1 - 3 * r0**2 / 8)
    res[-1] = w[-1] - asymptotic_profile(r[-1])[0]
    return res


def _jacobian(grid, operator, w):
    r = grid.nodes
    n = grid.size
    interior = np.ones(n)
    interior[[0, -1]] = 0.0
    jac = sparse.diags(interior) @ (operator + sparse.diags(1 - 3 * w * w))

    r0 = r[0]
    robin = -r0 * (1 - r0**2 / 8) / (1 - 3 * r0**2 / 8) * grid.D1[0].toarray().ravel()
    robin[0] += 1.0
    cols = np.nonzero(robin)[0]
    rows = np.zeros(cols.size, dtype=int)
    boundary = sparse.csr_matrix(
        (np.append(robin[cols], 1.0), (np.append(rows, n - 1), np.append(cols, n - 1))),
        shape=(n, n))
    return (jac + boundary).tocsc()


def scaled_residual(grid, res):
    """|residual| / max(1, 1/r^2) on interior nodes."""

    r = grid.nodes
    return np.abs(res[1:-1]) / np.maximum(1.0, 1.0 / r[1:-1] ** 2)


def newton_polish(grid, w, tol, max_iter=MAX_NEWTON):
    """Damped Newton iteration for the collocated profile equation."""

    r = grid.nodes
    operator = grid.D2 + sparse.diags(1 / r) @ grid.D1 - sparse.diags(1 / r**2)

    res = _residual(grid, operator, w)
    err = scaled_residual(grid, res).max()
    for iteration in range(1, max_iter + 1):
        step = spsolve(_jacobian(grid, operator, w), -res)
        scale = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            trial = w + scale * step
            trial_res = _residual(grid, operator, trial)
            trial_err = scaled_residual(grid, trial_res).max()
            if trial_err < err or trial_err <= 0.1 * tol:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            if err <= tol:
                logger.debug("newton %d: no descent, keeping residual %.3e", iteration, err)
                return w, iteration - 1, err
            raise ConvergenceError("profile Newton line search stalled",
                                   residual=err, tol=tol, iteration=iteration)
        w, res, err = trial, trial_res, trial_err
        step_size = scale * np.max(abs(step))
        logger.debug("newton %d: residual %.3e, step %.3e", iteration, err, step_size)
        if err <= tol and (err <= 0.1 * tol or step_size < 1e-13):
            return w, iteration, err

    raise ConvergenceError("profile Newton iteration did not converge",
                           residual=err, tol=tol, iterations=max_iter)


##############################################################################
# Public API


def solve_profile(grid, tol=1e-10):
    """Solve for the vortex profile on `grid`.

    The slope alpha is first bracketed by shooting from the small-r series,
    then the whole profile is polished by Newton collocation with the series
    condition at r_min and the large-r expansion at r_max.
    """

    if tol < 1e-12:
        raise ConfigurationError("profile tolerance below 1e-12", tol=tol)

    _, sol = shoot_alpha(grid.r_min)
    w, iterations, err = newton_polish(grid, initial_guess(grid, sol), tol)

    table = profile_table(grid, w, grid.D1 @ w, iterations, err)
    logger.info("profile solved: alpha=%.13f, residual=%.2e, %d Newton steps",
                table.alpha, err, iterations)
    return table


def profile_table(grid, w, wp, iterations=0, residual=0.0):
    """ProfileTable from nodal w, w' with series and expansion extensions."""

    w = np.asarray(w, dtype=float)
    wp = np.asarray(wp, dtype=float)
    r = grid.nodes
    if np.any(w <= 0) or np.any(w >= 1):
        raise IntegrityError("profile leaves (0, 1)", min=w.min(), max=w.max())
    if np.any(wp <= 0):
        raise IntegrityError("profile is not increasing", min_slope=wp.min())

    r0 = r[0]
    alpha = float(w[0] / (r0 * (1 - r0**2 / 8)))
    wpp = second_derivative(r, w, wp)

    def extend_w(x):
        return _extended(alpha, x, 0)

    def extend_wp(x):
        return _extended(alpha, x, 1)

    table = ProfileTable(
        grid=grid,
        w=RadialFunction(grid, w, wp, extension=extend_w),
        w_prime=RadialFunction(grid, wp, wpp, extension=extend_wp),
        alpha=alpha,
        iterations=iterations,
        residual=float(residual),
    )
    return table


def _extended(alpha, r, which):
    r = np.asarray(r, dtype=float)
    near = series_profile(alpha, r)[which]
    far = asymptotic_profile(np.maximum(r, 1.0))[which]
    return np.where(r < 1.0, near, far)


def eval_profile(table, r):
    """(w, w') at r > 0: series below r_min, expansion above r_max."""

    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise DomainError("profile evaluated at r <= 0")
    w = interp_eval(table.w, r_arr)
    wp = interp_eval(table.w_prime, r_arr)
    if r_arr.ndim == 0:
        return float(w), float(wp)
    return np.asarray(w), np.asarray(wp)


def profile_residual(table):
    """Scaled collocation residual at interior nodes."""

    grid = table.grid
    r = grid.nodes
    w = table.w.values
    res = grid.D2 @ w + (grid.D1 @ w) / r - w / r**2 + (1 - w * w) * w
    return np.concatenate([[0.0], scaled_residual(grid, res), [0.0]])


def write_profile_csv(path, table):
    """CSV `r,w,w_prime` with 17 significant digits."""

    write_table(path, dict(r=table.grid.nodes, w=table.w.values, w_prime=table.w_prime.values))


def read_profile_csv(path):
    data = read_table(path, required=('r', 'w', 'w_prime'))
    grid = RadialGrid(data['r'])
    table = profile_table(grid, data['w'], data['w_prime'])
    table = ProfileTable(grid, table.w, table.w_prime, table.alpha,
                         residual=float(profile_residual(table).max()))
    logger.info("profile read from %s: alpha=%.13f", path, table.alpha)
    return table
