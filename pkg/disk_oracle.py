"""Finite-difference Dirichlet solver for L[phi] = h on the disk B_R.

Polar grid r_i = i R/n (i = 0..n), theta_j = 2 pi j/n. The pole is one
node closed by the angular mean; ring n carries the zero boundary trace.
Unknowns are interleaved (Re phi, Im phi) per node.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from errors import ConfigurationError, LinearAlgebraError
from models import PolarField
from numerics import interp_eval
from profile_solver import eval_profile
from synthesis import decompose

logger = logging.getLogger(__name__)

MIN_POINTS = 32
POINTS_PER_CORE = 8
ALGEBRAIC_TOL = 1e-10
REFINEMENT_STEPS = 3
COMPARE_WINDOW = (0.2, 0.9)


@dataclass(frozen=True, eq=False)
class DiskSystem:
    R: float
    n: int
    radii: np.ndarray
    w: np.ndarray
    matrix: sparse.csc_matrix
    operator: sparse.csr_matrix

    def __repr__(self):
        return f"<DiskSystem R={self.R:g} n={self.n}>"

    @property
    def n_theta(self):
        return self.n

    @property
    def theta(self):
        return 2 * np.pi * np.arange(self.n) / self.n

    @property
    def dr(self):
        return self.R / self.n

    @property
    def size(self):
        return 1 + self.n * self.n

    def boundary_nodes(self):
        return 1 + (self.n - 1) * self.n + np.arange(self.n)


def _node(n, i, j):
    """Flat index of ring i (1..n), angle j; the pole is node 0."""

    return 1 + (i - 1) * n + (j % n)


def _laplacian(R, n):
    dr = R / n
    dtheta = 2 * np.pi / n
    rows, cols, vals = [], [], []

    def put(r_idx, c_idx, v):
        rows.append(np.broadcast_to(r_idx, np.shape(v)).ravel())
        cols.append(np.broadcast_to(c_idx, np.shape(v)).ravel())
        vals.append(np.ravel(v))

    ring1 = _node(n, 1, np.arange(n))
    put(np.array([0]), np.array([0]), np.array([-4 / dr**2]))
    put(np.zeros(n, dtype=int), ring1, np.full(n, 4 / (dr**2 * n)))

    i, j = np.meshgrid(np.arange(1, n), np.arange(n), indexing='ij')
    r = i * dr
    centre = _node(n, i, j)
    outward = 1 / dr**2 + 1 / (2 * r * dr)
    inward = 1 / dr**2 - 1 / (2 * r * dr)
    angular = 1 / (r * dtheta) ** 2
    put(centre, centre, -2 / dr**2 - 2 * angular)
    put(centre, _node(n, i + 1, j), outward)
    put(centre, np.where(i > 1, _node(n, np.maximum(i - 1, 1), j), 0), inward)
    put(centre, _node(n, i, j + 1), angular)
    put(centre, _node(n, i, j - 1), angular)

    size = 1 + n * n
    return sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size)).tocsr()


def _coupling(w_nodes, theta_nodes):
    """2x2 blocks [[1-w^2-2a^2, -2ab], [-2ab, 1-w^2-2b^2]], a + ib = W."""

    a = w_nodes * np.cos(theta_nodes)
    b = w_nodes * np.sin(theta_nodes)
    base = 1 - w_nodes**2
    m = w_nodes.size
    idx = 2 * np.arange(m)
    rows = np.concatenate([idx, idx, idx + 1, idx + 1])
    cols = np.concatenate([idx, idx + 1, idx, idx + 1])
    vals = np.concatenate([base - 2 * a * a, -2 * a * b, -2 * a * b, base - 2 * b * b])
    return sparse.coo_matrix((vals, (rows, cols)), shape=(2 * m, 2 * m)).tocsr()


def assemble(profile, R, n):
    """Real 2N x 2N operator of L with Dirichlet rows on ring n."""

    if n < MIN_POINTS:
        raise ConfigurationError("disk resolution below 32", n=n)
    if n & (n - 1):
        raise ConfigurationError("disk resolution must be a power of two", n=n)
    if n < POINTS_PER_CORE * R:
        raise ConfigurationError("fewer than 8 points per core radius", n=n, R=R)
    if R > profile.grid.r_max:
        raise ConfigurationError("disk radius beyond the profile grid", R=R,
                                 r_max=profile.grid.r_max)

    radii = R * np.arange(1, n + 1) / n
    w_rings, _ = eval_profile(profile, radii)
    theta = 2 * np.pi * np.arange(n) / n
    w_nodes = np.concatenate([[0.0], np.repeat(w_rings, n)])
    theta_nodes = np.concatenate([[0.0], np.tile(theta, n)])

    operator = sparse.kron(_laplacian(R, n), sparse.identity(2), format='csr') \
        + _coupling(w_nodes, theta_nodes)

    # row-eliminate the boundary: identity rows, no boundary columns elsewhere
    boundary = np.zeros(2 * (1 + n * n), dtype=bool)
    nodes = 1 + (n - 1) * n + np.arange(n)
    boundary[2 * nodes] = boundary[2 * nodes + 1] = True
    keep = sparse.diags((~boundary).astype(float))
    matrix = keep @ operator @ keep + sparse.diags(boundary.astype(float))

    logger.info("disk operator assembled: R=%g, n=%d, %d unknowns", R, n, matrix.shape[0])
    return DiskSystem(R=float(R), n=n, radii=radii, w=w_rings, matrix=matrix.tocsc(),
                      operator=operator)


def _pole_value(field):
    """Angular mean at 0 by linear extrapolation from rings 1 and 2."""

    means = field.values[:2].mean(axis=1)
    return 2 * means[0] - means[1]


def _check_field(system, field):
    if field.values.shape != (system.n, system.n) \
            or not np.allclose(field.radii, system.radii, rtol=1e-13, atol=0):
        raise ConfigurationError("field is not sampled on the disk rings",
                                 shape=field.values.shape, n=system.n)


def _pack(system, field, pole):
    z = np.concatenate([[pole], field.values.ravel()])
    out = np.empty(2 * z.size)
    out[0::2], out[1::2] = z.real, z.imag
    return out


def _unpack(system, vec):
    z = vec[0::2] + 1j * vec[1::2]
    return z[0], PolarField(system.radii, z[1:].reshape(system.n, system.n))


def sample_disk(system, fn):
    """PolarField of fn(r, theta) on the rings of the disk."""

    r, theta = np.meshgrid(system.radii, system.theta, indexing='ij')
    return PolarField(system.radii, fn(r, theta))


def apply_operator(system, phi, pole=None):
    """Discrete L[phi]; returns (field on the rings, value at the pole).

    The boundary ring of the result holds phi itself.
    """

    _check_field(system, phi)
    if pole is None:
        pole = _pole_value(phi)
    pole_out, out = _unpack(system, system.operator @ _pack(system, phi, pole))
    values = out.values.copy()
    values[-1] = phi.values[-1]
    return out.with_values(values), pole_out


def solve_dirichlet_2d(system, h, pole=None):
    """phi with zero trace on ring n and discrete L[phi] = h inside."""

    _check_field(system, h)
    if not np.any(h.values) and not pole:
        return h.with_values(np.zeros_like(h.values))
    if pole is None:
        pole = _pole_value(h)
    values = h.values.copy()
    values[-1] = 0.0
    rhs = _pack(system, h.with_values(values), pole)

    x, residual = _refined_solve(system, rhs)
    if residual > ALGEBRAIC_TOL:
        raise LinearAlgebraError("sparse solve residual above tolerance",
                                 residual=residual)
    logger.debug("disk solve: relative algebraic residual %.2e", residual)
    return _unpack(system, x)[1]


def _refined_solve(system, rhs):
    """LU solve followed by iterative refinement; returns (x, relative residual)."""

    try:
        lu = splu(system.matrix)
    except RuntimeError as exc:
        raise LinearAlgebraError("disk matrix is singular", R=system.R, n=system.n,
                                 reason=str(exc)) from exc
    size = max(np.linalg.norm(rhs), 1e-300)
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise LinearAlgebraError("sparse solve broke down", R=system.R, n=system.n)
    for step in range(REFINEMENT_STEPS + 1):
        defect = rhs - system.matrix @ x
        residual = np.linalg.norm(defect) / size
        if residual <= ALGEBRAIC_TOL or step == REFINEMENT_STEPS:
            break
        x = x + lu.solve(defect)
        logger.debug("disk solve: refinement step %d, residual %.2e", step + 1, residual)
    return x, residual


def compare_with_modes(phi2d, modes, R, profile):
    """Family-by-family relative sup errors of a disk solution against
    Dirichlet mode solutions, on r in [0.2, 0.9] R.

    Returns a dict with per-family errors keyed "k,l" ("0" for mode 0),
    the aggregate error and the largest family present in phi2d but
    absent from `modes`, relative to the aggregate reference size.
    """

    K = max([sol.k for sol in modes] + [1])
    spectrum = decompose(phi2d, profile, K=min(K, phi2d.n_theta // 4 - 1))
    r = phi2d.radii
    window = (r >= COMPARE_WINDOW[0] * R) & (r <= COMPARE_WINDOW[1] * R)
    rw = r[window]

    per_family, diffs, refs, seen = {}, 0.0, 0.0, set()
    for sol in modes:
        key = (sol.k, sol.l)
        seen.add(key)
        disk = spectrum.family(sol.k, sol.l)
        exact = np.vstack([interp_eval(sol.psi.first, rw), interp_eval(sol.psi.second, rw)])
        found = np.vstack([disk.first.values[window], disk.second.values[window]])
        diff = np.abs(found - exact).sum(axis=0)
        ref = np.abs(exact).sum(axis=0)
        per_family["0" if sol.k == 0 else f"{sol.k},{sol.l}"] = \
            float(diff.max() / max(ref.max(), 1e-300))
        diffs, refs = diffs + diff, refs + ref

    extraneous = 0.0
    for key in [(0, None)] + list(spectrum.families):
        if key in seen:
            continue
        pair = spectrum.family(*key)
        extraneous = max(extraneous, float(np.abs(pair.values[:, window]).sum(axis=0).max()))

    scale = max(float(np.max(refs)), 1e-300) if np.ndim(refs) else 1e-300
    aggregate = float(np.max(diffs) / scale) if np.ndim(diffs) else 0.0
    report = dict(families=per_family, aggregate=aggregate, extraneous=extraneous / scale)
    logger.info("disk vs modes at R=%g: aggregate %.3e", R, aggregate)
    return report
