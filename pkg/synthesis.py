"""Two-dimensional fields: parity-family decomposition, synthesis, norms,
inner products, the psi-form residual and the quadratic form.

A field phi is written phi = iW psi with W = w(r) e^{i theta}, and
psi = psi_1 + i psi_2 splits into families

    (k, 1): psi_1 = a(r) cos k theta,  psi_2 = b(r) sin k theta
    (k, 2): psi_1 = a(r) sin k theta,  psi_2 = b(r) cos k theta
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.integrate import simpson

from errors import ConfigurationError, DataError, ResolutionError
from homogeneous import build_kernels
from models import EstimateReport, FourierField, ModePair, ModeRHS, NormReport, PolarField
from mode_solver import orthogonality_integral, solve_mode
from numerics import RadialFunction, RadialGrid
from profile_solver import eval_profile

logger = logging.getLogger(__name__)

ALIASING_TOL = 1e-10
NORM_SPLIT = 2.0

# nodes nearest r_min left out of residual sups
RESIDUAL_SKIP = 2


##############################################################################
# Grids and profile samples


def polar_zeros(radii, n_theta):
    return PolarField(radii, np.zeros((len(radii), n_theta), dtype=complex))


def sample_polar(radii, n_theta, fn):
    """PolarField of fn(r, theta) on the tensor grid."""

    field = polar_zeros(radii, n_theta)
    r, theta = np.meshgrid(field.radii, field.theta, indexing='ij')
    return field.with_values(fn(r, theta))


def vortex(profile, field):
    """W = w(r) e^{i theta} on a field's grid."""

    w, _ = eval_profile(profile, field.radii)
    return w[:, None] * np.exp(1j * field.theta)[None, :]


def _radial_grid(profile, radii):
    """The profile grid when radii coincide with it, else a fresh grid."""

    nodes = profile.grid.nodes
    if radii.size == nodes.size and np.allclose(radii, nodes, rtol=1e-13, atol=0):
        return profile.grid
    return RadialGrid(radii)


##############################################################################
# Decomposition and synthesis


def decompose(field, profile, K=None, divide=True):
    """Parity families of psi = field / (iW) (or of field itself if not divide)."""

    n_theta = field.n_theta
    if K is None:
        K = (n_theta - 4) // 4
    if 4 * K + 4 > n_theta:
        raise ResolutionError("angular resolution too coarse for K", K=K, n_theta=n_theta)

    psi = field.values
    if divide:
        w, _ = eval_profile(profile, field.radii)
        if np.any(w <= 0):
            raise DataError("profile vanishes on a sampled radius")
        psi = psi / (1j * vortex(profile, field))

    grid = _radial_grid(profile, field.radii)
    spectra = [np.fft.rfft(part, axis=1) / n_theta for part in (psi.real, psi.imag)]
    total = sum(np.sum(abs(s) ** 2) for s in spectra)
    nyquist = sum(np.sum(abs(s[:, -1]) ** 2) for s in spectra)
    if total > 0 and nyquist > ALIASING_TOL * total:
        raise ResolutionError("field carries energy at the Nyquist mode",
                              fraction=nyquist / total)

    re_spec, im_spec = spectra
    mode0 = ModePair(RadialFunction(grid, re_spec[:, 0].real),
                     RadialFunction(grid, im_spec[:, 0].real))
    families = {}
    for k in range(1, K + 1):
        re_cos, re_sin = 2 * re_spec[:, k].real, -2 * re_spec[:, k].imag
        im_cos, im_sin = 2 * im_spec[:, k].real, -2 * im_spec[:, k].imag
        families[(k, 1)] = ModePair(RadialFunction(grid, re_cos), RadialFunction(grid, im_sin))
        families[(k, 2)] = ModePair(RadialFunction(grid, re_sin), RadialFunction(grid, im_cos))
    return FourierField(mode0, families, K)


def synthesize_psi(modes, n_theta):
    """psi on the polar grid from its parity families."""

    if 4 * modes.K + 4 > n_theta:
        raise ResolutionError("angular resolution too coarse for K", K=modes.K,
                              n_theta=n_theta)
    radii = modes.grid.nodes
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    real = np.repeat(modes.mode0.first.values[:, None], n_theta, axis=1)
    imag = np.repeat(modes.mode0.second.values[:, None], n_theta, axis=1)
    for (k, l), pair in modes.families.items():
        cos, sin = np.cos(k * theta)[None, :], np.sin(k * theta)[None, :]
        a, b = pair.first.values[:, None], pair.second.values[:, None]
        if l == 1:
            real = real + a * cos
            imag = imag + b * sin
        else:
            real = real + a * sin
            imag = imag + b * cos
    return PolarField(radii, real + 1j * imag)


def synthesize(modes, profile, n_theta):
    """phi = iW psi sampled on the polar grid."""

    psi = synthesize_psi(modes, n_theta)
    return psi.with_values(1j * vortex(profile, psi) * psi.values)


def psi_of(phi, profile):
    return phi.with_values(phi.values / (1j * vortex(profile, phi)))


##############################################################################
# Kernel fields


def kernel_fields(profile, radii, n_theta):
    """iW, dW/dx_1 and dW/dx_2 sampled on the polar grid."""

    field = polar_zeros(radii, n_theta)
    r, theta = np.meshgrid(field.radii, field.theta, indexing='ij')
    w, wp = eval_profile(profile, field.radii)
    w, wp = w[:, None], wp[:, None]
    phase = np.exp(1j * theta)
    i_w = field.with_values(1j * w * phase)
    dx1 = field.with_values(phase * (wp * np.cos(theta) - 1j * w / r * np.sin(theta)))
    dx2 = field.with_values(phase * (wp * np.sin(theta) + 1j * w / r * np.cos(theta)))
    return i_w, dx1, dx2


##############################################################################
# Norms and inner products


def norm_star(psi_field):
    """sup_{r<=2}|psi| + sup_{r>=2} |psi_1|/(log r)^2 + sup_{r>=2}|psi_2|."""

    r = psi_field.radii
    psi = psi_field.values
    inside, outside = r <= NORM_SPLIT, r >= NORM_SPLIT
    inner = float(np.max(abs(psi[inside]))) if inside.any() else 0.0
    if not outside.any():
        return NormReport(inner, 0.0, 0.0)
    log_r = np.log(r[outside])[:, None]
    return NormReport(inner,
                      float(np.max(abs(psi[outside].real) / log_r**2)),
                      float(np.max(abs(psi[outside].imag))))


def norm_dstar(h_field, profile):
    """sup_{r<=2}|h| + sup_{r>=2} r^2|h_1| + sup_{r>=2}|h_2|, h = iW(h_1 + i h_2)."""

    r = h_field.radii
    inside, outside = r <= NORM_SPLIT, r >= NORM_SPLIT
    inner = float(np.max(abs(h_field.values[inside]))) if inside.any() else 0.0
    if not outside.any():
        return NormReport(inner, 0.0, 0.0)
    h_tilde = psi_of(h_field, profile).values[outside]
    return NormReport(inner,
                      float(np.max(r[outside, None] ** 2 * abs(h_tilde.real))),
                      float(np.max(abs(h_tilde.imag))))


def _disk_integral(radii, density, R):
    """int_0^R int_0^{2 pi} density r dtheta dr (trapezoid in theta, Simpson in r)."""

    mask = radii <= R * (1 + 1e-12)
    if mask.sum() < 3:
        raise ConfigurationError("too few radii inside the disk", R=R)
    ring = 2 * np.pi * density[mask].mean(axis=1)
    return float(simpson(ring * radii[mask], x=radii[mask]))


def inner_product(u, v, R):
    """<u, v> = Re int_{B_R} u conj(v) dx."""

    if u.values.shape != v.values.shape or not np.array_equal(u.radii, v.radii):
        raise DataError("fields live on different grids")
    return _disk_integral(u.radii, (u.values * np.conj(v.values)).real, R)


##############################################################################
# Differentiation


def _angular_derivative(values, order):
    n = values.shape[1]
    m = np.fft.fftfreq(n, d=1.0 / n)
    if order % 2:
        m[n // 2] = 0.0
    return np.fft.ifft((1j * m) ** order * np.fft.fft(values, axis=1), axis=1)


def _radial_derivatives(profile, radii, values):
    grid = _radial_grid(profile, radii)
    return grid.D1 @ values, grid.D2 @ values


def residual_2d(phi, h, profile):
    """Scaled sup of the psi-form residual

        Delta psi + 2 (w'/w) psi_r + (2i/r^2) psi_theta - 2i w^2 psi_2 - (h_1 + i h_2)

    with 7-point radial and spectral angular derivatives. Each node's
    residual is divided by max(1, |h~|, size of the operator terms), where
    the size includes |psi| / r^2, the magnitude the operator gives a field
    of unit angular frequency.
    """

    r = phi.radii
    w, wp = eval_profile(profile, r)
    psi = psi_of(phi, profile).values
    target = psi_of(h, profile).values

    psi_r, psi_rr = _radial_derivatives(profile, r, psi)
    psi_t = _angular_derivative(psi, 1)
    psi_tt = _angular_derivative(psi, 2)
    rr = r[:, None]
    terms = [
        psi_rr,
        psi_r / rr,
        psi_tt / rr**2,
        2 * (wp / w)[:, None] * psi_r,
        2j * psi_t / rr**2,
        -2j * (w**2)[:, None] * psi.imag,
    ]
    residual = sum(terms) - target
    size = sum(abs(t) for t in terms) + abs(psi) / rr**2
    scale = np.maximum(np.maximum(1.0, abs(target)), size)
    inner = slice(RESIDUAL_SKIP, r.size - RESIDUAL_SKIP)
    return float(np.max(abs(residual[inner]) / scale[inner]))


def quad_form(phi, R, profile):
    """B(phi, phi) on B_R: |grad phi|^2 - (1 - |W|^2)|phi|^2 + 2 (Re conj(W) phi)^2."""

    r = phi.radii
    values = phi.values
    phi_r, _ = _radial_derivatives(profile, r, values)
    phi_t = _angular_derivative(values, 1)
    W = vortex(profile, phi)
    gradient = abs(phi_r) ** 2 + abs(phi_t) ** 2 / r[:, None] ** 2
    density = gradient - (1 - abs(W) ** 2) * abs(values) ** 2 \
        + 2 * (np.conj(W) * values).real ** 2
    return _disk_integral(r, density, R)


def gradient_energy(phi, R, profile):
    """int_{B_R} |grad phi|^2."""

    r = phi.radii
    phi_r, _ = _radial_derivatives(profile, r, phi.values)
    phi_t = _angular_derivative(phi.values, 1)
    density = abs(phi_r) ** 2 + abs(phi_t) ** 2 / r[:, None] ** 2
    return _disk_integral(r, density, R)


##############################################################################
# Orthogonality and the full pipeline


def correction_direction(grid, profile):
    """h~ = r^2 exp(-r^2) z_11, the mode-1 datum used to restore orthogonality."""

    r = grid.nodes
    w, wp = eval_profile(profile, r)
    bump = r * r * np.exp(-r * r)
    return ModePair(RadialFunction(grid, bump / r), RadialFunction(grid, -bump * wp / w))


def project_orthogonal(modes, profile, basis1):
    """Remove the components of the (1,1) and (1,2) families along the
    translation modes, so that <h, dW/dx_1> = <h, dW/dx_2> = 0."""

    if 1 > modes.K:
        return modes
    direction = correction_direction(modes.grid, profile)
    families = dict(modes.families)
    for l in (1, 2):
        data = ModeRHS(1, l, modes.family(1, l), head_exponent=-1.0)
        along = ModeRHS(1, l, direction if l == 1 else direction.flipped())
        c = orthogonality_integral(profile, basis1, data) \
            / orthogonality_integral(profile, basis1, along)
        families[(1, l)] = data.h - along.h.scaled(c)
    return FourierField(modes.mode0, families, modes.K)


def _rhs_for(k, l, pair):
    """Mode data with the worst-case declared exponents allowed by ||h||_**."""

    return ModeRHS(k, None if k == 0 else l, pair, head_exponent=-1.0, decay_exponent=0.0)


def solve_field(h, profile, K, kernels=None, project=False, threads=1):
    """Solve L[phi] = h family by family.

    Returns (phi, psi modes, EstimateReport). With `project`, the mode-1
    data are first made orthogonal to the translation modes and mode 1 is
    solved with the decaying representation.
    """

    if not np.allclose(h.radii, profile.grid.nodes, rtol=1e-13, atol=0):
        raise DataError("right-hand side must be sampled on the profile grid")
    if kernels is None:
        kernels = build_kernels(profile, range(K + 1), threads)
    data = decompose(h, profile, K)
    if project:
        data = project_orthogonal(data, profile, kernels.get(1))

    jobs = [(0, None)] + [(k, l) for k in range(1, K + 1) for l in (1, 2)]

    def run(job):
        k, l = job
        pair = data.family(k, l)
        if pair.sup() == 0:
            return job, ModePair.zeros(profile.grid), 0.0
        sol = solve_mode(profile, kernels[k], _rhs_for(k, l, pair),
                         assume_orthogonal=project and k == 1)
        return job, sol.psi, sol.diagnostics['residual']

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, jobs))

    mode0 = results[0][1]
    families = {job: psi for job, psi, _ in results[1:]}
    worst = max(res for _, _, res in results)
    psi_modes = FourierField(mode0, families, K)
    phi = synthesize(psi_modes, profile, h.n_theta)

    star = norm_star(synthesize_psi(psi_modes, h.n_theta))
    dstar = norm_dstar(h, profile)
    report = EstimateReport(star.total, dstar.total, star, dstar, residual=worst)
    logger.info("field solved: K=%d, ||phi||_*=%.4g, ||h||_**=%.4g, ratio=%.4g",
                K, star.total, dstar.total, report.ratio)
    return phi, psi_modes, report


##############################################################################
# CSV


def write_polar_csv(path, field):
    """CSV `r,theta,re,im`, 17 significant digits."""

    with open(path, 'w', newline='') as out:
        writer = csv.DictWriter(out, fieldnames=['r', 'theta', 're', 'im'])
        writer.writeheader()
        for i, r in enumerate(field.radii):
            for j, t in enumerate(field.theta):
                z = field.values[i, j]
                writer.writerow(dict(r=f"{r:.17g}", theta=f"{t:.17g}",
                                     re=f"{z.real:.17g}", im=f"{z.imag:.17g}"))


def read_polar_csv(path):
    try:
        with open(path, newline='') as src:
            rows = list(csv.DictReader(src))
    except OSError as exc:
        raise DataError("cannot read field", path=str(path), reason=str(exc)) from exc
    if not rows or not {'r', 'theta', 're', 'im'} <= set(rows[0]):
        raise DataError("field file needs columns r,theta,re,im", path=str(path))
    try:
        r = np.array([float(row['r']) for row in rows])
        values = np.array([complex(float(row['re']), float(row['im'])) for row in rows])
    except ValueError as exc:
        raise DataError("field file has non-numeric entries", path=str(path)) from exc
    radii = np.unique(r)
    if values.size % radii.size:
        raise DataError("field file is not a tensor grid", path=str(path))
    return PolarField(radii, values.reshape(radii.size, values.size // radii.size))
