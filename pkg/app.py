"""Command-line entry point.

    python app.py profile --rmax 40 --tol 1e-10 --out profile.csv
    python app.py kernel --mode 3 --out kernel_3.csv
    python app.py solve-mode --k 2 --l 1 --rhs h.csv --out psi.csv
    python app.py solve --rhs field.csv --out phi.csv --project-orthogonal
    python app.py oracle --R 10 --n 256 --rhs h2d.csv --out phi2d.csv
    python app.py verify --quick --out summary.json
"""

import json
import logging
import os
import sys
import tempfile
from functools import wraps
from pathlib import Path

import click
import numpy as np

from disk_oracle import assemble, compare_with_modes, solve_dirichlet_2d
from errors import ConfigurationError, IntegrityError, VortexError
from forms import load_config
from homogeneous import build_kernel, build_kernels, build_mode0_kernel
from models import ModePair, ModeRHS, ModeSolution
from mode_solver import estimate_report, solve_mode, solve_mode_dirichlet
from numerics import RadialFunction, RadialGrid, interp_eval, read_table, write_table
from profile_solver import eval_profile, read_profile_csv, solve_profile, write_profile_csv
from synthesis import read_polar_csv, solve_field, write_polar_csv
from verification import run_suite, summary

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


##############################################################################
# Plumbing


def configure_logging(verbose):
    level = "DEBUG" if verbose else os.environ.get("VORTEX_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _plain(obj):
    """json.dumps fallback for numpy scalars and arrays."""

    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_json(payload):
    return json.dumps(payload, sort_keys=True, indent=2, default=_plain) + "\n"


class Artifacts:
    """Outputs staged in temporary files and renamed only after all succeed."""

    def __init__(self):
        self.staged = []

    def add(self, path, writer):
        if path is not None:
            self.staged.append((Path(path), writer))

    def add_report(self, path, payload):
        def write(tmp):
            with open(tmp, "w") as out:
                out.write(dump_json(payload))

        self.add(path, write)

    def commit(self):
        temps = []
        try:
            for target, writer in self.staged:
                fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.",
                                           suffix=".tmp")
                os.close(fd)
                temps.append((tmp, target))
                writer(tmp)
            for tmp, target in temps:
                os.replace(tmp, target)
        except OSError as exc:
            raise ConfigurationError("cannot write output", reason=str(exc)) from exc
        finally:
            for tmp, _ in temps:
                if os.path.exists(tmp):
                    os.remove(tmp)


def handled(command):
    """Map VortexError onto its exit code with a JSON error on stderr."""

    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except VortexError as exc:
            logger.error("%s: %s", type(exc).__name__, exc.message)
            click.echo(dump_json(exc.to_dict()), err=True, nl=False)
            sys.exit(exc.exit_code)
    return wrapper


CONFIG_OPTIONS = (
    click.option("--config", "config_path", type=click.Path(dir_okay=False),
                 help="JSON file with run configuration."),
    click.option("--r-min", type=float),
    click.option("--rmax", "r_max", type=float),
    click.option("--per-decade", type=int),
    click.option("--h-outer", type=float),
    click.option("--K", "K", type=int, help="Highest Fourier mode."),
    click.option("--n-theta", type=int),
    click.option("--tol", "profile_tol", type=float, help="Profile residual tolerance."),
    click.option("--residual-tol", type=float),
    click.option("--orth-tol", type=float),
    click.option("--seed", type=int),
    click.option("--threads", type=int),
)


def with_config(command):
    """Add the configuration flags and pass a validated RunConfig as `config`."""

    @wraps(command)
    def wrapper(config_path, **kwargs):
        names = ("r_min", "r_max", "per_decade", "h_outer", "K", "n_theta", "profile_tol",
                 "residual_tol", "orth_tol", "seed", "threads")
        overrides = {name: kwargs.pop(name) for name in names}
        config = load_config(config_path, overrides)
        return command(config=config, **kwargs)

    for option in reversed(CONFIG_OPTIONS):
        wrapper = option(wrapper)
    return wrapper


def grid_of(config):
    return RadialGrid.graded(config.r_min, config.r_max, config.per_decade, config.h_outer)


def get_profile(config, path):
    if path is not None:
        return read_profile_csv(path)
    return solve_profile(grid_of(config), config.profile_tol)


def get_kernel(profile, k):
    return build_mode0_kernel(profile) if k == 0 else build_kernel(profile, k)


def on_grid(grid, table, name):
    """Column `name` of a radial table, interpolated onto grid if needed."""

    r = table["r"]
    if r.size == grid.size and np.allclose(r, grid.nodes, rtol=1e-13, atol=0):
        return table[name]
    return interp_eval(RadialFunction(RadialGrid(r), table[name]), grid.nodes)


def pair_columns(pair, prefix):
    return {
        f"{prefix}1": pair.first.values,
        f"{prefix}2": pair.second.values,
        f"{prefix}1p": pair.derivatives[0],
        f"{prefix}2p": pair.derivatives[1],
    }


##############################################################################
# Commands


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level.")
def cli(verbose):
    """Invert the Ginzburg-Landau operator linearized at the degree-one vortex."""

    configure_logging(verbose)


@cli.command()
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
@handled
@with_config
def profile(config, out, report):
    """Solve for the vortex profile and write r,w,w_prime."""

    table = solve_profile(grid_of(config), config.profile_tol)
    w10, wp10 = eval_profile(table, 10.0)
    artifacts = Artifacts()
    artifacts.add(out, lambda tmp: write_profile_csv(tmp, table))
    artifacts.add_report(report, dict(
        command="profile", config=config.to_dict(), alpha=table.alpha,
        residual=table.residual, iterations=table.iterations, w10=w10, w_prime10=wp10))
    artifacts.commit()
    click.echo(f"alpha = {table.alpha:.13f}")


@cli.command()
@click.option("--mode", "k", required=True, type=int, help="Fourier mode k.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--profile", "profile_path", type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
@handled
@with_config
def kernel(config, k, out, profile_path, report):
    """Build the homogeneous basis of mode k."""

    if k < 0:
        raise ConfigurationError("mode must be non-negative", k=k)
    table = get_profile(config, profile_path)
    basis = get_kernel(table, k)
    columns = dict(r=table.grid.nodes)
    for j, z in enumerate(basis.solutions, start=1):
        columns.update(pair_columns(z, f"z{j}"))
    artifacts = Artifacts()
    artifacts.add(out, lambda tmp: write_table(tmp, columns))
    artifacts.add_report(report, dict(
        command="kernel", config=config.to_dict(), k=k, kappa=basis.kappa,
        tags=basis.tags, diagnostics=basis.diagnostics))
    artifacts.commit()
    click.echo(f"kappa = {basis.kappa:.10g}")


@cli.command("solve-mode")
@click.option("--k", "k", required=True, type=int)
@click.option("--l", "l", type=click.IntRange(1, 2), default=1, show_default=True)
@click.option("--rhs", required=True, type=click.Path(dir_okay=False),
              help="CSV with columns r,h1,h2.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--orthogonal", is_flag=True, help="Use the decaying mode-1 formula.")
@click.option("--dirichlet", "R", type=float, help="Solve on [0, R] with psi(R) = 0.")
@click.option("--head-exponent", type=float, default=-1.0, show_default=True)
@click.option("--decay-exponent", type=float, default=0.0, show_default=True)
@click.option("--profile", "profile_path", type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
@handled
@with_config
def solve_mode_command(config, k, l, rhs, out, orthogonal, R, head_exponent,
                       decay_exponent, profile_path, report):
    """Solve one radial mode system."""

    data = read_table(rhs, required=("r", "h1", "h2"))
    table = get_profile(config, profile_path)
    grid = table.grid
    h = ModePair(RadialFunction(grid, on_grid(grid, data, "h1")),
                 RadialFunction(grid, on_grid(grid, data, "h2")))
    mode_rhs = ModeRHS(k, None if k == 0 else l, h, head_exponent, decay_exponent)
    basis = get_kernel(table, k)
    if R is None:
        sol = solve_mode(table, basis, mode_rhs, orthogonal, config.residual_tol)
    else:
        sol = solve_mode_dirichlet(table, basis, mode_rhs, R, orthogonal, config.residual_tol)

    columns = dict(r=sol.grid.nodes, **pair_columns(sol.psi, "psi"))
    artifacts = Artifacts()
    artifacts.add(out, lambda tmp: write_table(tmp, columns))
    artifacts.add_report(report, dict(
        command="solve-mode", config=config.to_dict(), k=k, l=mode_rhs.l,
        diagnostics=sol.diagnostics, estimate=estimate_report(table, sol, mode_rhs).to_dict()))
    artifacts.commit()
    click.echo(f"residual = {sol.diagnostics['residual']:.3e}")


@cli.command()
@click.option("--rhs", required=True, type=click.Path(dir_okay=False),
              help="CSV with columns r,theta,re,im on the profile grid.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--project-orthogonal", "project", is_flag=True,
              help="Project the data orthogonal to the translation modes first.")
@click.option("--profile", "profile_path", type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
@handled
@with_config
def solve(config, rhs, out, project, profile_path, report):
    """Solve L[phi] = h for a sampled 2-D field."""

    h = read_polar_csv(rhs)
    table = get_profile(config, profile_path)
    kernels = build_kernels(table, range(config.K + 1), config.threads)
    phi, _, estimate = solve_field(h, table, config.K, kernels, project, config.threads)
    artifacts = Artifacts()
    artifacts.add(out, lambda tmp: write_polar_csv(tmp, phi))
    artifacts.add_report(report, dict(command="solve", config=config.to_dict(),
                                      project=project, estimate=estimate.to_dict()))
    artifacts.commit()
    click.echo(f"||phi||_* / ||h||_** = {estimate.ratio:.6g}")


@cli.command()
@click.option("--R", "R", required=True, type=float)
@click.option("--n", "n", required=True, type=int)
@click.option("--rhs", required=True, type=click.Path(dir_okay=False),
              help="CSV with columns r,theta,re,im on the disk rings.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--compare", type=click.Path(dir_okay=False),
              help="Dirichlet mode solution (r,psi1,psi2) to compare against.")
@click.option("--k", "k", type=int, default=0, show_default=True)
@click.option("--l", "l", type=click.IntRange(1, 2), default=1, show_default=True)
@click.option("--profile", "profile_path", type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
@handled
@with_config
def oracle(config, R, n, rhs, out, compare, k, l, profile_path, report):
    """Finite-difference Dirichlet solve on the disk of radius R."""

    h = read_polar_csv(rhs)
    table = get_profile(config, profile_path)
    system = assemble(table, R, n)
    phi = solve_dirichlet_2d(system, h)

    payload = dict(command="oracle", config=config.to_dict(), R=R, n=n)
    if compare is not None:
        data = read_table(compare, required=("r", "psi1", "psi2"))
        grid = RadialGrid(data["r"])
        pair = ModePair(RadialFunction(grid, data["psi1"]), RadialFunction(grid, data["psi2"]))
        mode = ModeSolution(k, None if k == 0 else l, pair)
        payload["comparison"] = compare_with_modes(phi, [mode], R, table)

    artifacts = Artifacts()
    artifacts.add(out, lambda tmp: write_polar_csv(tmp, phi))
    artifacts.add_report(report, payload)
    artifacts.commit()
    if "comparison" in payload:
        click.echo(f"aggregate error = {payload['comparison']['aggregate']:.3e}")


@cli.command()
@click.option("--quick", is_flag=True, help="Smaller samples and oracle grids.")
@click.option("--out", type=click.Path(dir_okay=False), default="summary.json",
              show_default=True)
@handled
@with_config
def verify(config, quick, out):
    """Run the acceptance suite and write a JSON summary."""

    results = run_suite(config, quick)
    payload = summary(config, results, quick)
    artifacts = Artifacts()
    artifacts.add_report(out, payload)
    artifacts.commit()
    for result in results:
        click.echo(f"{'PASS' if result.passed else 'FAIL'}  {result.name}")
    if not payload["passed"]:
        raise IntegrityError("acceptance criteria failed",
                             failed=[r.name for r in results if not r.passed])


if __name__ == "__main__":
    cli()
