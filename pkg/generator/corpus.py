"""Deterministic right-hand sides and test fields for the acceptance suite.

Run as a script to dump the corpus parameters for a seed:

    python generator/corpus.py --seed 0 --out generator/corpus.csv
"""

import csv
import sys
from pathlib import Path

import click
import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models import FourierField, ModePair  # noqa: E402
from numerics import RadialFunction  # noqa: E402
from synthesis import norm_dstar, synthesize  # noqa: E402

CORPUS_HEADERS = ['item', 'k', 'l', 'a', 'b', 'scale']

CORPUS_SIZE = 20
NON_ORTHOGONAL_SIZE = 5
FAMILIES_PER_ITEM = 3
MAX_MODE = 6


def family_shapes(r, k, a, b, scale):
    """h~ of one family: a r^k/(1+r^2)^{(k+2)/2} and b r^k/(1+r^2)^{k/2} in r/scale.

    The first component decays like r^-2, the second stays bounded.
    """

    x = r / scale
    return a * x**k / (1 + x * x) ** ((k + 2) / 2), b * x**k / (1 + x * x) ** (k / 2)


def corpus_parameters(seed, size=CORPUS_SIZE, max_mode=MAX_MODE, require_mode1=False):
    """Rows (item, k, l, a, b, scale) drawn from numpy's default generator."""

    rng = np.random.default_rng(seed)
    rows = []
    for item in range(size):
        modes = rng.choice(max_mode + 1, size=FAMILIES_PER_ITEM, replace=False)
        if require_mode1 and 1 not in modes:
            modes[0] = 1
        for k in sorted(int(m) for m in modes):
            l = 0 if k == 0 else int(rng.integers(1, 3))
            a, b = rng.uniform(-1, 1, size=2)
            rows.append(dict(item=item, k=k, l=l, a=float(a), b=float(b),
                             scale=float(rng.uniform(0.5, 2.0))))
    return rows


def build_item(rows, profile, K, n_theta):
    """h = iW h~ for one corpus item, normalized to ||h||_** = 1.

    Returns (h, h~ as a FourierField scaled the same way).
    """

    grid = profile.grid
    r = grid.nodes
    mode0 = ModePair.zeros(grid)
    families = {}
    for row in rows:
        first, second = family_shapes(r, row['k'], row['a'], row['b'], row['scale'])
        pair = ModePair(RadialFunction(grid, first), RadialFunction(grid, second))
        if row['k'] == 0:
            mode0 = mode0 + pair
        else:
            key = (row['k'], row['l'])
            families[key] = families[key] + pair if key in families else pair
    data = FourierField(mode0, families, K)
    h = synthesize(data, profile, n_theta)
    size = norm_dstar(h, profile).total
    scaled = FourierField(mode0.scaled(1 / size),
                          {key: pair.scaled(1 / size) for key, pair in families.items()}, K)
    return h.scaled(1 / size), scaled


def corpus(seed, profile, K, n_theta, size=CORPUS_SIZE, require_mode1=False):
    """List of (h, h~) pairs, grouped by item."""

    rows = corpus_parameters(seed, size, require_mode1=require_mode1)
    return [build_item([row for row in rows if row['item'] == item], profile, K, n_theta)
            for item in range(size)]


def compact_field(rng, radii, n_theta, max_mode=4):
    """Random smooth field supported in r < R0, R0 drawn from [2, 8]."""

    R0 = rng.uniform(2.0, 8.0)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    x = np.clip(radii / R0, 0.0, 1.0)
    envelope = (1 - x * x) ** 4
    values = np.zeros((radii.size, n_theta), dtype=complex)
    for m in range(-max_mode, max_mode + 1):
        c = rng.normal(size=2) @ np.array([1.0, 1j])
        # r^|m| keeps the field smooth at the pole
        radial = envelope * (radii / R0) ** abs(m) * (1 + rng.normal() * x)
        values += c * radial[:, None] * np.exp(1j * m * theta)[None, :]
    return values


def write_corpus(path, rows):
    with open(path, 'w', newline='') as out:
        writer = csv.DictWriter(out, fieldnames=CORPUS_HEADERS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


@click.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="generator/corpus.csv",
              show_default=True)
def main(seed, out):
    """Dump the corpus parameters for a seed."""

    write_corpus(out, corpus_parameters(seed))


if __name__ == "__main__":
    main()
