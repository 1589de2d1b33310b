"""Deterministic random smooth fields from a 64-bit seed.

The generator is splitmix64 (Steele-Lea-Flood finalizer), chosen because it
is trivially portable: the same seed reproduces the same coefficient stream
in any implementation.  Random "smooth fields" are finite combinations of
products of sinusoids (or polynomials) with generator-drawn coefficients;
they are functions of position only, so the same seed gives the same
analytic field on every grid of a refinement family.
"""

from __future__ import annotations

import numpy as np

from . import multiindex as mi
from .charts import Chart, Grid
from .fields import DoubleFormField

_MASK = (1 << 64) - 1


class SplitMix64:
    """splitmix64 stream; uniform() yields floats in [0, 1)."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * (self.next_u64() / 2.0 ** 64)


def smooth_scalar(dim: int, gen: SplitMix64, n_terms: int = 3):
    """A generic bounded-smooth scalar function of position."""
    amps = [gen.uniform(-1.0, 1.0) for _ in range(n_terms)]
    freqs = [[gen.uniform(0.5, 1.6) for _ in range(dim)] for _ in range(n_terms)]
    phases = [[gen.uniform(0.0, 2 * np.pi) for _ in range(dim)] for _ in range(n_terms)]

    def fn(coords: np.ndarray) -> np.ndarray:
        out = np.zeros(coords.shape[:-1])
        for a, w, p in zip(amps, freqs, phases):
            term = np.full(coords.shape[:-1], a)
            for i in range(dim):
                term = term * np.sin(w[i] * coords[..., i] + p[i])
            out += term
        return out

    return fn


def polynomial_scalar(dim: int, gen: SplitMix64, max_degree: int = 3):
    """Random polynomial with coefficients in [-1, 1], degree <= max_degree."""
    from itertools import product

    exps = [e for e in product(range(max_degree + 1), repeat=dim) if sum(e) <= max_degree]
    coeffs = [gen.uniform(-1.0, 1.0) for _ in exps]

    def fn(coords: np.ndarray) -> np.ndarray:
        out = np.zeros(coords.shape[:-1])
        for c, e in zip(coeffs, exps):
            term = np.full(coords.shape[:-1], c)
            for i in range(dim):
                if e[i]:
                    term = term * coords[..., i] ** e[i]
            out += term
        return out

    return fn


def smooth_component_functions(
    d: int, k: int, m: int, seed: int, symmetric: bool = False, kind: str = "trig"
):
    """Component functions for a (k, m) field, reproducible from the seed."""
    gen = SplitMix64(seed)
    ck, cm = mi.count(d, k), mi.count(d, m)
    make = smooth_scalar if kind == "trig" else polynomial_scalar
    fns: list[list] = [[None] * cm for _ in range(ck)]
    for i in range(ck):
        for j in range(cm):
            if symmetric and k == m and j < i:
                fns[i][j] = fns[j][i]
            else:
                fns[i][j] = make(d, gen)
    return fns


def random_field(
    chart: Chart,
    grid: Grid,
    degrees: tuple[int, int],
    seed: int,
    symmetric: bool = False,
    kind: str = "trig",
) -> DoubleFormField:
    """Sample a seed-determined smooth (k, m) field on the grid."""
    k, m = degrees
    d = chart.dim
    fns = smooth_component_functions(d, k, m, seed, symmetric=symmetric, kind=kind)
    coords = grid.coords()
    ck, cm = mi.count(d, k), mi.count(d, m)
    vals = np.empty(grid.shape + (ck, cm))
    for i in range(ck):
        for j in range(cm):
            vals[..., i, j] = fns[i][j](coords)
    return DoubleFormField(chart, grid, (k, m), vals)
