"""Level-set geometries and integrands used by the demos and the CLI."""

from __future__ import annotations

import math

import numpy as np

from .dual import gcos, ghypot, gsin, gsqrt
from .levelset import LevelSet
from .mesh import Mesh2D


def circle(cx=0.5, cy=0.5, r=0.23):
    """Signed distance to a circle; negative inside."""
    def fn(x, y):
        return gsqrt((x - cx) ** 2 + (y - cy) ** 2) - r
    return fn


def coscos(threshold=0.11):
    def fn(x, y):
        return gcos(2.0 * math.pi * x) * gcos(2.0 * math.pi * y) - threshold
    return fn


def slanted_line(slope=0.31, offset=0.553):
    """Straight interface hitting the box boundary at a non-normal angle."""
    def fn(x, y):
        return x + slope * y - offset
    return fn


def vertical_line(c=0.55):
    def fn(x, y):
        return x - c
    return fn


def ring(cx=0.5, cy=0.5, r_mid=0.36, half_width=0.06):
    """Annulus; a single IN volume looping around the domain centre."""
    def fn(x, y):
        return abs(math.hypot(x - cx, y - cy) - r_mid) - half_width
    return fn


def two_circles(c1=(0.3, 0.5), c2=(0.7, 0.5), r=0.15):
    """Union of two disjoint disks (min of the two signed distances)."""
    def fn(x, y):
        d1 = math.hypot(x - c1[0], y - c1[1]) - r
        d2 = math.hypot(x - c2[0], y - c2[1]) - r
        return min(d1, d2)
    return fn


def quadratic_circle(cx=0.5, cy=0.5, r=0.23, scale=2.0):
    """Circle with a non-unit, radius-dependent gradient (reinit test case)."""
    def fn(x, y):
        return scale * ((x - cx) ** 2 + (y - cy) ** 2 - r * r)
    return fn


def hole_lattice(kx=3.0, ky=3.0, threshold=0.4):
    """Periodic hole pattern; material where cos*cos < threshold."""
    def fn(x, y):
        return math.cos(kx * math.pi * x) * math.cos(ky * math.pi * y) + threshold
    return fn


def with_material_disk(base_fn, cx, cy, r):
    """Force material (phi < 0) inside a disk, keep ``base_fn`` elsewhere."""
    def fn(x, y):
        return min(base_fn(x, y), math.hypot(x - cx, y - cy) - r)
    return fn


GEOMETRIES = {
    "circle": circle(),
    "coscos": coscos(),
    "slanted": slanted_line(),
    "vline": vertical_line(),
    "ring": ring(),
    "two_circles": two_circles(),
    "quadratic_circle": quadratic_circle(),
}


def make_levelset(mesh: Mesh2D, geometry: str) -> LevelSet:
    if geometry not in GEOMETRIES:
        raise KeyError(f"unknown geometry {geometry!r}; "
                       f"choose from {sorted(GEOMETRIES)}")
    return LevelSet.from_function(mesh, GEOMETRIES[geometry])


# -- integrands for the verification table -----------------------------------

def f_linear(x, y):
    """f(x, y) = x + y, evaluable on duals."""
    return x + y


def grad_f_linear(x, y):
    return (1.0, 1.0)


def flux_field(x, y):
    """F = (x^2/2, y^2/2); div F = x + y matches the scalar integrand."""
    return (x * x * 0.5, y * y * 0.5)


def div_flux_field(x, y):
    return x + y


def flux_identity(x, y):
    """F = (x, y); div F = 2."""
    return (x, y)


def target_normal(x, y):
    """Normalised gradient of x - sin(pi*y/3)/10."""
    gx = 1.0
    gy = -(math.pi / 30.0) * gcos(math.pi * y / 3.0)
    n = ghypot(gx, gy)
    return (gx / n, gy / n)


def normal_mismatch(x, y, nx, ny):
    """g(n) = ||n - n_g(x)||^2 with n_g the target normal field."""
    tx, ty = target_normal(x, y)
    return (nx - tx) ** 2 + (ny - ty) ** 2


_ = (gsin, np)  # re-exported helpers occasionally used by configs
