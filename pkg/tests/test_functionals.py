import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutform.functionals import (BOUNDARY, FLUX, NORMAL, VOLUME, Functional,
                                 QuadratureRule, ad_gradient, ad_hessian,
                                 evaluate, fd_gradient, segment_quadrature,
                                 tri_quadrature)
from cutform.errors import AssumptionViolation
from cutform.geometries import (circle, f_linear, flux_field, flux_identity,
                                normal_mismatch)
from cutform.levelset import IN, OUT, LevelSet, build_cut, perturb
from cutform.mesh import build_structured_mesh

from oracles import central_difference, interface_length


@pytest.fixture(scope="module")
def mesh10():
    return build_structured_mesh(10, 10)


@pytest.fixture(scope="module")
def mesh32():
    return build_structured_mesh(32, 32)


ONE = Functional(VOLUME, lambda x, y: 1.0, name="vol")


def test_quadrature_weights_sum():
    rule = QuadratureRule.default()
    assert sum(rule.tri_w) == pytest.approx(0.5, abs=1e-15)
    assert sum(rule.seg_w) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("a,b", [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
def test_tri_rule_exact_degree_2(a, b):
    # reference triangle moments have closed form a! b! / (a+b+2)!
    val = tri_quadrature(lambda x, y: x ** a * y ** b,
                         (0.0, 0.0), (1.0, 0.0), (0.0, 1.0))
    exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
    assert val == pytest.approx(exact, rel=1e-14)


@pytest.mark.parametrize("deg", [0, 1, 2, 3])
def test_segment_rule_exact_degree_3(deg):
    val = segment_quadrature(lambda x, y: x ** deg, (0.0, 0.0), (1.0, 0.0))
    assert val == pytest.approx(1.0 / (deg + 1), rel=1e-14)


def test_volume_planar(mesh10):
    phi = LevelSet.from_function(mesh10, lambda x, y: x - 0.55)
    assert evaluate(ONE, build_cut(mesh10, phi)) == pytest.approx(0.55, abs=1e-14)


def test_boundary_length_against_oracle():
    mesh = build_structured_mesh(64, 64)
    phi = LevelSet.from_function(mesh, circle())
    cut = build_cut(mesh, phi)
    j2 = evaluate(Functional(BOUNDARY, lambda x, y: 1.0), cut)
    assert j2 == pytest.approx(interface_length(mesh, phi.values), abs=1e-13)


def test_flux_vertical_interface(mesh10):
    phi = LevelSet.from_function(mesh10, lambda x, y: x - 0.55)
    cut = build_cut(mesh10, phi)
    j3 = evaluate(Functional(FLUX, flux_identity), cut)
    assert j3 == pytest.approx(0.55, abs=1e-13)


def test_volume_out_phase(mesh10):
    phi = LevelSet.from_function(mesh10, lambda x, y: x - 0.55)
    cut = build_cut(mesh10, phi)
    out_vol = evaluate(Functional(VOLUME, lambda x, y: 1.0, phase=OUT), cut)
    assert out_vol == pytest.approx(0.45, abs=1e-14)


def test_ad_gradient_zero_off_band(mesh10):
    phi = LevelSet.from_function(mesh10, lambda x, y: x - 0.55)
    cut = build_cut(mesh10, phi)
    g = ad_gradient(ONE, mesh10, phi, cut=cut)
    band = set(cut.band_nodes)
    for i in range(mesh10.n_vertices):
        if i not in band:
            assert g[i] == 0.0


def test_ad_gradient_matches_global_fd_volume(mesh10):
    # direct oracle: the full functional under a nodal perturbation
    phi = LevelSet.from_function(mesh10, lambda x, y: x - 0.55)
    cut = build_cut(mesh10, phi)
    g = ad_gradient(ONE, mesh10, phi, cut=cut)
    node = int(cut.band_nodes[len(cut.band_nodes) // 2])

    def vol(t):
        return evaluate(ONE, build_cut(mesh10, perturb(phi, node, t)))

    fd = central_difference(vol, 0.0, 1e-6)
    assert g[node] == pytest.approx(fd, abs=1e-9)


def test_ad_gradient_threads_deterministic(mesh10):
    phi = LevelSet.from_function(mesh10, circle())
    g1 = ad_gradient(ONE, mesh10, phi, threads=1)
    g4 = ad_gradient(ONE, mesh10, phi, threads=4)
    assert np.array_equal(g1, g4)


def test_complementarity(mesh32):
    phi = LevelSet.from_function(mesh32, circle())
    cut = build_cut(mesh32, phi)
    f = Functional(VOLUME, f_linear)
    g_in = ad_gradient(f, mesh32, phi, cut=cut)
    g_out = ad_gradient(Functional(VOLUME, f_linear, phase=OUT),
                        mesh32, phi, cut=cut)
    assert np.max(np.abs(g_in + g_out)) <= 1e-13


def test_fd_matches_ad_all_kinds(mesh32):
    phi = LevelSet.from_function(mesh32, circle())
    cut = build_cut(mesh32, phi)
    funcs = [
        Functional(VOLUME, f_linear),
        Functional(BOUNDARY, f_linear),
        Functional(FLUX, flux_field),
        Functional(NORMAL, normal_mismatch),
    ]
    for fu in funcs:
        ad = ad_gradient(fu, mesh32, phi, cut=cut)
        fd = fd_gradient(fu, mesh32, phi, step=1e-6, cut=cut)
        assert np.max(np.abs(ad - fd)) <= 1e-7


def test_fd_planar_tight(mesh10):
    phi = LevelSet.from_function(mesh10, lambda x, y: x - 0.55)
    ad = ad_gradient(Functional(VOLUME, f_linear), mesh10, phi)
    fd = fd_gradient(Functional(VOLUME, f_linear), mesh10, phi, step=1e-6)
    assert np.max(np.abs(ad - fd)) <= 1e-10


def test_fd_topology_flip_guard(mesh10):
    phi = LevelSet.from_function(mesh10, lambda x, y: x - 0.55)
    with pytest.raises(AssumptionViolation):
        fd_gradient(ONE, mesh10, phi, step=0.2)


def test_hessian_symmetry_and_fd(mesh10):
    phi = LevelSet.from_function(mesh10, circle(r=0.31))
    cut = build_cut(mesh10, phi)
    f = Functional(VOLUME, lambda x, y: 1.0)
    nodes = [int(n) for n in cut.band_nodes[:6]]
    H = ad_hessian(f, mesh10, phi, nodes, cut=cut)
    assert np.max(np.abs(H - H.T)) <= 1e-12

    # FD of the AD gradient as an independent second-derivative oracle
    t = 1e-5
    for b, j in enumerate(nodes):
        gp = ad_gradient(f, mesh10, perturb(phi, j, t))
        gm = ad_gradient(f, mesh10, perturb(phi, j, -t))
        col = (gp[nodes] - gm[nodes]) / (2 * t)
        assert np.max(np.abs(H[:, b] - col)) <= 1e-5


def test_hessian_diagonal_fd(mesh10):
    phi = LevelSet.from_function(mesh10, circle(r=0.31))
    cut = build_cut(mesh10, phi)
    f = Functional(VOLUME, lambda x, y: 1.0)
    node = int(cut.band_nodes[4])
    H = ad_hessian(f, mesh10, phi, [node], cut=cut)

    def vol(t):
        return evaluate(f, build_cut(mesh10, perturb(phi, node, t)))

    t = 1e-4
    fd2 = (vol(t) - 2 * vol(0.0) + vol(-t)) / t ** 2
    assert H[0, 0] == pytest.approx(fd2, abs=1e-4)


def test_hessian_rejects_off_band_node(mesh10):
    phi = LevelSet.from_function(mesh10, lambda x, y: x - 0.55)
    with pytest.raises(ValueError):
        ad_hessian(ONE, mesh10, phi, [0])


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000))
def test_quadrature_exact_on_random_cuts_sympy(seed):
    # degree-2 integrand over the IN sub-polygon, symbolic oracle
    import sympy as sp

    rng = np.random.default_rng(seed)
    mesh = build_structured_mesh(2, 2)
    phi = LevelSet(mesh, rng.uniform(-1, 1, mesh.n_vertices))
    cut = build_cut(mesh, phi)
    coeffs = rng.uniform(-1, 1, 6)

    def f(x, y):
        return (coeffs[0] + coeffs[1] * x + coeffs[2] * y + coeffs[3] * x * x
                + coeffs[4] * x * y + coeffs[5] * y * y)

    val = evaluate(Functional(VOLUME, f), cut)

    x, y = sp.symbols("x y")
    fsym = (coeffs[0] + coeffs[1] * x + coeffs[2] * y + coeffs[3] * x ** 2
            + coeffs[4] * x * y + coeffs[5] * y ** 2)

    def tri_integral(p0, p1, p2):
        # affine map to the reference triangle, exact symbolic integration
        u, v = sp.symbols("u v")
        xs = p0[0] + (p1[0] - p0[0]) * u + (p2[0] - p0[0]) * v
        ys = p0[1] + (p1[1] - p0[1]) * u + (p2[1] - p0[1]) * v
        jac = sp.Abs((p1[0] - p0[0]) * (p2[1] - p0[1])
                     - (p2[0] - p0[0]) * (p1[1] - p0[1]))
        inner = sp.integrate(fsym.subs({x: xs, y: ys}), (v, 0, 1 - u))
        return float(sp.integrate(inner, (u, 0, 1)) * jac)

    exact = 0.0
    for k in np.flatnonzero(cut.states == IN):
        p = [tuple(map(float, mesh.vertices[i])) for i in mesh.triangles[k]]
        exact += tri_integral(*p)
    for geom in cut.cut_cells.values():
        for p0, p1, p2, phase in geom.subs:
            if phase == IN:
                exact += tri_integral(p0, p1, p2)
    assert val == pytest.approx(exact, rel=1e-11, abs=1e-12)
