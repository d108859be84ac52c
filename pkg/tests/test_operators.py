import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.spatial.transform import Rotation

from nyscat import physics, spectral, topology
from nyscat.geometry import MediumParams, Surface, make_sphere
from nyscat.geometry.patches import PlanePatch, TransformedPatch
from nyscat.geometry.surfaces import edge_uv
from nyscat.kernels.green import green, green_gradient
from nyscat.kernels.operators import (
    CLOSED,
    OPEN,
    EfieOperator,
    MfieOperator,
    OperatorConfig,
    _Grid,
    efie_forward,
    efie_forward_open,
    mfie_forward,
    precompute_singular,
    single_layer,
    surface_divergence,
)

K0 = 2.0 * np.pi  # unit wavelength


# ---------------------------------------------------------------------------
# scalar kernel


def test_green_full_period_distance():
    val = green(np.zeros(3), np.array([1.0, 0.0, 0.0]), 2 * np.pi)
    assert abs(val - 1.0 / (4 * np.pi)) < 1e-15


def test_green_static_limit():
    val = green(np.zeros(3), np.array([0.0, 2.0, 0.0]), 0.0)
    assert abs(val - 1.0 / (8 * np.pi)) < 1e-15


def test_green_symmetry_random_pairs():
    rng = np.random.default_rng(2)
    for _ in range(100):
        r, rp = rng.standard_normal(3), rng.standard_normal(3)
        assert green(r, rp, 1.7) == green(rp, r, 1.7)


def test_green_coincident_points_rejected():
    p = np.array([0.3, -0.1, 0.8])
    with pytest.raises(ValueError):
        green(p, p, 1.0)
    with pytest.raises(ValueError):
        green_gradient(p, p.copy(), 1.0)


# ---------------------------------------------------------------------------
# surface divergence


def _flat_surface():
    patch = PlanePatch((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    return Surface.assemble([patch], closed=False)


def _density_from_components(surface, n, fu, fv, kind="closed"):
    nodes = spectral.cc_nodes(n) if kind == "closed" else spectral.fejer_nodes(n)
    uu, vv = np.meshgrid(nodes, nodes, indexing="ij")
    grids = np.empty((surface.n_patches, n, n, 2), dtype=complex)
    for p, patch in enumerate(surface.patches):
        fr = patch.frames(uu.ravel(), vv.ravel())
        grids[p, ..., 0] = fu(uu, vv, fr)
        grids[p, ..., 1] = fv(uu, vv, fr)
    return topology.grids_to_full(grids)


def test_surface_divergence_constant_field_is_zero():
    surf = _flat_surface()
    dens = _density_from_components(surf, 9,
                                    lambda u, v, fr: np.ones_like(u),
                                    lambda u, v, fr: np.zeros_like(u))
    div = surface_divergence(dens, surf, 9)
    assert np.abs(div).max() < 1e-13


def test_surface_divergence_linear_field():
    surf = _flat_surface()
    dens = _density_from_components(surf, 9,
                                    lambda u, v, fr: u,
                                    lambda u, v, fr: np.zeros_like(u))
    div = surface_divergence(dens, surf, 9)
    np.testing.assert_allclose(div, np.ones_like(div), atol=1e-12)


def test_surface_divergence_sphere_harmonic_gradient():
    # J = grad_s z on the unit sphere has divergence -2z (degree-1 harmonic)
    surf = make_sphere(2.0)
    n = 18

    def comp(i):
        def f(u, v, fr):
            cu = fr.a_u[:, 2].reshape(u.shape)
            cv = fr.a_v[:, 2].reshape(u.shape)
            gi = fr.ginv.reshape(u.shape + (2, 2))
            return gi[..., i, 0] * cu + gi[..., i, 1] * cv
        return f

    dens = _density_from_components(surf, n, comp(0), comp(1))
    div = surface_divergence(dens, surf, n)
    nodes = spectral.cc_nodes(n)
    uu, vv = np.meshgrid(nodes, nodes, indexing="ij")
    for p, patch in enumerate(surf.patches):
        z = patch.point(uu.ravel(), vv.ravel())[:, 2].reshape(n, n)
        np.testing.assert_allclose(div[p], -2.0 * z, atol=1e-8)


# ---------------------------------------------------------------------------
# singular correction rows vs adaptive oracle

_CORNERS = [np.array(c, dtype=float)
            for c in [(-1, -1), (1, -1), (1, 1), (-1, 1)]]


def _adaptive_patch_integral(patch, k, apex_uv, rho, rtol=1e-12):
    """Integral of G(x(apex), .) rho dsigma over one patch.

    Splits the parameter square into triangles fanned from the apex; in the
    scaled triangle coordinate the kernel times the area element stays
    bounded, so nested adaptive quadrature converges to full accuracy.
    """
    a = np.asarray(apex_uv, dtype=float)
    target = patch.point(np.array(apex_uv[0]), np.array(apex_uv[1]))
    total = 0.0 + 0.0j
    for i in range(4):
        ca, cb = _CORNERS[i], _CORNERS[(i + 1) % 4]
        ea, eb = ca - a, cb - a
        area2 = abs(ea[0] * eb[1] - ea[1] * eb[0])
        if area2 < 1e-14:
            continue

        def inner(s, ca=ca, cb=cb, area2=area2):
            def f(t):
                uv = a + s * (ca + t * (cb - ca) - a)
                fr = patch.frames(np.array(uv[0]), np.array(uv[1]))
                val = green(target, fr.point, k) * rho(uv[0], uv[1]) * fr.jac
                return np.asarray(val * s * area2)
            return quad_vec(f, 0.0, 1.0, epsabs=1e-14, epsrel=rtol)[0]

        val, _ = quad_vec(inner, 0.0, 1.0, epsabs=1e-14, epsrel=rtol)
        total += complex(val)
    return total


@pytest.fixture(scope="module")
def sphere_correction():
    patch = make_sphere(2.0).patches[0]
    return patch, precompute_singular(patch, K0, 10, "closed")


def test_singular_row_constant_density(sphere_correction):
    patch, corr = sphere_correction
    n = corr.n
    nodes = spectral.cc_nodes(n)
    iu, iv = 3, 4
    oracle = _adaptive_patch_integral(patch, K0, (nodes[iu], nodes[iv]),
                                      lambda u, v: 1.0)
    got = corr.weights[iu * n + iv].sum()
    assert abs(got - oracle) / abs(oracle) < 1e-10


def test_singular_row_polynomial_density(sphere_correction):
    patch, corr = sphere_correction
    n = corr.n
    nodes = spectral.cc_nodes(n)
    iu, iv = 3, 4

    def rho(u, v):
        return (2.0 * u * u - 1.0) * v

    oracle = _adaptive_patch_integral(patch, K0, (nodes[iu], nodes[iv]), rho)
    uu, vv = np.meshgrid(nodes, nodes, indexing="ij")
    got = corr.weights[iu * n + iv] @ rho(uu, vv).ravel()
    assert abs(got - oracle) / abs(oracle) < 1e-9


def test_singular_weights_finite_and_bounded(sphere_correction):
    _, corr = sphere_correction
    assert np.all(np.isfinite(corr.weights))
    area = 4 * np.pi / 6  # one sixth of the unit sphere
    assert np.abs(corr.weights).max() < 1e3 * area / corr.n**2


# ---------------------------------------------------------------------------
# single-layer potential on the sphere


def _sphere_layer_values(k, n):
    surf = make_sphere(2.0)
    corr = [precompute_singular(p, k, n, "closed", pid)
            for pid, p in enumerate(surf.patches)]
    nodes = spectral.cc_nodes(n)
    uu, vv = np.meshgrid(nodes, nodes, indexing="ij")
    targets = np.concatenate([p.point(uu.ravel(), vv.ravel())
                              for p in surf.patches])
    return surf, corr, targets


def test_single_layer_uniform_density_oscillatory():
    # unit sphere, rho = 1: potential a(e^{2ika}-1)/(2ika) at every node
    k, n = 1.0, 12
    surf, corr, targets = _sphere_layer_values(k, n)
    vals = single_layer(np.ones((6, n, n)), targets, surf, corr)
    exact = (np.exp(2j * k) - 1.0) / (2j * k)
    assert np.abs(vals - exact).max() / abs(exact) < 1e-8


def test_single_layer_uniform_density_static():
    # k = 0: classical uniform layer, potential equal to the radius
    n = 12
    surf, corr, targets = _sphere_layer_values(0.0, n)
    vals = single_layer(np.ones((6, n, n)), targets, surf, corr)
    assert np.abs(vals - 1.0).max() < 1e-8


def test_single_layer_linearity_and_vector_path():
    k, n = 1.0, 8
    surf, corr, targets = _sphere_layer_values(k, n)
    rng = np.random.default_rng(3)
    rho = rng.standard_normal((6, n, n)) + 1j * rng.standard_normal((6, n, n))
    base = single_layer(rho, targets, surf, corr)
    scaled = single_layer((2.0 - 0.5j) * rho, targets, surf, corr)
    assert np.abs(scaled - (2.0 - 0.5j) * base).max() <= 1e-13 * np.abs(base).max()
    # a Cartesian-vector density is handled componentwise
    vec = np.zeros((6, n, n, 3), dtype=complex)
    vec[..., 1] = rho
    out = single_layer(vec, targets, surf, corr)
    assert np.abs(out[:, 1] - base).max() < 1e-14 * np.abs(base).max()
    assert np.abs(out[:, [0, 2]]).max() == 0.0


def test_single_layer_requires_matching_corrections():
    k, n = 1.0, 8
    surf, corr, targets = _sphere_layer_values(k, n)
    with pytest.raises(ValueError):
        single_layer(np.ones((6, n, n)), targets, surf, corr[:-1])
    with pytest.raises(ValueError):
        single_layer(np.ones((6, n + 1, n + 1)), targets, surf, corr)


# ---------------------------------------------------------------------------
# operator configuration


def test_operator_config_validation():
    with pytest.raises(ValueError):
        OperatorConfig(variant="diagonal")
    with pytest.raises(ValueError):
        OperatorConfig(fan_threshold=0.0)
    with pytest.raises(ValueError):
        OperatorConfig(fan_threshold=0.5, near_threshold=0.4)
    with pytest.raises(ValueError):
        OperatorConfig(near_threshold=1.0)
    with pytest.raises(ValueError):
        OperatorConfig(refine_factor=1)


# ---------------------------------------------------------------------------
# electric-field forward map


def test_efie_linearity(efie_op):
    op = efie_op(8)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    y = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    lhs = efie_forward(2.0 * x + 0.5j * y, op)
    rhs = 2.0 * efie_forward(x, op) + 0.5j * efie_forward(y, op)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_efie_output_tangency(efie_op):
    op = efie_op(8)
    rng = np.random.default_rng(1)
    x = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    cart = op.cartesian_current(op.apply(x))
    for p, d in enumerate(op.grid.data):
        dots = np.abs(np.einsum("sc,sc->s", cart[p], d.normal.astype(complex)))
        mags = np.linalg.norm(cart[p], axis=1)
        assert np.all(dots < 1e-10 * mags)


def test_efie_variant_guards(efie_op):
    closed_op = efie_op(8)
    open_op = efie_op(8, OPEN)
    with pytest.raises(ValueError):
        efie_forward(np.zeros(open_op.n_unknowns, complex), open_op)
    with pytest.raises(ValueError):
        efie_forward_open(np.zeros(closed_op.n_unknowns, complex), closed_op)
    with pytest.raises(ValueError):
        closed_op.apply(np.zeros(closed_op.n_unknowns + 1, complex))


def test_efie_open_linearity_and_tangency(efie_op):
    op = efie_op(8, OPEN)
    rng = np.random.default_rng(4)
    x = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    y = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    lhs = efie_forward_open(x + 2j * y, op)
    rhs = efie_forward_open(x, op) + 2j * efie_forward_open(y, op)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)
    cart = op.cartesian_current(op.apply(x))
    for p, d in enumerate(op.grid.data):
        dots = np.abs(np.einsum("sc,sc->s", cart[p], d.normal.astype(complex)))
        mags = np.linalg.norm(cart[p], axis=1)
        assert np.all(dots < 1e-10 * mags)


def _plane_wave_unknowns(op, pol, direction, k):
    def field(pts):
        return pol[None, :] * np.exp(1j * k * (pts @ direction))[:, None]
    return op.rhs(field)


def test_efie_rotation_invariance(efie_op, medium):
    op = efie_op(8)
    rot = Rotation.from_euler("zyx", [0.3, 0.4, 0.5]).as_matrix()
    rotated = Surface.assemble(
        [TransformedPatch(p, rotation=rot) for p in op.grid.surface.patches])
    op_r = EfieOperator(rotated, 8, medium)
    x = _plane_wave_unknowns(op, np.array([1.0, 0, 0]), np.array([0.0, 0, 1.0]),
                             medium.wavenumber)
    x_r = _plane_wave_unknowns(op_r, rot @ np.array([1.0, 0, 0]),
                               rot @ np.array([0.0, 0, 1.0]), medium.wavenumber)
    n0 = np.linalg.norm(op.apply(x))
    n1 = np.linalg.norm(op_r.apply(x_r))
    assert abs(n0 - n1) <= 1e-10 * n0


def test_efie_grid_refinement_cauchy(efie_op, mie):
    # fixed smooth density, outputs compared at a fixed physical point (a
    # patch corner, present on every grid) must converge geometrically
    vals = []
    for n in (8, 10, 12, 14):
        op = efie_op(n)
        x = physics.project_current(mie[0], op)
        vals.append(op.cartesian_current(op.apply(x))[0, 0])
    d1, d2, d3 = (np.linalg.norm(vals[i + 1] - vals[i]) for i in range(3))
    assert d2 < 0.6 * d1
    assert d3 < 0.6 * d2


# ---------------------------------------------------------------------------
# interior-edge contour term: continuity makes it vanish


def _edge_grid_line(grids, n, e):
    if e in (0, 2):
        iv = n - 1 if e == 0 else 0
        return grids[:, iv, :]
    iu = 0 if e == 1 else n - 1
    return grids[iu, :, :]


def _conormal(fr, e):
    """Unit in-surface outward normal along a patch edge."""
    gi = fr.ginv
    if e in (0, 2):
        vec = gi[:, 1, 0, None] * fr.a_u + gi[:, 1, 1, None] * fr.a_v
        sgn = -1.0 if e == 0 else 1.0
    else:
        vec = gi[:, 0, 0, None] * fr.a_u + gi[:, 0, 1, None] * fr.a_v
        sgn = 1.0 if e == 1 else -1.0
    vec = sgn * vec
    return vec / np.linalg.norm(vec, axis=1)[:, None]


def test_shared_edge_contour_term_cancels(sphere, medium):
    """A grid density with point continuity radiates as if the per-patch
    scalar-potential boundary terms were absent: the explicit line integral
    along one interior edge, evaluated from both sides, changes the
    off-surface scattered field by less than 1e-8 relative."""
    n = 22
    k, eta = medium.wavenumber, medium.impedance
    g = _Grid(sphere, n, "closed")

    vec = np.empty((6, n * n, 3), dtype=complex)
    for p, d in enumerate(g.data):
        e_inc = np.zeros((n * n, 3), dtype=complex)
        e_inc[:, 0] = np.exp(1j * k * d.point[:, 2])
        vec[p] = np.cross(d.normal, e_inc)
    full = g.expand(g.compress(g.full_from_cartesian(vec)))
    grids = topology.full_to_grids(full, 6, n)

    em = sphere.adjacency[0]

    def edge_side(p, e, t):
        u, v = edge_uv(e, np.asarray(t, dtype=float))
        fr = sphere.patches[p].frames(u, v)
        comp = spectral.interp_matrix(g.nodes, t) @ _edge_grid_line(grids[p], n, e)
        j = comp[:, 0, None] * fr.a_u + comp[:, 1, None] * fr.a_v
        return fr, j

    # both parametrizations trace the same physical curve
    ts = np.linspace(-1.0, 1.0, 7)
    tb = -ts if em.flipped else ts
    fr_a, _ = edge_side(em.patch_a, em.edge_a, ts)
    fr_b, _ = edge_side(em.patch_b, em.edge_b, tb)
    assert np.abs(fr_a.point - fr_b.point).max() < 1e-12

    mid = sphere.patches[em.patch_a].frames(
        *edge_uv(em.edge_a, np.array([0.0])))
    x0 = mid.point[0] + 0.5 * mid.normal[0]

    def integrand(t):
        t = np.atleast_1d(t)
        fr1, j1 = edge_side(em.patch_a, em.edge_a, t)
        fr2, j2 = edge_side(em.patch_b, em.edge_b, -t if em.flipped else t)
        jump = (np.einsum("tc,tc->t", j1, _conormal(fr1, em.edge_a))
                + np.einsum("tc,tc->t", j2, _conormal(fr2, em.edge_b)))
        dl = np.linalg.norm(fr1.a_u if em.edge_a in (0, 2) else fr1.a_v, axis=1)
        return (green_gradient(x0[None], fr1.point, k) * (jump * dl)[:, None])[0]

    val, _ = quad_vec(integrand, -1.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    delta_e = (1j * eta / k) * val

    # off-surface scattered field of the same density by the plain rule
    j_cart = g.cartesian_from_grids(grids).reshape(-1, 3)
    div = surface_divergence(full, sphere, n, "closed").reshape(-1)
    w = g.src_wjac
    pot_a = (w[:, None] * j_cart * green(x0[None], g.src_points, k)[:, None]).sum(0)
    grad_phi = (w[:, None] * green_gradient(x0[None], g.src_points, k)
                * div[:, None]).sum(0)
    e_s = 1j * k * eta * (pot_a + grad_phi / k**2)
    assert np.linalg.norm(delta_e) < 1e-8 * np.linalg.norm(e_s)


# ---------------------------------------------------------------------------
# magnetic-field forward map


@pytest.fixture(scope="module")
def mfie_open_8(sphere, medium):
    return MfieOperator(sphere, 8, medium, OperatorConfig(variant=OPEN))


def test_mfie_linearity(mfie_open_8):
    op = mfie_open_8
    rng = np.random.default_rng(5)
    x = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    y = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    lhs = mfie_forward(1.5 * x - 2j * y, op)
    rhs = 1.5 * mfie_forward(x, op) - 2j * mfie_forward(y, op)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_mfie_zero_density(mfie_open_8):
    out = mfie_forward(np.zeros(mfie_open_8.n_unknowns, complex), mfie_open_8)
    assert np.linalg.norm(out) == 0.0


def test_mfie_output_tangency(mfie_open_8):
    op = mfie_open_8
    rng = np.random.default_rng(6)
    x = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    cart = op.cartesian_current(op.apply(x))
    for p, d in enumerate(op.grid.data):
        dots = np.abs(np.einsum("sc,sc->s", cart[p], d.normal.astype(complex)))
        mags = np.linalg.norm(cart[p], axis=1)
        assert np.all(dots < 1e-10 * mags)


def test_mfie_materialized_matches_chunked(sphere, medium):
    cfg = OperatorConfig(variant=OPEN)
    dense = MfieOperator(sphere, 6, medium, cfg, mem_budget=1e12)
    chunked = MfieOperator(sphere, 6, medium, cfg, mem_budget=0)
    assert dense.materialized and not chunked.materialized
    rng = np.random.default_rng(7)
    x = rng.standard_normal(dense.n_unknowns) + 1j * rng.standard_normal(dense.n_unknowns)
    a, b = dense.apply(x), chunked.apply(x)
    assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(a)
