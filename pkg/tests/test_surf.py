import math

import numpy as np
import pytest

from surfield.kernel import GaussianKernel
from surfield.lattice import FieldEnsemble, RngSpec, VoxelSet, make_domain_preset, sample_ensemble
from surfield.manifold import VoxelManifold, refined_grid
from surfield.surf import (
    DegenerateFieldError,
    SurfSpec,
    smooth_on_grid,
    surf_covariance,
    surf_eval,
    t_field,
)

LOG2 = math.log(2.0)


def brute_force_surf(kernel, domain, values, x, order):
    """Independent re-summation: explicit python loops over all voxels."""
    D = domain.dimension
    c = 4 * LOG2 / np.asarray(kernel.fwhm) ** 2
    if order == "value":
        out = 0.0
    elif order == "gradient":
        out = np.zeros(D)
    else:
        out = np.zeros((D, D))
    for v, w in zip(domain.coords, values):
        t = np.asarray(x, dtype=float) - v
        k = math.exp(-float(c @ (t * t)))
        if order == "value":
            out += w * k
        elif order == "gradient":
            out += w * (-2 * c * t) * k
        else:
            lin = -2 * c * t
            h = np.outer(lin, lin) + np.diag(-2 * c)
            out += w * h * k
    return out


@pytest.fixture(scope="module")
def small_ensemble():
    dom = VoxelSet(np.array([[u, v] for u in range(5) for v in range(4)], dtype=float))
    return sample_ensemble(dom, 6, RngSpec(31))


def test_indicator_field_value():
    dom = VoxelSet(np.array([[0.0], [1.0], [2.0]]))
    values = np.array([0.0, 1.0, 0.0])
    spec = SurfSpec(FieldEnsemble(dom, values[None]), GaussianKernel.isotropic(2.0, 1))
    assert surf_eval(spec, [[1.0]], field=0)[0] == pytest.approx(1.0, rel=1e-14)


def test_two_voxel_hand_value():
    dom = VoxelSet(np.array([[0.0], [1.0]]))
    spec = SurfSpec(FieldEnsemble(dom, np.array([[1.0, 1.0]])), GaussianKernel.isotropic(2.0, 1))
    got = surf_eval(spec, [[0.5]], field=0)[0]
    assert got == pytest.approx(2 * math.exp(-4 * LOG2 * 0.25 / 4), rel=1e-12)
    assert got == pytest.approx(1.681793, abs=5e-7)


def test_linearity(small_ensemble):
    dom = small_ensemble.domain
    k = GaussianKernel.isotropic(2.0, 2)
    X, Y = small_ensemble.values[0], small_ensemble.values[1]
    a, b = 2.5, -1.25
    combo = FieldEnsemble(dom, (a * X + b * Y)[None])
    pts = np.array([[1.3, 2.7], [0.0, 0.0]])
    lhs = surf_eval(SurfSpec(combo, k), pts, field=0)
    sx = surf_eval(SurfSpec(FieldEnsemble(dom, X[None]), k), pts, field=0)
    sy = surf_eval(SurfSpec(FieldEnsemble(dom, Y[None]), k), pts, field=0)
    assert np.allclose(lhs, a * sx + b * sy, rtol=1e-12)


@pytest.mark.parametrize("order", ["value", "gradient", "hessian"])
def test_matches_brute_force_resummation(small_ensemble, order):
    k = GaussianKernel((1.5, 2.5))
    spec = SurfSpec(small_ensemble, k)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 5, size=(20, 2))
    got = surf_eval(spec, pts, order)
    for i in (0, 3):
        for p in range(len(pts)):
            want = brute_force_surf(k, small_ensemble.domain, small_ensemble.values[i], pts[p], order)
            np.testing.assert_allclose(got[i, p], want, rtol=1e-12, atol=1e-14)


def test_normalized_unit_variance(small_ensemble):
    # the pointwise variance of the normalized field is 1 by construction:
    # sigma(x)^-2 * sum_v K(x,v)^2 with identity lattice covariance
    dom = small_ensemble.domain
    k = GaussianKernel.isotropic(1.8, 2)
    rng = np.random.default_rng(8)
    for x in rng.uniform(0, 4, size=(10, 2)):
        var = surf_covariance(k, dom, x, x)
        kx = k.pairwise_value(x[None], dom.coords)[0]
        norm_var = (kx / math.sqrt(var)) @ (kx / math.sqrt(var))
        assert norm_var == pytest.approx(1.0, rel=1e-12)


def test_normalized_eval_and_derivatives_fd(small_ensemble):
    k = GaussianKernel.isotropic(2.0, 2)
    spec = SurfSpec(small_ensemble, k, normalized=True)
    pts = np.array([[1.7, 1.2]])
    eps = 1e-6
    grad = surf_eval(spec, pts, "gradient")[:, 0]
    hess = surf_eval(spec, pts, "hessian")[:, 0]
    for d in range(2):
        e = np.zeros(2)
        e[d] = eps
        plus = surf_eval(spec, pts + e, "value")[:, 0]
        minus = surf_eval(spec, pts - e, "value")[:, 0]
        np.testing.assert_allclose(grad[:, d], (plus - minus) / (2 * eps), rtol=1e-6)
        gplus = surf_eval(spec, pts + e, "gradient")[:, 0]
        gminus = surf_eval(spec, pts - e, "gradient")[:, 0]
        np.testing.assert_allclose(hess[:, d, :], (gplus - gminus) / (2 * eps), rtol=2e-5)


def test_covariance_symmetry_and_single_sum(small_ensemble):
    dom = small_ensemble.domain
    k = GaussianKernel.isotropic(2.0, 2)
    x, y = np.array([1.1, 0.3]), np.array([3.9, 2.2])
    cxy = surf_covariance(k, dom, x, y)
    cyx = surf_covariance(k, dom, y, x)
    assert cxy == pytest.approx(cyx, rel=1e-13)
    # identity covariance collapses the double sum to a single sum
    kx = k.pairwise_value(x[None], dom.coords)[0]
    ky = k.pairwise_value(y[None], dom.coords)[0]
    assert cxy == pytest.approx(float(kx @ ky), rel=1e-13)
    assert surf_covariance(k, dom, x, x) > 0
    # explicit identity callback agrees with the default
    ident = lambda U, V: np.eye(len(U))
    assert surf_covariance(k, dom, x, y, lattice_cov=ident) == pytest.approx(cxy, rel=1e-12)


def test_sample_variance_matches_covariance():
    dom = make_domain_preset("nonstat1d")
    k = GaussianKernel.isotropic(3.0, 1)
    n = 4000
    ens = sample_ensemble(dom, n, RngSpec(17))
    spec = SurfSpec(ens, k)
    x = np.array([[50.3]])
    vals = surf_eval(spec, x, "value")[:, 0]
    want = surf_covariance(k, dom, x[0], x[0])
    # sample variance of n iid gaussians: sd of the variance ~ var * sqrt(2/(n-1))
    se = want * math.sqrt(2.0 / (n - 1))
    assert abs(vals.var(ddof=1) - want) < 3 * se


def test_t_field_hand_value():
    dom = VoxelSet(np.array([[0.0], [1.0]]))
    k = GaussianKernel.isotropic(2.0, 1)
    # three fields engineered to give smoothed values (1, 2, 3) at x = 0
    kx = k.pairwise_value(np.array([[0.0]]), dom.coords)[0]
    fields = np.array([[c / kx.sum(), c / kx.sum()] for c in (1.0, 2.0, 3.0)])
    spec = SurfSpec(FieldEnsemble(dom, fields), k)
    t = t_field(spec, [[0.0]])
    assert t[0] == pytest.approx(math.sqrt(3) * 2.0 / 1.0, rel=1e-12)
    assert t[0] == pytest.approx(3.464102, abs=5e-7)


def test_t_field_scale_invariance(small_ensemble):
    k = GaussianKernel.isotropic(2.0, 2)
    pts = np.array([[1.5, 1.5], [3.2, 0.4]])
    base = t_field(SurfSpec(small_ensemble, k), pts)
    scaled = FieldEnsemble(small_ensemble.domain, 7.5 * small_ensemble.values)
    assert np.allclose(t_field(SurfSpec(scaled, k), pts), base, rtol=1e-12)


def test_t_field_mean_shift(small_ensemble):
    # adding a constant c to every field shifts the smoothed mean by
    # c * sum_v K(x, v) and leaves the sample sd untouched
    dom = small_ensemble.domain
    k = GaussianKernel.isotropic(2.0, 2)
    x = np.array([[2.0, 1.5]])
    c = 3.0
    shifted = FieldEnsemble(dom, small_ensemble.values + c)
    v0 = surf_eval(SurfSpec(small_ensemble, k), x, "value")
    v1 = surf_eval(SurfSpec(shifted, k), x, "value")
    ksum = k.pairwise_value(x, dom.coords)[0].sum()
    np.testing.assert_allclose(v1 - v0, c * ksum, rtol=1e-12)
    np.testing.assert_allclose(v0.std(ddof=1), v1.std(ddof=1), rtol=1e-12)


def test_t_field_gradient_fd(small_ensemble):
    k = GaussianKernel.isotropic(2.0, 2)
    spec = SurfSpec(small_ensemble, k)
    rng = np.random.default_rng(13)
    pts = rng.uniform(0.5, 3.5, size=(10, 2))
    grad = t_field(spec, pts, "gradient")
    eps = 1e-6
    for d in range(2):
        e = np.zeros(2)
        e[d] = eps
        fd = (t_field(spec, pts + e) - t_field(spec, pts - e)) / (2 * eps)
        np.testing.assert_allclose(grad[:, d], fd, rtol=1e-5)


def test_t_field_requires_two_and_nonzero_variance():
    dom = VoxelSet(np.array([[0.0], [1.0]]))
    k = GaussianKernel.isotropic(2.0, 1)
    with pytest.raises(DegenerateFieldError):
        t_field(SurfSpec(FieldEnsemble(dom, np.ones((1, 2))), k), [[0.5]])
    with pytest.raises(DegenerateFieldError):
        t_field(SurfSpec(FieldEnsemble(dom, np.ones((3, 2))), k), [[0.5]])


def test_tensor_grid_engine_matches_generic(small_ensemble):
    k = GaussianKernel((1.5, 2.5))
    man = VoxelManifold(small_ensemble.domain)
    grid = refined_grid(man, 3)
    arr = smooth_on_grid(small_ensemble, k, grid, derivatives=2)
    spec = SurfSpec(small_ensemble, k)
    np.testing.assert_allclose(arr["value"], surf_eval(spec, grid.points, "value"), rtol=1e-12)
    np.testing.assert_allclose(arr["grad"], surf_eval(spec, grid.points, "gradient"), rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(arr["hess"], surf_eval(spec, grid.points, "hessian"), rtol=1e-12, atol=1e-12)


def test_dimension_mismatch_rejected(small_ensemble):
    with pytest.raises(ValueError):
        SurfSpec(small_ensemble, GaussianKernel.isotropic(2.0, 3))


def test_normalized_degenerate_point_rejected():
    # with a truncated kernel the variance vanishes far from the data
    dom = VoxelSet(np.array([[0.0], [1.0]]))
    k = GaussianKernel.isotropic(1.0, 1, truncation=2.0)
    spec = SurfSpec(FieldEnsemble(dom, np.ones((1, 2))), k, normalized=True)
    with pytest.raises(DegenerateFieldError):
        surf_eval(spec, [[50.0]], "value")


def test_christoffel_field_container():
    from surfield.geometry import christoffel_field

    dom = make_domain_preset("nonstat1d")
    man = VoxelManifold(dom)
    grid = refined_grid(man, 1)
    k = GaussianKernel.isotropic(2.0, 1)
    cf = christoffel_field("white-noise", k, grid)
    assert cf.values.shape == (grid.n_points, 1, 1, 1)
    assert cf.source == "white-noise-theory"
