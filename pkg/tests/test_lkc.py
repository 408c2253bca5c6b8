import math

import numpy as np
import pytest

from surfield.geometry import sqrt_det_psd, sqrt_det_sub, theta_batch
from surfield.kernel import GaussianKernel
from surfield.lattice import RngSpec, VoxelSet, make_domain_preset, sample_ensemble
from surfield.lkc import LkcVector, lkc_compute, lkc_stationary_closed_form
from surfield.manifold import VoxelManifold, euler_characteristic, refined_grid

LOG2 = math.log(2.0)

# reference theoretical values for the boundary-padded box examples
# (independent-noise metric, trapezoid integrals at the stated resolution)
CLOSED_FORM_D1 = {1: 166.51, 1.5: 111.01, 2: 83.26, 2.5: 66.60, 3: 55.50, 3.5: 47.57, 4: 41.63}
CLOSED_FORM_D2 = {
    1: (66.60, 1109.00), 1.5: (44.40, 492.90), 2: (33.30, 277.26), 2.5: (26.64, 177.45),
    3: (22.20, 123.23), 3.5: (19.03, 90.53), 4: (16.65, 69.31),
}
CLOSED_FORM_D3 = {
    1: (99.91, 3327.11, 36933.30), 1.5: (66.60, 1478.71, 10943.20), 2: (49.95, 831.78, 4616.66),
    2.5: (39.96, 532.34, 2363.73), 3: (33.30, 369.68, 1367.90), 3.5: (28.54, 271.60, 861.42),
    4: (24.98, 207.94, 577.08),
}


def box_manifold(*dims):
    axes = [np.arange(1.0, n + 1.0) for n in dims]
    grids = np.meshgrid(*axes, indexing="ij")
    return VoxelManifold(VoxelSet(np.column_stack([g.ravel() for g in grids])))


def constant_metric_lkcs(grid, lam):
    """Drive the quadrature tables with a fixed metric (internal identity check)."""
    D = grid.dimension
    dom = grid.manifold.domain
    lam_pts = np.broadcast_to(lam, (grid.n_points, D, D))
    cell = np.prod(dom.spacing / (grid.r + 1))
    dets, _ = sqrt_det_psd(lam_pts)
    l_top = float(np.sum(grid.vol_weight * dets) * cell)
    l_bnd = 0.0
    for m in range(D):
        t = grid.face_tables[m]
        I = tuple(d for d in range(D) if d != m)
        sub, _ = sqrt_det_sub(lam_pts[t["ids"]], I)
        l_bnd += float(np.sum(t["weights"] * sub) * np.prod(dom.spacing[list(I)] / (grid.r + 1)))
    out = {grid.dimension: l_top, grid.dimension - 1: 0.5 * l_bnd}
    if D == 3:
        l1 = 0.0
        for t in grid.edge_tables:
            k = t["tangent"]
            theta = theta_batch(lam_pts[t["ids"]], k, t["types"], t["refl"])
            length, _ = sqrt_det_sub(lam_pts[t["ids"]], (k,))
            l1 += float(np.sum(t["weights"] * theta * length) * dom.spacing[k] / (grid.r + 1))
        out[1] = l1 / (2 * math.pi)
    return out


@pytest.mark.parametrize("f,want", list(CLOSED_FORM_D1.items()))
def test_closed_form_d1(f, want):
    vec = lkc_stationary_closed_form([100.0], f)
    assert vec[0] == 1.0
    assert vec[1] == pytest.approx(want, rel=2e-4)


@pytest.mark.parametrize("f,want", list(CLOSED_FORM_D2.items()))
def test_closed_form_d2(f, want):
    vec = lkc_stationary_closed_form([20.0, 20.0], f)
    assert (vec[1], vec[2]) == (pytest.approx(want[0], rel=2e-4), pytest.approx(want[1], rel=2e-4))


@pytest.mark.parametrize("f,want", list(CLOSED_FORM_D3.items()))
def test_closed_form_d3(f, want):
    vec = lkc_stationary_closed_form([20.0] * 3, f)
    for d in (1, 2, 3):
        assert vec[d] == pytest.approx(want[d - 1], rel=2e-4)


def test_closed_form_validation():
    with pytest.raises(ValueError):
        lkc_stationary_closed_form([0.0], 2.0)
    with pytest.raises(ValueError):
        lkc_stationary_closed_form([1.0], -2.0)


def test_white_noise_d1_reference():
    dom = make_domain_preset("stat1d", 3.0)
    vec = lkc_compute("white-noise", GaussianKernel.isotropic(3.0, 1), VoxelManifold(dom.interior),
                      11, sample_domain=dom)
    assert vec[1] == pytest.approx(55.50, rel=5e-3)
    assert vec[0] == 1.0


def test_white_noise_convergence_in_r():
    # successive refinements form a Cauchy sequence: r = 11 vs r = 23 within 0.2%
    dom = make_domain_preset("stat2d", 2.0)
    man = VoxelManifold(dom.interior)
    k = GaussianKernel.isotropic(2.0, 2)
    a = lkc_compute("white-noise", k, man, 11, sample_domain=dom)
    b = lkc_compute("white-noise", k, man, 23, sample_domain=dom)
    for d in (1, 2):
        assert abs(a[d] - b[d]) / b[d] < 0.002


def test_constant_metric_cube_identity():
    # constant c^2 I on an a x b x c box: the quadrature reproduces
    # L1 = c(a+b+c), L2 = c^2(ab+ac+bc), L3 = c^3 abc exactly
    a, b, c_len = 3, 2, 4
    scale = 1.7
    man = box_manifold(a, b, c_len)
    grid = refined_grid(man, 1)
    got = constant_metric_lkcs(grid, scale**2 * np.eye(3))
    assert got[3] == pytest.approx(scale**3 * a * b * c_len, rel=1e-12)
    assert got[2] == pytest.approx(scale**2 * (a * b + a * c_len + b * c_len), rel=1e-12)
    assert got[1] == pytest.approx(scale * (a + b + c_len), rel=1e-12)


def test_constant_metric_square_identity():
    side = 5
    man = box_manifold(side, side)
    grid = refined_grid(man, 3)
    got = constant_metric_lkcs(grid, 4.0 * np.eye(2))
    assert got[2] == pytest.approx(4.0 * side * side, rel=1e-12)
    assert got[1] == pytest.approx(2.0 * (side + side), rel=1e-12)


def test_l0_is_euler_characteristic():
    dom = make_domain_preset("nonstat2d")
    man = VoxelManifold(dom)
    vec = lkc_compute("white-noise", GaussianKernel.isotropic(2.0, 2), man, 1)
    assert vec[0] == float(euler_characteristic(man)) == 0.0


def test_ensemble_estimates_track_theory_d2():
    dom = make_domain_preset("stat2d", 3.0)
    man = VoxelManifold(dom.interior)
    k = GaussianKernel.isotropic(3.0, 2)
    theory = lkc_compute("white-noise", k, man, 3, sample_domain=dom)
    reps = 40
    n = 20
    est = np.array([
        lkc_compute(sample_ensemble(dom, n, RngSpec(1000, b)), k, man, 3).values
        for b in range(reps)
    ])
    # pointwise unbiasedness of the sqrt-determinant makes the mean land on
    # the same-resolution theory value; allow 3 standard errors
    for d in (1, 2):
        se = est[:, d].std(ddof=1) / math.sqrt(reps)
        assert abs(est[:, d].mean() - theory[d]) < 3 * se


def test_consistency_sd_shrinks_with_n():
    dom = make_domain_preset("stat1d", 3.0)
    man = VoxelManifold(dom.interior)
    k = GaussianKernel.isotropic(3.0, 1)
    reps = 30
    sds = {}
    for n in (10, 100):
        vals = [
            lkc_compute(sample_ensemble(dom, n, RngSpec(55, b)), k, man, 3)[1]
            for b in range(reps)
        ]
        sds[n] = np.std(vals, ddof=1)
    assert sds[10] / sds[100] > 1.5


def test_nonstat_presets_compute():
    dom = make_domain_preset("nonstat2d")
    man = VoxelManifold(dom)
    vec = lkc_compute("white-noise", GaussianKernel.isotropic(2.0, 2), man, 3)
    assert vec[2] > 0 and vec[1] > 0
    dom3 = make_domain_preset("nonstat3d")
    man3 = VoxelManifold(dom3)
    vec3 = lkc_compute("white-noise", GaussianKernel.isotropic(3.0, 3), man3, 1)
    assert vec3[3] > 0 and vec3[2] > 0
    assert vec3.l1_locally_stationary


def test_face_term_vanishes_for_nearly_stationary_field():
    # with boundary padding the metric is nearly constant, so the optional
    # face correction must be negligible against the edge term
    dom = make_domain_preset("stat3d", 3.0)
    man = VoxelManifold(dom.interior)
    k = GaussianKernel.isotropic(3.0, 3)
    base = lkc_compute("white-noise", k, man, 1, sample_domain=dom)
    with_face = lkc_compute(
        "white-noise", k, man, 1, sample_domain=dom, include_face_term=True
    )
    assert abs(with_face[1] - base[1]) < 0.005 * base[1]


def test_r0_rejected_and_bad_ensemble_rejected():
    dom = make_domain_preset("nonstat1d")
    man = VoxelManifold(dom)
    k = GaussianKernel.isotropic(2.0, 1)
    with pytest.raises(ValueError):
        lkc_compute("white-noise", k, man, 0)
    with pytest.raises(ValueError):
        lkc_compute(sample_ensemble(dom, 1, RngSpec(0)), k, man, 1)


def test_lkc_vector_invariants():
    with pytest.raises(ValueError):
        LkcVector((1.0, 2.0, -0.5), r=1, source="estimate")
