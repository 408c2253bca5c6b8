"""Riemannian geometry induced by normalized smoothed fields.

The unit-variance smoothed field induces a metric whose entries are rational
expressions in a handful of inner products among the field, its gradient and
its Hessian.  Two providers compute those inner products:

* the white-noise path, where independence across voxels collapses the
  double sums to single sums of kernel-derivative products (deterministic,
  usable as the theoretical reference), and
* the ensemble path, where they are sample covariances of the smoothed
  sample and its exact derivatives.

On tensor-product evaluation grids the white-noise sums factor per axis and
are computed by contracting the voxel-occupancy tensor with small per-axis
matrices; arbitrary points fall back to chunked direct summation.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .kernel import GaussianKernel
from .lattice import FieldEnsemble, VoxelSet
from .manifold import EdgeType, RefinedGrid
from .surf import DegenerateFieldError, smooth_on_grid, surf_eval, SurfSpec

__all__ = [
    "MetricField",
    "ChristoffelField",
    "metric",
    "christoffel",
    "metric_on_grid",
    "christoffel_on_grid",
    "orthonormal_frame",
    "theta_angle",
    "sqrt_det_psd",
    "sqrt_det_sub",
]

_EIG_CLIP = 1e-12


# ---------------------------------------------------------------------------
# White-noise moment engines
# ---------------------------------------------------------------------------


class _SeparableMoments:
    """Single sums  sum_v  d^a K(x,v) * d^b K(x,v)  on a tensor grid.

    ``a`` and ``b`` are per-axis derivative order tuples.  The voxel set
    enters as a 0/1 occupancy tensor over its axis values, so arbitrary
    masked domains are exact.
    """

    def __init__(self, kernel: GaussianKernel, domain: VoxelSet, grid: RefinedGrid):
        if kernel.truncation is not None:
            raise NotImplementedError("separable moments require an untruncated kernel")
        self.kernel = kernel
        self.grid = grid
        D = domain.dimension
        shape = tuple(a.size for a in domain.axis_values)
        self.mask = np.zeros(shape)
        pos = tuple(
            np.searchsorted(domain.axis_values[d], domain.coords[:, d]) for d in range(D)
        )
        self.mask[pos] = 1.0
        self.axis_vals = [np.asarray(a) for a in domain.axis_values]
        self._fac: dict[tuple[int, int], np.ndarray] = {}
        self._cache: dict[tuple, np.ndarray] = {}
        self.D = D

    def _factor(self, d: int, order: int) -> np.ndarray:
        key = (d, order)
        if key not in self._fac:
            t = self.grid.axis_coords[d][:, None] - self.axis_vals[d][None, :]
            self._fac[key] = self.kernel.axis_factor(d, t, order)
        return self._fac[key]

    def prefetch(self, pairs) -> None:
        pass  # per-axis factor matrices are already shared across moments

    def moment(self, a: tuple, b: tuple) -> np.ndarray:
        key = tuple((min(x, y), max(x, y)) for x, y in zip(a, b))  # product commutes per axis
        if key in self._cache:
            return self._cache[key]
        out = self.mask
        for d in range(self.D):
            m = self._factor(d, a[d]) * self._factor(d, b[d])
            out = np.moveaxis(np.tensordot(m, out, axes=(1, d)), 0, d)
        pos = self.grid.axis_positions
        gathered = out[tuple(pos[:, d] for d in range(self.D))]
        self._cache[key] = gathered
        return gathered


class _PointMoments:
    """Direct chunked sums of kernel-derivative products at arbitrary points.

    ``prefetch`` computes a batch of moments in one sweep so the per-chunk
    kernel factors are evaluated once and shared.
    """

    def __init__(self, kernel: GaussianKernel, domain: VoxelSet, points: np.ndarray):
        self.kernel = kernel
        self.domain = domain
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.D = domain.dimension
        self._cache: dict[tuple, np.ndarray] = {}

    @staticmethod
    def _key(a: tuple, b: tuple) -> tuple:
        return tuple((min(x, y), max(x, y)) for x, y in zip(a, b))

    def prefetch(self, pairs) -> None:
        keys = [self._key(a, b) for a, b in pairs]
        keys = [k for k in dict.fromkeys(keys) if k not in self._cache]
        if not keys:
            return
        pts, vox = self.points, self.domain.coords
        P, M = pts.shape[0], vox.shape[0]
        sums = {k: np.empty(P) for k in keys}
        orders = {o for k in keys for pair in k for o in pair}
        size = max(1, 20_000_000 // max(M, 1))
        for s in range(0, P, size):
            sl = slice(s, min(s + size, P))
            t = pts[sl, None, :] - vox[None, :, :]
            fac = {
                (d, o): self.kernel.axis_factor(d, t[..., d], o)
                for d in range(self.D)
                for o in orders
            }
            inside = None
            if self.kernel.truncation is not None:
                inside = np.einsum("pmd,pmd->pm", t, t) <= self.kernel.truncation**2
            for k in keys:
                prod = fac[(0, k[0][0])] * fac[(0, k[0][1])]
                for d in range(1, self.D):
                    prod = prod * fac[(d, k[d][0])]
                    prod = prod * fac[(d, k[d][1])]
                if inside is not None:
                    prod = np.where(inside, prod, 0.0)
                sums[k][sl] = prod.sum(axis=1)
        self._cache.update(sums)

    def moment(self, a: tuple, b: tuple) -> np.ndarray:
        key = self._key(a, b)
        if key not in self._cache:
            self.prefetch([(a, b)])
        return self._cache[key]


def _unit(D: int, *axes: int) -> tuple:
    out = [0] * D
    for a in axes:
        out[a] += 1
    return tuple(out)


def _metric_pairs(D: int) -> list[tuple[tuple, tuple]]:
    zero = _unit(D)
    pairs = [(zero, zero)]
    pairs += [(zero, _unit(D, d)) for d in range(D)]
    pairs += [(_unit(D, d), _unit(D, e)) for d in range(D) for e in range(d, D)]
    return pairs


def _christoffel_pairs(D: int) -> list[tuple[tuple, tuple]]:
    zero = _unit(D)
    pairs = list(_metric_pairs(D))
    for k, d in combinations_with_replacement(range(D), 2):
        pairs.append((_unit(D, k, d), zero))
        pairs += [(_unit(D, k, d), _unit(D, e)) for e in range(D)]
    return pairs


def _wn_metric_from(moments) -> np.ndarray:
    D = moments.D
    zero = _unit(D)
    moments.prefetch(_metric_pairs(D))
    S = moments.moment(zero, zero)
    if np.any(S < 1e-30):
        raise DegenerateFieldError("vanishing field variance at an evaluation point")
    Sd = np.stack([moments.moment(zero, _unit(D, d)) for d in range(D)], axis=-1)
    Sdd = np.empty(S.shape + (D, D))
    for d in range(D):
        for e in range(d, D):
            m = moments.moment(_unit(D, d), _unit(D, e))
            Sdd[..., d, e] = Sdd[..., e, d] = m
    lam = Sdd / S[..., None, None] - Sd[..., :, None] * Sd[..., None, :] / (S**2)[..., None, None]
    return lam


def _wn_christoffel_from(moments) -> np.ndarray:
    D = moments.D
    zero = _unit(D)
    moments.prefetch(_christoffel_pairs(D))
    S = moments.moment(zero, zero)
    Sd = np.stack([moments.moment(zero, _unit(D, d)) for d in range(D)], axis=-1)
    Sdd = np.empty(S.shape + (D, D))
    for d in range(D):
        for e in range(d, D):
            Sdd[..., d, e] = Sdd[..., e, d] = moments.moment(_unit(D, d), _unit(D, e))
    T2 = np.empty(S.shape + (D, D, D))  # <dk dd K, dd' K>
    U2 = np.empty(S.shape + (D, D))  # <dk dd K, K>
    for k, d in combinations_with_replacement(range(D), 2):
        U2[..., k, d] = U2[..., d, k] = moments.moment(_unit(D, k, d), zero)
        for e in range(D):
            m = moments.moment(_unit(D, k, d), _unit(D, e))
            T2[..., k, d, e] = T2[..., d, k, e] = m
    return _christoffel_expr(S, Sd, Sdd, T2, U2)


def _christoffel_expr(S, Sd, Sdd, T2, U2) -> np.ndarray:
    iS = 1.0 / S
    g = (
        T2 * iS[..., None, None, None]
        - U2[..., :, :, None] * Sd[..., None, None, :] * (iS**2)[..., None, None, None]
        - Sd[..., :, None, None] * Sdd[..., None, :, :] * (iS**2)[..., None, None, None]
        - Sd[..., None, :, None] * Sdd[..., :, None, :] * (iS**2)[..., None, None, None]
        + 2.0
        * Sd[..., :, None, None]
        * Sd[..., None, :, None]
        * Sd[..., None, None, :]
        * (iS**3)[..., None, None, None]
    )
    return g


# ---------------------------------------------------------------------------
# Ensemble (sample covariance) providers
# ---------------------------------------------------------------------------


def _sample_moments(val: np.ndarray, grad: np.ndarray, hess: np.ndarray | None):
    """Centered sample inner products with the N-1 denominator.

    val (N, P), grad (N, P, D), hess (N, P, D, D) or None.
    Returns (S, Sd, Sdd[, T2, U2]) matching the white-noise layout.
    """
    N = val.shape[0]
    if N < 2:
        raise DegenerateFieldError("sample-based geometry requires at least two fields")
    w = 1.0 / (N - 1)
    cv = val - val.mean(axis=0)
    cg = grad - grad.mean(axis=0)
    S = np.einsum("np,np->p", cv, cv) * w
    if np.any(S <= 0):
        raise DegenerateFieldError("zero sample variance at an evaluation point")
    Sd = np.einsum("np,npd->pd", cv, cg) * w
    Sdd = np.einsum("npd,npe->pde", cg, cg) * w
    if hess is None:
        return S, Sd, Sdd
    ch = hess - hess.mean(axis=0)
    T2 = np.einsum("npkd,npe->pkde", ch, cg) * w
    U2 = np.einsum("npkd,np->pkd", ch, cv) * w
    return S, Sd, Sdd, T2, U2


def _metric_expr(S, Sd, Sdd) -> np.ndarray:
    return Sdd / S[..., None, None] - Sd[..., :, None] * Sd[..., None, :] / (S**2)[
        ..., None, None
    ]


# ---------------------------------------------------------------------------
# Public metric / Christoffel operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricField:
    grid: RefinedGrid
    values: np.ndarray  # (P, D, D)
    source: str


@dataclass(frozen=True)
class ChristoffelField:
    grid: RefinedGrid
    values: np.ndarray  # (P, D, D, D), first two indices symmetric
    source: str


def metric(source, kernel: GaussianKernel, domain: VoxelSet | None, x) -> np.ndarray:
    """Induced metric at point(s) x.

    ``source`` is either the string "white-noise" (deterministic single-sum
    path over ``domain``) or a FieldEnsemble (sample covariances of the
    smoothed sample; ``domain`` defaults to the ensemble's own voxel set).
    Returns (D, D) for a single point or (P, D, D) for a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if isinstance(source, str):
        if source != "white-noise":
            raise ValueError(f"unknown metric source {source!r}")
        if domain is None:
            raise ValueError("white-noise metric requires a voxel domain")
        lam = _wn_metric_from(_PointMoments(kernel, domain, pts))
    else:
        spec = SurfSpec(source, kernel)
        val = surf_eval(spec, pts, "value")
        grad = surf_eval(spec, pts, "gradient")
        S, Sd, Sdd = _sample_moments(val, grad, None)
        lam = _metric_expr(S, Sd, Sdd)
    return lam[0] if single else lam


def christoffel(source, kernel: GaussianKernel, domain: VoxelSet | None, x) -> np.ndarray:
    """First-kind Christoffel symbols at point(s) x, shape (..., D, D, D)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if isinstance(source, str):
        if source != "white-noise":
            raise ValueError(f"unknown christoffel source {source!r}")
        if domain is None:
            raise ValueError("white-noise christoffel requires a voxel domain")
        g = _wn_christoffel_from(_PointMoments(kernel, domain, pts))
    else:
        spec = SurfSpec(source, kernel)
        val = surf_eval(spec, pts, "value")
        grad = surf_eval(spec, pts, "gradient")
        hess = surf_eval(spec, pts, "hessian")
        S, Sd, Sdd, T2, U2 = _sample_moments(val, grad, hess)
        g = _christoffel_expr(S, Sd, Sdd, T2, U2)
    return g[0] if single else g


def metric_on_grid(
    source,
    kernel: GaussianKernel,
    grid: RefinedGrid,
    sample_domain: VoxelSet | None = None,
) -> MetricField:
    """Metric at every grid point; the fast path for curvature integrals."""
    if isinstance(source, str):
        domain = sample_domain or grid.manifold.domain
        if kernel.truncation is None:
            lam = _wn_metric_from(_SeparableMoments(kernel, domain, grid))
        else:
            lam = _wn_metric_from(_PointMoments(kernel, domain, grid.points))
        return MetricField(grid, lam, "white-noise-theory")
    ensemble: FieldEnsemble = source
    if kernel.truncation is None:
        arr = smooth_on_grid(ensemble, kernel, grid, derivatives=1)
        val, grad = arr["value"], arr["grad"]
    else:
        spec = SurfSpec(ensemble, kernel)
        val = surf_eval(spec, grid.points, "value")
        grad = surf_eval(spec, grid.points, "gradient")
    S, Sd, Sdd = _sample_moments(val, grad, None)
    return MetricField(grid, _metric_expr(S, Sd, Sdd), "ensemble-estimate")


def christoffel_on_grid(
    source,
    kernel: GaussianKernel,
    grid: RefinedGrid,
    sample_domain: VoxelSet | None = None,
    point_ids: np.ndarray | None = None,
) -> np.ndarray:
    """Christoffel symbols at all grid points (or a subset), (Q, D, D, D)."""
    if isinstance(source, str):
        domain = sample_domain or grid.manifold.domain
        if kernel.truncation is None:
            g = _wn_christoffel_from(_SeparableMoments(kernel, domain, grid))
            return g if point_ids is None else g[point_ids]
        pts = grid.points if point_ids is None else grid.points[point_ids]
        g = _wn_christoffel_from(_PointMoments(kernel, domain, pts))
        return g
    ensemble: FieldEnsemble = source
    pts = grid.points if point_ids is None else grid.points[point_ids]
    spec = SurfSpec(ensemble, kernel)
    val = surf_eval(spec, pts, "value")
    grad = surf_eval(spec, pts, "gradient")
    hess = surf_eval(spec, pts, "hessian")
    S, Sd, Sdd, T2, U2 = _sample_moments(val, grad, hess)
    return _christoffel_expr(S, Sd, Sdd, T2, U2)


# ---------------------------------------------------------------------------
# Frames and edge angles
# ---------------------------------------------------------------------------


def christoffel_field(
    source,
    kernel: GaussianKernel,
    grid: RefinedGrid,
    sample_domain: VoxelSet | None = None,
) -> ChristoffelField:
    """First-kind Christoffel symbols at every grid point, tagged by source."""
    vals = christoffel_on_grid(source, kernel, grid, sample_domain)
    tag = "white-noise-theory" if isinstance(source, str) else "ensemble-estimate"
    return ChristoffelField(grid, vals, tag)


def orthonormal_frame(lam: np.ndarray, I: tuple[int, int]):
    """Metric-orthonormal frame (U, V, N) adapted to the plane spanned by
    coordinate axes ``I = (k, l)`` (k < l), with N proportional to the
    metric-inverse image of the remaining axis.

    Works on a single (3, 3) matrix or a batch (..., 3, 3).
    """
    lam = np.asarray(lam, dtype=np.float64)
    k, l = I
    if not (0 <= k < l <= 2):
        raise ValueError("I must be an ascending pair of axes in 0..2")
    (m,) = set(range(3)) - {k, l}
    lkk = lam[..., k, k]
    lkl = lam[..., k, l]
    lll = lam[..., l, l]
    c = lkk * lll - lkl**2
    if np.any(lkk <= 0) or np.any(c <= 0):
        raise np.linalg.LinAlgError("metric is singular on the requested plane")
    shape = lam.shape[:-2] + (3,)
    U = np.zeros(shape)
    V = np.zeros(shape)
    U[..., k] = 1.0 / np.sqrt(lkk)
    V[..., k] = lkl / np.sqrt(c * lkk)
    V[..., l] = -np.sqrt(lkk / c)
    em = np.zeros(3)
    em[m] = 1.0
    rhs = np.broadcast_to(em, shape)[..., None]
    sol = np.linalg.solve(lam, rhs)[..., 0]
    N = sol / np.sqrt(sol[..., m])[..., None]
    return U, V, N


def _beta_angle(lam: np.ndarray, convention: str) -> np.ndarray:
    """Opening angle of the canonical solid wedge {y1 <= 0, y2 <= 0} at an
    edge running along axis 0, for metric(s) in edge-adapted coordinates."""
    _, V, N = orthonormal_frame(lam, (0, 1))
    mvec = np.cross(V, N)
    m1, m2, m3 = mvec[..., 0], mvec[..., 1], mvec[..., 2]
    if convention == "euclidean":
        cosb = m2 * m3 / (np.sqrt(m2**2 + m1**2) * np.sqrt(m3**2 + m1**2))
    elif convention == "metric":
        shape = mvec.shape
        a = np.zeros(shape)
        b = np.zeros(shape)
        a[..., 0] = m2 / m1
        a[..., 1] = -1.0
        b[..., 0] = m3 / m1
        b[..., 2] = -1.0
        la = np.einsum("...d,...de,...e->...", a, lam, a)
        lb = np.einsum("...d,...de,...e->...", b, lam, b)
        ab = np.einsum("...d,...de,...e->...", a, lam, b)
        cosb = ab / np.sqrt(la * lb)
    else:
        raise ValueError(f"unknown angle convention {convention!r}")
    return np.arccos(np.clip(cosb, -1.0, 1.0))


def theta_angle(
    lam: np.ndarray,
    tangent_axis: int,
    edge_type: EdgeType,
    refl: tuple[int, int] = (1, 1),
    convention: str = "metric",
) -> np.ndarray:
    """Normal-cone opening contribution of an edge point.

    ``lam`` is the metric at the point(s), (..., 3, 3).  ``refl`` holds the
    +-1 reflections of the two transverse axes (ascending order) that bring
    the occupancy pattern to canonical orientation: solid quadrant at
    (-, -) for convex and double-convex, missing quadrant at (+, +) for
    concave.  Convex edges contribute pi - beta, double-convex -2 beta,
    concave beta - pi.
    """
    lam = np.asarray(lam, dtype=np.float64)
    k = tangent_axis
    p, q = [d for d in range(3) if d != k]
    perm = (k, p, q)
    lamp = lam[..., perm, :][..., :, perm]
    signs = np.array([1.0, float(refl[0]), float(refl[1])])
    lamp = lamp * signs[:, None] * signs[None, :]
    beta = _beta_angle(lamp, convention)
    if edge_type == EdgeType.CONVEX:
        return np.pi - beta
    if edge_type == EdgeType.DOUBLE_CONVEX:
        return -2.0 * beta
    if edge_type == EdgeType.CONCAVE:
        return beta - np.pi
    raise ValueError(f"unknown edge type {edge_type!r}")


def theta_batch(
    lam: np.ndarray,
    tangent_axis: int,
    types: np.ndarray,
    refl: np.ndarray,
    convention: str = "metric",
) -> np.ndarray:
    """Vectorized theta over points sharing a tangent axis.

    ``lam`` (Q, 3, 3), ``types`` (Q,) EdgeType codes, ``refl`` (Q, 2)."""
    k = tangent_axis
    p, q = [d for d in range(3) if d != k]
    perm = (k, p, q)
    lamp = lam[:, perm, :][:, :, perm]
    signs = np.concatenate([np.ones((len(lam), 1)), refl.astype(np.float64)], axis=1)
    lamp = lamp * signs[:, :, None] * signs[:, None, :]
    beta = _beta_angle(lamp, convention)
    out = np.empty(len(lam))
    conv = types == EdgeType.CONVEX
    dbl = types == EdgeType.DOUBLE_CONVEX
    conc = types == EdgeType.CONCAVE
    out[conv] = np.pi - beta[conv]
    out[dbl] = -2.0 * beta[dbl]
    out[conc] = beta[conc] - np.pi
    return out


# ---------------------------------------------------------------------------
# Determinants with PSD repair
# ---------------------------------------------------------------------------


def _closed_det(lam: np.ndarray) -> np.ndarray:
    D = lam.shape[-1]
    if D == 1:
        return lam[..., 0, 0].copy()
    if D == 2:
        return lam[..., 0, 0] * lam[..., 1, 1] - lam[..., 0, 1] ** 2
    a, b, c = lam[..., 0, 0], lam[..., 0, 1], lam[..., 0, 2]
    d, e, f = lam[..., 1, 1], lam[..., 1, 2], lam[..., 2, 2]
    return a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c)


def _is_pd(lam: np.ndarray) -> np.ndarray:
    D = lam.shape[-1]
    ok = lam[..., 0, 0] > 0
    if D >= 2:
        ok &= lam[..., 0, 0] * lam[..., 1, 1] - lam[..., 0, 1] ** 2 > 0
    if D == 3:
        ok &= _closed_det(lam) > 0
    return ok


def sqrt_det_psd(lam: np.ndarray) -> tuple[np.ndarray, int]:
    """sqrt(det) of symmetric matrices, clipping eigenvalues at 1e-12 where
    finite-sample noise made a matrix indefinite.  Returns (values, n_repaired)."""
    lam = np.asarray(lam)
    det = _closed_det(lam)
    bad = ~_is_pd(lam)
    n_bad = int(bad.sum())
    if n_bad:
        ev = np.linalg.eigvalsh(lam[bad])
        det[bad] = np.prod(np.maximum(ev, _EIG_CLIP), axis=-1)
    return np.sqrt(np.maximum(det, 0.0)), n_bad


def sqrt_det_sub(lam: np.ndarray, axes: tuple[int, ...]) -> tuple[np.ndarray, int]:
    """sqrt(det) of the submatrix on the given axes, with the same repair."""
    idx = np.asarray(axes)
    sub = lam[..., idx[:, None], idx[None, :]]
    return sqrt_det_psd(sub)
