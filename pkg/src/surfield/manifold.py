"""Voxel manifolds: unions of axis-aligned boxes, their strata, and grids.

Each voxel v spans the closed box prod_d [v_d - delta_d/2, v_d + delta_d/2].
The union of these boxes is the continuous analysis domain.  Its boundary
decomposes into faces, (in 3D) edges of three kinds, and vertices; this
module builds the refined evaluation grids, classifies every grid point into
its stratum, precomputes quadrature tables used by the curvature integrals,
and computes the Euler characteristic of the box union combinatorially.

All lattice combinatorics run on adjacency-preserving integer indices, so
shared grid points deduplicate exactly regardless of floating-point
coordinates.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property, lru_cache

import numpy as np

from .lattice import VoxelSet

__all__ = [
    "EdgeType",
    "VoxelManifold",
    "RefinedGrid",
    "StratumCensus",
    "refined_grid",
    "classify_boundary",
    "euler_characteristic",
]

_INDEX_SPACE_CAP = 1 << 27

TAG_INTERIOR, TAG_FACE, TAG_EDGE, TAG_VERTEX = 0, 1, 2, 3
_TAG_NAMES = {TAG_INTERIOR: "interior", TAG_FACE: "face", TAG_EDGE: "edge", TAG_VERTEX: "vertex"}


class EdgeType(IntEnum):
    CONVEX = 0
    DOUBLE_CONVEX = 1
    CONCAVE = 2


# ---------------------------------------------------------------------------
# Local occupancy-pattern classification
# ---------------------------------------------------------------------------
#
# A grid point lying on j box-boundary planes has up to 2^j incident boxes,
# one per sign choice.  The local shape of the manifold at the point is a
# function of which of those boxes exist.  An axis is "full" when presence is
# closed under flipping it; full axes are directions along which the point is
# locally interior, and dropping them reduces the pattern until the stratum
# is read off directly.


def _reduce_pattern(sigmas: frozenset, slots: tuple) -> tuple[frozenset, tuple]:
    for pos in range(len(slots)):
        if all((s[:pos] + (1 - s[pos],) + s[pos + 1:]) in sigmas for s in sigmas):
            reduced = frozenset(s[:pos] + s[pos + 1:] for s in sigmas)
            return _reduce_pattern(reduced, slots[:pos] + slots[pos + 1:])
    return sigmas, slots


@lru_cache(maxsize=None)
def _classify_pattern(j: int, bits: int):
    """Classify a presence pattern over the 2^j candidate boxes.

    Bit i of ``bits`` marks presence of the box with sign tuple
    sigma = (i >> a & 1 for slot a); sign 0 is the box below the plane.

    Returns one of
      ("outside", None)
      ("interior", None)
      ("face", (slot, side))                  side 0: solid below, outward is +
      ("edge", (tangent_slots, trans_slots, EdgeType, (r0, r1)))
                                              r: +-1 reflection to canonical
      ("vertex", None)
    Slots refer to positions within the point's plane-axis tuple; for an edge
    ``tangent_slots`` lists the full (locally interior) slots.
    """
    sigmas = frozenset(
        tuple((i >> a) & 1 for a in range(j)) for i in range(2**j) if (bits >> i) & 1
    )
    if not sigmas:
        return ("outside", None)
    reduced, slots = _reduce_pattern(sigmas, tuple(range(j)))
    k = len(slots)
    if k == 0:
        return ("interior", None)
    if k == 1:
        side = next(iter(reduced))[0]
        return ("face", (slots[0], side))
    if k == 2:
        c = len(reduced)
        tangent_slots = tuple(sorted(set(range(j)) - set(slots)))
        if c == 1:
            solid = next(iter(reduced))
            refl = tuple(-1 if s else 1 for s in solid)
            return ("edge", (tangent_slots, slots, EdgeType.CONVEX, refl))
        if c == 2:
            refl = (1, 1) if (0, 0) in reduced else (-1, 1)
            return ("edge", (tangent_slots, slots, EdgeType.DOUBLE_CONVEX, refl))
        if c == 3:
            missing = next(iter(frozenset(itertools.product((0, 1), repeat=2)) - reduced))
            refl = tuple(1 if s else -1 for s in missing)
            return ("edge", (tangent_slots, slots, EdgeType.CONCAVE, refl))
        raise AssertionError("2-slot pattern with no reducible axis cannot be full")
    return ("vertex", None)


@lru_cache(maxsize=None)
def _pattern_luts(j: int):
    """Vectorizable lookup tables over all 2^(2^j) presence patterns."""
    n = 1 << (1 << j)
    tag = np.zeros(n, dtype=np.uint8)
    face_slot = np.full(n, -1, dtype=np.int8)
    face_side = np.full(n, -1, dtype=np.int8)
    for bits in range(n):
        kind, info = _classify_pattern(j, bits)
        if kind == "interior":
            tag[bits] = TAG_INTERIOR
        elif kind == "face":
            tag[bits] = TAG_FACE
            face_slot[bits], face_side[bits] = info
        elif kind == "edge":
            tag[bits] = TAG_EDGE
            # tangent slot is unique for j<=3 patterns that classify as edge
            face_slot[bits] = info[0][0] if info[0] else -1
        elif kind == "vertex":
            tag[bits] = TAG_VERTEX
        else:
            tag[bits] = 255
    return tag, face_slot, face_side


# ---------------------------------------------------------------------------
# Voxel manifold
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VoxelManifold:
    """Union of voxel boxes, with dense integer-lattice occupancy."""

    domain: VoxelSet

    def __post_init__(self):
        extent = np.prod(self._extents)
        if extent > _INDEX_SPACE_CAP:
            raise ValueError(
                f"index space of {extent} cells exceeds the supported cap; "
                "the voxel set is too sparse/spread for dense occupancy"
            )

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @cached_property
    def _origin(self) -> np.ndarray:
        return self.domain.axis_index.min(axis=0)

    @cached_property
    def _extents(self) -> np.ndarray:
        return self.domain.axis_index.max(axis=0) - self._origin + 1

    @cached_property
    def occupancy(self) -> np.ndarray:
        """Dense boolean array over the index bounding box."""
        occ = np.zeros(tuple(self._extents), dtype=bool)
        rel = self.domain.axis_index - self._origin
        occ[tuple(rel.T)] = True
        occ.setflags(write=False)
        return occ

    @cached_property
    def _padded(self) -> np.ndarray:
        pad = np.pad(self.occupancy, 1)
        pad.setflags(write=False)
        return pad

    @cached_property
    def _voxel_row(self) -> np.ndarray:
        """Index-space -> voxel row (or -1)."""
        rows = np.full(tuple(self._extents), -1, dtype=np.int64)
        rel = self.domain.axis_index - self._origin
        rows[tuple(rel.T)] = np.arange(self.domain.n_voxels)
        rows.setflags(write=False)
        return rows

    def occupied(self, idx: np.ndarray) -> np.ndarray:
        """Occupancy for integer index vectors (…, D); out of range is empty."""
        idx = np.asarray(idx)
        rel = idx - self._origin
        ok = np.all((rel >= 0) & (rel < self._extents), axis=-1)
        rel = np.where(ok[..., None], rel, 0)
        out = self.occupancy[tuple(np.moveaxis(rel, -1, 0))]
        return out & ok

    def box_center(self, idx: np.ndarray) -> np.ndarray:
        """Center coordinates of the boxes with the given index vectors."""
        idx = np.atleast_2d(np.asarray(idx))
        out = np.empty(idx.shape, dtype=np.float64)
        for d in range(self.dimension):
            pos = np.searchsorted(self.domain.axis_index_values[d], idx[:, d])
            out[:, d] = self.domain.axis_values[d][pos]
        return out

    def box_bounds(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        center = self.box_center(idx)
        half = self.domain.spacing / 2.0
        return center - half, center + half


# ---------------------------------------------------------------------------
# Refined grids
# ---------------------------------------------------------------------------


class RefinedGrid:
    """Deduplicated evaluation grid with per-point stratum tags.

    ``r`` is the added resolution: each box contributes the (r+2)^D lattice
    with per-axis step delta/(r+1), including the box boundary (hence r must
    be odd).  ``r = 0`` is the compatibility mode that returns the voxel
    lattice itself.

    Attributes
    ----------
    keys : (P, D) int64 exact grid keys (box index * (r+1) + sub-step)
    points : (P, D) float64 coordinates
    tag : (P,) uint8 stratum tag (interior/face/edge/vertex)
    tag_axis : (P,) int8  face: constant axis; edge: tangent axis; else -1
    vol_weight : (P,) float64 tensor-trapezoid multiplicity for volume sums
    """

    def __init__(self, manifold: VoxelManifold, r: int):
        self.manifold = manifold
        self.r = int(r)
        D = manifold.dimension
        self.dimension = D
        dom = manifold.domain
        if self.r == 0:
            self.keys = dom.axis_index.copy()
            order = np.lexsort(self.keys.T[::-1])
            self.keys = self.keys[order]
            self.points = dom.coords[order].copy()
            self.tag = np.zeros(len(self.keys), dtype=np.uint8)
            self.tag_axis = np.full(len(self.keys), -1, dtype=np.int8)
            self.vol_weight = np.ones(len(self.keys))
            self._axis_keys = list(dom.axis_index_values)
            self._axis_coords = list(dom.axis_values)
            self._finalize()
            return
        if self.r < 0 or self.r % 2 == 0:
            raise ValueError("added resolution must be odd and positive (or 0 for the lattice)")
        h = (self.r + 1) // 2
        step = self.r + 1
        idx = dom.axis_index
        z = np.arange(-h, h + 1)

        # per-axis key -> coordinate maps, from the generating boxes
        self._axis_keys = []
        self._axis_coords = []
        for d in range(D):
            ak = (dom.axis_index_values[d][:, None] * step + z[None, :]).ravel()
            ac = (
                dom.axis_values[d][:, None] + z[None, :] * (dom.spacing[d] / step)
            ).ravel()
            uk, first = np.unique(ak, return_index=True)
            self._axis_keys.append(uk)
            self._axis_coords.append(ac[first])

        # flat composite keys for exact dedup
        kmin = np.array([a[0] for a in self._axis_keys])
        ext = np.array([a[-1] - a[0] + 1 for a in self._axis_keys])
        strides = np.ones(D, dtype=np.int64)
        for d in range(D - 2, -1, -1):
            strides[d] = strides[d + 1] * ext[d + 1]
        combos = np.stack(np.meshgrid(*([z] * D), indexing="ij"), axis=-1).reshape(-1, D)
        raw = (idx[:, None, :] * step + combos[None, :, :]).reshape(-1, D)
        flat = (raw - kmin) @ strides
        uflat, first = np.unique(flat, return_index=True)
        self.keys = raw[first]
        del raw, flat
        self._flat = uflat
        self._flat_min = kmin
        self._flat_strides = strides
        self._flat_ext = ext

        pts = np.empty(self.keys.shape, dtype=np.float64)
        for d in range(D):
            pos = np.searchsorted(self._axis_keys[d], self.keys[:, d])
            pts[:, d] = self._axis_coords[d][pos]
        self.points = pts

        self._classify_points(h, step)
        self._build_boundary_tables(h, step)
        self._finalize()

    # -- construction helpers -------------------------------------------------

    def _classify_points(self, h: int, step: int):
        man = self.manifold
        D = self.dimension
        P = len(self.keys)
        on_plane = (np.mod(self.keys, step) == h)
        upper_box = (self.keys + h) // step
        self.tag = np.zeros(P, dtype=np.uint8)
        self.tag_axis = np.full(P, -1, dtype=np.int8)
        self.vol_weight = np.empty(P, dtype=np.float64)

        plane_bits = on_plane @ (1 << np.arange(D))
        for pb in range(1 << D):
            sel = np.nonzero(plane_bits == pb)[0]
            if sel.size == 0:
                continue
            axes = [d for d in range(D) if (pb >> d) & 1]
            j = len(axes)
            if j == 0:
                self.vol_weight[sel] = 1.0
                continue
            base = upper_box[sel]
            presence_bits = np.zeros(sel.size, dtype=np.int64)
            count = np.zeros(sel.size, dtype=np.int64)
            for code in range(1 << j):
                cand = base.copy()
                for a, d in enumerate(axes):
                    if not (code >> a) & 1:
                        cand[:, d] -= 1
                occ = man.occupied(cand)
                presence_bits |= occ.astype(np.int64) << code
                count += occ
            self.vol_weight[sel] = count / (1 << j)
            tag_lut, slot_lut, _ = _pattern_luts(j)
            tags = tag_lut[presence_bits]
            if D == 2:
                # a 2-D point where two boundary planes cross is a corner
                tags = np.where(tags == TAG_EDGE, TAG_VERTEX, tags)
            self.tag[sel] = tags
            slots = slot_lut[presence_bits]
            is_face = tags == TAG_FACE
            if np.any(is_face):
                ax = np.asarray(axes, dtype=np.int8)[slots[is_face]]
                self.tag_axis[sel[is_face]] = ax
            is_edge = (tags == TAG_EDGE) & (D == 3)
            if np.any(is_edge):
                if j == 2:
                    tangent = ({0, 1, 2} - set(axes)).pop()
                    self.tag_axis[sel[is_edge]] = tangent
                else:
                    ax = np.asarray(axes, dtype=np.int8)[slots[is_edge]]
                    self.tag_axis[sel[is_edge]] = ax

    def _build_boundary_tables(self, h: int, step: int):
        """Quadrature tables for boundary strata.

        Faces: one entry per (exterior unit face, grid point on it), carrying
        the tensor-trapezoid multiplicity and the outward side.  Edges (3D):
        one entry per (boundary unit edge segment, grid point on it) with the
        segment's type and the axis reflections that bring its occupancy to
        the canonical orientation.
        """
        man = self.manifold
        D = self.dimension
        O = man._padded  # padded occupancy: index i of O = box index (i - 1 + origin)
        org = man._origin
        z = np.arange(-h, h + 1)
        zw = np.ones(self.r + 2)
        zw[0] = zw[-1] = 0.5

        self.face_tables: dict[int, dict[str, np.ndarray]] = {}
        for m in range(D):
            lo = [slice(None)] * D
            hi = [slice(None)] * D
            lo[m] = slice(0, -1)
            hi[m] = slice(1, None)
            below = O[tuple(lo)]
            above = O[tuple(hi)]
            ext = below ^ above
            cells = np.argwhere(ext)  # padded-level coords: plane level_m, box pos on others
            if cells.size == 0:
                self.face_tables[m] = {
                    "ids": np.empty(0, np.int64),
                    "weights": np.empty(0, np.float64),
                    "outward": np.empty(0, np.int8),
                }
                continue
            outward = np.where(below[tuple(cells.T)], 1, -1).astype(np.int8)
            # translate to index space: plane level m at padded L means between
            # boxes (L-1) and L in padded coords, i.e. key_m = (L - 1 + org_m)*step + h
            key_m = (cells[:, m] - 1 + org[m]) * step + h
            tangential = [d for d in range(D) if d != m]
            box_keys = {
                d: (cells[:, d] - 1 + org[d]) * step for d in tangential
            }
            n_faces = cells.shape[0]
            npt = (self.r + 2) ** (D - 1)
            combos = (
                np.stack(np.meshgrid(*([z] * (D - 1)), indexing="ij"), axis=-1).reshape(-1, D - 1)
                if D > 1
                else np.zeros((1, 0), dtype=np.int64)
            )
            wts = np.ones(npt)
            for a in range(D - 1):
                wts *= zw[combos[:, a] + h]
            keys = np.empty((n_faces, npt, D), dtype=np.int64)
            keys[:, :, m] = key_m[:, None]
            for a, d in enumerate(tangential):
                keys[:, :, d] = box_keys[d][:, None] + combos[None, :, a]
            ids = self._lookup_ids(keys.reshape(-1, D))
            self.face_tables[m] = {
                "ids": ids,
                "weights": np.tile(wts, n_faces),
                "outward": np.repeat(outward, npt),
            }

        self.edge_tables: list[dict[str, np.ndarray]] = []
        if D != 3:
            return
        for k in range(3):
            p, q = [d for d in range(3) if d != k]
            # quadrant presence around every transverse plane pair, along k
            sl = {}
            for sp in (0, 1):
                for sq in (0, 1):
                    s = [slice(1, None)] * 3
                    s[k] = slice(1, -1)
                    s[p] = slice(sp, O.shape[p] - 1 + sp)
                    s[q] = slice(sq, O.shape[q] - 1 + sq)
                    sl[(sp, sq)] = O[tuple(s)]
            count = sum(a.astype(np.int8) for a in sl.values())
            diag = (sl[(0, 0)] & sl[(1, 1)] & ~sl[(0, 1)] & ~sl[(1, 0)]) | (
                sl[(0, 1)] & sl[(1, 0)] & ~sl[(0, 0)] & ~sl[(1, 1)]
            )
            adj = (count == 2) & ~diag
            is_edge = (count == 1) | ((count == 2) & diag) | (count == 3)
            cells = np.argwhere(is_edge)
            if cells.size == 0:
                self.edge_tables.append(
                    {
                        "ids": np.empty(0, np.int64),
                        "weights": np.empty(0, np.float64),
                        "types": np.empty(0, np.int8),
                        "refl": np.empty((0, 2), np.int8),
                        "tangent": k,
                        "trans": (p, q),
                    }
                )
                continue
            pres = {s: sl[s][tuple(cells.T)] for s in sl}
            cnt = count[tuple(cells.T)]
            types = np.empty(cells.shape[0], dtype=np.int8)
            refl = np.ones((cells.shape[0], 2), dtype=np.int8)
            conv = cnt == 1
            types[conv] = EdgeType.CONVEX
            dbl = cnt == 2
            types[dbl] = EdgeType.DOUBLE_CONVEX
            conc = cnt == 3
            types[conc] = EdgeType.CONCAVE
            # canonical orientations: convex solid at (-,-); double at
            # {(-,-),(+,+)}; concave missing at (+,+)
            refl[conv & pres[(1, 0)], 0] = -1
            refl[conv & pres[(0, 1)], 1] = -1
            refl[conv & pres[(1, 1)], :] = -1
            refl[dbl & pres[(0, 1)], 0] = -1
            missing_00 = conc & ~pres[(0, 0)]
            missing_01 = conc & ~pres[(0, 1)]
            missing_10 = conc & ~pres[(1, 0)]
            refl[missing_00, :] = -1
            refl[missing_01, 0] = -1
            refl[missing_10, 1] = -1
            # grid keys: along k the cell spans box n_k; transverse at planes
            n_k = cells[:, k] + org[k]
            key_p = (cells[:, p] - 1 + org[p]) * step + h
            key_q = (cells[:, q] - 1 + org[q]) * step + h
            npt = self.r + 2
            n_cells = cells.shape[0]
            keys = np.empty((n_cells, npt, 3), dtype=np.int64)
            keys[:, :, k] = n_k[:, None] * step + z[None, :]
            keys[:, :, p] = key_p[:, None]
            keys[:, :, q] = key_q[:, None]
            ids = self._lookup_ids(keys.reshape(-1, 3))
            self.edge_tables.append(
                {
                    "ids": ids,
                    "weights": np.tile(zw, n_cells),
                    "types": np.repeat(types, npt),
                    "refl": np.repeat(refl, npt, axis=0),
                    "tangent": k,
                    "trans": (p, q),
                }
            )

    def _finalize(self):
        for a in ("keys", "points", "tag", "tag_axis", "vol_weight"):
            getattr(self, a).setflags(write=False)

    # -- lookups ---------------------------------------------------------------

    def _lookup_ids(self, keys: np.ndarray) -> np.ndarray:
        flat = (keys - self._flat_min) @ self._flat_strides
        pos = np.searchsorted(self._flat, flat)
        if np.any(pos >= len(self._flat)) or np.any(self._flat[pos] != flat):
            raise AssertionError("boundary table key not present in grid")
        return pos

    @cached_property
    def axis_keys(self) -> list[np.ndarray]:
        return self._axis_keys

    @cached_property
    def axis_coords(self) -> list[np.ndarray]:
        return self._axis_coords

    @cached_property
    def axis_positions(self) -> np.ndarray:
        """Per-point position of each coordinate within ``axis_coords``."""
        pos = np.empty(self.keys.shape, dtype=np.int64)
        for d in range(self.dimension):
            pos[:, d] = np.searchsorted(self._axis_keys[d], self.keys[:, d])
        return pos

    @property
    def n_points(self) -> int:
        return len(self.keys)

    @cached_property
    def id_map(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense key-space -> point id map for neighbor queries."""
        kmin = self.keys.min(axis=0)
        ext = self.keys.max(axis=0) - kmin + 1
        if np.prod(ext) > _INDEX_SPACE_CAP:
            raise ValueError("grid key space too large for dense neighbor map")
        lut = np.full(tuple(ext), -1, dtype=np.int64)
        rel = self.keys - kmin
        lut[tuple(rel.T)] = np.arange(self.n_points)
        return lut, kmin, ext

    def neighbors(self, i: int) -> np.ndarray:
        """Ids of existing grid points in the 3^D - 1 stencil around point i."""
        lut, kmin, ext = self.id_map
        D = self.dimension
        out = []
        for off in itertools.product((-1, 0, 1), repeat=D):
            if all(o == 0 for o in off):
                continue
            rel = self.keys[i] + np.asarray(off) - kmin
            if np.all(rel >= 0) and np.all(rel < ext):
                j = lut[tuple(rel)]
                if j >= 0:
                    out.append(j)
        return np.asarray(out, dtype=np.int64)

    def incident_boxes(self, i: int) -> np.ndarray:
        """Index vectors of the occupied boxes containing grid point i."""
        man = self.manifold
        if self.r == 0:
            return self.keys[i][None, :]
        h = (self.r + 1) // 2
        step = self.r + 1
        key = self.keys[i]
        on_plane = (key % step) == h
        upper = (key + h) // step
        choices = []
        for d in range(self.dimension):
            choices.append([upper[d] - 1, upper[d]] if on_plane[d] else [upper[d]])
        cand = np.array(list(itertools.product(*choices)), dtype=np.int64)
        return cand[man.occupied(cand)]


def refined_grid(manifold: VoxelManifold, r: int) -> RefinedGrid:
    """Build the evaluation grid with added resolution ``r`` (odd, or 0)."""
    return RefinedGrid(manifold, r)


# ---------------------------------------------------------------------------
# Census and Euler characteristic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StratumCensus:
    """Counts of boundary unit cells by stratum."""

    faces: dict
    edges: dict
    vertices: int

    def to_dict(self) -> dict:
        return {
            "faces": {"+".join(f"x{d}" for d in I) or "point": n for I, n in self.faces.items()},
            "edges": {
                f"tangent x{k} {EdgeType(t).name.lower()}": n for (k, t), n in self.edges.items()
            },
            "vertices": self.vertices,
        }


def classify_boundary(manifold: VoxelManifold) -> StratumCensus:
    """Count exterior unit faces per varying-axes subset, unit edge segments
    per (tangent axis, type), and stratification vertices."""
    D = manifold.dimension
    O = manifold._padded
    faces = {}
    for m in range(D):
        lo = [slice(None)] * D
        hi = [slice(None)] * D
        lo[m] = slice(0, -1)
        hi[m] = slice(1, None)
        ext = O[tuple(lo)] ^ O[tuple(hi)]
        I = tuple(d for d in range(D) if d != m)
        faces[I] = int(ext.sum())

    edges = {}
    if D == 3:
        for k in range(3):
            p, q = [d for d in range(3) if d != k]
            sl = {}
            for sp in (0, 1):
                for sq in (0, 1):
                    s = [slice(1, None)] * 3
                    s[k] = slice(1, -1)
                    s[p] = slice(sp, O.shape[p] - 1 + sp)
                    s[q] = slice(sq, O.shape[q] - 1 + sq)
                    sl[(sp, sq)] = O[tuple(s)]
            count = sum(a.astype(np.int8) for a in sl.values())
            diag = (sl[(0, 0)] & sl[(1, 1)] & ~sl[(0, 1)] & ~sl[(1, 0)]) | (
                sl[(0, 1)] & sl[(1, 0)] & ~sl[(0, 0)] & ~sl[(1, 1)]
            )
            edges[(k, EdgeType.CONVEX)] = int((count == 1).sum())
            edges[(k, EdgeType.DOUBLE_CONVEX)] = int(((count == 2) & diag).sum())
            edges[(k, EdgeType.CONCAVE)] = int((count == 3).sum())

    # stratification vertices: 0-cells whose local pattern reduces to a cone
    # that is not interior/face/edge
    shifts = []
    for code in range(1 << D):
        s = tuple(
            slice((code >> d) & 1, O.shape[d] - 1 + ((code >> d) & 1)) for d in range(D)
        )
        shifts.append(O[s])
    bits = np.zeros(shifts[0].shape, dtype=np.int64)
    for code, arr in enumerate(shifts):
        bits |= arr.astype(np.int64) << code
    tag_lut, _, _ = _pattern_luts(D)
    tags = tag_lut[bits]
    vertex_tags = {1: (TAG_FACE,), 2: (TAG_EDGE, TAG_VERTEX), 3: (TAG_VERTEX,)}[D]
    vertices = int(np.isin(tags, vertex_tags).sum())
    return StratumCensus(faces=faces, edges=edges, vertices=vertices)


def euler_characteristic(manifold: VoxelManifold) -> int:
    """Alternating cell-count sum of the closed box union.

    Every box contributes its 3^D closed cells in doubled coordinates (odd
    coordinate = extent along that axis); after deduplication the Euler
    characteristic is sum over cells of (-1)^dim.
    """
    idx = manifold.domain.axis_index
    D = manifold.dimension
    combos = np.stack(np.meshgrid(*([np.arange(3)] * D), indexing="ij"), axis=-1).reshape(-1, D)
    cells = (2 * idx[:, None, :] + combos[None, :, :]).reshape(-1, D)
    cells = np.unique(cells, axis=0)
    dim = (cells % 2 == 1).sum(axis=1)
    signs = np.where(dim % 2 == 0, 1, -1)
    return int(signs.sum())
