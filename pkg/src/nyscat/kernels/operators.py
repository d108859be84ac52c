"""Discretized surface integral operators for PEC scattering.

Two grid flavors share one quadrature strategy.  The closed (endpoint) grids
carry the continuity-enforced electric-field operator: densities live in a
reduced space of unique point values, expanded by P before evaluation and
compressed by Q afterwards.  The open (interior-node) grids carry the
baseline electric-field variant without continuity and the magnetic-field
operator.

Every potential evaluation splits source patches into zones per target:
on-patch targets use precomputed fan-quadrature rows, targets within a small
fraction of the patch diameter use fan rows around the nearest preimage,
targets in a middle annulus integrate an oversampled interpolant, and
everything else uses the plain tensor rule.  The scalar potential's outer
gradient acts on surface samples only (spectral tangential gradient), so no
strongly singular kernel ever appears.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from nyscat import spectral, topology
from nyscat.geometry import MediumParams, Surface
from nyscat.kernels.green import green, green_gradient
from nyscat.kernels.singular import nearest_preimage, weights_on_patch

__all__ = [
    "OperatorConfig",
    "SingularCorrection",
    "precompute_singular",
    "single_layer",
    "surface_divergence",
    "EfieOperator",
    "MfieOperator",
    "efie_forward",
    "efie_forward_open",
    "mfie_forward",
]

CLOSED = "closed-continuity"
OPEN = "open-no-continuity"

_CHUNK = 256  # target rows per dense-assembly block
_COINCIDENT = 1e-14  # below this separation a pair counts as the same point


@dataclass(frozen=True)
class OperatorConfig:
    """Quadrature zoning and refinement controls.

    Distances are measured from the target to the source patch and compared
    against fractions of that patch's diameter: fan corrections inside
    fan_threshold, oversampled interpolation out to near_threshold, plain
    tensor quadrature beyond.
    """

    variant: str = CLOSED
    fan_threshold: float = 0.1
    near_threshold: float = 0.45
    refine_factor: int = 2
    max_levels: int = 4
    quad_tol: float = 1e-12

    def __post_init__(self):
        if self.variant not in (CLOSED, OPEN):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0 < self.fan_threshold <= self.near_threshold < 1:
            raise ValueError("thresholds must satisfy 0 < fan <= near < 1")
        if self.refine_factor < 2 or self.max_levels < 1:
            raise ValueError("refinement factor must be >= 2 with >= 1 level")


@dataclass
class SingularCorrection:
    """Replacement quadrature rows for on-patch targets of one patch.

    weights[j] integrates G(node_j, .) times the cardinal basis over the
    patch, including the surface measure; metadata pins the grid the rows
    were built for.
    """

    patch_id: int
    k: float
    n: int
    kind: str
    weights: np.ndarray  # (n*n, n*n) complex, row per target node


def _grid_nodes(n: int, kind: str):
    if kind == "closed":
        return spectral.cc_nodes(n), spectral.cc_weights(n)
    return spectral.fejer_nodes(n), spectral.fejer_weights(n)


class _PatchData:
    """Flattened node frames plus cached oversampled geometry."""

    __slots__ = ("patch", "point", "a_u", "a_v", "normal", "jac", "ginv", "fine")

    def __init__(self, patch, nodes):
        uu, vv = np.meshgrid(nodes, nodes, indexing="ij")
        fr = patch.frames(uu.ravel(), vv.ravel())
        self.patch = patch
        self.point = fr.point
        self.a_u = fr.a_u
        self.a_v = fr.a_v
        self.normal = fr.normal
        self.jac = fr.jac
        self.ginv = fr.ginv
        self.fine = {}

    def fine_level(self, m: int):
        if m not in self.fine:
            g = spectral.cc_nodes(m)
            uu, vv = np.meshgrid(g, g, indexing="ij")
            fr = self.patch.frames(uu.ravel(), vv.ravel())
            w2 = np.outer(spectral.cc_weights(m), spectral.cc_weights(m)).ravel()
            self.fine[m] = (fr.point, fr.normal, w2 * fr.jac)
        return self.fine[m]


def _patch_data(surface: Surface, nodes):
    return [_PatchData(p, nodes) for p in surface.patches]


def _min_node_distances(targets, pdata) -> np.ndarray:
    """Minimum distance from each target to each patch's node cloud, (T, M)."""
    out = np.empty((targets.shape[0], len(pdata)))
    for p, d in enumerate(pdata):
        for lo in range(0, targets.shape[0], _CHUNK):
            hi = min(lo + _CHUNK, targets.shape[0])
            diff = targets[lo:hi, None, :] - d.point[None, :, :]
            out[lo:hi, p] = np.sqrt(np.einsum("tsc,tsc->ts", diff, diff)).min(axis=1)
    return out


def _zone_pairs(targets, pdata, diameters, n, config, on_sets):
    """Fan and oversample (target, patch) pairs, excluding on-patch pairs."""
    dmin = _min_node_distances(targets, pdata)
    # node clouds only over-estimate the true distance; widen the bands by
    # half the coarsest node gap so borderline pairs get the better rule
    slack = 0.5 * np.pi / (2 * (n - 1))
    fan_cut = (config.fan_threshold + slack) * diameters
    near_cut = (config.near_threshold + slack) * diameters
    fan_pairs, mid_pairs = [], []
    for t in range(targets.shape[0]):
        row = dmin[t]
        for p in np.nonzero(row < near_cut)[0]:
            p = int(p)
            if p in on_sets[t]:
                continue
            (fan_pairs if row[p] < fan_cut[p] else mid_pairs).append((t, p))
    return fan_pairs, mid_pairs


def precompute_singular(patch, k: float, n: int, kind: str = "closed",
                        patch_id: int = 0, tol: float = 1e-12) -> SingularCorrection:
    """Fan-quadrature weight rows for every on-patch target node."""
    nodes, _ = _grid_nodes(n, kind)
    rows = np.empty((n * n, n * n), dtype=complex)
    for iu in range(n):
        for iv in range(n):
            apex = (float(nodes[iu]), float(nodes[iv]))
            target = patch.point(np.array(apex[0]), np.array(apex[1]))
            rows[iu * n + iv] = weights_on_patch(
                patch, nodes, lambda pts, nrm: green(target, pts, k), apex, tol=tol)
    return SingularCorrection(patch_id, k, n, kind, rows)


def _oversample_rows(pdat: _PatchData, kernel, n: int, nodes, config: OperatorConfig):
    """Weights against the coarse basis via kernel quadrature on fine grids."""
    prev = None
    for lvl in range(1, config.max_levels + 1):
        m = n * config.refine_factor**lvl
        pts, nrm, wjac = pdat.fine_level(m)
        vals = np.asarray(kernel(pts, nrm))
        r1 = spectral.interp_matrix(np.asarray(nodes), spectral.cc_nodes(m))
        if vals.ndim == 1:
            f = (vals * wjac).reshape(m, m)
            cur = np.einsum("fa,gb,fg->ab", r1, r1, f).reshape(-1)
        else:
            f = (vals * wjac[:, None]).reshape(m, m, -1)
            cur = np.einsum("fa,gb,fgx->abx", r1, r1, f).reshape(n * n, -1)
        if prev is not None:
            scale = max(1.0, float(np.abs(cur).max()))
            if float(np.abs(cur - prev).max()) <= 10 * config.quad_tol * scale:
                return cur
        prev = cur
    return prev


def _base_scalar_matrix(targets, src_points, src_wjac, k) -> np.ndarray:
    """Plain-rule single-layer matrix with coincident entries zeroed."""
    out = np.empty((targets.shape[0], src_points.shape[0]), dtype=complex)
    for lo in range(0, targets.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, targets.shape[0])
        d = targets[lo:hi, None, :] - src_points[None, :, :]
        r = np.sqrt(np.einsum("tsc,tsc->ts", d, d))
        hit = r < _COINCIDENT
        r[hit] = 1.0
        g = np.exp(1j * k * r) / (4 * np.pi * r)
        g[hit] = 0.0
        out[lo:hi] = g * src_wjac[None, :]
    return out


def _layer_matrix(targets, pdata, nodes, diameters, k, on_pairs, corrections,
                  config: OperatorConfig) -> np.ndarray:
    """Dense single-layer matrix: plain rule plus zone corrections."""
    n = len(nodes)
    s = n * n
    kind = corrections[0].kind
    w1 = _grid_nodes(n, kind)[1]
    w2 = np.outer(w1, w1).ravel()
    src_points = np.concatenate([d.point for d in pdata])
    src_wjac = np.concatenate([w2 * d.jac for d in pdata])
    mat = _base_scalar_matrix(targets, src_points, src_wjac, k)
    on_sets = [set() for _ in range(targets.shape[0])]
    for t, p, node in on_pairs:
        mat[t, p * s:(p + 1) * s] = corrections[p].weights[node]
        on_sets[t].add(p)
    fan_pairs, mid_pairs = _zone_pairs(targets, pdata, diameters, n, config, on_sets)
    for t, p in fan_pairs:
        x_t = targets[t]
        u0, v0, dist = nearest_preimage(pdata[p].patch, x_t)
        mat[t, p * s:(p + 1) * s] = weights_on_patch(
            pdata[p].patch, nodes, lambda pts, nrm: green(x_t, pts, k),
            (u0, v0), tol=config.quad_tol, peak=dist / (0.5 * diameters[p]))
    for t, p in mid_pairs:
        x_t = targets[t]
        mat[t, p * s:(p + 1) * s] = _oversample_rows(
            pdata[p], lambda pts, nrm: green(x_t, pts, k), n, nodes, config)
    return mat


def single_layer(sources, targets, surface: Surface, corrections,
                 config: OperatorConfig | None = None):
    """Single-layer potential of per-patch density grids at arbitrary points.

    sources: (M, n, n) scalar or (M, n, n, 3) Cartesian-vector samples on the
    grid family the corrections were built for.  Targets sitting on a grid
    node use that patch's correction row; other targets are classified by
    distance.  Returns (T,) or (T, 3) values.
    """
    corrections = list(corrections)
    if len(corrections) != surface.n_patches:
        raise ValueError("need one correction per patch")
    n, kind, k = corrections[0].n, corrections[0].kind, corrections[0].k
    dens = np.asarray(sources, dtype=complex)
    if dens.shape[:3] != (surface.n_patches, n, n):
        raise ValueError("density grids do not match the correction grid")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    nodes, _ = _grid_nodes(n, kind)
    pdata = _patch_data(surface, nodes)
    diameters = surface.patch_diameters()
    # a target within rounding distance of a node is that node
    on_pairs = []
    for p, d in enumerate(pdata):
        diff = targets[:, None, :] - d.point[None, :, :]
        dist = np.sqrt(np.einsum("tsc,tsc->ts", diff, diff))
        hits = np.nonzero(dist < 1e-9 * diameters[p])
        on_pairs.extend((int(t), p, int(node)) for t, node in zip(*hits))
    cfg = config or OperatorConfig(variant=CLOSED if kind == "closed" else OPEN)
    mat = _layer_matrix(targets, pdata, nodes, diameters, k, on_pairs,
                        corrections, cfg)
    out = mat @ dens.reshape(surface.n_patches * n * n, -1)
    return out[:, 0] if dens.ndim == 3 else out


def _divergence_grids(grids, jac, diff):
    """(M, n, n, 2) contravariant samples -> (M, n, n) surface divergence."""
    fu = jac * grids[..., 0]
    fv = jac * grids[..., 1]
    du = np.einsum("ab,mbv->mav", diff, fu)
    dv = np.einsum("ab,mub->mua", diff, fv)
    return (du + dv) / jac


def surface_divergence(density, surface: Surface, n: int, kind: str = "closed"):
    """Surface divergence of a concatenated contravariant sample vector.

    density follows the unknown layout (per patch: all u components, then
    all v components); returns per-patch scalar grids (M, n, n) of
    (1/sqrt g) d_i (sqrt g J^i) via spectral differentiation.
    """
    nodes, _ = _grid_nodes(n, kind)
    grids = topology.full_to_grids(np.asarray(density, dtype=complex),
                                   surface.n_patches, n)
    pdata = _patch_data(surface, nodes)
    jac = np.stack([d.jac.reshape(n, n) for d in pdata])
    return _divergence_grids(grids, jac, spectral.diff_matrix(nodes))


class _Grid:
    """Node data, quadrature weights and (closed) continuity maps."""

    def __init__(self, surface: Surface, n: int, kind: str):
        self.surface = surface
        self.n = n
        self.kind = kind
        self.nodes, w1 = _grid_nodes(n, kind)
        self.diff = spectral.diff_matrix(self.nodes)
        self.w2 = np.outer(w1, w1).ravel()
        self.data = _patch_data(surface, self.nodes)
        self.diameters = surface.patch_diameters()
        self.src_points = np.concatenate([d.point for d in self.data])
        self.src_wjac = np.concatenate([self.w2 * d.jac for d in self.data])
        self.jac_grids = np.stack([d.jac.reshape(n, n) for d in self.data])
        m, s = surface.n_patches, n * n
        if kind == "closed":
            self.groups = topology.build_coincidence(surface, n)
            self.P = topology.build_projection(self.groups, surface, n)
            self.Q = topology.build_compression(self.groups, surface, n)
            self.member_of = np.empty((m, s), dtype=np.int64)
            for gid, grp in enumerate(self.groups):
                for p, iu, iv in grp.members:
                    self.member_of[p, iu * n + iv] = gid
            self.target_points = np.stack([g.point for g in self.groups])
        else:
            self.groups = None
            self.P = self.Q = None
            self.member_of = np.arange(m * s).reshape(m, s)
            self.target_points = self.src_points

    @property
    def n_targets(self):
        return self.target_points.shape[0]

    @property
    def n_unknowns(self):
        if self.kind == "closed":
            return 2 * len(self.groups)
        return 2 * self.surface.n_patches * self.n**2

    def on_patch_pairs(self):
        """(target, patch, flat node) for targets lying on the node grids."""
        if self.kind == "closed":
            return [(t, p, iu * self.n + iv)
                    for t, grp in enumerate(self.groups)
                    for p, iu, iv in grp.members]
        s = self.n * self.n
        return [(t, t // s, t % s) for t in range(self.n_targets)]

    def on_patch_sets(self):
        on = [set() for _ in range(self.n_targets)]
        for t, p, _ in self.on_patch_pairs():
            on[t].add(p)
        return on

    def target_normals(self):
        if self.kind == "open":
            return np.concatenate([d.normal for d in self.data])
        out = np.empty((self.n_targets, 3))
        for t, grp in enumerate(self.groups):
            if grp.normal is not None:
                out[t] = grp.normal
            else:
                p, iu, iv = grp.members[0]
                out[t] = self.data[p].normal[iu * self.n + iv]
        return out

    def expand(self, x):
        return self.P @ x if self.kind == "closed" else np.asarray(x, dtype=complex)

    def compress(self, full):
        return self.Q @ full if self.kind == "closed" else full

    def cartesian_from_grids(self, grids):
        """(M, n, n, 2) contravariant samples -> (M, S, 3) Cartesian."""
        m, s = len(self.data), self.n**2
        flat = grids.reshape(m, s, 2)
        out = np.empty((m, s, 3), dtype=complex)
        for p, d in enumerate(self.data):
            out[p] = flat[p, :, 0, None] * d.a_u + flat[p, :, 1, None] * d.a_v
        return out

    def full_from_cartesian(self, vec):
        """(M, S, 3) tangential Cartesian field -> flat contravariant vector."""
        m, n = len(self.data), self.n
        grids = np.empty((m, n, n, 2), dtype=complex)
        for p, d in enumerate(self.data):
            cu = np.einsum("sc,sc->s", vec[p], d.a_u)
            cv = np.einsum("sc,sc->s", vec[p], d.a_v)
            ju = d.ginv[:, 0, 0] * cu + d.ginv[:, 0, 1] * cv
            jv = d.ginv[:, 1, 0] * cu + d.ginv[:, 1, 1] * cv
            grids[p] = np.stack([ju, jv], axis=-1).reshape(n, n, 2)
        return topology.grids_to_full(grids)

    def surface_gradient(self, phi_full):
        """Scalar node samples (M, S) -> tangential gradient (M, S, 3)."""
        m, n = len(self.data), self.n
        phi = phi_full.reshape(m, n, n)
        du = np.einsum("ab,mbv->mav", self.diff, phi).reshape(m, n * n)
        dv = np.einsum("ab,mub->mua", self.diff, phi).reshape(m, n * n)
        out = np.empty((m, n * n, 3), dtype=complex)
        for p, d in enumerate(self.data):
            gu = d.ginv[:, 0, 0] * du[p] + d.ginv[:, 0, 1] * dv[p]
            gv = d.ginv[:, 1, 0] * du[p] + d.ginv[:, 1, 1] * dv[p]
            out[p] = gu[:, None] * d.a_u + gv[:, None] * d.a_v
        return out


class EfieOperator:
    """Tangential electric-field map T J = ik eta n x (A + grad phi / k^2).

    variant closed-continuity: unknowns are unique point values and the map
    composes Q (field stages) P.  variant open-no-continuity: unknowns are
    raw per-patch samples on the interior-node grid.
    """

    def __init__(self, surface: Surface, n: int, medium: MediumParams,
                 config: OperatorConfig | None = None):
        self.config = config or OperatorConfig()
        kind = "closed" if self.config.variant == CLOSED else "open"
        self.grid = _Grid(surface, n, kind)
        self.medium = medium
        self.k = medium.wavenumber
        self.eta = medium.impedance
        self.corrections = [
            precompute_singular(p, self.k, n, kind, pid, self.config.quad_tol)
            for pid, p in enumerate(surface.patches)
        ]
        g = self.grid
        self.S = _layer_matrix(g.target_points, g.data, g.nodes, g.diameters,
                               self.k, g.on_patch_pairs(), self.corrections,
                               self.config)

    @property
    def n_unknowns(self) -> int:
        return self.grid.n_unknowns

    def apply(self, x):
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.n_unknowns,):
            raise ValueError(f"expected vector of length {self.n_unknowns}")
        g = self.grid
        m, n = g.surface.n_patches, g.n
        grids = topology.full_to_grids(g.expand(x), m, n)
        j_cart = g.cartesian_from_grids(grids)
        div = _divergence_grids(grids, g.jac_grids, g.diff)
        pot_a = self.S @ j_cart.reshape(m * n * n, 3)
        pot_phi = self.S @ div.reshape(m * n * n)
        a_full = pot_a[g.member_of]  # (M, S, 3) point values scattered back
        phi_full = pot_phi[g.member_of]  # (M, S)
        total = a_full + g.surface_gradient(phi_full) / self.k**2
        out = np.empty_like(total)
        for p, d in enumerate(g.data):
            out[p] = np.cross(d.normal, total[p])
        out *= 1j * self.k * self.eta
        return g.compress(g.full_from_cartesian(out))

    def rhs(self, field_fn):
        """Project -n x E_inc onto the unknown space."""
        g = self.grid
        vec = np.empty((g.surface.n_patches, g.n**2, 3), dtype=complex)
        for p, d in enumerate(g.data):
            vec[p] = -np.cross(d.normal, field_fn(d.point))
        return g.compress(g.full_from_cartesian(vec))

    def cartesian_current(self, x):
        """Unknown vector -> (M, S, 3) Cartesian current samples at nodes."""
        g = self.grid
        grids = topology.full_to_grids(g.expand(x), g.surface.n_patches, g.n)
        return g.cartesian_from_grids(grids)


class MfieOperator:
    """Magnetic-field map M J = J/2 - n x pv-integral(grad G x J).

    The kernel splits as grad G (n_t . J) minus (n_t . grad G) J; both
    factors act weakly singularly on tangential densities once the target's
    own cardinal is removed from the first family (its density factor
    n(x) . J(x) vanishes identically).  Runs on either grid variant; the
    open grid is the reference configuration.
    """

    def __init__(self, surface: Surface, n: int, medium: MediumParams,
                 config: OperatorConfig | None = None, mem_budget: float = 2.0e9):
        self.config = config or OperatorConfig(variant=OPEN)
        kind = "closed" if self.config.variant == CLOSED else "open"
        self.grid = _Grid(surface, n, kind)
        self.medium = medium
        self.k = medium.wavenumber
        self.eta = medium.impedance
        g = self.grid
        self._tnormals = g.target_normals()
        self.materialized = 4 * g.n_targets * g.src_points.shape[0] * 16 <= mem_budget
        self._build_corrections()
        if self.materialized:
            self._build_dense()

    @property
    def n_unknowns(self) -> int:
        return self.grid.n_unknowns

    def _build_corrections(self):
        """Sparse zone corrections for the four kernel families.

        Stored as corrected-minus-base so a plain-rule product plus the
        sparse term gives the corrected product without masking.
        """
        g, k, cfg = self.grid, self.k, self.config
        n = g.n
        s = n * n
        fan_pairs, mid_pairs = _zone_pairs(g.target_points, g.data, g.diameters,
                                           n, cfg, g.on_patch_sets())
        rows, cols, vals_g, vals_k = [], [], [], []

        def push(t, p, wg, wk):
            rows.extend([t] * s)
            cols.extend(range(p * s, (p + 1) * s))
            vals_g.append(wg)
            vals_k.append(wk)

        for t, p, node in g.on_patch_pairs():
            x_t = g.target_points[t]
            n_t = self._tnormals[t]
            apex = (float(g.nodes[node // n]), float(g.nodes[node % n]))

            def kern(pts, nrm, x_t=x_t, n_t=n_t):
                gr = green_gradient(x_t, pts, k)
                return np.concatenate([gr, gr @ n_t[:, None]], axis=1)

            # the target cardinal is excluded from the gradient family: its
            # density factor n(x).J(x) is identically zero and the integral
            # diverges; the normal-projected component stays weakly singular
            w4 = weights_on_patch(g.data[p].patch, g.nodes, kern, apex,
                                  tol=cfg.quad_tol,
                                  zero_entries=((node, 0), (node, 1), (node, 2)))
            push(t, p, np.ascontiguousarray(w4[:, :3]), w4[:, 3].copy())
        for t, p in fan_pairs:
            x_t = g.target_points[t]
            u0, v0, dist = nearest_preimage(g.data[p].patch, x_t)
            wg = weights_on_patch(g.data[p].patch, g.nodes,
                                  lambda pts, nrm: green_gradient(x_t, pts, k),
                                  (u0, v0), tol=cfg.quad_tol,
                                  peak=dist / (0.5 * g.diameters[p]))
            push(t, p, wg, wg @ self._tnormals[t])
        for t, p in mid_pairs:
            x_t = g.target_points[t]
            wg = _oversample_rows(g.data[p],
                                  lambda pts, nrm: green_gradient(x_t, pts, k),
                                  n, g.nodes, cfg)
            push(t, p, wg, wg @ self._tnormals[t])
        rows = np.array(rows, dtype=np.int64)
        cols = np.array(cols, dtype=np.int64)
        vals_g = np.concatenate(vals_g) if len(vals_g) else np.zeros((0, 3), dtype=complex)
        vals_k = np.concatenate(vals_k) if len(vals_k) else np.zeros(0, dtype=complex)
        # subtract the plain-rule values at the corrected pairs
        d = g.target_points[rows] - g.src_points[cols]
        r = np.sqrt(np.einsum("qc,qc->q", d, d))
        ok = r > _COINCIDENT
        base = np.zeros((rows.size, 3), dtype=complex)
        base[ok] = (np.exp(1j * k * r[ok]) * (1j * k * r[ok] - 1.0)
                    / (4 * np.pi * r[ok] ** 3))[:, None] * d[ok] \
            * g.src_wjac[cols[ok], None]
        vals_g = vals_g - base
        vals_k = vals_k - np.einsum("qc,qc->q", base, self._tnormals[rows])
        shape = (g.n_targets, g.src_points.shape[0])
        self._dg = [sparse.csr_matrix((vals_g[:, i], (rows, cols)), shape=shape)
                    for i in range(3)]
        self._dk = sparse.csr_matrix((vals_k, (rows, cols)), shape=shape)

    def _gradient_block(self, lo, hi):
        """Plain-rule grad-G kernel values times source weights, (c, S, 3)."""
        g, k = self.grid, self.k
        d = g.target_points[lo:hi, None, :] - g.src_points[None, :, :]
        r = np.sqrt(np.einsum("tsc,tsc->ts", d, d))
        hit = r < _COINCIDENT
        r[hit] = 1.0
        b = np.exp(1j * k * r) * (1j * k * r - 1.0) / (4 * np.pi * r**3)
        b[hit] = 0.0
        return (b * g.src_wjac[None, :])[..., None] * d

    def _build_dense(self):
        g = self.grid
        nt = self._tnormals
        w3 = np.empty((g.n_targets, g.src_points.shape[0], 3), dtype=complex)
        for lo in range(0, g.n_targets, _CHUNK):
            hi = min(lo + _CHUNK, g.n_targets)
            w3[lo:hi] = self._gradient_block(lo, hi)
        k4 = np.einsum("tsc,tc->ts", w3, nt) + self._dk.toarray()
        for i in range(3):
            w3[..., i] += self._dg[i].toarray()
        self._w3 = w3
        self._k4 = k4

    def _integral(self, j_flat):
        """term1 - term2 at all targets for Cartesian samples (MS, 3)."""
        g = self.grid
        nt = self._tnormals
        if self.materialized:
            q = nt @ j_flat.T  # (T, S): target-normal dot each source sample
            term1 = np.einsum("tsc,ts->tc", self._w3, q)
            return term1 - self._k4 @ j_flat
        out = np.empty((g.n_targets, 3), dtype=complex)
        for lo in range(0, g.n_targets, _CHUNK):
            hi = min(lo + _CHUNK, g.n_targets)
            g3 = self._gradient_block(lo, hi)
            q = nt[lo:hi] @ j_flat.T
            term1 = np.einsum("tsc,ts->tc", g3, q)
            k4 = np.einsum("tsc,tc->ts", g3, nt[lo:hi])
            out[lo:hi] = term1 - k4 @ j_flat
        # sparse corrected-minus-base contributions
        add = np.zeros((g.n_targets, 3), dtype=complex)
        for i in range(3):
            coo = self._dg[i].tocoo()
            qv = np.einsum("qc,qc->q", nt[coo.row], j_flat[coo.col])
            np.add.at(add[:, i], coo.row, coo.data * qv)
        out += add
        out -= self._dk @ j_flat
        return out

    def apply(self, x):
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.n_unknowns,):
            raise ValueError(f"expected vector of length {self.n_unknowns}")
        g = self.grid
        m, n = g.surface.n_patches, g.n
        grids = topology.full_to_grids(g.expand(x), m, n)
        j_cart = g.cartesian_from_grids(grids)
        integ = self._integral(j_cart.reshape(m * n * n, 3))
        field = -integ[g.member_of]  # (M, S, 3)
        return x / 2.0 + g.compress(g.full_from_cartesian(field))

    def rhs(self, hfield_fn):
        """Project n x H_inc onto the unknown space."""
        g = self.grid
        vec = np.empty((g.surface.n_patches, g.n**2, 3), dtype=complex)
        for p, d in enumerate(g.data):
            vec[p] = np.cross(d.normal, hfield_fn(d.point))
        return g.compress(g.full_from_cartesian(vec))

    def cartesian_current(self, x):
        g = self.grid
        grids = topology.full_to_grids(g.expand(x), g.surface.n_patches, g.n)
        return g.cartesian_from_grids(grids)


def efie_forward(x, operator: EfieOperator):
    """Continuity-enforced electric-field forward map on the unique space."""
    if operator.config.variant != CLOSED:
        raise ValueError("operator was built for the open variant")
    return operator.apply(x)


def efie_forward_open(x, operator: EfieOperator):
    """Baseline electric-field forward map on the open grid, no continuity."""
    if operator.config.variant != OPEN:
        raise ValueError("operator was built for the closed variant")
    return operator.apply(x)


def mfie_forward(x, operator: MfieOperator):
    """Magnetic-field forward map (identity/2 plus principal-value term)."""
    return operator.apply(x)
