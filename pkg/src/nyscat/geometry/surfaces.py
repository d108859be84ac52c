"""Closed-surface builders and adjacency recovery.

A Surface is an ordered list of outward-oriented quad patches whose shared
edges trace identical curves with compatible (affine) parametrizations, so
closed tensor grids of any size land node-on-node across patch boundaries.
Adjacency is recovered generically by sampling edge curves and matching point
sets, which works identically for analytic builders and loaded surfaces.

The rounded box uses 54 patches per closed component: 6 flat faces, 24
half-sweep cylinder fillets (two 45-degree pieces per box edge) and 24
spherical corner quads (three per corner, meeting at the corner-triangle
center).  Splitting this way keeps every patch a smooth nondegenerate quad
while staying node-conforming; a corner rounding is a three-sided region, so
it cannot be covered by a single such quad.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from nyscat.geometry.patches import (
    CylinderPatch,
    GnomonicSpherePatch,
    Patch,
    PlanePatch,
    SphereQuadPatch,
    TransformedPatch,
)

__all__ = [
    "ETA0",
    "MediumParams",
    "EdgeMatch",
    "Surface",
    "edge_uv",
    "make_sphere",
    "make_rounded_cube",
    "make_rounded_box",
    "make_dipole",
]

ETA0 = 376.730313668  # free-space wave impedance, ohms


@dataclass(frozen=True)
class MediumParams:
    """Homogeneous exterior medium: wavelength fixes the wavenumber."""

    wavelength: float
    impedance: float = ETA0

    def __post_init__(self):
        if self.wavelength <= 0 or self.impedance <= 0:
            raise ValueError("wavelength and impedance must be positive")

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength


@dataclass(frozen=True)
class EdgeMatch:
    """One shared edge: patch/edge ids plus relative traversal direction."""

    patch_a: int
    edge_a: int
    patch_b: int
    edge_b: int
    flipped: bool


def edge_uv(edge: int, t):
    """Parameter-square coordinates along edge 0..3, traversal parameter t."""
    t = np.asarray(t, dtype=float)
    ones = np.ones_like(t)
    if edge == 0:
        return t, -ones
    if edge == 1:
        return ones, t
    if edge == 2:
        return t, ones
    if edge == 3:
        return -ones, t
    raise ValueError("edge index must be 0..3, got %r" % (edge,))


class SurfaceError(ValueError):
    """Raised when patches fail closure or conformity validation."""


@dataclass
class Surface:
    """Ordered patches with adjacency records and optional role tags."""

    patches: list[Patch]
    roles: list[str]
    labels: list[str]
    adjacency: list[EdgeMatch] = field(default_factory=list)
    name: str = ""
    wavelength: float | None = None  # set when loaded from a surface file

    @classmethod
    def assemble(cls, patches, roles=None, labels=None, name="", closed=True, tol=None):
        roles = list(roles) if roles is not None else ["patch"] * len(patches)
        labels = list(labels) if labels is not None else [f"patch{i}" for i in range(len(patches))]
        surf = cls(list(patches), roles, labels, [], name)
        surf.adjacency = _match_edges(surf.patches, labels, closed=closed, tol=tol)
        return surf

    @property
    def n_patches(self) -> int:
        return len(self.patches)

    def bounding_diameter(self) -> float:
        pts = np.concatenate([_probe_points(p) for p in self.patches])
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    def patch_diameters(self) -> np.ndarray:
        out = np.empty(self.n_patches)
        for i, p in enumerate(self.patches):
            pts = _probe_points(p)
            d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
            out[i] = d.max()
        return out


def _probe_points(patch: Patch, n: int = 5) -> np.ndarray:
    t = np.linspace(-1.0, 1.0, n)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    return patch.point(uu.ravel(), vv.ravel())


def _match_edges(patches, labels, closed=True, tol=None):
    """Pair up patch edges by sampled curve identity; validate conformity."""
    n_probe = 9
    t = np.linspace(-1.0, 1.0, n_probe)
    curves = np.empty((len(patches), 4, n_probe, 3))
    for ip, patch in enumerate(patches):
        for e in range(4):
            u, v = edge_uv(e, t)
            curves[ip, e] = patch.point(u, v)
    if tol is None:
        span = curves.reshape(-1, 3)
        scale = float(np.linalg.norm(span.max(axis=0) - span.min(axis=0)))
        tol = 1e-9 * max(scale, 1.0)

    flat = curves.reshape(-1, n_probe, 3)
    ends = np.stack([flat[:, 0], flat[:, -1]], axis=1)  # (E, 2, 3)
    n_edges = flat.shape[0]
    partner = np.full(n_edges, -1)
    flip = np.zeros(n_edges, dtype=bool)

    # endpoint-set matching first (cheap), curve check second (exact)
    sums = ends.sum(axis=1)
    for i in range(n_edges):
        if partner[i] >= 0:
            continue
        cand = np.where(np.linalg.norm(sums - sums[i], axis=1) < 4 * tol)[0]
        for j in cand:
            if j <= i or partner[j] >= 0:
                continue
            direct = np.abs(flat[i] - flat[j]).max()
            reverse = np.abs(flat[i] - flat[j, ::-1]).max()
            if min(direct, reverse) < tol:
                partner[i], partner[j] = j, i
                flip[i] = flip[j] = reverse < direct
                break
            if (
                np.abs(ends[i] - ends[j]).max() < tol
                or np.abs(ends[i] - ends[j, ::-1]).max() < tol
            ):
                ip, ie = divmod(i, 4)
                jp, je = divmod(j, 4)
                raise SurfaceError(
                    "non-conforming shared edge: %s edge %d vs %s edge %d "
                    "(endpoints meet, interiors deviate by %.3e)"
                    % (labels[ip], ie, labels[jp], je, min(direct, reverse))
                )

    if closed:
        loose = np.where(partner < 0)[0]
        if loose.size:
            desc = ", ".join("%s edge %d" % (labels[i // 4], i % 4) for i in loose[:8])
            raise SurfaceError("surface is not closed: unmatched %s" % desc)

    matches = []
    for i in range(n_edges):
        j = partner[i]
        if j > i:
            matches.append(EdgeMatch(i // 4, i % 4, j // 4, j % 4, bool(flip[i])))
    return matches


# ---------------------------------------------------------------------------
# builders


_FACE_AXES = {
    (0, +1): ((0, 1, 0), (0, 0, 1)),
    (0, -1): ((0, 0, 1), (0, 1, 0)),
    (1, +1): ((0, 0, 1), (1, 0, 0)),
    (1, -1): ((1, 0, 0), (0, 0, 1)),
    (2, +1): ((1, 0, 0), (0, 1, 0)),
    (2, -1): ((0, 1, 0), (1, 0, 0)),
}


def make_sphere(diameter: float = 2.0, center=(0.0, 0.0, 0.0)) -> Surface:
    """Six-patch sphere via the central (gnomonic) cube projection."""
    if diameter <= 0:
        raise ValueError("sphere diameter must be positive")
    radius = 0.5 * diameter
    patches, labels = [], []
    axis_name = "xyz"
    for axis in range(3):
        for sign in (+1, -1):
            e1, e2 = _FACE_AXES[(axis, sign)]
            n_f = np.zeros(3)
            n_f[axis] = sign
            patches.append(GnomonicSpherePatch(radius, n_f, e1, e2, center))
            labels.append("sphere%s%s" % ("+" if sign > 0 else "-", axis_name[axis]))
    return Surface.assemble(patches, ["sphere"] * 6, labels, name="sphere")


def _outward_sphere_quad(center, radius, corners):
    patch = SphereQuadPatch(center, radius, corners)
    fr = patch.frames(np.array(0.0), np.array(0.0))
    if np.dot(fr.normal, fr.point - center) < 0:
        corners = [corners[0], corners[3], corners[2], corners[1]]
        patch = SphereQuadPatch(center, radius, corners)
    return patch


def make_rounded_box(lengths, radius: float, center=(0.0, 0.0, 0.0)):
    """Patches, roles and labels of one rounded box (54 patches), unassembled."""
    lengths = np.asarray(lengths, dtype=float)
    center = np.asarray(center, dtype=float)
    if radius <= 0:
        raise ValueError("rounding radius must be positive")
    if np.any(lengths <= 2 * radius):
        raise ValueError("rounding radius too large for box side lengths")
    half = lengths / 2.0
    inner = half - radius
    eye = np.eye(3)
    axis_name = "xyz"
    patches, roles, labels = [], [], []

    for axis in range(3):
        for sign in (+1, -1):
            e1d, e2d = _FACE_AXES[(axis, sign)]
            e1 = np.asarray(e1d) * inner[np.argmax(np.abs(e1d))]
            e2 = np.asarray(e2d) * inner[np.argmax(np.abs(e2d))]
            origin = center + sign * half[axis] * eye[axis]
            patches.append(PlanePatch(origin, e1, e2))
            roles.append("face")
            labels.append("face%s%s" % ("+" if sign > 0 else "-", axis_name[axis]))

    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        for si in (+1, -1):
            for sj in (+1, -1):
                p0 = center + si * inner[i] * eye[i] + sj * inner[j] * eye[j]
                d1 = si * eye[i]
                d2 = sj * eye[j]
                axis_dir = np.cross(d1, d2)
                for half_id, (a0, a1) in enumerate([(0.0, np.pi / 4), (np.pi / 4, np.pi / 2)]):
                    patches.append(
                        CylinderPatch(p0, axis_dir, inner[k], radius, d1, d2, a0, a1)
                    )
                    roles.append("edge")
                    labels.append(
                        "edge-%s(%+d%s,%+d%s)h%d"
                        % (axis_name[k], si, axis_name[i], sj, axis_name[j], half_id)
                    )

    for sx in (+1, -1):
        for sy in (+1, -1):
            for sz in (+1, -1):
                sigma = np.array([sx, sy, sz], dtype=float)
                q = center + sigma * inner
                a_hat = sx * eye[0]
                b_hat = sy * eye[1]
                c_hat = sz * eye[2]
                m_ab = (a_hat + b_hat) / np.sqrt(2)
                m_bc = (b_hat + c_hat) / np.sqrt(2)
                m_ca = (c_hat + a_hat) / np.sqrt(2)
                m = (a_hat + b_hat + c_hat) / np.sqrt(3)
                for tag, quad in (
                    ("a", [a_hat, m_ab, m, m_ca]),
                    ("b", [b_hat, m_bc, m, m_ab]),
                    ("c", [c_hat, m_ca, m, m_bc]),
                ):
                    patches.append(_outward_sphere_quad(q, radius, quad))
                    roles.append("corner")
                    labels.append("corner(%+d,%+d,%+d)%s" % (sx, sy, sz, tag))

    return patches, roles, labels


def make_rounded_cube(edge: float = 1.0, radius: float = 0.01, center=(0.0, 0.0, 0.0)) -> Surface:
    """Cube with cylinder-rounded edges and sphere-rounded corners."""
    patches, roles, labels = make_rounded_box((edge, edge, edge), radius, center)
    return Surface.assemble(patches, roles, labels, name="rounded_cube")


def make_dipole(
    cross_section: float = 0.025,
    arm_length: float = 0.25,
    gap: float = 0.04,
    radius: float = 0.0025,
) -> Surface:
    """Two gap-separated rounded-box arms stacked along the z axis."""
    if gap <= 0:
        raise ValueError("gap must be positive")
    offset = gap / 2.0 + arm_length / 2.0
    patches, roles, labels = [], [], []
    for sign, tag in ((+1, "upper"), (-1, "lower")):
        p, r, l = make_rounded_box(
            (cross_section, cross_section, arm_length), radius, (0.0, 0.0, sign * offset)
        )
        patches += p
        roles += r
        labels += ["%s-%s" % (tag, li) for li in l]
    return Surface.assemble(patches, roles, labels, name="dipole")
