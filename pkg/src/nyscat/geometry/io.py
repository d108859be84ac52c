"""Text serialization for sampled patch surfaces.

Line-oriented format, one value grid per patch:

    PATCHSURF v1
    wavelength <float>
    patches <M>
    patch <id> <Nu> <Nv>
    <x> <y> <z>          (Nu*Nv lines, row-major with v fastest)
    ...
    edge <idA> <edgeA> <idB> <edgeB> <flip>

Samples live on the closed tensor Chebyshev grid, so a loaded patch is
reconstructed by spectral interpolation with no resampling step.  Floats are
written with shortest round-trip precision; saving a loaded surface again
reproduces the file byte for byte.
"""

from __future__ import annotations

import numpy as np

from nyscat import spectral
from nyscat.geometry.patches import ChebyshevPatch
from nyscat.geometry.surfaces import EdgeMatch, Surface, SurfaceError, edge_uv

__all__ = ["SurfaceFormatError", "save_surface", "load_surface"]

_HEADER = "PATCHSURF v1"


class SurfaceFormatError(ValueError):
    """Malformed surface file; message carries the byte offset."""


def save_surface(surface: Surface, path, wavelength: float, nu: int = 20, nv: int | None = None):
    """Sample every patch on a closed (nu, nv) grid and write the text format.

    Args:
        surface: assembled surface whose adjacency records are persisted as-is.
        wavelength: stored in the header for downstream medium setup.
        nu, nv: sample grid shape per patch (nv defaults to nu).
    """
    nv = nu if nv is None else nv
    if nu < 4 or nv < 4:
        raise ValueError("sample grids need at least 4 points per direction")
    gu = spectral.cc_nodes(nu)
    gv = spectral.cc_nodes(nv)
    uu, vv = np.meshgrid(gu, gv, indexing="ij")
    lines = [_HEADER, f"wavelength {float(wavelength)!r}", f"patches {surface.n_patches}"]
    for pid, patch in enumerate(surface.patches):
        lines.append(f"patch {pid} {nu} {nv}")
        pts = patch.point(uu.ravel(), vv.ravel())
        lines.extend(" ".join(repr(float(c)) for c in row) for row in pts)
    for m in surface.adjacency:
        lines.append(f"edge {m.patch_a} {m.edge_a} {m.patch_b} {m.edge_b} {int(m.flipped)}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


class _LineReader:
    """Sequential line scanner that tracks the byte offset of each line."""

    def __init__(self, text: str):
        self._lines = text.split("\n")
        self._idx = 0
        self._offsets = np.cumsum([0] + [len(l.encode("utf-8")) + 1 for l in self._lines])

    @property
    def offset(self) -> int:
        return int(self._offsets[min(self._idx, len(self._lines) - 1)])

    def next_tokens(self):
        while self._idx < len(self._lines):
            line = self._lines[self._idx].strip()
            self._idx += 1
            if line:
                return line.split()
        return None

    def fail(self, why: str):
        raise SurfaceFormatError(f"{why} (byte offset {self.offset})")


def _floats(reader, tokens, count, what):
    if len(tokens) != count:
        reader.fail(f"expected {count} fields for {what}, got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError:
        reader.fail(f"non-numeric value in {what}")


def load_surface(path) -> Surface:
    """Read a sampled-patch file and rebuild interpolating patches.

    Every adjacency record in the file is re-verified against the loaded
    sample grids, and closure (each patch edge in exactly one record) is
    enforced, so a surface that loads cleanly is safe to hand to the solver.
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    r = _LineReader(text)

    tok = r.next_tokens()
    if tok is None or " ".join(tok) != _HEADER:
        r.fail(f"missing '{_HEADER}' header")
    tok = r.next_tokens()
    if tok is None or len(tok) != 2 or tok[0] != "wavelength":
        r.fail("expected 'wavelength <float>'")
    wavelength = _floats(r, tok[1:], 1, "wavelength")[0]
    if wavelength <= 0:
        r.fail("wavelength must be positive")
    tok = r.next_tokens()
    if tok is None or len(tok) != 2 or tok[0] != "patches":
        r.fail("expected 'patches <count>'")
    try:
        n_patches = int(tok[1])
    except ValueError:
        r.fail("patch count is not an integer")
    if n_patches < 1:
        r.fail("patch count must be positive")

    patches = []
    for pid in range(n_patches):
        tok = r.next_tokens()
        if tok is None:
            r.fail(f"file ends before patch {pid}")
        if len(tok) != 4 or tok[0] != "patch":
            r.fail(f"expected 'patch {pid} <Nu> <Nv>'")
        try:
            got_id, nu, nv = int(tok[1]), int(tok[2]), int(tok[3])
        except ValueError:
            r.fail("patch header fields are not integers")
        if got_id != pid:
            r.fail(f"patch ids must be sequential, expected {pid} got {got_id}")
        if nu < 4 or nv < 4:
            r.fail(f"patch {pid} grid {nu}x{nv} is too small")
        grid = np.empty((nu * nv, 3))
        for row in range(nu * nv):
            tok = r.next_tokens()
            if tok is None:
                r.fail(f"patch {pid} ends after {row} of {nu * nv} samples")
            if tok[0] in ("patch", "edge"):
                r.fail(f"patch {pid} has {row} of {nu * nv} samples")
            grid[row] = _floats(r, tok, 3, f"patch {pid} sample")
        patches.append(ChebyshevPatch(grid.reshape(nu, nv, 3)))

    adjacency = []
    seen = set()
    while (tok := r.next_tokens()) is not None:
        if tok[0] != "edge" or len(tok) != 6:
            r.fail("expected 'edge <idA> <edgeA> <idB> <edgeB> <flip>'")
        try:
            ia, ea, ib, eb, flip = (int(t) for t in tok[1:])
        except ValueError:
            r.fail("edge record fields are not integers")
        for pi, ei in ((ia, ea), (ib, eb)):
            if not 0 <= pi < n_patches:
                r.fail(f"edge record names patch {pi} of {n_patches}")
            if not 0 <= ei <= 3:
                r.fail(f"edge index {ei} outside 0..3")
            if (pi, ei) in seen:
                r.fail(f"patch {pi} edge {ei} appears in two records")
            seen.add((pi, ei))
        if flip not in (0, 1):
            r.fail("flip flag must be 0 or 1")
        adjacency.append(EdgeMatch(ia, ea, ib, eb, bool(flip)))

    _verify_loaded(patches, adjacency, n_patches)
    labels = [f"patch{i}" for i in range(n_patches)]
    return Surface(patches, ["patch"] * n_patches, labels, adjacency, wavelength=wavelength)


def _verify_loaded(patches, adjacency, n_patches):
    scale = max(
        float(np.abs(p.values).max()) for p in patches
    )
    tol = 1e-9 * max(scale, 1.0)
    t = np.linspace(-1.0, 1.0, 9)
    for m in adjacency:
        ua, va = edge_uv(m.edge_a, t)
        ub, vb = edge_uv(m.edge_b, t[::-1] if m.flipped else t)
        pa = patches[m.patch_a].point(ua, va)
        pb = patches[m.patch_b].point(ub, vb)
        gap = float(np.abs(pa - pb).max())
        if gap > tol:
            raise SurfaceError(
                f"shared-edge samples disagree by {gap:.3e} between patch "
                f"{m.patch_a} edge {m.edge_a} and patch {m.patch_b} edge {m.edge_b}"
            )
    covered = {(m.patch_a, m.edge_a) for m in adjacency} | {
        (m.patch_b, m.edge_b) for m in adjacency
    }
    missing = [
        (p, e) for p in range(n_patches) for e in range(4) if (p, e) not in covered
    ]
    if missing:
        head = ", ".join(f"patch {p} edge {e}" for p, e in missing[:6])
        raise SurfaceError(f"surface is not closed: no adjacency record for {head}")
