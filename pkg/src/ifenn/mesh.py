"""Structured meshes of square bilinear quadrilaterals and their Gauss-point grid.

Nodes and elements are numbered row-major from the minimum corner. Node
``(i, j)`` sits at ``(i * h, j * h)``; element ``(i, j)`` spans
``[i h, (i+1) h] x [j h, (j+1) h]`` and lists its nodes counter-clockwise
starting at the lower-left corner.

Notches are represented either as a *seam* (nodes on the notch line are
duplicated so that the elements on either side are disconnected) or as an
*induced history* (the mesh is untouched and the driver seeds a large crack
driving force on nearby Gauss points).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

GAUSS_COORD = 1.0 / math.sqrt(3.0)
# local (xi, eta) of the 4 Gauss points, ordered by (eta, xi)
GAUSS_POINTS = np.array(
    [[-GAUSS_COORD, -GAUSS_COORD], [GAUSS_COORD, -GAUSS_COORD],
     [-GAUSS_COORD, GAUSS_COORD], [GAUSS_COORD, GAUSS_COORD]]
)
BOUNDARY_NAMES = ("bottom", "top", "left", "right")
SQUARE_RTOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh or notch configuration."""


@dataclass(frozen=True)
class NotchSpec:
    """A straight notch along an element-edge line.

    ``orientation`` is inferred from the end points when omitted. Ends lying on
    the domain boundary are crack mouths; ends inside the domain are tips.
    """

    start: tuple[float, float]
    end: tuple[float, float]
    orientation: str | None = None
    representation: str = "seam"

    def __post_init__(self):
        if self.representation not in ("seam", "induced-history"):
            raise MeshError(f"unknown notch representation {self.representation!r}")
        if self.orientation is None:
            dx = abs(self.end[0] - self.start[0])
            dy = abs(self.end[1] - self.start[1])
            object.__setattr__(self, "orientation", "horizontal" if dx >= dy else "vertical")
        if self.orientation not in ("horizontal", "vertical"):
            raise MeshError(f"unknown notch orientation {self.orientation!r}")


@dataclass(frozen=True)
class NotchSeam:
    """Grid-snapped notch: the line index, the node span and the duplicated nodes."""

    notch: NotchSpec
    line: int  # grid line index (j for horizontal, i for vertical)
    lo: int  # first node index along the line
    hi: int  # last node index along the line
    original_nodes: np.ndarray
    duplicate_nodes: np.ndarray


@dataclass(frozen=True, eq=False)
class StructuredMesh:
    lx: float
    ly: float
    nx: int
    ny: int
    elem_size: float
    node_coords: np.ndarray  # (n_nodes, 2)
    node_ij: np.ndarray  # (n_nodes, 2) integer grid position
    elem_connectivity: np.ndarray  # (n_elem, 4)
    boundary_sets: dict[str, np.ndarray]
    notch_seams: tuple[NotchSeam, ...] = ()
    notches: tuple[NotchSpec, ...] = ()

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def n_elem(self) -> int:
        return len(self.elem_connectivity)

    @property
    def n_gp(self) -> int:
        return 4 * self.n_elem

    @property
    def pixel_shape(self) -> tuple[int, int]:
        return 2 * self.ny, 2 * self.nx

    def summary(self) -> str:
        """Plain-text description for debugging and output headers."""
        lines = [
            f"domain {self.lx:g} x {self.ly:g} mm",
            f"elements {self.nx} x {self.ny} = {self.n_elem} (size {self.elem_size:g} mm)",
            f"nodes {self.n_nodes}",
            f"bbox ({self.node_coords[:, 0].min():g}, {self.node_coords[:, 1].min():g})"
            f" - ({self.node_coords[:, 0].max():g}, {self.node_coords[:, 1].max():g})",
            f"pixels {self.pixel_shape[0]} x {self.pixel_shape[1]}",
        ]
        for name in BOUNDARY_NAMES:
            lines.append(f"boundary {name}: {len(self.boundary_sets[name])} nodes")
        for n in self.notches:
            lines.append(
                f"notch {n.orientation} {n.representation} "
                f"({n.start[0]:g}, {n.start[1]:g}) -> ({n.end[0]:g}, {n.end[1]:g})"
            )
        for s in self.notch_seams:
            lines.append(f"seam line {s.line} nodes {s.lo}..{s.hi}, {len(s.duplicate_nodes)} duplicated")
        return "\n".join(lines)


def _snap(value: float, h: float, what: str) -> int:
    k = value / h
    idx = int(round(k))
    if abs(k - idx) >= 0.5 - 1e-9:
        raise MeshError(f"{what} = {value:g} is not within elem_size/2 of a grid line")
    return idx


def build_mesh(lx: float, ly: float, nx: int, ny: int, notches=()) -> StructuredMesh:
    """Build a rectangular mesh of square bilinear elements.

    Parameters
    ----------
    lx, ly : float
        Domain size in mm.
    nx, ny : int
        Element counts; ``lx / nx`` must equal ``ly / ny``.
    notches : sequence of NotchSpec
        Seam notches are cut into the mesh here; induced-history notches are
        only recorded.
    """
    if lx <= 0 or ly <= 0:
        raise MeshError(f"domain size must be positive, got lx={lx}, ly={ly}")
    if nx < 1 or ny < 1 or int(nx) != nx or int(ny) != ny:
        raise MeshError(f"element counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    hx, hy = lx / nx, ly / ny
    if abs(hx - hy) > SQUARE_RTOL * max(hx, hy):
        raise MeshError(
            f"elements are not square: lx/nx = {hx!r} but ly/ny = {hy!r}"
        )
    h = hx

    jj, ii = np.meshgrid(np.arange(ny + 1), np.arange(nx + 1), indexing="ij")
    node_ij = np.stack([ii.ravel(), jj.ravel()], axis=1)
    ej, ei = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    ei, ej = ei.ravel(), ej.ravel()
    nid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    conn = np.stack([nid(ei, ej), nid(ei + 1, ej), nid(ei + 1, ej + 1), nid(ei, ej + 1)], axis=1)

    seams = []
    used = set()
    extra_ij = []
    n_next = len(node_ij)
    for notch in notches:
        if notch.representation != "seam":
            continue
        seam, dup_ij = _cut_seam(notch, h, nx, ny, conn, n_next, used)
        seams.append(seam)
        extra_ij.extend(dup_ij)
        n_next += len(dup_ij)
    if extra_ij:
        node_ij = np.concatenate([node_ij, np.asarray(extra_ij, dtype=node_ij.dtype)])

    coords = node_ij.astype(float) * h
    # exact domain edges regardless of round-off in i*h
    coords[node_ij[:, 0] == nx, 0] = lx
    coords[node_ij[:, 1] == ny, 1] = ly
    bsets = {
        "bottom": np.flatnonzero(node_ij[:, 1] == 0),
        "top": np.flatnonzero(node_ij[:, 1] == ny),
        "left": np.flatnonzero(node_ij[:, 0] == 0),
        "right": np.flatnonzero(node_ij[:, 0] == nx),
    }
    for arr in (coords, node_ij, conn, *bsets.values()):
        arr.flags.writeable = False
    return StructuredMesh(
        lx=float(lx), ly=float(ly), nx=nx, ny=ny, elem_size=h,
        node_coords=coords, node_ij=node_ij, elem_connectivity=conn,
        boundary_sets=bsets, notch_seams=tuple(seams), notches=tuple(notches),
    )


def _cut_seam(notch, h, nx, ny, conn, n_next, used):
    (x0, y0), (x1, y1) = notch.start, notch.end
    if notch.orientation == "horizontal":
        line = _snap(y0, h, "notch y")
        if _snap(y1, h, "notch y") != line:
            raise MeshError("horizontal notch end points are not on the same grid line")
        if not 0 < line < ny:
            raise MeshError("notch lies on the domain boundary")
        a, b = sorted((_snap(x0, h, "notch x"), _snap(x1, h, "notch x")))
        n_along = nx
    else:
        line = _snap(x0, h, "notch x")
        if _snap(x1, h, "notch x") != line:
            raise MeshError("vertical notch end points are not on the same grid line")
        if not 0 < line < nx:
            raise MeshError("notch lies on the domain boundary")
        a, b = sorted((_snap(y0, h, "notch y"), _snap(y1, h, "notch y")))
        n_along = ny
    if a == b:
        raise MeshError("notch has zero length after snapping to the grid")
    if a < 0 or b > n_along:
        raise MeshError("notch extends outside the domain")

    # ends on the domain boundary are mouths and get split; interior ends are tips
    lo = a if a == 0 else a + 1
    hi = b if b == n_along else b - 1
    if lo > hi:
        raise MeshError("notch is shorter than one element and has no interior nodes")

    def node(k):
        return line * (nx + 1) + k if notch.orientation == "horizontal" else k * (nx + 1) + line

    originals = np.array([node(k) for k in range(lo, hi + 1)])
    if used.intersection(originals.tolist()):
        raise MeshError("notch seams overlap")
    used.update(originals.tolist())
    duplicates = np.arange(n_next, n_next + len(originals))
    remap = dict(zip(originals.tolist(), duplicates.tolist()))

    # elements above (horizontal) or right of (vertical) the seam take the duplicates
    if notch.orientation == "horizontal":
        elems = [line * nx + c for c in range(a, b)]
        local = (0, 1)
        dup_ij = [(k, line) for k in range(lo, hi + 1)]
    else:
        elems = [r * nx + line for r in range(a, b)]
        local = (0, 3)
        dup_ij = [(line, k) for k in range(lo, hi + 1)]
    for e in elems:
        for loc in local:
            conn[e, loc] = remap.get(int(conn[e, loc]), conn[e, loc])
    seam = NotchSeam(notch, line, lo, hi, originals, duplicates)
    return seam, dup_ij


@dataclass(frozen=True, eq=False)
class GaussGrid:
    """Gauss points of a structured mesh laid out as a pixel grid.

    Gauss-point arrays are element-major with shape ``(n_elem, 4)``; the flat
    GP index is ``4 * e + q``. ``gp_row``/``gp_col`` give the pixel of each GP,
    ``pixel_to_gp`` the flat GP index of each row-major pixel.
    """

    px: int
    py: int
    gp_coords: np.ndarray  # (n_gp, 2)
    gp_row: np.ndarray
    gp_col: np.ndarray
    pixel_to_gp: np.ndarray  # (py * px,)
    h_px: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.py, self.px


@lru_cache(maxsize=16)
def gauss_grid(mesh: StructuredMesh) -> GaussGrid:
    h = mesh.elem_size
    e = np.arange(mesh.n_elem)
    ei, ej = e % mesh.nx, e // mesh.nx
    q = np.arange(4)
    col = (2 * ei[:, None] + q[None, :] % 2).ravel()
    row = (2 * ej[:, None] + q[None, :] // 2).ravel()
    local = 0.5 * (1.0 + GAUSS_POINTS) * h
    x = (ei[:, None] * h + local[None, :, 0]).ravel()
    y = (ej[:, None] * h + local[None, :, 1]).ravel()
    px, py = 2 * mesh.nx, 2 * mesh.ny
    pixel_to_gp = np.empty(px * py, dtype=np.int64)
    pixel_to_gp[row * px + col] = np.arange(len(row))
    for arr in (row, col, pixel_to_gp):
        arr.flags.writeable = False
    return GaussGrid(
        px=px, py=py, gp_coords=np.stack([x, y], axis=1), gp_row=row, gp_col=col,
        pixel_to_gp=pixel_to_gp, h_px=h / 2.0,
    )


def shape_functions(elem_size: float):
    """Bilinear shape functions at the 2x2 Gauss points of a square element.

    Returns ``N`` (4 GP, 4 nodes), ``dN`` (4 GP, 2, 4 nodes) in physical
    coordinates and the quadrature weights (4,).
    """
    xi, eta = GAUSS_POINTS[:, 0], GAUSS_POINTS[:, 1]
    sx = np.array([-1.0, 1.0, 1.0, -1.0])
    sy = np.array([-1.0, -1.0, 1.0, 1.0])
    N = 0.25 * (1 + sx[None, :] * xi[:, None]) * (1 + sy[None, :] * eta[:, None])
    dxi = 0.25 * sx[None, :] * (1 + sy[None, :] * eta[:, None])
    deta = 0.25 * sy[None, :] * (1 + sx[None, :] * xi[:, None])
    dN = np.stack([dxi, deta], axis=1) * (2.0 / elem_size)
    w = np.full(4, elem_size**2 / 4.0)
    return N, dN, w


def induced_history_mask(mesh: StructuredMesh, grid: GaussGrid | None = None) -> np.ndarray:
    """Gauss points within one element of an induced-history notch, shape (n_elem, 4)."""
    grid = grid or gauss_grid(mesh)
    x, y = grid.gp_coords[:, 0], grid.gp_coords[:, 1]
    mask = np.zeros(mesh.n_gp, dtype=bool)
    h = mesh.elem_size
    for n in mesh.notches:
        if n.representation != "induced-history":
            continue
        p0, p1 = np.asarray(n.start, float), np.asarray(n.end, float)
        d = p1 - p0
        t = np.clip(((x - p0[0]) * d[0] + (y - p0[1]) * d[1]) / (d @ d), 0.0, 1.0)
        dist = np.hypot(x - p0[0] - t * d[0], y - p0[1] - t * d[1])
        mask |= dist < h
    return mask.reshape(mesh.n_elem, 4)
