"""Meshes for notched-specimen fracture runs.

A `Mesh` is a homogeneous unstructured mesh (tri3/quad4 in 2D, tet4/hex8 in
3D) with named boundary node sets. `generate_notched_square` builds the
single-edge-notched square used by the tension and shear benchmarks: a
structured quad4 (or extruded hex8) grid in which the nodes along the notch
line are duplicated, so the slit transmits neither traction nor damage
diffusion between its faces.

Meshes can be round-tripped through a plain text format (see `save_mesh`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import elements


class MeshFormatError(ValueError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MeshValidationError(ValueError):
    """Mesh data violates a structural invariant."""


class UnsupportedGeometryError(ValueError):
    """Requested specimen geometry is outside the generator's scope."""


class DegenerateMeshError(ValueError):
    """Target element size too coarse for the requested domain."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Homogeneous mesh with tagged boundary node sets.

    Attributes
    ----------
    dim : 2 or 3.
    nodes : (nnodes, dim) coordinates in mm.
    elements : (nelems, k) connectivity, 0-based.
    kind : one of "tri3", "quad4", "tet4", "hex8".
    boundary_sets : name -> sorted array of node indices (each non-empty).
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    kind: str
    boundary_sets: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "elements", np.asarray(self.elements, dtype=np.int64))
        object.__setattr__(
            self,
            "boundary_sets",
            {
                name: np.unique(np.asarray(idx, dtype=np.int64))
                for name, idx in self.boundary_sets.items()
            },
        )
        if self.kind not in elements.ELEMENT_KINDS:
            raise MeshValidationError(f"unknown element kind {self.kind!r}")
        kdim, knodes = elements.ELEMENT_KINDS[self.kind]
        if kdim != self.dim:
            raise MeshValidationError(
                f"element kind {self.kind!r} is {kdim}D but mesh dim is {self.dim}"
            )
        if self.nodes.ndim != 2 or self.nodes.shape[1] != self.dim:
            raise MeshValidationError("nodes must have shape (nnodes, dim)")
        if self.elements.ndim != 2 or self.elements.shape[1] != knodes:
            raise MeshValidationError(
                f"connectivity must have shape (nelems, {knodes})"
            )
        if self.elements.size and (
            self.elements.min() < 0 or self.elements.max() >= len(self.nodes)
        ):
            raise MeshValidationError("connectivity references an invalid node index")
        for name, idx in self.boundary_sets.items():
            if len(idx) == 0:
                raise MeshValidationError(f"boundary set {name!r} is empty")
            if idx.min() < 0 or idx.max() >= len(self.nodes):
                raise MeshValidationError(
                    f"boundary set {name!r} references an invalid node index"
                )
        # Raises InvertedElementError on a non-positive Jacobian anywhere.
        elements.compute_batch_matrices(self.kind, self.nodes[self.elements])

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def diameter(self) -> float:
        """Diagonal of the bounding box (mm)."""
        return float(np.linalg.norm(self.nodes.max(axis=0) - self.nodes.min(axis=0)))

    def boundary_set(self, name: str) -> np.ndarray:
        try:
            return self.boundary_sets[name]
        except KeyError:
            raise KeyError(
                f"unknown boundary set {name!r}; available: "
                f"{sorted(self.boundary_sets)}"
            ) from None


@dataclass(frozen=True)
class NotchedSquareSpec:
    """Square specimen of side `length` with a horizontal edge notch.

    The notch runs from `notch_start` to `notch_end` (mm, both within the
    square); only horizontal notches starting on the left edge are
    supported. For 3D meshes, supply `thickness` and `layers` to extrude
    along z.
    """

    length: float = 1.0
    notch_start: tuple[float, float] = (0.0, 0.5)
    notch_end: tuple[float, float] = (0.5, 0.5)
    h: float = 0.05
    thickness: float | None = None
    layers: int = 1
    # Optional local refinement: elements of size ~h_fine inside the box
    # [tip_x - refine_back, length] x [notch_y - refine_below,
    # notch_y + refine_above], size ~h elsewhere. The damage band localizes
    # over the internal length, so the box must cover the expected crack
    # path at a few elements per internal length.
    h_fine: float = 0.0
    refine_below: float = 0.0
    refine_above: float = 0.0
    refine_back: float = 0.0

    def __post_init__(self):
        if self.length <= 0.0:
            raise ValueError("side length must be positive")
        if self.h <= 0.0:
            raise ValueError("target element size must be positive")
        for p in (self.notch_start, self.notch_end):
            if not (0.0 <= p[0] <= self.length and 0.0 <= p[1] <= self.length):
                raise ValueError("notch endpoints must lie within the square")
        if self.thickness is not None and self.thickness <= 0.0:
            raise ValueError("thickness must be positive")
        if self.layers < 1:
            raise ValueError("extrusion needs at least one layer")
        if self.h_fine < 0.0 or self.h_fine > self.h:
            raise ValueError("h_fine must lie in (0, h] (or 0 to disable)")
        if self.h_fine > 0.0 and min(
            self.refine_below, self.refine_above, self.refine_back
        ) <= 0.0:
            raise ValueError("refinement extents must be positive when h_fine is set")


def _piecewise_axis(breaks, spacings) -> np.ndarray:
    """Axis divisions, roughly uniform per segment, with exact breakpoints."""
    parts = [np.array([breaks[0]])]
    for a, b, s in zip(breaks, breaks[1:], spacings):
        if b <= a:
            continue
        count = max(1, round((b - a) / s))
        parts.append(np.linspace(a, b, count + 1)[1:])
    return np.concatenate(parts)


def _grid_axes(spec: NotchedSquareSpec) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Axis divisions and (notch row, notch tip column) for the spec."""
    if spec.notch_start[1] != spec.notch_end[1]:
        raise UnsupportedGeometryError("only horizontal notches are supported")
    if spec.notch_start[0] != 0.0:
        raise UnsupportedGeometryError("notch must start on the left edge")
    if spec.h >= spec.length:
        raise DegenerateMeshError(
            f"element size {spec.h} does not subdivide side length {spec.length}"
        )
    L = spec.length
    y_n = spec.notch_start[1]
    x_tip = spec.notch_end[0]
    if spec.h_fine > 0.0:
        hf = spec.h_fine
        y_lo = max(y_n - spec.refine_below, 0.0)
        y_hi = min(y_n + spec.refine_above, L)
        x_lo = max(x_tip - spec.refine_back, 0.0)
        xs = _piecewise_axis([0.0, x_lo, x_tip, L], [spec.h, hf, hf])
        ys = _piecewise_axis([0.0, y_lo, y_n, y_hi, L], [spec.h, hf, hf, spec.h])
    else:
        xs = _piecewise_axis([0.0, x_tip, L], [spec.h, spec.h])
        ys = _piecewise_axis([0.0, y_n, L], [spec.h, spec.h])
    j_notch = int(np.argmin(np.abs(ys - y_n)))
    i_tip = int(np.argmin(np.abs(xs - x_tip)))
    if not 0 < j_notch < len(ys) - 1:
        raise UnsupportedGeometryError("notch line must be interior to the square")
    if i_tip < 1:
        raise UnsupportedGeometryError("notch is shorter than one element")
    return xs, ys, j_notch, i_tip


def generate_notched_square(spec: NotchedSquareSpec) -> Mesh:
    """Structured quad4 (2D) or hex8 (3D) mesh of the notched square.

    Nodes on the notch line left of the tip are duplicated; elements below
    the slit connect to the duplicates, elements above to the originals, and
    the crack-tip node stays single.
    """
    xs, ys, j_notch, i_tip = _grid_axes(spec)
    nx, ny = len(xs) - 1, len(ys) - 1
    three_d = spec.thickness is not None
    n_layers = spec.layers if three_d else 0
    n_levels = n_layers + 1 if three_d else 1

    n_plane = (nx + 1) * (ny + 1)  # structured nodes per z-level, before duplicates

    # Per-level node ids: structured part first, then the duplicate row.
    dup_cols = np.arange(i_tip)  # duplicated columns on the notch line
    n_per_level = n_plane + len(dup_cols)

    def nid(level: int, j: int, i: int, below: bool) -> int:
        base = level * n_per_level
        if below and j == j_notch and i < i_tip:
            return base + n_plane + i
        return base + j * (nx + 1) + i

    nodes = []
    z_levels = (
        np.linspace(0.0, spec.thickness, n_levels) if three_d else [None]
    )
    for z in z_levels:
        for j in range(ny + 1):
            for i in range(nx + 1):
                p = (xs[i], ys[j]) if not three_d else (xs[i], ys[j], z)
                nodes.append(p)
        for i in dup_cols:
            p = (xs[i], ys[j_notch]) if not three_d else (xs[i], ys[j_notch], z)
            nodes.append(p)
    nodes = np.asarray(nodes, dtype=float)

    def quad(level: int, j: int, i: int) -> list[int]:
        # Cells in row j_notch - 1 touch the notch line from below.
        below = j + 1 == j_notch
        return [
            nid(level, j, i, False),
            nid(level, j, i + 1, False),
            nid(level, j + 1, i + 1, below),
            nid(level, j + 1, i, below),
        ]

    conn = []
    if not three_d:
        for j in range(ny):
            for i in range(nx):
                conn.append(quad(0, j, i))
        kind = "quad4"
    else:
        for k in range(n_layers):
            for j in range(ny):
                for i in range(nx):
                    conn.append(quad(k, j, i) + quad(k + 1, j, i))
        kind = "hex8"

    def level_ids(pred) -> np.ndarray:
        ids = []
        for lv in range(n_levels if three_d else 1):
            base = lv * n_per_level
            for j in range(ny + 1):
                for i in range(nx + 1):
                    if pred(i, j):
                        ids.append(base + j * (nx + 1) + i)
            for d, i in enumerate(dup_cols):
                if pred(i, j_notch):
                    ids.append(base + n_plane + d)
        return np.asarray(ids, dtype=np.int64)

    sets = {
        "bottom": level_ids(lambda i, j: j == 0),
        "top": level_ids(lambda i, j: j == ny),
        "left": level_ids(lambda i, j: i == 0),
        "right": level_ids(lambda i, j: i == nx),
    }
    if three_d:
        sets["back"] = np.arange(n_per_level, dtype=np.int64)
        sets["front"] = np.arange(n_per_level, dtype=np.int64) + n_layers * n_per_level

    return Mesh(
        dim=3 if three_d else 2,
        nodes=nodes,
        elements=np.asarray(conn, dtype=np.int64),
        kind=kind,
        boundary_sets=sets,
    )


def save_mesh(mesh: Mesh, path) -> None:
    """Write the text mesh format.

    Header `dim nnodes nelems kind`, node coordinate lines, connectivity
    lines (0-based), then `set <name> <count>` blocks listing node indices.
    """
    with open(path, "w") as fh:
        fh.write(f"{mesh.dim} {mesh.n_nodes} {mesh.n_elements} {mesh.kind}\n")
        for p in mesh.nodes:
            fh.write(" ".join(repr(float(c)) for c in p) + "\n")
        for el in mesh.elements:
            fh.write(" ".join(str(int(i)) for i in el) + "\n")
        for name, idx in mesh.boundary_sets.items():
            fh.write(f"set {name} {len(idx)}\n")
            fh.write(" ".join(str(int(i)) for i in idx) + "\n")


def load_mesh(path) -> Mesh:
    """Read the text mesh format written by `save_mesh`."""
    with open(path) as fh:
        lines = fh.readlines()

    def parse(line_no: int, text: str, conv, what: str):
        try:
            return [conv(t) for t in text.split()]
        except ValueError:
            raise MeshFormatError(f"expected {what}", line_no) from None

    if not lines:
        raise MeshFormatError("empty mesh file", 1)
    header = lines[0].split()
    if len(header) != 4:
        raise MeshFormatError("header must be 'dim nnodes nelems kind'", 1)
    try:
        dim, nnodes, nelems = int(header[0]), int(header[1]), int(header[2])
    except ValueError:
        raise MeshFormatError("header counts must be integers", 1) from None
    kind = header[3]
    if kind not in elements.ELEMENT_KINDS:
        raise MeshFormatError(f"unknown element kind {kind!r}", 1)
    knodes = elements.ELEMENT_KINDS[kind][1]

    need = 1 + nnodes + nelems
    if len(lines) < need:
        raise MeshFormatError("file truncated before connectivity ends", len(lines))

    nodes = []
    for ln in range(1, 1 + nnodes):
        vals = parse(ln + 1, lines[ln], float, "node coordinates")
        if len(vals) != dim:
            raise MeshFormatError(f"expected {dim} coordinates", ln + 1)
        nodes.append(vals)
    conn = []
    for ln in range(1 + nnodes, need):
        vals = parse(ln + 1, lines[ln], int, "connectivity indices")
        if len(vals) != knodes:
            raise MeshFormatError(f"expected {knodes} node indices", ln + 1)
        conn.append(vals)

    sets: dict[str, np.ndarray] = {}
    ln = need
    while ln < len(lines):
        if not lines[ln].strip():
            ln += 1
            continue
        parts = lines[ln].split()
        if len(parts) != 3 or parts[0] != "set":
            raise MeshFormatError("expected 'set <name> <count>'", ln + 1)
        name = parts[1]
        try:
            count = int(parts[2])
        except ValueError:
            raise MeshFormatError("set count must be an integer", ln + 1) from None
        idx: list[int] = []
        ln += 1
        while len(idx) < count:
            if ln >= len(lines):
                raise MeshFormatError(
                    f"set {name!r} truncated ({len(idx)}/{count} indices)", len(lines)
                )
            idx.extend(parse(ln + 1, lines[ln], int, "node indices"))
            ln += 1
        if len(idx) != count:
            raise MeshFormatError(f"set {name!r} has too many indices", ln)
        sets[name] = np.asarray(idx, dtype=np.int64)

    try:
        return Mesh(
            dim=dim,
            nodes=np.asarray(nodes, dtype=float),
            elements=np.asarray(conn, dtype=np.int64),
            kind=kind,
            boundary_sets=sets,
        )
    except (MeshValidationError, elements.InvertedElementError) as exc:
        raise MeshValidationError(str(exc)) from exc
