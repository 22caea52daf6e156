"""
newtonspec Simplicial Meshes

Generation and refinement of closed embedded simplicial meshes of the catalog
surfaces, flat-simplex measures, barycentric quadrature rules, and a plain
text mesh format.

* Sphere / Ellipsoid, n=2: icosahedron, 4-to-1 subdivision, radial then affine
  projection.
* Sphere / Ellipsoid, n=3: boundary of the 16-cell in R^4, 8-to-1 subdivision,
  same projection.
* Tori: diagonal-split grid on the parameter torus; corners keep unwrapped
  parameters per element.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from newtonspec_constants import Defaults, ErrorMessages, ReportFormat, Tolerances
from newtonspec_errors import (DegenerateElementError, InvalidInputError,
                               ReportWriteError, UnsupportedError)
from newtonspec_immersion import (IMPLICIT_KINDS, TORUS_KINDS, GeometryBatch, SurfaceSpec,
                                  chart_points, project_to_surface, sample_geometry_batch)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric quadrature rule on the reference simplex (weights sum to 1)"""

    order: int
    points: np.ndarray      # (q, n+1)
    weights: np.ndarray     # (q,)


@dataclass(frozen=True)
class SimplicialMesh:
    """Closed embedded simplicial complex with refinement metadata"""

    spec: SurfaceSpec
    vertices: np.ndarray                        # (V, D)
    elements: np.ndarray                        # (E, n+1)
    level: int = 0
    vertex_params: Optional[np.ndarray] = None  # (V, n), parametric surfaces only
    element_params: Optional[np.ndarray] = None # (E, n+1, n), unwrapped per corner

    @property
    def dim_n(self) -> int:
        return self.elements.shape[1] - 1

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def element_count(self) -> int:
        return self.elements.shape[0]

    @property
    def is_parametric(self) -> bool:
        return self.element_params is not None


# Base complexes

def _icosahedron() -> Tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = []
    for a, b in itertools.product((-1.0, 1.0), repeat=2):
        verts += [(0.0, a, b * phi), (a, b * phi, 0.0), (b * phi, 0.0, a)]
    verts = np.array(verts)
    # faces: triples with all pairwise distances equal to the edge length 2
    faces = [t for t in itertools.combinations(range(12), 3)
             if all(abs(np.linalg.norm(verts[i] - verts[j]) - 2.0) < 1e-9
                    for i, j in itertools.combinations(t, 2))]
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    return verts, np.array(faces, dtype=np.int64)


def _cross_polytope_boundary() -> Tuple[np.ndarray, np.ndarray]:
    """Boundary complex of the 16-cell: 8 vertices +-E_i, 16 tetrahedra"""
    verts = np.vstack([np.eye(4), -np.eye(4)])
    tets = [[axis + (4 if sign < 0 else 0) for axis, sign in enumerate(signs)]
            for signs in itertools.product((1, -1), repeat=4)]
    return verts, np.array(tets, dtype=np.int64)


def _orient_outward(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Order element vertices so det[v_0, ..., v_n] > 0 (star-shaped about the origin)"""
    dets = np.linalg.det(vertices[elements])
    elements = elements.copy()
    flip = dets < 0
    elements[flip, -2], elements[flip, -1] = elements[flip, -1].copy(), elements[flip, -2].copy()
    return elements


def _torus_grid(spec: SurfaceSpec, cells: int):
    step = TWO_PI / cells
    idx = np.arange(cells)
    iu, iv = np.meshgrid(idx, idx, indexing="ij")
    iu, iv = iu.ravel(), iv.ravel()

    def vid(i, j):
        return (i % cells) * cells + (j % cells)

    v00, v10, v11, v01 = vid(iu, iv), vid(iu + 1, iv), vid(iu + 1, iv + 1), vid(iu, iv + 1)
    elements = np.concatenate([np.stack([v00, v10, v11], axis=1),
                               np.stack([v00, v11, v01], axis=1)])
    p00 = np.stack([iu, iv], axis=1) * step
    p10 = p00 + [step, 0.0]
    p11 = p00 + [step, step]
    p01 = p00 + [0.0, step]
    element_params = np.concatenate([np.stack([p00, p10, p11], axis=1),
                                     np.stack([p00, p11, p01], axis=1)])
    vertex_params = np.stack(np.meshgrid(idx, idx, indexing="ij"), axis=-1).reshape(-1, 2) * step
    return chart_points(spec, vertex_params), elements, vertex_params, element_params


# octahedron diagonals (a, b)-(c, d) of a split tetrahedron, in tie-break order
OCTAHEDRON_DIAGONALS = ((0, 2, 1, 3), (0, 1, 2, 3), (0, 3, 1, 2))


def _subdivision_templates(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Red refinement templates in local labels

    Labels 0..n are the corners, the following labels are edge midpoints in
    the order of itertools.combinations(range(n+1), 2). Children are
    reordered to keep the parent orientation. Tetrahedra have one template
    per octahedron diagonal (see OCTAHEDRON_DIAGONALS).

    Returns:
        templates (T, children, n+1) and the local edge list (edges, 2)
    """
    edges = list(itertools.combinations(range(n + 1), 2))
    mid = {e: n + 1 + k for k, e in enumerate(edges)}

    def m(a, b):
        return mid[(min(a, b), max(a, b))]

    if n == 1:
        templates = [[(0, m(0, 1)), (m(0, 1), 1)]]
    elif n == 2:
        templates = [[(0, m(0, 1), m(0, 2)), (m(0, 1), 1, m(1, 2)),
                      (m(0, 2), m(1, 2), 2), (m(0, 1), m(1, 2), m(0, 2))]]
    elif n == 3:
        corners = [(0, m(0, 1), m(0, 2), m(0, 3)), (m(0, 1), 1, m(1, 2), m(1, 3)),
                   (m(0, 2), m(1, 2), 2, m(2, 3)), (m(0, 3), m(1, 3), m(2, 3), 3)]
        templates = []
        for a, b, c, d in OCTAHEDRON_DIAGONALS:
            ring = [m(a, c), m(a, d), m(b, d), m(b, c)]
            inner = [(m(a, b), m(c, d), ring[k], ring[(k + 1) % 4]) for k in range(4)]
            templates.append(corners + inner)
    else:
        raise UnsupportedError(ErrorMessages.INVALID_KIND_DIM.format(kind="refinement", n=n))

    bary = np.vstack([np.eye(n + 1)] + [(np.eye(n + 1)[a] + np.eye(n + 1)[b]) / 2 for a, b in edges])
    fixed = []
    for children in templates:
        oriented = []
        for child in children:
            child = list(child)
            if np.linalg.det(bary[child]) < 0:
                child[-2], child[-1] = child[-1], child[-2]
            oriented.append(child)
        fixed.append(oriented)
    return np.array(fixed, dtype=np.int64), np.array(edges, dtype=np.int64)


def _template_choice(mesh: SimplicialMesh, template_count: int) -> np.ndarray:
    """Template index per element; tetrahedra take their shortest octahedron diagonal"""
    if template_count == 1:
        return np.zeros(mesh.element_count, dtype=np.int64)
    X = mesh.vertices[mesh.elements]
    lengths = np.stack([np.linalg.norm(X[:, a] + X[:, b] - X[:, c] - X[:, d], axis=1)
                        for a, b, c, d in OCTAHEDRON_DIAGONALS], axis=1)
    return np.argmin(lengths, axis=1)


def refine(mesh: SimplicialMesh) -> SimplicialMesh:
    """
    Edge-midpoint subdivision with projection of the new vertices to the surface

    Triangles split 4-to-1 and tetrahedra 8-to-1, the inner octahedron along
    its shortest diagonal; orientation and closedness are preserved.
    """
    n = mesh.dim_n
    templates, local_edges = _subdivision_templates(n)
    E, V = mesh.element_count, mesh.vertex_count
    # (E, children, n+1) local labels, stacked child-major below
    local_children = templates[_template_choice(mesh, templates.shape[0])]

    def split(local: np.ndarray) -> np.ndarray:
        picked = local[np.arange(E)[:, None], local_children.reshape(E, -1)]
        picked = picked.reshape(E, templates.shape[1], n + 1, *local.shape[2:])
        return np.swapaxes(picked, 0, 1).reshape(-1, n + 1, *local.shape[2:])

    all_edges = np.sort(mesh.elements[:, local_edges], axis=2).reshape(-1, 2)
    unique_edges, first, inverse = np.unique(all_edges, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(E, len(local_edges))
    labels = np.concatenate([mesh.elements, V + inverse], axis=1)
    new_elements = split(labels)

    vertex_params = element_params = None
    if mesh.is_parametric:
        corner = mesh.element_params
        mids = (corner[:, local_edges[:, 0]] + corner[:, local_edges[:, 1]]) / 2.0
        local = np.concatenate([corner, mids], axis=1)
        element_params = split(local)
        new_params = mids.reshape(-1, n)[first]
        if mesh.spec.kind in TORUS_KINDS:
            new_params = np.mod(new_params, TWO_PI)
        vertex_params = np.vstack([mesh.vertex_params, new_params])
        new_vertices = chart_points(mesh.spec, new_params)
    else:
        midpoints = (mesh.vertices[unique_edges[:, 0]] + mesh.vertices[unique_edges[:, 1]]) / 2.0
        new_vertices = project_to_surface(mesh.spec, midpoints)

    logger.debug("refined level %d -> %d: %d -> %d elements",
                 mesh.level, mesh.level + 1, E, new_elements.shape[0])
    return SimplicialMesh(
        spec=mesh.spec,
        vertices=np.vstack([mesh.vertices, new_vertices]),
        elements=new_elements,
        level=mesh.level + 1,
        vertex_params=vertex_params,
        element_params=element_params,
    )


def generate(spec: SurfaceSpec, level: int, base_cells: int = Defaults.TORUS_BASE_CELLS) -> SimplicialMesh:
    """
    Generate the level-`level` mesh of a catalog surface

    Raises:
        UnsupportedError: For surfaces without a closed mesh (hyperplane patch)
    """
    if level < 0:
        raise InvalidInputError(ErrorMessages.INVALID_LEVELS.format(levels=[level]))
    if spec.kind in IMPLICIT_KINDS and spec.dim_n in (2, 3):
        unit, elements = _icosahedron() if spec.dim_n == 2 else _cross_polytope_boundary()
        elements = _orient_outward(unit, elements)
        mesh = SimplicialMesh(spec=spec, vertices=unit * spec.axes, elements=elements)
    elif spec.kind in TORUS_KINDS:
        vertices, elements, vparams, eparams = _torus_grid(spec, base_cells)
        mesh = SimplicialMesh(spec=spec, vertices=vertices, elements=elements,
                              vertex_params=vparams, element_params=eparams)
    else:
        raise UnsupportedError(ErrorMessages.UNSUPPORTED_MESH.format(kind=spec.kind.value, n=spec.dim_n))

    for _ in range(level):
        mesh = refine(mesh)
    logger.info("mesh %s level %d: %d vertices, %d elements",
                spec.descriptor, level, mesh.vertex_count, mesh.element_count)
    return mesh


# Measures and quadrature

def _edge_gram(mesh: SimplicialMesh, elements: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = mesh.vertices[mesh.elements[elements]]
    edges = X[:, 1:] - X[:, :1]
    return edges, np.einsum("ead,ebd->eab", edges, edges)


def element_measures(mesh: SimplicialMesh) -> np.ndarray:
    """Flat-simplex measures sqrt(det G)/n! of all elements"""
    _, gram = _edge_gram(mesh, np.arange(mesh.element_count))
    volume = np.sqrt(np.clip(np.linalg.det(gram), 0.0, None)) / math.factorial(mesh.dim_n)
    bad = np.flatnonzero(volume <= Tolerances.ELEMENT_VOLUME)
    if bad.size:
        raise DegenerateElementError(ErrorMessages.DEGENERATE_ELEMENT.format(
            element=int(bad[0]), volume=float(volume[bad[0]])))
    return volume


def element_measure(mesh: SimplicialMesh, element: int) -> float:
    """Flat-simplex measure of one element"""
    _, gram = _edge_gram(mesh, np.array([element]))
    volume = math.sqrt(max(float(np.linalg.det(gram[0])), 0.0)) / math.factorial(mesh.dim_n)
    if volume <= Tolerances.ELEMENT_VOLUME:
        raise DegenerateElementError(ErrorMessages.DEGENERATE_ELEMENT.format(element=element, volume=volume))
    return volume


def total_measure(mesh: SimplicialMesh) -> float:
    return float(element_measures(mesh).sum())


def quadrature(order: int, dim_n: int) -> QuadratureRule:
    """Barycenter rule (order 1) or the symmetric rule exact for quadratics (order 2)"""
    if order not in (1, 2):
        raise InvalidInputError(ErrorMessages.INVALID_QUADRATURE.format(order=order))
    if dim_n not in (1, 2, 3):
        raise UnsupportedError(ErrorMessages.INVALID_KIND_DIM.format(kind="quadrature", n=dim_n))
    k = dim_n + 1
    if order == 1:
        return QuadratureRule(1, np.full((1, k), 1.0 / k), np.ones(1))
    if dim_n == 1:
        s = 0.5 / math.sqrt(3.0)
        points = np.array([[0.5 + s, 0.5 - s], [0.5 - s, 0.5 + s]])
    elif dim_n == 2:
        points = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    else:
        a = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
        b = (5.0 - math.sqrt(5.0)) / 20.0
        points = np.full((4, 4), b)
        np.fill_diagonal(points, a)
    return QuadratureRule(2, points, np.full(points.shape[0], 1.0 / points.shape[0]))


def quadrature_geometry(mesh: SimplicialMesh, rule: QuadratureRule,
                        elements: Optional[np.ndarray] = None) -> GeometryBatch:
    """
    Geometry at the quadrature points of the given elements (element-major order)

    Implicit surfaces: flat points projected to the surface. Parametric
    surfaces: barycentric interpolation of the unwrapped corner parameters.
    """
    if elements is None:
        elements = np.arange(mesh.element_count)
    if mesh.is_parametric:
        params = np.einsum("qk,ekn->eqn", rule.points, mesh.element_params[elements])
        return sample_geometry_batch(mesh.spec, params=params.reshape(-1, mesh.dim_n))
    flat = np.einsum("qk,ekd->eqd", rule.points, mesh.vertices[mesh.elements[elements]])
    projected = project_to_surface(mesh.spec, flat.reshape(-1, mesh.vertices.shape[1]))
    return sample_geometry_batch(mesh.spec, points=projected)


def vertex_geometry(mesh: SimplicialMesh) -> GeometryBatch:
    """Geometry at the mesh vertices"""
    if mesh.is_parametric:
        return sample_geometry_batch(mesh.spec, params=mesh.vertex_params)
    return sample_geometry_batch(mesh.spec, points=mesh.vertices)


def face_incidence(mesh: SimplicialMesh) -> np.ndarray:
    """Number of elements sharing each (n-1)-face"""
    n = mesh.dim_n
    faces = np.concatenate([np.delete(mesh.elements, k, axis=1) for k in range(n + 1)])
    _, counts = np.unique(np.sort(faces, axis=1), axis=0, return_counts=True)
    return counts


def is_closed(mesh: SimplicialMesh) -> bool:
    """Every (n-1)-face is shared by exactly two elements"""
    return bool(np.all(face_incidence(mesh) == 2))


# Text format

def write_mesh(mesh: SimplicialMesh, path: str) -> None:
    """
    Write the mesh in the plain text format

        newtonspec-mesh 1 n N count_v count_e
        v x1 ... xD
        s i0 ... in        (0-based)
    """
    lines = [f"{ReportFormat.MESH_HEADER} {ReportFormat.MESH_VERSION} {mesh.dim_n} "
             f"{mesh.vertices.shape[1]} {mesh.vertex_count} {mesh.element_count}"]
    lines += ["v " + " ".join(f"{x:.17g}" for x in row) for row in mesh.vertices]
    lines += ["s " + " ".join(str(int(i)) for i in row) for row in mesh.elements]
    try:
        with open(path, "w", encoding="ascii") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as e:
        raise ReportWriteError(ErrorMessages.REPORT_WRITE.format(path=path, reason=e), path=path)


def _recover_torus_params(spec: SurfaceSpec, vertices: np.ndarray, elements: np.ndarray):
    u = np.mod(np.arctan2(vertices[:, 1], vertices[:, 0]), TWO_PI)
    v = np.mod(np.arctan2(vertices[:, 3], vertices[:, 2]), TWO_PI)
    vparams = np.stack([u, v], axis=1)
    corner = vparams[elements]
    shift = corner - corner[:, :1]
    corner = corner - TWO_PI * np.round(shift / TWO_PI)
    return vparams, corner


def read_mesh(path: str, spec: SurfaceSpec, level: int = 0) -> SimplicialMesh:
    """Read a mesh written by write_mesh for the given surface"""
    try:
        with open(path, "r", encoding="ascii") as handle:
            rows = [line.split() for line in handle if line.strip()]
        header = rows[0]
        if header[0] != ReportFormat.MESH_HEADER or int(header[1]) != ReportFormat.MESH_VERSION:
            raise ValueError("bad header")
        n, D, nv, ne = (int(v) for v in header[2:6])
        vertices = np.array([[float(x) for x in row[1:]] for row in rows[1:1 + nv]]).reshape(nv, D)
        elements = np.array([[int(i) for i in row[1:]] for row in rows[1 + nv:1 + nv + ne]],
                            dtype=np.int64).reshape(ne, n + 1)
    except (OSError, ValueError, IndexError) as e:
        raise InvalidInputError(ErrorMessages.MESH_READ.format(path=path, reason=e))

    if spec.kind in TORUS_KINDS:
        vparams, eparams = _recover_torus_params(spec, vertices, elements)
        return SimplicialMesh(spec, vertices, elements, level, vparams, eparams)
    return SimplicialMesh(spec, vertices, elements, level)
