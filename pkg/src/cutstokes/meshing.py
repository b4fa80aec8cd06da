"""Background meshes, Alfeld splits, and cut-element bookkeeping.

The background mesh is a structured triangulation of an axis-aligned box.
Every macro triangle is split at its barycenter into three children (Alfeld
split); velocity and pressure spaces live on the children.  Classification
relative to a P1 level set marks children inside/cut/outside and derives the
macro element sets used for stabilization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .reference import gauss_lobatto_unit, reference_nodes

# Vertex values this close to zero (relative to h) are pushed to the negative
# side so no configuration is ever treated as degenerate-cut.
SNAP_REL = 1e-12


class EmptyActiveDomainError(RuntimeError):
    """Raised when the level set leaves no element with an inside part."""


def _build_facets(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unique facets, per-triangle facet ids, and facet->triangle adjacency.

    Facets are stored with sorted vertex pairs.  `facet_tris[f]` holds the
    one or two owning triangles (-1 when on the boundary).
    """
    nt = triangles.shape[0]
    raw = np.empty((3 * nt, 2), dtype=np.int64)
    raw[0::3] = triangles[:, [0, 1]]
    raw[1::3] = triangles[:, [1, 2]]
    raw[2::3] = triangles[:, [2, 0]]
    raw.sort(axis=1)
    facets, inverse = np.unique(raw, axis=0, return_inverse=True)
    tri_facets = inverse.reshape(nt, 3)
    facet_tris = np.full((facets.shape[0], 2), -1, dtype=np.int64)
    owner = np.repeat(np.arange(nt), 3)
    order = np.argsort(inverse, kind="stable")
    fid_sorted = inverse[order]
    own_sorted = owner[order]
    first = np.searchsorted(fid_sorted, np.arange(facets.shape[0]), side="left")
    last = np.searchsorted(fid_sorted, np.arange(facets.shape[0]), side="right")
    count = last - first
    if count.max() > 2:
        raise ValueError("non-manifold facet in triangulation")
    facet_tris[:, 0] = own_sorted[first]
    has2 = count == 2
    facet_tris[has2, 1] = own_sorted[first[has2] + 1]
    return facets, tri_facets, facet_tris


def _orientations(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    u, w = b - a, c - a
    return u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]


@dataclass
class MacroMesh:
    """Conforming triangulation of the background box.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, positively oriented
    h : float
        Grid pitch of the structured builder; halves exactly on refinement.
        All 1/h penalty scalings refer to this value.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    h: float
    facets: np.ndarray = field(init=False)
    tri_facets: np.ndarray = field(init=False)
    facet_tris: np.ndarray = field(init=False)

    def __post_init__(self):
        self.facets, self.tri_facets, self.facet_tris = _build_facets(self.triangles)

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def diameters(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        e = np.stack([
            np.linalg.norm(v[:, 1] - v[:, 0], axis=1),
            np.linalg.norm(v[:, 2] - v[:, 1], axis=1),
            np.linalg.norm(v[:, 0] - v[:, 2], axis=1),
        ])
        return e.max(axis=0)

    def validate(self) -> None:
        if self.n_triangles == 0:
            raise ValueError("empty mesh")
        orient = _orientations(self.vertices, self.triangles)
        if not (orient > 0).all():
            raise ValueError("negatively oriented triangle present")
        d = self.diameters()
        if d.max() / d.min() > 4.0:
            raise ValueError("mesh is not quasi-uniform (diameter ratio > 4)")
        owners = (self.facet_tris >= 0).sum(axis=1)
        if not ((owners == 1) | (owners == 2)).all():
            raise ValueError("facet with invalid owner count")


def build_background_mesh(box: tuple[float, float, float, float], h: float) -> MacroMesh:
    """Structured triangular mesh of `box` = (xmin, xmax, ymin, ymax).

    Each axis is divided into ceil(side/h) cells (at least 2); every cell is
    split along its SW-NE diagonal into two triangles.
    """
    xmin, xmax, ymin, ymax = box
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("degenerate box")
    if not np.isfinite(h) or h <= 0:
        raise ValueError("mesh size must be positive")
    nx = max(2, int(np.ceil((xmax - xmin) / h)))
    ny = max(2, int(np.ceil((ymax - ymin) / h)))
    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    pitch = max((xmax - xmin) / nx, (ymax - ymin) / ny)
    mesh = MacroMesh(vertices, np.array(tris, dtype=np.int64), h=pitch)
    mesh.validate()
    return mesh


def refine_uniform(mesh: MacroMesh) -> MacroMesh:
    """Red refinement: every triangle is split into four via edge midpoints."""
    nv = mesh.vertices.shape[0]
    mids = 0.5 * (mesh.vertices[mesh.facets[:, 0]] + mesh.vertices[mesh.facets[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    t = mesh.triangles
    mab = nv + mesh.tri_facets[:, 0]
    mbc = nv + mesh.tri_facets[:, 1]
    mca = nv + mesh.tri_facets[:, 2]
    children = np.empty((4 * mesh.n_triangles, 3), dtype=np.int64)
    children[0::4] = np.column_stack([t[:, 0], mab, mca])
    children[1::4] = np.column_stack([mab, t[:, 1], mbc])
    children[2::4] = np.column_stack([mca, mbc, t[:, 2]])
    children[3::4] = np.column_stack([mab, mbc, mca])
    out = MacroMesh(vertices, children, h=0.5 * mesh.h)
    out.validate()
    return out


@dataclass
class NodeSet:
    """Global Lagrange nodes of one degree on the split mesh.

    `elem2node[e, m]` is the global node id of local node m of child e; the
    local ordering matches `reference_nodes` under the child's affine map.
    """

    degree: int
    coords: np.ndarray
    elem2node: np.ndarray
    n_vertex_nodes: int
    n_edge_nodes: int

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    def facet_nodes(self, am: "AlfeldMesh", fid: int) -> np.ndarray:
        """Global node ids lying on child facet `fid` (endpoints + edge nodes)."""
        a, b = am.child_mesh.facets[fid]
        k = self.degree
        ids = [a, b]
        if k >= 2:
            base = self.n_vertex_nodes + fid * (k - 1)
            ids.extend(range(base, base + k - 1))
        return np.asarray(ids, dtype=np.int64)


class AlfeldMesh:
    """Barycentric (Alfeld) split of a macro mesh.

    Child 3*t + i of macro triangle t is (v_i, v_{i+1}, barycenter_t); the
    split preserves orientation.  Lagrange node sets of any degree are built
    lazily and cached.
    """

    def __init__(self, macro: MacroMesh):
        self.macro = macro
        nt = macro.n_triangles
        bary = macro.vertices[macro.triangles].mean(axis=1)
        self.vertices = np.vstack([macro.vertices, bary])
        nv = macro.vertices.shape[0]
        bid = nv + np.arange(nt)
        t = macro.triangles
        children = np.empty((3 * nt, 3), dtype=np.int64)
        children[0::3] = np.column_stack([t[:, 0], t[:, 1], bid])
        children[1::3] = np.column_stack([t[:, 1], t[:, 2], bid])
        children[2::3] = np.column_stack([t[:, 2], t[:, 0], bid])
        self.children = children
        self.parent = np.repeat(np.arange(nt), 3)
        self.child_mesh = MacroMesh(self.vertices, children, h=macro.h)
        self._nodes: dict[int, NodeSet] = {}

    @property
    def n_children(self) -> int:
        return self.children.shape[0]

    def child_vertices(self, e) -> np.ndarray:
        return self.vertices[self.children[e]]

    def child_areas(self) -> np.ndarray:
        return 0.5 * _orientations(self.vertices, self.children)

    def lagrange_nodes(self, degree: int) -> NodeSet:
        if degree in self._nodes:
            return self._nodes[degree]
        cm = self.child_mesh
        k = degree
        ne = self.n_children
        nv = self.vertices.shape[0]
        nf = cm.facets.shape[0]
        n_edge = nf * (k - 1)
        n_int_per = (k - 1) * (k - 2) // 2
        coords = [self.vertices]
        if k >= 2:
            gl = gauss_lobatto_unit(k)[1:-1]
            a = self.vertices[cm.facets[:, 0]]
            b = self.vertices[cm.facets[:, 1]]
            edge_pts = a[:, None, :] + gl[None, :, None] * (b - a)[:, None, :]
            coords.append(edge_pts.reshape(-1, 2))
        ref = reference_nodes(k)
        n_int_total = ne * n_int_per
        if n_int_per > 0:
            ri = ref[3 + 3 * (k - 1):]
            va = self.vertices[self.children[:, 0]]
            vb = self.vertices[self.children[:, 1]]
            vc = self.vertices[self.children[:, 2]]
            ipts = (va[:, None, :]
                    + ri[None, :, 0, None] * (vb - va)[:, None, :]
                    + ri[None, :, 1, None] * (vc - va)[:, None, :])
            coords.append(ipts.reshape(-1, 2))
        coords = np.vstack(coords)

        e2n = np.empty((ne, (k + 1) * (k + 2) // 2), dtype=np.int64)
        e2n[:, 0:3] = self.children
        if k >= 2:
            for le, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
                fid = cm.tri_facets[:, le]
                base = nv + fid[:, None] * (k - 1) + np.arange(k - 1)[None, :]
                flip = self.children[:, a] > self.children[:, b]
                base[flip] = base[flip][:, ::-1]
                e2n[:, 3 + le * (k - 1): 3 + (le + 1) * (k - 1)] = base
        if n_int_per > 0:
            start = nv + n_edge
            e2n[:, 3 + 3 * (k - 1):] = (start + n_int_per * np.arange(ne)[:, None]
                                        + np.arange(n_int_per)[None, :])
        ns = NodeSet(k, coords, e2n, n_vertex_nodes=nv, n_edge_nodes=n_edge)
        assert ns.n_nodes == nv + n_edge + n_int_total
        self._nodes[k] = ns
        return ns


def alfeld_split(mesh: MacroMesh) -> AlfeldMesh:
    return AlfeldMesh(mesh)


def snap_values(values: np.ndarray, h: float) -> np.ndarray:
    """Push level-set values within SNAP_REL*h of zero to the negative side."""
    tol = SNAP_REL * h
    out = np.array(values, dtype=float, copy=True)
    out[np.abs(out) <= tol] = -tol
    return out


@dataclass
class ElementSets:
    """Element and facet sets derived from the P1 level set.

    Children are classified by the signs of the snapped vertex values; macro
    sets are unions over children.  `gp_facets` are the interior child facets
    whose two distinct owner children both descend from ghost-penalty macro
    elements (including facets interior to a single macro element).
    """

    child_class: np.ndarray          # 0 inside, 1 cut, 2 outside, per child
    active_macro: np.ndarray
    cut_macro: np.ndarray
    gp_macro: np.ndarray
    active_children: np.ndarray
    alfeld_cut: np.ndarray
    alfeld_interior: np.ndarray
    gp_facets: np.ndarray
    active_boundary_facets: np.ndarray

    @property
    def band_elements(self) -> np.ndarray:
        return self.alfeld_cut


def classify_elements(am: AlfeldMesh, phi) -> ElementSets:
    """Classify the split mesh against a P1 level set.

    `phi` is either an array of nodal values on the Alfeld vertices or an
    object exposing them as `vertex_values`.
    """
    values = np.asarray(getattr(phi, "vertex_values", phi), dtype=float)
    if values.shape != (am.vertices.shape[0],):
        raise ValueError("level-set values must live on the Alfeld vertices")
    v = snap_values(values, am.macro.h)[am.children]
    neg = (v < 0).sum(axis=1)
    child_class = np.full(am.n_children, 2, dtype=np.int64)
    child_class[neg == 3] = 0
    child_class[(neg > 0) & (neg < 3)] = 1

    per_macro = child_class.reshape(-1, 3)
    macro_has_inside = ((per_macro == 0) | (per_macro == 1)).any(axis=1)
    macro_has_cut = (per_macro == 1).any(axis=1)
    active_macro = np.flatnonzero(macro_has_inside)
    cut_macro = np.flatnonzero(macro_has_cut)
    if active_macro.size == 0:
        raise EmptyActiveDomainError("level set misses the mesh: no active element")

    # gp macros: cut macros plus active macros sharing a facet with a cut one
    mm = am.macro
    is_active = macro_has_inside
    is_gp = macro_has_cut.copy()
    t0, t1 = mm.facet_tris[:, 0], mm.facet_tris[:, 1]
    interior = t1 >= 0
    a, b = t0[interior], t1[interior]
    is_gp[a[macro_has_cut[b] & is_active[a]]] = True
    is_gp[b[macro_has_cut[a] & is_active[b]]] = True
    gp_macro = np.flatnonzero(is_gp)

    active_children = np.flatnonzero(is_active[am.parent])
    alfeld_cut = np.flatnonzero(child_class == 1)

    cm = am.child_mesh
    c0, c1 = cm.facet_tris[:, 0], cm.facet_tris[:, 1]
    child_active = is_active[am.parent]
    both_active = (c1 >= 0) & child_active[c0] & np.where(c1 >= 0, child_active[np.maximum(c1, 0)], False)
    owners_gp = np.zeros(cm.facets.shape[0], dtype=bool)
    owners_gp[both_active] = (is_gp[am.parent[c0[both_active]]]
                              & is_gp[am.parent[c1[both_active]]])
    gp_facets = np.flatnonzero(owners_gp)

    one_active = np.where(c1 >= 0,
                          child_active[c0] ^ child_active[np.maximum(c1, 0)],
                          child_active[c0])
    active_boundary_facets = np.flatnonzero(one_active)

    # children of active macros whose closure misses the cut band
    cut_vertex = np.zeros(am.vertices.shape[0], dtype=bool)
    cut_vertex[am.children[alfeld_cut].ravel()] = True
    touches = cut_vertex[am.children].any(axis=1)
    alfeld_interior = np.flatnonzero(child_active & ~touches)

    return ElementSets(
        child_class=child_class,
        active_macro=active_macro,
        cut_macro=cut_macro,
        gp_macro=gp_macro,
        active_children=active_children,
        alfeld_cut=alfeld_cut,
        alfeld_interior=alfeld_interior,
        gp_facets=gp_facets,
        active_boundary_facets=active_boundary_facets,
    )
