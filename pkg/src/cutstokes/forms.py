"""Assembly of the saddle-point system.

The velocity block collects the viscous volume term, the symmetric Nitsche
boundary terms and the penalty gamma_n/h on the discrete interface; the
divergence coupling is integrated on the reference element where the Piola
Jacobians cancel, so it is exact regardless of the deformation.  Ghost
penalties use the direct (extension based) form: on each patch facet the
neighbour's polynomial data is evaluated at foreign reference coordinates
and the squared mismatch is integrated with the patch rule.

All matrices are returned in CSR form.  Symmetric local blocks are mirrored
from their upper triangle before insertion and triplets are merged by a
stable sort on (row, col), so assembled matrices are exactly symmetric and
bit-reproducible run to run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import CutQuadrature, GeometryError
from .reference import reference_element, triangle_rule
from .spaces import (MultiplierSpace, PressureSpace, VelocitySpace,
                     scalar_tables, velocity_tables, velocity_tables_affine)

__all__ = [
    "FormParams", "SaddleSystem", "assemble_a", "assemble_b", "assemble_c",
    "assemble_ghost_penalty", "assemble_j", "assemble_rhs",
    "pressure_mean_vector", "build_saddle_system", "ghost_penalty_field_energy",
    "dump_matrix_market",
]


@dataclass(frozen=True)
class FormParams:
    """Weights and degrees of the discrete problem.

    `gamma_n` is the Nitsche penalty, `gamma_gp` the ghost-penalty weight and
    `gamma_lambda` the multiplier stabilization weight; `k` and `k_lambda`
    are the velocity and multiplier degrees.  The optional quadrature orders
    override the defaults (2k+2 volume, 4k patch) when the rules are built.
    """

    gamma_n: float = 40.0
    gamma_gp: float = 0.1
    gamma_lambda: float = 0.1
    k: int = 2
    k_lambda: int = 1
    volume_order: int | None = None
    patch_order: int | None = None

    def __post_init__(self):
        if self.gamma_n <= 0:
            raise ValueError("gamma_n must be positive")
        if self.k < 2:
            raise ValueError("velocity degree must be >= 2")
        if self.k_lambda < 1:
            raise ValueError("multiplier degree must be >= 1")


class _Triplets:
    """Triplet buffer merged deterministically into CSR."""

    def __init__(self):
        self._r, self._c, self._v = [], [], []

    def add(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray):
        rows, cols, vals = np.asarray(rows), np.asarray(cols), np.asarray(vals)
        if rows.ndim == 1:
            rows, cols, vals = rows[None], cols[None], vals[None]
        nr, nc = rows.shape[1], cols.shape[1]
        self._r.append(np.repeat(rows, nc, axis=1).ravel())
        self._c.append(np.tile(cols, (1, nr)).ravel())
        self._v.append(vals.reshape(-1, nr * nc).ravel())

    def matrix(self, nrows: int, ncols: int) -> sp.csr_matrix:
        if not self._r:
            return sp.csr_matrix((nrows, ncols))
        r = np.concatenate(self._r)
        c = np.concatenate(self._c)
        v = np.concatenate(self._v)
        # stable sort keeps insertion order within each entry, so duplicate
        # sums are performed in the same order every run and for both halves
        # of a symmetric insertion
        key = r * ncols + c
        order = np.argsort(key, kind="stable")
        key, v = key[order], v[order]
        first = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        vals = np.add.reduceat(v, first)
        kk = key[first]
        return sp.csr_matrix((vals, (kk // ncols, kk % ncols)),
                             shape=(nrows, ncols))


def _sym(loc: np.ndarray) -> np.ndarray:
    """Mirror the upper triangle so symmetric pairs share one float."""
    return np.triu(loc) + np.triu(loc, 1).T


def _inv2(A: np.ndarray) -> np.ndarray:
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    return np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / det


def assemble_a(params: FormParams, quad: CutQuadrature,
               vs: VelocitySpace) -> sp.csr_matrix:
    """Viscous volume term plus the symmetric Nitsche boundary terms."""
    if params.k != vs.degree:
        raise ValueError("params.k does not match the velocity space degree")
    mp = quad.mapping
    h = quad.am.macro.h
    tri = _Triplets()

    pts, wts = quad.ref_rule
    cache: dict[bytes, np.ndarray] = {}
    for e in quad.inside_elems:
        e = int(e)
        row = vs.element_row[e]
        if mp.is_deformed[e]:
            _, grad, _ = velocity_tables(vs, e, pts)
            _, J = mp.jacobians(e, pts)
            loc = _sym(np.einsum("q,qics,qjcs->ij", wts * J, grad, grad))
        else:
            # undeformed elements share the rule, and the local stiffness
            # depends on the Jacobian alone
            key = mp.A[e].tobytes()
            loc = cache.get(key)
            if loc is None:
                _, grad, _ = velocity_tables_affine(mp.A[e], vs.ref, pts)
                loc = _sym(np.einsum("q,qics,qjcs->ij",
                                     wts * mp.detA[e], grad, grad))
                cache[key] = loc
        dofs = vs.elem_dofs[row]
        tri.add(dofs, dofs, loc)

    for e in quad.cut_elems:
        e = int(e)
        xh, w = quad.cut_parts[e]
        _, grad, _ = velocity_tables(vs, e, xh)
        _, J = mp.jacobians(e, xh)
        loc = _sym(np.einsum("q,qics,qjcs->ij", w * J, grad, grad))
        dofs = vs.elem_dofs[vs.element_row[e]]
        tri.add(dofs, dofs, loc)

    for e, rule in quad.interface.items():
        val, grad, _ = velocity_tables(vs, e, rule.xhat)
        nd = np.einsum("qs,qdcs->qdc", rule.normals, grad)
        K1 = np.einsum("q,qic,qjc->ij", rule.weights, val, nd)
        pen = _sym(np.einsum("q,qic,qjc->ij",
                             rule.weights * (params.gamma_n / h), val, val))
        dofs = vs.elem_dofs[vs.element_row[e]]
        tri.add(dofs, dofs, pen - (K1 + K1.T))

    return tri.matrix(vs.n_dofs, vs.n_dofs)


def assemble_b(quad: CutQuadrature, vs: VelocitySpace,
               ps: PressureSpace) -> sp.csr_matrix:
    """Divergence coupling -(q, div v) over the whole active mesh.

    Pulled back to the reference element the Jacobians cancel, leaving a
    polynomial integrand of degree k + k_p - 2 which the rule integrates
    exactly; only the nodal Piola blocks enter per element.
    """
    pts, wts = triangle_rule(vs.degree + ps.degree)
    qv = ps.ref.eval(pts)
    dpsi = vs.ref.grad(pts)
    Ghat = np.einsum("q,qi,qmk->imk", wts, qv, dpsi)
    W = np.transpose(vs.nodal_blocks, (0, 1, 3, 2))
    loc = -np.einsum("imk,emck->eimc", Ghat, W)
    loc = loc.reshape(vs.elements.size, ps.n_per, vs.n_local)
    tri = _Triplets()
    tri.add(ps.elem_dofs, vs.elem_dofs, loc)
    return tri.matrix(ps.n_dofs, vs.n_dofs)


def assemble_c(quad: CutQuadrature, vs: VelocitySpace,
               ms: MultiplierSpace) -> sp.csr_matrix:
    """Interface coupling (mu, n_h . v) on the discrete interface."""
    tri = _Triplets()
    for e, rule in quad.interface.items():
        val, _, _ = velocity_tables(vs, e, rule.xhat, derivs=False)
        mu, _ = scalar_tables(ms, e, rule.xhat, derivs=False)
        loc = np.einsum("q,qi,qjc,qc->ij", rule.weights, mu, val, rule.normals)
        tri.add(ms.elem_dofs[ms.element_row[e]],
                vs.elem_dofs[vs.element_row[e]], loc)
    return tri.matrix(ms.n_dofs, vs.n_dofs)


def _patch_sides(quad, fid):
    cm = quad.am.child_mesh
    e1, e2 = (int(t) for t in cm.facet_tris[int(fid)])
    if e2 < 0:
        raise ValueError(f"facet {fid} is not interior")
    return e1, e2


def assemble_ghost_penalty(params: FormParams, quad: CutQuadrature, space,
                           facets: np.ndarray | None = None,
                           variant: str = "vector") -> sp.csr_matrix:
    """Direct ghost penalty over facet patches.

    For each facet the data of one owner is extended to the other: the Piola
    numerator and the Jacobian are polynomials on the undeformed element, so
    the extension is their ratio evaluated at foreign reference coordinates
    (`vector`), or the plain composition polynomial (`scalar`).  The squared
    patch jump is integrated with the order-4k rule and weighted by
    gamma_gp/h^2.
    """
    if variant not in ("vector", "scalar"):
        raise ValueError("variant must be 'vector' or 'scalar'")
    vector = variant == "vector"
    mp = quad.mapping
    if facets is None:
        facets = quad.sets.gp_facets
    scale = params.gamma_gp / quad.am.macro.h ** 2
    pts, wts = quad.patch_rule
    tri = _Triplets()

    for fid in facets:
        e1, e2 = _patch_sides(quad, fid)
        dofs = np.concatenate([space.elem_dofs[space.element_row[e1]],
                               space.elem_dofs[space.element_row[e2]]])
        # the owners share the facet nodes; fold the jump onto unique dofs so
        # one symmetric local block is inserted per side
        udofs, fold = np.unique(dofs, return_inverse=True)
        for ei, ej in ((e1, e2), (e2, e1)):
            xt = mp.v0[ei] + pts @ mp.A[ei].T
            xhj = (xt - mp.v0[ej]) @ _inv2(mp.A[ej]).T
            _, Ji = mp.jacobians(ei, pts)
            if vector:
                _, Jj = mp.jacobians(ej, xhj)
                if (np.abs(Jj / mp.detA[ej]) < 1e-8).any():
                    raise GeometryError(
                        f"ghost-penalty extension across facet {int(fid)} hits "
                        "a degenerate Jacobian")
                vi = velocity_tables(space, ei, pts, derivs=False)[0]
                vj = velocity_tables(space, ej, xhj, derivs=False)[0]
            else:
                vi = space.ref.eval(pts)[:, :, None]
                vj = space.ref.eval(xhj)[:, :, None]
            if ei == e1:
                jump = np.concatenate([vi, -vj], axis=1)
            else:
                jump = np.concatenate([-vj, vi], axis=1)
            folded = np.zeros((jump.shape[0], udofs.size, jump.shape[2]))
            np.add.at(folded, (slice(None), fold), jump)
            loc = _sym(np.einsum("q,qdc,qec->de", wts * Ji * scale,
                                 folded, folded))
            tri.add(udofs, udofs, loc)

    n = space.n_dofs
    return tri.matrix(n, n)


def ghost_penalty_field_energy(params: FormParams, quad: CutQuadrature,
                               vs: VelocitySpace, f,
                               facets: np.ndarray | None = None) -> float:
    """Ghost-penalty energy of a general vector field.

    Outside the discrete space the form acts on the elementwise projection:
    the Jacobian-weighted composition J~ (f o Phi) is projected onto degree
    2k-1 polynomials per undeformed element, and the penalty is evaluated on
    the projected representative.
    """
    mp = quad.mapping
    if facets is None:
        facets = quad.sets.gp_facets
    scale = params.gamma_gp / quad.am.macro.h ** 2
    pts, wts = quad.patch_rule
    pref = reference_element(2 * vs.degree - 1)
    P = pref.eval(pts)
    M = np.einsum("q,qa,qb->ab", wts, P, P)

    owners = set()
    for fid in facets:
        e1, e2 = _patch_sides(quad, fid)
        owners.update((e1, e2))
    coef = {}
    for e in sorted(owners):
        _, J = mp.jacobians(e, pts)
        fx = np.asarray(f(mp.phys(e, pts)), dtype=float)
        wt = (J / mp.detA[e])[:, None] * fx
        rhs = np.einsum("q,qa,qc->ac", wts, P, wt)
        coef[e] = np.linalg.solve(M, rhs)

    total = 0.0
    for fid in facets:
        e1, e2 = _patch_sides(quad, fid)
        for ei, ej in ((e1, e2), (e2, e1)):
            xt = mp.v0[ei] + pts @ mp.A[ei].T
            xhj = (xt - mp.v0[ej]) @ _inv2(mp.A[ej]).T
            _, Ji = mp.jacobians(ei, pts)
            _, Jj = mp.jacobians(ej, xhj)
            if (np.abs(Jj / mp.detA[ej]) < 1e-8).any():
                raise GeometryError(
                    f"ghost-penalty extension across facet {int(fid)} hits "
                    "a degenerate Jacobian")
            ui = (mp.detA[ei] / Ji)[:, None] * (P @ coef[ei])
            uj = (mp.detA[ej] / Jj)[:, None] * (pref.eval(xhj) @ coef[ej])
            jump = ui - uj
            total += float((wts * Ji) @ (jump ** 2).sum(axis=1)) * scale
    return total


def assemble_j(params: FormParams, quad: CutQuadrature,
               ms: MultiplierSpace) -> sp.csr_matrix:
    """Normal-gradient stabilization -h gamma_lambda (n.grad l, n.grad m)
    over the cut band, with the normal extended off the interface."""
    if params.k_lambda != ms.degree:
        raise ValueError("params.k_lambda does not match the multiplier degree")
    mp = quad.mapping
    h = quad.am.macro.h
    pts, wts = quad.ref_rule
    tri = _Triplets()
    for e in quad.cut_elems:
        e = int(e)
        n = quad.band_normals[e]
        _, grad = scalar_tables(ms, e, pts)
        _, J = mp.jacobians(e, pts)
        nd = np.einsum("qmj,qj->qm", grad, n)
        loc = _sym(np.einsum("q,qm,qn->mn", wts * J, nd, nd))
        dofs = ms.elem_dofs[ms.element_row[e]]
        tri.add(dofs, dofs, (-h * params.gamma_lambda) * loc)
    return tri.matrix(ms.n_dofs, ms.n_dofs)


def assemble_rhs(quad: CutQuadrature, vs: VelocitySpace, f) -> np.ndarray:
    """Load vector (f, v) over the fluid part of the mesh."""
    mp = quad.mapping
    rhs = np.zeros(vs.n_dofs)
    pts, wts = quad.ref_rule
    cache: dict[bytes, np.ndarray] = {}
    for e, xh, w in quad.volume_items():
        e = int(e)
        row = vs.element_row[e]
        if xh is pts and not mp.is_deformed[e]:
            key = mp.A[e].tobytes()
            val = cache.get(key)
            if val is None:
                val = velocity_tables_affine(mp.A[e], vs.ref, xh)[0]
                cache[key] = val
            J = np.full(xh.shape[0], mp.detA[e])
        else:
            val = velocity_tables(vs, e, xh, derivs=False)[0]
            _, J = mp.jacobians(e, xh)
        fx = np.asarray(f(mp.phys(e, xh)), dtype=float)
        rhs[vs.elem_dofs[row]] += np.einsum("q,qdc,qc->d", w * J, val, fx)
    return rhs


def pressure_mean_vector(quad: CutQuadrature, ps: PressureSpace) -> np.ndarray:
    """Integrals of the pressure basis over the active mesh (the zero-mean
    constraint row)."""
    pts, wts = quad.ref_rule
    qv = ps.ref.eval(pts)
    _, J = quad.mapping.jacobians_shared(ps.elements, pts)
    out = np.zeros(ps.n_dofs)
    out[ps.elem_dofs] = (J * wts[None, :]) @ qv
    return out


@dataclass
class SaddleSystem:
    """Assembled symmetric system over (u, p, lambda, s)."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_u: int
    n_p: int
    n_m: int

    def split(self, x: np.ndarray):
        u = x[:self.n_u]
        p = x[self.n_u:self.n_u + self.n_p]
        lam = x[self.n_u + self.n_p:self.n_u + self.n_p + self.n_m]
        return u, p, lam, float(x[-1])


def build_saddle_system(A: sp.spmatrix, B: sp.spmatrix, C: sp.spmatrix,
                        J: sp.spmatrix, mean: np.ndarray,
                        rhs_u: np.ndarray) -> SaddleSystem:
    """Assemble the blocks into one symmetric matrix.

    Layout [[A, B^T, C^T, 0], [B, 0, 0, m], [C, 0, J, 0], [0, m^T, 0, 0]]
    with m the pressure mean vector; the transposed blocks reuse the stored
    values, so the result is exactly symmetric.
    """
    n_u, n_p, n_m = A.shape[0], B.shape[0], C.shape[0]
    if (A.shape != (n_u, n_u) or B.shape != (n_p, n_u)
            or C.shape != (n_m, n_u) or J.shape != (n_m, n_m)
            or mean.shape != (n_p,) or rhs_u.shape != (n_u,)):
        raise ValueError("saddle blocks have inconsistent dimensions")
    mcol = sp.csr_matrix(mean.reshape(-1, 1))
    M = sp.bmat([[A, B.T, C.T, None],
                 [B, None, None, mcol],
                 [C, None, J, None],
                 [None, mcol.T, None, None]], format="csr")
    rhs = np.zeros(M.shape[0])
    rhs[:n_u] = rhs_u
    return SaddleSystem(M, rhs, n_u, n_p, n_m)


def dump_matrix_market(path, system: SaddleSystem):
    """Write the matrix and right-hand side in Matrix Market format."""
    from scipy.io import mmwrite
    path = str(path)
    if path.endswith(".mtx"):
        path = path[:-4]
    mmwrite(path + ".mtx", sp.coo_matrix(system.matrix))
    mmwrite(path + "_rhs.mtx", sp.coo_matrix(system.rhs.reshape(-1, 1)))
