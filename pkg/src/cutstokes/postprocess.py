"""Pressure recovery from the solved velocity.

The multiplier formulation only controls the pressure up to the O(h^1/2)
boundary-layer error of the extended-by-zero pressure, so the physical
pressure is recovered afterwards: a Poisson solve in the continuous degree
k-1 space driven by f and a boundary curl term, stabilized by the scalar
ghost penalty on the facets between uncut and cut elements, and pinned by a
zero-mean constraint over the fluid domain.

The boundary term is assembled from the scalar curl w = d1 u2 - d2 u1 via
the in-plane identity n x (curl u) . grad q = w (n2 d1 q - n1 d2 q); the
sign of that identity depends on the orientation convention for the cross
product, so it is exposed as `curl_sign` (-1 matches the convention used
everywhere else here, and the convergence tests pin it down).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .forms import (FormParams, _Triplets, _sym, assemble_ghost_penalty)
from .geometry import CutQuadrature
from .solver import solve_direct
from .spaces import ContinuousPressureSpace, VelocityField, scalar_tables

__all__ = ["pressure_gp_facets", "recover_pressure"]


def pressure_gp_facets(quad: CutQuadrature) -> np.ndarray:
    """Interior child facets joining a cut element to a fluid-touching one.

    Both owners must intersect the fluid and at least one must be cut, so
    facets toward fully-outside elements carry no pressure stabilization."""
    cm = quad.am.child_mesh
    cls = quad.sets.child_class
    c0 = cm.facet_tris[:, 0]
    c1 = cm.facet_tris[:, 1]
    interior = c1 >= 0
    a = cls[c0]
    b = cls[np.maximum(c1, 0)]
    pair = interior & (np.maximum(a, b) == 1)
    return np.flatnonzero(pair)


def recover_pressure(params: FormParams, quad: CutQuadrature,
                     qs: ContinuousPressureSpace, uh: VelocityField, f,
                     curl_sign: float = -1.0) -> np.ndarray:
    """Solve for the recovered pressure; returns its nodal coefficients."""
    mp = quad.mapping
    n = qs.n_dofs

    tri = _Triplets()
    rhs = np.zeros(n)
    mean = np.zeros(n)
    for e, xh, w in quad.volume_items():
        e = int(e)
        _, J = mp.jacobians(e, xh)
        val, grad = scalar_tables(qs, e, xh)
        wj = w * J
        loc = _sym(np.einsum("q,qij,qkj->ik", wj, grad, grad))
        dofs = qs.elem_dofs[qs.element_row[e]]
        tri.add(dofs, dofs, loc)
        fx = np.asarray(f(mp.phys(e, xh)), dtype=float)
        rhs[dofs] += np.einsum("q,qij,qj->i", wj, grad, fx)
        mean[dofs] += wj @ val

    for e, rule in quad.interface.items():
        _, gu, _ = uh.at(e, rule.xhat)
        wcurl = gu[:, 1, 0] - gu[:, 0, 1]
        _, grad = scalar_tables(qs, e, rule.xhat)
        rot = (rule.normals[:, 1, None] * grad[:, :, 0]
               - rule.normals[:, 0, None] * grad[:, :, 1])
        dofs = qs.elem_dofs[qs.element_row[e]]
        rhs[dofs] += curl_sign * np.einsum("q,q,qi->i",
                                           rule.weights, wcurl, rot)

    K = tri.matrix(n, n)
    K = K + assemble_ghost_penalty(params, quad, qs,
                                   facets=pressure_gp_facets(quad),
                                   variant="scalar")

    # nodes supported only on fully-outside elements never see the fluid or
    # a stabilized facet; pin them so the factorization stays regular
    free = K.diagonal() > 0.0
    if not free.all():
        pin = sp.diags((~free).astype(float), format="csr")
        K = K + pin

    mcol = sp.csr_matrix(mean.reshape(-1, 1))
    M = sp.bmat([[K, mcol], [mcol.T, None]], format="csr")
    b = np.concatenate([rhs, [0.0]])
    x = solve_direct(M, b)
    return x[:n]
