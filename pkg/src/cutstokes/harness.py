"""Study drivers: convergence tables, the no-flow comparison, the
interface-shift conditioning sweep, and their file output.

Each driver consumes a flat `StudyConfig` and emits `ResultRow`s plus
plain-text `.data` tables (whitespace separated, gnuplot friendly).  Output
is deterministic: identical configs reproduce identical files byte for byte.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from .forms import (FormParams, assemble_a, assemble_b, assemble_c,
                    assemble_ghost_penalty, assemble_j, assemble_rhs,
                    build_saddle_system, pressure_mean_vector)
from .geometry import (IsoDeformation, LevelSet, build_deformation,
                       build_quadratures, interpolate_p1)
from .meshing import alfeld_split, build_background_mesh, classify_elements
from .postprocess import recover_pressure
from .solver import SEED, condition_estimate, solve_saddle
from .spaces import (ContinuousPressureSpace, MultiplierSpace, PressureSpace,
                     ScalarField, VelocityField, VelocitySpace)

__all__ = [
    "ExactCase", "StudyConfig", "ResultRow", "LevelState",
    "exact_example1", "exact_example2", "solve_level", "run_convergence",
    "run_interface_sweep", "compute_eoc", "fit_rate",
    "write_data", "write_config", "read_config", "write_manifest",
    "write_vtk", "write_geometry",
]


@dataclass(frozen=True)
class ExactCase:
    """Closed-form data of one manufactured problem (viscosity 1)."""

    name: str
    levelset: LevelSet
    u: callable
    grad_u: callable
    p: callable
    grad_p: callable
    f: callable


def exact_example1() -> ExactCase:
    """Rotational flow tangential to the quartic interface x^4+y^4=1/4.

    u is the rotated gradient of a function of x^4+y^4, hence divergence
    free and tangential to every level line; f = -lap(u) + grad(p) with the
    derivatives expanded by hand below.
    """

    def phi(x):
        return x[:, 0] ** 4 + x[:, 1] ** 4 - 0.25

    def dphi(x):
        return np.column_stack([4.0 * x[:, 0] ** 3, 4.0 * x[:, 1] ** 3])

    def u(x):
        X, Y = x[:, 0], x[:, 1]
        c = np.cos(2.0 * np.pi * (X ** 4 + Y ** 4))
        return np.column_stack([4.0 * Y ** 3 * c, -4.0 * X ** 3 * c])

    def grad_u(x):
        X, Y = x[:, 0], x[:, 1]
        r = X ** 4 + Y ** 4
        c = np.cos(2.0 * np.pi * r)
        s = np.sin(2.0 * np.pi * r)
        g = np.empty((x.shape[0], 2, 2))
        g[:, 0, 0] = -32.0 * np.pi * X ** 3 * Y ** 3 * s
        g[:, 0, 1] = 12.0 * Y ** 2 * c - 32.0 * np.pi * Y ** 6 * s
        g[:, 1, 0] = -12.0 * X ** 2 * c + 32.0 * np.pi * X ** 6 * s
        g[:, 1, 1] = 32.0 * np.pi * X ** 3 * Y ** 3 * s
        return g

    def p(x):
        X, Y = x[:, 0], x[:, 1]
        return np.sin(np.pi * X * Y) + X ** 3 + Y ** 3

    def grad_p(x):
        X, Y = x[:, 0], x[:, 1]
        c = np.cos(np.pi * X * Y)
        return np.column_stack([np.pi * Y * c + 3.0 * X ** 2,
                                np.pi * X * c + 3.0 * Y ** 2])

    def f(x):
        X, Y = x[:, 0], x[:, 1]
        r = X ** 4 + Y ** 4
        c = np.cos(2.0 * np.pi * r)
        s = np.sin(2.0 * np.pi * r)
        # u1 = 4 y^3 cos(2 pi r):
        #   d2u1/dx2 = -96 pi x^2 y^3 s - 256 pi^2 x^6 y^3 c
        #   d2u1/dy2 = 24 y c - 288 pi y^5 s - 256 pi^2 y^9 c
        # u2(x, y) = -u1(y, x), so lap(u2)(x, y) = -lap(u1)(y, x).
        lap1 = (-96.0 * np.pi * X ** 2 * Y ** 3 * s
                - 256.0 * np.pi ** 2 * X ** 6 * Y ** 3 * c
                + 24.0 * Y * c - 288.0 * np.pi * Y ** 5 * s
                - 256.0 * np.pi ** 2 * Y ** 9 * c)
        lap2 = -(-96.0 * np.pi * Y ** 2 * X ** 3 * s
                 - 256.0 * np.pi ** 2 * Y ** 6 * X ** 3 * c
                 + 24.0 * X * c - 288.0 * np.pi * X ** 5 * s
                 - 256.0 * np.pi ** 2 * X ** 9 * c)
        gp = grad_p(x)
        return np.column_stack([-lap1 + gp[:, 0], -lap2 + gp[:, 1]])

    return ExactCase("example1", LevelSet(phi, dphi, name="quartic"),
                     u, grad_u, p, grad_p, f)


def exact_example2() -> ExactCase:
    """No-flow problem on a smoothed six-pointed star: u=0, f = grad p."""

    def phi(x):
        r = np.hypot(x[:, 0], x[:, 1])
        th = np.arctan2(x[:, 1], x[:, 0])
        return r - 0.7 + 0.2 * np.cos(6.0 * th)

    def dphi(x):
        r = np.hypot(x[:, 0], x[:, 1])
        th = np.arctan2(x[:, 1], x[:, 0])
        g = np.empty_like(x, dtype=float)
        # r -> 0 lies well inside the fluid; any unit vector does there
        safe = np.where(r < 1e-12, 1.0, r)
        s6 = np.sin(6.0 * th)
        g[:, 0] = x[:, 0] / safe + 1.2 * x[:, 1] * s6 / safe ** 2
        g[:, 1] = x[:, 1] / safe - 1.2 * x[:, 0] * s6 / safe ** 2
        g[r < 1e-12] = (1.0, 0.0)
        return g

    def u(x):
        return np.zeros_like(x, dtype=float)

    def grad_u(x):
        return np.zeros((x.shape[0], 2, 2))

    def p(x):
        return x[:, 0] ** 5 + x[:, 1] ** 5

    def grad_p(x):
        return np.column_stack([5.0 * x[:, 0] ** 4, 5.0 * x[:, 1] ** 4])

    return ExactCase("example2", LevelSet(phi, dphi, name="star"),
                     u, grad_u, p, grad_p, grad_p)


_EXAMPLES = {1: exact_example1, 2: exact_example2}


@dataclass(frozen=True)
class StudyConfig:
    example: int = 1
    k: int = 2
    k_lambda: int = 1
    h0: float = 0.3
    levels: int = 5
    gamma_n: float = 40.0
    gamma_gp: float = 0.1
    gamma_lambda: float = 0.1
    geom: str = "ho"
    volume_order: int = 0          # 0 picks the 2k+2 default
    patch_order: int = 0           # 0 picks the 4k default
    error_order: int = 0           # 0 picks 2k+4
    box: tuple = (-1.0, 1.0, -1.0, 1.0)
    curl_sign: float = -1.0
    with_condest: bool = False
    out: str = ""
    vtk: bool = False
    seed: int = SEED
    workers: int = 1

    def __post_init__(self):
        if self.example not in _EXAMPLES:
            raise ValueError(f"unknown example id {self.example}")
        if self.geom not in ("ho", "p1"):
            raise ValueError(f"geometry mode must be 'ho' or 'p1', got {self.geom!r}")
        if self.levels < 1:
            raise ValueError("need at least one level")
        if self.h0 <= 0:
            raise ValueError("h0 must be positive")

    def form_params(self) -> FormParams:
        return FormParams(gamma_n=self.gamma_n, gamma_gp=self.gamma_gp,
                          gamma_lambda=self.gamma_lambda, k=self.k,
                          k_lambda=self.k_lambda,
                          volume_order=self.volume_order or None,
                          patch_order=self.patch_order or None)


@dataclass
class ResultRow:
    lvl: int
    h: float
    l2u: float
    h1u: float
    l2p_star: float
    l2div: float
    cond_estimate: float = float("nan")
    wall_time: float = 0.0
    h1p_star: float = float("nan")
    max_phi: float = float("nan")

    def __post_init__(self):
        for name in ("l2u", "h1u", "l2p_star", "l2div"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} = {v} is not a finite error")


@dataclass
class LevelState:
    """Everything built while solving one refinement level."""

    cfg: StudyConfig
    exact: ExactCase
    lvl: int
    h: float
    am: object
    sets: object
    phi1: object
    quad: object
    params: FormParams
    vs: VelocitySpace
    ps: PressureSpace
    ms: MultiplierSpace
    qs: ContinuousPressureSpace
    system: object
    sol: object
    uh: VelocityField
    pstar: ScalarField


def solve_level(cfg: StudyConfig, lvl: int, exact: ExactCase | None = None):
    """Build, solve and post-process one level; returns (ResultRow, LevelState)."""
    if exact is None:
        exact = _EXAMPLES[cfg.example]()
    t0 = time.perf_counter()
    h = cfg.h0 / 2 ** lvl

    mm = build_background_mesh(cfg.box, h)
    am = alfeld_split(mm)
    phi1 = interpolate_p1(exact.levelset, am)
    sets = classify_elements(am, phi1)
    if cfg.geom == "ho":
        defo = build_deformation(exact.levelset, phi1, am, sets, cfg.k)
    else:
        defo = IsoDeformation.identity(am, cfg.k)
    quad = build_quadratures(am, sets, phi1, defo,
                             order=cfg.volume_order or None,
                             patch_order=cfg.patch_order or None)
    mp = quad.mapping

    vs = VelocitySpace(am, sets, mp, cfg.k)
    ps = PressureSpace(am, sets, mp, cfg.k - 1)
    ms = MultiplierSpace(am, sets, mp, cfg.k_lambda)
    qs = ContinuousPressureSpace(am, sets, mp, cfg.k - 1)
    params = cfg.form_params()

    A = assemble_a(params, quad, vs)
    G = assemble_ghost_penalty(params, quad, vs)
    B = assemble_b(quad, vs, ps)
    C = assemble_c(quad, vs, ms)
    J = assemble_j(params, quad, ms)
    m = pressure_mean_vector(quad, ps)
    rhs = assemble_rhs(quad, vs, exact.f)
    system = build_saddle_system(A + G, B, C, J, m, rhs)
    sol = solve_saddle(system)

    uh = VelocityField(vs, sol.u)
    pc = recover_pressure(params, quad, qs, uh, exact.f, cfg.curl_sign)
    pstar = ScalarField(qs, pc)
    wall = time.perf_counter() - t0

    state = LevelState(cfg, exact, lvl, h, am, sets, phi1, quad, params,
                       vs, ps, ms, qs, system, sol, uh, pstar)
    err = compute_errors(state)
    cond = float("nan")
    if cfg.with_condest:
        cond = condition_estimate(system.matrix, seed=cfg.seed)
        wall = time.perf_counter() - t0
    row = ResultRow(lvl=lvl, h=h, l2u=err["l2u"], h1u=err["h1u"],
                    l2p_star=err["l2p_star"], l2div=err["l2div"],
                    cond_estimate=cond, wall_time=wall,
                    h1p_star=err["h1p_star"], max_phi=err["max_phi"])
    return row, state


def compute_errors(state: LevelState) -> dict:
    """Error norms on a finer cut rule: L2/H1 over the fluid domain, the
    divergence over the whole active mesh, |phi| along the discrete
    interface.  The exact pressure is compared after removing its discrete
    mean, matching the zero-mean normalization of the recovered one."""
    cfg, exact = state.cfg, state.exact
    order = cfg.error_order or (2 * cfg.k + 4)
    equad = build_quadratures(state.am, state.sets, state.phi1,
                              state.quad.mapping.deformation, order=order,
                              patch_order=cfg.patch_order or None)
    mp = equad.mapping

    area = vol_p = 0.0
    l2u = h1u = l2p = h1p = 0.0
    for e, xh, w in equad.volume_items():
        _, J = mp.jacobians(e, xh)
        wj = w * J
        x = mp.phys(e, xh)
        uv, ug, _ = state.uh.at(e, xh)
        l2u += float(wj @ ((uv - exact.u(x)) ** 2).sum(1))
        h1u += float(wj @ ((ug - exact.grad_u(x)) ** 2).sum((1, 2)))
        pv, pg = state.pstar.at(e, xh)
        area += float(wj.sum())
        vol_p += float(wj @ (exact.p(x) - pv))
        l2p += float(wj @ (exact.p(x) - pv) ** 2)
        h1p += float(wj @ ((pg - exact.grad_p(x)) ** 2).sum(1))
    shift = vol_p / area
    # ||p* - (p - mean)||^2 = ||p* - p||^2 - area * mean^2 by orthogonality
    l2p = max(l2p - area * shift ** 2, 0.0)

    l2d = 0.0
    for e, xh, w in equad.bulk_items():
        _, J = mp.jacobians(e, xh)
        _, _, dv = state.uh.at(e, xh)
        l2d += float((w * J) @ dv ** 2)

    max_phi = 0.0
    for rule in equad.interface.values():
        vals = exact.levelset.value(rule.xphys)
        max_phi = max(max_phi, float(np.abs(vals).max()))

    return {"l2u": np.sqrt(l2u), "h1u": np.sqrt(h1u),
            "l2p_star": np.sqrt(l2p), "h1p_star": np.sqrt(h1p),
            "l2div": np.sqrt(l2d), "max_phi": max_phi}


def run_convergence(cfg: StudyConfig):
    """Solve all levels of one study; writes tables when cfg.out is set."""
    exact = _EXAMPLES[cfg.example]()
    rows = []
    for lvl in range(cfg.levels):
        row, state = solve_level(cfg, lvl, exact)
        rows.append(row)
        if cfg.out and cfg.vtk:
            os.makedirs(cfg.out, exist_ok=True)
            write_vtk(os.path.join(cfg.out, f"{_study_tag(cfg)}_lvl{lvl}.vtk"),
                      state)
        del state
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        write_data(os.path.join(cfg.out, f"{_study_tag(cfg)}.data"), rows,
                   with_condest=cfg.with_condest)
        write_manifest(os.path.join(cfg.out, f"{_study_tag(cfg)}.manifest"), cfg)
    return rows


def _study_tag(cfg: StudyConfig) -> str:
    if cfg.example == 2:
        return f"noflow_lm{cfg.k_lambda}"
    return f"converge_ex{cfg.example}_{cfg.geom}"


def _shifted_quartic(x0: float) -> LevelSet:
    def phi(x):
        return (x[:, 0] - x0) ** 4 + x[:, 1] ** 4 - 0.25

    def dphi(x):
        return np.column_stack([4.0 * (x[:, 0] - x0) ** 3, 4.0 * x[:, 1] ** 3])

    return LevelSet(phi, dphi, name=f"quartic_shift_{x0:+.3f}")


def _sweep_one(args) -> tuple[int, float, float]:
    cfg, i, h, n = args
    x0 = -0.2 + 0.4 * i / n
    exact = replace(exact_example1(), levelset=_shifted_quartic(x0))
    scfg = replace(cfg, example=1, h0=h, levels=1, with_condest=False)
    mm = build_background_mesh(scfg.box, h)
    am = alfeld_split(mm)
    phi1 = interpolate_p1(exact.levelset, am)
    sets = classify_elements(am, phi1)
    if scfg.geom == "ho":
        defo = build_deformation(exact.levelset, phi1, am, sets, scfg.k)
    else:
        defo = IsoDeformation.identity(am, scfg.k)
    quad = build_quadratures(am, sets, phi1, defo,
                             order=scfg.volume_order or None,
                             patch_order=scfg.patch_order or None)
    mp = quad.mapping
    vs = VelocitySpace(am, sets, mp, scfg.k)
    ps = PressureSpace(am, sets, mp, scfg.k - 1)
    ms = MultiplierSpace(am, sets, mp, scfg.k_lambda)
    params = scfg.form_params()
    A = assemble_a(params, quad, vs) + assemble_ghost_penalty(params, quad, vs)
    B = assemble_b(quad, vs, ps)
    C = assemble_c(quad, vs, ms)
    J = assemble_j(params, quad, ms)
    m = pressure_mean_vector(quad, ps)
    system = build_saddle_system(A, B, C, J, m, np.zeros(vs.n_dofs))
    kappa = condition_estimate(system.matrix, tol=1e-6, seed=cfg.seed)
    return i, x0, kappa


def run_interface_sweep(cfg: StudyConfig, h: float = 0.1, n: int = 100):
    """Condition numbers for n+1 horizontal shifts of the quartic interface.

    Returns the list of (index, shift, kappa) tuples ordered by index; the
    shifts are independent, so they fan out over cfg.workers processes.
    """
    items = [(cfg, i, h, n) for i in range(n + 1)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            out = list(pool.map(_sweep_one, items))
    else:
        out = [_sweep_one(it) for it in items]
    out.sort(key=lambda t: t[0])
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        lines = ["# i x kappa"]
        lines += [f"{i} {_fmt(x0)} {_fmt(k)}" for i, x0, k in out]
        _write_text(os.path.join(cfg.out, "sweep.data"), lines)
        write_manifest(os.path.join(cfg.out, "sweep.manifest"), cfg)
    return out


def compute_eoc(errors) -> list:
    """log2 ratios of consecutive errors under h-halving; None where a zero
    error makes the rate undefined."""
    errors = list(errors)
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        if a > 0 and b > 0:
            out.append(float(np.log2(a / b)))
        else:
            out.append(None)
    return out


def fit_rate(hs, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if (errors <= 0).any():
        raise ValueError("rates need positive errors")
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


_FMT = "%.10e"


def _fmt(v: float) -> str:
    return _FMT % v


def _write_text(path: str, lines) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_data(path: str, rows, with_condest: bool = False) -> None:
    header = "# lvl h l2u h1u l2p* l2d" + (" condest" if with_condest else "")
    lines = [header]
    for r in rows:
        cells = [str(r.lvl), _fmt(r.h), _fmt(r.l2u), _fmt(r.h1u),
                 _fmt(r.l2p_star), _fmt(r.l2div)]
        if with_condest:
            cells.append(_fmt(r.cond_estimate))
        lines.append(" ".join(cells))
    _write_text(path, lines)


def write_config(path: str, cfg: StudyConfig) -> None:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "box":
            v = ",".join(repr(float(c)) for c in v)
        lines.append(f"{f.name} = {v}")
    _write_text(path, lines)


def read_config(path: str) -> StudyConfig:
    """Parse a flat key=value file; unknown keys are an error."""
    by_name = {f.name: f for f in fields(StudyConfig)}
    kw = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in by_name:
                raise ValueError(f"{path}:{ln}: unknown key {key!r}")
            kw[key] = _parse_field(by_name[key].type, val)
    return StudyConfig(**kw)


def _parse_field(ftype: str, val: str):
    if ftype == "int":
        return int(val)
    if ftype == "float":
        return float(val)
    if ftype == "bool":
        if val.lower() in ("true", "1", "yes"):
            return True
        if val.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {val!r}")
    if ftype == "tuple":
        return tuple(float(c) for c in val.split(","))
    return val


def write_manifest(path: str, cfg: StudyConfig) -> None:
    """Echo the fully resolved configuration next to the data files."""
    write_config(path, cfg)


def _lattice(k: int):
    """Reference lattice points of order k and the triangles connecting
    them, for piecewise-linear export of degree-k fields."""
    idx = {}
    pts = []
    for j in range(k + 1):
        for i in range(k + 1 - j):
            idx[(i, j)] = len(pts)
            pts.append((i / k, j / k))
    tris = []
    for j in range(k):
        for i in range(k - j):
            tris.append((idx[(i, j)], idx[(i + 1, j)], idx[(i, j + 1)]))
            if i + j < k - 1:
                tris.append((idx[(i + 1, j)], idx[(i + 1, j + 1)],
                             idx[(i, j + 1)]))
    return np.array(pts), np.array(tris, dtype=np.int64)


def write_vtk(path: str, state: LevelState) -> None:
    """Legacy ASCII VTK dump of u_h and p* on the active mesh, each child
    sampled on its degree-k lattice (points are duplicated across cells)."""
    k = state.cfg.k
    xhat, tloc = _lattice(k)
    mp = state.quad.mapping
    elems = state.sets.active_children

    pts, cells, uvals, pvals = [], [], [], []
    off = 0
    for e in elems:
        e = int(e)
        x = mp.phys(e, xhat)
        uv, _, _ = state.uh.at(e, xhat)
        pv, _ = state.pstar.at(e, xhat, derivs=False)
        pts.append(x)
        uvals.append(uv)
        pvals.append(pv)
        cells.append(tloc + off)
        off += x.shape[0]
    P = np.vstack(pts)
    T = np.vstack(cells)
    U = np.vstack(uvals)
    Q = np.concatenate(pvals)

    lines = ["# vtk DataFile Version 3.0", "cutstokes fields", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {P.shape[0]} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in P]
    lines.append(f"CELLS {T.shape[0]} {4 * T.shape[0]}")
    lines += [f"3 {a} {b} {c}" for a, b, c in T]
    lines.append(f"CELL_TYPES {T.shape[0]}")
    lines += ["5"] * T.shape[0]
    lines.append(f"POINT_DATA {P.shape[0]}")
    lines.append("VECTORS velocity double")
    lines += [f"{_fmt(a)} {_fmt(b)} 0.0" for a, b in U]
    lines.append("SCALARS pressure double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [_fmt(v) for v in Q]
    _write_text(path, lines)


def write_geometry(path_prefix: str, state: LevelState) -> None:
    """Geometry diagnostics: active mesh with its inside/cut classification
    as a VTK file, and the interface quadrature as an x y nx ny w table."""
    mp = state.quad.mapping
    cls = state.sets.child_class
    elems = state.sets.active_children
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    pts, cells, cdata = [], [], []
    for e in elems:
        e = int(e)
        off = 3 * len(cells)
        pts.append(mp.phys(e, corners))
        cells.append([off, off + 1, off + 2])
        cdata.append(int(cls[e]))
    P = np.vstack(pts)

    lines = ["# vtk DataFile Version 3.0", "cutstokes geometry", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {P.shape[0]} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in P]
    lines.append(f"CELLS {len(cells)} {4 * len(cells)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += ["5"] * len(cells)
    lines.append(f"CELL_DATA {len(cells)}")
    lines.append("SCALARS classification int 1")
    lines.append("LOOKUP_TABLE default")
    lines += [str(c) for c in cdata]
    _write_text(path_prefix + "_mesh.vtk", lines)

    rows = ["# x y nx ny w"]
    for e in sorted(state.quad.interface):
        r = state.quad.interface[e]
        for q in range(r.xphys.shape[0]):
            rows.append(" ".join(_fmt(v) for v in
                        (r.xphys[q, 0], r.xphys[q, 1],
                         r.normals[q, 0], r.normals[q, 1], r.weights[q])))
    _write_text(path_prefix + "_interface.data", rows)
