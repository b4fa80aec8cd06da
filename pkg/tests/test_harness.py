import filecmp
import os

import numpy as np
import pytest

from cutstokes.cli import main as cli_main
from cutstokes.harness import (ResultRow, StudyConfig, compute_eoc,
                               exact_example1, exact_example2, fit_rate,
                               read_config, run_convergence, write_config,
                               write_data)


# ---------------------------------------------------------------------------
# exact data


def test_example1_divergence_free():
    ex = exact_example1()
    rng = np.random.default_rng(21)
    pts = rng.uniform(-1.0, 1.0, size=(1000, 2))
    g = ex.grad_u(pts)
    assert np.abs(g[:, 0, 0] + g[:, 1, 1]).max() <= 1e-10


def test_example1_gradients_match_fd():
    ex = exact_example1()
    rng = np.random.default_rng(22)
    pts = rng.uniform(-0.8, 0.8, size=(50, 2))
    eps = 1e-6
    for j in range(2):
        dp = pts.copy()
        dm = pts.copy()
        dp[:, j] += eps
        dm[:, j] -= eps
        fd = (ex.u(dp) - ex.u(dm)) / (2 * eps)
        assert np.abs(ex.grad_u(pts)[:, :, j] - fd).max() <= 1e-7
        fdp = (ex.p(dp) - ex.p(dm)) / (2 * eps)
        assert np.abs(ex.grad_p(pts)[:, j] - fdp).max() <= 1e-7


def test_example1_forcing_matches_fd_at_origin():
    ex = exact_example1()
    x0 = np.zeros((1, 2))
    eps = 1e-4
    lap = np.zeros(2)
    for j in range(2):
        dp = x0.copy()
        dm = x0.copy()
        dp[0, j] += eps
        dm[0, j] -= eps
        lap += (ex.u(dp)[0] - 2 * ex.u(x0)[0] + ex.u(dm)[0]) / eps ** 2
    want = -lap + ex.grad_p(x0)[0]
    assert np.abs(ex.f(x0)[0] - want).max() <= 1e-6


def test_example1_velocity_tangent_to_interface():
    ex = exact_example1()
    th = np.linspace(0.0, 2 * np.pi, 400, endpoint=False)
    r = (0.25 / (np.cos(th) ** 4 + np.sin(th) ** 4)) ** 0.25
    pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
    assert np.abs(ex.levelset.value(pts)).max() <= 1e-12
    flux = (ex.u(pts) * ex.levelset.gradient(pts)).sum(axis=1)
    assert np.abs(flux).max() <= 1e-10


def test_example2_fields():
    ex = exact_example2()
    rng = np.random.default_rng(23)
    pts = rng.uniform(-1.0, 1.0, size=(200, 2))
    assert np.abs(ex.u(pts)).max() == 0.0
    assert np.abs(ex.grad_p(pts) - ex.f(pts)).max() <= 1e-14
    assert abs(ex.levelset.value(np.array([[0.5, 0.0]]))[0]) <= 1e-14


# ---------------------------------------------------------------------------
# rates


def test_compute_eoc():
    assert compute_eoc([1.0, 0.25]) == [2.0]
    assert compute_eoc([1.0, 0.125]) == [3.0]
    assert compute_eoc([1.0, 1.0, 1.0]) == [0.0, 0.0]
    assert compute_eoc([1.0, 0.0]) == [None]


def test_fit_rate():
    hs = [0.3, 0.15, 0.075]
    errs = [7.0 * h ** 2.5 for h in hs]
    assert abs(fit_rate(hs, errs) - 2.5) <= 1e-12
    with pytest.raises(ValueError):
        fit_rate(hs, [1.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# config and tables


def test_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(example=3)
    with pytest.raises(ValueError):
        StudyConfig(geom="quadratic")
    with pytest.raises(ValueError):
        StudyConfig(levels=0)
    with pytest.raises(ValueError):
        StudyConfig(h0=-0.1)


def test_result_row_validation():
    with pytest.raises(ValueError):
        ResultRow(lvl=0, h=0.3, l2u=float("nan"), h1u=1.0, l2p_star=1.0,
                  l2div=0.0)
    with pytest.raises(ValueError):
        ResultRow(lvl=0, h=0.3, l2u=1.0, h1u=-1.0, l2p_star=1.0, l2div=0.0)


def test_config_roundtrip(tmp_path):
    cfg = StudyConfig(example=2, k_lambda=2, h0=0.25, levels=3,
                      gamma_n=25.0, geom="p1", box=(-2.0, 2.0, -1.0, 1.0),
                      vtk=True, out="somewhere")
    path = str(tmp_path / "study.cfg")
    write_config(path, cfg)
    assert read_config(path) == cfg


def test_config_unknown_key(tmp_path):
    path = str(tmp_path / "bad.cfg")
    with open(path, "w") as fh:
        fh.write("example = 1\nbogus = 7\n")
    with pytest.raises(ValueError, match="bogus"):
        read_config(path)


def test_write_data_schema(tmp_path):
    rows = [ResultRow(lvl=0, h=0.3, l2u=1.0, h1u=2.0, l2p_star=3.0,
                      l2div=4e-12),
            ResultRow(lvl=1, h=0.15, l2u=0.1, h1u=0.5, l2p_star=0.8,
                      l2div=2e-12, cond_estimate=1e7)]
    path = str(tmp_path / "t.data")
    write_data(path, rows)
    lines = open(path).read().strip().split("\n")
    assert lines[0] == "# lvl h l2u h1u l2p* l2d"
    assert len(lines) == 3
    cols = lines[1].split()
    assert len(cols) == 6
    assert int(cols[0]) == 0
    assert float(cols[1]) == 0.3
    write_data(path, rows, with_condest=True)
    lines = open(path).read().strip().split("\n")
    assert lines[0] == "# lvl h l2u h1u l2p* l2d condest"
    assert len(lines[1].split()) == 7


def test_reproducible_outputs(tmp_path):
    tag = "converge_ex1_ho"
    out = str(tmp_path / "run")
    names = [f"{tag}.data", f"{tag}.manifest"]
    run_convergence(StudyConfig(example=1, levels=1, out=out))
    first = {n: open(os.path.join(out, n), "rb").read() for n in names}
    run_convergence(StudyConfig(example=1, levels=1, out=out))
    for n in names:
        assert open(os.path.join(out, n), "rb").read() == first[n]


# ---------------------------------------------------------------------------
# command line


def test_cli_converge(tmp_path, capsys):
    out = str(tmp_path / "run")
    rc = cli_main(["converge", "--levels", "1", "--h0", "0.6",
                   "--out", out])
    assert rc == 0
    data = open(os.path.join(out, "converge_ex1_ho.data")).read()
    assert data.startswith("# lvl h l2u h1u l2p* l2d")
    table = capsys.readouterr().out
    assert "lvl" in table and "eoc" in table


def test_cli_noflow(tmp_path):
    # the six-lobed star needs the standard h0; coarser meshes cannot
    # bracket the deformation roots
    out = str(tmp_path / "run")
    rc = cli_main(["noflow", "--levels", "1", "--out", out])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "noflow_lm1.data"))


def test_cli_dump_geom(tmp_path):
    out = str(tmp_path / "geom")
    rc = cli_main(["dump-geom", "--h0", "0.3", "--out", out])
    assert rc == 0
    prefix = os.path.join(out, "geom_ex1_ho_lvl0")
    assert os.path.exists(prefix + "_mesh.vtk")
    lines = open(prefix + "_interface.data").read().strip().split("\n")
    assert lines[0] == "# x y nx ny w"
    body = np.array([[float(c) for c in ln.split()] for ln in lines[1:]])
    # weights positive, normals unit to the printed precision
    assert (body[:, 4] > 0).all()
    assert np.abs(np.hypot(body[:, 2], body[:, 3]) - 1).max() <= 1e-9


def test_cli_sweep(tmp_path):
    out = str(tmp_path / "sweep")
    rc = cli_main(["sweep", "--shifts", "2", "--h0", "0.25", "--out", out])
    assert rc == 0
    lines = open(os.path.join(out, "sweep.data")).read().strip().split("\n")
    assert lines[0] == "# i x kappa"
    assert len(lines) == 4
    kappas = [float(ln.split()[2]) for ln in lines[1:]]
    assert all(np.isfinite(k) and k > 0 for k in kappas)


def test_cli_config_file(tmp_path):
    cfgpath = str(tmp_path / "base.cfg")
    out = str(tmp_path / "run")
    write_config(cfgpath, StudyConfig(example=1, levels=1, h0=0.6))
    rc = cli_main(["converge", "--config", cfgpath, "--geom", "p1",
                   "--out", out])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "converge_ex1_p1.data"))
    got = read_config(os.path.join(out, "converge_ex1_p1.manifest"))
    assert got.h0 == 0.6 and got.geom == "p1" and got.levels == 1
