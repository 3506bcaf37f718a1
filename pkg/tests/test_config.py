import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from c1flow.c1space import interpolate
from c1flow.config import (PRESETS, ConfigError, RunConfig, dump_config, load_config,
                           parse_config, preset)
from c1flow.expr import VectorExpression
from c1flow.output import (CSV_HEADER, read_csv, read_vtk_scalars, write_convergence_svg,
                           write_csv, write_rate_csv, write_vtk)
from c1flow.simulation import build_problem, refinement_sweep, simulate


@pytest.mark.parametrize("name, betas, m, lx", [
    ("experiment1", (0.1, 0.2, 0.2, 0.1, 0.2, 0.0), 3, 1.0),
    ("experiment2", (0.5, 1.0, 0.2, 2.0, 0.2, 0.01), 3, 2.0),
    ("experiment3", (0.1, 0.1, 4.0, 0.0, 1.0, 0.02), 1, 2.0),
])
def test_experiment_presets(name, betas, m, lx):
    cfg = preset(name)
    assert cfg.coefficients().betas == betas
    assert cfg.m == m and cfg.lx == cfg.ly == lx and cfg.k == 1e-9 and cfg.dim == 2


def test_experiment1_initial_data():
    u0 = preset("experiment1").initial_data()
    p = np.array([[0.25, 0.5]])
    ref = [20 * 0.5, 30 * 1.0 * 1.0, 40 * 0.5 * 0.0]
    np.testing.assert_allclose(u0.value(p)[0], ref, atol=1e-12)


def test_swift_hohenberg_respects_alpha_guard():
    cfg = preset("swift_hohenberg")
    assert cfg.beta1 < 0 and cfg.alpha > cfg.beta1**2 / cfg.beta2


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_builds(name):
    p = build_problem(preset(name).with_overrides(nx=2))
    assert np.all(np.isfinite(p.U0.coeffs))


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("experiment9")


def test_minimal_file_resolves_preset(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('preset = "experiment1"\n')
    cfg = load_config(path)
    assert cfg.coefficients().betas == (0.1, 0.2, 0.2, 0.1, 0.2, 0.0)


def test_keys_override_preset():
    cfg = parse_config('preset = "experiment1"\nnx = 3\nk = 1e-7\n')
    assert cfg.nx == 3 and cfg.k == 1e-7 and cfg.beta4 == 0.1


@pytest.mark.parametrize("text, match", [
    ("beta4 = 0.1\nm = 1\n", "beta4"),
    ('beta6 = 0.02\ndim = 1\n', "2D domain"),
    ("beta2 = 0.0\n", "beta2"),
    ('scheme = "rk4"\n', "scheme"),
    ("k = -1.0\n", "k must be positive"),
    ('u0 = "x +* 2"\n', "cannot parse"),
    ('m = 3\nu0 = ["x", "y"]\n', "components"),
    ('nx = "eight"\n', "integer"),
    ("nx = inf\n", "integer"),
    ("[mesh]\nnx = 4\n", "tables"),
])
def test_invalid_configs_rejected(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match=r"line 3: unknown key 'colour'"):
        parse_config('nx = 4\nk = 1e-5\ncolour = "red"\n')


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("nx = 4\nk = = 1\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.toml")


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip(tmp_path, name):
    cfg = preset(name).with_overrides(nx=5, k=3.3e-7, out=str(tmp_path))
    assert parse_config(dump_config(cfg)) == cfg


@settings(max_examples=30, deadline=None)
@given(k=st.floats(1e-12, 1.0), t_end=st.floats(0.0, 10.0), nx=st.integers(1, 64),
       beta1=st.floats(-3.0, 3.0), beta3=st.floats(0.0, 5.0))
def test_round_trip_property(k, t_end, nx, beta1, beta3):
    cfg = RunConfig(k=k, t_end=t_end, nx=nx, beta1=beta1, beta3=beta3)
    assert parse_config(dump_config(cfg)) == cfg


def test_output_cadence():
    assert preset("experiment1").with_overrides(t_end=1e-6).output_every == 5
    assert preset("experiment1").output_every == 1
    assert preset("experiment1").with_overrides(cadence=3).output_every == 3


# -- writers ------------------------------------------------------------------------

def test_zero_step_run_gives_single_row(tmp_path):
    cfg = preset("mms1d").with_overrides(t_end=0.0)
    traj = simulate(build_problem(cfg))
    path = write_csv(tmp_path / "n.csv", traj.rows())
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) == "step,t,l2,h1_semi,h2_broken,l4"
    assert len(lines) == 2 and read_csv(path)[0]["t"] == 0.0


def test_csv_times_must_increase(tmp_path):
    traj = simulate(build_problem(preset("mms1d").with_overrides(t_end=4e-5)))
    rows = traj.rows()
    with pytest.raises(ValueError, match="increasing"):
        write_csv(tmp_path / "bad.csv", rows + rows[-1:])
    back = read_csv(write_csv(tmp_path / "ok.csv", rows))
    assert [r["step"] for r in back] == [0, 1, 2]
    assert back[1]["l2"] == rows[1][2].l2


def test_vtk_constant_field(tmp_path, space2d):
    U = interpolate(space2d, 3, VectorExpression(["2.5", "-1", "0"], dim=2))
    path = write_vtk(tmp_path / "c.vtk", U)
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0") and "UNSTRUCTURED_GRID" in text
    sc = read_vtk_scalars(path)
    assert sorted(sc) == ["grad_u0", "grad_u1", "grad_u2", "u0", "u1", "u2"]
    for name, values in sc.items():
        assert len(values) == space2d.mesh.n_vertices and np.ptp(values) == 0
    assert sc["u0"][0] == 2.5 and sc["grad_u1"][0] == 0.0


def test_vtk_1d(tmp_path, space1d):
    U = interpolate(space1d, 1, VectorExpression(["x"], dim=1))
    sc = read_vtk_scalars(write_vtk(tmp_path / "l.vtk", U))
    np.testing.assert_allclose(sc["u0"], space1d.mesh.vertices[:, 0])
    np.testing.assert_allclose(sc["grad_u0"], 1.0)


def test_svg_and_rate_csv_for_mms1d(tmp_path):
    cfg = preset("mms1d").with_overrides(nx=4, t_end=1e-4)
    table, _ = refinement_sweep(cfg, levels=3)
    svg = write_convergence_svg(tmp_path / "c.svg", table).read_text()
    assert svg.count('<polyline class="data"') == 3
    assert svg.count('class="reference"') == 3 and svg.count("stroke-dasharray") == 3
    lines = write_rate_csv(tmp_path / "r.csv", table).read_text().splitlines()
    assert lines[0].startswith("h,l2,h1_semi,h2_broken,rate_l2") and len(lines) == 4


def test_unwritable_output(tmp_path, space2d):
    from c1flow.output import OutputError

    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError, match="cannot write"):
        write_vtk(blocker / "x.vtk", interpolate(space2d, 1, VectorExpression(["1"], dim=2)))


def test_rate_table_of_extrapolated_sweep_without_exact_solution():
    cfg = preset("experiment3").with_overrides(nx=2, t_end=2e-9)
    table, trajs = refinement_sweep(cfg, levels=3)
    assert len(table.levels) == 2 and all(math.isfinite(r) for r in table.rates["l2"])
    assert len(trajs[0].fields) == 3
