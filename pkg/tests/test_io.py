import numpy as np
import pytest

from fcnar.estimate import fit
from fcnar.inference import function_ci
from fcnar.io import (
    PanelFormatError,
    fit_from_dict,
    fit_to_dict,
    header_lines,
    inverse_distance_weights,
    load_fit,
    load_panel,
    load_weights,
    long_to_wide,
    read_json,
    read_table,
    save_fit,
    weights_from_array,
    write_json,
    write_panel,
    write_table,
    write_weights,
)
from fcnar.simulate import make_scenario, simulate


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_well_formed_panel(tmp_path):
    p = write(tmp_path, "p.csv", "time,a,b,c\n" + "".join(f"{t},{t},{-t},{t * 0.5}\n" for t in range(5)))
    data = load_panel(p)
    assert data.X.shape == (3, 5) and data.names == ["a", "b", "c"]
    np.testing.assert_array_equal(data.X[1], -np.arange(5))


def test_comments_and_dates(tmp_path):
    p = write(tmp_path, "p.csv", "# a comment\ntime,a\n2020-01-01,1\n2020-01-02,2\n\n2020-01-03,3\n")
    assert load_panel(p).time == ["2020-01-01", "2020-01-02", "2020-01-03"]
    p = write(tmp_path, "m.csv", "time,a\n2020-11-01,1\n2020-12-01,2\n2021-01-01,3\n")
    assert load_panel(p).T == 3


@pytest.mark.parametrize("body,match", [
    ("time,a,b\n0,1,2\n1,,3\n", r"line 3, column 'a': missing"),
    ("time,a,b\n0,1,2\n1,x,3\n", r"line 3, column 'a': non-numeric"),
    ("time,a,b\n0,1,2\n1,2\n", r"line 3 has 2 fields"),
    ("time,a\n0,1\n1,2\n1,3\n", "duplicate time stamp"),
    ("time,a\n0,1\n1,2\n3,3\n", "irregular time step"),
    ("time,a\n2,1\n1,2\n", "decrease"),
    ("t,a\n0,1\n", "first column"),
    ("time,a\n0,inf\n", "non-finite"),
    ("time,a\n0,1\n2020-01-01,2\n", "mixes"),
    ("time,a\nnoon,1\n", "neither"),
])
def test_panel_errors(tmp_path, body, match):
    with pytest.raises(PanelFormatError, match=match):
        load_panel(write(tmp_path, "bad.csv", body))


def test_roundtrip_bit_exact(tmp_path):
    cfg = make_scenario("B1", N=6, T=60, seed=3)
    data = simulate(cfg)
    write_panel(tmp_path / "x.csv", data, header_lines("simulate", 3))
    write_panel(tmp_path / "u.csv", data, values=data.U)
    back = load_panel(tmp_path / "x.csv", tmp_path / "u.csv")
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.U, data.U)
    first = (tmp_path / "x.csv").read_text().splitlines()[0]
    assert first.startswith("# fcnar ")


def test_threshold_file_must_match(tmp_path):
    x = write(tmp_path, "x.csv", "time,a\n0,1\n1,2\n")
    u = write(tmp_path, "u.csv", "time,b\n0,1\n1,2\n")
    with pytest.raises(PanelFormatError):
        load_panel(x, u)


def test_weights_path_normalized(tmp_path):
    p = write(tmp_path, "w.csv", "a,b,c\n0,1,0\n1,0,1\n0,1,0\n")
    W = load_weights(p, normalize=True)
    np.testing.assert_array_equal(W.W, [[0, 1, 0], [0.5, 0, 0.5], [0, 1, 0]])


def test_weights_normalized_accepted_unchanged(tmp_path):
    M = np.array([[0, 0.25, 0.75], [0.5, 0, 0.5], [0.2, 0.8, 0]])
    write_weights(tmp_path / "w.csv", weights_from_array(M))
    np.testing.assert_array_equal(load_weights(tmp_path / "w.csv").W, M)


def test_weights_errors(tmp_path):
    with pytest.raises(ValueError, match="sums to"):
        load_weights(write(tmp_path, "a.csv", "0,1\n1,1\n"))
    with pytest.raises(ValueError, match="negative"):
        load_weights(write(tmp_path, "b.csv", "0,1\n-1,2\n"), normalize=True)
    with pytest.raises(ValueError, match="zero"):
        load_weights(write(tmp_path, "c.csv", "0,1\n0,0\n"), normalize=True)
    with pytest.raises(PanelFormatError, match="2 x 2"):
        load_weights(write(tmp_path, "d.csv", "0,1,0\n1,0\n"))
    with pytest.raises(ValueError):
        weights_from_array(np.ones((2, 3)))


def test_inverse_distance(rng):
    pts = rng.uniform(size=(5, 2))
    D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    W = inverse_distance_weights(D).W
    np.testing.assert_allclose(W.sum(axis=1), 1, atol=1e-12)
    manual = np.where(np.eye(5, dtype=bool), 0, 1 / np.where(D > 0, D, 1))
    np.testing.assert_allclose(W, manual / manual.sum(axis=1, keepdims=True), rtol=1e-14)
    with pytest.raises(ValueError):
        inverse_distance_weights(np.zeros((3, 3)))


def test_long_to_wide(tmp_path):
    p = write(tmp_path, "l.csv", "when,site,y\n1,b,3\n0,a,1\n0,b,2\n1,a,4\n")
    data = long_to_wide(p, "when", "site", "y")
    assert data.names == ["b", "a"]
    np.testing.assert_array_equal(data.X, [[2, 3], [1, 4]])
    with pytest.raises(PanelFormatError, match="duplicate"):
        long_to_wide(write(tmp_path, "d.csv", "time,node,value\n0,a,1\n0,a,2\n"))
    with pytest.raises(PanelFormatError):
        long_to_wide(write(tmp_path, "m.csv", "time,node,value\n0,a,1\n0,b,2\n1,a,3\n"))


def test_fit_artifact_roundtrip(tmp_path, lagged_panel):
    cfg, data = lagged_panel
    result = fit(data, cfg.spec)
    save_fit(tmp_path / "fit.json", result, header_lines("fit", None))
    back = load_fit(tmp_path / "fit.json")
    np.testing.assert_array_equal(back.beta, result.beta)
    np.testing.assert_array_equal(back.gram, result.gram)
    assert back.sigma2 == result.sigma2 and back.spec.to_dict() == result.spec.to_dict()
    a1, _ = function_ci(result, 2, [0.0, 0.5])
    a2, _ = function_ci(back, 2, [0.0, 0.5])
    np.testing.assert_array_equal(a1.half_width, a2.half_width)
    assert read_json(tmp_path / "fit.json")["meta"][1] == "command: fit"
    assert fit_to_dict(fit_from_dict(fit_to_dict(result))) == fit_to_dict(result)


def test_table_roundtrip(tmp_path):
    write_table(tmp_path / "t.csv", ["a", "b"], [[1, 0.1], [2, np.float64(1 / 3)]], ["hello"])
    cols, rows = read_table(tmp_path / "t.csv")
    assert cols == ["a", "b"] and float(rows[1][1]) == 1 / 3
    write_json(tmp_path / "j.json", {"x": np.arange(3), "y": np.float32(0.5)})
    assert read_json(tmp_path / "j.json") == {"meta": [], "x": [0, 1, 2], "y": 0.5}
