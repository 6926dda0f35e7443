import json
from pathlib import Path

import numpy as np
import pytest

from gamedyn import cli
from gamedyn import cournot as cn
from gamedyn.errors import ParseError, RootFindError
from gamedyn.games import random_finite_game
from gamedyn.io import (RunConfig, circle_polyline, dumps, emit_plot_data, envelope, game_to_dict,
                        load_config, load_game, load_potential, read_envelope, read_plot_points,
                        save_game, write_json)

DATA = Path(__file__).resolve().parents[1] / "data"


def test_game_round_trip(tmp_path):
    g = random_finite_game((2, 3, 2), np.random.default_rng(0))
    save_game(g, tmp_path / "g.json")
    back = load_game(tmp_path / "g.json")
    assert np.array_equal(back.utilities, g.utilities)
    assert all(np.array_equal(a, b) for a, b in zip(back.action_sets, g.action_sets))


def test_syntax_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "players": 2,\n "action_sets": [[0, 1], [0, 1]]\n "utilities": []\n}\n')
    with pytest.raises(ParseError) as err:
        load_game(p)
    assert err.value.line == 4 and err.value.path == str(p)


def test_semantic_errors_point_at_key(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "players": 2,\n "action_sets": [[0, 1], [0, 1]],\n'
                 ' "utilities": [[[1, 2], [3, 4]]]\n}\n')
    with pytest.raises(ParseError) as err:
        load_game(p)
    assert err.value.line == 4
    p.write_text('{\n "players": 3,\n "action_sets": [[0, 1], [0, 1]],\n "utilities": []\n}\n')
    with pytest.raises(ParseError) as err:
        load_game(p)
    assert err.value.line == 2
    p.write_text('{\n "players": 1,\n "action_sets": [[0, 1]],\n "utilities": [[0, 1]],\n'
                 ' "colour": "red"\n}\n')
    with pytest.raises(ParseError) as err:
        load_game(p)
    assert err.value.line == 5 and "colour" in err.value.detail


def test_potential_must_match_game(tmp_path):
    g = load_game(DATA / "coordination.json")
    phi = load_potential(DATA / "coordination_potential.json", g)
    assert phi.shape == (3, 3)
    with pytest.raises(ParseError):
        load_potential(DATA / "coordination_potential.json", load_game(DATA / "matching_pennies.json"))


def test_envelope_round_trip_is_lossless(tmp_path):
    rng = np.random.default_rng(7)
    payload = {"x": rng.normal(size=50).tolist(), "tiny": 1e-300, "third": 1 / 3,
               "nested": {"b": [np.float64(0.1), np.int64(3), np.bool_(True)]}}
    write_json(tmp_path / "r.json", envelope({"seed": 0}, payload))
    back = read_envelope(tmp_path / "r.json")
    assert back["payload"]["x"] == payload["x"]
    assert back["payload"]["third"] == 1 / 3 and back["payload"]["tiny"] == 1e-300
    assert back["payload"]["nested"]["b"] == [0.1, 3, True]
    assert dumps(back) == (tmp_path / "r.json").read_text()


def test_envelope_timestamp_from_environment(monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    assert envelope({}, {})["timestamps"]["created"] is None
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    assert envelope({}, {})["timestamps"]["created"] == 1700000000


def test_plot_data_constant_trajectory(tmp_path):
    emit_plot_data({"only": np.tile([1.5, 2.5], (4, 1))}, ([0.0, 0.0], 1.0), out_dir=tmp_path)
    lines = (tmp_path / "full_trajectories.txt").read_text().splitlines()
    assert lines[0] == "# only"
    assert [l.split()[1:] for l in lines[1:]] == [["1.5", "2.5"]] * 4


def test_plot_data_tail_view(tmp_path):
    states = np.arange(40.0).reshape(20, 2)
    emit_plot_data({"a": states, "b": states[:10]}, ([0.0, 0.0], 1.0), out_dir=tmp_path)
    tail = read_plot_points(tmp_path / "tail_trajectories.txt")
    assert tail["a"][:, 0].tolist() == list(range(7, 20))
    assert tail["b"][:, 0].tolist() == list(range(7, 10))
    full = read_plot_points(tmp_path / "full_trajectories.txt")
    assert np.array_equal(full["a"][:, 1:], states)


def test_circle_polyline(tmp_path):
    ring = circle_polyline([33.3, 133.3], 2.4)
    assert len(ring) == 257 and np.array_equal(ring[0], ring[-1])
    assert np.all(np.abs(np.linalg.norm(ring - [33.3, 133.3], axis=1) - 2.4) <= 1e-9)
    emit_plot_data({"a": np.zeros((3, 2))}, ([1.0, 1.0], 0.5), out_dir=tmp_path)
    pts = np.loadtxt(tmp_path / "tail_circle.txt")
    assert pts.shape == (257, 2)
    assert np.all(np.abs(np.linalg.norm(pts - 1.0, axis=1) - 0.5) <= 1e-9)


def test_plot_data_needs_a_trajectory(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data({}, ([0.0, 0.0], 1.0), out_dir=tmp_path)


def test_run_config_is_strict(tmp_path):
    assert RunConfig("verify").seed == 0
    with pytest.raises(ParseError):
        RunConfig("dance")
    with pytest.raises(ParseError):
        RunConfig("verify", seed=2 ** 64)
    with pytest.raises(ParseError):
        RunConfig("simulate", game_path="g.json")  # no x0
    with pytest.raises(ParseError):
        RunConfig("cournot", cournot={"demand": 3})
    p = tmp_path / "c.json"
    p.write_text('{\n "command": "verify",\n "verbose": true\n}\n')
    with pytest.raises(ParseError) as err:
        load_config(p)
    assert err.value.line == 3


def test_cli_simulate(tmp_path, capsys):
    out = tmp_path / "sim"
    rc = cli.main(["simulate", "--game", str(DATA / "matching_pennies.json"), "--x0", "0,0",
                   "--rule", "sequential_best", "--steps", "30", "--out", str(out)])
    assert rc == 0
    rep = read_envelope(out / "report.json")
    assert rep["payload"]["cycle"]["period"] == 4
    assert (out / "trajectory.csv").read_text().startswith("t,player_1,player_2,w_t,k_t,mover")


def test_cli_simulate_with_potential(tmp_path):
    out = tmp_path / "sim"
    rc = cli.main(["simulate", "--game", str(DATA / "coordination.json"),
                   "--phi", str(DATA / "coordination_potential.json"),
                   "--rule", "sequential_better", "--x0", "2,1", "--out", str(out)])
    assert rc == 0
    assert read_envelope(out / "report.json")["payload"]["theorem2"]["holds"] is True


def test_cli_analyze_contraction_and_invariant_sets(tmp_path):
    out = tmp_path / "a"
    assert cli.main(["analyze-contraction", "--game", str(DATA / "coordination.json"),
                     "--margin", "0.2", "--out", str(out)]) == 0
    cert = read_envelope(out / "certificate.json")["payload"]
    assert cert["L_C"] < 1.0
    out = tmp_path / "i"
    assert cli.main(["invariant-sets", "--game", str(DATA / "coordination.json"),
                     "--phi", str(DATA / "coordination_potential.json"), "--x0", "2,1",
                     "--t0", "0", "--eps", "0.5", "--grid", "50", "--out", str(out)]) == 0
    pay = read_envelope(out / "invariant_set.json")["payload"]
    assert pay["theorem4"]["entry_index"] is not None
    assert pay["lemma6"]["violations"] == []


def test_cli_malformed_game_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "players": 2,\n "action_sets": [[0,1],[0,1]],\n "utilities": [[\n}\n')
    out = tmp_path / "o"
    rc = cli.main(["simulate", "--game", str(bad), "--x0", "0,0", "--out", str(out)])
    assert rc == 2
    err = json.loads((out / "error.json").read_text())["error"]
    assert err["path"] == str(bad) and err["line"] == 5


def test_cli_bad_arguments_exit_2(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["cournot", "--mode", "diagonal", "--out", str(out)]) == 2
    assert (out / "error.json").exists()
    assert cli.main(["simulate", "--game", str(DATA / "matching_pennies.json"),
                     "--x0", "0,0.5", "--out", str(out)]) == 2


def test_cli_numerical_failure_exits_3(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise RootFindError("no sign change on the bracket", {"lo": 0.0, "hi": 1.0})

    monkeypatch.setattr(cn, "run_experiment", boom)
    out = tmp_path / "o"
    assert cli.main(["cournot", "--out", str(out)]) == 3
    err = json.loads((out / "error.json").read_text())["error"]
    assert err["type"] == "RootFindError" and err["diagnostics"]["hi"] == 1.0


def test_cli_config_matches_flags(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["cournot", "--mode", "repeated", "--steps", "80", "--out", str(a)]) == 0
    cfg = {"command": "cournot", "output_dir": str(b),
           "cournot": {"d": 400.0, "c1": 200.0, "c2": 100.0, "mu": "auto_ne",
                       "mode": "repeated", "max_steps": 80}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert cli.main(["run", "--config", str(tmp_path / "c.json")]) == 0
    for f in sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()):
        if f.name == "summary.json":
            continue  # the echoed config names a different output directory
        assert (a / f).read_bytes() == (b / f).read_bytes()
    sa = read_envelope(a / "summary.json")["payload"]
    sb = read_envelope(b / "summary.json")["payload"]
    assert sa == sb


def test_cli_cournot_outputs(tmp_path):
    out = tmp_path / "c"
    assert cli.main(["cournot", "--out", str(out)]) == 0
    assert len(list((out / "trajectories").glob("*.csv"))) == 32
    s = read_envelope(out / "summary.json")["payload"]
    assert s["x_tilde"] == pytest.approx([100 / 3, 400 / 3])
    assert s["radius"] == pytest.approx(2 * s["delta1"])
    for name in ("full_trajectories.txt", "full_circle.txt", "tail_trajectories.txt",
                 "tail_circle.txt"):
        assert (out / "plot" / name).exists()


def test_game_to_dict_keeps_lipschitz():
    g = cn.discretized_game(cn.CournotParams(), np.arange(0.0, 10.0))
    assert len(game_to_dict(g)["lipschitz"]) == 2
