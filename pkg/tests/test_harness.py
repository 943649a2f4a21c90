import json
import math

import numpy as np
import pytest

from scomqaoa import harness
from scomqaoa.config import ConfigError, RunConfig
from scomqaoa.harness import (
    LAYERS_COLUMNS,
    PROFILE_COLUMNS,
    TRACE_SCHEMA,
    cmd_prepare,
    cmd_spectrum,
    cmd_sweep_coupling,
    cmd_sweep_layers,
    cmd_sweep_size,
    initial_state,
    rank_correlation,
    read_table,
    spectrum_rows,
    write_table,
)
from scomqaoa.model import build_ising, build_xxz
from scomqaoa.qng import TRACE_COLUMNS

S5 = math.sqrt(5)


def cfg(tmp_path, **kw):
    kw.setdefault("out", str(tmp_path))
    return RunConfig.from_sources(overrides=kw)


class TestTables:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "t.csv"
        rows = [(1, 0.5, "a", None), (2, float("nan"), "b,c", 3)]
        write_table(path, "demo/1", ("i", "x", "s", "n"), rows)
        schema, back = read_table(path)
        assert schema == "demo/1"
        assert [r["i"] for r in back] == ["1", "2"]
        assert float(back[0]["x"]) == 0.5 and math.isnan(float(back[1]["x"]))
        assert back[1]["s"] == "b,c" and back[0]["n"] == ""
        assert not list(tmp_path.glob("*.tmp"))

    def test_float_precision_survives(self, tmp_path):
        x = 0.1 + 0.2
        write_table(tmp_path / "p.csv", "demo/1", ("x",), [(x,)])
        assert float(read_table(tmp_path / "p.csv")[1][0]["x"]) == x

    def test_row_width_checked(self, tmp_path):
        with pytest.raises(ValueError):
            write_table(tmp_path / "t.csv", "demo/1", ("a", "b"), [(1,)])

    def test_missing_schema(self, tmp_path):
        (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_table(tmp_path / "bad.csv")


class TestSpectrum:
    def test_two_site_rows(self):
        rows = spectrum_rows(build_ising(2, 0.0, 1.0), 2)
        assert [(r[0], r[1]) for r in rows] == [("+1", 0), ("-1", 0), ("-1", 1), ("+1", 1)]
        assert [r[2] for r in rows] == pytest.approx([-S5, -1, 1, S5], abs=1e-12)
        assert all(r[3] == 0 for r in rows)

    def test_counts_and_order(self, tmp_path):
        res = cmd_spectrum(cfg(tmp_path, model="tci", size="6", k=3))
        schema, rows = read_table(res.files["table"])
        assert schema == harness.SPECTRUM_SCHEMA and len(rows) == 6
        for s in ("+1", "-1"):
            e = [float(r["energy"]) for r in rows if r["sector"] == s]
            assert len(e) == 3 and e == sorted(e)
            assert [int(r["i"]) for r in rows if r["sector"] == s] == [0, 1, 2]

    def test_non_conserving_single_block(self):
        rows = spectrum_rows(build_ising(4, 0.1, 1.0), 3)
        assert [r[0] for r in rows] == ["none"] * 3

    def test_degeneracy_flag(self):
        rows = spectrum_rows(build_xxz(4, 0.0, "ByPauli"), 2)
        assert any(r[3] == 1 for r in rows)

    def test_k_too_large(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_spectrum(cfg(tmp_path, size="2", k=3))


class TestConfig:
    def test_defaults(self):
        c = RunConfig()
        assert (c.eta, c.epsilon, c.cutoff, c.max_iters, c.init_angle) == (0.25, 0.01, 0.99, 500, 0.01)

    def test_precedence(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"size": 6, "eta": 0.5, "layers": "1-3"}))
        c = RunConfig.from_sources(path, {"eta": 0.1, "seed": None})
        assert c.size == [6] and c.eta == 0.1 and c.layers == [1, 2, 3] and c.seed == 0

    @pytest.mark.parametrize("text,expected", [("4", [4]), ("1-3", [1, 2, 3]), ("2,5-6", [2, 5, 6]), ([3, 4], [3, 4])])
    def test_int_lists(self, text, expected):
        assert RunConfig(layers=text).layers == expected

    @pytest.mark.parametrize("kw", [
        dict(model="heisenberg"), dict(size="1"), dict(size="17"), dict(layers="0"), dict(eta=2.0),
        dict(epsilon=0.0), dict(cutoff=1.0), dict(grouping="Nope"), dict(sector="2"), dict(cost="x"),
        dict(lambda_x="0.1", sector="1"), dict(model="tci", size="2"), dict(model="xxz", gamma=math.pi / 2),
        dict(restart="maybe"), dict(trotter_order=3), dict(layers="a-b"), dict(jobs=0),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            RunConfig.from_sources(overrides=kw)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"sise": 6}))
        with pytest.raises(ConfigError):
            RunConfig.from_sources(path)

    def test_bad_file(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.from_sources(tmp_path / "missing.json")

    def test_sector_defaults(self):
        c = RunConfig()
        assert c.sector_for(build_ising(4, 0.0, 1.0)) == 1
        assert c.sector_for(build_ising(4, 0.1, 1.0)) is None

    def test_restart_policy(self):
        assert RunConfig().attempts() == 1
        assert RunConfig(state_index=1).attempts() == 4
        assert RunConfig(state_index=1, restart="none").attempts() == 1
        c = RunConfig(state_index=1)
        assert c.optimizer(0).restart == "none"
        assert c.optimizer(2).restart == "random" and c.optimizer(2).seed == 2


def test_initial_states():
    assert np.argmax(initial_state(8, 1).amplitudes) == 0
    assert np.argmax(initial_state(8, -1).amplitudes) == 1 << 4
    assert np.argmax(initial_state(7, -1).amplitudes) == 1 << 3
    assert np.argmax(initial_state(6, None).amplitudes) == 0


class TestPrepare:
    def test_critical_ising(self, tmp_path):
        res = cmd_prepare(cfg(tmp_path, size="8", layers="4"))
        s = res.summary
        assert res.ok and s["fidelity"] >= 0.99 and s["N"] == 4 and s["P"] == 60
        assert s["energy_error"] == pytest.approx(abs(s["energy"] - s["energy_ed"]))
        assert s["entropy_error"] == pytest.approx(abs(s["entropy"] - s["entropy_ed"]))
        assert set(res.files) == {"trace.csv", "angles.json", "profile.csv", "summary.json"}
        schema, trace = read_table(res.files["trace.csv"])
        assert schema == TRACE_SCHEMA and tuple(trace[0]) == TRACE_COLUMNS
        assert len(trace) == s["iterations"] + 1
        _, profile = read_table(res.files["profile.csv"])
        assert tuple(profile[0]) == PROFILE_COLUMNS and len(profile) == 4
        assert float(profile[-1]["fidelity"]) == pytest.approx(s["fidelity"], abs=1e-12)
        assert json.loads(res.files["summary.json"].read_text()) == s

    def test_tci(self, tmp_path):
        res = cmd_prepare(cfg(tmp_path, model="tci", size="8", layers="2"))
        assert res.summary["fidelity"] >= 0.99

    def test_deterministic(self, tmp_path):
        docs = []
        for d in ("a", "b"):
            res = cmd_prepare(cfg(tmp_path / d, model="tci", size="6", layers="1", max_iters=30, seed=5))
            doc = json.loads(res.files["summary.json"].read_text())
            doc.pop("wall_time_s")
            docs.append((doc, res.files["trace.csv"].read_bytes(), res.files["angles.json"].read_bytes()))
        assert docs[0] == docs[1]

    def test_odd_size_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_prepare(cfg(tmp_path, size="7"))

    def test_single_values_required(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_prepare(cfg(tmp_path, size="6,8"))

    def test_state_index_outside_sector(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_prepare(cfg(tmp_path, size="2", state_index=2, layers="1"))

    def test_excited_state_restarts(self, tmp_path):
        res = cmd_prepare(cfg(tmp_path, size="6", state_index=1, layers="1", max_iters=3, restarts=2))
        assert not res.ok
        assert res.summary["attempts"] == 3

    def test_odd_sector(self, tmp_path):
        res = cmd_prepare(cfg(tmp_path, size="6", sector="-1", layers="3"))
        assert res.ok and res.summary["sector"] == -1

    def test_gapped_full_space(self, tmp_path):
        res = cmd_prepare(cfg(tmp_path, size="8", lambda_x="0.06", layers="3"))
        assert res.ok and res.summary["sector"] is None


class TestSweeps:
    def test_layers(self, tmp_path):
        res = cmd_sweep_layers(cfg(tmp_path, size="6", layers="1-4"))
        schema, rows = read_table(res.files["table"])
        assert tuple(rows[0]) == LAYERS_COLUMNS and [int(r["N"]) for r in rows] == [1, 2, 3, 4]
        fid = [float(r["fidelity"]) for r in rows]
        assert all(b >= a - 0.01 for a, b in zip(fid, fid[1:]))
        converged = [int(r["N"]) for r in rows if r["status"] == "converged"]
        assert res.summary["N_c"] == min(converged)
        assert res.ok

    def test_layers_until_converged(self, tmp_path):
        res = cmd_sweep_layers(cfg(tmp_path, size="6", layers="2-6", until_converged=True))
        assert [r[6] for r in res.rows][-1] == "converged"
        assert len(res.rows) == res.summary["N_c"] - 1

    def test_layers_worker_pool(self, tmp_path):
        seq = cmd_sweep_layers(cfg(tmp_path / "s", size="4", layers="1-2"))
        par = cmd_sweep_layers(cfg(tmp_path / "p", size="4", layers="1-2", jobs=2))
        assert seq.rows == par.rows

    def test_size(self, tmp_path):
        res = cmd_sweep_size(cfg(tmp_path, size="4,6", layers="1-4"))
        assert [r[0] for r in res.rows] == [4, 6]
        assert res.summary["N_c"] == {"4": res.rows[0][1], "6": res.rows[1][1]}
        _, points = read_table(res.files["points"])
        assert {int(p["L"]) for p in points} == {4, 6}

    def test_no_convergence_reported(self, tmp_path):
        res = cmd_sweep_size(cfg(tmp_path, size="6", layers="1", max_iters=2))
        assert not res.ok and res.rows[0][1] is None

    def test_coupling_rejects(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_sweep_coupling(cfg(tmp_path, size="8", lambda_x="0,0.1"))
        with pytest.raises(ConfigError):
            cmd_sweep_coupling(cfg(tmp_path, model="tci", size="8"))

    def test_coupling_small(self, tmp_path):
        res = cmd_sweep_coupling(cfg(tmp_path, size="8", lambda_x="0.2,0.1", layers="1-4"))
        assert [r[0] for r in res.rows] == [0.1, 0.2]
        assert res.rows[0][1] > res.rows[1][1]
        assert "spearman_xi_N_c" in res.summary


def test_rank_correlation():
    assert rank_correlation([1, 2, 3], [2, 4, 9]) == pytest.approx(1.0)
    assert rank_correlation([1, 2, 3], [5, 5, 5]) is None
    assert rank_correlation([1, 2], [1, float("nan")]) is None
