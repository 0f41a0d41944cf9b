"""Configuration parsing, experiment runs, artifact determinism."""

import hashlib
import json
import math

import pytest

from cbflab.cli import ConfigError, main, parse_config, run


def cfg_text(**overrides):
    base = {
        "domain": {"N": 16},
        "solver": {"dt": 0.005, "record_stride": 20},
        "experiment": {"kind": "simulate", "t_end": 0.25, "seed": 3},
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and key in base:
            base[key].update(val)
        else:
            base[key] = val
    return json.dumps(base)


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config("{}")
        assert cfg.domain.N == 32 and cfg.domain.d == 2
        assert cfg.solver.dt == 1e-3
        assert cfg.params.mu == 1.0
        assert cfg.experiment["kind"] == "simulate"

    def test_inadmissible_params(self):
        with pytest.raises(ConfigError, match="inadmissible-params"):
            parse_config(json.dumps({"domain": {"d": 3, "N": 8}, "params": {"r": 2.0}}))

    def test_ladder_must_decrease(self):
        with pytest.raises(ConfigError, match="decrease"):
            parse_config(json.dumps({"params": {"epsilon_ladder": [0.5, 0.6]}}))

    def test_ladder_range(self):
        with pytest.raises(ConfigError, match="0, 1"):
            parse_config(json.dumps({"params": {"epsilon_ladder": [1.5, 0.5]}}))

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(json.dumps({"domain": {"M": 3}}))

    def test_horizons_must_increase(self):
        with pytest.raises(ConfigError, match="horizons"):
            parse_config(json.dumps({"experiment": {"kind": "pullback", "horizons": [2.0, 1.0]}}))

    def test_stochastic_needs_seed(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_config(json.dumps({
                "experiment": {"kind": "simulate", "system": "conjugated"},
            }))

    def test_window_covers_horizons(self):
        with pytest.raises(ConfigError, match="window"):
            parse_config(json.dumps({
                "params": {"epsilon": 0.5},
                "experiment": {"kind": "pullback", "horizons": [1.0, 5.0],
                               "seed": 1, "path_window": [-2.0, 1.0]},
            }))

    def test_bad_json(self):
        with pytest.raises(ConfigError, match="JSON"):
            parse_config("{not json")


class TestRun:
    def test_simulate_unforced_energy_monotone(self, tmp_path):
        cfg = parse_config(cfg_text(output={"dir": str(tmp_path / "out")}))
        assert run(cfg) == 0
        rows = (tmp_path / "out" / "trajectory.csv").read_text().strip().split("\n")[1:]
        h = [float(r.split(",")[1]) for r in rows]
        assert all(b <= a for a, b in zip(h, h[1:]))

    def test_deterministic_artifacts(self, tmp_path):
        for sub in ("a", "b"):
            cfg = parse_config(cfg_text(output={"dir": str(tmp_path / sub)}))
            assert run(cfg) == 0
        for name in ("trajectory.csv", "final_state.csv"):
            da = (tmp_path / "a" / name).read_bytes()
            db = (tmp_path / "b" / name).read_bytes()
            assert hashlib.sha256(da).hexdigest() == hashlib.sha256(db).hexdigest()

    def test_manifest_references_all_artifacts(self, tmp_path):
        out = tmp_path / "out"
        cfg = parse_config(cfg_text(output={"dir": str(out)}))
        run(cfg)
        manifest = json.loads((out / "manifest.json").read_text())
        on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
        assert set(manifest["artifacts"]) == on_disk
        assert manifest["config_sha256"]

    def test_pullback_experiment(self, tmp_path):
        out = tmp_path / "pb"
        cfg = parse_config(json.dumps({
            "domain": {"N": 16},
            "params": {"beta": 0.001},
            "solver": {"dt": 0.01},
            "experiment": {"kind": "pullback", "horizons": [1.0, 2.0, 3.0],
                           "family": {"radius": 2.0, "samples": 3}, "seed": 5},
            "output": {"dir": str(out)},
        }))
        assert run(cfg) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["summary"]["radius_sq"] == 1.0
        assert manifest["summary"]["entry_time"] is not None

    def test_tails_experiment(self, tmp_path):
        out = tmp_path / "tails"
        cfg = parse_config(json.dumps({
            "domain": {"L": 4 * math.pi, "N": 32},
            "solver": {"dt": 0.01},
            "forcing": {"kind": "constant_field", "delta": 0.5,
                        "template": {"shape": "bump", "width": 1.0, "amplitude": 0.5,
                                     "support_radius": 3.0}},
            "experiment": {"kind": "tails", "horizons": [2.0], "seed": 2,
                           "tail_radii": [2.0, 4.0], "tail_epsilons": [0.0, 0.5],
                           "path_window": [-4.0, 3.0],
                           "family": {"radius": 0.5, "samples": 2}},
            "output": {"dir": str(out)},
        }))
        assert run(cfg) == 0
        rows = (out / "tails.csv").read_text().strip().split("\n")[1:]
        assert len(rows) == 4

    def test_verify_cli_exit_code(self, tmp_path, capsys):
        code = main(["verify", "--out", str(tmp_path / "v")])
        assert code == 0
        captured = capsys.readouterr()
        assert "PASS" in captured.out and "FAIL" not in captured.out

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"params": {"epsilon_ladder": [0.5, 0.6]}}))
        assert main(["simulate", "--config", str(bad)]) == 2


class TestMoreExperiments:
    def test_conjugated_simulate(self, tmp_path):
        out = tmp_path / "conj"
        cfg = parse_config(json.dumps({
            "domain": {"N": 16},
            "params": {"epsilon": 0.5},
            "solver": {"dt": 0.005, "record_stride": 50},
            "experiment": {"kind": "simulate", "system": "conjugated", "t_end": 0.25,
                           "seed": 4, "path_window": [-1.0, 1.0], "path_dt": 0.005},
            "output": {"dir": str(out)},
        }))
        assert run(cfg) == 0
        rows = (out / "trajectory.csv").read_text().strip().split("\n")[1:]
        z = [float(r.split(",")[5]) for r in rows]
        assert any(abs(v - 1.0) > 1e-6 for v in z)

    def test_stratonovich_simulate(self, tmp_path):
        out = tmp_path / "strat"
        cfg = parse_config(json.dumps({
            "domain": {"N": 16},
            "params": {"epsilon": 0.5},
            "solver": {"dt": 0.005, "record_stride": 50},
            "experiment": {"kind": "simulate", "system": "stratonovich", "t_end": 0.25,
                           "seed": 5, "path_window": [-1.0, 1.0], "path_dt": 0.005},
            "output": {"dir": str(out)},
        }))
        assert run(cfg) == 0
        assert (out / "trajectory.csv").exists()

    def test_attractor_experiment(self, tmp_path):
        out = tmp_path / "att"
        cfg = parse_config(json.dumps({
            "domain": {"N": 16},
            "solver": {"dt": 0.01},
            "forcing": {"kind": "periodic", "period": 1.0, "delta": 0.5,
                        "template": {"shape": "single_mode", "mode": [0, 1],
                                     "amplitude": 0.2}},
            "experiment": {"kind": "attractor", "horizons": [1.0, 2.0],
                           "family": {"radius": 0.5, "samples": 2}, "seed": 6},
            "output": {"dir": str(out)},
        }))
        assert run(cfg) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["summary"]["cloud_size"] == 2
        assert any(a.startswith("cloud_") for a in manifest["artifacts"])

    def test_semicontinuity_experiment(self, tmp_path):
        out = tmp_path / "semi"
        cfg = parse_config(json.dumps({
            "domain": {"N": 8},
            "params": {"epsilon_ladder": [0.5, 0.25]},
            "solver": {"dt": 0.01},
            "forcing": {"kind": "periodic", "period": 1.0, "delta": 0.5,
                        "template": {"shape": "single_mode", "mode": [0, 1],
                                     "amplitude": 0.05}},
            "experiment": {"kind": "semicontinuity", "horizons": [1.0, 2.0],
                           "family": {"radius": 0.3, "samples": 2}, "seed": 7,
                           "path_window": [-40.0, 1.0], "path_dt": 0.01},
            "output": {"dir": str(out)},
        }))
        status = run(cfg)
        rows = (out / "semicontinuity.csv").read_text().strip().split("\n")[1:]
        assert len(rows) == 2
        assert status in (0, 1)
