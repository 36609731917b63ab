import json

import numpy as np
import pytest

from torusq.cli import main
from torusq.config import ConfigError, RunConfig, parse_config, serialize_config

ISO_CONFIG = """
[model]
mass = 1.0
omega0 = 1.0
quartic = 0.0

[run]
hbar = 0.1
seed = 7

[quantize]
n_r_max = 1
m_abs_max = 1
grid_r = 16
grid_theta = 16

[oracle]
oracle_n_points = 1500

[identities]
identity_points = 2

[output]
out_dir = {out}
"""


@pytest.fixture()
def iso_cfg_path(tmp_path):
    path = tmp_path / "iso.ini"
    path.write_text(ISO_CONFIG.format(out=tmp_path / "out"))
    return path


class TestConfig:
    def test_round_trip(self):
        cfg = RunConfig(mass=1.5, omega0=0.9, quartic=0.01, hbar=0.05, n_r_max=2,
                        out_dir="x/y")
        text = serialize_config(cfg)
        again = parse_config(text)
        assert again == cfg
        assert parse_config(serialize_config(again)) == again

    def test_defaults(self):
        cfg = parse_config("[model]\nomega0 = 2.0\n")
        assert cfg.omega0 == 2.0
        assert cfg.mass == 1.0

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[model]\nmass = 1.0\nbogus = 3\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown sections"):
            parse_config("[nonsense]\nx = 1\n")

    def test_malformed_rejected(self):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config("model]\nmass oops\n")

    def test_bad_value_reports_key(self):
        with pytest.raises(ConfigError, match="hbar"):
            parse_config("[run]\nhbar = abc\n")

    def test_balanced_potential(self):
        cfg = parse_config("[model]\nmass = 2.0\nomega0 = 3.0\nquartic = 0.5\n")
        pot = cfg.balanced_potential()
        assert pot.u[0] == 0.5
        assert pot.u[1] == pytest.approx(0.5 / (3.0 * 36.0))

    def test_quantum_numbers_exclude_zero_m(self):
        cfg = RunConfig(n_r_max=1, m_abs_max=2)
        qns = cfg.quantum_numbers()
        assert all(m != 0 for _, m in qns)
        assert len(qns) == 2 * 4


class TestCommands:
    def test_quantize_oracle_compare(self, iso_cfg_path, tmp_path, capsys):
        assert main(["quantize", "--config", str(iso_cfg_path)]) == 0
        assert main(["oracle", "--config", str(iso_cfg_path)]) == 0
        assert main(["compare", "--config", str(iso_cfg_path)]) == 0
        out = tmp_path / "out"
        assert (out / "quantize.csv").exists()
        assert (out / "compare.csv").exists()
        manifest = json.loads((out / "compare_manifest.json").read_text())
        assert manifest["summary"]["max_err_ebk2"] < 1e-8
        assert manifest["balanced_potential"]["u_coeffs_in_r2"] == [0.5]

    def test_compare_requires_inputs(self, iso_cfg_path, capsys):
        assert main(["compare", "--config", str(iso_cfg_path)]) == 1
        assert "--generate" in capsys.readouterr().out

    def test_compare_generate(self, iso_cfg_path, tmp_path):
        assert main(["compare", "--config", str(iso_cfg_path), "--generate"]) == 0
        assert (tmp_path / "out" / "compare.csv").exists()

    def test_quantize_deterministic(self, iso_cfg_path, tmp_path):
        main(["quantize", "--config", str(iso_cfg_path)])
        first = (tmp_path / "out" / "quantize.csv").read_bytes()
        main(["quantize", "--config", str(iso_cfg_path)])
        second = (tmp_path / "out" / "quantize.csv").read_bytes()
        assert first == second

    def test_normal_form_model(self, iso_cfg_path, tmp_path):
        assert main(["normal-form", "--config", str(iso_cfg_path)]) == 0
        result = json.loads((tmp_path / "out" / "normal_form.json").read_text())
        assert np.allclose(result["a"], [[1.0, 1.0], [1.0, -1.0]])
        assert result["residual_symplectic"] < 1e-12

    def test_normal_form_explicit_matrices(self, iso_cfg_path, tmp_path):
        mats = [np.diag([2.0, 1.0, 2.0, 1.0]).tolist(),
                np.diag([1.0, 1.0, 1.0, 1.0]).tolist()]
        mpath = tmp_path / "mats.json"
        mpath.write_text(json.dumps(mats))
        assert main(["normal-form", "--config", str(iso_cfg_path),
                     "--matrices", str(mpath)]) == 0
        result = json.loads((tmp_path / "out" / "normal_form.json").read_text())
        assert np.allclose(result["a"], [[2.0, 1.0], [1.0, 1.0]], atol=1e-10)

    def test_normal_form_invalid_input(self, iso_cfg_path, tmp_path):
        mats = [np.diag([1.0, -1.0, 1.0, 1.0]).tolist(), np.eye(4).tolist()]
        mpath = tmp_path / "mats.json"
        mpath.write_text(json.dumps(mats))
        assert main(["normal-form", "--config", str(iso_cfg_path),
                     "--matrices", str(mpath)]) == 1

    def test_identities_small(self, iso_cfg_path, capsys):
        assert main(["identities", "--config", str(iso_cfg_path)]) == 0
        assert "within tol" in capsys.readouterr().out

    def test_identities_fd_floor_reported(self, iso_cfg_path, capsys):
        assert main(["identities", "--config", str(iso_cfg_path), "--tol", "1e-15"]) == 1
        assert "FAILED" in capsys.readouterr().out

    def test_missing_config(self, capsys):
        assert main(["quantize", "--config", "/no/such/file.ini"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_malformed_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[model\nmass == ?\n")
        assert main(["quantize", "--config", str(bad)]) == 2
