import io
import json

import numpy as np
import pytest

from inhomwh import ConfigError, DriftModel, classical_factorize
from inhomwh.cli import RECORD_FIELDS, run
from inhomwh.config import bundled_fluid_text, parse_config

FLUID = bundled_fluid_text()

HOMOGENEOUS = """
states: [a, b, c]
drift: {a: 1.5, b: -1.0, c: 0.8}
breakpoints: [1.0]
generators:
  - [[-2, 1, 1], [0.5, -1, 0.5], [1, 2, -3]]
  - [[-2, 1, 1], [0.5, -1, 0.5], [1, 2, -3]]
discount: 0.7
functional: {kind: Pi+, i: b, j: a}
"""


def write(tmp_path, text, name="p.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def call(argv):
    out = io.StringIO()
    code = run(argv, out)
    return code, out.getvalue()


class TestParse:
    def test_fluid(self):
        cfg = parse_config(FLUID)
        assert cfg.states == ("e+", "e-")
        assert cfg.drift.rates == (2.0, -3.0)
        assert cfg.schedule.breakpoints == (2.0, 8.0)
        assert np.array_equal(cfg.schedule.generators[2].entries, [[-5, 5], [3, -3]])
        assert cfg.discount == 0.5
        assert (cfg.functional.kind, cfg.functional.i, cfg.functional.j) == ("Pi-", "e+", "e-")

    def test_missing_generator(self):
        text = FLUID.replace("  - [[-5, 5], [3, -3]]\n", "")
        with pytest.raises(ConfigError, match="generators: expected 3, found 2"):
            parse_config(text)

    def test_zero_drift_names_state(self):
        with pytest.raises(ConfigError) as info:
            parse_config(FLUID.replace("e-: -3", "e-: 0"))
        assert info.value.key == "drift.e-" and "e-" in str(info.value)

    @pytest.mark.parametrize("old,new,key", [
        ("discount: 0.5", "discount: 0.5\nextra: 1", "extra"),
        ("discount: 0.5", "discount: -1", "discount"),
        ("[[-2, 2], [1, -1]]", "[[-2, 2], [1, -1.5]]", "generators[0]"),
        ("[[-2, 2], [1, -1]]", "[[-2, 2]]", "generators[0]"),
        ("kind: Pi-", "kind: Pi+", "functional.i"),
        ("kind: Pi-", "kind: Chi", "functional.kind"),
        ("j: e-}", "j: zz}", "functional.j"),
        ("breakpoints: [2, 8]", "breakpoints: [8, 2]", "breakpoints[1]"),
        ("method: gaver-stehfest", "method: euler", "inversion.method"),
        ("paths: 10000", "paths: 0", "mc.paths"),
        ("seed: 20240601", "seed: 1, colour: red", "mc.colour"),
    ])
    def test_error_key_paths(self, old, new, key):
        assert old in FLUID
        with pytest.raises(ConfigError) as info:
            parse_config(FLUID.replace(old, new))
        assert info.value.key == key

    def test_psi_level(self):
        text = FLUID.replace("{kind: Pi-, i: e+, j: e-}", "{kind: Psi+, i: e+, j: e+}")
        with pytest.raises(ConfigError, match="functional.level"):
            parse_config(text)
        cfg = parse_config(text.replace("j: e+}", "j: e+, level: 1.5}"))
        assert cfg.functional.level == 1.5

    def test_not_yaml_mapping(self):
        with pytest.raises(ConfigError):
            parse_config("- 1\n- 2\n")


class TestRun:
    def test_check(self, tmp_path):
        code, out = call(["check", write(tmp_path, FLUID)])
        assert code == 0 and "config OK" in out

    def test_check_corrupt(self, tmp_path, capsys, monkeypatch):
        import inhomwh.cli as cli

        def boom(*a, **k):
            raise AssertionError("computation attempted")

        monkeypatch.setattr(cli, "functional", boom)
        monkeypatch.setattr(cli, "block_factorize", boom)
        code, out = call(["check", write(tmp_path, FLUID.replace("e-: -3", "e-: 0"))])
        assert code == 2 and out == ""
        assert "drift.e-" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert call(["check", str(tmp_path / "nope.cfg")])[0] == 2

    def test_passage_homogeneous(self, tmp_path):
        code, out = call(["passage", write(tmp_path, HOMOGENEOUS), "--json"])
        rec = json.loads(out)
        G = np.array([[-2, 1, 1], [0.5, -1, 0.5], [1, 2, -3]])
        quad = classical_factorize(G, DriftModel("abc", (1.5, -1.0, 0.8)), 0.7)
        assert code == 0
        assert abs(rec["value"] - quad.lambda_plus[0, 0]) <= 2e-3
        assert list(rec)[:len(RECORD_FIELDS)] == list(RECORD_FIELDS)

    def test_factorize(self, tmp_path):
        code, out = call(["factorize", write(tmp_path, FLUID), "--json", "--rates", "1", "1"])
        rec = json.loads(out)
        assert code == 0 and rec["residual"] <= 1e-8 and rec["direct_gap"] <= 1e-8

    def test_factorize_wrong_rates(self, tmp_path):
        assert call(["factorize", write(tmp_path, FLUID), "--rates", "1"])[0] == 2

    def test_json_deterministic(self, tmp_path):
        path = write(tmp_path, FLUID)
        argv = ["compare", path, "--json", "--no-timing", "--paths", "2000"]
        a, b = call(argv), call(argv)
        assert a == b and a[0] == 0
        recs = [json.loads(line) for line in a[1].splitlines()]
        assert [r["command"] for r in recs] == ["passage", "mc", "compare"]
        assert all(r["wall_ms"] is None for r in recs)

    def test_compare_fluid(self, tmp_path):
        code, out = call(["compare", write(tmp_path, FLUID)])
        assert code == 0
        assert "AGREE (within 3 SE)" in out and "Wiener-Hopf" in out

    def test_compare_disagreement_exit(self, tmp_path):
        # a wildly wrong inversion (noise-dominated) must trip the 3-SE gate
        code, out = call(["compare", write(tmp_path, FLUID), "--terms", "8", "--paths", "500"])
        assert code == 4 and "DISAGREE" in out

    def test_numerical_failure_exit(self, tmp_path, monkeypatch):
        import inhomwh.cli as cli
        from inhomwh import SpectralSplitError

        def fail(*a, **k):
            raise SpectralSplitError("eigenvalue on the axis")

        monkeypatch.setattr(cli, "functional", fail)
        assert call(["passage", write(tmp_path, FLUID)])[0] == 3

    def test_talbot_non_scalar_is_input_error(self, tmp_path):
        assert call(["passage", write(tmp_path, HOMOGENEOUS), "--method", "talbot"])[0] == 2

    def test_mc(self, tmp_path):
        code, out = call(["mc", write(tmp_path, FLUID), "--json", "--paths", "1000", "--seed", "3"])
        rec = json.loads(out)
        assert code == 0 and rec["seed"] == 3 and rec["std_error"] > 0

    def test_example_fluid(self):
        code, out = call(["example-fluid", "--no-timing", "--json"])
        recs = [json.loads(line) for line in out.splitlines()]
        assert code == 0
        assert abs(recs[0]["value"] - 0.6501) <= 2e-3
        assert recs[-1]["verdict"].startswith("AGREE")

    def test_bad_subcommand(self):
        with pytest.raises(SystemExit) as info:
            run(["frobnicate"])
        assert info.value.code == 2
