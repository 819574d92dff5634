import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ris1bit import __version__
from ris1bit.cli import bundled_path, load_config, main, parse_config
from ris1bit.core import FieldMap, PhasePattern, ValidationError
from ris1bit.field import reflected_field_on_plane

GOLDEN = Path(__file__).parent / "golden"
FAST_CONFIGS = ["steer30", "steer45", "steer_pair_m15_30", "uniform_s1"]


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.mark.parametrize("name", FAST_CONFIGS + [pytest.param("hologram_i", marks=pytest.mark.slow)])
def test_synthesize_matches_golden(name, tmp_path):
    assert run("synthesize", "--config", bundled_path(f"{name}.cfg"), "--out", tmp_path) == 0
    got = (tmp_path / "pattern.txt").read_text()
    assert got == (GOLDEN / f"{name}.pattern.txt").read_text()
    assert PhasePattern.load(tmp_path / "pattern.json") == PhasePattern.from_text(got)


def test_synthesize_is_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run("synthesize", "--config", bundled_path("steer45.cfg"), "--out", tmp_path / sub) == 0
    for f in ("pattern.txt", "pattern.json", "synthesize.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_provenance_is_recorded(tmp_path):
    run("synthesize", "--config", bundled_path("steer30.cfg"), "--out", tmp_path, "--seed", "7")
    prov = json.loads((tmp_path / "synthesize.json").read_text())["provenance"]
    assert prov[0].startswith(f"ris1bit {__version__} (numpy {np.__version__}")
    assert "seed 7" in prov
    assert any(p.startswith("config_sha256 ") for p in prov)
    assert any(p.startswith("pattern_sha256 ") for p in prov)


def test_evaluate_report_matches_golden(tmp_path):
    run("synthesize", "--config", bundled_path("steer30.cfg"), "--out", tmp_path / "s")
    assert run("evaluate", "--config", bundled_path("steer30.cfg"), "--pattern", tmp_path / "s" / "pattern.txt",
               "--out", tmp_path / "e") == 0
    got = json.loads((tmp_path / "e" / "report.json").read_text())
    gold = json.loads((GOLDEN / "steer30.report.json").read_text())
    got.pop("provenance"), gold.pop("provenance")
    assert got == gold
    assert got["directivity_dbi"] == pytest.approx(26.58, abs=0.01)
    assert abs(got["peak_u"]) == pytest.approx(0.5)


def test_evaluate_field_map_equals_library_call(tmp_path):
    cfg_path = bundled_path("steer45.cfg")
    run("synthesize", "--config", cfg_path, "--out", tmp_path)
    run("evaluate", "--config", cfg_path, "--pattern", tmp_path / "pattern.txt", "--out", tmp_path)
    cfg = load_config(cfg_path)
    from ris1bit.cli import _context

    direct = reflected_field_on_plane(_context(cfg), cfg.excitation, cfg.layout,
                                      PhasePattern.load(tmp_path / "pattern.txt"), cfg.table, cfg.eval_plane)
    on_disk = FieldMap.from_csv(tmp_path / "field_map.csv")
    assert np.array_equal(on_disk.values, direct.values)


def test_evaluate_does_not_touch_pattern(tmp_path):
    run("synthesize", "--config", bundled_path("uniform_s1.cfg"), "--out", tmp_path)
    before = (tmp_path / "pattern.txt").read_bytes()
    run("evaluate", "--config", bundled_path("uniform_s1.cfg"), "--pattern", tmp_path / "pattern.txt",
        "--out", tmp_path)
    assert (tmp_path / "pattern.txt").read_bytes() == before


def test_spreading_override_changes_plane_only(tmp_path):
    cfg = bundled_path("steer30.cfg")
    run("synthesize", "--config", cfg, "--out", tmp_path)
    pat = tmp_path / "pattern.txt"
    run("evaluate", "--config", cfg, "--pattern", pat, "--out", tmp_path / "p")
    run("evaluate", "--config", cfg, "--pattern", pat, "--out", tmp_path / "h", "--spreading", "huygens")
    a = FieldMap.from_csv(tmp_path / "p" / "field_map.csv").values
    b = FieldMap.from_csv(tmp_path / "h" / "field_map.csv").values
    assert not np.array_equal(a, b)
    ra = json.loads((tmp_path / "p" / "report.json").read_text())
    rb = json.loads((tmp_path / "h" / "report.json").read_text())
    assert ra["directivity_dbi"] == rb["directivity_dbi"]


class TestControlReplay:
    def write_cfg(self, tmp_path, extra=""):
        p = tmp_path / "fab.cfg"
        p.write_text("[layout]\nn_x = 20\nn_y = 20\n[task]\nkind = uniform\nstate = 0\n" + extra)
        return p

    def test_lossless_replay(self, tmp_path):
        run("synthesize", "--config", bundled_path("steer30.cfg"), "--out", tmp_path)
        assert run("control-replay", "--config", self.write_cfg(tmp_path), "--pattern", tmp_path / "pattern.txt",
                   "--out", tmp_path / "r") == 0
        assert (tmp_path / "r" / "fabric_pattern.txt").read_bytes() == (tmp_path / "pattern.txt").read_bytes()
        events = (tmp_path / "r" / "transcript.jsonl").read_text().splitlines()
        assert len(events) == 100
        assert json.loads((tmp_path / "r" / "replay.json").read_text())["matches_input"] is True

    def test_total_loss_leaves_power_on_state(self, tmp_path):
        (tmp_path / "p.txt").write_text("00\n00\n")
        cfg = self.write_cfg(tmp_path, "[fabric]\nloss = 1.0\nrounds = 2\n")
        run("control-replay", "--config", cfg, "--pattern", tmp_path / "p.txt", "--out", tmp_path)
        assert (tmp_path / "fabric_pattern.txt").read_text() == "11\n11\n"
        doc = json.loads((tmp_path / "replay.json").read_text())
        assert doc["undelivered_blocks"] == [0]
        assert doc["frames_sent"] == 3

    def test_single_block_waveform(self, tmp_path):
        (tmp_path / "p.txt").write_text("01\n10\n")
        run("control-replay", "--config", self.write_cfg(tmp_path), "--pattern", tmp_path / "p.txt",
            "--out", tmp_path)
        lines = (tmp_path / "frame0_waveform.txt").read_text().splitlines()
        assert lines[0] == "# address 0 payload 6"
        body = lines[1:]
        assert body[:2] == ["+9000", "-4500"]
        assert len(body) == 2 + 2 * 16 + 1
        assert len((tmp_path / "transcript.jsonl").read_text().splitlines()) == 1


class TestLink:
    def test_table(self, tmp_path, capsys):
        assert run("link", "--scenarios", bundled_path("link_scenarios.cfg"), "--out", tmp_path) == 0
        assert (tmp_path / "link.csv").read_text() == (GOLDEN / "link_scenarios.csv").read_text()
        out = capsys.readouterr().out
        assert "steer-0-45" in out and "-43.9899" in out

    def test_delta_column_present(self, tmp_path):
        run("link", "--scenarios", bundled_path("link_scenarios.cfg"), "--out", tmp_path)
        head = (tmp_path / "link.csv").read_text().splitlines()[0].split(",")
        assert "delta_vs_mirror-s0-0-45_db" in head


class TestFitVaractor:
    def test_bundled_spectrum(self, tmp_path, capsys):
        assert run("fit-varactor", "--spectrum", bundled_path("varactor_0V.s1p"), "--bias", "0",
                   "--out", tmp_path) == 0
        assert "C_d = 2.1000 pF" in capsys.readouterr().out
        doc = json.loads((tmp_path / "fit.json").read_text())
        gold = json.loads((GOLDEN / "fit_0V.json").read_text())
        assert doc["converged"] is True
        assert doc["C_d_F"] == pytest.approx(gold["C_d_F"], rel=1e-9)

    def test_not_converged_exit_code(self, tmp_path):
        code = run("fit-varactor", "--spectrum", bundled_path("varactor_3V2.s1p"), "--max-iter", "3",
                   "--out", tmp_path)
        assert code == 3
        assert json.loads((tmp_path / "fit.json").read_text())["converged"] is False


class TestExitCodes:
    def test_usage_errors(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["no-such-command"])
        assert info.value.code == 1
        with pytest.raises(SystemExit) as info:
            main(["evaluate", "--config", "x.cfg"])  # --pattern missing
        assert info.value.code == 1

    def test_missing_config(self, tmp_path):
        assert run("synthesize", "--config", tmp_path / "absent.cfg", "--out", tmp_path) == 2

    def test_no_config(self, tmp_path):
        assert run("synthesize", "--out", tmp_path) == 2

    @pytest.mark.parametrize("text", [
        "[layout]\nn_x = twenty\n",
        "[task]\nkind = teleport\n",
        "[layout]\nn_x = 0\n",
        "not an ini file",
    ])
    def test_malformed_config(self, tmp_path, text):
        (tmp_path / "bad.cfg").write_text(text)
        assert run("synthesize", "--config", tmp_path / "bad.cfg", "--out", tmp_path) == 2

    def test_pattern_layout_mismatch(self, tmp_path):
        (tmp_path / "p.txt").write_text("01\n10\n")
        assert run("evaluate", "--config", bundled_path("steer30.cfg"), "--pattern", tmp_path / "p.txt",
                   "--out", tmp_path) == 2

    def test_missing_scenarios(self, tmp_path):
        assert run("link", "--scenarios", tmp_path / "none.cfg", "--out", tmp_path) == 2


def test_bundled_prefix_resolves(tmp_path):
    cfg = parse_config("[task]\nkind = hologram\nmask = bundled:letter_i.pgm\nz_plane_mm = 700\n", tmp_path)
    assert cfg.task.mask_path == bundled_path("letter_i.pgm")


def test_unknown_spreading_rejected():
    with pytest.raises(SystemExit):
        main(["synthesize", "--spreading", "magic"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "ris1bit", "--version"], capture_output=True, text=True, check=True)
    assert out.stdout.strip() == f"ris1bit {__version__}"


def test_parse_config_defaults():
    cfg = parse_config("[task]\nkind = uniform\n")
    assert cfg.layout.shape == (20, 20)
    assert cfg.frequency == 5.2e9
    assert cfg.spreading == "paper"
    with pytest.raises(ValidationError):
        parse_config("[task]\nkind = uniform\nstate = 2\n")
