import json
from pathlib import Path

import pytest

from smqc import cli, commitment, protocol

CIRCUITS = Path(__file__).resolve().parent.parent / "circuits"


def run(capsys, *argv):
    rc = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return rc, out.out, out.err


class TestSchedule:
    def test_three_party_listing(self, capsys):
        rc, out, _ = run(capsys, "schedule", CIRCUITS / "three_party.circ")
        assert rc == 0
        kinds = [line.split()[2] for line in out.splitlines() if line.startswith("round")]
        assert kinds == ["LQC", "LQC", "NL-CNOT", "LQC", "LQC", "NL-CNOT", "LQC", "NL-CNOT", "LQC"]
        assert out.strip().endswith("3 NL-CNOT rounds")

    def test_cross_owner_measure(self, capsys):
        rc, _, err = run(capsys, "schedule", CIRCUITS / "cross_measure.circ")
        assert rc == 2
        assert "nonlocal measurement rejected" in err
        assert "line 6" in err

    def test_empty(self, capsys):
        rc, out, _ = run(capsys, "schedule", CIRCUITS / "empty.circ")
        assert rc == 0 and "0 NL-CNOT rounds" in out

    def test_syntax_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.circ"
        bad.write_text("parties 1\nqubits 1\nowner 0 0\nwobble 0\n")
        rc, _, err = run(capsys, "schedule", bad)
        assert rc == 2 and "line 4" in err

    def test_missing_file(self, capsys, tmp_path):
        rc, _, _ = run(capsys, "schedule", tmp_path / "nope.circ")
        assert rc == 2


class TestRun:
    base = ("run", "--circuit", CIRCUITS / "cnot2.circ", "--inputs", "0=|+>", "--inputs", "1=amp:0.6,0.8j")

    def test_honest_peer(self, capsys, tmp_path):
        rc, out, _ = run(capsys, *self.base, "--out", tmp_path)
        assert rc == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["oracle_overlap_min"] == pytest.approx(1, abs=1e-10)
        assert report["branches"] == 16 and report["mode"] == "exhaustive"
        records = json.loads((tmp_path / "transcript.json").read_text())
        assert set(records[0]) == {"seq", "kind", "from", "to", "payload_hex"}
        assert "1.000000000000" in out

    def test_ttp_backend(self, capsys, tmp_path):
        rc, _, _ = run(capsys, *self.base, "--backend", "ttp", "--out", tmp_path)
        assert rc == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["oracle_overlap_min"] == pytest.approx(1, abs=1e-10)

    def test_bitflip_prediction(self, capsys, tmp_path):
        rc, out, _ = run(capsys, *self.base, "--strategy", "0=bitflip", "--out", tmp_path)
        assert rc == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["predicted_overlap_min"] == pytest.approx(1, abs=1e-10)
        assert "attack prediction" in out

    def test_corruption_has_no_prediction(self, capsys, tmp_path):
        rc, out, _ = run(capsys, *self.base, "--strategy", "0=chi-corruption:h", "--out", tmp_path)
        assert rc == 0 and "branch dependent" in out

    def test_sampled_mode_and_threshold(self, capsys, tmp_path):
        rc, _, _ = run(capsys, "run", "--circuit", CIRCUITS / "three_party.circ", "--exhaustive-threshold", "2",
                       "--out", tmp_path)
        assert rc == 0
        assert json.loads((tmp_path / "report.json").read_text())["mode"] == "sampled"

    def test_deterministic_outputs(self, capsys, tmp_path):
        for sub in ("a", "b"):
            run(capsys, "run", "--circuit", CIRCUITS / "three_party.circ", "--seed", "7", "--mode", "sampled",
                "--out", tmp_path / sub)
        for name in ("transcript.json", "report.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    @pytest.mark.parametrize(
        "extra",
        [
            ("--inputs", "0=|2>"),
            ("--inputs", "0=|0>,|0>"),
            ("--inputs", "5=|0>"),
            ("--strategy", "0=nonsense"),
            ("--strategy", "1=chi-corruption:t"),
        ],
    )
    def test_config_errors_exit_2(self, capsys, tmp_path, extra):
        rc, _, err = run(capsys, "run", "--circuit", CIRCUITS / "cnot2.circ", *extra, "--out", tmp_path)
        assert rc == 2 and err

    def test_protocol_errors_exit_3(self, capsys, tmp_path, monkeypatch):
        def cheat(*args, **kwargs):
            raise commitment.CheatDetected(1)

        monkeypatch.setattr(protocol, "run_smqc", cheat)
        rc, _, err = run(capsys, *self.base, "--out", tmp_path)
        assert rc == 3 and "protocol error" in err


class TestAttack:
    def test_rotated_basis(self, capsys, tmp_path):
        rc, out, _ = run(capsys, "attack", "rotated-basis", "--u", "H", "--out", tmp_path)
        assert rc == 0 and "PASS" in out
        report = json.loads((tmp_path / "attack_rotated-basis.json").read_text())
        assert {"strategy", "params", "branches_checked", "max_deviation", "verdict"} <= set(report)

    def test_t_corruption_rejected(self, capsys, tmp_path):
        rc, _, err = run(capsys, "attack", "chi-corruption", "--c", "T", "--out", tmp_path)
        assert rc == 2 and "not Clifford" in err

    def test_clifford_corruption(self, capsys, tmp_path):
        rc, out, _ = run(capsys, "attack", "chi-corruption", "--c", "s", "--target", "2", "--out", tmp_path)
        assert rc == 0 and "PASS" in out

    def test_bitflip(self, capsys, tmp_path):
        rc, _, _ = run(capsys, "attack", "bitflip", "--side", "bob", "--out", tmp_path)
        assert rc == 0

    def test_prop1_table(self, capsys, tmp_path):
        rc, out, _ = run(capsys, "attack", "prop1", "--sign", "+", "--out", tmp_path)
        assert rc == 0
        report = json.loads((tmp_path / "attack_prop1.json").read_text())
        assert report["max_deviation"] <= 1e-10
        assert "trace distance" in out

    def test_unknown_strategy(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["attack", "teleport-everything"])
        assert exc.value.code == 2


class TestVerify:
    def test_fresh_build_passes_and_is_deterministic(self, capsys, tmp_path):
        rc, out, _ = run(capsys, "verify", "--seed", "42", "--out", tmp_path / "a")
        assert rc == 0 and "FAIL" not in out
        run(capsys, "verify", "--seed", "42", "--out", tmp_path / "b")
        assert (tmp_path / "a" / "verify.json").read_bytes() == (tmp_path / "b" / "verify.json").read_bytes()

    def test_injected_fault_fails(self, capsys, tmp_path):
        rc, out, _ = run(capsys, "verify", "--inject-fault", "--out", tmp_path)
        assert rc == 4
        status = {line.split()[0]: line.split()[-1] for line in out.splitlines()[1:]}
        assert status["nl_cnot"] == "FAIL"
        assert status["qsim"] == "PASS"


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "smqc", "schedule", str(CIRCUITS / "cnot2.circ")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "1 NL-CNOT rounds" in proc.stdout
