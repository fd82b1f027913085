"""Report generation, manifests and the command-line surface."""

import json

import pytest

from symlab import cli, expr as ex
from symlab.cli import (
    ManifestError,
    emit_report,
    export_manifest,
    load_manifest,
    run_verification,
)


class TestRunVerification:
    def test_builtin_passes(self, models):
        rep = run_verification(models["V"], samples=10, seed=1)
        assert rep.passed
        names = [c.name for c in rep.checks]
        assert "frame closure" in names
        assert "jacobi identity" in names
        assert any("admissibility" in n for n in names)
        assert "second-order scalar conditions" in names

    def test_errata_reported_but_passing(self, models):
        rep = run_verification(models["VIII"], samples=5, seed=1)
        assert rep.passed
        assert rep.errata
        assert any("structure-constant" in e["location"] for e in rep.errata)

    def test_check_order_is_stable(self, models):
        rep = run_verification(models["II"], samples=5, seed=0)
        names = [c.name for c in rep.checks]
        assert names.index("frame closure") == 0
        assert names.index("jacobi identity") == 1
        assert names.index("integral correction reduction") == len(names) - 1


class TestReports:
    def test_json_deterministic(self, models):
        r1 = run_verification(models["III"], samples=8, seed=42)
        r2 = run_verification(models["III"], samples=8, seed=42)
        assert emit_report(r1, "json") == emit_report(r2, "json")

    def test_json_schema_versioned(self, models):
        rep = run_verification(models["I"], samples=5, seed=0)
        doc = json.loads(emit_report(rep, "json"))
        assert doc["schema"] == "symlab-report/1"
        assert doc["passed"] is True
        assert doc["timing_seconds"] is None

    def test_text_has_no_fail_lines_when_passing(self, models):
        rep = run_verification(models["IV"], samples=5, seed=0)
        text = emit_report(rep, "text")
        assert "FAIL" not in text


class TestManifests:
    def test_export_round_trip(self, models, tmp_path):
        m = models["III"]
        path = tmp_path / "three.manifest"
        path.write_text(export_manifest(m))
        loaded, bindings = load_manifest(str(path))
        assert loaded.frame == m.frame
        assert loaded.constants == m.constants
        assert loaded.potential == m.potential
        assert loaded.metric == m.metric
        assert loaded.field == m.field
        assert not bindings

    def test_round_trip_verifies(self, models, tmp_path):
        path = tmp_path / "six.manifest"
        path.write_text(export_manifest(models["VI"]))
        loaded, _ = load_manifest(str(path))
        rep = run_verification(loaded, samples=5, seed=0)
        assert rep.passed

    def test_round_trip_with_quotient_components(self, models, tmp_path):
        # the rotation frame carries 1/sin(u1) factors through the grammar
        path = tmp_path / "nine.manifest"
        path.write_text(export_manifest(models["IX"]))
        loaded, _ = load_manifest(str(path))
        assert loaded.frame == models["IX"].frame
        assert loaded.constants == models["IX"].constants
        assert loaded.potential == models["IX"].potential
        assert loaded.metric == models["IX"].metric

    def test_perturbed_potential_fails_admissibility(self, models, tmp_path):
        text = export_manifest(models["I"]).replace("A2 = beta0", "A2 = beta0 + u1^2")
        path = tmp_path / "bad.manifest"
        path.write_text(text)
        loaded, _ = load_manifest(str(path))
        rep = run_verification(loaded, samples=5, seed=0)
        assert not rep.passed
        failing = [c for c in rep.checks if c.verdict == "fail"]
        assert any("admissibility" in c.name for c in failing)

    def test_derived_constants_for_degenerate_span(self, tmp_path):
        path = tmp_path / "degenerate.manifest"
        path.write_text(
            "\n".join(
                [
                    "[model]",
                    "name = degenerate",
                    "[frame]",
                    "xi1 = 0, 1, 0, 0",
                    "xi2 = 0, 0, 1, 0",
                    "xi3 = 0, u1, 0, 0",
                    "[metric]",
                    "g00 = e",
                    "g11 = a11",
                    "g22 = a22",
                    "g33 = a33",
                    "[potential]",
                    "A0 = 0",
                    "A1 = 0",
                    "A2 = 0",
                    "A3 = 0",
                ]
            )
        )
        model, _ = load_manifest(str(path))
        assert model.constants[0, 2, 0] == ex.number(1)

    def test_rank_one_frame_rejected(self, tmp_path):
        path = tmp_path / "rank1.manifest"
        path.write_text(
            "\n".join(
                [
                    "[model]",
                    "name = rank1",
                    "[frame]",
                    "xi1 = 0, 1, 0, 0",
                    "xi2 = 0, u2, 0, 0",
                    "xi3 = 0, u2^2, 0, 0",
                    "[metric]",
                    "g00 = e",
                    "[potential]",
                    "A0 = 0",
                    "A1 = 0",
                    "A2 = 0",
                    "A3 = 0",
                ]
            )
        )
        with pytest.raises(ManifestError):
            load_manifest(str(path))

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "syntax.manifest"
        path.write_text("[model]\nname = x\n[frame]\nxi1 = 0, 1, +, 0\n")
        with pytest.raises(ManifestError):
            load_manifest(str(path))

    def test_missing_section(self, tmp_path):
        path = tmp_path / "missing.manifest"
        path.write_text("[model]\nname = x\n")
        with pytest.raises(ManifestError) as err:
            load_manifest(str(path))
        assert "frame" in str(err.value)


class TestCommandLine:
    def test_verify_single_group_exit_zero(self, capsys):
        rc = cli.main(["verify", "--group", "II", "--samples", "5", "--seed", "1"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "result: PASS" in out

    def test_verify_manifest_failure_exit_one(self, capsys, tmp_path, models):
        text = export_manifest(models["I"]).replace("A2 = beta0", "A2 = beta0 + u1^2")
        path = tmp_path / "bad.manifest"
        path.write_text(text)
        rc = cli.main(["verify", "--manifest", str(path), "--samples", "5"])
        out = capsys.readouterr().out
        assert rc == 1
        assert "FAIL" in out

    def test_errata_json(self, capsys):
        rc = cli.main(["errata", "--group", "VIII", "--format", "json"])
        doc = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert doc["errata"][0]["reproduced"] is True

    def test_solve_text(self, capsys):
        rc = cli.main(["solve", "--group", "V"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "free functions of u0: f1, f2, f3" in out

    def test_solve_unsolvable_exit_two(self, capsys):
        rc = cli.main(["solve", "--group", "IX"])
        assert rc == 2

    def test_export_then_verify(self, capsys, tmp_path):
        path = tmp_path / "m.manifest"
        rc = cli.main(["export", "--group", "VII", "--out", str(path)])
        assert rc == 0
        rc = cli.main(["verify", "--manifest", str(path), "--samples", "5"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "result: PASS" in out

    def test_simulate_writes_rows(self, capsys, tmp_path):
        path = tmp_path / "traj.txt"
        rc = cli.main(
            [
                "simulate",
                "--group",
                "IX",
                "--tau",
                "2",
                "--tol",
                "1e-9",
                "--out",
                str(path),
            ]
        )
        assert rc == 0
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# tau")
        assert len(lines) > 10
        assert len(lines[1].split()) == 13

    def test_simulate_runaway_reports_error(self, capsys):
        rc = cli.main(["simulate", "--group", "V", "--tau", "10", "--tol", "1e-10"])
        err = capsys.readouterr().err
        assert rc == 2
        assert "error" in err

    def test_simulate_with_binding_overrides(self, capsys, tmp_path):
        path = tmp_path / "bindings.manifest"
        path.write_text("[bindings]\nalpha0 = 0.5*sin(u0)\ngamma0 = 0*u0\n")
        rc = cli.main(
            [
                "simulate",
                "--group",
                "V",
                "--tau",
                "4",
                "--tol",
                "1e-9",
                "--bindings",
                str(path),
            ]
        )
        err = capsys.readouterr().err
        assert rc == 0
        assert "drift" in err
