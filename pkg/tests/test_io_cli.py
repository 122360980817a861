"""Serialization exactness, generator determinism, and the CLI surface."""

import json

import numpy as np
import pytest

from povmround import (
    ValidationError,
    validate_povm,
    validate_pvm,
    validate_state,
)
from povmround.cli import build_tolerances, main
from povmround.generators import gen_instance
from povmround.io import dumps, load_instance, load_report, save_instance


class TestSerialization:
    def test_matrix_entries_roundtrip_exactly(self, tmp_path):
        inst = gen_instance("random_povm_near_pvm", 17, {"dims": [3, 2], "n": 3, "delta": 0.3})
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        loaded = load_instance(path)
        for a, b in zip(inst.povm.elements, loaded.povm.elements):
            for x, y in zip(a.blocks, b.blocks):
                assert np.array_equal(x, y)
        for x, y in zip(inst.state.densities, loaded.state.densities):
            assert np.array_equal(x, y)
        assert loaded.metadata == inst.metadata

    def test_storage_is_re_im_pairs_row_major(self, tmp_path):
        inst = gen_instance("linfty2_family", 0, {"c": 0.1})
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        doc = json.loads(path.read_text())
        assert doc["povm"][0][0] == [[[1.0, 0.0]]]
        assert doc["dims"] == [1, 1]

    def test_loaded_objects_are_validated(self, tmp_path):
        inst = gen_instance("linfty2_family", 0, {"c": 0.1})
        doc = inst.to_json()
        doc["povm"][0][0][0][0] = [5.0, 0.0]  # breaks the sum-to-identity invariant
        path = tmp_path / "bad.json"
        path.write_text(dumps(doc))
        with pytest.raises(ValidationError):
            load_instance(path)

    def test_parse_error_reported(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ValidationError):
            load_instance(path)


class TestGenerators:
    def test_same_seed_byte_identical(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        save_instance(gen_instance("random_povm_near_pvm", 7, {"dims": [4], "n": 3}), a)
        save_instance(gen_instance("random_povm_near_pvm", 7, {"dims": [4], "n": 3}), b)
        assert a.read_bytes() == b.read_bytes()

    def test_different_seeds_differ(self):
        x = gen_instance("random_povm_near_pvm", 1, {"dims": [4], "n": 3})
        y = gen_instance("random_povm_near_pvm", 2, {"dims": [4], "n": 3})
        assert any(
            not np.array_equal(a.blocks[0], b.blocks[0])
            for a, b in zip(x.povm.elements, y.povm.elements)
        )

    @pytest.mark.parametrize("kind,params", [
        ("random_povm_near_pvm", {"dims": [3, 2], "n": 4, "delta": 0.4}),
        ("random_povm_near_pvm", {"dims": [5], "n": 2, "delta": 0.0}),
        ("random_state", {"dims": [4], "state_rank": 1}),
        ("paper_counterexample", {"delta": 0.01}),
        ("linfty2_family", {"c": 0.3}),
        ("rotated_pvm_pair", {"theta": 0.2, "dims": [4], "n_p": 3, "n_q": 2}),
        ("rotated_pvm_pair", {"theta": 0.1, "canonical": True}),
        ("random_functionals", {"dims": [3], "n": 3}),
    ])
    def test_outputs_pass_validators(self, kind, params):
        inst = gen_instance(kind, 11, params)
        if inst.state is not None:
            assert validate_state(inst.algebra, inst.state).is_valid
        if inst.povm is not None:
            assert validate_povm(inst.algebra, inst.povm).is_valid
        if inst.pvm_pair is not None:
            for pvm in inst.pvm_pair:
                assert validate_pvm(inst.algebra, pvm).is_valid
        if inst.functionals is not None:
            inst.functionals.validate()

    def test_counterexample_matches_formula(self):
        inst = gen_instance("paper_counterexample", 0, {"delta": 0.01})
        f = 1.0 / 1.06
        assert inst.povm.elements[0].blocks[0][0, 0] == pytest.approx(f * 1.04, abs=1e-15)
        assert inst.povm.elements[1].blocks[0][1, 1] == pytest.approx(f * 1.03, abs=1e-15)

    def test_unknown_kind_rejected(self):
        with pytest.raises(Exception):
            gen_instance("bogus_kind", 0, {})

    def test_param_ranges_checked(self):
        with pytest.raises(Exception):
            gen_instance("paper_counterexample", 0, {"delta": 0.5})
        with pytest.raises(Exception):
            gen_instance("rotated_pvm_pair", 0, {"theta": 2.0})


class TestCli:
    def test_gen_then_orthogonalize(self, tmp_path, capsys):
        inst_path = tmp_path / "inst.json"
        report_path = tmp_path / "report.json"
        assert main([
            "gen", "--kind", "linfty2_family", "--seed", "1",
            "--param", "c=0.1", "--out", str(inst_path),
        ]) == 0
        assert main([
            "orthogonalize", "--in", str(inst_path), "--out", str(report_path),
        ]) == 0
        doc = load_report(report_path)
        assert doc["pass"] is True
        assert doc["result"]["defect"] == pytest.approx(0.05, abs=1e-12)
        assert doc["result"]["error"] == pytest.approx(0.05, abs=1e-10)
        assert doc["input_digest"]
        assert doc["tolerances"]["cert_tol"] == 1e-9

    def test_gen_determinism_through_cli(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert main([
                "gen", "--kind", "random_functionals", "--seed", "7",
                "--param", "dims=3", "--param", "n=2", "--out", str(path),
            ]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_orthogonalize_sym_command(self, tmp_path):
        inst_path = tmp_path / "inst.json"
        report_path = tmp_path / "rep.json"
        assert main([
            "gen", "--kind", "random_povm_near_pvm", "--seed", "9",
            "--param", "dims=4", "--param", "n=3", "--param", "delta=0.2",
            "--out", str(inst_path),
        ]) == 0
        assert main([
            "orthogonalize-sym", "--in", str(inst_path), "--out", str(report_path),
        ]) == 0
        doc = load_report(report_path)
        assert doc["pass"] is True
        assert doc["result"]["symmetry_residual"] <= 1e-8
        assert sum(
            d * m for d, m in zip(doc["result"]["sub_dims"], doc["result"]["multiplicities"])
        ) == 4

    def test_repair_and_fourier_commands(self, tmp_path):
        inst_path = tmp_path / "pair.json"
        assert main([
            "gen", "--kind", "rotated_pvm_pair", "--seed", "2",
            "--param", "theta=0.1", "--param", "canonical=true",
            "--out", str(inst_path),
        ]) == 0
        assert main(["repair", "--in", str(inst_path)]) == 0
        assert main(["fourier", "--in", str(inst_path)]) == 0

    def test_majorant_verify_and_tampering(self, tmp_path, capsys):
        inst_path = tmp_path / "fun.json"
        report_path = tmp_path / "maj.json"
        assert main([
            "gen", "--kind", "random_functionals", "--seed", "3",
            "--param", "dims=3", "--param", "n=3", "--out", str(inst_path),
        ]) == 0
        assert main([
            "majorant", "--in", str(inst_path), "--out", str(report_path),
        ]) == 0
        assert main(["verify", "--in", str(report_path)]) == 0

        doc = json.loads(report_path.read_text())
        for row in doc["result"]["z"][0]:  # halve the majorant diagonal
            for entry in row:
                entry[0] *= 0.5
        tampered = tmp_path / "tampered.json"
        tampered.write_text(dumps(doc))
        capsys.readouterr()
        assert main(["verify", "--in", str(tampered)]) == 1
        err = capsys.readouterr().err
        assert "feasibility" in err

    def test_sweep_csv_columns(self, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        assert main([
            "sweep", "--count", "3", "--seed", "5", "--csv", str(csv_path),
        ]) == 0
        header = csv_path.read_text().splitlines()[0]
        assert header == "seed,dims,n,defect,error,ratio,bound_9eps_margin,runtime_ms"
        assert len(csv_path.read_text().splitlines()) == 4

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["orthogonalize", "--in", str(tmp_path / "nope.json")]) == 2

    def test_invalid_instance_exit_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["orthogonalize", "--in", str(path)]) == 2

    def test_wrong_payload_exit_2(self, tmp_path):
        inst_path = tmp_path / "state_only.json"
        assert main([
            "gen", "--kind", "random_state", "--seed", "0",
            "--param", "dims=3", "--out", str(inst_path),
        ]) == 0
        assert main(["orthogonalize", "--in", str(inst_path)]) == 2

    def test_tol_flag_propagates(self, tmp_path):
        inst_path = tmp_path / "fun.json"
        report_path = tmp_path / "maj.json"
        assert main([
            "gen", "--kind", "random_functionals", "--seed", "4",
            "--param", "dims=2", "--param", "n=2", "--out", str(inst_path),
        ]) == 0
        assert main([
            "majorant", "--in", str(inst_path), "--out", str(report_path),
            "--tol", "gap_tol=1e-5",
        ]) == 0
        doc = load_report(report_path)
        assert doc["tolerances"]["gap_tol"] == 1e-5


class TestToleranceOverrides:
    def test_env_lower_precedence_than_flag(self, monkeypatch):
        monkeypatch.setenv("POVMROUND_TOL_OVERRIDES", "gap_tol=1e-3,cert_tol=1e-8")
        tol = build_tolerances(["gap_tol=1e-5"])
        assert tol.barrier.gap_tol == 1e-5   # flag wins
        assert tol.cert_tol == 1e-8          # env applies

    def test_env_only(self, monkeypatch):
        monkeypatch.setenv("POVMROUND_TOL_OVERRIDES", "psd_tol=1e-7")
        tol = build_tolerances([])
        assert tol.psd_tol == 1e-7

    def test_malformed_override_rejected(self):
        with pytest.raises(ValidationError):
            build_tolerances(["gap_tol"])

    def test_unknown_key_is_cli_parse_error(self, tmp_path):
        inst_path = tmp_path / "inst.json"
        assert main([
            "gen", "--kind", "linfty2_family", "--seed", "0",
            "--param", "c=0.1", "--out", str(inst_path),
        ]) == 0
        assert main([
            "orthogonalize", "--in", str(inst_path), "--tol", "bogus=1",
        ]) == 2
