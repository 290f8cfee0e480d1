"""End-to-end tests of the command-line interface and its artifacts."""

import json
from fractions import Fraction

import numpy as np
import pytest

from msdecomp import cli
from msdecomp import deblur as db
from msdecomp import seqspace as ss
from msdecomp.pgmio import pgm_read, pgm_write


def run(*argv):
    return cli.main(list(argv))


# ---------------------------------------------------------------------------
# deblur


def test_deblur_phantom_both_modes(tmp_path):
    out = tmp_path / "run"
    code = run("deblur", "--phantom", "--size", "24", "--steps", "4",
               "--tau", "1e-3", "--mode", "both", "--out", str(out))
    assert code == 0
    for name in ("truth.pgm", "blurred.pgm", "observed.pgm", "errors.csv",
                 "errors.png", "residuals.png", "run.json",
                 "trace_multiscale.csv", "trace_singlestep.csv",
                 "trace_multiscale.json", "trace_singlestep.json",
                 "restored_multiscale_step04.pgm",
                 "restored_singlestep_step04.pgm"):
        assert (out / name).is_file(), name
    lines = (out / "errors.csv").read_text().splitlines()
    assert lines[0] == "n,lambda,error_multiscale,error_single_step"
    assert len(lines) == 5
    meta = json.loads((out / "run.json").read_text())
    assert meta["config"]["steps"] == 4
    assert "clip_counts" in meta["config"]
    assert "final_error_multiscale" in meta["config"]["results"]


def test_deblur_deterministic_artifacts(tmp_path):
    args = ["deblur", "--phantom", "--size", "20", "--steps", "3",
            "--tau", "1e-3", "--mode", "multiscale",
            "--noise-var", "0.01", "--seed", "7"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(*args, "--out", str(a)) == 0
    assert run(*args, "--out", str(b)) == 0
    files_a = sorted(p.name for p in a.iterdir())
    files_b = sorted(p.name for p in b.iterdir())
    assert files_a == files_b
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_deblur_even_kernel_is_usage_error(tmp_path):
    assert run("deblur", "--phantom", "--kernel-size", "8",
               "--out", str(tmp_path / "x")) == 1


def test_deblur_requires_a_source(tmp_path):
    assert run("deblur", "--out", str(tmp_path / "x")) == 1


def test_deblur_missing_input_file(tmp_path):
    assert run("deblur", "--input", str(tmp_path / "nope.pgm"),
               "--out", str(tmp_path / "x")) == 1


def test_deblur_from_pgm_input(tmp_path):
    src = tmp_path / "truth.pgm"
    pgm_write(str(src), db.nebula_phantom(16, seed=3))
    out = tmp_path / "run"
    code = run("deblur", "--input", str(src), "--steps", "2", "--tau", "1e-2",
               "--mode", "multiscale", "--out", str(out))
    assert code == 0
    truth_back = pgm_read(str(out / "truth.pgm"))
    assert np.array_equal(truth_back.values, pgm_read(str(src)).values)


def test_deblur_default_step_counts(tmp_path):
    # defaults depend on the noise level; probe via the metadata echo
    out = tmp_path / "n0"
    run("deblur", "--phantom", "--size", "8", "--steps", "1", "--out", str(out))
    meta = json.loads((out / "run.json").read_text())
    assert meta["config"]["steps"] == 1
    ns = cli.build_parser().parse_args(["deblur", "--phantom"])
    assert ns.steps is None  # resolution happens at run time


def test_deblur_solver_logs(tmp_path):
    out = tmp_path / "logs"
    assert run("deblur", "--phantom", "--size", "12", "--steps", "2",
               "--tau", "1e-2", "--mode", "multiscale", "--solver-logs",
               "--out", str(out)) == 0
    log = out / "solvelog_multiscale_step01.csv"
    assert log.is_file()
    lines = log.read_text().splitlines()
    assert lines[0] == "iter,f,grad_norm,step"
    assert len(lines) >= 2
    values = [float(l.split(",")[1]) for l in lines[1:]]
    assert all(later <= earlier for earlier, later in zip(values, values[1:]))


def test_deblur_noisy_observed_differs(tmp_path):
    out = tmp_path / "noisy"
    code = run("deblur", "--phantom", "--size", "16", "--steps", "1",
               "--tau", "1e-2", "--mode", "multiscale",
               "--noise-var", "0.01", "--seed", "3", "--out", str(out))
    assert code == 0
    blurred = pgm_read(str(out / "blurred.pgm")).values
    observed = pgm_read(str(out / "observed.pgm")).values
    assert not np.array_equal(blurred, observed)


# ---------------------------------------------------------------------------
# verify-claim


def test_verify_claim_passes(tmp_path):
    out = tmp_path / "claim"
    assert run("verify-claim", "--M", "2", "--n1-max", "10", "--j-extra", "10",
               "--out", str(out)) == 0
    lines = (out / "claim_report.csv").read_text().splitlines()
    assert lines[0] == "n1,j,A_num,A_den,pass"
    assert lines[-1].startswith("# summary: all_pass=true")
    assert (out / "claim_profiles.png").is_file()
    # the normalised head entry A(2,2) = M^2/(2*M^2) = 1/2
    row = next(l for l in lines[1:] if l.startswith("2,2,"))
    _, _, num, den, ok = row.split(",")
    assert Fraction(int(num), int(den)) == Fraction(1, 2) and ok == "true"


def test_verify_claim_rejects_small_m(tmp_path):
    assert run("verify-claim", "--M", "3/2", "--out", str(tmp_path / "x")) == 1


def test_verify_claim_tamper_hook_fails_with_witness(tmp_path, capsys):
    out = tmp_path / "bad"
    code = run("verify-claim", "--M", "2", "--n1-max", "5", "--j-extra", "8",
               "--tamper-delta", "1/5", "--out", str(out))
    assert code == 4
    captured = capsys.readouterr()
    assert "VIOLATION" in captured.err
    lines = (out / "claim_report.csv").read_text().splitlines()
    assert lines[-1].startswith("# summary: all_pass=false")


def test_verify_claim_argument_guards(tmp_path):
    assert run("verify-claim", "--n1-max", "1", "--out", str(tmp_path / "x")) == 1
    assert run("verify-claim", "--j-extra", "2", "--out", str(tmp_path / "y")) == 1
    assert run("verify-claim", "--M", "abc", "--out", str(tmp_path / "z")) == 1


# ---------------------------------------------------------------------------
# seq-oracle


def test_seq_oracle_defaults_pass(tmp_path):
    out = tmp_path / "oracle"
    assert run("seq-oracle", "--steps", "4", "--dim", "32",
               "--out", str(out)) == 0
    lines = (out / "oracle_comparison.csv").read_text().splitlines()
    assert lines[0] == "n,support_index,closed_form_value,l2_discrepancy,pass"
    assert len(lines) == 6
    assert (out / "oracle_discrepancies.png").is_file()


def test_seq_oracle_step_zero_single_row(tmp_path):
    out = tmp_path / "o0"
    assert run("seq-oracle", "--steps", "0", "--dim", "24",
               "--out", str(out)) == 0
    lines = (out / "oracle_comparison.csv").read_text().splitlines()
    assert len(lines) == 2
    n, idx, value, _, ok = lines[1].split(",")
    params = ss.params_from(2, 1)
    assert (n, idx, ok) == ("0", "2", "true")
    assert float(value) == pytest.approx(float(params.b / 2), rel=1e-12)


def test_seq_oracle_dim_guard(tmp_path):
    assert run("seq-oracle", "--steps", "5", "--dim", "10",
               "--out", str(tmp_path / "x")) == 1


# ---------------------------------------------------------------------------
# diagnostics


def test_diagnostics_parseval_roundtrip(tmp_path, capsys):
    out = tmp_path / "run"
    assert run("deblur", "--phantom", "--size", "16", "--steps", "3",
               "--tau", "1e-6", "--max-iters", "2000", "--delta", "0",
               "--mode", "multiscale", "--out", str(out)) == 0
    diag = tmp_path / "diag"
    code = run("diagnostics", "parseval",
               "--trace", str(out / "trace_multiscale.json"),
               "--out", str(diag))
    assert code == 0
    captured = capsys.readouterr()
    assert "relative gap" in captured.out
    assert (diag / "parseval.csv").is_file()
    assert (diag / "parseval.png").is_file()


def test_diagnostics_missing_trace_is_io_error(tmp_path):
    assert run("diagnostics", "parseval", "--trace",
               str(tmp_path / "absent.json"), "--out", str(tmp_path / "d")) == 2


def test_sixteen_bit_pgm_input_is_io_error(tmp_path):
    deep = tmp_path / "deep.pgm"
    with open(deep, "wb") as fh:
        fh.write(b"P5\n2 2\n65535\n" + bytes(8))
    assert run("deblur", "--input", str(deep), "--out",
               str(tmp_path / "x")) == 2


# ---------------------------------------------------------------------------
# config file and misc


def test_config_file_defaults_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("steps = 2\ntau = 1e-2\nsize = 12\n")
    out1 = tmp_path / "from-file"
    assert run("deblur", "--phantom", "--mode", "multiscale",
               "--config", str(cfg), "--out", str(out1)) == 0
    meta = json.loads((out1 / "run.json").read_text())
    assert meta["config"]["steps"] == 2 and meta["config"]["size"] == 12
    out2 = tmp_path / "flag-wins"
    assert run("deblur", "--phantom", "--mode", "multiscale",
               "--config", str(cfg), "--steps", "1", "--out", str(out2)) == 0
    meta2 = json.loads((out2 / "run.json").read_text())
    assert meta2["config"]["steps"] == 1


def test_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_flag = 3\n")
    assert run("deblur", "--phantom", "--config", str(cfg),
               "--out", str(tmp_path / "x")) == 1


def test_unknown_subcommand_is_usage_error():
    assert run("frobnicate") == 1


def test_thread_cap_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MSDECOMP_THREADS", "1")
    monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
    out = tmp_path / "t"
    assert run("deblur", "--phantom", "--size", "8", "--steps", "1",
               "--tau", "1e-2", "--mode", "multiscale", "--out", str(out)) == 0
    import os
    assert os.environ.get("OMP_NUM_THREADS") == "1"
