import json
import re

import numpy as np
import pytest

from turblab import runner
from turblab.acceptance import CRITERIA, evaluate
from turblab.checkpoint import read_checkpoint, write_checkpoint
from turblab.cli import main
from turblab.config import config_hash, load_config, validate
from turblab.convection.operators import KernelParams, kernel_sum
from turblab.errors import ConfigError, ContractViolation, SolverAbort
from turblab.fields import ChannelDomain, PeriodicBox, ScalarField, StripDomain, VectorField
from turblab.runner import EXIT_ABORT, EXIT_ACCEPT, EXIT_CONFIG, EXIT_OK, parse_axis, run, sweep
from turblab.series import DiagnosticsSeries, read_csv

COMBUSTION = {
    "kind": "combustion",
    "kappa": 0.02,
    "v0": 1.0,
    "profile": {"kind": "sine", "amplitude": 1.0},
    "t_end": 0.3,
    "grid": {"nx": 128, "ny": 8, "X": 4.0},
}
KERNEL = {"kind": "kernel", "p": 2, "L": 1.0, "eps": [0.05, 0.1], "x": [[0.0, 0.0], [0.1, 0.2]]}


def write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


@pytest.fixture(autouse=True)
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("TURBLAB_OUT", str(tmp_path / "out"))


def test_missing_key_is_named(tmp_path):
    cfg = dict(COMBUSTION)
    del cfg["kappa"]
    with pytest.raises(ConfigError) as exc:
        validate(cfg)
    assert exc.value.key == "kappa"
    assert main(["combustion", "run", str(write(tmp_path, "c.json", cfg))]) == EXIT_CONFIG


def test_malformed_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"kind": \n')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)
    assert main(["kernel", "run", str(p)]) == EXIT_CONFIG


def test_range_and_kind_checks(tmp_path):
    with pytest.raises(ConfigError):
        validate({**COMBUSTION, "kappa": -1.0})
    with pytest.raises(ConfigError):
        validate({**KERNEL, "p": 4})
    with pytest.raises(ConfigError):
        validate({"kind": "plasma"})
    assert main(["convection", "run", str(write(tmp_path, "k.json", KERNEL))]) == EXIT_CONFIG


def test_hash_ignores_key_order():
    a = {"x": 1, "y": {"b": 2, "a": 3}}
    b = {"y": {"a": 3, "b": 2}, "x": 1}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "x": 2})


def test_kernel_rows_match_library(tmp_path):
    rep = run(KERNEL, tmp_path / "k")
    assert rep.status == EXIT_OK
    header, rows = read_csv(tmp_path / "k" / "series.csv")
    assert header == ["x1", "x2", "eps", "K", "bound"]
    params = KernelParams(L=1.0, p=2)
    for x1, x2, eps, K, bound in rows:
        ref, comp = kernel_sum(params, np.array([x1, x2]), eps=eps)
        assert K == float(ref) and bound == float(comp)


def test_runs_are_deterministic(tmp_path):
    a = run(COMBUSTION, tmp_path / "a")
    b = run(COMBUSTION, tmp_path / "b")
    assert a.status == b.status == EXIT_OK
    for name in ("series.csv", "summary.csv", "metadata.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_default_output_directory_uses_hash(tmp_path):
    rep = run(KERNEL)
    cfg = validate(KERNEL)
    assert rep.outdir == tmp_path / "out" / f"kernel_{cfg.hash}"
    meta = json.loads((rep.outdir / "metadata.json").read_text())
    assert meta["config_hash"] == cfg.hash


def test_sweep_merges_child_summaries(tmp_path):
    rows, failures = sweep(COMBUSTION, "profile.amplitude", [2.0, 1.0], tmp_path / "s", workers=2)
    assert not failures and len(rows) == 2
    assert [r[0] for r in rows] == [1.0, 2.0]
    for r in rows:
        _, child = read_csv(tmp_path / "s" / f"profile.amplitude={r[0]}" / "summary.csv")
        # avg_V is nan here because t_end is shorter than tau0
        np.testing.assert_array_equal(r[1:], child[0])


def test_serial_and_concurrent_sweeps_agree(tmp_path):
    sweep(KERNEL, "p", [1, 2, 3], tmp_path / "serial", workers=1)
    sweep(KERNEL, "p", [3, 1, 2], tmp_path / "pool", workers=3)
    assert (tmp_path / "serial" / "summary.csv").read_bytes() == (tmp_path / "pool" / "summary.csv").read_bytes()


def test_sweep_validation():
    assert parse_axis("profile.amplitude=1,2.5") == ("profile.amplitude", [1, 2.5])
    with pytest.raises(ConfigError):
        parse_axis("amplitude")
    with pytest.raises(ConfigError):
        sweep(KERNEL, "p", [1])
    with pytest.raises(ConfigError):
        sweep(COMBUSTION, "kappa", [0.01, float("nan")])


def test_sweep_failures_are_listed(tmp_path):
    rows, failures = sweep(KERNEL, "p", [2, 7], tmp_path / "f")
    assert len(rows) == 1 and len(failures) == 1
    assert failures[0][0] == 7 and failures[0][1] == EXIT_CONFIG
    assert (tmp_path / "f" / "failures.csv").exists()


def test_cli_run_and_sweep_exit_codes(tmp_path, capsys):
    p = write(tmp_path, "k.json", KERNEL)
    assert main(["kernel", "run", str(p), "--out", str(tmp_path / "r")]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["rows"] == 4
    assert main(["sweep", str(p), "--axis", "p=1,3", "--out", str(tmp_path / "sw")]) == EXIT_OK
    assert main(["sweep", str(p), "--axis", "p=1,9", "--out", str(tmp_path / "sw2")]) == EXIT_ABORT


def test_solver_abort_reports_checkpoint(tmp_path, monkeypatch, capsys):
    def blow_up(cfg, outdir):
        write_checkpoint(outdir / "u_00000.tlb", ScalarField(PeriodicBox(2, 8), np.zeros((8, 8))))
        write_checkpoint(outdir / "u_00010.tlb", ScalarField(PeriodicBox(2, 8), np.zeros((8, 8))))
        raise SolverAbort("non-finite vorticity")

    monkeypatch.setitem(runner.EXPERIMENTS, "kernel", blow_up)
    rep = run(KERNEL, tmp_path / "abort")
    assert rep.status == EXIT_ABORT
    assert "non-finite vorticity" in rep.message
    assert rep.checkpoint.endswith("u_00010.tlb")
    p = write(tmp_path, "k.json", KERNEL)
    assert main(["kernel", "run", str(p), "--out", str(tmp_path / "again")]) == EXIT_ABORT
    assert "u_00010.tlb" in capsys.readouterr().err


def test_tampered_tolerance_names_the_criterion(tmp_path, capsys):
    lp = next(c for c in CRITERIA if c.id == 10)
    ok = evaluate(lp)
    assert ok.passed
    bad = evaluate(lp, overrides={10: {"leak": -1.0}})
    assert not bad.passed
    assert re.match(r"\[FAIL\]\s+10 LP exactness", bad.line())
    assert main(["accept", "kernel", "--tol", "9.slope=-1", "--out", str(tmp_path / "acc")]) == EXIT_ACCEPT
    assert re.search(r"\[FAIL\]\s+9 kernel decay", capsys.readouterr().out)
    blob = json.loads((tmp_path / "acc" / "acceptance.json").read_text())
    assert blob["passed"] is False
    assert main(["accept", "kernel", "--tol", "9.slope"]) == EXIT_CONFIG


@pytest.mark.parametrize(
    "fld",
    [
        lambda: ScalarField(PeriodicBox(2, 8, side=3.0), np.arange(64.0).reshape(8, 8)),
        lambda: VectorField(PeriodicBox(3, 8), np.random.default_rng(0).standard_normal((3, 8, 8, 8))),
        lambda: ScalarField(StripDomain(X=2.0, nx=6, ny=4), np.ones((6, 4))),
        lambda: ScalarField(ChannelDomain(L=2.0, nx=8, nz=4), np.linspace(0, 1, 40).reshape(8, 5)),
    ],
)
def test_checkpoint_round_trip(tmp_path, fld):
    f = fld()
    write_checkpoint(tmp_path / "c.tlb", f, {"t": 0.5})
    g, meta = read_checkpoint(tmp_path / "c.tlb")
    assert type(g) is type(f)
    assert g.domain == f.domain
    assert np.array_equal(g.values, f.values)
    assert meta == {"t": "0.5"}


def test_checkpoint_rejects_corruption(tmp_path):
    p = tmp_path / "c.tlb"
    write_checkpoint(p, ScalarField(PeriodicBox(2, 8), np.zeros((8, 8))))
    raw = p.read_bytes()
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ContractViolation):
        read_checkpoint(p)
    p.write_bytes(raw[:-8])
    with pytest.raises(ContractViolation):
        read_checkpoint(p)


def test_series_contract_and_average(tmp_path):
    s = DiagnosticsSeries(["a"])
    for t in (0.0, 1.0, 2.0):
        s.append(t, a=t)
    assert s.time_average("a") == pytest.approx(1.0)
    assert s.time_average("a", 1.0) == pytest.approx(1.5)
    with pytest.raises(ContractViolation):
        s.append(2.0, a=0.0)
    with pytest.raises(ContractViolation):
        s.append(3.0)
    s.to_csv(tmp_path / "s.csv", "abc")
    header, rows = read_csv(tmp_path / "s.csv")
    assert header == ["t", "a"] and rows[-1] == [2.0, 2.0]
    assert (tmp_path / "s.csv").read_text().startswith("# config_hash: abc")
