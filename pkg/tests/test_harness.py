import csv
import io
import json
import math

import numpy as np
import pytest

from posterior_stability import bounds as B
from posterior_stability import cli
from posterior_stability.harness import (InputError, InstanceConfig, SweepConfig, UnknownExampleError,
                                         bounds_for, evidence_matched_prior, generate_instance, load_problem,
                                         reproduce, run_verification_sweep, sensitivity_csv, sensitivity_ok,
                                         sensitivity_sweep)
from posterior_stability.bayes import evidence
from posterior_stability.measure_core import validate_space


def test_instance_determinism():
    a, b = generate_instance(7, 2), generate_instance(7, 2)
    assert np.array_equal(a.space.coords, b.space.coords)
    for x, y in ((a.prior1, b.prior1), (a.prior2, b.prior2)):
        assert np.array_equal(x.weights, y.weights)
    assert np.array_equal(a.misfit1.values, b.misfit1.values)
    assert not np.array_equal(generate_instance(8, 2).space.coords, a.space.coords)


def test_philox_stream_is_the_documented_one():
    rng = np.random.Generator(np.random.Philox(key=11))
    coords = rng.random(5 * 2).reshape(5, 2)
    inst = generate_instance(11, 5)
    assert np.array_equal(inst.space.coords, coords)


def test_instance_validity():
    for seed in range(40):
        inst = generate_instance(seed, 2 + seed % 29)
        assert validate_space(inst.space) == []
        for m in (inst.prior1, inst.prior2):
            assert abs(math.fsum(m.weights) - 1) <= 1e-12
        assert inst.misfit1.values.min() == 0 and inst.misfit1.values.max() <= 5


def test_concentration_limit():
    inst = generate_instance(3, 2, InstanceConfig(concentration=1e12, sparsify=0.0))
    assert inst.prior1.weights == pytest.approx([0.5, 0.5], abs=1e-10)


def test_invalid_config():
    for cfg in (InstanceConfig(misfit_cap=-1), InstanceConfig(dim=0), InstanceConfig(sparsify=1.0)):
        with pytest.raises(InputError):
            generate_instance(0, 5, cfg)
    with pytest.raises(InputError):
        generate_instance(0, 1)
    with pytest.raises(InputError):
        generate_instance(0, 201)


def test_evidence_matched_prior():
    inst = generate_instance(4, 12, InstanceConfig(sparsify=0))
    mu2 = evidence_matched_prior(inst.prior1, inst.misfit1)
    assert evidence(mu2, inst.misfit1) == pytest.approx(evidence(inst.prior1, inst.misfit1), rel=1e-13)
    assert not np.allclose(mu2.weights, inst.prior1.weights)


def test_sweep_equal_misfits_trivial():
    rep = run_verification_sweep(SweepConfig(seeds=1, min_size=2, max_size=2))
    assert rep.passed
    assert rep.propositions["tv_misfit"].evaluated == 3


def test_sweep_detects_broken_upper_bound():
    def halved(mu, phi1, phi2, **kw):
        rep = B.tv_misfit_bounds(mu, phi1, phi2, **kw)
        for k, v in rep.upper_bounds.items():
            if not B.is_na(v):
                rep.upper_bounds[k] = 0.5 * v
        return rep

    rep = run_verification_sweep(SweepConfig(seeds=10, min_size=3, max_size=8), ops={"tv_misfit": halved})
    assert not rep.passed
    assert rep.failed_propositions() == ["tv_misfit"]
    assert rep.propositions["tv_misfit"].min_slack_upper < -1e-9


def test_sweep_report_is_deterministic_and_order_free():
    cfg = SweepConfig(seeds=12, min_size=2, max_size=10)
    a = run_verification_sweep(cfg).to_json()
    b = run_verification_sweep(cfg).to_json()
    assert a == b
    par = run_verification_sweep(SweepConfig(seeds=12, min_size=2, max_size=10, workers=2)).to_json()
    assert par == a
    doc = json.loads(a)
    assert doc["passed"] and set(doc["propositions"]) == set(B.PROPOSITIONS)


def test_sweep_toggles():
    rep = run_verification_sweep(SweepConfig(seeds=2, toggles={"w1_prior": False, "kl_joint": False}))
    assert "w1_prior" not in rep.propositions and "kl_joint" not in rep.propositions


def problem_doc():
    return {"points": [[0.0], [1.0], [2.5], [3.0]], "prior1": [0.25, 0.25, 0.25, 0.25],
            "prior2": [0.1, 0.2, 0.3, 0.4], "misfit1": [0.0, 1.0, 2.0, 0.5], "misfit2": [0.3, 0.2, 2.0, 0.0]}


def test_load_problem_validates():
    inst = load_problem(problem_doc())
    assert inst.space.n == 4 and inst.prior2 is not None
    bad = problem_doc()
    bad["prior1"] = [0.5, 0.5, 0.5, 0.5]
    with pytest.raises(InputError):
        load_problem(bad)
    bad = problem_doc()
    bad["distance_matrix"] = [[0]]
    with pytest.raises(InputError):
        load_problem(bad)
    bad = problem_doc()
    bad["misfit1"] = [0, 1]
    with pytest.raises(InputError):
        load_problem(bad)
    d = problem_doc()
    del d["points"]
    d["distance_matrix"] = [[0, 1, 2], [1, 0, 5], [2, 5, 0]]
    d["prior1"], d["misfit1"] = [1 / 3] * 3, [0, 0, 0]
    d.pop("prior2"), d.pop("misfit2")
    with pytest.raises(InputError, match="triangle"):
        load_problem(d)


def test_bounds_for_dispatch():
    inst = load_problem(problem_doc())
    assert bounds_for(inst, "tv", "misfit").proposition == "tv_misfit"
    assert bounds_for(inst, "w1", "prior").proposition == "w1_prior"
    assert bounds_for(inst, "kl", "prior").hypotheses["prior_only"]
    assert bounds_for(inst, "kl", "misfit").hypotheses["misfit_only"]
    with pytest.raises(InputError):
        bounds_for(inst, "tv", "joint")
    with pytest.raises(InputError):
        bounds_for(inst, "js", "misfit")


def test_sensitivity_rows():
    inst = generate_instance(5, 20, InstanceConfig(sparsify=0))
    rows = sensitivity_sweep(inst, range(9))
    assert sensitivity_ok(rows)
    zero = [r for r in rows if r["beta"] == 0 and r["metric"] == "tv"][0]
    assert zero["Z1"] == 1.0
    csv_rows = list(csv.reader(io.StringIO(sensitivity_csv(rows))))
    assert csv_rows[0] == ["beta", "Z1", "Z2", "metric", "actual", "best_lower", "best_upper", "applicable"]
    assert len(csv_rows) == 1 + 9 * 4


def test_sensitivity_zero_perturbation():
    inst = generate_instance(6, 10)
    inst.misfit2 = inst.misfit1
    rows = sensitivity_sweep(inst, [0, 1, 4])
    assert all(r["actual"] == 0 for r in rows)
    with pytest.raises(InputError):
        sensitivity_sweep(inst, [-1])


def test_sensitivity_prior_mode():
    inst = generate_instance(9, 15)
    rows = sensitivity_sweep(inst, [0, 2, 4], mode="prior")
    assert sensitivity_ok(rows)
    z = [r["Z1"] for r in rows if r["metric"] == "tv"]
    assert z[0] == 1.0 and z == sorted(z, reverse=True)


def test_reproduce_dispatch():
    assert reproduce("translated-uniform", tau=0.25).passed
    with pytest.raises(UnknownExampleError):
        reproduce("bogus")


# -- command line --------------------------------------------------------------------------

def run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr()


def test_cli_reproduce(capsys):
    code, out = run(["reproduce", "prior-evidence"], capsys)
    assert code == 0 and "PASS" in out.out
    code, out = run(["reproduce", "bogus"], capsys)
    assert code == 2 and "unknown example" in out.err


def test_cli_bounds_and_exit_codes(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(problem_doc()))
    out = tmp_path / "r.json"
    for metric in ("tv", "hellinger", "kl", "w1"):
        code, _ = run(["bounds", "--input", str(spec), "--metric", metric, "--perturbation", "misfit",
                       "--out", str(out)], capsys)
        assert code == 0
        assert json.loads(out.read_text())["actual"] >= 0
    code, _ = run(["bounds", "--input", str(spec), "--metric", "tv", "--perturbation", "joint"], capsys)
    assert code == 2
    code, _ = run(["bounds", "--input", str(tmp_path / "missing.json"), "--metric", "tv",
                   "--perturbation", "misfit"], capsys)
    assert code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["bounds", "--input", str(spec), "--metric", "x", "--perturbation", "misfit"])
    assert exc.value.code == 2


def test_cli_verify_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["verify", "--seeds", "6", "--max-size", "8", "--out", str(a)], capsys)[0] == 0
    assert run(["verify", "--seeds", "6", "--max-size", "8", "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert run(["verify", "--seeds", "0"], capsys)[0] == 2


def test_cli_sensitivity(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(problem_doc()))
    out = tmp_path / "s.csv"
    code, _ = run(["sensitivity", "--input", str(spec), "--beta-min", "0", "--beta-max", "8",
                   "--steps", "9", "--out", str(out)], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "beta,Z1,Z2,metric,actual,best_lower,best_upper,applicable"
    assert len(lines) == 1 + 36
    code, _ = run(["sensitivity", "--input", str(spec), "--steps", "0"], capsys)
    assert code == 2
