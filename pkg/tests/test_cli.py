import csv
import json

import numpy as np
import pytest

from layercraft.cli import ConfigError, main, parse_config

REF_F = "sin(pi*x)*sin(pi*y)*x*y"


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def base(**problem):
    prob = {"b": [1, 1], "c": 1, "f": REF_F, "epsilon": 0.125}
    prob.update(problem)
    return {"problem": prob, "mesh": {"kind": "shishkin", "N": 32}}


def run(tmp_path, sub, cfg, *extra):
    out = tmp_path / sub
    return main([sub, "--config", write(tmp_path, cfg), "--out", str(out), "--quiet", *extra]), out


def test_solve_full_zero_rhs(tmp_path):
    code, out = run(tmp_path, "solve-full", base(f="0"))
    assert code == 0
    rows = list(csv.DictReader(open(out / "field.csv")))
    assert len(rows) == 33 * 33 and all(float(r["psi"]) == 0.0 for r in rows)
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["eps"] == 0.125


def test_csv_uses_lf_and_full_precision(tmp_path):
    code, out = run(tmp_path, "solve-full", base())
    raw = (out / "field.csv").read_bytes()
    assert b"\r\n" not in raw
    vals = [r["psi"] for r in csv.DictReader(open(out / "field.csv"))]
    assert any(len(v.lstrip("-").replace(".", "").split("e")[0]) >= 15 for v in vals)


def test_unknown_key_rejected(tmp_path):
    cfg = base()
    cfg["problem"]["bogus"] = 1
    assert run(tmp_path, "solve-full", cfg)[0] == 1
    cfg = base()
    cfg["extra"] = {}
    assert run(tmp_path, "solve-full", cfg)[0] == 1


@pytest.mark.parametrize("patch", [
    {"b": [1, 0]}, {"c": "one"}, {"f": "x +"}, {"f": "z"}, {"epsilon": 2.0},
    {"epsilon_list": [0.1, 0.2, 0.05]}, {"g1": {"x=2": "0"}},
])
def test_bad_problem_values(tmp_path, patch):
    assert run(tmp_path, "solve-full", base(**patch))[0] == 1


def test_parse_config_defaults():
    cfg = parse_config(base())
    assert cfg.variant == "with-compat" and cfg.formats == ("csv", "json")
    with pytest.raises(ConfigError):
        parse_config({"problem": {"b": [1, 1], "c": 1}})


def test_missing_config_file(tmp_path):
    assert main(["solve-full", "--config", str(tmp_path / "nope.json")]) == 1
    assert main(["frobnicate", "--config", "x"]) == 1


def test_check_compat_exit_codes(tmp_path):
    code, out = run(tmp_path, "check-compat", base(f="1"))
    assert code == 2
    rep = json.loads((out / "compat.json").read_text())
    assert rep["passed"] is False


def test_expand_refuses_incompatible(tmp_path):
    cfg = base(f="1")
    code, out = run(tmp_path, "expand", cfg)
    assert code == 2 and (out / "compat.json").exists()


def test_expand_no_compat_with_profiles(tmp_path):
    cfg = base()
    cfg["expansion"] = {"variant": "no-compat"}
    cfg["outputs"] = {"emit_profiles": True}
    code, out = run(tmp_path, "expand", cfg)
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"expansion.json", "fields.csv", "profile_v1.csv", "profile_w3.csv", "profile_z2.csv"} <= names


def test_verify_residual(tmp_path):
    cfg = base()
    cfg["expansion"] = {"variant": "no-compat"}
    code, out = run(tmp_path, "verify-residual", cfg)
    assert code == 0
    rep = json.loads((out / "residual.json").read_text())
    assert {"lr_l2", "dn_l2_gamma", "err_linf"} <= set(rep["norms"])


def test_stability_command(tmp_path):
    assert run(tmp_path, "stability", base())[0] == 0


def test_mms_command(tmp_path):
    cfg = base(epsilon=0.5, f="0", psi_star="0")
    cfg["mms"] = {"N_list": [8, 16]}
    code, out = run(tmp_path, "mms", cfg)
    assert code == 0
    assert json.loads((out / "mms.json").read_text())["rows"][0]["err_linf"] == 0.0


def test_solve_reduced_data(tmp_path):
    cfg = base(f="0", boundary={"phi1": "y", "kappa2": "x", "phi2": "y", "kappa1": "0*x", "phi3": "0", "kappa3": "0"})
    code, out = run(tmp_path, "solve-reduced", cfg)
    # psi = x*y would need phi3 = y and kappa3 = x; the corner check rejects this data
    assert code == 1
    cfg["problem"]["boundary"].update({"phi1": "0", "kappa2": "x", "phi2": "y", "phi3": "y", "kappa3": "x"})
    code, out = run(tmp_path, "solve-reduced", cfg)
    assert code == 0
    rows = list(csv.DictReader(open(out / "field.csv")))
    err = max(abs(float(r["psi"]) - float(r["x"]) * float(r["y"])) for r in rows)
    assert err < 1e-10


def test_sweep_deterministic_across_jobs(tmp_path, monkeypatch):
    cfg = base(epsilon_list=[0.25, 0.125, 0.0625])
    cfg["problem"].pop("epsilon")
    cfg["expansion"] = {"variant": "no-compat"}
    c1, o1 = run(tmp_path, "sweep", cfg)
    monkeypatch.setenv("LAYERCRAFT_JOBS", "2")
    out2 = tmp_path / "sweep2"
    c2 = main(["sweep", "--config", write(tmp_path, cfg, "c2.json"), "--out", str(out2), "--quiet"])
    assert c1 == c2 and c1 in (0, 2)
    for name in ("sweep.csv", "sweep.json"):
        assert (o1 / name).read_bytes() == (out2 / name).read_bytes()
