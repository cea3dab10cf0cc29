import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from wavekin import cli
from wavekin.config import ExperimentConfig
from wavekin.lattice import UsageError
from wavekin.manifest import ResultManifest
from wavekin.pipelines import export_plot_data, run


def write_config(tmp_path, name, body):
    body = dict(body)
    body["output"] = str(tmp_path / name)
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(body))
    return path


WKE = {"experiment": "wke", "seed": 0, "profile": {"kind": "gaussian", "amplitude": 1.0, "width": 0.6},
       "kinetic": {"d": 2, "k_max": 2.0, "n": 9, "beta": [1.0, 1.3], "epsilon": 0.6,
                   "delta": {"kinetic": 0.1}, "steps": 8, "snapshot_every": 4}}

LINEAR = {"experiment": "compare-moments", "seed": 2, "torus": {"d": 2, "L": 4.0, "K": 3},
          "law": {"kind": "gaussian"}, "profile": {"kind": "gaussian", "amplitude": 1.0, "width": 0.5},
          "ensemble": {"M": 400, "batch": 100, "nonlinear": False, "t_end": {"microscopic": 1.0},
                       "n_times": 2, "n_batches": 4, "store_realizations": 1}}

FAILING = {"experiment": "acceptance", "checks": {"names": ["hierarchy"],
                                                  "params": {"hierarchy": {"n": 9, "levels": [16, 8]}}}}


def find_metric(d, key):
    if isinstance(d, dict):
        if key in d:
            return d[key]
        for v in d.values():
            r = find_metric(v, key)
            if r is not None:
                return r
    return None


# --- config ------------------------------------------------------------------------------------

def test_config_round_trip():
    cfg = ExperimentConfig.from_dict(dict(WKE, output="x"))
    again = ExperimentConfig.parse(cfg.dump())
    assert again == cfg and again.hash() == cfg.hash()


def test_hash_ignores_output_only():
    a = ExperimentConfig.from_dict(dict(WKE, output="a"))
    b = ExperimentConfig.from_dict(dict(WKE, output="b"))
    c = ExperimentConfig.from_dict(dict(WKE, output="a", seed=1))
    assert a.hash() == b.hash() != c.hash()


@pytest.mark.parametrize("raw,word", [
    (dict(WKE, colour=1), "colour"),
    (dict(WKE, kinetic=dict(WKE["kinetic"], stepz=3)), "stepz"),
    ({"experiment": "nope"}, "experiment"),
    (dict(WKE, kinetic=dict(WKE["kinetic"], delta=0.1)), "kinetic"),
    (dict(WKE, kinetic=dict(WKE["kinetic"], delta={"seconds": 0.1})), "kinetic"),
    (dict(WKE, kinetic=dict(WKE["kinetic"], n=10)), "odd"),
    (dict(WKE, torus={"beta": "generic:x"}), "beta"),
])
def test_config_errors_name_the_problem(raw, word):
    with pytest.raises(UsageError, match=word):
        ExperimentConfig.from_dict(raw)


def test_time_units_convert():
    cfg = ExperimentConfig.from_dict({"experiment": "nls-ensemble", "torus": {"d": 2, "L": 4.0}})
    tk = cfg.scaling().t_kin
    assert cfg.microscopic_time({"kinetic": 0.5}) == pytest.approx(0.5 * tk)
    assert cfg.kinetic_time({"microscopic": tk}) == pytest.approx(1.0)
    assert cfg.kinetic_time(None) is None


def test_generic_beta_is_reproducible():
    cfg = ExperimentConfig.from_dict({"experiment": "wke", "torus": {"d": 3, "beta": "generic:4"}})
    assert cfg.beta() == cfg.beta() and len(set(cfg.beta())) == 3


# --- pipelines and manifests -------------------------------------------------------------------

def test_wke_run_and_rerun_hash(tmp_path):
    path = write_config(tmp_path, "wke", WKE)
    m1 = run(path)
    assert m1.passed and m1.validate() == []
    m2 = run(path)
    assert m2.content_hash() == m1.content_hash()
    loaded = ResultManifest.load(tmp_path / "wke")
    assert loaded.content_hash() == m1.content_hash()


def test_tampered_output_detected(tmp_path):
    path = write_config(tmp_path, "wke", WKE)
    man = run(path)
    f = tmp_path / "wke" / man.select("wke-summary")[0].path
    f.write_text(f.read_text() + "0,0\n")
    assert ResultManifest.load(tmp_path / "wke").validate()
    with pytest.raises(UsageError):
        export_plot_data(tmp_path / "wke" / "manifest.json", "summary")


def test_linear_compare_and_resume(tmp_path):
    path = write_config(tmp_path, "lin", LINEAR)
    m1 = run(path)
    assert m1.passed and m1.checks.get("linear-within-5-stderr") is True
    assert find_metric(m1.metrics, "resumed_batches") == 0
    (tmp_path / "lin" / "manifest.json").unlink()
    m2 = run(path)
    assert find_metric(m2.metrics, "resumed_batches") == 4
    assert m2.content_hash() == m1.content_hash()


def test_diagrams_tree_counts(tmp_path):
    path = write_config(tmp_path, "dg", {"experiment": "diagrams-verify",
                                        "diagrams": {"max_scale": 5, "n_confluence": 20, "n_roundtrip": 20,
                                                     "molecules": False}})
    man = run(path)
    assert man.passed
    rows = (tmp_path / "dg" / "diagrams" / "tree_counts.csv").read_text().splitlines()
    assert [int(r.split(",")[1]) for r in rows[2:]] == [1, 1, 3, 12, 55, 273]


def test_export_selectors(tmp_path):
    man = run(write_config(tmp_path, "wke", WKE))
    mpath = tmp_path / "wke" / "manifest.json"
    snaps = export_plot_data(mpath, "n(t,k)", tmp_path / "ex")
    assert len(snaps) == len(man.select("kinetic-snapshot"))
    assert snaps[0].read_text().splitlines()[0] == "t,k,n"
    (summary,) = export_plot_data(mpath, "summary", tmp_path / "ex")
    assert summary.name == "summary.csv"
    with pytest.raises(UsageError, match="matches nothing"):
        export_plot_data(mpath, "density", tmp_path / "ex")
    with pytest.raises(UsageError, match="unknown selector"):
        export_plot_data(mpath, "bogus", tmp_path / "ex")


# --- command line ------------------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, capsys):
    ok = write_config(tmp_path, "cu", {"experiment": "cumulants-verify", "cumulants": {"n_max": 8, "n_random": 50}})
    assert cli.main(["run", str(ok)]) == 0
    assert "PASS cumulants" in capsys.readouterr().out
    bad = write_config(tmp_path, "fail", FAILING)
    assert cli.main(["run", str(bad)]) == 1
    assert "FAIL hierarchy" in capsys.readouterr().out
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 2
    broken = tmp_path / "broken.yaml"
    broken.write_text("experiment: wke\nkinetic: {stepz: 3}\n")
    assert cli.main(["run", str(broken)]) == 2
    assert cli.main(["verify", "no-such-suite"]) == 2
    assert cli.main(["export", str(tmp_path / "cu" / "manifest.json"), "moments"]) == 2


def test_cli_verify_json(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert cli.main(["verify", "cumulants", "--quick", "--json", str(out)]) == 0
    assert capsys.readouterr().out.startswith("PASS cumulants")
    data = json.loads(out.read_text())
    assert data[0]["name"] == "cumulants" and data[0]["passed"] is True


def test_cli_argparse_errors_exit_two():
    proc = subprocess.run([sys.executable, "-m", "wavekin", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
    proc = subprocess.run([sys.executable, "-m", "wavekin", "export", "only-one-arg"], capture_output=True, text=True)
    assert proc.returncode == 2
