import csv
import json

import numpy as np
import pytest
import yaml

from afpo.cli import generate_pool, main
from afpo.config import load_config, parse_config, ConfigError

from pools import CP4, EXP8, VARIABILITY_BASE, VARIABILITY_CASES

def cp_entry(lam, r, q, disutility):
    return {
        "loss": {"compound_poisson": {"lambda": lam, "severity": {"negbinom": {"r": r, "q": q}}}},
        "disutility": disutility,
    }


def write(path, doc):
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path


@pytest.fixture
def crra4(tmp_path):
    doc = {"participants": [cp_entry(l, r, q, {"crra": {"sigma": 2}}) for l, r, q in CP4]}
    return write(tmp_path / "crra4.yaml", doc)


def variability_doc(case):
    params = list(VARIABILITY_BASE)
    params[1] = (0.4, *VARIABILITY_CASES[case])
    return {"participants": [cp_entry(l, int(r), float(q), {"crra": {"sigma": 2}}) for l, r, q in params]}


def read_table(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_solve_writes_linear_rule(crra4, capsys):
    assert main(["solve", str(crra4), "--no-figures"]) == 0
    header, data = read_table(crra4.parent / "crra4_rule.csv")
    assert header == ["s", "p1", "p2", "p3", "p4"]
    s, h = data[:, 0], data[:, 1:]
    assert np.all(np.abs(h.sum(axis=1) - s) <= 1e-8 * max(1, s.max()))
    report = json.loads((crra4.parent / "crra4_report.json").read_text())
    assert report["converged"] and report["iterations"] <= 2
    means = np.array(report["expected_loss"])
    assert np.max(np.abs(h - np.outer(s, means / means.sum()))) <= 1e-6 * s.max()
    assert "converged after" in capsys.readouterr().out


def test_solve_outputs_and_figures(crra4):
    assert main(["solve", str(crra4), "--emit-cdf", "--figures", str(crra4.parent / "figs")]) == 0
    for name in ("crra4_rules.png", "crra4_convergence.png", "crra4_pmf.png"):
        assert (crra4.parent / "figs" / name).stat().st_size > 0
    with open(crra4.parent / "crra4_cdf.csv") as fh:
        rows = list(csv.DictReader(fh))
    last = {r["participant"]: float(r["F"]) for r in rows}
    assert sorted(last) == ["p1", "p2", "p3", "p4"]
    assert all(abs(v - 1) < 1e-10 for v in last.values())


def test_solve_deterministic_except_runtime(crra4):
    outputs = []
    for _ in range(2):
        assert main(["solve", str(crra4), "--no-figures"]) == 0
        rep = json.loads((crra4.parent / "crra4_report.json").read_text())
        rep.pop("runtime")
        outputs.append(((crra4.parent / "crra4_rule.csv").read_bytes(), rep))
    assert outputs[0] == outputs[1]


def test_exp_pool_smallest_weight(tmp_path):
    doc = {"participants": [cp_entry(l, r, q, {"exp": {"gamma": g}}) for l, q, r, g in EXP8]}
    cfg = write(tmp_path / "exp8.yaml", doc)
    assert main(["solve", str(cfg), "--no-figures"]) == 0
    alpha = np.array(json.loads((tmp_path / "exp8_report.json").read_text())["alpha"])
    assert np.argmin(alpha) == 1


def test_output_paths_from_config(crra4, tmp_path):
    doc = yaml.safe_load(crra4.read_text())
    doc["outputs"] = {"rule_table": "out/r.csv", "report": "out/rep.json"}
    cfg = write(tmp_path / "paths.yaml", doc)
    assert main(["solve", str(cfg), "--no-figures"]) == 0
    assert (tmp_path / "out" / "r.csv").exists() and (tmp_path / "out" / "rep.json").exists()


def test_not_converged_exit_code(crra4, tmp_path):
    doc = {"participants": [cp_entry(l, r, q, {"exp": {"gamma": g}}) for l, q, r, g in EXP8]}
    cfg = write(tmp_path / "exp8.yaml", doc)
    assert main(["solve", str(cfg), "--max-iter", "1", "--no-figures"]) == 2
    assert not json.loads((tmp_path / "exp8_report.json").read_text())["converged"]


def test_single_participant_rejected(tmp_path, capsys):
    cfg = write(tmp_path / "one.yaml", {"participants": [cp_entry(0.1, 1, 0.4, {"crra": {"sigma": 2}})]})
    assert main(["solve", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: participants") and "at least 2" in err


@pytest.mark.parametrize(
    "bad, where",
    [
        ({"loss": {"pmf": [0.5, 0.5]}, "disutility": {"crra": {"sigma": -1}}}, "participants[1]"),
        ({"loss": {"gamma": {"shape": 1}}, "disutility": {"exp": {"gamma": 1}}}, "participants[1]"),
        ({"loss": {"pmf": [0.5, 0.5]}, "disutility": {"log": {}}}, "participants[1]"),
    ],
)
def test_schema_errors_name_the_field(tmp_path, capsys, bad, where):
    doc = {"participants": [cp_entry(0.1, 1, 0.4, {"crra": {"sigma": 2}}), bad]}
    assert main(["solve", str(write(tmp_path / "bad.yaml", doc))]) == 1
    assert where in capsys.readouterr().err


def test_bad_pmf_and_duplicates():
    with pytest.raises(ConfigError, match="unique"):
        parse_config({"participants": [
            {"name": "a", "loss": {"pmf": [1]}, "disutility": {"crra": {"sigma": 1}}},
            {"name": "a", "loss": {"pmf": [1]}, "disutility": {"crra": {"sigma": 1}}},
        ]})


def test_missing_file(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "nope.yaml")]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_yaml_reads_exponent_floats(tmp_path):
    text = ("solver: {epsilon: 1e-14}\n"
            "participants:\n"
            "  - {loss: {pmf: [0.5, 0.5]}, disutility: {crra: {sigma: 2}}}\n"
            "  - {loss: {pmf: [0.2, 0.8]}, disutility: {crra: {sigma: 2}}}\n")
    path = tmp_path / "e.yaml"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.solver.epsilon == 1e-14 and [p["name"] for p in cfg.participants] == ["p1", "p2"]


# -- compare -----------------------------------------------------------------
def test_compare_identical(tmp_path):
    a = write(tmp_path / "a.yaml", variability_doc("baseline"))
    out = tmp_path / "cmp.json"
    assert main(["compare", str(a), str(a), "--out", str(out), "--no-figures"]) == 0
    res = json.loads(out.read_text())
    assert res["aggregate"]["verdict"] == "equal"
    assert [p["verdict"] for p in res["participants"]] == ["equal"] * 3


def test_compare_ordered(tmp_path):
    a = write(tmp_path / "base.yaml", variability_doc("baseline"))
    b = write(tmp_path / "c3.yaml", variability_doc("case3"))
    out = tmp_path / "cmp.json"
    assert main(["compare", str(a), str(b), "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["aggregate"]["verdict"] == "cx-larger"
    assert [p["verdict"] for p in res["participants"]] == ["cx-larger"] * 3
    assert res["aggregate"]["lattice_locations"] == [8.0]
    assert (tmp_path / "cmp_p1_cdf.png").exists()


def test_compare_mean_mismatch(tmp_path, capsys, crra4):
    a = write(tmp_path / "base.yaml", variability_doc("baseline"))
    assert main(["compare", str(a), str(crra4), "--out", str(tmp_path / "x.json")]) == 1
    assert "error:" in capsys.readouterr().err


# -- gen -----------------------------------------------------------------------
def test_gen_is_reproducible(tmp_path):
    paths = [tmp_path / f"g{i}.yaml" for i in range(3)]
    assert main(["gen", "--seed", "7", "--n", "20", "--out", str(paths[0])]) == 0
    assert main(["gen", "--seed", "7", "--n", "20", "--out", str(paths[1])]) == 0
    assert main(["gen", "--seed", "8", "--n", "20", "--out", str(paths[2])]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes() != paths[2].read_bytes()
    cfg = load_config(paths[0])
    assert len(cfg.participants) == 20


def test_gen_marginals():
    n = 10_000
    parts = generate_pool(11, n)["participants"]
    lam = np.array([p["loss"]["compound_poisson"]["lambda"] for p in parts])
    sev = [p["loss"]["compound_poisson"]["severity"]["negbinom"] for p in parts]
    r = np.array([s["r"] for s in sev])
    q = np.array([s["q"] for s in sev])
    g = np.array([p["disutility"]["exp"]["gamma"] for p in parts])
    # population moments of the generating laws
    for x, mean, sd in [(lam, 0.1, 0.1), (r, 3.5, np.sqrt(35 / 12)), (q, 0.45, 0.1 / np.sqrt(12)),
                        (g, 5.5, np.sqrt(99 / 12))]:
        assert abs(x.mean() - mean) <= 3 * sd / np.sqrt(n)
    assert set(r) == set(range(1, 7)) and set(g) == set(range(1, 11))
    assert q.min() >= 0.4 and q.max() <= 0.5


def test_gen_round_trip_solves(tmp_path):
    path = tmp_path / "g.yaml"
    assert main(["gen", "--seed", "3", "--n", "6", "--out", str(path)]) == 0
    assert main(["solve", str(path), "--no-figures"]) == 0
    assert json.loads((tmp_path / "g_report.json").read_text())["converged"]


def test_gen_rejects_tiny_pool(tmp_path):
    assert main(["gen", "--seed", "1", "--n", "1", "--out", str(tmp_path / "x.yaml")]) == 1


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "afpo", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "solve" in res.stdout


@pytest.mark.parametrize("name", ["four_crra", "three_baseline", "three_spread", "mixed"])
def test_shipped_configs_build(name):
    from pathlib import Path

    from afpo.config import build_pool

    pool = build_pool(load_config(Path(__file__).parents[1] / "configs" / f"{name}.yaml"))
    assert pool.n >= 3
