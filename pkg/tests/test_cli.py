import numpy as np
import pytest

from coupledvi import cli, kvtext
from coupledvi.problem_io import ProblemFileError, load_problem

TOY = """\
[dims]
n = 1
m = 1
[K]
type = box
lower = -1
upper = 1
[Lambda]
type = box
lower = -1
upper = 1
[B]
kind = bilinear
matrix = 1
[chi]
kind = {chi}
matrix = {a}
[psi]
kind = zero
[data]
f = 0.5
g = 0
"""

SP = """\
[special]
variant = SP
a = 1
b = 1
f = 1
[Lambda]
type = box
lower = 0
upper = 1
"""


@pytest.fixture
def files(tmp_path):
    paths = {
        "toy": tmp_path / "toy.ini",
        "neg": tmp_path / "neg.ini",
        "sp": tmp_path / "sp.ini",
    }
    paths["toy"].write_text(TOY.format(chi="operator_linear", a="1"))
    paths["neg"].write_text(TOY.format(chi="operator_linear", a="-1"))
    paths["sp"].write_text(SP)
    return paths


def outcome(out):
    return kvtext.loads((out / "outcome.txt").read_text())


def test_load_problem_files(files):
    sys = load_problem(files["toy"])
    assert sys.n == 1 and sys.f[0] == 0.5 and sys.K.variant == "box"
    sp = load_problem(files["sp"])
    assert sp.label == "SP" and "a" in sp.meta


def test_problem_file_errors(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text(TOY.format(chi="cubic", a="1"))
    with pytest.raises(ProblemFileError, match=r"\[chi\]"):
        load_problem(bad)
    bad.write_text(TOY.format(chi="bilinear", a="1; 2"))
    with pytest.raises(ProblemFileError, match="shape"):
        load_problem(bad)
    bad.write_text("[dims]\nn = 1\n")
    with pytest.raises(ProblemFileError, match="m"):
        load_problem(bad)


def test_matrix_file(tmp_path):
    (tmp_path / "a.csv").write_text("2,0\n0,3\n")
    p = tmp_path / "p.ini"
    p.write_text("[dims]\nn = 2\nm = 1\n[K]\ntype = whole_space\n[Lambda]\ntype = box\nlower = 0\nupper = 1\n"
                 "[B]\nkind = bilinear\nmatrix = 1, 1\n[chi]\nkind = bilinear\nmatrix_file = a.csv\n"
                 "[data]\nf = 0.5, 0.5\n")
    sys = load_problem(p)
    assert sys.chi(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == pytest.approx(5.0)
    assert sys.psi.kind == "zero" and sys.g[0] == 0.0


def test_empty_config_missing_task(tmp_path, capsys):
    cfg = tmp_path / "empty.ini"
    cfg.write_text("")
    assert cli.main(["--config", str(cfg)]) == 1
    assert "missing task" in capsys.readouterr().err


def test_solve_brute_exit_zero(files, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["--out", str(out), "solve", "--problem", str(files["toy"]), "--solver", "brute"]) == 0
    kv = outcome(out)
    assert abs(float(kv["u"])) < 1e-3 and abs(float(kv["lambda"]) - 0.5) < 1e-3
    assert (out / "manifest.txt").exists() and (out / "witness.csv").exists()


def test_probe_counterexample_exit_two(files, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["--out", str(out), "probe", "--problem", str(files["neg"]), "--hypothesis", "H_chi2_i"]) == 2
    assert (out / "witness_chi_H2_monotone_pair.csv").exists()
    assert "verdict = counterexample" in (out / "probe_chi_H2_monotone_pair.txt").read_text()


def test_config_file_drives_run(files, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"[run]\ntask = solve\nproblem = {files['sp']}\nsolver = uzawa\n")
    out = tmp_path / "o"
    assert cli.main(["--config", str(cfg), "--out", str(out)]) == 0
    manifest = kvtext.loads((out / "manifest.txt").read_text())
    assert manifest["config.solver"] == "uzawa"
    assert manifest["config.resolution"] == "201"  # defaulted values are echoed
    assert float(outcome(out)["lambda"]) == pytest.approx(1.0)


def test_input_errors_exit_one(files, tmp_path):
    out = str(tmp_path / "o")
    assert cli.main(["--out", out, "solve"]) == 1
    assert cli.main(["--out", out, "solve", "--problem", str(tmp_path / "nope.ini")]) == 1
    assert cli.main(["--out", out, "solve", "--problem", str(files["toy"]), "--solver", "uzawa"]) == 1
    assert cli.main(["--out", out, "contact", "--phi", "cubic:2"]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\ntask = dance\n")
    assert cli.main(["--config", str(bad)]) == 1


def test_reproducible_artifacts(files, tmp_path):
    runs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        cli.main(["--out", str(out), "--trace", "solve", "--problem", str(files["toy"]), "--solver", "extragrad"])
        runs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.txt"})
    assert runs[0] == runs[1] and "trace.csv" in runs[0]


def test_trace_and_residual_series(files, tmp_path):
    out = tmp_path / "o"
    cli.main(["--out", str(out), "--trace", "solve", "--problem", str(files["toy"]), "--solver", "extragrad"])
    _, rows = kvtext.read_csv(out / "residual.csv")
    res = np.array([float(r[1]) for r in rows])
    tail = res[len(res) // 4:]
    assert np.all(np.diff(tail) <= 1e-12 * (1 + tail[:-1]))


def test_ball_run_radius_series(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[dims]\nn = 1\nm = 1\n[K]\ntype = whole_space\n[Lambda]\ntype = whole_space\n"
                 "[B]\nkind = bilinear\nmatrix = 1\n[chi]\nkind = operator_linear\nmatrix = 1\n"
                 "[psi]\nkind = operator_linear\nmatrix = 1\n[data]\nf = 0.5\ng = 0\n")
    out = tmp_path / "o"
    assert cli.main(["--out", str(out), "solve", "--problem", str(p), "--solver", "ball", "--r0", "0.1"]) == 0
    _, rows = kvtext.read_csv(out / "radius.csv")
    radii = np.array([float(r[0]) for r in rows])
    assert np.all(np.diff(radii) > 0) and radii.size == 3


def test_contact_and_oracle(tmp_path):
    out = tmp_path / "c"
    assert cli.main(["--out", str(out), "contact", "--mesh", "unit_square:4", "--g", "0.5"]) == 0
    _, rows = kvtext.read_csv(out / "field.csv")
    assert len(rows) == 25
    header, _ = kvtext.read_csv(out / "multipliers.csv")
    assert header == ["node", "lambda", "w", "g"]
    out2 = tmp_path / "e"
    assert cli.main(["--out", str(out2), "oracle", "--g", "0.5"]) == 0
    u1 = np.array([float(r[3]) for r in rows])
    u2 = np.array([float(r[3]) for r in kvtext.read_csv(out2 / "field.csv")[1]])
    assert np.max(np.abs(u1 - u2)) <= 1e-4


def test_mesh_file_error_exit_one(tmp_path, capsys):
    m = tmp_path / "bad.msh"
    m.write_text("NODES\n0 0 0\n1 1 0\n2 0 1\nTRIANGLES\n0 0 1 2\nBOUNDARY\n0 1 7\n1 2 2\n2 0 1\n")
    assert cli.main(["--out", str(tmp_path / "o"), "contact", "--mesh", str(m)]) == 1
    assert "line 8" in capsys.readouterr().err


def test_orlicz_report(tmp_path):
    out = tmp_path / "z"
    assert cli.main(["--out", str(out), "orlicz", "--phi", "power:2", "--sobolev-n", "3"]) == 0
    kv = kvtext.loads((out / "report.txt").read_text())
    assert float(kv["index_lower"]) == pytest.approx(2.0, abs=1e-9)
    assert kv["divergent"] == "true"
    assert (out / "sobolev_conjugate.csv").exists()


def test_noncoercive_exit_two(tmp_path):
    p = tmp_path / "nc.ini"
    p.write_text("[dims]\nn = 1\nm = 1\n[K]\ntype = whole_space\n[Lambda]\ntype = whole_space\n"
                 "[B]\nkind = zero\n[chi]\nkind = operator_linear\nmatrix = 0\n"
                 "[psi]\nkind = operator_linear\nmatrix = 0\n[data]\nf = 1\ng = 0\n")
    out = tmp_path / "o"
    assert cli.main(["--out", str(out), "solve", "--problem", str(p), "--solver", "ball", "--r0", "0.1",
                     "--max-rounds", "5"]) == 2
    assert "non_coercive_suspect" in (out / "outcome.txt").read_text()
