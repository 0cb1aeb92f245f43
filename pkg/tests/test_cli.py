import json
import os
import subprocess
import sys
from fractions import Fraction

import pytest

from sasaki_cone.cli import (
    InputError,
    Options,
    bundled_names,
    load_example,
    main,
    parse_input,
    parse_rational,
    run,
)


def _doc(**over):
    doc = {"group": {"rank": 2, "positive_roots": [[1, -1]]}, "cone": {"normals": [[1, 0], [0, 1]]}, "reeb": [1, 1]}
    doc.update(over)
    return json.dumps(doc)


def _main(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


@pytest.mark.parametrize(
    "text, path",
    [
        ("[1, 2]", "$"),
        ("{not json", "$"),
        (_doc(group={"rank": 0}), "$.group.rank"),
        (_doc(group={"rank": 2, "positive_roots": [[1, 2, 3]]}), "$.group.positive_roots[0]"),
        (_doc(cone={"normals": []}), "$.cone.normals"),
        (_doc(cone={"normals": [[1, 0], [0, "x"]]}), "$.cone.normals[1][1]"),
        (_doc(reeb=[0.5, 1]), "$.reeb[0]"),
        (_doc(sweep={"coordinate": 5}), "$.sweep.coordinate"),
        (_doc(group={"rank": 2, "positive_roots": [[1, -1]], "gram": [[1, 0]]}), "$.group.gram"),
    ],
)
def test_parse_errors_name_the_path(text, path):
    with pytest.raises(InputError) as info:
        parse_input(text)
    assert str(info.value).startswith(path + ":") or str(info.value).startswith(path + " ")


def test_parse_rational():
    assert parse_rational(" 3/4", "$") == Fraction(3, 4)
    assert parse_rational(2.0, "$") == 2
    with pytest.raises(InputError, match="not exact"):
        parse_rational(0.1, "$.x")
    with pytest.raises(InputError, match="boolean"):
        parse_rational(True, "$.x")


def test_bundled_examples_parse():
    names = bundled_names()
    assert {"gl2.json", "sl2xC.json", "sl2xC_steep.json", "psl2xC2.json", "orthant3.json"} <= set(names)
    for n in names:
        spec = load_example(n)
        spec.cone()
        assert spec.reeb is not None


def test_examples_path_falls_back_to_bundled(capsys):
    code, out = _main(capsys, "gamma0", "examples/gl2.json")
    assert code == 0
    assert json.loads(out)["gamma0"] == ["-2", "-2"]


def test_missing_file(capsys):
    code, out = _main(capsys, "gamma0", "nowhere/none.json")
    assert code == 1 and "no such file" in json.loads(out)["error"]


def test_criterion_holds_exit_zero(capsys):
    code, out = _main(capsys, "criterion", "gl2")
    rep = json.loads(out)
    assert code == 0
    assert rep["verdict"]["holds"] is True and rep["verdict"]["margin"] == "1/8"


def test_criterion_rescale_diagnostic(capsys):
    code, out = _main(capsys, "criterion", "sl2xC")
    rep = json.loads(out)
    assert code == 1
    assert rep["rescale_factor"] == "4/3" and rep["suggested_xi"] == ["4/3", "0"]
    code, out = _main(capsys, "criterion", "sl2xC", "--rescale")
    assert code == 0 and json.loads(out)["verdict"]["holds"] is True


def test_criterion_fails_exit_two(capsys):
    code, out = _main(capsys, "criterion", "sl2xC_steep")
    assert code == 2 and json.loads(out)["verdict"]["holds"] is False


def test_validate_rejects_index_two_cone(tmp_path, capsys):
    p = tmp_path / "planar.json"
    p.write_text(json.dumps({"group": {"rank": 2}, "cone": {"normals": [[1, 0], [1, 2]]}, "reeb": [1, 0]}))
    code, _ = _main(capsys, "validate", str(p))
    assert code == 2
    code, _ = _main(capsys, "validate", "psl2xC2")
    assert code == 0


def test_soliton_command(capsys):
    code, out = _main(capsys, "soliton", "psl2xC2", "--xi2=-5/2")
    rep = json.loads(out)
    assert code == 0
    assert abs(rep["bar_X"][0] - 0.3) < 1e-6


def test_polytope_chart_must_be_transverse(capsys):
    code, out = _main(capsys, "polytope", "psl2xC2", "--chart", "1")
    assert code == 1 and "not transverse" in json.loads(out)["error"]


def test_polytope_chart_option(capsys):
    outs = []
    for k in ("1", "2"):
        code, out = _main(capsys, "polytope", "psl2xC2", "--xi2=-5/2", "--chart", k)
        assert code == 0
        outs.append(json.loads(out))
    assert outs[0]["chart"] == 1 and outs[1]["chart"] == 2
    assert outs[0]["characteristic"]["moments"]["bar"] == outs[1]["characteristic"]["moments"]["bar"]


def test_text_output(capsys):
    code, out = _main(capsys, "criterion", "gl2", "--output", "text")
    assert code == 0
    assert "holds: True" in out and "margin: 1/8" in out


def test_sweep_requires_range():
    spec = load_example("psl2xC2")
    rep = run("sweep", spec, Options())
    assert rep.exit_code == 1 and "--xi2-range" in rep.body["error"]


def test_provenance_block(capsys):
    _, out = _main(capsys, "gamma0", "gl2")
    prov = json.loads(out)["provenance"]
    assert prov["input"] == "gl2" and len(prov["input_sha256"]) == 64


def _cli(args, threads):
    env = dict(os.environ, SASAKI_CONE_THREADS=str(threads))
    return subprocess.run(
        [sys.executable, "-m", "sasaki_cone.cli", *args], capture_output=True, text=True, env=env, check=False
    )


def test_output_is_deterministic_across_runs_and_threads():
    args = ["sweep", "psl2xC2", "--xi2-range=-2:2:5"]
    outs = [_cli(args, t) for t in (1, 4, 4)]
    assert all(o.returncode == 0 for o in outs)
    assert outs[0].stdout == outs[1].stdout == outs[2].stdout


@pytest.mark.parametrize("command", ["gamma0", "polytope", "criterion", "kenergy"])
def test_report_round_trips(command):
    rep = run(command, load_example("gl2"), Options(samples=10))
    assert rep.exit_code == 0
    assert json.loads(rep.to_json()) == rep.as_dict()
