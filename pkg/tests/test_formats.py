import json
from fractions import Fraction

import numpy as np
import pytest
from click.testing import CliRunner

from causabs import formats
from causabs.cli import Flags, UsageError, list_checks, main, run

BUNDLED = formats.bundled()


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixtures")
    for name, doc in BUNDLED.items():
        (d / name).write_text(formats.dumps(doc))
    return d


@pytest.mark.parametrize("name", sorted(BUNDLED))
def test_round_trip(name):
    doc = json.loads(formats.dumps(BUNDLED[name]))
    obj = formats.from_doc(doc)
    if isinstance(obj, formats.AlignmentFile):
        assert obj.doc == doc
    else:
        assert formats.to_doc(obj) == doc


def test_scalars():
    assert formats.dump_scalar(Fraction(3, 4)) == "3/4"
    assert formats.dump_scalar(Fraction(2)) == "2"
    assert formats.load_scalar("3/4") == Fraction(3, 4)
    assert formats.load_scalar([0.5, -1.0]) == complex(0.5, -1.0)
    assert formats.dump_scalar(1j) == [0.0, 1.0]


def test_schema_error_points_into_document():
    doc = json.loads(formats.dumps(BUNDLED["notsimple-low.json"]))
    doc["variables"][1]["card"] = "two"
    with pytest.raises(formats.SchemaError) as e:
        formats.from_doc(doc)
    assert e.value.pointer == "/variables/1/card"


def test_unknown_parent_is_reported():
    doc = json.loads(formats.dumps(BUNDLED["notsimple-low.json"]))
    doc["mechanisms"]["X"]["parents"] = ["Nope"]
    with pytest.raises(formats.SchemaError) as e:
        formats.from_doc(doc)
    assert e.value.pointer == "/mechanisms/X/parents"


def test_non_stochastic_matrix_is_rejected():
    doc = json.loads(formats.dumps(BUNDLED["xor-fcm-low.json"]))
    doc["fcm"]["noise"]["UY"] = ["1/2", "1/3"]
    with pytest.raises(ValueError):
        formats.from_doc(doc)


def test_edges_must_match_parents():
    doc = json.loads(formats.dumps(BUNDLED["notsimple-low.json"]))
    doc["edges"] = doc["edges"][1:]
    with pytest.raises(formats.SchemaError) as e:
        formats.from_doc(doc)
    assert e.value.pointer == "/edges"


def test_tau_must_be_surjective():
    doc = json.loads(formats.dumps(BUNDLED["notsimple-align.json"]))
    name = next(h for h, t in doc["tau"].items() if t["card"] > 1)
    doc["tau"][name]["table"] = [0] * len(doc["tau"][name]["table"])
    low = formats.from_doc(BUNDLED["notsimple-low.json"])
    high = formats.from_doc(BUNDLED["notsimple-high.json"])
    with pytest.raises(formats.SchemaError):
        formats.from_doc(doc).resolve(low, high)


def paths(d, stem, kinds=("low", "high", "align")):
    return [str(d / f"{stem}-{k}.json") for k in kinds]


def test_run_constructive_voting(fixture_dir):
    r = run("constructive", paths(fixture_dir, "voting"))
    assert r["holds"] and r["info"]["subsets"] == 64
    assert list(r)[:4] == ["check", "inputs_digest", "holds", "vacuous"]


def test_run_mechanism_level_notsimple(fixture_dir):
    r = run("mechanism_level:markov", paths(fixture_dir, "notsimple"))
    assert not r["holds"] and r["witnesses"]
    assert run("mechanism_level:cartesian", paths(fixture_dir, "notsimple"))["holds"]
    assert run("mechanism_level:markov", paths(fixture_dir, "notsimple-extra"))["holds"]


def test_run_qc_opening_not(fixture_dir):
    p = paths(fixture_dir, "not", ("circuit", "model", "measure-align"))
    assert run("qc:opening", p)["holds"]
    assert run("qc", p, Flags(family="interchange"))["check"] == "qc:interchange"


def test_run_iso_cca(fixture_dir):
    r = run("iso_cca:constructive", paths(fixture_dir, "xor-pipeline", ("m1", "m3", "align")))
    assert r["holds"]


def test_run_counterfactual_and_algebra(fixture_dir):
    assert run("counterfactual", paths(fixture_dir, "xor-fcm"), Flags(max_m=2))["holds"]
    assert run("algebra:hom", paths(fixture_dir, "notsimple"))["holds"]
    assert run("algebra:order", paths(fixture_dir, "notsimple"))["holds"]
    assert run("strong", paths(fixture_dir, "notsimple"))["holds"]
    assert run("exact", paths(fixture_dir, "notsimple"))["holds"]
    assert run("interchange", paths(fixture_dir, "notsimple"), Flags(max_tuple=1))["holds"]


def test_reports_are_deterministic_apart_from_timing(fixture_dir):
    a = run("mechanism_level:markov", paths(fixture_dir, "notsimple"), Flags(seed=3))
    b = run("mechanism_level:markov", paths(fixture_dir, "notsimple"), Flags(seed=3))
    a.pop("timing_s"), b.pop("timing_s")
    assert json.dumps(a) == json.dumps(b)


def test_unknown_check_and_wrong_arity(fixture_dir):
    with pytest.raises(UsageError):
        run("nope", paths(fixture_dir, "voting"))
    with pytest.raises(UsageError):
        run("constructive", paths(fixture_dir, "voting")[:2])
    with pytest.raises(UsageError):
        run("mechanism_level:monoidal", paths(fixture_dir, "notsimple"))


def test_list_checks_names_every_family():
    text = list_checks()
    for name in ("constructive", "interchange", "counterfactual", "exact", "strong", "mechanism_level:{cd|markov|cartesian}",
                 "iso_cca:{constructive|interchange}", "qc:{io|interchange|opening}", "algebra:{hom|order}"):
        assert name in text


def test_cli_exit_codes(fixture_dir):
    runner = CliRunner()
    ok = runner.invoke(main, ["run", "constructive", *paths(fixture_dir, "notsimple")])
    assert ok.exit_code == 0 and json.loads(ok.output)["holds"]
    bad = runner.invoke(main, ["run", "mechanism_level:markov", *paths(fixture_dir, "notsimple"), "--format", "text"])
    assert bad.exit_code == 1 and "fails" in bad.output
    err = runner.invoke(main, ["run", "constructive", "-", *paths(fixture_dir, "notsimple")[1:]], input='{"kind": "model"}')
    assert err.exit_code == 2


def test_cli_reads_stdin(fixture_dir):
    low, high, al = paths(fixture_dir, "notsimple")
    text = open(low).read()
    r = CliRunner().invoke(main, ["run", "constructive", "-", high, al, "--witness-cap", "2"], input=text)
    assert r.exit_code == 0


def test_hadamard_cli_fails_opening(fixture_dir):
    p = paths(fixture_dir, "hadamard", ("circuit", "model", "measure-align"))
    r = CliRunner().invoke(main, ["run", "qc:opening", *p, "--tolerance", "1e-9"])
    assert r.exit_code == 1
    assert json.loads(r.output)["max_deviation"] >= 0.1


def test_export_fixtures(tmp_path):
    r = CliRunner().invoke(main, ["export-fixtures", str(tmp_path)])
    assert r.exit_code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(BUNDLED)


def test_complex_round_trip_is_exact():
    a = np.array([[1 + 2j, -0.5j]])
    assert np.array_equal(formats._complex_array(json.loads(json.dumps(formats._dump_complex(a)))), a)
