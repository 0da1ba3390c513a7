# test_problem_io.py - Tests for reading and writing problem files

import json

import numpy as np
import pytest

from coordfb.exceptions import ProblemFileError
from coordfb.settings import SettingId
from coordfb.utils.problem_io import dump_problem, load_problem, parse_problem, problem_to_dict


def document(binary_problem, **changes):
    doc = problem_to_dict(binary_problem())
    doc.update(changes)
    return doc


def test_round_trip_keeps_the_target(binary_problem):
    problem = binary_problem(alpha=0.3, noise=0.2, setting=SettingId.CAUSAL_ENC_FB)
    parsed = parse_problem(dump_problem(problem))
    assert parsed.setting is SettingId.CAUSAL_ENC_FB
    np.testing.assert_allclose(parsed.target().mass, problem.target().mass, atol=1e-15)


def test_load_returns_raw_bytes(binary_problem, tmp_path):
    path = tmp_path / "problem.json"
    text = dump_problem(binary_problem())
    path.write_text(text)
    problem, data = load_problem(str(path))
    assert data == text.encode()
    assert problem.setting is SettingId.SC_ENC_FB

    with pytest.raises(ProblemFileError) as info:
        load_problem(str(tmp_path / "missing.json"))
    assert info.value.field == "file"


def test_syntax_errors_report_line():
    with pytest.raises(ProblemFileError) as info:
        parse_problem('{\n  "setting": "SC_ENC_FB",\n  "alphabets": \n}')
    assert info.value.field == "document"
    assert info.value.line == 4


def test_unknown_setting(binary_problem):
    with pytest.raises(ProblemFileError) as info:
        parse_problem(json.dumps(document(binary_problem, setting="SC_ENC")))
    assert info.value.field == "setting"


def test_missing_alphabet(binary_problem):
    doc = document(binary_problem)
    del doc["alphabets"]["V"]
    with pytest.raises(ProblemFileError) as info:
        parse_problem(json.dumps(doc))
    assert info.value.field == "alphabets.V"


def test_non_stochastic_channel_row(binary_problem):
    doc = document(binary_problem, channel=[[0.9, 0.1], [0.3, 0.3]])
    with pytest.raises(ProblemFileError) as info:
        parse_problem(json.dumps(doc))
    assert info.value.field == "channel[1]"
    assert "channel[1]" in str(info.value)


def test_negative_source_entry(binary_problem):
    with pytest.raises(ProblemFileError) as info:
        parse_problem(json.dumps(document(binary_problem, source=[1.2, -0.2])))
    assert info.value.field == "source[1]"


def test_wrong_table_shape(binary_problem):
    doc = document(binary_problem)
    doc["input_policy"]["table"] = [0.2, 0.3, 0.5]
    with pytest.raises(ProblemFileError) as info:
        parse_problem(json.dumps(doc))
    assert info.value.field == "input_policy.table"


def test_rows_are_renormalized(binary_problem):
    doc = document(binary_problem, source=[0.5 + 4e-10, 0.5])
    problem = parse_problem(json.dumps(doc))
    assert problem.source.table.sum() == pytest.approx(1.0, abs=1e-15)


def test_source_dependent_policy_parses(binary_problem):
    doc = document(binary_problem)
    doc["input_policy"] = {"given": ["U"], "table": [[0.9, 0.1], [0.1, 0.9]]}
    problem = parse_problem(json.dumps(doc))
    assert problem.input_policy.given_names == ("U",)
