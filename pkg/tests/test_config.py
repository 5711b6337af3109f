from __future__ import annotations

import copy
import json
import logging

import numpy as np
import pytest

from fracrelax.cli import default_problem_path
from fracrelax.config import dump_problem, load_problem, parse_problem, same_problem, serialize
from fracrelax.errors import HypothesisError, PreconditionError, SchemaError
from fracrelax.mild_solver import apriori_bound


@pytest.fixture
def data():
    return json.loads(default_problem_path().read_text())


class TestLoad:
    def test_benchmark(self):
        p = load_problem(default_problem_path())
        assert (p.alpha, p.beta, p.horizon) == (0.5, 0.25, 1.0)
        assert (p.n, p.m, p.r) == (1, 1, 1)
        np.testing.assert_array_equal(p.constraint.atoms[:, 0], [-1.0, 1.0])

    def test_constants_logged(self, caplog):
        with caplog.at_level(logging.INFO, logger="fracrelax.config"):
            load_problem(default_problem_path())
        text = caplog.text
        for key in ("k1=", "k2=", "k3=", "C1=", "C2=", "M0=", "L0=6.44192", "phi="):
            assert key in text

    def test_round_trip(self, tmp_path):
        p = load_problem(default_problem_path())
        dump_problem(p, tmp_path / "copy.json")
        assert same_problem(p, load_problem(tmp_path / "copy.json"))
        assert serialize(parse_problem(serialize(p))) == serialize(p)

    def test_round_trip_rich(self, data):
        data["x0"] = [0.2]
        data["dynamics"]["nonlinearity"] = {"kind": "sin", "kappa": 0.4}
        data["dynamics"]["forcing"] = [[0.0], [0.5], [1.0]]
        data["nonlocal"] = {"offset": [0.1], "samples": [{"time": 0.5, "H": [[0.2]]}], "control_time": 0.3, "G": [[0.1]]}
        data["costs"][0]["q"] = {"kind": "quadratic", "Q": [[1.0]], "c": [0.5], "d": 0.25}
        p = parse_problem(data)
        assert same_problem(p, parse_problem(serialize(p)))

    def test_flat_operators(self, data):
        data["operators"] = {"L": [2.0], "M": [1.0], "E": [0.5]}
        assert parse_problem(data).triple.L[0, 0] == 2.0

    def test_derived_radius(self, data):
        data["constraint"]["state_shift"] = [[0.1]]
        p = parse_problem(data)
        assert p.constraint.radius == pytest.approx(apriori_bound(p).L0)


class TestErrors:
    def test_beta(self, data):
        data["beta"] = 0.6
        with pytest.raises(HypothesisError, match=r"\(H1\.3\) there exists a constant 0 < beta < alpha"):
            parse_problem(data)

    def test_missing_atoms(self, data):
        del data["constraint"]["atoms"]
        with pytest.raises(SchemaError, match="constraint: 'atoms' is a required property"):
            parse_problem(data)

    def test_field_path(self, data):
        data["costs"][0]["q"] = {"kind": "cubic"}
        with pytest.raises(SchemaError, match=r"costs\[0\]\.q\.kind"):
            parse_problem(data)

    def test_unknown_key(self, data):
        bad = copy.deepcopy(data)
        bad["gamma"] = 1
        with pytest.raises(SchemaError):
            parse_problem(bad)

    def test_json_position(self, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text('{\n  "alpha": 0.5,\n  "beta": ,\n}\n')
        with pytest.raises(SchemaError, match=r"bad\.json:3:11"):
            load_problem(f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(PreconditionError):
            load_problem(tmp_path / "nope.json")
