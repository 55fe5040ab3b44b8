import json

import numpy as np
import pytest

from qisynth import io
from qisynth.infostruct import InformationStructure
from qisynth.policy import DisturbanceFeedbackPolicy, OutputFeedbackController
from conftest import FIXTURES, random_causal


@pytest.mark.parametrize("path", sorted(FIXTURES.glob("*.json")), ids=lambda p: p.stem)
def test_fixtures_load(path):
    prob = io.load_problem(path)
    assert isinstance(prob.info, InformationStructure)
    assert prob.info.N == prob.N
    assert prob.x0.shape == (prob.plant.n,)
    again = io.info_from_json(io.info_to_json(prob.info), prob.N, prob.plant.m, prob.plant.p)
    for k in range(prob.N):
        for j in range(k + 1):
            assert again[k, j] == prob.info[k, j]


def base():
    return {"N": 2, "plant": {"A": [[1.0]], "B": [[1.0]], "C": [[1.0]]},
            "info": {"kind": "constant", "S": [[1]]}}


def test_defaults():
    prob = io.problem_from_dict(base())
    assert np.array_equal(prob.plant.D, [[1.0]]) and np.array_equal(prob.plant.H, [[0.0]])
    assert np.array_equal(prob.x0, [0.0])
    assert prob.constraints is None
    assert len(prob.cost.Qx) == 3 and len(prob.cost.Ru) == 2
    assert (prob.tol, prob.delta_mode) == (1e-9, "numeric")


def test_schema_error_has_path():
    obj = base()
    obj["plant"]["A"] = "oops"
    with pytest.raises(io.ProblemFileError, match=r"\$\.plant\.A"):
        io.problem_from_dict(obj)
    obj = base()
    obj["extra"] = 1
    with pytest.raises(io.ProblemFileError, match="extra"):
        io.problem_from_dict(obj)


def test_dimension_error_has_path():
    obj = base()
    obj["x0"] = [1.0, 2.0]
    with pytest.raises(io.ProblemFileError, match="x0"):
        io.problem_from_dict(obj)
    obj = base()
    obj["info"]["S"] = [[1, 1]]
    with pytest.raises(io.ProblemFileError, match=r"\$\.info"):
        io.problem_from_dict(obj)


def test_structure_kinds():
    fd = io.info_from_json({"kind": "fixed_delay", "delays": [[0, "inf"], [1, 0]]}, 3, 2, 2)
    assert fd[1, 0].to_list() == [[1, 0], [1, 1]]
    assert fd[0, 0].to_list() == [[1, 0], [0, 1]]
    tv = io.info_from_json({"kind": "time_varying_delay",
                            "delays": [[[0]], [[1]], [[0]]]}, 3, 1, 1)
    assert tv[1, 1].to_list() == [[0]] and tv[2, 1].to_list() == [[1]]
    comm = io.info_from_json({"kind": "comm", "S": [[1, 0], [0, 1]], "Z": [[1, 1], [0, 1]]},
                             3, 2, 2)
    assert comm[1, 0].to_list() == [[1, 1], [0, 1]]
    with pytest.raises(io.ProblemFileError):
        io.info_from_json({"kind": "custom", "blocks": {"0,0": [[1]], "1,1": [[1, 1]]}}, 2, 1, 1)


def test_malformed_json(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"N": 2,\n  "plant": }')
    with pytest.raises(io.ProblemFileError, match="line 2"):
        io.load_problem(bad)


def test_controller_round_trip_is_exact():
    rng = np.random.default_rng(0)
    N, m, p = 3, 2, 3
    L, g = random_causal(rng, N, m, p)
    Q, v = random_causal(rng, N, m, p)
    ctrl = OutputFeedbackController(L, g, N, m, p)
    pol = DisturbanceFeedbackPolicy(Q, v, N, m, p)
    text = io.dumps(io.controller_to_dict(ctrl, pol))
    obj = json.loads(text)
    back = io.controller_from_dict(obj)
    assert np.array_equal(back.L, L) and np.array_equal(back.g, g)
    pback = io.policy_from_dict(obj)
    assert np.array_equal(pback.Q, Q) and np.array_equal(pback.v, v)
    assert len(obj["g"]) == N and len(obj["L"]) == N * (N + 1) // 2
