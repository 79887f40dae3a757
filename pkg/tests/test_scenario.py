"""Scenario loader: schema validation and precise error reporting."""

import hashlib

import pytest

from robustcert.scenario import ScenarioError, load_scenario

FULL = """\
[system]
f = ["-x1"]
time_domain = "continuous"

[perturbation]
delta = 0.2
delta_prime = 0.1

[sets]
W_form = "box"
W_lo = [-0.1]
W_hi = [0.1]
U_form = "superlevel"
U_expr = "abs(x1)"
U_level = 0.5

[grid]
domain_lo = [-1.0]
domain_hi = [1.0]
resolution = 0.001

[solver]
step = 0.01
seed = 7

[simulate]
x0 = [0.05]
"""


def _write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_full_scenario(tmp_path):
    p = _write(tmp_path, FULL)
    sc = load_scenario(p)
    assert list(sc.system.source) == ["-x1"]
    assert sc.delta == 0.2 and sc.delta_prime == 0.1
    assert sc.resolution == 0.001
    assert sc.solver["seed"] == 7 and sc.solver["step"] == 0.01
    assert sc.W.contains([0.05]) and not sc.W.contains([0.2])
    assert sc.U.contains([0.6]) and not sc.U.contains([0.1])
    assert sc.domain.contains([0.9])
    assert sc.block("simulate")["x0"] == [0.05]
    assert sc.block("missing") == {}
    assert sc.sha256 == hashlib.sha256(p.read_bytes()).hexdigest()


def test_defaults(tmp_path):
    sc = load_scenario(_write(tmp_path, '[system]\nf = ["-x1"]\n'))
    assert sc.system.time_domain == "continuous"
    assert sc.delta is None and sc.W is None and sc.domain is None
    assert sc.solver["seed"] == 0 and sc.solver["trials"] == 1000


def test_box_union_and_discrete(tmp_path):
    text = """\
[system]
f = ["0.9 * x1"]
time_domain = "discrete"

[sets]
W_form = "box_union"
W_boxes = [[[-1.0], [-0.5]], [[0.5], [1.0]]]
"""
    sc = load_scenario(_write(tmp_path, text))
    assert sc.system.time_domain == "discrete"
    assert sc.W.contains([-0.7]) and not sc.W.contains([0.0])


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("/nonexistent/path.toml")


@pytest.mark.parametrize("text,needle", [
    ("[grid]\ndomain_lo = [-1.0]\ndomain_hi = [1.0]\nresolution = 0.01\n",
     "missing [system]"),
    ('[system]\nf = ["x1 +"]\n', "[system] f"),
    ('[system]\nf = []\n', "[system] f"),
    ('[system]\nf = ["-x1"]\ntime_domain = "weekly"\n', "time_domain"),
    ('[system]\nf = ["-x1"]\n\n[perturbation]\ndelta = 0.1\n'
     'delta_prime = 0.2\n', "smaller than delta"),
    ('[system]\nf = ["-x1"]\nsub = { a = 1 }\n', "two levels"),
    ('[system\nf = ["-x1"]\n', "table declaration"),
    ('[system]\nf = ["-x1"]\n\n[sets]\nW_form = "box"\nW_lo = [0.1]\n'
     'W_hi = [-0.1]\n', "lo > hi"),
    ('[system]\nf = ["-x1"]\n\n[sets]\nW_form = "blob"\n', "unknown region"),
    ('[system]\nf = ["-x1"]\n\n[grid]\ndomain_lo = [-1.0]\n'
     'domain_hi = [1.0]\nresolution = -0.5\n', "resolution"),
    ('[system]\nf = ["-x1"]\n\n[grid]\ndomain_lo = [-1.0, 0.0]\n'
     'domain_hi = [1.0, 1.0]\nresolution = 0.1\n', "expected 1 entries"),
    ('[system]\nf = ["-x1"]\n\n[sets]\nW_form = "box"\nW_lo = [-0.1]\n'
     'W_hi = [0.1]\nU_form = "box"\nU_lo = [0.05]\nU_hi = [0.3]\n\n[grid]\n'
     'domain_lo = [-1.0]\ndomain_hi = [1.0]\nresolution = 0.01\n',
     "overlap"),
])
def test_rejects_bad_input(tmp_path, text, needle):
    with pytest.raises(ScenarioError) as exc:
        load_scenario(_write(tmp_path, text))
    assert needle in str(exc.value)


def test_error_carries_line_number(tmp_path):
    p = _write(tmp_path, '[system]\nf = ["-x1"]\n\n[perturbation]\n'
                         'delta = 0.1\ndelta_prime = 0.2\n')
    with pytest.raises(ScenarioError) as exc:
        load_scenario(p)
    assert f"{p}:6:" in str(exc.value)


def test_unknown_tables_noted(tmp_path):
    sc = load_scenario(_write(tmp_path, '[system]\nf = ["-x1"]\n\n'
                                        '[extras]\nfoo = 1\n'))
    assert any("extras" in n for n in sc.notes)
