import pytest

from fault_matrix import (LINEAR_INPUTS, LINEAR_ORACLE, LINEAR_PROG, MIXED_INPUTS, MIXED_ORACLE, MIXED_PROG,
                          run_matrix)

BASE_TAGS = {"sh", "jsh", "rec", "gsh", "gcout", "jsnd"}


def required_tags(mode, pre):
    tags = BASE_TAGS | {"mult" if pre == "offline" else "mult_nopre"}
    # only robust mode runs the separate check of P0's product messages
    return tags | {"vrfy"} if mode == "robust" else tags


@pytest.mark.slow
@pytest.mark.parametrize("gc", [1, 2])
@pytest.mark.parametrize("pre", ["offline", "ondemand"])
def test_linear_matrix(mode, gc, pre):
    res = run_matrix(LINEAR_PROG, LINEAR_INPUTS, LINEAR_ORACLE, mode=mode, gc=gc, pre=pre)
    assert required_tags(mode, pre) <= res.tags
    assert not res.bad, res.bad[:3]
    if mode == "robust":
        assert res.outcomes["abort"] == 0


@pytest.mark.slow
@pytest.mark.parametrize("gc", [1, 2])
def test_mixed_matrix(mode, gc):
    res = run_matrix(MIXED_PROG, MIXED_INPUTS, MIXED_ORACLE, mode=mode, gc=gc)
    assert not res.bad, res.bad[:3]
    assert res.outcomes["mixed"] == 0


def test_matrix_detects_a_broken_oracle():
    """The harness itself must flag wrong outputs."""
    wrong = dict(LINEAR_ORACLE, y=[440])
    res = run_matrix(LINEAR_PROG, LINEAR_INPUTS, wrong, mode="robust", gc=2)
    assert len(res.bad) == len(res.sites)
