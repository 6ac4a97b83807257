"""Tests for the finite-difference gradient checks."""
import numpy as np

from app.autograd import functional as F
from app.autograd.functional import Softmax
from app.autograd.gradcheck import (
    OP_CHECKS, OP_TOLERANCE, check_gradients, format_report, relative_error, run_suite
)
from app.autograd.tensor import parameter


def test_every_op_check_passes():
    results = run_suite(seed=0)
    assert [r.name for r in results] == list(OP_CHECKS)
    failed = [(r.name, r.max_rel_err) for r in results if not r.passed]
    assert failed == []


def test_suite_is_deterministic():
    first = run_suite(seed=3, names=["softmax", "layer_norm"])
    second = run_suite(seed=3, names=["softmax", "layer_norm"])
    assert [r.max_rel_err for r in first] == [r.max_rel_err for r in second]


def test_broken_backward_is_caught(mocker):
    original = Softmax.backward
    mocker.patch.object(Softmax, "backward", lambda self, grad: (-original(self, grad)[0],))
    (result,) = run_suite(seed=0, names=["softmax"])
    assert not result.passed
    assert "softmax" in format_report([result])
    assert format_report([result]).strip().endswith("FAIL")


def test_report_format():
    results = run_suite(seed=0, names=["add", "mse"])
    lines = format_report(results).splitlines()
    assert len(lines) == 2
    name, err, tol, verdict = lines[0].split()
    assert name == "add"
    assert float(err) < OP_TOLERANCE
    assert float(tol) == OP_TOLERANCE
    assert verdict == "PASS"


def test_check_gradients_on_custom_loss(rng):
    w = parameter(rng.standard_normal((3, 2)))
    x = rng.standard_normal((4, 3))
    err = check_gradients(lambda: F.tanh(F.matmul(x, w)).sum(), [w])
    assert err < OP_TOLERANCE


def test_relative_error_floor():
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0
    assert relative_error(np.array([1.0]), np.array([-1.0])) == 1.0
