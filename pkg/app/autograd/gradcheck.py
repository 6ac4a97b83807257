"""Central finite-difference checks for every differentiable op."""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.autograd import functional as F
from app.autograd.tensor import Tensor, parameter
from app.utils.logging import setup_logger

logger = setup_logger("Gradcheck")

OP_TOLERANCE = 1e-4
END_TO_END_TOLERANCE = 1e-3

LossFn = Callable[[], Tensor]
CheckBuilder = Callable[[np.random.Generator], Tuple[LossFn, List[Tensor]]]


@dataclass
class GradcheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Elementwise |a - n| / max(|a| + |n|, floor), maximised over entries"""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numerical_gradient(loss_fn: LossFn, tensor: Tensor, eps: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        upper = loss_fn().item()
        flat[i] = original - eps
        lower = loss_fn().item()
        flat[i] = original
        grad_flat[i] = (upper - lower) / (2.0 * eps)
    return grad


def check_gradients(loss_fn: LossFn, inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """
    Compare reverse-mode gradients of a scalar loss against central differences

    Args:
        loss_fn: Rebuilds the loss from the current values of `inputs`
        inputs: Leaf tensors with requires_grad set
        eps: Finite-difference step

    Returns:
        The largest relative error over all inputs
    """
    for tensor in inputs:
        tensor.zero_grad()
    loss_fn().backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]
    worst = 0.0
    for tensor, grad in zip(inputs, analytic):
        worst = max(worst, relative_error(grad, numerical_gradient(loss_fn, tensor, eps)))
    return worst


def _projected(op: Callable[..., Tensor], inputs: List[Tensor], rng: np.random.Generator) -> Tuple[LossFn, List[Tensor]]:
    # a random projection keeps every output entry in play
    first = op(*inputs)
    weights = rng.standard_normal(first.shape)
    return (lambda: (op(*inputs) * weights).sum()), inputs


def _leaves(rng: np.random.Generator, *shapes: Tuple[int, ...], positive: bool = False) -> List[Tensor]:
    out = []
    for shape in shapes:
        values = rng.standard_normal(shape)
        out.append(parameter(np.abs(values) + 0.5 if positive else values))
    return out


OP_CHECKS: Dict[str, Tuple[float, CheckBuilder]] = {}


def register_check(name: str, tolerance: float = OP_TOLERANCE) -> Callable[[CheckBuilder], CheckBuilder]:
    def decorator(builder: CheckBuilder) -> CheckBuilder:
        OP_CHECKS[name] = (tolerance, builder)
        return builder
    return decorator


@register_check("add")
def _check_add(rng):
    return _projected(lambda a, b: a + b, _leaves(rng, (3, 4), (4,)), rng)


@register_check("sub")
def _check_sub(rng):
    return _projected(lambda a, b: a - b, _leaves(rng, (3, 4), (3, 1)), rng)


@register_check("mul")
def _check_mul(rng):
    return _projected(lambda a, b: a * b, _leaves(rng, (2, 3, 4), (3, 4)), rng)


@register_check("div")
def _check_div(rng):
    return _projected(lambda a, b: a / b, _leaves(rng, (3, 4)) + _leaves(rng, (3, 4), positive=True), rng)


@register_check("pow")
def _check_pow(rng):
    return _projected(lambda a: a ** 3, _leaves(rng, (4, 5)), rng)


@register_check("matmul")
def _check_matmul(rng):
    return _projected(F.matmul, _leaves(rng, (2, 3, 5), (5, 4)), rng)


@register_check("matmul_chain")
def _check_matmul_chain(rng):
    a, b, c = _leaves(rng, (3, 4), (4, 5), (5, 2))
    return (lambda: F.matmul(F.matmul(a, b), c).sum()), [a, b, c]


@register_check("sum")
def _check_sum(rng):
    return _projected(lambda a: a.sum(axis=1, keepdims=True), _leaves(rng, (3, 4, 2)), rng)


@register_check("mean")
def _check_mean(rng):
    return _projected(lambda a: a.mean(axis=(0, 2)), _leaves(rng, (3, 4, 2)), rng)


@register_check("reshape_transpose")
def _check_reshape_transpose(rng):
    return _projected(lambda a: a.reshape(2, 3, 4).transpose(0, 2, 1), _leaves(rng, (6, 4)), rng)


@register_check("getitem")
def _check_getitem(rng):
    index = np.array([[0, 2, 2], [1, 3, 0]])
    return _projected(lambda a: a[index], _leaves(rng, (5, 3)), rng)


@register_check("concat")
def _check_concat(rng):
    return _projected(lambda a, b: F.concat([a, b], axis=-1), _leaves(rng, (3, 2), (3, 5)), rng)


@register_check("exp")
def _check_exp(rng):
    return _projected(lambda a: a.exp(), _leaves(rng, (3, 4)), rng)


@register_check("log")
def _check_log(rng):
    return _projected(lambda a: a.log(), _leaves(rng, (3, 4), positive=True), rng)


@register_check("tanh")
def _check_tanh(rng):
    return _projected(F.tanh, _leaves(rng, (3, 4)), rng)


@register_check("gelu")
def _check_gelu(rng):
    return _projected(F.gelu, _leaves(rng, (4, 6)), rng)


@register_check("sigmoid")
def _check_sigmoid(rng):
    return _projected(F.sigmoid, _leaves(rng, (4, 6)), rng)


@register_check("softplus")
def _check_softplus(rng):
    return _projected(F.softplus, _leaves(rng, (4, 6)), rng)


@register_check("softmax")
def _check_softmax(rng):
    return _projected(lambda a: F.softmax(a, axis=-1), _leaves(rng, (3, 5)), rng)


@register_check("layer_norm")
def _check_layer_norm(rng):
    return _projected(lambda x, g, b: F.layer_norm(x, g, b), _leaves(rng, (4, 6), (6,), (6,)), rng)


@register_check("mse")
def _check_mse(rng):
    pred, target = _leaves(rng, (4, 3), (4, 3))
    return (lambda: F.mse(pred, target) * 3.0), [pred, target]


@register_check("l1")
def _check_l1(rng):
    pred, target = _leaves(rng, (4, 3), (4, 3))
    return (lambda: F.l1(pred, target)), [pred, target]


def run_suite(
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
    extra: Optional[Dict[str, Tuple[float, CheckBuilder]]] = None,
    eps: float = 1e-5
) -> List[GradcheckResult]:
    """
    Run the registered finite-difference checks

    Args:
        seed: Seed for the random inputs
        names: Restrict to these check names
        extra: Additional checks (e.g. end-to-end network checks) keyed by name
        eps: Finite-difference step

    Returns:
        One result per executed check, in registration order
    """
    checks = dict(OP_CHECKS)
    checks.update(extra or {})
    selected = list(checks) if names is None else [n for n in checks if n in set(names)]
    results = []
    for index, name in enumerate(selected):
        tolerance, builder = checks[name]
        rng = np.random.default_rng([seed, index])
        loss_fn, inputs = builder(rng)
        err = check_gradients(loss_fn, inputs, eps)
        result = GradcheckResult(name=name, max_rel_err=err, tolerance=tolerance)
        if not result.passed:
            logger.error(f"Gradient check failed for {name}", extra={"max_rel_err": err, "tolerance": tolerance})
        results.append(result)
    return results


def format_report(results: Sequence[GradcheckResult]) -> str:
    """One line per check: name, max relative error, tolerance, PASS/FAIL"""
    lines = [
        f"{r.name} {r.max_rel_err:.3e} {r.tolerance:.0e} {'PASS' if r.passed else 'FAIL'}"
        for r in results
    ]
    return "\n".join(lines) + "\n"
