"""Central-difference verification of the hand-written backward passes."""
import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import Sequential
from .losses import bce_loss


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    # coordinates whose perturbation flipped a ReLU gate or a pooling argmax
    excluded: list = field(default_factory=list)
    worst: tuple = None

    def passed(self, tol):
        return self.checked > 0 and self.max_rel_error < tol


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _patterns_equal(a, b):
    return len(a) == len(b) and all(np.array_equal(p, q) for p, q in zip(a, b))


def gradient_check(
    model,
    x,
    label=None,
    step=1e-3,
    n_samples=50,
    seed=0,
    dtype=np.float64,
    loss="bce",
    check_input=False,
    analytic_dtype=None,
):
    """Compare analytic gradients of ``model`` against central differences.

    ``model`` is anything with a ``layers`` list (or a list of layers); it is
    deep-copied and cast to ``dtype`` so the original is untouched. Every loss
    evaluation runs in training mode with a generator re-seeded from ``seed``,
    which replays identical dropout masks.

    ``loss="bce"`` expects a sigmoid output of shape ``(batch, 1)`` and binary
    labels. ``loss="probe"`` contracts the output with a fixed random tensor,
    so single layers can be checked in isolation.

    With ``analytic_dtype`` set (e.g. float32), the backward pass runs on a
    copy in that precision while the differences are still taken in
    ``dtype``; this checks the low-precision backward against an accurate
    numerical reference.
    """
    layers = model.layers if hasattr(model, "layers") else model
    net = Sequential(copy.deepcopy(list(layers))).astype(dtype)
    x = np.array(x if analytic_dtype is None else np.asarray(x, dtype=analytic_dtype), dtype=dtype)

    probe = None

    def evaluate(on=net, inp=x):
        out = on.forward(inp, train=True, rng=np.random.default_rng(seed))
        nonlocal probe
        if loss == "bce":
            value, grad = bce_loss(out.reshape(-1), label)
            return value, grad.reshape(out.shape)
        if probe is None:
            probe = np.random.default_rng(seed + 1).standard_normal(out.shape)
        return float(np.sum(out * probe)), probe.astype(out.dtype)

    _, dout = evaluate()
    dx = net.backward(dout)
    base_pattern = [p.copy() for p in net.patterns()]
    targets = [(layer, name) for (_, name), layer, _ in net.named_params()]
    arrays = [getattr(layer, name) for layer, name in targets]

    if analytic_dtype is None:
        analytic = [layer.grads[name] for layer, name in targets]
    else:
        low = Sequential(copy.deepcopy(list(layers))).astype(analytic_dtype)
        x_low = x.astype(analytic_dtype)
        _, dout_low = evaluate(low, x_low)
        dx = low.backward(dout_low.astype(analytic_dtype))
        analytic = [layer.grads[name] for (_, name), layer, _ in low.named_params()]
    if check_input:
        arrays.append(x)
        analytic.append(dx)

    coords = [(i, j) for i, a in enumerate(arrays) for j in range(a.size)]
    pick = np.random.default_rng(seed + 2)
    if len(coords) > n_samples:
        coords = [coords[k] for k in sorted(pick.choice(len(coords), n_samples, replace=False))]

    result = GradCheckResult(max_rel_error=0.0, checked=0)
    for i, j in coords:
        flat = arrays[i].reshape(-1)
        orig = flat[j]
        flat[j] = orig + step
        plus, _ = evaluate()
        pattern_plus = net.patterns()
        flat[j] = orig - step
        minus, _ = evaluate()
        pattern_minus = net.patterns()
        flat[j] = orig
        if not (_patterns_equal(base_pattern, pattern_plus) and _patterns_equal(base_pattern, pattern_minus)):
            result.excluded.append((i, j))
            continue
        numeric = (plus - minus) / (2 * step)
        a = float(analytic[i].reshape(-1)[j])
        err = relative_error(a, numeric)
        result.checked += 1
        if err >= result.max_rel_error:
            result.max_rel_error = err
            result.worst = (i, j, a, numeric)
    return result
