import numpy as np

EPS = 1e-7


def bce_loss(prediction, label, eps=EPS):
    """Mean binary cross-entropy over a batch of probabilities.

    Returns ``(loss, grad)`` where ``grad`` is the derivative of the mean loss
    with respect to each prediction. Predictions are clamped to
    ``[eps, 1 - eps]`` first, so the loss is always finite.
    """
    p_in = np.asarray(prediction)
    p = np.clip(p_in.astype(np.float64), eps, 1 - eps)
    y = np.asarray(label, dtype=np.float64).reshape(p.shape)
    n = max(p.size, 1)
    loss = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1 - p)) / n
    out_dtype = p_in.dtype if np.issubdtype(p_in.dtype, np.floating) else np.float64
    return float(loss.mean()), grad.astype(out_dtype)
