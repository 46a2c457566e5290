"""Central finite-difference check of the recorded gradients."""

import logging

import numpy as np

from .core import Tensor

log = logging.getLogger(__name__)


def grad_check(fn, inputs, tolerance=1e-4, step=1e-5, check_inputs=None):
    """Compare analytic and numeric gradients of a scalar-valued ``fn``.

    ``fn`` takes ``len(inputs)`` Tensors and returns a scalar Tensor.
    ``inputs`` are plain arrays; ``check_inputs`` selects which positions to
    perturb (default: all).  Returns the max relative error over all checked
    elements (relative to max(|analytic|, |numeric|, 1)); a result above
    ``tolerance`` is logged as a warning so stray failures surface even when
    the caller forgets to assert.

    The caller is responsible for picking inputs away from kinks and
    pooling ties, where the analytic subgradient is one-sided.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    if check_inputs is None:
        check_inputs = range(len(arrays))

    tensors = [Tensor(a.copy()) for a in arrays]
    loss = fn(*tensors)
    loss.backward()

    worst = 0.0
    for idx in check_inputs:
        a = arrays[idx]
        analytic = tensors[idx].grad
        if analytic is None:
            analytic = np.zeros_like(a)
        numeric = np.zeros_like(a)
        flat = a.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            plus = float(fn(*[Tensor(x) for x in arrays]).data)
            flat[j] = orig - step
            minus = float(fn(*[Tensor(x) for x in arrays]).data)
            flat[j] = orig
            numeric.ravel()[j] = (plus - minus) / (2.0 * step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
        err = float(np.max(np.abs(analytic - numeric) / denom))
        worst = max(worst, err)
    if worst > tolerance:
        log.warning("gradient check failed: max relative error %.3e > %.1e",
                    worst, tolerance)
    return worst
