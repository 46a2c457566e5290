"""Adam with bias correction, acting on ``Parameter`` objects in place."""

import numpy as np


def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One update over ``params``; grads are consumed (zeroed) afterwards.

    Parameters with ``grad is None`` are treated as zero-gradient: their
    moments decay but with fresh (all-zero) state the value is untouched,
    so an all-zero gradient is a fixed point.
    """
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.step_count += 1
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1 ** p.step_count)
        v_hat = p.adam_v / (1.0 - beta2 ** p.step_count)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None
