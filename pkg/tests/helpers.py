"""Shared test oracles, chiefly central finite differences."""

import numpy as np

from pixreg.autodiff import Tensor

FD_STEP = 1e-5


def numerical_gradient(fn, arrays, wrt, step=FD_STEP):
    """Central-difference gradient of scalar fn(*arrays) w.r.t. arrays[wrt].

    Arrays are float64 copies; fn must be pure.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    base = arrays[wrt]
    grad = np.zeros_like(base)
    flat = base.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = fn(*arrays)
        flat[i] = orig - step
        f_minus = fn(*arrays)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def rel_error(analytic, numeric):
    """Max absolute deviation scaled by the numeric gradient magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def check_op_gradients(build_scalar, arrays, tol=1e-4):
    """Compare analytic and numeric gradients of a tensor-op expression.

    ``build_scalar(*tensors)`` must return a scalar Tensor; ``arrays`` are
    the float64 inputs to wrap. Returns the worst relative error.
    """
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = build_scalar(*tensors)
    out.backward()

    def value_fn(*arrs):
        ts = [Tensor(a) for a in arrs]
        return float(build_scalar(*ts).data)

    worst = 0.0
    for i, t in enumerate(tensors):
        numeric = numerical_gradient(value_fn, arrays, wrt=i)
        worst = max(worst, rel_error(t.grad, numeric))
    assert worst < tol, f"gradient mismatch: relative error {worst:.3e} >= {tol}"
    return worst
