"""Central finite-difference checks for the network kernel."""
import numpy as np


def numerical_gradient(func, array, h=1e-3):
    """Central-difference gradient of the scalar ``func()`` with respect to ``array`` (perturbed in place)."""
    grad = np.zeros(array.shape, dtype=np.float64)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        plus = func()
        flat[i] = saved - h
        minus = func()
        flat[i] = saved
        out[i] = (plus - minus) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    """Max-norm relative error, guarded against all-zero gradients."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-12)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def check_network(net, x, upstream, h=1e-3):
    """Compare analytic and numerical gradients of ``sum(upstream * net(x))``.

    ``net`` should be built with ``dtype=np.float64``. Returns a dict of
    relative errors keyed by ``'input'`` and ``'param<i>'``.
    """
    x = np.array(x, dtype=np.float64) if net.specs[0].kind != 'embedding' else np.asarray(x)
    upstream = np.asarray(upstream, dtype=np.float64)

    def objective():
        return float(np.sum(upstream * net.forward(x)))

    net.forward(x)
    d_input = net.backward(upstream)
    analytic = [g.copy() for g in net.grads]

    errors = {}
    if d_input is not None:
        errors['input'] = relative_error(d_input, numerical_gradient(objective, x, h))
    for index, param in enumerate(net.params):
        errors[f'param{index}'] = relative_error(analytic[index], numerical_gradient(objective, param, h))
    return errors
