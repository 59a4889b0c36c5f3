"""Central finite-difference checks for single layers and losses (float64)."""

import numpy as np

from papc.nn.layers import layer_from_config


def _rel(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def layer_gradient_errors(cfg, in_shape, seed=0, eps=1e-6, batch=2, x=None):
    """Relative error of the analytic input and parameter gradients of one layer."""
    rng = np.random.default_rng(seed)
    layer = layer_from_config(cfg)
    layer.build(tuple(in_shape), rng, np.float64)
    if x is None:
        x = rng.standard_normal((batch,) + tuple(in_shape))
    proj = rng.standard_normal(layer.forward(x, "train", np.random.default_rng(1)).shape)

    def f():
        return float(np.sum(layer.forward(x, "train", np.random.default_rng(1)) * proj))

    f()
    dx = layer.backward(proj)
    errs = {}
    num = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        num[i] = (fp - fm) / (2 * eps)
    errs["input"] = _rel(dx, num)
    f()
    layer.backward(proj)
    grads = {k: g.copy() for k, g in layer.grads.items()}
    for name, p in layer.params.items():
        num = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            fp = f()
            p[i] = old - eps
            fm = f()
            p[i] = old
            num[i] = (fp - fm) / (2 * eps)
        errs[name] = _rel(grads[name], num)
    return errs


LAYER_CASES = {
    "dense": ({"type": "dense", "out": 3}, (5,)),
    "conv2d": ({"type": "conv2d", "out": 2, "k": 3}, (4, 5, 2)),
    "conv3d": ({"type": "conv3d", "out": 2}, (2, 4, 4, 2)),
    "maxpool2d": ({"type": "maxpool2d"}, (4, 6, 2)),
    "maxpool3d": ({"type": "maxpool3d"}, (2, 4, 4, 2)),
    "relu": ({"type": "relu"}, (7,)),
    "dropout": ({"type": "dropout", "p": 0.3}, (9,)),
    "flatten": ({"type": "flatten"}, (2, 3, 2)),
}


def relu_safe_input(shape, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < 0.05, 0.5, x)


def loss_gradient_error(seed=0, n=6, eps=1e-5):
    from papc.nn.losses import heteroscedastic_grad, heteroscedastic_loss
    rng = np.random.default_rng(seed)
    y, mu, s = rng.standard_normal(n), rng.standard_normal(n), rng.uniform(-1, 1, n)
    d_mu, d_s = heteroscedastic_grad(y, mu, s)
    worst = 0.0
    for arr, g in ((mu, d_mu), (s, d_s)):
        for i in range(n):
            old = arr[i]
            arr[i] = old + eps
            fp = heteroscedastic_loss(y, mu, s)
            arr[i] = old - eps
            fm = heteroscedastic_loss(y, mu, s)
            arr[i] = old
            num = (fp - fm) / (2 * eps)
            worst = max(worst, abs(num - g[i]) / max(abs(num), abs(g[i]), 1e-12))
    return worst
