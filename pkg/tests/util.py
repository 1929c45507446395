"""Shared test helpers: finite-difference gradient checking."""

import numpy as np

from diffplan import gradcore as gc


def fd_gradients(loss_fn, store, h=1e-4):
    """Central finite differences of loss_fn w.r.t. every parameter in store."""
    grads = {}
    for name, p in store.items():
        flat = p.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = float(loss_fn().data)
            flat[i] = orig - h
            lm = float(loss_fn().data)
            flat[i] = orig
            g[i] = (lp - lm) / (2.0 * h)
        grads[name] = g.reshape(p.data.shape)
    return grads


def check_gradients(loss_fn, store, h=1e-4, rtol=1e-4, atol=1e-7):
    """Backprop loss_fn once and compare against central differences.

    Returns the worst mismatch as (name, analytic, numeric, error) for
    reporting; raises AssertionError on failure.  The absolute floor covers
    coordinates whose true gradient is essentially zero, where the relative
    criterion is meaningless against O(h^2) truncation noise.
    """
    store.zero_grad()
    loss = loss_fn()
    gc.backward(loss)
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in store.items()}
    numeric = fd_gradients(loss_fn, store, h)
    worst = ("", 0.0, 0.0, 0.0)
    for name in analytic:
        a, f = analytic[name].reshape(-1), numeric[name].reshape(-1)
        err = np.abs(a - f) - rtol * np.maximum(np.abs(a), np.abs(f)) - atol
        i = int(np.argmax(err))
        if err[i] > worst[3]:
            worst = (name, float(a[i]), float(f[i]), float(err[i]))
        assert err[i] <= 0, f"{name}[{i}]: analytic {a[i]:.8g} vs fd {f[i]:.8g}"
    return worst
