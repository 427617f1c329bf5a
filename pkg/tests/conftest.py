"""Shared test helpers: finite-difference oracles over graph leaves."""

import numpy as np

from diffmcmc import adgraph as ag


def finite_diff_grad(root: ag.Node, leaf: ag.Node, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar root w.r.t. one leaf."""
    base = leaf.value.copy()
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        bumped = base.copy()
        bumped[ix] += h
        leaf.set_value(bumped)
        f_plus = float(ag.eval_graph(root))
        bumped = base.copy()
        bumped[ix] -= h
        leaf.set_value(bumped)
        f_minus = float(ag.eval_graph(root))
        grad[ix] = (f_plus - f_minus) / (2.0 * h)
    leaf.set_value(base)
    ag.eval_graph(root)
    return grad


def assert_matches_fd(root: ag.Node, leaves, rtol: float = 1e-5, atol: float = 1e-7):
    """Check reverse-mode gradients against the finite-difference oracle."""
    grads = ag.reverse_gradients(root, leaves)
    for leaf in leaves:
        fd = finite_diff_grad(root, leaf)
        np.testing.assert_allclose(grads[leaf], fd, rtol=rtol, atol=atol)
