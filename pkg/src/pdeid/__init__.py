"""Identify which terms of ``e u_tt + d u_t - c lap(u) + B.grad(u) = 0`` generated
a simulated 2D field, using signal, motion and symmetry features with
gradient-boosted trees."""

__version__ = "0.1.0"
