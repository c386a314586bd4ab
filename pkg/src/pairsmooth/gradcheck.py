"""Central finite-difference verification of the analytic gradients."""

from dataclasses import dataclass
from typing import Dict

import numpy as np

from . import nn
from .train import build_step_targets, step_batch


@dataclass
class GradCheckReport:
    max_rel_error: Dict[str, float]
    tolerance: float
    # smallest |pre-activation|; below ~eps the ReLU kink spoils the differences
    relu_margin: float = float("inf")

    @property
    def worst(self):
        return max(self.max_rel_error.values())

    @property
    def passed(self):
        return self.worst < self.tolerance


def relative_error(analytic, numeric, floor=1e-6):
    # the floor keeps near-zero partials from turning round-off into huge ratios
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def numeric_gradients(model, inputs, q, w, eps=1e-5):
    """Central differences of the loss with respect to every parameter entry."""
    probe = model.copy()
    out = {}
    for name, param in probe.params.items():
        g = np.zeros_like(param)
        flat, gflat = param.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = nn.loss_and_backward(probe, nn.forward(probe, inputs), q, w)[0]
            flat[i] = orig - eps
            down = nn.loss_and_backward(probe, nn.forward(probe, inputs), q, w)[0]
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        out[name] = g
    return out


def gradient_check(model, batch, strategy, tolerance=1e-4, eps=1e-5, seed=0,
                   step=1, analytic=None):
    """Compare analytic and numeric gradients of one training step's loss.

    ``step`` selects the step parity (odd steps pair samples for PLS).
    ``analytic`` overrides the analytic gradients, e.g. to confirm that a
    corrupted gradient is caught.
    """
    rng = np.random.default_rng(seed)
    inputs, labels = step_batch(strategy, batch, step, True, rng, rng)
    q, w = build_step_targets(strategy, labels)
    trace = nn.forward(model, inputs)
    if analytic is None:
        _, analytic = nn.loss_and_backward(model, trace, q, w)
    numeric = numeric_gradients(model, inputs, q, w, eps)
    errors = {name: float(relative_error(analytic[name], numeric[name]).max())
              for name in model.params}
    margin = min(float(np.abs(a).min()) for a in trace.pre)
    return GradCheckReport(errors, tolerance, margin)
