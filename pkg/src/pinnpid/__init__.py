"""Adaptive PID gain tuning driven by a physics-informed neural surrogate.

The package covers the full pipeline: ground-truth plants and RK4 rollout
(`plants`), Latin hypercube training data (`sampling`), the differentiable
surrogate network (`network`, `model`), composite data+physics training
(`training`), the time-varying PID law (`pid`), segment-wise gain
optimization (`gainopt`), the closed-loop executor (`closedloop`),
frequency-domain stability analysis (`stability`) and the experiment
harness (`config`, `cli`, `plotting`).
"""

from pinnpid.network import FeedforwardNet, InputScaling, NetworkSpec, glorot_params
from pinnpid.model import PinnModel, load_model, save_model

__all__ = [
    "FeedforwardNet",
    "InputScaling",
    "NetworkSpec",
    "glorot_params",
    "PinnModel",
    "load_model",
    "save_model",
]

__version__ = "0.1.0"
