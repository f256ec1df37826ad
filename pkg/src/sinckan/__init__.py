"""Sinc Kolmogorov-Arnold networks, baseline architectures and PINN training."""

import jax

jax.config.update("jax_enable_x64", True)

from . import autodiff, bases, networks, params, pinn, problems, training  # noqa: E402

__version__ = "0.1.0"

__all__ = ["autodiff", "bases", "networks", "params", "pinn", "problems", "training"]
