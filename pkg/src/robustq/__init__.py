"""robustq: adversarially robust training for low-bitwidth quantized CNNs.

A numpy laboratory for studying how quantized networks behave under
adversarial attack: a small reverse-mode autodiff engine, uniform and binary
fake-quantizers with straight-through gradients, an l-inf attack suite, a
Gaussian-kernel MMD alignment loss, an online multi-domain adversarial
trainer that maintains a rotating global perturbation store, and an
evaluation harness (white/black-box robustness, loss surfaces, a
generalization-bound report).
"""

from . import attacks, data, engine, evaluate, mmd, model, quantize, train

__all__ = [
    "attacks",
    "data",
    "engine",
    "evaluate",
    "mmd",
    "model",
    "quantize",
    "train",
]

__version__ = "0.1.0"
