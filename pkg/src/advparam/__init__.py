"""Adversarial parameter attacks on ReLU networks.

Training, robustness measurement, gradient-guided weight-space attacks, and
the constructive weight-surgery procedures with their closed-form rate bounds.

Submodules:
    mlp         forward/backward passes, parameter containers, model files
    data        dataset generators, JSON and IDX readers
    train       SGD training, standard or adversarial
    attack      gradient-guided parameter attacks inside L-inf / swap budgets
    metrics     robustness measures and adversarial-rate arithmetic
    theory      constructive attacks with guarantees, closed-form bounds
    experiment  budget sweeps producing CSV/JSON reports
    cli         the `advparam` command-line front end
"""

__version__ = "0.1.0"
