"""Goal-conditioned actor-critic learning for table tennis returns.

Modules:

* ``physics``   - ball flight ODE, RK4, bounce models, event detection
* ``env``       - the one-step return task: serves, actions, rewards, noise
* ``neuralnet`` - small MLPs with exact backprop, Adam, gradient checks
* ``aprg``      - the reward-parameter actor-critic and its training loop
* ``harness``   - experiments, random search, mode comparison, plot data
"""
from .aprg import AprgConfig, run_training
from .env import Action, EnvConfig, Goal, RewardParams, scenario
from .harness import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AprgConfig",
    "EnvConfig",
    "ExperimentConfig",
    "Goal",
    "RewardParams",
    "run_experiment",
    "run_training",
    "scenario",
]
