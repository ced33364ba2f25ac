"""Imitation learning with a fixed reward built from expert support estimation.

Submodules: ``nn`` (MLP + Adam), ``kernel`` (kernel-PCA support score),
``estimators`` (RND, autoencoder and exact-set scorers), ``reward``,
``envs``, ``rl`` (DQN, tabular Q-learning, behavioral cloning), ``harness``
and ``report`` (pipeline, CSV/SVG artifacts), ``cli``.
"""

__version__ = "0.1.0"
