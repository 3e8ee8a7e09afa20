"""Forward equations for SDE flows started from compactly supported distributions.

Modules: ``hermite`` (Hermite-Sobolev bases and operators), ``flow``
(Euler-Maruyama flows with derivative tensors), ``distributions``
(pushforward of distributions and the pathwise SPDE residual), ``solver``
(Monte Carlo and Galerkin forward solvers, transition kernels), ``checks``
(property checkers) and ``cli``.
"""

__version__ = "0.1.0"
