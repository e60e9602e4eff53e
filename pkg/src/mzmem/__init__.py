"""Memory estimation and closure models for reduced conditional-mean dynamics.

Modules
-------
dynsys
    Dynamical systems, weight densities and the benchmark registry.
mzlinear
    Projection algebra, semigroup constants and a-priori memory bounds for
    linear systems.
closures
    Hierarchical memory closures (H-, t-, Ht-models).
odeint
    Fixed-step RK4 integration and trajectory containers.
sampling
    Monte-Carlo conditional means, Gibbs sampling and equilibrium correlations.
glekernel
    Memory kernels of the generalized Langevin equation by Laplace inversion.
expcli
    Experiment runner behind the ``mzmem`` command.
"""

__version__ = "0.1.0"
