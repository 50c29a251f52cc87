"""Coupled variational inequalities with Orlicz-growth bifunctions.

Modules: ``orlicz`` (N-functions), ``sets`` and ``system`` (the coupled
system, certificates and residuals), ``probes`` (hypothesis probes),
``solvers`` (brute force, extragradient, Uzawa, ball expansion),
``fem`` (P1 frictional-contact discretization) and ``cli``.
"""
__version__ = "0.1.0"
