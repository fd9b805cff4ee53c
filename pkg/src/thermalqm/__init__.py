"""Finite-dimensional quantum mechanics built on q-expectations.

Submodules: :mod:`qcore` (states, quantities, Gibbs states), :mod:`measure`
(POVMs and filters), :mod:`tomography`, :mod:`stokes` (polarization
optics), :mod:`dynamics` (hybrid, Koopman and variational dynamics),
:mod:`stochastic` (master equation, quantum jumps, bistability) and
:mod:`cli`.
"""

__version__ = "0.1.0"
