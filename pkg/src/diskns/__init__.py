"""Spectral Galerkin solver for 2D stochastic Navier-Stokes flow on the unit
disk under Navier slip-with-friction boundary conditions, including the
zero-viscosity (stochastic Euler) limit.

Subpackages:

- ``bessel``      -- Bessel functions J_n, J_n' for the eigenproblem
- ``diskbasis``   -- Stokes-operator eigenbasis on the disk (secular equation,
                     quadrature, normalization, cache)
- ``noise``       -- trace-class Q-Wiener increments and summability reports
- ``galerkin``    -- spectral operators and the semi-implicit Euler-Maruyama
                     integrator
- ``diagnostics`` -- energy-identity audit, vorticity norms, boundary residuals
- ``experiments`` -- Monte Carlo studies (uniform bounds, inviscid limit)
- ``cli``         -- command-line entry point
"""

__version__ = "0.1.0"
