"""bsvielab: forward/backward stochastic Volterra equations on an exact binary lattice.

A desk-scale numerical laboratory.  One scalar Brownian motion is discretized
by a binary tree with increments of exactly +/- sqrt(h), which turns
conditional expectations, stochastic integrals and martingale representations
into exact finite sums.  On top of that sit solvers for linear/nonlinear
forward SDEs and Volterra equations, backward SDEs and backward Volterra
equations (including adapted M-solutions), duality checks, and a scenario
harness that verifies -- or exhibits the failure of -- a family of positivity
and comparison statements.
"""

__version__ = "0.1.0"
