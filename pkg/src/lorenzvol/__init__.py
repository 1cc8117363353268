"""Measure diagnostics for singular-hyperbolic model attractors.

Exact Cantor covers, Lorenz-like interval maps, the geometric Lorenz return
map and suspension, solenoid slices, cone and splitting diagnostics, and a
box-subdivision engine for trapped-set volumes.
"""

__version__ = "0.1.0"
