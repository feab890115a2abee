"""Particle counting with detector back-action for a one-dimensional matter wave.

Modules
-------
specfun      erfc, Faddeeva and Moshinsky functions
propagators  free and point-absorber propagators
evolution    free, exact and Born amplitudes at the detector
gridsolver   Crank-Nicolson reference solver with absorbers
counting     counting distributions, intensities and tables
cli          the ``count`` command
"""
__version__ = "0.1.0"
