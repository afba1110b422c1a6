"""Numerical homogenization of high-contrast Hall-perturbed columnar composites"""

from columnar_homog._version import __version__
