"""Barycenter existence criteria for Sasaki manifolds with a reductive group action.

Modules, bottom up:

- :mod:`algebra`: exact linear algebra, root data, Weyl groups, Smith form;
- :mod:`cone`: moment cones, good-cone validation, the Fano functional;
- :mod:`polytope`: characteristic and projected polytopes, triangulations;
- :mod:`measure`: exact moments and quadrature for exponential weights;
- :mod:`verdict`: barycenter criteria, Futaki residuals, solitons, sweeps;
- :mod:`kenergy`: the reduced K-energy and its test functions;
- :mod:`cli`: the ``sasaki-cone`` command.
"""

__version__ = "0.1.0"
