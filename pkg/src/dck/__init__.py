"""Deep classifier kriging: spatial prediction by classifying discretized responses.

Submodules: ``simgen`` (synthetic fields), ``fusion`` (harmonizing two
variables observed at different sites), ``discretize`` (classes), ``embed``
(Wendland basis features), ``classifier`` (the network), ``cdf`` (predictive
distributions), ``metrics``, ``baseline`` (Gaussian-process kriging) and
``pipeline``/``cli`` for end-to-end runs.
"""
__version__ = "0.1.0"
