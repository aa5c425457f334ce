"""QAOA with chaotic-map parameterizations (QACOA) for MAX K-SAT.

Modules: ``sat`` (instances, cost diagonal), ``chaos`` (logistic map),
``schemes`` (theta to layer angles), ``simulator`` (state vectors,
gradients), ``spsa`` (optimizer), ``diagnostics`` (trainability probes),
``runner`` (seeded sweeps) and ``cli``.
"""

from .sat import SatInstance, build_cost_diagonal, generate_random_instance, parse_dimacs, read_dimacs
from .schemes import SchemeSpec
from .simulator import evaluate, landscape_scan, theta_gradient
from .spsa import SpsaConfig, optimize

__version__ = "0.1.0"
