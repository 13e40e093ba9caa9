"""sharplab: desk-scale measurement of SGD sharpness and stability.

Subpackages:
- numerics: dense symmetric linear algebra, power iteration, Lyapunov maps
- quadratic: random-quadratic dynamics with closed-form oracles
- metrics: oracle-generic sharpness estimators and the oscillation probe
- mlp: a from-scratch MLP back end with exact Hessian-vector products
- harness: declarative experiment runner and artifact writer
"""

from .backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
