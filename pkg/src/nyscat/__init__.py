"""High-order Nystrom boundary-integral solver for PEC scattering.

Closed Clenshaw-Curtis patch grids with explicit surface-current continuity
across patch boundaries; an interior-node (open grid) baseline and a magnetic
field formulation are included for reference comparisons.
"""

from nyscat.spectral import (
    cc_nodes,
    cc_weights,
    fejer_nodes,
    fejer_weights,
    cheb_transform,
    cheb_inverse_transform,
    cheb_eval,
    cheb_eval_2d,
)

__version__ = "0.1.0"

__all__ = [
    "cc_nodes",
    "cc_weights",
    "fejer_nodes",
    "fejer_weights",
    "cheb_transform",
    "cheb_inverse_transform",
    "cheb_eval",
    "cheb_eval_2d",
    "__version__",
]
