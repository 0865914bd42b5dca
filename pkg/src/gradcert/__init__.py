"""gradcert: grid-verified checks and explicit tensor certificates for
gradient-like vector fields, plus Weinstein structure deformation.

All verdicts produced by this package are statements about tested sample
points, never proofs; passing reports carry the caveat string
"grid-verified, not a proof" verbatim.
"""

from .backend import BACKEND_NAME

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "__version__"]
