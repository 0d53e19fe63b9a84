"""Three-party private transformer inference.

P0 holds the model weights, P1 holds the prompt and receives the generated
tokens, and P2 is a dealer that only takes part before the inputs exist.
Linear layers use dealer-assisted multiplication on additive shares;
nonlinear functions are evaluated in the clear by P1 on inputs permuted
by P0; the next token is retrieved from P0's permutation with packed
lattice encryption.
"""

from . import bench, model, pir, protocols, sharing, transport
from .errors import PrivInferError
from .party import Party, party_rng, run_local
from .roles import Role

__version__ = "0.1.0"

__all__ = ["Party", "PrivInferError", "Role", "bench", "model", "party_rng", "pir",
           "protocols", "run_local", "sharing", "transport", "__version__"]
