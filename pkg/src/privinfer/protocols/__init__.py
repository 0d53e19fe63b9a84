"""Two-party protocols assisted by a dealer: multiplication, permutation, nonlinear."""

from .mul import (FixedMaskState, GrowingMaskState, secure_mul_fixed_offline,
                  secure_mul_fixed_online, secure_mul_fixed_prepare, secure_mul_growing_init,
                  secure_mul_growing_offline, secure_mul_growing_online)
from .nonlinear import (GELU, IDENTITY, LN_NORMALIZE, SOFTMAX, Nonlinear, NonlinearMaskState,
                        gelu_tanh, layernorm_normalize, secure_nonlinear,
                        secure_nonlinear_offline, softmax)
from .perm import (PermMaskState, Permutation2D, apply_perm2d, gen_perm2d, invert_perm,
                   invert_perm2d, permutation_count, secure_perm_offline, secure_perm_online,
                   validate_perm)

__all__ = [
    "FixedMaskState", "GELU", "GrowingMaskState", "IDENTITY", "LN_NORMALIZE", "Nonlinear",
    "NonlinearMaskState", "PermMaskState", "Permutation2D", "SOFTMAX", "apply_perm2d",
    "gelu_tanh", "gen_perm2d", "invert_perm", "invert_perm2d", "layernorm_normalize",
    "permutation_count", "secure_mul_fixed_offline", "secure_mul_fixed_online",
    "secure_mul_fixed_prepare", "secure_mul_growing_init", "secure_mul_growing_offline",
    "secure_mul_growing_online", "secure_nonlinear", "secure_nonlinear_offline",
    "secure_perm_offline", "secure_perm_online", "softmax", "validate_perm",
]
