"""Private next-token retrieval over packed lattice ciphertexts."""

from .he import (BFV, MAX_LOG_Q, SCHEMES, CipherBatch, Ciphertext, HEParams, SecretKey,
                 StubScheme, default_plain_modulus, deserialize_batch, find_ntt_primes,
                 he_setup, serialize_batch)
from .predict import (HEContext, PredictionMaskState, prediction_setup,
                      secure_prediction_argmax, secure_prediction_offline)

__all__ = [
    "BFV", "CipherBatch", "Ciphertext", "HEContext", "HEParams", "MAX_LOG_Q",
    "PredictionMaskState", "SCHEMES", "SecretKey", "StubScheme", "default_plain_modulus",
    "deserialize_batch", "find_ntt_primes", "he_setup", "prediction_setup",
    "secure_prediction_argmax", "secure_prediction_offline", "serialize_batch",
]
