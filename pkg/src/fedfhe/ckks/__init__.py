"""Self-contained leveled approximate-arithmetic FHE engine.

Scheme shape: power-of-two cyclotomic ring, RNS limbs over NTT-friendly
primes, approximate fixed-point encoding in the complex canonical
embedding, hybrid RNS-digit key switching, drop-a-prime rescaling with
exact power-of-two scale bookkeeping.
"""

from .params import FheParams, make_params, DESK_PROFILE, STD128_PROFILE
from .encoding import Plaintext, encode, decode
from .keys import KeySet, keygen
from .cipher import (
    CtVector, encrypt, decrypt, add, sub, negate, add_plain, sub_plain,
    cmult, cmult_int, mult, square, rescale, rotate, drop_to_level,
)
from .serialize import serialize_ct, deserialize_ct, ct_nbytes

__all__ = [
    "FheParams", "make_params", "DESK_PROFILE", "STD128_PROFILE",
    "Plaintext", "encode", "decode", "KeySet", "keygen",
    "CtVector", "encrypt", "decrypt", "add", "sub", "negate",
    "add_plain", "sub_plain", "cmult", "cmult_int", "mult", "square",
    "rescale", "rotate", "drop_to_level",
    "serialize_ct", "deserialize_ct", "ct_nbytes",
]
