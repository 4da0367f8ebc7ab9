"""Diffie-Hellman key agreement and the per-iteration mask randomness chain.

Each client pair derives a shared key once, then refreshes it every protocol
iteration with a length-doubling generator: the expanded block splits into the
iteration's mask key and the seed for the next expansion.  Per-weight mask
words come from a counter-free XOF expansion of the iteration key, so both
ends of a pair reproduce identical mask vectors without further messages.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ProtocolError

# Fixed toy group for exhaustive tests: p = 23 is a safe prime (23 = 2*11 + 1).
# 5 is a primitive root mod 23, so its order is 2q = 22 rather than q; key
# agreement only needs a common cyclic subgroup, and tests enumerate it.
TOY_P = 23
TOY_Q = 11
TOY_G = 5

# RFC 3526 group 14 (2048-bit MODP): p safe prime, g = 2 generates the
# subgroup of order q = (p - 1) / 2.
_MODP_2048_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)

_MIN_TOY_BITS = 8
_MIN_PRODUCTION_BITS = 2048


@dataclass(frozen=True)
class GroupParams:
    """Cyclic-group description: prime modulus p, subgroup order q, generator g.

    ``lambda_bits`` is the security parameter; it fixes the width of derived
    keys and of the per-iteration mask chain values.
    """

    p: int
    q: int
    g: int
    lambda_bits: int

    def __post_init__(self):
        if self.lambda_bits % 8 != 0:
            raise ParameterError(f"lambda_bits must be a multiple of 8, got {self.lambda_bits}")
        if not (1 < self.g < self.p):
            raise ParameterError("generator outside (1, p)")

    @property
    def key_bytes(self) -> int:
        return self.lambda_bits // 8

    def contains(self, element: int) -> bool:
        """Range membership check for transmitted group elements."""
        return 1 <= element < self.p

    def to_strings(self) -> dict:
        """Decimal-string form for the run manifest."""
        return {"p": str(self.p), "q": str(self.q), "g": str(self.g),
                "lambda_bits": self.lambda_bits}


@dataclass(frozen=True)
class KeyPair:
    secret: int
    public: int

    @classmethod
    def from_secret(cls, params: GroupParams, secret: int) -> "KeyPair":
        return cls(secret=secret, public=pow(params.g, secret, params.p))


@dataclass(frozen=True)
class SharedKey:
    """Symmetric pairwise key: both ends derive identical bits."""

    key: bytes


@dataclass(frozen=True)
class MaskChainState:
    """Per-pair chain state.  ``seed`` feeds the next expansion; ``current``
    is the most recent iteration key (None before the first advance)."""

    seed: bytes
    current: bytes | None
    iteration: int
    width_bits: int


def is_probable_prime(n: int, rounds: int = 16) -> bool:
    """Miller-Rabin with fixed small bases plus pseudorandom ones."""
    if n < 2:
        return False
    for sp in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % sp == 0:
            return n == sp
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    # Deterministic bases cover n < 3.3e24; extra bases for big n.
    bases = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37]
    rng = np.random.default_rng(n % (2**32))
    while len(bases) < rounds:
        bases.append(int(rng.integers(2, min(n - 2, 2**62))))
    for a in bases:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def generate_group(lambda_bits: int, test_mode: bool = False) -> GroupParams:
    """Return group parameters for the requested security level.

    test_mode returns the fixed toy group (enumerable, reproducible);
    otherwise a standardized well-known MODP group is used — generating fresh
    large safe primes is out of scope and standardized parameters are the
    accepted practice.
    """
    if test_mode:
        if lambda_bits < _MIN_TOY_BITS:
            raise ParameterError(f"toy lambda_bits must be >= {_MIN_TOY_BITS}, got {lambda_bits}")
        return GroupParams(p=TOY_P, q=TOY_Q, g=TOY_G, lambda_bits=lambda_bits)
    if lambda_bits < _MIN_PRODUCTION_BITS:
        raise ParameterError(
            f"production lambda_bits must be >= {_MIN_PRODUCTION_BITS}, got {lambda_bits}")
    if lambda_bits != 2048:
        raise ParameterError(f"no standardized group wired for lambda_bits={lambda_bits}")
    p = _MODP_2048_P
    q = (p - 1) // 2
    if not (is_probable_prime(p) and is_probable_prime(q)):
        raise ParameterError("standardized group failed primality validation")
    return GroupParams(p=p, q=q, g=2, lambda_bits=lambda_bits)


def keygen(params: GroupParams, rng: np.random.Generator) -> KeyPair:
    """Draw a secret uniformly from Z_q and return (secret, g^secret mod p)."""
    nbytes = (params.q.bit_length() + 7) // 8
    excess = nbytes * 8 - params.q.bit_length()
    while True:
        candidate = int.from_bytes(rng.bytes(nbytes), "big") >> excess
        if candidate < params.q:
            break
    return KeyPair.from_secret(params, candidate)


def kdf(params: GroupParams, element: int) -> bytes:
    """Derive lambda_bits of key material from a group element (XOF-based)."""
    if not params.contains(element):
        raise ProtocolError(f"element {element} outside group range [1, p)")
    width = (params.p.bit_length() + 7) // 8
    material = b"kdf|" + element.to_bytes(width, "big")
    return hashlib.shake_256(material).digest(params.key_bytes)


def agree(params: GroupParams, my_secret: int, their_public: int) -> SharedKey:
    """Both directions of a pair derive the same key from g^(ab) mod p."""
    if not params.contains(their_public):
        raise ProtocolError(f"public key {their_public} outside group range [1, p)")
    common = pow(their_public, my_secret, params.p)
    return SharedKey(key=kdf(params, common))


def chain_from_key(shared: SharedKey, lambda_bits: int) -> MaskChainState:
    """Initial chain state: the shared key seeds the first expansion."""
    if len(shared.key) * 8 != lambda_bits:
        raise ParameterError("shared key width does not match lambda_bits")
    return MaskChainState(seed=shared.key, current=None, iteration=0,
                          width_bits=lambda_bits)


def prg_advance(state: MaskChainState) -> tuple[bytes, MaskChainState]:
    """One double-expansion step: seed -> (iteration key, next seed)."""
    width = state.width_bits // 8
    block = hashlib.shake_256(b"prg|" + state.seed).digest(2 * width)
    new_r, new_seed = block[:width], block[width:]
    return new_r, MaskChainState(seed=new_seed, current=new_r,
                                 iteration=state.iteration + 1,
                                 width_bits=state.width_bits)


def expand_masks(r: bytes, count: int, modulus: int = 2**64) -> np.ndarray:
    """Expand an iteration key into ``count`` mask words uniform on [0, modulus).

    Deterministic in ``r``: both ends of a pair call this with identical keys
    and obtain identical vectors.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if not (2 <= modulus <= 2**64):
        raise ParameterError("modulus must be in [2, 2^64]")
    raw = hashlib.shake_256(b"mask|" + r).digest(8 * count)
    words = np.frombuffer(raw, dtype="<u8")
    if modulus != 2**64:
        # Modulo fold; acceptable bias for non-power-of-two moduli in tests.
        words = words % np.uint64(modulus)
    return words.copy()
