"""Fixed-point encoding and pairwise masking of weight vectors.

Weights are encoded into 64-bit words (F fractional bits, wraparound modulus
2^64) so that pairwise masks cancel bit-exactly in the server's modular sum.
The sign convention is fixed by client index: within a pair the lower index
adds the mask words, the higher index subtracts them.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EncodingError, ParameterError, ProtocolError

MASK_MODULUS = 2**64


@dataclass(frozen=True)
class FixedPointCodec:
    """Real <-> modular-word codec with F fractional bits over 2^64 words."""

    fractional_bits: int = 24

    def __post_init__(self):
        if not (0 < self.fractional_bits < 40):
            raise ParameterError(
                f"fractional_bits must be in (0, 40), got {self.fractional_bits}")

    @property
    def modulus(self) -> int:
        return MASK_MODULUS

    @property
    def scale(self) -> int:
        return 2**self.fractional_bits

    @property
    def magnitude_bound(self) -> float:
        """B = 2^63 / 2^F: largest encodable magnitude (exclusive)."""
        return float(2 ** (63 - self.fractional_bits))


@dataclass(frozen=True)
class MaskedVector:
    """One client's masked submission for one iteration."""

    words: np.ndarray  # uint64, length m+1
    client_id: int
    iteration: int

    def __post_init__(self):
        if self.words.dtype != np.uint64:
            raise ProtocolError("masked words must be uint64")

    def to_bytes(self) -> bytes:
        """Wire format: <u4 iteration, <u4 client id, <u4 word count,
        then little-endian 64-bit words."""
        header = struct.pack("<III", self.iteration, self.client_id, len(self.words))
        return header + self.words.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes) -> "MaskedVector":
        if len(payload) < 12:
            raise ProtocolError("masked-vector payload shorter than header")
        iteration, client_id, count = struct.unpack_from("<III", payload)
        body = payload[12:]
        if len(body) != 8 * count:
            raise ProtocolError(
                f"masked-vector payload holds {len(body)} body bytes, expected {8 * count}")
        words = np.frombuffer(body, dtype="<u8").astype(np.uint64)
        return cls(words=words, client_id=client_id, iteration=iteration)


@dataclass
class PairAssignment:
    """A client's view of its pairs for one iteration, with expanded masks.

    ``masks`` maps normalized pairs (i, j), i < j, to this iteration's mask
    words; both members of the pair hold identical words.
    """

    pairs: list[tuple[int, int]]
    masks: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for i, j in self.pairs:
            if i >= j:
                raise ProtocolError(f"pair ({i}, {j}) not normalized as i < j")
            if (i, j) in seen:
                raise ProtocolError(f"pair ({i}, {j}) listed twice")
            seen.add((i, j))

    def pairs_of(self, client: int) -> list[tuple[int, int]]:
        return [p for p in self.pairs if client in p]


def encode(codec: FixedPointCodec, w: np.ndarray) -> np.ndarray:
    """round(w * 2^F) mod 2^64; negatives wrap into the upper half."""
    w = np.asarray(w, dtype=np.float64)
    scaled = np.rint(w * codec.scale)
    # Gate on the scaled value: near the bound, the float product can round
    # up to exactly 2^63 and overflow the signed cast.
    if scaled.size and np.max(np.abs(scaled)) >= 2.0**63:
        raise EncodingError(
            f"magnitude {np.max(np.abs(w))} exceeds codec bound {codec.magnitude_bound}")
    return scaled.astype(np.int64).view(np.uint64)


def decode_sum(codec: FixedPointCodec, total, n: int) -> np.ndarray | float:
    """Center-lift a modular sum into (-2^63, 2^63), rescale, divide by n.

    Valid only while the true signed sum stays inside the lift range; the run
    configuration enforces that bound at startup.
    """
    if n < 1:
        raise ParameterError(f"party count must be >= 1, got {n}")
    arr = np.atleast_1d(np.asarray(total, dtype=np.uint64))
    signed = arr.view(np.int64).astype(np.float64)
    result = signed / codec.scale / n
    return float(result[0]) if np.isscalar(total) or np.ndim(total) == 0 else result


def mask(assignment: PairAssignment, client: int, encoded: np.ndarray,
         noise_words: np.ndarray, iteration: int = 0) -> MaskedVector:
    """Apply the index-ordered pairwise masks and the encoded noise.

    y = encoded + noise + sum(masks of pairs where client is the lower index)
                        - sum(masks where it is the higher index),  mod 2^64.
    """
    pairs = assignment.pairs_of(client)
    if not pairs and assignment.pairs:
        raise ProtocolError(f"client {client} not covered by the pair assignment")
    words = encoded.astype(np.uint64) + noise_words.astype(np.uint64)
    for i, j in pairs:
        m = assignment.masks.get((i, j))
        if m is None:
            raise ProtocolError(f"no mask words expanded for pair ({i}, {j})")
        if len(m) != len(words):
            raise ProtocolError("mask width does not match weight count")
        if client == i:
            words = words + m
        else:
            words = words - m
    return MaskedVector(words=words.astype(np.uint64), client_id=client,
                        iteration=iteration)


def aggregate(msgs: list[MaskedVector], codec: FixedPointCodec, n: int) -> np.ndarray:
    """Modular per-weight sum of all submissions, then decode to the average."""
    if len(msgs) != n:
        raise ProtocolError(f"expected {n} submissions, got {len(msgs)}")
    seen = sorted(m.client_id for m in msgs)
    if len(set(seen)) != n:
        raise ProtocolError(f"duplicate client submissions: {seen}")
    iterations = {m.iteration for m in msgs}
    if len(iterations) != 1:
        raise ProtocolError(f"mixed iterations in inbox: {sorted(iterations)}")
    lengths = {len(m.words) for m in msgs}
    if len(lengths) != 1:
        raise ProtocolError(f"mixed vector lengths in inbox: {sorted(lengths)}")
    total = np.zeros(lengths.pop(), dtype=np.uint64)
    for m in msgs:
        total = total + m.words
    return decode_sum(codec, total, n)
