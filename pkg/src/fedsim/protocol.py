"""Client and server state machines for the secure weighted-average protocol.

Flow per run: a one-time setup where every client generates one keypair per
neighbor and the server relays the public keys (clients never talk to each
other directly), then T iterations of train -> add noise -> mask -> submit,
with the server summing the masked words and broadcasting the decoded average
back.  Pairwise mask chains advance once per iteration on both ends, so no
further key traffic occurs after setup.

Neighborhoods are either the complete graph or a circulant graph where client
i pairs with i+1 .. i+d (mod n), d = ceil(log2 n).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import data as datamod
from . import group_crypto, learner, privacy, rng as rngmod, secure_agg
from .errors import ProtocolError
from .secure_agg import MaskedVector

FULL = "full"
LOGN = "logn"

PHASE_DH = "dh_setup"
PHASE_TRAIN = "training"
PHASE_ENCRYPT = "encrypt"
PHASE_SERVER_RECEIVE = "server_receive"
PHASE_SERVER_COMBINE = "server_combine"
PHASE_RELAY = "relay"

SETUP_1 = "setup-1"
SETUP_2 = "setup-2"
TRAINING = "training"
AWAITING = "awaiting-model"
DONE = "done"


# -- message payloads ----------------------------------------------------

@dataclass(frozen=True)
class StartSetup:
    """Kernel kick-off delivered to every client at t=0."""


@dataclass(frozen=True)
class PubkeyRelay:
    """One public key addressed to ``target``, routed via the server."""

    origin: int
    target: int
    public: int


@dataclass(frozen=True)
class ModelBroadcast:
    """Aggregated model for ``iteration``; final=True doubles as the
    terminal marker (a separate trailing message could overtake the weights
    under jittered latency)."""

    iteration: int
    weights: tuple
    final: bool


# -- neighbor graph --------------------------------------------------------

@dataclass(frozen=True)
class NeighborGraph:
    mode: str
    n: int
    pairs: tuple[tuple[int, int], ...]
    adjacency: dict[int, tuple[int, ...]]

    @classmethod
    def build(cls, n: int, mode: str = FULL) -> "NeighborGraph":
        if n < 1:
            raise ProtocolError(f"need at least one client, got {n}")
        if mode not in (FULL, LOGN):
            raise ProtocolError(f"unknown neighborhood mode {mode!r}")
        pairs: set[tuple[int, int]] = set()
        if mode == FULL:
            pairs = {(i, j) for i in range(n) for j in range(i + 1, n)}
        else:
            d = cls.log_degree(n)
            for i in range(n):
                for k in range(1, d + 1):
                    j = (i + k) % n
                    if j != i:
                        pairs.add((min(i, j), max(i, j)))
        adjacency: dict[int, list[int]] = {i: [] for i in range(n)}
        for i, j in pairs:
            adjacency[i].append(j)
            adjacency[j].append(i)
        return cls(mode=mode, n=n,
                   pairs=tuple(sorted(pairs)),
                   adjacency={i: tuple(sorted(v)) for i, v in adjacency.items()})

    @staticmethod
    def log_degree(n: int) -> int:
        """Forward partners per client in logn mode: ceil(log2 n)."""
        return max(1, math.ceil(math.log2(n))) if n >= 2 else 0

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]


# -- run record --------------------------------------------------------------

@dataclass
class RunRecord:
    """Everything the post-run analyses need: per-client local weights and
    noise, the masked submissions, and the broadcast models."""

    n: int
    iterations: int
    codec: secure_agg.FixedPointCodec
    group: group_crypto.GroupParams
    graph: NeighborGraph
    client_weights: dict = field(default_factory=dict)   # (iter, client) -> w
    client_noise: dict = field(default_factory=dict)     # (iter, client) -> eta
    masked: dict = field(default_factory=dict)           # (iter, client) -> words
    broadcasts: dict = field(default_factory=dict)       # iter -> W
    published_keys: dict = field(default_factory=dict)   # (origin, target) -> pk

    @property
    def final_model(self) -> np.ndarray:
        if not self.broadcasts:
            raise ProtocolError("run produced no broadcasts")
        return self.broadcasts[max(self.broadcasts)]


# -- agents ----------------------------------------------------------------

class ClientAgent:
    """One protocol party: trains locally, masks, submits, repeats."""

    def __init__(self, client_id: int, server_id: int, graph: NeighborGraph,
                 group: group_crypto.GroupParams, codec: secure_agg.FixedPointCodec,
                 privacy_config: privacy.PrivacyConfig | None,
                 train_config: learner.TrainConfig, train_data: datamod.Dataset,
                 weight_count: int, run_seed: int, record: RunRecord,
                 sample_rows: int = datamod.DEFAULT_SAMPLE_ROWS,
                 allow_small: bool = False):
        self.agent_id = client_id
        self.server_id = server_id
        self.graph = graph
        self.group = group
        self.codec = codec
        self.privacy_config = privacy_config
        self.train_config = train_config
        self.train_data = train_data
        self.weight_count = weight_count
        self.run_seed = run_seed
        self.record = record
        self.sample_rows = sample_rows
        self.allow_small = allow_small

        self.phase = SETUP_1
        self.iteration = 0
        self.weights = np.zeros(weight_count)
        self.keypairs: dict[int, group_crypto.KeyPair] = {}
        self.chains: dict[tuple[int, int], group_crypto.MaskChainState] = {}
        self._pending_keys: set[int] = set(graph.neighbors(client_id))
        self._setup_ns = 0

    # -- kernel callback ------------------------------------------------

    def on_message(self, kernel, when, sender, payload):
        if isinstance(payload, StartSetup):
            self._do_setup_round1(kernel)
        elif isinstance(payload, PubkeyRelay):
            self._do_setup_round2(kernel, payload)
        elif isinstance(payload, ModelBroadcast):
            self._on_model(kernel, payload)
        else:
            raise ProtocolError(f"client {self.agent_id} got unexpected {type(payload).__name__}")

    # -- setup ------------------------------------------------------------

    def _do_setup_round1(self, kernel):
        if self.phase != SETUP_1:
            raise ProtocolError(f"client {self.agent_id} started twice")
        t0 = time.perf_counter_ns()
        secret_rng = rngmod.stream(self.run_seed, rngmod.DH_SECRET, self.agent_id)
        for j in self.graph.neighbors(self.agent_id):
            self.keypairs[j] = group_crypto.keygen(self.group, secret_rng)
        self._setup_ns += time.perf_counter_ns() - t0
        self.phase = SETUP_2
        for j in self.graph.neighbors(self.agent_id):
            kernel.send(self.agent_id, self.server_id,
                        PubkeyRelay(origin=self.agent_id, target=j,
                                    public=self.keypairs[j].public))
        if not self._pending_keys:  # n == 1: no pairs at all
            kernel.charge(self.agent_id, PHASE_DH, 0, self._setup_ns)
            self._start_iteration(kernel, np.zeros(self.weight_count))

    def _do_setup_round2(self, kernel, relay: PubkeyRelay):
        if self.phase != SETUP_2:
            raise ProtocolError(
                f"client {self.agent_id} got a key relay while in phase {self.phase}")
        if relay.target != self.agent_id:
            raise ProtocolError(f"misrouted key relay for {relay.target}")
        if relay.origin not in self._pending_keys:
            raise ProtocolError(
                f"client {self.agent_id} got duplicate or foreign key from {relay.origin}")
        t0 = time.perf_counter_ns()
        shared = group_crypto.agree(self.group, self.keypairs[relay.origin].secret,
                                    relay.public)
        pair = (min(self.agent_id, relay.origin), max(self.agent_id, relay.origin))
        self.chains[pair] = group_crypto.chain_from_key(shared, self.group.lambda_bits)
        self._pending_keys.discard(relay.origin)
        self._setup_ns += time.perf_counter_ns() - t0
        if not self._pending_keys:
            kernel.charge(self.agent_id, PHASE_DH, 0, self._setup_ns)
            self._start_iteration(kernel, np.zeros(self.weight_count))

    # -- weighted-average rounds -------------------------------------------

    def _start_iteration(self, kernel, start_weights: np.ndarray):
        self.phase = TRAINING
        self.iteration += 1
        sample = datamod.sample_local(self.train_data, self.agent_id, self.iteration,
                                      self.run_seed, rows=self.sample_rows,
                                      allow_small=self.allow_small)

        t0 = time.perf_counter_ns()
        self.weights = learner.train(start_weights, sample.features, sample.labels,
                                     self.train_config)
        kernel.charge(self.agent_id, PHASE_TRAIN, self.iteration,
                      time.perf_counter_ns() - t0)

        t0 = time.perf_counter_ns()
        noise = self._draw_noise()
        assignment = self._advance_masks()
        encoded = secure_agg.encode(self.codec, self.weights)
        noise_words = secure_agg.encode(self.codec, noise.values)
        masked = secure_agg.mask(assignment, self.agent_id, encoded, noise_words,
                                 iteration=self.iteration)
        kernel.charge(self.agent_id, PHASE_ENCRYPT, self.iteration,
                      time.perf_counter_ns() - t0)

        self.record.client_weights[(self.iteration, self.agent_id)] = self.weights.copy()
        self.record.client_noise[(self.iteration, self.agent_id)] = noise.values.copy()
        self.record.masked[(self.iteration, self.agent_id)] = masked.words.copy()
        self.phase = AWAITING
        kernel.send(self.agent_id, self.server_id, masked)

    def _draw_noise(self) -> privacy.NoiseVector:
        if self.privacy_config is None:
            return privacy.NoiseVector(values=np.zeros(self.weight_count),
                                       client_id=self.agent_id, iteration=self.iteration)
        gen = rngmod.stream(self.run_seed, rngmod.NOISE, self.agent_id, self.iteration)
        return privacy.make_noise(self.privacy_config, self.weight_count, gen,
                                  client_id=self.agent_id, iteration=self.iteration)

    def _advance_masks(self) -> secure_agg.PairAssignment:
        pairs = []
        masks = {}
        for pair, chain in sorted(self.chains.items()):
            key, self.chains[pair] = group_crypto.prg_advance(chain)
            if self.chains[pair].iteration != self.iteration:
                raise ProtocolError(
                    f"mask chain {pair} at iteration {self.chains[pair].iteration}, "
                    f"protocol at {self.iteration}")
            pairs.append(pair)
            masks[pair] = group_crypto.expand_masks(key, self.weight_count)
        return secure_agg.PairAssignment(pairs=pairs, masks=masks)

    def _on_model(self, kernel, broadcast: ModelBroadcast):
        if self.phase == DONE:
            return
        if self.phase != AWAITING or broadcast.iteration != self.iteration:
            raise ProtocolError(
                f"client {self.agent_id} got model for iteration {broadcast.iteration} "
                f"while at {self.iteration} in phase {self.phase}")
        shared = np.asarray(broadcast.weights, dtype=np.float64)
        if broadcast.final:
            self.weights = shared
            self.phase = DONE
            return
        self._start_iteration(kernel, shared)


class ServerAgent:
    """Relay for setup keys; aggregator and broadcaster for every iteration."""

    def __init__(self, server_id: int, n_clients: int, codec: secure_agg.FixedPointCodec,
                 iterations: int, record: RunRecord):
        self.agent_id = server_id
        self.n_clients = n_clients
        self.codec = codec
        self.iterations = iterations
        self.record = record
        self.inbox: dict[int, dict[int, MaskedVector]] = {}
        self.completed = 0

    def on_message(self, kernel, when, sender, payload):
        if isinstance(payload, PubkeyRelay):
            self._relay(kernel, sender, payload)
        elif isinstance(payload, MaskedVector):
            self._receive_vector(kernel, sender, payload)
        else:
            raise ProtocolError(f"server got unexpected {type(payload).__name__}")

    def _relay(self, kernel, sender, relay: PubkeyRelay):
        t0 = time.perf_counter_ns()
        if relay.origin != sender:
            raise ProtocolError(f"relay origin {relay.origin} does not match sender {sender}")
        self.record.published_keys[(relay.origin, relay.target)] = relay.public
        # Relays are plumbing, not a reported phase: zero cost in fixed mode.
        kernel.charge(self.agent_id, PHASE_RELAY, 0,
                      time.perf_counter_ns() - t0, fixed_ns=0)
        kernel.send(self.agent_id, relay.target, relay)

    def _receive_vector(self, kernel, sender, vector: MaskedVector):
        t0 = time.perf_counter_ns()
        if vector.client_id != sender:
            raise ProtocolError(f"vector from {sender} claims client {vector.client_id}")
        if vector.iteration > self.iterations:
            raise ProtocolError(f"vector for iteration {vector.iteration} beyond horizon")
        bucket = self.inbox.setdefault(vector.iteration, {})
        if sender in bucket:
            raise ProtocolError(
                f"duplicate submission from client {sender} at iteration {vector.iteration}")
        bucket[sender] = vector
        kernel.charge(self.agent_id, PHASE_SERVER_RECEIVE, vector.iteration,
                      time.perf_counter_ns() - t0)
        if len(bucket) == self.n_clients:
            self._combine(kernel, vector.iteration)

    def _combine(self, kernel, iteration: int):
        t0 = time.perf_counter_ns()
        shared = secure_agg.aggregate(list(self.inbox[iteration].values()),
                                      self.codec, self.n_clients)
        kernel.charge(self.agent_id, PHASE_SERVER_COMBINE, iteration,
                      time.perf_counter_ns() - t0)
        self.record.broadcasts[iteration] = shared
        self.completed = iteration
        final = iteration >= self.iterations
        payload = ModelBroadcast(iteration=iteration, weights=tuple(shared), final=final)
        for client in range(self.n_clients):
            kernel.send(self.agent_id, client, payload)
        del self.inbox[iteration]
