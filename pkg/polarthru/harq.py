"""HARQ link simulation over AWGN with multistage decoding.

Level-dependent protocols (NC-D, CC-D) put one CRC on the whole multilevel
payload: all B level codewords are retransmitted together until the payload
checks. Level-independent protocols (NC-I, CC-I) run one HARQ session per
level, each with its own CRC. A level-n reception can only be demapped once
the codewords sent on levels 0 .. n-1 in the same channel block are known,
so receptions wait in a per-level queue while fresh codewords keep flowing
on the levels that are not blocked.
"""

from typing import Any, Callable, Deque, List, Optional, Sequence, Tuple
import collections
import concurrent.futures
import dataclasses
import enum
import time
import numpy as np
import mflog
from pydantic.dataclasses import dataclass
from polarthru.channel import awgn
from polarthru.config import (
    DEFAULT_MAX_TRANSMISSIONS,
    DEFAULT_QUEUE_CAP,
    DecoderKind,
    Protocol,
    SimulationConfiguration,
)
from polarthru.crc import crc_append, crc_check
from polarthru.errors import (
    PolarthruError,
    ProtocolViolation,
    QueueOverflow,
    RetransmissionLimitExceeded,
)
from polarthru.mlpcm import MlpcmSpec
from polarthru.modem import modulate, qam_level_llrs, cc_combine_independent, chase_equivalent
from polarthru.polar import PolarCode, embed, encode
from polarthru.state import OnlyStatesOrRaise, StateMixin

log = mflog.get_logger("polarthru.harq")


@dataclass(frozen=True)
class ThroughputRecord:
    """Counters of one or more simulated sessions.

    Attributes:
        data_bits: data bits delivered (CRC bits excluded).
        channel_uses: symbols transmitted.
        blocks: channel blocks of N symbols transmitted.
        delivered: codewords delivered.
        transmissions: transmissions spent on the delivered codewords.
        undetected: delivered codewords whose payload was wrong.
        attempts: decoding attempts, by attempt index l = 1, 2, ...
        failures: failed decoding attempts, by attempt index.
        wall_seconds: elapsed time, not part of equality.
    """

    data_bits: int = 0
    channel_uses: int = 0
    blocks: int = 0
    delivered: int = 0
    transmissions: int = 0
    undetected: int = 0
    attempts: Tuple[int, ...] = ()
    failures: Tuple[int, ...] = ()
    wall_seconds: float = dataclasses.field(default=0.0, compare=False)

    @property
    def throughput(self) -> float:
        """Delivered data bits per channel use."""
        return self.data_bits / self.channel_uses if self.channel_uses else 0.0

    @property
    def retx_mean(self) -> float:
        """Mean transmissions per delivered codeword."""
        return self.transmissions / self.delivered if self.delivered else 0.0

    @property
    def fer_per_attempt(self) -> Tuple[float, ...]:
        return tuple(f / a if a else 0.0 for f, a in zip(self.failures, self.attempts))

    def audit(self, n_block: int) -> None:
        if self.channel_uses != self.blocks * n_block:
            raise PolarthruError(
                f"channel use bookkeeping broken: {self.channel_uses} != {self.blocks} x {n_block}"
            )

    def __add__(self, other: "ThroughputRecord") -> "ThroughputRecord":
        return ThroughputRecord(
            data_bits=self.data_bits + other.data_bits,
            channel_uses=self.channel_uses + other.channel_uses,
            blocks=self.blocks + other.blocks,
            delivered=self.delivered + other.delivered,
            transmissions=self.transmissions + other.transmissions,
            undetected=self.undetected + other.undetected,
            attempts=_add_tuples(self.attempts, other.attempts),
            failures=_add_tuples(self.failures, other.failures),
            wall_seconds=self.wall_seconds + other.wall_seconds,
        )


def _add_tuples(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    size = max(len(a), len(b))
    a = tuple(a) + (0,) * (size - len(a))
    b = tuple(b) + (0,) * (size - len(b))
    return tuple(x + y for x, y in zip(a, b))


class _AttemptTally:
    def __init__(self):
        self.attempts: List[int] = []
        self.failures: List[int] = []

    def add(self, index: int, failed: bool) -> None:
        while len(self.attempts) < index:
            self.attempts.append(0)
            self.failures.append(0)
        self.attempts[index - 1] += 1
        if failed:
            self.failures[index - 1] += 1


class CodewordState(enum.Enum):
    NEW = 1
    IN_FLIGHT = 2
    NACKED = 3
    DELIVERED = 4


class HarqCodeword(StateMixin):
    """One codeword (or one multilevel frame) and its HARQ history."""

    def __init__(
        self,
        label: str,
        message: np.ndarray,
        bits: np.ndarray,
        max_transmissions: int = DEFAULT_MAX_TRANSMISSIONS,
        logger=None,
    ):
        self.label = label
        self.message = message
        self.bits = bits
        self.max_transmissions = max_transmissions
        self.logger = (logger if logger is not None else log).bind(codeword=label)
        StateMixin.__init__(self, logger=self.logger)
        self.transmissions: int = 0
        self.attempts: int = 0
        self.llr: Optional[np.ndarray] = None
        self.receptions: List[np.ndarray] = []
        self.decided: Optional[np.ndarray] = None
        self.set_state(CodewordState.NEW)

    @OnlyStatesOrRaise([CodewordState.NEW, CodewordState.NACKED])
    def transmit(self) -> None:
        if self.transmissions >= self.max_transmissions:
            raise RetransmissionLimitExceeded(
                f"codeword {self.label} failed {self.transmissions} transmissions"
            )
        self.transmissions += 1
        self.set_state(CodewordState.IN_FLIGHT)

    @OnlyStatesOrRaise([CodewordState.IN_FLIGHT])
    def nack(self) -> None:
        self.set_state(CodewordState.NACKED)

    @OnlyStatesOrRaise([CodewordState.IN_FLIGHT])
    def deliver(self, decided: np.ndarray) -> None:
        self.decided = decided
        self.set_state(CodewordState.DELIVERED)

    @property
    def is_delivered(self) -> bool:
        return self.state == CodewordState.DELIVERED


@dataclasses.dataclass
class BlockRecord:
    """One channel block: the codeword sent on every level and what came back."""

    index: int
    codewords: List[Optional[HarqCodeword]]
    reception: Any = None


AttemptFunction = Callable[[int, HarqCodeword, BlockRecord], Optional[np.ndarray]]


class LevelIndependentScheduler:
    """Transmit schedule and deferred decoding of level-independent HARQ.

    Each block a level retransmits its oldest NACKed codeword, or sends a new
    one. Receptions are decoded level by level, in block order, as soon as
    every upper level of their block is resolved. ``attempt`` decodes one
    reception and returns the decided codeword bits, or None for a NACK.
    Inactive levels carry the all-zero codeword and are always resolved.
    """

    def __init__(
        self,
        active: Sequence[bool],
        n_block: int,
        new_codeword: Callable[[int], HarqCodeword],
        attempt: AttemptFunction,
        queue_cap: int = DEFAULT_QUEUE_CAP,
        logger=None,
    ):
        self.active = list(active)
        self.n_block = n_block
        self.new_codeword = new_codeword
        self.attempt_function = attempt
        self.queue_cap = queue_cap
        self.logger = logger if logger is not None else log
        self.blocks: List[BlockRecord] = []
        self.schedule: List[Tuple[Optional[str], ...]] = []
        self.events: List[Tuple[int, int, str, int, bool]] = []
        self.delivered: List[Tuple[int, HarqCodeword]] = []
        self.tally = _AttemptTally()
        self._nacked: List[Deque[HarqCodeword]] = [collections.deque() for _ in self.active]
        self._queues: List[Deque[BlockRecord]] = [collections.deque() for _ in self.active]

    @property
    def levels(self) -> int:
        return len(self.active)

    def pending(self, level: int) -> int:
        """Receptions of ``level`` waiting for upper-level resolution."""
        return len(self._queues[level])

    def select(self) -> List[Optional[HarqCodeword]]:
        chosen: List[Optional[HarqCodeword]] = []
        for level, active in enumerate(self.active):
            if not active:
                chosen.append(None)
            elif self._nacked[level]:
                chosen.append(self._nacked[level].popleft())
            else:
                chosen.append(self.new_codeword(level))
        return chosen

    def step(self, receive: Callable[[List[Optional[HarqCodeword]]], Any]) -> BlockRecord:
        """Send one block, then decode everything that became decodable."""
        codewords = self.select()
        for codeword in codewords:
            if codeword is not None:
                codeword.transmit()
        block = BlockRecord(index=len(self.blocks), codewords=codewords)
        block.reception = receive(codewords)
        self.blocks.append(block)
        self.schedule.append(tuple(None if c is None else c.label for c in codewords))
        for level, codeword in enumerate(codewords):
            if codeword is None:
                continue
            self._queues[level].append(block)
            if len(self._queues[level]) > self.queue_cap:
                raise QueueOverflow(
                    f"{len(self._queues[level])} receptions wait on level {level} (cap {self.queue_cap})"
                )
        self._process(block.index)
        return block

    def is_resolved(self, block: BlockRecord, level: int) -> bool:
        codeword = block.codewords[level]
        return codeword is None or codeword.is_delivered

    def is_decodable(self, block: BlockRecord, level: int) -> bool:
        return all(self.is_resolved(block, upper) for upper in range(level))

    def decisions(self, block: BlockRecord, level: int) -> np.ndarray:
        """Codeword bits of levels 0 .. level-1 in ``block``, shape (N, level)."""
        out = np.zeros((self.n_block, level), dtype=np.uint8)
        for upper in range(level):
            codeword = block.codewords[upper]
            if codeword is not None:
                if not codeword.is_delivered:
                    raise PolarthruError(f"level {upper} of block {block.index} is unresolved")
                out[:, upper] = codeword.decided
        return out

    def attempt(self, level: int, block: BlockRecord) -> bool:
        if not self.is_decodable(block, level):
            raise ProtocolViolation(
                f"level {level} of block {block.index} decoded before its upper levels were resolved"
            )
        codeword = block.codewords[level]
        assert codeword is not None
        codeword.attempts += 1
        decided = self.attempt_function(level, codeword, block)
        ok = decided is not None
        self.tally.add(codeword.attempts, not ok)
        self.events.append((len(self.blocks) - 1, level, codeword.label, block.index, ok))
        if ok:
            codeword.deliver(decided)
            self.delivered.append((level, codeword))
        else:
            codeword.nack()
            self._nacked[level].append(codeword)
        return ok

    def _process(self, now: int) -> None:
        for level in range(self.levels):
            waiting: Deque[BlockRecord] = collections.deque()
            for block in self._queues[level]:
                if self.is_decodable(block, level):
                    if block.index != now:
                        self.logger.debug(
                            f"deferred decoding of level {level} block {block.index} at block {now}"
                        )
                    self.attempt(level, block)
                else:
                    waiting.append(block)
            self._queues[level] = waiting


class _Session:
    """State shared by both session kinds: codes, demapper, RNG streams."""

    def __init__(
        self,
        spec: MlpcmSpec,
        gamma_db: float,
        config: SimulationConfiguration,
        seed: np.random.SeedSequence,
        index: int = 0,
    ):
        self.spec = spec
        self.config = config
        self.constellation = spec.constellation(gamma_db)
        self.crc = config.crc
        self.decoder = config.decoder_configuration
        self.codes = [PolarCode(level) for level in spec.levels]
        data_seed, noise_seed = seed.spawn(2)
        self.data_rng = np.random.default_rng(data_seed)
        self.noise_rng = np.random.default_rng(noise_seed)
        self.logger = log.bind(protocol=config.protocol.value, session=index)
        self.undetected = 0
        self.blocks = 0

    @property
    def n_block(self) -> int:
        return self.spec.n_block

    def level_llr(self, y: np.ndarray, level: int, decided: np.ndarray, n0: Optional[float] = None) -> np.ndarray:
        return qam_level_llrs(y, level, decided, self.constellation, self.config.llr_method, n0=n0)

    def channel(self, symbols: np.ndarray) -> np.ndarray:
        self.blocks += 1
        return awgn(symbols, self.constellation.n0, self.noise_rng)

    def codeword_bits(self, level: int, message: np.ndarray) -> np.ndarray:
        code = self.spec.levels[level]
        return encode(embed(message, code), code)

    def decode(
        self, level: int, llr: np.ndarray, crc=None, prefix: Optional[np.ndarray] = None
    ) -> Optional[np.ndarray]:
        """Message of ``level`` or None when no candidate checks ``crc``."""
        code = self.codes[level]
        if self.decoder.kind == DecoderKind.SCD:
            message = code.scd_decode(llr)
            if crc is None:
                return message
            word = message if prefix is None else np.concatenate([prefix, message])
            return message if crc_check(word, crc) else None
        if crc is None:
            return code.scld_decode(llr, self.decoder.list_size)
        return code.scld_decode(llr, self.decoder.list_size, crc, prefix=prefix)


class LevelDependentSession(_Session):
    """NC-D and CC-D: one CRC-protected payload over all levels."""

    def __init__(self, *args, **kwargs):
        _Session.__init__(self, *args, **kwargs)
        self.data_length = self.spec.total_k - self.crc.width
        if self.data_length <= 0:
            raise ValueError(
                f"the design carries {self.spec.total_k} bits, no room for data after the CRC"
            )
        ks = self.spec.level_k
        self.offsets = np.concatenate([[0], np.cumsum(ks)]).astype(int)
        self.last_level = max(n for n, k in enumerate(ks) if k > 0)
        self.tally = _AttemptTally()
        self.frames = 0

    def new_frame(self) -> HarqCodeword:
        payload = crc_append(self.data_rng.integers(0, 2, size=self.data_length, dtype=np.uint8), self.crc)
        bits = np.stack(
            [
                self.codeword_bits(n, payload[self.offsets[n]:self.offsets[n + 1]])
                for n in range(self.spec.bits_per_symbol)
            ]
        )
        self.frames += 1
        return HarqCodeword(
            f"F{self.frames}", payload, bits, self.config.max_transmissions, logger=self.logger
        )

    def receive(self, frame: HarqCodeword, y: np.ndarray) -> Optional[np.ndarray]:
        """Multistage decoding of the frame; the decoded payload or None."""
        n0 = None
        if self.config.protocol.combining:
            frame.receptions.append(y)
            y, n0 = chase_equivalent(np.stack(frame.receptions, axis=-1), self.constellation.n0)
        decided = np.zeros((self.n_block, 0), dtype=np.uint8)
        messages: List[np.ndarray] = []
        for n in range(self.spec.bits_per_symbol):
            if self.spec.level_k[n] == 0:
                message = np.zeros(0, dtype=np.uint8)
            else:
                llr = self.level_llr(y, n, decided, n0)
                if n == self.last_level:
                    prefix = np.concatenate(messages) if messages else None
                    message = self.decode(n, llr, self.crc, prefix=prefix)
                    if message is None:
                        return None
                else:
                    message = self.decode(n, llr)
            messages.append(message)
            decided = np.column_stack([decided, self.codeword_bits(n, message)])
        return np.concatenate(messages)

    def run(self, blocks: int) -> ThroughputRecord:
        start = time.perf_counter()
        data_bits = delivered = transmissions = 0
        frame: Optional[HarqCodeword] = None
        for _ in range(blocks):
            if frame is None:
                frame = self.new_frame()
            frame.transmit()
            y = self.channel(modulate(frame.bits, self.constellation))
            payload = self.receive(frame, y)
            self.tally.add(frame.transmissions, payload is None)
            if payload is None:
                frame.nack()
                continue
            frame.deliver(payload)
            if not np.array_equal(payload, frame.message):
                self.undetected += 1
            data_bits += self.data_length
            delivered += 1
            transmissions += frame.transmissions
            frame = None
        return ThroughputRecord(
            data_bits=data_bits,
            channel_uses=self.blocks * self.n_block,
            blocks=self.blocks,
            delivered=delivered,
            transmissions=transmissions,
            undetected=self.undetected,
            attempts=tuple(self.tally.attempts),
            failures=tuple(self.tally.failures),
            wall_seconds=time.perf_counter() - start,
        )


class LevelIndependentSession(_Session):
    """NC-I and CC-I: one HARQ session per level."""

    def __init__(self, *args, **kwargs):
        _Session.__init__(self, *args, **kwargs)
        self.data_lengths = [k - self.crc.width for k in self.spec.level_k]
        active = [d > 0 for d in self.data_lengths]
        if not any(active):
            raise ValueError("no level carries data after its CRC")
        for n, (k, a) in enumerate(zip(self.spec.level_k, active)):
            if not a and k > 0:
                self.logger.warning(f"level {n} has K={k}, too short for its CRC: sent all-frozen")
        self.counters = [0] * self.spec.bits_per_symbol
        self.scheduler = LevelIndependentScheduler(
            active,
            self.n_block,
            self.new_codeword,
            self.attempt,
            queue_cap=self.config.queue_cap,
            logger=self.logger,
        )

    def new_codeword(self, level: int) -> HarqCodeword:
        message = crc_append(
            self.data_rng.integers(0, 2, size=self.data_lengths[level], dtype=np.uint8), self.crc
        )
        self.counters[level] += 1
        return HarqCodeword(
            f"L{level}#{self.counters[level]}",
            message,
            self.codeword_bits(level, message),
            self.config.max_transmissions,
            logger=self.logger,
        )

    def transmit(self, codewords: List[Optional[HarqCodeword]]) -> np.ndarray:
        zeros = np.zeros(self.n_block, dtype=np.uint8)
        bits = np.stack([zeros if c is None else c.bits for c in codewords])
        return self.channel(modulate(bits, self.constellation))

    def attempt(self, level: int, codeword: HarqCodeword, block: BlockRecord) -> Optional[np.ndarray]:
        decided = self.scheduler.decisions(block, level)
        llr = self.level_llr(block.reception, level, decided)
        if self.config.protocol.combining:
            previous = 0.0 if codeword.llr is None else codeword.llr
            codeword.llr = cc_combine_independent(llr, previous)
            llr = codeword.llr
        message = self.decode(level, llr, self.crc)
        if message is None:
            return None
        if not np.array_equal(message, codeword.message):
            self.undetected += 1
        return self.codeword_bits(level, message)

    def run(self, blocks: int) -> ThroughputRecord:
        start = time.perf_counter()
        for _ in range(blocks):
            self.scheduler.step(self.transmit)
        delivered = self.scheduler.delivered
        return ThroughputRecord(
            data_bits=sum(self.data_lengths[level] for level, _ in delivered),
            channel_uses=self.blocks * self.n_block,
            blocks=self.blocks,
            delivered=len(delivered),
            transmissions=sum(c.transmissions for _, c in delivered),
            undetected=self.undetected,
            attempts=tuple(self.scheduler.tally.attempts),
            failures=tuple(self.scheduler.tally.failures),
            wall_seconds=time.perf_counter() - start,
        )


def session_for(
    spec: MlpcmSpec,
    gamma_db: float,
    config: SimulationConfiguration,
    seed: np.random.SeedSequence,
    index: int = 0,
) -> _Session:
    if config.protocol.level_independent:
        return LevelIndependentSession(spec, gamma_db, config, seed, index)
    return LevelDependentSession(spec, gamma_db, config, seed, index)


def _chunks(frames: int, chunk_frames: int) -> List[int]:
    sizes = [chunk_frames] * (frames // chunk_frames)
    if frames % chunk_frames:
        sizes.append(frames % chunk_frames)
    return sizes


def simulate(spec: MlpcmSpec, gamma_db: float, config: SimulationConfiguration) -> ThroughputRecord:
    """Simulate ``config.frames`` channel blocks split into independent sessions.

    Every session gets its own seed spawned from ``config.seed``; records
    are merged in session order, so the result does not depend on threads.
    """
    sizes = _chunks(config.frames, config.chunk_frames)
    seeds = np.random.SeedSequence(config.seed).spawn(len(sizes))
    logger = log.bind(protocol=config.protocol.value, decoder=config.decoder_configuration.label)
    logger.info(
        f"simulating {config.frames} blocks at {gamma_db} dB in {len(sizes)} sessions "
        f"on {config.threads} threads"
    )

    def run(args: Tuple[int, int, np.random.SeedSequence]) -> ThroughputRecord:
        index, size, seed = args
        return session_for(spec, gamma_db, config, seed, index).run(size)

    with concurrent.futures.ThreadPoolExecutor(max_workers=config.threads) as pool:
        records = list(pool.map(run, zip(range(len(sizes)), sizes, seeds)))
    total = sum(records[1:], records[0])
    total.audit(spec.n_block)
    logger.info(
        f"throughput {total.throughput:.4f} bits/use, {total.delivered} delivered, "
        f"retx mean {total.retx_mean:.3f}, {total.undetected} undetected"
    )
    return total


def _run(protocol: Protocol, spec: MlpcmSpec, gamma_db: float, config: SimulationConfiguration) -> ThroughputRecord:
    return simulate(spec, gamma_db, dataclasses.replace(config, protocol=protocol))


def run_nc_d(spec: MlpcmSpec, gamma_db: float, config: SimulationConfiguration) -> ThroughputRecord:
    return _run(Protocol.NC_D, spec, gamma_db, config)


def run_cc_d(spec: MlpcmSpec, gamma_db: float, config: SimulationConfiguration) -> ThroughputRecord:
    return _run(Protocol.CC_D, spec, gamma_db, config)


def run_nc_i(spec: MlpcmSpec, gamma_db: float, config: SimulationConfiguration) -> ThroughputRecord:
    return _run(Protocol.NC_I, spec, gamma_db, config)


def run_cc_i(spec: MlpcmSpec, gamma_db: float, config: SimulationConfiguration) -> ThroughputRecord:
    return _run(Protocol.CC_I, spec, gamma_db, config)


def expected_nc_d_throughput(spec: MlpcmSpec, record: ThroughputRecord, crc_width: int) -> Tuple[float, float]:
    """Level-dependent NC throughput from the measured first-attempt FER, and its std.

    Uses (K - crc) / N (1 - P) with P the empirical FER of first attempts.
    """
    if not record.attempts:
        return 0.0, 0.0
    p = record.failures[0] / record.attempts[0]
    scale = (spec.total_k - crc_width) / spec.n_block
    return scale * (1.0 - p), scale * float(np.sqrt(p * (1.0 - p) / record.attempts[0]))


__all__: List[str] = [
    "ThroughputRecord",
    "CodewordState",
    "HarqCodeword",
    "BlockRecord",
    "LevelIndependentScheduler",
    "LevelDependentSession",
    "LevelIndependentSession",
    "session_for",
    "simulate",
    "run_nc_d",
    "run_cc_d",
    "run_nc_i",
    "run_cc_i",
    "expected_nc_d_throughput",
]
