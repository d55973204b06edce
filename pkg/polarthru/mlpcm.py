"""Multilevel polar coded modulation design.

Every constellation level carries its own length-N polar code. The level
mean LLRs come from the average PAM LLRs lifted to the QAM levels, and each
level is then treated as a BPSK channel of equivalent SNR 10 log10(mean / 4).

Level-dependent protocols (NC-D, CC-D) sort the B N bit-channels of all
levels jointly and keep the best K of them, which fixes every K_n at once.
Level-independent protocols design each level on its own.
"""

from typing import List, Optional, Sequence, Tuple
import numpy as np
import mflog
from pydantic.dataclasses import dataclass
from polarthru.config import DesignMethod, Modulation, Protocol
from polarthru.construction import (
    CC_MAX_ROUNDS,
    DesignResult,
    IrDesignResult,
    cc_design,
    ga_ber,
    ir_design,
    nc_binary_design,
    nc_design,
    retransmission_design,
    sim_based_design,
)
from polarthru.modem import ConstellationSpec, level_mean_llrs
from polarthru.polar import PolarCodeSpec
from polarthru.utils import check_power_of_two, linear_to_db

log = mflog.get_logger("polarthru.mlpcm")

DEFAULT_SIM_FRAMES = 10000


def equivalent_snr_db(mean_llr: float) -> float:
    """BPSK SNR whose LLRs have the same mean."""
    return linear_to_db(mean_llr / 4.0)


def level_means(gamma_db: float, bits_per_symbol: int) -> np.ndarray:
    return level_mean_llrs(ConstellationSpec.from_snr(bits_per_symbol, gamma_db))


def level_reliabilities(gamma_db: float, n_block: int, bits_per_symbol: int) -> List[np.ndarray]:
    """GA bit-channel BERs of every level."""
    check_power_of_two(n_block)
    return [ga_ber(m, n_block) for m in level_means(gamma_db, bits_per_symbol)]


@dataclass(frozen=True)
class MlpcmSpec:
    """B polar codes of length N driving one 2^B-QAM (or BPSK) constellation.

    Attributes:
        bits_per_symbol: B.
        n_block: N, the length of every level code.
        design_snr_db: Es / N0 the codes are designed for.
        protocol: HARQ protocol the design targets.
        levels: one code per level, level 0 decoded first.
        predicted_throughput: bits per channel use at the design point (CRC included).
        level_fer: predicted FER of every level.
        joint_order: joint bit-channel order over the B N channels (level n,
            channel i at n N + i), set for level-dependent designs.
        design_method: GA or simulation.
        rounds: transmissions the combining designers iterated over, per level.
    """

    bits_per_symbol: int
    n_block: int
    design_snr_db: float
    protocol: Protocol
    levels: Tuple[PolarCodeSpec, ...]
    predicted_throughput: float
    level_fer: Tuple[float, ...]
    joint_order: Optional[Tuple[int, ...]] = None
    design_method: DesignMethod = DesignMethod.GA
    rounds: Tuple[int, ...] = ()

    def __post_init__(self):
        ConstellationSpec.from_snr(self.bits_per_symbol, self.design_snr_db)
        check_power_of_two(self.n_block)
        if len(self.levels) != self.bits_per_symbol:
            raise ValueError(
                f"{self.bits_per_symbol} bits per symbol need as many level codes (got {len(self.levels)})"
            )
        if any(level.n_block != self.n_block for level in self.levels):
            raise ValueError(f"every level code must have length {self.n_block}")
        if len(self.level_fer) != self.bits_per_symbol:
            raise ValueError("one predicted FER per level is required")
        if self.joint_order is not None:
            total = self.n_block * self.bits_per_symbol
            if sorted(self.joint_order) != list(range(total)):
                raise ValueError(f"joint order must be a permutation of 0 .. {total - 1}")

    @property
    def level_k(self) -> Tuple[int, ...]:
        return tuple(level.k_info for level in self.levels)

    @property
    def total_k(self) -> int:
        return sum(self.level_k)

    @property
    def rate(self) -> float:
        return self.total_k / (self.n_block * self.bits_per_symbol)

    @property
    def modulation(self) -> Modulation:
        return Modulation.from_bits_per_symbol(self.bits_per_symbol)

    def constellation(self, gamma_db: Optional[float] = None) -> ConstellationSpec:
        gamma = self.design_snr_db if gamma_db is None else gamma_db
        return ConstellationSpec.from_snr(self.bits_per_symbol, gamma)

    def with_total_k(self, total_k: int) -> "MlpcmSpec":
        """Same joint ordering, the best ``total_k`` channels carry information.

        Predictions are kept from the original design.
        """
        if self.joint_order is None:
            raise ValueError("only level-dependent designs have a joint ordering")
        ks = split_joint_order(self.joint_order, total_k, self.n_block, self.bits_per_symbol)
        return self._with_levels(tuple(level.with_k(k) for level, k in zip(self.levels, ks)))

    def with_level_k(self, level: int, k: int) -> "MlpcmSpec":
        levels = list(self.levels)
        levels[level] = levels[level].with_k(k)
        return self._with_levels(tuple(levels))

    def _with_levels(self, levels: Tuple[PolarCodeSpec, ...]) -> "MlpcmSpec":
        return MlpcmSpec(
            bits_per_symbol=self.bits_per_symbol,
            n_block=self.n_block,
            design_snr_db=self.design_snr_db,
            protocol=self.protocol,
            levels=levels,
            predicted_throughput=self.predicted_throughput,
            level_fer=self.level_fer,
            joint_order=self.joint_order,
            design_method=self.design_method,
            rounds=self.rounds,
        )


@dataclass(frozen=True)
class IrMlpcmDesign:
    """Per-level incremental-redundancy designs (prediction only).

    Attributes:
        bits_per_symbol: B.
        n_block: N, the length of the first transmission of every level.
        design_snr_db: Es / N0 of the design.
        levels: IR design of every level.
        predicted_throughput: sum of the level throughputs, bits per channel use.
    """

    bits_per_symbol: int
    n_block: int
    design_snr_db: float
    levels: Tuple[IrDesignResult, ...]
    predicted_throughput: float

    def first_round(self) -> MlpcmSpec:
        """The codes sent in the first transmission (an NC-I design)."""
        firsts = [level.per_round[0] for level in self.levels]
        return MlpcmSpec(
            bits_per_symbol=self.bits_per_symbol,
            n_block=self.n_block,
            design_snr_db=self.design_snr_db,
            protocol=Protocol.IR,
            levels=tuple(d.code() for d in firsts),
            predicted_throughput=sum(d.predicted_throughput for d in firsts),
            level_fer=tuple(d.fer_at(d.k_opt) for d in firsts),
        )


def split_joint_order(joint_order: Sequence[int], total_k: int, n_block: int, bits_per_symbol: int) -> List[int]:
    """Per-level message lengths when the first ``total_k`` joint channels are kept."""
    if not 0 <= total_k <= n_block * bits_per_symbol:
        raise ValueError(f"total K must be in [0, {n_block * bits_per_symbol}] (got {total_k})")
    chosen = np.asarray(joint_order[:total_k], dtype=np.int64) // n_block
    return [int(k) for k in np.bincount(chosen, minlength=bits_per_symbol)]


def _level_orders(joint_order: Sequence[int], n_block: int, bits_per_symbol: int) -> List[Tuple[int, ...]]:
    order = np.asarray(joint_order, dtype=np.int64)
    return [tuple(int(i) for i in order[order // n_block == n] - n * n_block) for n in range(bits_per_symbol)]


def _level_fer(v: np.ndarray, order: Sequence[int], k: int) -> float:
    return float(-np.expm1(np.sum(np.log1p(-v[list(order[:k])]))))


def _joint_spec(
    joint: DesignResult,
    vectors: List[np.ndarray],
    gamma_db: float,
    n_block: int,
    bits_per_symbol: int,
    protocol: Protocol,
) -> MlpcmSpec:
    orders = _level_orders(joint.sorted_channels, n_block, bits_per_symbol)
    ks = split_joint_order(joint.sorted_channels, joint.k_opt, n_block, bits_per_symbol)
    spec = MlpcmSpec(
        bits_per_symbol=bits_per_symbol,
        n_block=n_block,
        design_snr_db=gamma_db,
        protocol=protocol,
        levels=tuple(
            PolarCodeSpec(n_block=n_block, sorted_channels=o, k_info=k) for o, k in zip(orders, ks)
        ),
        predicted_throughput=bits_per_symbol * joint.predicted_throughput,
        level_fer=tuple(_level_fer(v, o, k) for v, o, k in zip(vectors, orders, ks)),
        joint_order=joint.sorted_channels,
        rounds=(joint.rounds,) * bits_per_symbol,
    )
    log.bind(protocol=protocol.value).info(
        f"joint design at {gamma_db} dB: K={spec.level_k}, throughput={spec.predicted_throughput:.4f}"
    )
    return spec


def _independent_spec(
    designs: List[DesignResult],
    gamma_db: float,
    n_block: int,
    bits_per_symbol: int,
    protocol: Protocol,
    method: DesignMethod = DesignMethod.GA,
) -> MlpcmSpec:
    spec = MlpcmSpec(
        bits_per_symbol=bits_per_symbol,
        n_block=n_block,
        design_snr_db=gamma_db,
        protocol=protocol,
        levels=tuple(d.code() for d in designs),
        predicted_throughput=sum(d.predicted_throughput for d in designs),
        level_fer=tuple(d.fer_at(d.k_opt) for d in designs),
        design_method=method,
        rounds=tuple(d.rounds for d in designs),
    )
    log.bind(protocol=protocol.value).info(
        f"per-level design at {gamma_db} dB: K={spec.level_k}, throughput={spec.predicted_throughput:.4f}"
    )
    return spec


def joint_order_spec(
    joint_order: Sequence[int],
    total_k: int,
    gamma_db: float,
    n_block: int,
    bits_per_symbol: int,
) -> MlpcmSpec:
    """Level-dependent spec from a bare joint ordering, without predictions."""
    orders = _level_orders(joint_order, n_block, bits_per_symbol)
    ks = split_joint_order(joint_order, total_k, n_block, bits_per_symbol)
    return MlpcmSpec(
        bits_per_symbol=bits_per_symbol,
        n_block=n_block,
        design_snr_db=gamma_db,
        protocol=Protocol.NC_D,
        levels=tuple(
            PolarCodeSpec(n_block=n_block, sorted_channels=o, k_info=k) for o, k in zip(orders, ks)
        ),
        predicted_throughput=0.0,
        level_fer=(0.0,) * bits_per_symbol,
        joint_order=tuple(int(i) for i in joint_order),
    )


def joint_nc_design(vectors: List[np.ndarray]) -> DesignResult:
    """Function-1 design over the concatenated level reliability vectors."""
    return nc_binary_design(np.concatenate([np.asarray(v, dtype=np.float64) for v in vectors]))


def design_nc_d_qam(gamma_db: float, n_block: int, bits_per_symbol: int) -> MlpcmSpec:
    vectors = level_reliabilities(gamma_db, n_block, bits_per_symbol)
    return _joint_spec(joint_nc_design(vectors), vectors, gamma_db, n_block, bits_per_symbol, Protocol.NC_D)


def design_nc_i_qam(gamma_db: float, n_block: int, bits_per_symbol: int) -> MlpcmSpec:
    check_power_of_two(n_block)
    designs = [nc_design(m, n_block) for m in level_means(gamma_db, bits_per_symbol)]
    return _independent_spec(designs, gamma_db, n_block, bits_per_symbol, Protocol.NC_I)


def design_cc_d_qam(
    gamma_db: float, n_block: int, bits_per_symbol: int, max_rounds: int = CC_MAX_ROUNDS
) -> MlpcmSpec:
    """Chase-combining design over all levels at once, ordering fixed at l = 1."""
    check_power_of_two(n_block)
    means = level_means(gamma_db, bits_per_symbol)

    def reliabilities(transmission: int) -> np.ndarray:
        return np.concatenate([ga_ber(transmission * m, n_block) for m in means])

    rounds, _ = retransmission_design(reliabilities, n_block * bits_per_symbol, max_rounds=max_rounds)
    vectors = [ga_ber(m, n_block) for m in means]
    return _joint_spec(rounds[-1], vectors, gamma_db, n_block, bits_per_symbol, Protocol.CC_D)


def design_cc_i_qam(
    gamma_db: float, n_block: int, bits_per_symbol: int, max_rounds: int = CC_MAX_ROUNDS
) -> MlpcmSpec:
    designs = [
        cc_design(m, n_block, max_rounds=max_rounds) for m in level_means(gamma_db, bits_per_symbol)
    ]
    return _independent_spec(designs, gamma_db, n_block, bits_per_symbol, Protocol.CC_I)


def design_ir_i_qam(
    gamma_db: float, n_block: int, bits_per_symbol: int, max_transmissions: int
) -> IrMlpcmDesign:
    levels = tuple(
        ir_design(m, n_block, max_transmissions) for m in level_means(gamma_db, bits_per_symbol)
    )
    throughput = sum(level.predicted_throughput for level in levels)
    log.bind(protocol=Protocol.IR.value).info(
        f"IR design at {gamma_db} dB: K={[level.k_opt for level in levels]}, throughput={throughput:.4f}"
    )
    return IrMlpcmDesign(
        bits_per_symbol=bits_per_symbol,
        n_block=n_block,
        design_snr_db=gamma_db,
        levels=levels,
        predicted_throughput=throughput,
    )


def design_sim_qam(
    gamma_db: float,
    n_block: int,
    bits_per_symbol: int,
    n_sim: int = DEFAULT_SIM_FRAMES,
    seed: int = 0,
    threads: Optional[int] = None,
    protocol: Protocol = Protocol.NC_I,
) -> MlpcmSpec:
    """Per-level simulation-based NC design at the equivalent BPSK SNRs."""
    if protocol != Protocol.NC_I and not (protocol == Protocol.NC_D and bits_per_symbol == 1):
        raise ValueError("simulation-based design supports NC-I, or NC-D on BPSK")
    seeds = np.random.SeedSequence(seed).generate_state(bits_per_symbol)
    designs = [
        sim_based_design(equivalent_snr_db(m), n_block, n_sim, seed=int(s), threads=threads)
        for m, s in zip(level_means(gamma_db, bits_per_symbol), seeds)
    ]
    spec = _independent_spec(designs, gamma_db, n_block, bits_per_symbol, protocol, DesignMethod.SIM)
    if protocol == Protocol.NC_D:
        return MlpcmSpec(
            bits_per_symbol=1,
            n_block=n_block,
            design_snr_db=gamma_db,
            protocol=protocol,
            levels=spec.levels,
            predicted_throughput=spec.predicted_throughput,
            level_fer=spec.level_fer,
            joint_order=designs[0].sorted_channels,
            design_method=DesignMethod.SIM,
        )
    return spec


def design_mlpcm(
    protocol: Protocol,
    gamma_db: float,
    n_block: int,
    bits_per_symbol: int,
    method: DesignMethod = DesignMethod.GA,
    max_transmissions: int = CC_MAX_ROUNDS,
    n_sim: int = DEFAULT_SIM_FRAMES,
    seed: int = 0,
    threads: Optional[int] = None,
):
    """Dispatch to the designer of ``protocol``; IR returns an IrMlpcmDesign."""
    if method == DesignMethod.SIM:
        return design_sim_qam(gamma_db, n_block, bits_per_symbol, n_sim, seed, threads, protocol)
    if protocol == Protocol.NC_D:
        return design_nc_d_qam(gamma_db, n_block, bits_per_symbol)
    if protocol == Protocol.NC_I:
        return design_nc_i_qam(gamma_db, n_block, bits_per_symbol)
    if protocol == Protocol.CC_D:
        return design_cc_d_qam(gamma_db, n_block, bits_per_symbol, max_transmissions)
    if protocol == Protocol.CC_I:
        return design_cc_i_qam(gamma_db, n_block, bits_per_symbol, max_transmissions)
    return design_ir_i_qam(gamma_db, n_block, bits_per_symbol, max_transmissions)
