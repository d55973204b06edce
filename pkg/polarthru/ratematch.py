"""Golden-section rate matching of SCD-designed codes for list decoding.

The channel ordering of an SCD design is kept; only the message length is
searched, by simulating the SCLD throughput of the first K channels. Every
probe reuses the same seed, so the noise is common to all probed lengths and
the objective is deterministic.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple
import dataclasses
import math
import mflog
from pydantic.dataclasses import dataclass
from polarthru.config import (
    DEFAULT_CRC_WIDTH,
    DecoderKind,
    LlrMethod,
    Protocol,
    SimulationConfiguration,
)
from polarthru.harq import simulate
from polarthru.mlpcm import MlpcmSpec, equivalent_snr_db, joint_order_spec, level_means

log = mflog.get_logger("polarthru.ratematch")

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0
DEFAULT_BUDGET = 2000
MIN_RESOLVING_BUDGET = 200


@dataclass(frozen=True)
class RateMatchResult:
    """Outcome of one golden-section search.

    Attributes:
        k_scd: starting message length (the SCD design).
        k_opt: message length returned by the search.
        probes: (K, throughput) in evaluation order, each K once.
        iterations: passes of the search loop.
        level: level searched on its own, None for a joint search.
    """

    k_scd: int
    k_opt: int
    probes: Tuple[Tuple[int, float], ...]
    iterations: int
    level: Optional[int] = None

    @property
    def evaluations(self) -> int:
        return len(self.probes)


def iteration_bound(a: int, b: int) -> int:
    span = max(b - a, 1)
    return int(math.ceil(math.log(span) / math.log(1.0 / GOLDEN_RATIO))) + 2


def _lower_probe(a: int, b: int) -> int:
    return a + int(math.floor((1.0 - GOLDEN_RATIO) * (b - a)))


def _upper_probe(a: int, b: int) -> int:
    return a + int(math.floor(GOLDEN_RATIO * (b - a)))


def golden_section_search(
    objective: Callable[[int], float], a: int, b: int, logger=None
) -> RateMatchResult:
    """Maximize ``objective`` over the integers of [a, b].

    Probes are k1 = floor(rho a + (1 - rho) b) and k2 = floor((1 - rho) a + rho b);
    the surviving probe is reused as the next one. Returns k1 at termination.
    """
    if a > b:
        raise ValueError(f"empty search interval [{a}, {b}]")
    logger = logger if logger is not None else log
    memo: Dict[int, float] = {}
    probes: List[Tuple[int, float]] = []

    def f(k: int) -> float:
        if k not in memo:
            memo[k] = float(objective(k))
            probes.append((k, memo[k]))
            logger.debug(f"f({k}) = {memo[k]:.6f}")
        return memo[k]

    start = a
    k1 = _lower_probe(a, b)
    k2 = _upper_probe(a, b)
    f(k1)
    f(k2)
    iterations = 0
    cap = iteration_bound(a, b) + 8
    while abs(a - b) > 1:
        if iterations >= cap:
            logger.warning(f"search stopped after {iterations} iterations with [{a}, {b}] left")
            break
        iterations += 1
        if f(k1) > f(k2):
            b, k2 = k2, k1
            k1 = _lower_probe(a, b)
        else:
            a, k1 = k1, k2
            k2 = _upper_probe(a, b)
        f(k1)
        f(k2)
    return RateMatchResult(k_scd=start, k_opt=k1, probes=tuple(probes), iterations=iterations)


def scld_rate_match(
    gamma_db: float,
    k_scd: int,
    n_block: int,
    sorted_channels: Sequence[int],
    bits_per_symbol: int = 1,
    list_size: int = 32,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    threads: int = 1,
    crc_width: int = DEFAULT_CRC_WIDTH,
    llr_method: LlrMethod = LlrMethod.PIECEWISE,
) -> RateMatchResult:
    """Message length maximizing the simulated SCLD throughput of a joint ordering.

    ``sorted_channels`` covers the B N bit-channels (level n, channel i at
    n N + i); with B = 1 it is the order of a single binary code. The search
    runs over [k_scd, min(k_scd + B N / 10, B N)].
    """
    total = n_block * bits_per_symbol
    if k_scd > total:
        raise ValueError(f"K_SCD={k_scd} exceeds the {total} available bit-channels")
    if k_scd <= crc_width:
        raise ValueError(f"K_SCD={k_scd} leaves no data bits after a {crc_width}-bit CRC")
    logger = log.bind(snr_db=gamma_db, list_size=list_size)
    if budget < MIN_RESOLVING_BUDGET:
        logger.warning(
            f"a budget of {budget} blocks per probe is too small to resolve one-bit changes of K"
        )
    base = joint_order_spec(sorted_channels, k_scd, gamma_db, n_block, bits_per_symbol)
    config = SimulationConfiguration(
        protocol=Protocol.NC_D,
        decoder=DecoderKind.SCLD,
        list_size=list_size,
        llr_method=llr_method,
        frames=budget,
        seed=seed,
        threads=threads,
        crc_width=crc_width,
    )

    def throughput(k: int) -> float:
        return simulate(base.with_total_k(k), gamma_db, config).throughput

    a = k_scd
    b = min(a + total // 10, total)
    logger.info(f"rate matching over K in [{a}, {b}] with {budget} blocks per probe")
    result = golden_section_search(throughput, a, b, logger=logger)
    logger.info(
        f"rate matched K={result.k_opt} (from {k_scd}) after {result.evaluations} evaluations"
    )
    return result


def rate_match_spec(
    spec: MlpcmSpec,
    gamma_db: Optional[float] = None,
    list_size: int = 32,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    threads: int = 1,
    crc_width: int = DEFAULT_CRC_WIDTH,
) -> Tuple[MlpcmSpec, List[RateMatchResult]]:
    """Rate match a whole design for SCLD.

    Level-dependent designs are searched once over their joint ordering.
    Other designs are searched level by level, each level as a BPSK code at
    its equivalent SNR; levels too short for the CRC are left alone.
    """
    gamma = spec.design_snr_db if gamma_db is None else gamma_db
    kwargs = dict(
        list_size=list_size, budget=budget, seed=seed, threads=threads, crc_width=crc_width
    )
    if spec.joint_order is not None:
        result = scld_rate_match(
            gamma, spec.total_k, spec.n_block, spec.joint_order, spec.bits_per_symbol, **kwargs
        )
        return spec.with_total_k(result.k_opt), [result]
    results: List[RateMatchResult] = []
    matched = spec
    means = level_means(gamma, spec.bits_per_symbol)
    for n, level in enumerate(spec.levels):
        if level.k_info <= crc_width:
            log.bind(level=n).warning(f"level {n} has K={level.k_info}, not rate matched")
            continue
        result = scld_rate_match(
            equivalent_snr_db(means[n]), level.k_info, spec.n_block, level.sorted_channels, 1, **kwargs
        )
        matched = matched.with_level_k(n, result.k_opt)
        results.append(dataclasses.replace(result, level=n))
    return matched, results
