"""Bit-channel reliabilities and throughput-maximizing information sets.

Reliabilities come either from the Gaussian approximation (GA) of density
evolution, which tracks one mean LLR per node of the SC tree, or from a genie
aided SC simulation. The designers then pick the message length K that
maximizes the predicted throughput instead of meeting a target FER.
"""

from typing import Callable, List, Optional, Tuple
import math
import concurrent.futures
import numpy as np
import mflog
from pydantic.dataclasses import dataclass
from scipy.special import erfc
from polarthru.polar import PolarCodeSpec, genie_error_matrix, polar_transform
from polarthru.utils import check_power_of_two, db_to_linear, resolve_threads

log = mflog.get_logger("polarthru.construction")

PHI_BRANCH = 10.0
PHI_INV_UPPER = 1000.0
PHI_INV_ITERATIONS = 80
# above this mean the check-node update is linear in the log domain
GA_LINEAR_MEAN = 900.0
CC_REL_TOL = 1e-9
CC_MAX_ROUNDS = 64
SIM_CHUNK = 500


@dataclass(frozen=True)
class DesignResult:
    """Outcome of one binary design.

    Attributes:
        n_block: length of the GA or simulation the ordering comes from.
        sorted_channels: bit-channel indices by ascending estimated BER.
        k_opt: message length (data plus CRC) of highest predicted throughput.
        predicted_throughput: throughput at k_opt, per bit-channel.
        predicted_fer: FER estimate for K = 1 .. len(predicted_fer).
        throughput_curve: predicted throughput for the same K range.
        rounds: transmissions the retransmission designers iterated over.
    """

    n_block: int
    sorted_channels: Tuple[int, ...]
    k_opt: int
    predicted_throughput: float
    predicted_fer: Tuple[float, ...]
    throughput_curve: Tuple[float, ...]
    rounds: int = 1

    def fer_at(self, k: int) -> float:
        return 0.0 if k == 0 else self.predicted_fer[k - 1]

    def code(self, k: Optional[int] = None) -> PolarCodeSpec:
        return PolarCodeSpec(
            n_block=self.n_block,
            sorted_channels=self.sorted_channels,
            k_info=self.k_opt if k is None else int(k),
        )


@dataclass(frozen=True)
class IrDesignResult:
    """Incremental-redundancy design: one ordering per transmission.

    Attributes:
        per_round: design seen at transmission l (ordering of the length-lN code).
        k_opt: message length maximizing the final throughput curve.
        predicted_throughput: throughput at k_opt.
        throughput_curve: final predicted throughput for K = 1 .. N.
        approximate_lengths: transmissions whose length lN is not a power of
            two, the GA running at the enclosing power of two instead.
    """

    per_round: Tuple[DesignResult, ...]
    k_opt: int
    predicted_throughput: float
    throughput_curve: Tuple[float, ...]
    approximate_lengths: Tuple[int, ...] = ()


def phi(h):
    """Mean-to-error mapping of the Gaussian approximation."""
    h = np.asarray(h, dtype=np.float64)
    if np.any(~np.isfinite(h)) or np.any(h < 0):
        raise ValueError("phi is defined for finite h >= 0")
    out = np.ones_like(h)
    low = (h > 0) & (h <= PHI_BRANCH)
    out[low] = np.exp(-0.4527 * h[low] ** 0.86 + 0.0218)
    high = h > PHI_BRANCH
    hh = h[high]
    out[high] = np.sqrt(np.pi / hh) * (1.0 - 10.0 / (7.0 * hh)) * np.exp(-hh / 4.0)
    return out if out.ndim else float(out)


def phi_inv(t):
    """Inverse of ``phi`` by bisection on [0, 1000]."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t <= 0) or np.any(t > 1):
        raise ValueError("phi_inv is defined for t in (0, 1]")
    lo = np.zeros_like(t)
    hi = np.full_like(t, PHI_INV_UPPER)
    for _ in range(PHI_INV_ITERATIONS):
        mid = 0.5 * (lo + hi)
        above = phi(mid) > t
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    out = np.where(t == 1.0, 0.0, 0.5 * (lo + hi))
    return out if out.ndim else float(out)


def check_node_mean(mean):
    """Mean LLR of the XOR of two bits with equal mean ``mean``."""
    mean = np.asarray(mean, dtype=np.float64)
    out = np.empty_like(mean)
    big = mean >= GA_LINEAR_MEAN
    p = phi(mean[~big])
    out[~big] = phi_inv(p * (2.0 - p))
    out[big] = mean[big] - 4.0 * math.log(2.0)
    return out if out.ndim else float(out)


def ga_means(mean_llr: float, n_block: int) -> np.ndarray:
    """Terminal mean LLRs of the n_block bit-channels, in decoding order."""
    check_power_of_two(n_block)
    if not mean_llr > 0:
        raise ValueError(f"mean LLR must be positive (got {mean_llr})")
    means = np.array([float(mean_llr)])
    while len(means) < n_block:
        children = np.empty(2 * len(means))
        children[0::2] = check_node_mean(means)
        children[1::2] = 2.0 * means
        means = children
    return means


def q_function(x):
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


def mean_to_ber(means):
    v = q_function(np.sqrt(np.asarray(means, dtype=np.float64) / 2.0))
    return np.clip(v, np.finfo(np.float64).tiny, 0.5)


def ga_ber(mean_llr: float, n_block: int) -> np.ndarray:
    """Genie-aided BER of every bit-channel (a reliability vector)."""
    return mean_to_ber(ga_means(mean_llr, n_block))


def _check_reliability(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise ValueError("reliability vector must be a non-empty 1-D sequence")
    if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v >= 1):
        raise ValueError("reliabilities must lie in [0, 1)")
    return v


def _fer_curve(v_sorted: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(FER, success probability) for K = 1 .. len(v) under the product bound."""
    log_success = np.cumsum(np.log1p(-v_sorted))
    return -np.expm1(log_success), np.exp(log_success)


def _order(v: np.ndarray) -> np.ndarray:
    return np.argsort(v, kind="stable")


def nc_binary_design(v, n_block: Optional[int] = None) -> DesignResult:
    """Throughput-maximizing message length for the non-combining protocol.

    ``v`` may be a single level's reliability vector or several levels
    concatenated (the joint multilevel design), so its length is not
    required to be a power of two.
    """
    v = _check_reliability(v)
    n = len(v)
    if n_block is not None and n_block != n:
        raise ValueError(f"reliability vector has {n} entries (expected {n_block})")
    order = _order(v)
    fer, success = _fer_curve(v[order])
    eta = np.arange(1, n + 1) / n * success
    k_opt = int(np.argmax(eta)) + 1
    return DesignResult(
        n_block=n,
        sorted_channels=tuple(int(i) for i in order),
        k_opt=k_opt,
        predicted_throughput=float(eta[k_opt - 1]),
        predicted_fer=tuple(float(p) for p in fer),
        throughput_curve=tuple(float(e) for e in eta),
    )


def nc_design(mean_llr: float, n_block: int) -> DesignResult:
    """NC design of a channel whose LLRs have mean ``mean_llr``."""
    return nc_binary_design(ga_ber(mean_llr, n_block))


def ga_design(gamma_db: float, n_block: int) -> DesignResult:
    """NC design of a BPSK code from the channel SNR."""
    return nc_design(4.0 * db_to_linear(gamma_db), n_block)


def retransmission_design(
    reliabilities: Callable[[int], np.ndarray],
    n_messages: int,
    max_rounds: int = CC_MAX_ROUNDS,
    resort: bool = False,
) -> Tuple[List[DesignResult], np.ndarray]:
    """Iterate the effective-length throughput over transmissions l = 1, 2, ...

    ``reliabilities(l)`` gives the channel BERs seen after l transmissions.
    The ordering is fixed at l = 1 unless ``resort`` is set, in which case
    each round sorts its own (possibly longer) vector. Message lengths run
    over 1 .. n_messages and n_messages channel uses are spent per round.
    Iteration stops when the peak throughput is unchanged (relative change
    below 1e-9) or after ``max_rounds`` rounds.

    Returns the design of every round and the final throughput curve.
    """
    if max_rounds < 1:
        raise ValueError(f"the number of transmissions must be >= 1 (got {max_rounds})")
    kappa = np.arange(1, n_messages + 1)
    effective_length = np.zeros(n_messages)
    all_failed = np.ones(n_messages)
    order: Optional[np.ndarray] = None
    rounds: List[DesignResult] = []
    previous = None
    eta = np.zeros(n_messages)
    for transmission in range(1, max_rounds + 1):
        v = _check_reliability(reliabilities(transmission))
        if order is None or resort:
            order = _order(v)
        fer, _ = _fer_curve(v[order][:n_messages])
        effective_length = effective_length + n_messages * all_failed
        eta = kappa * (1.0 - fer) / effective_length
        all_failed = all_failed * fer
        k_opt = int(np.argmax(eta)) + 1
        peak = float(eta[k_opt - 1])
        rounds.append(
            DesignResult(
                n_block=len(v),
                sorted_channels=tuple(int(i) for i in order),
                k_opt=k_opt,
                predicted_throughput=peak,
                predicted_fer=tuple(float(p) for p in fer),
                throughput_curve=tuple(float(e) for e in eta),
                rounds=transmission,
            )
        )
        if previous is not None and abs(peak - previous) <= CC_REL_TOL * max(abs(peak), 1e-300):
            break
        previous = peak
    return rounds, eta


def cc_design(mean_llr: float, n_block: int, max_rounds: int = CC_MAX_ROUNDS) -> DesignResult:
    """Design for Chase combining: the mean LLR grows linearly with l."""
    check_power_of_two(n_block)
    rounds, _ = retransmission_design(
        lambda t: ga_ber(t * mean_llr, n_block), n_block, max_rounds=max_rounds
    )
    result = rounds[-1]
    log.debug(f"CC design at mean LLR {mean_llr:.4g} stopped after {result.rounds} rounds")
    return result


def cc_binary_design(gamma_db: float, n_block: int, max_rounds: int = CC_MAX_ROUNDS) -> DesignResult:
    return cc_design(4.0 * db_to_linear(gamma_db), n_block, max_rounds=max_rounds)


def enclosing_power_of_two(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def ir_design(
    mean_llr: float, n_block: int, max_transmissions: int
) -> IrDesignResult:
    """IR design from a level's mean LLR.

    Transmission l extends the code to length lN; GA runs at that length,
    or at the enclosing power of two when lN is not one.
    """
    check_power_of_two(n_block)
    if max_transmissions < 1:
        raise ValueError(f"max transmissions must be >= 1 (got {max_transmissions})")
    approximate: List[int] = []

    def reliabilities(transmission: int) -> np.ndarray:
        length = transmission * n_block
        ga_length = enclosing_power_of_two(length)
        if ga_length != length:
            approximate.append(transmission)
        return ga_ber(mean_llr, ga_length)

    rounds, eta = retransmission_design(
        reliabilities, n_block, max_rounds=max_transmissions, resort=True
    )
    if approximate:
        log.warning(
            f"IR lengths of transmissions {approximate} are not powers of two, "
            "their predictions are approximate"
        )
    k_opt = int(np.argmax(eta)) + 1
    return IrDesignResult(
        per_round=tuple(rounds),
        k_opt=k_opt,
        predicted_throughput=float(eta[k_opt - 1]),
        throughput_curve=tuple(float(e) for e in eta),
        approximate_lengths=tuple(approximate),
    )


def ir_binary_design(gamma_db: float, n_block: int, max_transmissions: int) -> IrDesignResult:
    return ir_design(4.0 * db_to_linear(gamma_db), n_block, max_transmissions)


def _first_error_chunk(n_block: int, frames: int, n0: float, seed: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.integers(0, 2, size=(frames, n_block), dtype=np.uint8)
    x = polar_transform(u)
    y = (2.0 * x - 1.0) + rng.standard_normal((frames, n_block)) * math.sqrt(n0 / 2.0)
    return genie_error_matrix(-4.0 * y / n0, u)


def sim_based_design(
    channel_snr_db: float,
    n_block: int,
    n_sim: int,
    seed: int = 0,
    threads: Optional[int] = None,
    chunk_frames: int = SIM_CHUNK,
) -> DesignResult:
    """Design from genie-aided SC simulation on a BPSK AWGN channel.

    Channels are ranked by their first-error counts; the FER of the first K
    channels is the fraction of frames with a first-error event among them.
    """
    check_power_of_two(n_block)
    if n_sim < 1:
        raise ValueError(f"n_sim must be >= 1 (got {n_sim})")
    n0 = 1.0 / db_to_linear(channel_snr_db)
    sizes = [chunk_frames] * (n_sim // chunk_frames)
    if n_sim % chunk_frames:
        sizes.append(n_sim % chunk_frames)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    workers = resolve_threads(threads)
    logger = log.bind(snr_db=channel_snr_db, n_block=n_block)
    logger.info(f"simulating {n_sim} genie-aided frames on {workers} threads")
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        chunks = list(
            pool.map(lambda args: _first_error_chunk(n_block, args[0], n0, args[1]), zip(sizes, seeds))
        )
    events = np.concatenate(chunks, axis=0)
    counts = events.sum(axis=0)
    order = _order(counts)
    ranked = events[:, order]
    has_error = ranked.any(axis=1)
    first_rank = np.where(has_error, ranked.argmax(axis=1), n_block)
    histogram = np.bincount(first_rank, minlength=n_block + 1)[:n_block]
    fer = np.cumsum(histogram) / n_sim
    eta = np.arange(1, n_block + 1) / n_block * (1.0 - fer)
    k_opt = int(np.argmax(eta)) + 1
    logger.info(f"simulation-based design: K={k_opt}, throughput={eta[k_opt - 1]:.4f}")
    return DesignResult(
        n_block=n_block,
        sorted_channels=tuple(int(i) for i in order),
        k_opt=k_opt,
        predicted_throughput=float(eta[k_opt - 1]),
        predicted_fer=tuple(float(p) for p in fer),
        throughput_curve=tuple(float(e) for e in eta),
    )
