"""Set-partitioned QAM mapping and multistage-decoding LLRs.

A 2^B-QAM symbol carries code bits c_1..c_B (one per level). The bits are
precoded (b_k = c_k xor c_{k+1} for odd k, b_k = c_k for even k) and the odd
and even b drive two natural-mapped PAMs on the odd-integer lattice. The
labeling is set-partitioned: fixing each further bit grows the intra-subset
minimum distance by sqrt(2).

With this structure the level-n LLR of multistage decoding splits into two
one-dimensional PAM LLRs:

    odd level 2k-1:  lambda = lambda_k^I [+] lambda_k^Q
    even level 2k:   lambda = (1 - 2 c_{2k-1}) lambda_k^I + lambda_k^Q

where [+] is the boxplus. A PAM LLR is either exact (log-sum-exp over its
subset) or the piecewise max-log form, linear in y between adjacent subset
points.

Per received symbol and level, the piecewise path costs two interval
lookups (one per dimension, O(1) each since subset points are equally
spaced), two multiply-adds for the linear pieces and one boxplus or one
signed addition. The exact path evaluates one Gaussian metric per point of
each one-dimensional subset, about 2 * 2^(B/2 - k + 1) exponentials at PAM
level k, instead of 2^(B - n + 1) two-dimensional metrics for the direct
log-sum-exp.

Samples live on the unscaled lattice and the SNR sets N0 = Es / gamma, the
noise variance being N0 / 2 per real dimension.
"""

from typing import List, Optional, Tuple
import functools
import math
import numpy as np
from pydantic.dataclasses import dataclass
from scipy.special import logsumexp, ndtr
from polarthru.config import LlrMethod, Modulation
from polarthru.construction import check_node_mean
from polarthru.polar import boxplus
from polarthru.utils import db_to_linear, linear_to_db

__all__ = [
    "ConstellationSpec",
    "boxplus",
    "precode",
    "unprecode",
    "pam_map",
    "qam_map",
    "modulate",
    "constellation",
    "verify_spm",
    "exact_msd_llr",
    "pam_subset",
    "pam_exact_llr",
    "pam_piecewise_llr",
    "qam_level_llrs",
    "cc_combine_dependent",
    "cc_combine_independent",
    "chase_equivalent",
    "avg_pam_llr",
    "qam_avg_llrs",
    "level_mean_llrs",
]


@dataclass(frozen=True)
class ConstellationSpec:
    """BPSK (B = 1) or square 2^B-QAM with even B.

    Attributes:
        bits_per_symbol: B.
        n0: noise spectral density (variance N0 / 2 per real dimension).
    """

    bits_per_symbol: int
    n0: float

    def __post_init__(self):
        b = self.bits_per_symbol
        if b != 1 and (b < 2 or b % 2 != 0 or b > 16):
            raise ValueError(f"bits per symbol must be 1 or an even number up to 16 (got {b})")
        if not self.n0 > 0:
            raise ValueError(f"N0 must be positive (got {self.n0})")

    @property
    def is_bpsk(self) -> bool:
        return self.bits_per_symbol == 1

    @property
    def pam_order(self) -> int:
        return 2 if self.is_bpsk else 2 ** (self.bits_per_symbol // 2)

    @property
    def pam_levels(self) -> int:
        return 1 if self.is_bpsk else self.bits_per_symbol // 2

    @property
    def es(self) -> float:
        m = self.pam_order
        return 1.0 if self.is_bpsk else 2.0 * (m * m - 1) / 3.0

    @property
    def gamma_db(self) -> float:
        return linear_to_db(self.es / self.n0)

    def with_n0(self, n0: float) -> "ConstellationSpec":
        return ConstellationSpec(bits_per_symbol=self.bits_per_symbol, n0=n0)

    @classmethod
    def from_snr(cls, bits_per_symbol: int, gamma_db: float) -> "ConstellationSpec":
        m = 2 if bits_per_symbol == 1 else 2 ** (bits_per_symbol // 2)
        es = 1.0 if bits_per_symbol == 1 else 2.0 * (m * m - 1) / 3.0
        return cls(bits_per_symbol=bits_per_symbol, n0=es / db_to_linear(gamma_db))

    @classmethod
    def for_modulation(cls, modulation: Modulation, gamma_db: float) -> "ConstellationSpec":
        return cls.from_snr(modulation.bits_per_symbol, gamma_db)


def _bits(c, what: str = "c") -> np.ndarray:
    c = np.asarray(c, dtype=np.uint8)
    if c.ndim == 0 or np.any(c > 1):
        raise ValueError(f"{what} must be a bit sequence")
    return c


def precode(c) -> np.ndarray:
    """b_k = c_k xor c_{k+1} for odd (1-based) k, b_k = c_k for even k."""
    c = _bits(c)
    if c.shape[-1] % 2 != 0:
        raise ValueError(f"precoding needs an even number of bits (got {c.shape[-1]})")
    b = c.copy()
    b[..., 0::2] ^= c[..., 1::2]
    return b


def unprecode(b) -> np.ndarray:
    b = _bits(b, "b")
    if b.shape[-1] % 2 != 0:
        raise ValueError(f"precoding needs an even number of bits (got {b.shape[-1]})")
    c = b.copy()
    c[..., 0::2] ^= b[..., 1::2]
    return c


def pam_map(d_bits) -> np.ndarray:
    """Natural mapping 2d - (M - 1); d_bits[..., 0] is the least significant bit."""
    d_bits = _bits(d_bits, "d_bits")
    m = d_bits.shape[-1]
    d = d_bits.astype(np.int64) @ (1 << np.arange(m, dtype=np.int64))
    return 2 * d - ((1 << m) - 1)


def qam_map(c) -> np.ndarray:
    """Set-partitioned 2^B-QAM point of label c (last axis, c_1 first)."""
    b = precode(c)
    return pam_map(b[..., 0::2]) + 1j * pam_map(b[..., 1::2])


def modulate(codewords: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    """Map level codewords (B, N) to N symbols."""
    codewords = np.asarray(codewords, dtype=np.uint8)
    if codewords.shape[0] != spec.bits_per_symbol:
        raise ValueError(
            f"expected {spec.bits_per_symbol} level codewords (got {codewords.shape[0]})"
        )
    if spec.is_bpsk:
        return 2.0 * codewords[0] - 1.0 + 0j
    return qam_map(codewords.T).astype(np.complex128)


@functools.lru_cache(maxsize=16)
def constellation(bits_per_symbol: int) -> Tuple[np.ndarray, np.ndarray]:
    """All labels (2^B, B) and their points (2^B,)."""
    labels = (
        (np.arange(2 ** bits_per_symbol)[:, None] >> np.arange(bits_per_symbol)) & 1
    ).astype(np.uint8)
    if bits_per_symbol == 1:
        points = 2.0 * labels[:, 0] - 1.0 + 0j
    else:
        points = qam_map(labels).astype(np.complex128)
    labels.setflags(write=False)
    points.setflags(write=False)
    return labels, points


def verify_spm(bits_per_symbol: int) -> List[float]:
    """Minimum intra-subset distance for label prefixes of length 0 .. B-1."""
    if bits_per_symbol % 2 != 0 or not 2 <= bits_per_symbol <= 8:
        raise ValueError("verify_spm supports even B in [2, 8]")
    labels, points = constellation(bits_per_symbol)
    ladder = []
    for p in range(bits_per_symbol):
        best = math.inf
        prefixes = labels[:, :p] @ (1 << np.arange(p)) if p else np.zeros(len(points), dtype=int)
        for value in np.unique(prefixes):
            subset = points[prefixes == value]
            gaps = np.abs(subset[:, None] - subset[None, :])
            best = min(best, float(gaps[gaps > 0].min()))
        ladder.append(best)
    return ladder


def _check_level(level: int, decided: np.ndarray, spec: ConstellationSpec) -> None:
    if not 0 <= level < spec.bits_per_symbol:
        raise ValueError(f"level must be in [0, {spec.bits_per_symbol}) (got {level})")
    if decided.shape[-1] != level:
        raise ValueError(f"level {level} needs {level} decided bits (got {decided.shape[-1]})")


def _decided(decided, n_samples: int) -> np.ndarray:
    if decided is None:
        return np.zeros((n_samples, 0), dtype=np.uint8)
    decided = np.asarray(decided, dtype=np.uint8)
    if decided.ndim == 1:
        decided = np.broadcast_to(decided, (n_samples, decided.shape[0]))
    return decided


def _subset_metric_llr(metric: np.ndarray, level: int, decided: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    labels, _ = constellation(spec.bits_per_symbol)
    inside = np.all(labels[None, :, :level] == decided[:, None, :], axis=2)
    zero = inside & (labels[None, :, level] == 0)
    one = inside & (labels[None, :, level] == 1)
    return logsumexp(np.where(zero, metric, -np.inf), axis=1) - logsumexp(
        np.where(one, metric, -np.inf), axis=1
    )


def _symbol_metric(y: np.ndarray, spec: ConstellationSpec, n0: float) -> np.ndarray:
    _, points = constellation(spec.bits_per_symbol)
    if spec.is_bpsk:
        y = y.real
        return -((y[:, None] - points.real[None, :]) ** 2) / n0
    return -np.abs(y[:, None] - points[None, :]) ** 2 / n0


def exact_msd_llr(y, level: int, decided, spec: ConstellationSpec) -> np.ndarray:
    """Level LLR by log-sum-exp over the subset fixed by the decided upper bits.

    ``level`` is 0-based; ``decided`` holds c_1 .. c_level, per sample or shared.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.complex128))
    decided = _decided(decided, len(y))
    _check_level(level, decided, spec)
    return _subset_metric_llr(_symbol_metric(y, spec, spec.n0), level, decided, spec)


def pam_subset(level: int, lower, pam_order: int) -> Tuple[np.ndarray, int]:
    """First subset point and spacing of PAM level ``level`` given lower bits value."""
    return 2 * np.asarray(lower, dtype=np.int64) - (pam_order - 1), 2 ** (level + 1)


def pam_exact_llr(y, level: int, lower, pam_order: int, n0: float) -> np.ndarray:
    """Exact one-dimensional LLR of PAM bit ``level`` (0-based)."""
    y = np.asarray(y, dtype=np.float64)
    x0, s = pam_subset(level, lower, pam_order)
    size = pam_order >> level
    j = np.arange(size)
    points = np.asarray(x0)[..., None] + s * j
    metric = -((y[..., None] - points) ** 2) / n0
    zero = (j % 2) == 0
    return logsumexp(metric[..., zero], axis=-1) - logsumexp(metric[..., ~zero], axis=-1)


def pam_piecewise_llr(y, level: int, lower, pam_order: int, n0: float) -> np.ndarray:
    """Max-log PAM LLR, linear between consecutive subset points.

    In (x_j, x_{j+1}] the LLR is (-1)^j (x_{j+1} - x_j)(x_{j+1} + x_j - 2y) / N0,
    the first and last intervals extending to infinity.
    """
    y = np.asarray(y, dtype=np.float64)
    x0, s = pam_subset(level, lower, pam_order)
    size = pam_order >> level
    j = np.clip(np.ceil((y - x0) / s) - 1, 0, size - 2)
    sign = 1.0 - 2.0 * (j % 2)
    return sign * s * (2.0 * x0 + (2.0 * j + 1.0) * s - 2.0 * y) / n0


def _pam_llr(y, level, lower, pam_order, n0, method: LlrMethod) -> np.ndarray:
    if method == LlrMethod.EXACT:
        return pam_exact_llr(y, level, lower, pam_order, n0)
    return pam_piecewise_llr(y, level, lower, pam_order, n0)


def _lower_values(bits: np.ndarray) -> np.ndarray:
    if bits.shape[-1] == 0:
        return np.zeros(bits.shape[:-1], dtype=np.int64)
    return bits.astype(np.int64) @ (1 << np.arange(bits.shape[-1], dtype=np.int64))


def qam_level_llrs(
    y,
    level: int,
    decided,
    spec: ConstellationSpec,
    method: LlrMethod = LlrMethod.PIECEWISE,
    n0: Optional[float] = None,
) -> np.ndarray:
    """Level LLR through the I/Q PAM decomposition (``level`` is 0-based)."""
    y = np.atleast_1d(np.asarray(y, dtype=np.complex128))
    decided = _decided(decided, len(y))
    _check_level(level, decided, spec)
    n0 = spec.n0 if n0 is None else n0
    m = spec.pam_order
    if spec.is_bpsk:
        return _pam_llr(y.real, 0, np.zeros(len(y), dtype=np.int64), 2, n0, method)
    k = level // 2
    lower_i = _lower_values(decided[:, 0 : 2 * k : 2] ^ decided[:, 1 : 2 * k : 2])
    lower_q = _lower_values(decided[:, 1 : 2 * k : 2])
    llr_i = _pam_llr(y.real, k, lower_i, m, n0, method)
    llr_q = _pam_llr(y.imag, k, lower_q, m, n0, method)
    if level % 2 == 0:
        return boxplus(llr_i, llr_q)
    return (1.0 - 2.0 * decided[:, level - 1]) * llr_i + llr_q


def chase_equivalent(samples, n0: float) -> Tuple[np.ndarray, float]:
    """Mean of L receptions of one symbol and the matching N0 / L.

    The combined AWGN likelihood of the receptions is, up to a factor that
    does not depend on the symbol, the likelihood of their mean at N0 / L.
    """
    samples = np.asarray(samples)
    count = samples.shape[-1]
    return samples.mean(axis=-1), n0 / count


def cc_combine_dependent(samples, level: int, decided, spec: ConstellationSpec) -> np.ndarray:
    """Joint log-sum-exp LLR of L receptions of the same symbol.

    ``samples`` has shape (n_samples, L).
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.ndim == 1:
        samples = samples[None, :]
    decided = _decided(decided, samples.shape[0])
    _check_level(level, decided, spec)
    metric = sum(
        _symbol_metric(samples[:, i], spec, spec.n0) for i in range(samples.shape[1])
    )
    return _subset_metric_llr(metric, level, decided, spec)


def cc_combine_independent(new_llr, prev_llr):
    """Level-independent combining: accumulate per-transmission LLRs."""
    return np.asarray(new_llr) + np.asarray(prev_llr)


def _gaussian_linear_integral(alpha, beta, lo, hi, mean, sigma) -> float:
    """Integral of (alpha + beta y) N(y; mean, sigma^2) over (lo, hi]."""
    za = (lo - mean) / sigma
    zb = (hi - mean) / sigma
    mass = float(ndtr(zb) - ndtr(za))
    pdf_a = 0.0 if math.isinf(za) else math.exp(-0.5 * za * za)
    pdf_b = 0.0 if math.isinf(zb) else math.exp(-0.5 * zb * zb)
    first_moment = mean * mass + sigma * (pdf_a - pdf_b) / math.sqrt(2.0 * math.pi)
    return alpha * mass + beta * first_moment


def avg_pam_llr(level: int, pam_order: int, n0: float) -> float:
    """Mean piecewise LLR of PAM bit ``level`` given that a zero is sent.

    Each zero-labeled point is equally likely; its LLR is integrated over the
    whole real line in closed form, piece by piece.
    """
    levels = int(round(math.log2(pam_order)))
    if pam_order < 2 or 2 ** levels != pam_order:
        raise ValueError(f"PAM order must be a power of two >= 2 (got {pam_order})")
    if not 0 <= level < levels:
        raise ValueError(f"level must be in [0, {levels}) (got {level})")
    sigma = math.sqrt(n0 / 2.0)
    s = 2 ** (level + 1)
    size = pam_order >> level
    zeros = [d for d in range(pam_order) if not (d >> level) & 1]
    total = 0.0
    for d in zeros:
        lower = d % (2 ** level)
        x0 = 2 * lower - (pam_order - 1)
        x_d = 2 * d - (pam_order - 1)
        for j in range(size - 1):
            sign = 1.0 - 2.0 * (j % 2)
            alpha = sign * s * (2.0 * x0 + (2.0 * j + 1.0) * s) / n0
            beta = -2.0 * sign * s / n0
            lo = -math.inf if j == 0 else x0 + j * s
            hi = math.inf if j == size - 2 else x0 + (j + 1) * s
            total += _gaussian_linear_integral(alpha, beta, lo, hi, x_d, sigma)
    return total / len(zeros)


def qam_avg_llrs(pam_means) -> np.ndarray:
    """Lift per-PAM-level means to the B QAM levels (check and variable nodes)."""
    pam_means = np.asarray(pam_means, dtype=np.float64)
    out = np.empty(2 * len(pam_means))
    out[0::2] = check_node_mean(pam_means)
    out[1::2] = 2.0 * pam_means
    return out


def level_mean_llrs(spec: ConstellationSpec) -> np.ndarray:
    """Mean LLR of every level, used to design the level codes."""
    if spec.is_bpsk:
        return np.array([4.0 / spec.n0])
    pam = [avg_pam_llr(k, spec.pam_order, spec.n0) for k in range(spec.pam_levels)]
    return qam_avg_llrs(pam)
