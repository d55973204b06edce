"""AWGN channel and constellation-constrained capacity."""

import functools
import math
import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import logsumexp
from polarthru.config import Modulation
from polarthru.modem import ConstellationSpec
from polarthru.utils import db_to_linear

HERMITE_NODES = 64


def awgn(x, n0: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular Gaussian noise of variance N0 / 2 per real dimension."""
    x = np.asarray(x, dtype=np.complex128)
    if n0 < 0:
        raise ValueError(f"N0 must be >= 0 (got {n0})")
    w = rng.standard_normal((2,) + x.shape)
    scale = math.sqrt(n0 / 2.0)
    return x + scale * (w[0] + 1j * w[1])


@functools.lru_cache(maxsize=1)
def _hermite():
    t, a = hermgauss(HERMITE_NODES)
    return t, a / math.sqrt(math.pi)


def pam_capacity(pam_order: int, n0: float) -> float:
    """Mutual information of equiprobable M-PAM on the odd-integer lattice.

    The noise has variance N0 / 2, the expectation over it is a Gauss-Hermite
    quadrature.
    """
    points = 2.0 * np.arange(pam_order) - (pam_order - 1)
    t, weights = _hermite()
    w = math.sqrt(n0) * t
    d = points[:, None] - points[None, :]
    # |x_i - x_j + w|^2 - |w|^2
    exponent = -(d[:, :, None] ** 2 + 2.0 * d[:, :, None] * w[None, None, :]) / n0
    per_point = logsumexp(exponent, axis=1) @ weights
    value = math.log2(pam_order) - float(np.mean(per_point)) / math.log(2.0)
    return min(max(value, 0.0), math.log2(pam_order))


def capacity(bits_per_symbol: int, gamma_db: float) -> float:
    """Capacity in bits per channel use of BPSK or square QAM at Es / N0 = gamma."""
    spec = ConstellationSpec.from_snr(bits_per_symbol, gamma_db)
    if spec.is_bpsk:
        return pam_capacity(2, spec.n0)
    return 2.0 * pam_capacity(spec.pam_order, spec.n0)


def modulation_capacity(modulation: Modulation, gamma_db: float) -> float:
    return capacity(modulation.bits_per_symbol, gamma_db)


def shannon_capacity(gamma_db: float) -> float:
    """Unconstrained complex AWGN capacity log2(1 + gamma)."""
    return math.log2(1.0 + db_to_linear(gamma_db))
