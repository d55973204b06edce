"""Binary polar codes: encoder, SC decoder, CRC-aided SC list decoder and
the genie-aided SC decoder used by simulation-based construction.

Bit-channels are 0-based and encoding is x = u F^{(x)n} in natural order (no
bit-reversal). The decoders visit u_0 .. u_{N-1} and the Gaussian approximation
in ``construction`` refines the same tree, so index i means the same channel
everywhere. LLRs are natural-log with positive values favoring bit 0.
"""

from typing import Dict, List, Optional, Tuple
import numpy as np
from pydantic.dataclasses import dataclass
from polarthru.config import CrcSpec, NO_CRC
from polarthru.crc import crc_check
from polarthru.utils import check_power_of_two

LLR_CLIP = 300.0


@dataclass(frozen=True)
class PolarCodeSpec:
    """One binary polar code.

    Attributes:
        n_block: code length N (a power of two).
        sorted_channels: bit-channel indices by ascending estimated BER.
        k_info: message length K (data plus CRC); the information set is
            the first k_info entries of sorted_channels.
    """

    n_block: int
    sorted_channels: Tuple[int, ...]
    k_info: int

    def __post_init__(self):
        check_power_of_two(self.n_block)
        if len(self.sorted_channels) != self.n_block:
            raise ValueError(
                f"sorted_channels has {len(self.sorted_channels)} entries "
                f"(expected {self.n_block})"
            )
        seen = np.zeros(self.n_block, dtype=bool)
        idx = np.asarray(self.sorted_channels, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= self.n_block:
            raise ValueError("sorted_channels must hold indices in [0, N)")
        seen[idx] = True
        if not seen.all():
            raise ValueError("sorted_channels must be a permutation of 0..N-1")
        if not 0 <= self.k_info <= self.n_block:
            raise ValueError(f"k_info must be in [0, {self.n_block}] (got {self.k_info})")

    @property
    def information_set(self) -> np.ndarray:
        """Information positions in ascending (decoding) order."""
        return np.sort(np.asarray(self.sorted_channels[: self.k_info], dtype=np.int64))

    @property
    def information_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_block, dtype=bool)
        mask[list(self.sorted_channels[: self.k_info])] = True
        return mask

    def with_k(self, k_info: int) -> "PolarCodeSpec":
        return PolarCodeSpec(
            n_block=self.n_block, sorted_channels=self.sorted_channels, k_info=int(k_info)
        )

    @classmethod
    def from_order(cls, order, k_info: int) -> "PolarCodeSpec":
        return cls(
            n_block=len(order),
            sorted_channels=tuple(int(i) for i in order),
            k_info=int(k_info),
        )


def polar_transform(u: np.ndarray) -> np.ndarray:
    """x = u F^{(x)n} over GF(2) along the last axis (an involution)."""
    x = np.array(u, dtype=np.uint8, copy=True)
    n = x.shape[-1]
    check_power_of_two(n)
    lead = x.shape[:-1]
    half = 1
    while half < n:
        view = x.reshape(lead + (-1, 2, half))
        view[..., 0, :] ^= view[..., 1, :]
        half *= 2
    return x


def encode(u: np.ndarray, spec: PolarCodeSpec) -> np.ndarray:
    u = np.asarray(u, dtype=np.uint8)
    check_power_of_two(u.shape[-1])
    if u.shape[-1] != spec.n_block:
        raise ValueError(f"u has {u.shape[-1]} bits (expected {spec.n_block})")
    if np.any(u[..., ~spec.information_mask]):
        raise ValueError("u must be zero on frozen positions")
    return polar_transform(u)


def embed(message: np.ndarray, spec: PolarCodeSpec) -> np.ndarray:
    """Place message bits on the information set in ascending index order."""
    message = np.asarray(message, dtype=np.uint8)
    if message.shape[-1] != spec.k_info:
        raise ValueError(f"message has {message.shape[-1]} bits (expected {spec.k_info})")
    u = np.zeros(message.shape[:-1] + (spec.n_block,), dtype=np.uint8)
    u[..., spec.information_set] = message
    return u


def boxplus(a, b):
    """LLR of the XOR of two independent bits, 2 atanh(tanh(a/2) tanh(b/2))."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return (
        np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
        + np.log1p(np.exp(-np.abs(a + b)))
        - np.log1p(np.exp(-np.abs(a - b)))
    )


def hard_decision(llr: np.ndarray) -> np.ndarray:
    return (np.asarray(llr) < 0).astype(np.uint8)


def _g(left: np.ndarray, right: np.ndarray, x_left: np.ndarray) -> np.ndarray:
    return right + (1.0 - 2.0 * x_left) * left


def _path_penalty(llr: np.ndarray, bit) -> np.ndarray:
    return np.logaddexp(0.0, -(1.0 - 2.0 * bit) * llr)


def _prepare(llr: np.ndarray, n_block: int) -> np.ndarray:
    llr = np.asarray(llr, dtype=np.float64)
    if llr.shape[-1] != n_block:
        raise ValueError(f"LLR frame has {llr.shape[-1]} values (expected {n_block})")
    if not np.all(np.isfinite(llr)):
        raise ValueError("LLR frame must be finite")
    return np.clip(llr, -LLR_CLIP, LLR_CLIP)


def _zero_path_leaves(llr: np.ndarray) -> np.ndarray:
    """Leaf LLRs of a sub-tree whose decisions are all zero."""
    frames, n = llr.shape
    blocks = llr.reshape(frames, 1, n)
    while n > 1:
        h = n // 2
        left, right = blocks[..., :h], blocks[..., h:]
        a = boxplus(left, right)
        b = _g(left, right, np.zeros_like(left))
        blocks = np.stack([a, b], axis=2).reshape(frames, -1, h)
        n = h
    return blocks.reshape(frames, -1)


def genie_leaf_llrs(llr: np.ndarray, true_u: np.ndarray) -> np.ndarray:
    """Bit-channel LLRs seen by SC when every earlier decision is the true bit.

    Partial sums are known in advance, so the whole tree is evaluated stage
    by stage for a batch of frames.
    """
    llr = np.atleast_2d(llr)
    true_u = np.atleast_2d(np.asarray(true_u, dtype=np.uint8))
    frames, n = llr.shape
    blocks = _prepare(llr, n).reshape(frames, 1, n)
    u_blocks = true_u.reshape(frames, 1, n)
    while n > 1:
        h = n // 2
        left, right = blocks[..., :h], blocks[..., h:]
        a = boxplus(left, right)
        b = _g(left, right, polar_transform(u_blocks[..., :h]))
        blocks = np.stack([a, b], axis=2).reshape(frames, -1, h)
        u_blocks = u_blocks.reshape(frames, -1, h)
        n = h
    return blocks.reshape(frames, -1)


def genie_error_matrix(llr: np.ndarray, true_u: np.ndarray) -> np.ndarray:
    """First-error events: entry (m, i) is set when channel i errs on frame m."""
    true_u = np.atleast_2d(np.asarray(true_u, dtype=np.uint8))
    return hard_decision(genie_leaf_llrs(llr, true_u)) != true_u


def genie_scd_decode(llr: np.ndarray, true_u: np.ndarray) -> List[int]:
    """Indices of the bit-channels whose genie-aided decision errs."""
    return [int(i) for i in np.flatnonzero(genie_error_matrix(llr, true_u)[0])]


class PolarCode:
    """Decoders bound to one PolarCodeSpec.

    The object only holds the node classification of its code; every decode
    call works on its own arrays, so one instance can serve several threads.
    """

    RATE0 = 0
    RATE1 = 1
    REP = 2
    OTHER = 3

    def __init__(self, spec: PolarCodeSpec):
        self.spec = spec
        self.n_block = spec.n_block
        self.k_info = spec.k_info
        self.mask = spec.information_mask
        self.information_set = spec.information_set
        self._nodes: Dict[Tuple[int, int], int] = {}
        self._classify(0, self.n_block)

    def _classify(self, offset: int, n: int) -> int:
        sub = self.mask[offset : offset + n]
        if not sub.any():
            kind = self.RATE0
        elif sub.all():
            kind = self.RATE1
        elif n > 1 and sub[-1] and not sub[:-1].any():
            kind = self.REP
        else:
            kind = self.OTHER
            self._classify(offset, n // 2)
            self._classify(offset + n // 2, n // 2)
        self._nodes[(offset, n)] = kind
        return kind

    # SC decoding

    def _sc(self, llr: np.ndarray, offset: int, u: np.ndarray) -> np.ndarray:
        frames, n = llr.shape
        kind = self._nodes[(offset, n)]
        if kind == self.RATE0:
            return np.zeros((frames, n), dtype=np.uint8)
        if kind == self.RATE1:
            x = hard_decision(llr)
            u[:, offset : offset + n] = polar_transform(x)
            return x
        if kind == self.REP:
            total = llr
            while total.shape[1] > 1:
                h = total.shape[1] // 2
                total = total[:, h:] + total[:, :h]
            bit = hard_decision(total[:, 0])
            u[:, offset + n - 1] = bit
            return np.repeat(bit[:, None], n, axis=1)
        h = n // 2
        left, right = llr[:, :h], llr[:, h:]
        x1 = self._sc(boxplus(left, right), offset, u)
        x2 = self._sc(_g(left, right, x1), offset + h, u)
        return np.concatenate([x1 ^ x2, x2], axis=1)

    def scd_decode(self, llr: np.ndarray) -> np.ndarray:
        """SC decoding of one frame (N,) or a batch (F, N).

        Returns the message estimate(s): information bits in ascending index
        order, frozen positions being decoded as zero.
        """
        single = np.ndim(llr) == 1
        llr = np.atleast_2d(_prepare(llr, self.n_block))
        u = np.zeros(llr.shape, dtype=np.uint8)
        if self.k_info > 0:
            self._sc(llr, 0, u)
        message = u[:, self.information_set]
        return message[0] if single else message

    # SC list decoding

    def _scl(self, llr: np.ndarray, offset: int, state: "_ListState") -> Tuple[np.ndarray, np.ndarray]:
        paths, n = llr.shape
        if n == 1:
            return state.leaf(llr[:, 0], offset, bool(self.mask[offset]))
        if not self.mask[offset : offset + n].any():
            state.frozen_block(_zero_path_leaves(llr))
            return np.zeros((paths, n), dtype=np.uint8), np.arange(paths)
        h = n // 2
        x1, origin1 = self._scl(boxplus(llr[:, :h], llr[:, h:]), offset, state)
        llr = llr[origin1]
        x2, origin2 = self._scl(_g(llr[:, :h], llr[:, h:], x1), offset + h, state)
        x1 = x1[origin2]
        return np.concatenate([x1 ^ x2, x2], axis=1), origin1[origin2]

    def scl_candidates(self, llr: np.ndarray, list_size: int) -> Tuple[np.ndarray, np.ndarray]:
        """Surviving list of one frame, most likely first.

        Returns (messages, path_metrics): one message per surviving path and
        the matching path metrics (lower is more likely).
        """
        if list_size < 1:
            raise ValueError(f"list size must be >= 1 (got {list_size})")
        llr = _prepare(llr, self.n_block).reshape(1, -1)
        state = _ListState(self.n_block, list_size)
        self._scl(llr, 0, state)
        order = np.argsort(state.metric, kind="stable")
        return state.u[order][:, self.information_set], state.metric[order]

    def scld_decode(
        self,
        llr: np.ndarray,
        list_size: int,
        crc: CrcSpec = NO_CRC,
        prefix: Optional[np.ndarray] = None,
    ) -> Optional[np.ndarray]:
        """CRC-aided SC list decoding of one frame.

        Returns the most likely surviving message whose CRC checks, or None
        (detected failure). When ``prefix`` is given the CRC covers the prefix
        followed by the message. Without CRC the most likely path is returned.
        """
        if crc.enabled and self.k_info + (0 if prefix is None else len(prefix)) < crc.width:
            raise ValueError("message is shorter than the CRC")
        messages, _ = self.scl_candidates(llr, list_size)
        if not crc.enabled:
            return messages[0]
        words = messages
        if prefix is not None and len(prefix) > 0:
            head = np.broadcast_to(np.asarray(prefix, dtype=np.uint8), (len(messages), len(prefix)))
            words = np.concatenate([head, messages], axis=1)
        ok = np.atleast_1d(crc_check(words, crc))
        hits = np.flatnonzero(ok)
        if len(hits) == 0:
            return None
        return messages[hits[0]]


class _ListState:
    """Per-call scratch of the list decoder: path metrics and decided bits."""

    def __init__(self, n_block: int, list_size: int):
        self.list_size = list_size
        self.metric = np.zeros(1)
        self.u = np.zeros((1, n_block), dtype=np.uint8)

    def frozen_block(self, leaves: np.ndarray) -> None:
        for i in range(leaves.shape[1]):
            self.metric = self.metric + _path_penalty(leaves[:, i], 0)
        self.metric = self.metric - self.metric.min()

    def leaf(self, llr: np.ndarray, index: int, information: bool) -> Tuple[np.ndarray, np.ndarray]:
        paths = len(self.metric)
        if not information:
            self.metric = self.metric + _path_penalty(llr, 0)
            self.metric = self.metric - self.metric.min()
            return np.zeros((paths, 1), dtype=np.uint8), np.arange(paths)
        # candidates are ordered (path, bit) so the stable sort prefers lower paths
        candidates = np.stack(
            [self.metric + _path_penalty(llr, 0), self.metric + _path_penalty(llr, 1)], axis=1
        ).reshape(-1)
        keep = np.argsort(candidates, kind="stable")[: min(2 * paths, self.list_size)]
        origin = keep // 2
        bits = (keep % 2).astype(np.uint8)
        self.metric = candidates[keep] - candidates[keep].min()
        self.u = self.u[origin]
        self.u[:, index] = bits
        return bits[:, None], origin
