from typing import Dict, Any
import enum
import json
from pydantic.dataclasses import dataclass


DEFAULT_CRC_WIDTH = 16
DEFAULT_MAX_TRANSMISSIONS = 64
DEFAULT_QUEUE_CAP = 1024
DEFAULT_CHUNK_FRAMES = 500


class _ParsableEnum(enum.Enum):
    @classmethod
    def parse(cls, value: Any):
        """Accept a member, its value or its name (case and dash insensitive)."""
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        for member in cls:
            if text.lower() == str(member.value).lower():
                return member
        key = text.upper().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            choices = ", ".join(str(m.value) for m in cls)
            raise ValueError(f"invalid {cls.__name__}: {value} (choose in {choices})")


class Protocol(_ParsableEnum):

    NC_D = "NC-D"
    CC_D = "CC-D"
    NC_I = "NC-I"
    CC_I = "CC-I"
    IR = "IR"

    @property
    def combining(self) -> bool:
        return self in (Protocol.CC_D, Protocol.CC_I)

    @property
    def level_independent(self) -> bool:
        return self in (Protocol.NC_I, Protocol.CC_I)


class DecoderKind(_ParsableEnum):

    SCD = "scd"
    SCLD = "scld"


class LlrMethod(_ParsableEnum):

    EXACT = "exact"
    PIECEWISE = "piecewise"


class DesignMethod(_ParsableEnum):

    GA = "GA"
    SIM = "SIM"


class Modulation(_ParsableEnum):

    BPSK = "bpsk"
    QAM4 = "qam4"
    QAM16 = "qam16"
    QAM64 = "qam64"
    QAM256 = "qam256"

    @property
    def bits_per_symbol(self) -> int:
        return {
            Modulation.BPSK: 1,
            Modulation.QAM4: 2,
            Modulation.QAM16: 4,
            Modulation.QAM64: 6,
            Modulation.QAM256: 8,
        }[self]

    @classmethod
    def from_bits_per_symbol(cls, bits_per_symbol: int) -> "Modulation":
        for member in cls:
            if member.bits_per_symbol == bits_per_symbol:
                return member
        raise ValueError(f"no modulation with {bits_per_symbol} bits per symbol")


@dataclass(frozen=True)
class CrcSpec:
    """Non-reflected CRC register parameters.

    Attributes:
        width: number of check bits (0 disables the CRC).
        poly: generator polynomial without its leading term.
        init: initial register value.
    """

    width: int
    poly: int = 0
    init: int = 0

    def __post_init__(self):
        if not 0 <= self.width <= 32:
            raise ValueError(f"CRC width must be in [0, 32] (got {self.width})")
        if self.width > 0 and not 0 <= self.poly < (1 << self.width):
            raise ValueError(f"CRC polynomial does not fit in {self.width} bits")
        if self.width > 0 and not 0 <= self.init < (1 << self.width):
            raise ValueError(f"CRC init does not fit in {self.width} bits")

    @property
    def enabled(self) -> bool:
        return self.width > 0

    @classmethod
    def from_width(cls, width: int) -> "CrcSpec":
        presets = {0: NO_CRC, 8: CRC8, 16: CRC16_CCITT}
        if width not in presets:
            raise ValueError(f"no CRC preset of width {width} (choose 0, 8 or 16)")
        return presets[width]


CRC16_CCITT = CrcSpec(width=16, poly=0x1021, init=0xFFFF)
CRC8 = CrcSpec(width=8, poly=0x07, init=0x00)
NO_CRC = CrcSpec(width=0)


@dataclass(frozen=True)
class DecoderConfiguration:
    """Which binary decoder runs on every level.

    Attributes:
        kind: SCD or CRC-aided SCLD.
        list_size: SCLD list size (ignored by SCD).
    """

    kind: DecoderKind = DecoderKind.SCD
    list_size: int = 1

    def __post_init__(self):
        if self.list_size < 1:
            raise ValueError(f"list size must be >= 1 (got {self.list_size})")

    @property
    def label(self) -> str:
        if self.kind == DecoderKind.SCD:
            return "scd"
        return f"scld{self.list_size}"


@dataclass(frozen=True)
class SimulationConfiguration:
    """Dataclass which holds the options of one HARQ simulation run.

    Attributes:
        protocol: HARQ protocol (IR is design-only and refused here).
        decoder: decoder kind.
        list_size: SCLD list size.
        llr_method: exact log-sum-exp or piecewise max-log demapping.
        frames: channel blocks (transmissions of N symbols) to simulate.
        seed: root seed; every session derives its own streams from it.
        threads: worker threads.
        chunk_frames: channel blocks per independent session.
        max_transmissions: cap on transmissions of one codeword.
        queue_cap: cap on receptions waiting on one level.
        crc_width: CRC width (16 is CRC-16-CCITT).
    """

    protocol: Protocol = Protocol.NC_D
    decoder: DecoderKind = DecoderKind.SCD
    list_size: int = 1
    llr_method: LlrMethod = LlrMethod.PIECEWISE
    frames: int = 1000
    seed: int = 0
    threads: int = 1
    chunk_frames: int = DEFAULT_CHUNK_FRAMES
    max_transmissions: int = DEFAULT_MAX_TRANSMISSIONS
    queue_cap: int = DEFAULT_QUEUE_CAP
    crc_width: int = DEFAULT_CRC_WIDTH

    def __post_init__(self):
        if self.protocol == Protocol.IR:
            raise ValueError("IR is supported at the design level only")
        if self.list_size < 1:
            raise ValueError(f"list size must be >= 1 (got {self.list_size})")
        if self.frames < 1 or self.chunk_frames < 1:
            raise ValueError("frames and chunk_frames must be >= 1")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1 (got {self.threads})")
        if self.max_transmissions < 1 or self.queue_cap < 1:
            raise ValueError("max_transmissions and queue_cap must be >= 1")
        CrcSpec.from_width(self.crc_width)

    @property
    def crc(self) -> CrcSpec:
        return CrcSpec.from_width(self.crc_width)

    @property
    def decoder_configuration(self) -> DecoderConfiguration:
        return DecoderConfiguration(kind=self.decoder, list_size=self.list_size)

    @classmethod
    def from_json(cls, path: str) -> "SimulationConfiguration":
        with open(path, "r") as f:
            c = f.read()
        kwargs: Dict[str, Any] = json.loads(c)
        if "protocol" in kwargs:
            kwargs["protocol"] = Protocol.parse(kwargs["protocol"])
        if "decoder" in kwargs:
            kwargs["decoder"] = DecoderKind.parse(kwargs["decoder"])
        if "llr_method" in kwargs:
            kwargs["llr_method"] = LlrMethod.parse(kwargs["llr_method"])
        return cls(**kwargs)  # type: ignore
