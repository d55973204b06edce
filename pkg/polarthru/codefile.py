"""Versioned JSON code files.

A code file describes one design completely: orderings and message lengths
of every level, the joint ordering of level-dependent designs, and the
predictions made at design time. Incremental-redundancy designs also carry
the ordering of every transmission.
"""

from typing import Any, Dict, Optional, Union
import dataclasses
import json
import mflog
from polarthru.config import DesignMethod, Modulation, Protocol
from polarthru.construction import DesignResult, IrDesignResult
from polarthru.errors import CodeFileError
from polarthru.mlpcm import IrMlpcmDesign, MlpcmSpec
from polarthru.polar import PolarCodeSpec

FORMAT_VERSION = 1

log = mflog.get_logger("polarthru.codefile")

Design = Union[MlpcmSpec, IrMlpcmDesign]


def _design_result_from_dict(d: Dict[str, Any]) -> DesignResult:
    return DesignResult(**d)


def _ir_level_to_dict(level: IrDesignResult) -> Dict[str, Any]:
    out = dataclasses.asdict(level)
    out["per_round"] = [dataclasses.asdict(d) for d in level.per_round]
    return out


def _ir_level_from_dict(d: Dict[str, Any]) -> IrDesignResult:
    d = dict(d)
    d["per_round"] = tuple(_design_result_from_dict(r) for r in d["per_round"])
    return IrDesignResult(**d)


def design_to_dict(design: Design) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "modulation": Modulation.from_bits_per_symbol(design.bits_per_symbol).value,
        "N": design.n_block,
        "B": design.bits_per_symbol,
        "snr_db": design.design_snr_db,
        "predicted_throughput": design.predicted_throughput,
    }
    if isinstance(design, IrMlpcmDesign):
        first = design.first_round()
        out.update(
            {
                "protocol": Protocol.IR.value,
                "design_method": DesignMethod.GA.value,
                "K": list(first.level_k),
                "K_total": first.total_k,
                "sorted_channels": [list(level.sorted_channels) for level in first.levels],
                "predicted_fer": list(first.level_fer),
                "ir_levels": [_ir_level_to_dict(level) for level in design.levels],
            }
        )
        return out
    out.update(
        {
            "protocol": design.protocol.value,
            "design_method": design.design_method.value,
            "K": list(design.level_k),
            "K_total": design.total_k,
            "sorted_channels": [list(level.sorted_channels) for level in design.levels],
            "joint_order": None if design.joint_order is None else list(design.joint_order),
            "predicted_fer": list(design.level_fer),
            "rounds": list(design.rounds),
        }
    )
    return out


def design_from_dict(d: Dict[str, Any]) -> Design:
    try:
        version = d["format_version"]
        if version != FORMAT_VERSION:
            raise CodeFileError(f"unsupported code file version {version} (expected {FORMAT_VERSION})")
        n_block = int(d["N"])
        bits = int(d["B"])
        if Modulation.parse(d["modulation"]).bits_per_symbol != bits:
            raise CodeFileError(f"modulation {d['modulation']} does not carry {bits} bits per symbol")
        protocol = Protocol.parse(d["protocol"])
        if protocol == Protocol.IR:
            return IrMlpcmDesign(
                bits_per_symbol=bits,
                n_block=n_block,
                design_snr_db=float(d["snr_db"]),
                levels=tuple(_ir_level_from_dict(level) for level in d["ir_levels"]),
                predicted_throughput=float(d["predicted_throughput"]),
            )
        ks = d["K"]
        orders = d["sorted_channels"]
        if len(ks) != len(orders):
            raise CodeFileError(f"{len(ks)} message lengths for {len(orders)} levels")
        if "K_total" in d and int(d["K_total"]) != sum(ks):
            raise CodeFileError(f"K_total={d['K_total']} disagrees with the level lengths {ks}")
        joint = d.get("joint_order")
        return MlpcmSpec(
            bits_per_symbol=bits,
            n_block=n_block,
            design_snr_db=float(d["snr_db"]),
            protocol=protocol,
            levels=tuple(
                PolarCodeSpec(n_block=n_block, sorted_channels=tuple(o), k_info=int(k))
                for o, k in zip(orders, ks)
            ),
            predicted_throughput=float(d["predicted_throughput"]),
            level_fer=tuple(float(p) for p in d["predicted_fer"]),
            joint_order=None if joint is None else tuple(joint),
            design_method=DesignMethod.parse(d.get("design_method", DesignMethod.GA.value)),
            rounds=tuple(d.get("rounds", ())),
        )
    except CodeFileError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise CodeFileError(f"malformed code file: {e}")


def save_design(design: Design, path: str) -> None:
    with open(path, "w") as f:
        json.dump(design_to_dict(design), f, indent=2)
        f.write("\n")
    log.info(f"code file written to {path}")


def load_design(path: str, modulation: Optional[Modulation] = None, n_block: Optional[int] = None) -> Design:
    """Read a code file, refusing one that disagrees with ``modulation`` or ``n_block``."""
    try:
        with open(path, "r") as f:
            c = f.read()
        d = json.loads(c)
    except OSError as e:
        raise CodeFileError(f"cannot read code file {path}: {e}")
    except ValueError as e:
        raise CodeFileError(f"code file {path} is not valid JSON: {e}")
    if not isinstance(d, dict):
        raise CodeFileError(f"code file {path} does not hold an object")
    design = design_from_dict(d)
    if modulation is not None and modulation.bits_per_symbol != design.bits_per_symbol:
        raise CodeFileError(
            f"code file {path} is for {design.bits_per_symbol} bits per symbol, not {modulation.value}"
        )
    if n_block is not None and n_block != design.n_block:
        raise CodeFileError(f"code file {path} has N={design.n_block}, not {n_block}")
    return design
