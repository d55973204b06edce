from typing import IO, Iterator, List, Optional
import contextlib
import csv
import sys
import mflog
import numpy as np
import typer
from polarthru.channel import awgn, capacity, shannon_capacity
from polarthru.codefile import load_design, save_design
from polarthru.config import (
    DEFAULT_CHUNK_FRAMES,
    DEFAULT_CRC_WIDTH,
    DEFAULT_MAX_TRANSMISSIONS,
    DecoderKind,
    DesignMethod,
    LlrMethod,
    Modulation,
    Protocol,
    SimulationConfiguration,
)
from polarthru.construction import CC_MAX_ROUNDS
from polarthru.harq import simulate
from polarthru.mlpcm import DEFAULT_SIM_FRAMES, IrMlpcmDesign, MlpcmSpec, design_mlpcm
from polarthru.modem import (
    ConstellationSpec,
    modulate,
    pam_exact_llr,
    pam_piecewise_llr,
    qam_level_llrs,
)
from polarthru.ratematch import DEFAULT_BUDGET, rate_match_spec
from polarthru.utils import check_power_of_two, log_exceptions, parse_snr_range, resolve_threads

app = typer.Typer()
log = mflog.get_logger("polarthru.cli")

SWEEP_COLUMNS = [
    "snr_db",
    "protocol",
    "decoder",
    "list_size",
    "N",
    "B",
    "K_data",
    "throughput",
    "capacity",
    "ratio",
    "frames",
    "retx_mean",
]


@contextlib.contextmanager
def _output(path: str) -> Iterator[IO]:
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as f:
            yield f


def _num(x: float) -> str:
    return f"{x:.6f}"


def data_bits(spec: MlpcmSpec, protocol: Protocol, crc_width: int) -> int:
    """Data bits a design carries per channel block under ``protocol``."""
    if protocol.level_independent:
        return sum(k - crc_width for k in spec.level_k if k > crc_width)
    return max(spec.total_k - crc_width, 0)


def sign_agreement(spec: ConstellationSpec, samples: int, seed: int = 0) -> List[float]:
    """Per level, how often the piecewise and exact LLRs decide the same bit."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=(spec.bits_per_symbol, samples), dtype=np.uint8)
    y = awgn(modulate(labels, spec), spec.n0, rng)
    decided = labels.T
    out = []
    for level in range(spec.bits_per_symbol):
        exact = qam_level_llrs(y, level, decided[:, :level], spec, LlrMethod.EXACT)
        approx = qam_level_llrs(y, level, decided[:, :level], spec, LlrMethod.PIECEWISE)
        out.append(float(np.mean((exact < 0) == (approx < 0))))
    return out


@app.callback()
def configure(log_level: str = typer.Option("INFO", help="minimal log level")):
    mflog.set_config(minimal_level=log_level.upper())


@app.command("design")
def cmd_design(
    mod: str = typer.Option("qam16", help="bpsk, qam4, qam16, qam64 or qam256"),
    n: int = typer.Option(512, help="code length of every level"),
    snr_db: float = typer.Option(4.0, help="design Es/N0 in dB"),
    protocol: str = typer.Option("NC-D", help="NC-D, NC-I, CC-D, CC-I or IR"),
    method: str = typer.Option("GA", help="GA or SIM"),
    max_tx: int = typer.Option(CC_MAX_ROUNDS, help="transmissions considered by CC and IR"),
    n_sim: int = typer.Option(DEFAULT_SIM_FRAMES, help="frames of a SIM design"),
    seed: int = 0,
    threads: Optional[int] = None,
    out: str = typer.Option("code.json", help="code file to write"),
):
    with log_exceptions(log):
        modulation = Modulation.parse(mod)
        check_power_of_two(n)
        result = design_mlpcm(
            Protocol.parse(protocol),
            snr_db,
            n,
            modulation.bits_per_symbol,
            method=DesignMethod.parse(method),
            max_transmissions=max_tx,
            n_sim=n_sim,
            seed=seed,
            threads=resolve_threads(threads),
        )
        save_design(result, out)
        if isinstance(result, IrMlpcmDesign):
            ks = result.first_round().level_k
        else:
            ks = result.level_k
        typer.echo(
            f"{modulation.value} N={n} at {snr_db} dB: K={list(ks)} "
            f"predicted throughput {result.predicted_throughput:.4f} bits/use -> {out}"
        )


@app.command("simulate")
def cmd_simulate(
    code: str = typer.Option(..., help="code file written by the design command"),
    snr_db: Optional[str] = typer.Option(None, help="a or a:step:b (default: design SNR)"),
    protocol: List[str] = typer.Option([], help="repeatable (default: the design protocol)"),
    decoder: List[str] = typer.Option([], help="scd or scld, repeatable (default: scd)"),
    list_size: int = typer.Option(32, "--list", help="SCLD list size"),
    llr_method: str = typer.Option("piecewise", help="piecewise or exact"),
    frames: int = typer.Option(1000, help="channel blocks per point"),
    seed: int = 0,
    threads: Optional[int] = None,
    chunk_frames: int = DEFAULT_CHUNK_FRAMES,
    max_tx: int = DEFAULT_MAX_TRANSMISSIONS,
    crc_width: int = DEFAULT_CRC_WIDTH,
    mod: Optional[str] = typer.Option(None, help="refuse code files for another modulation"),
    n: Optional[int] = typer.Option(None, help="refuse code files of another length"),
    out: str = typer.Option("-", help="CSV file, - for stdout"),
):
    with log_exceptions(log):
        modulation = None if mod is None else Modulation.parse(mod)
        spec = load_design(code, modulation=modulation, n_block=n)
        if isinstance(spec, IrMlpcmDesign):
            raise ValueError("IR designs cannot be simulated, only predicted")
        gammas = [spec.design_snr_db] if snr_db is None else parse_snr_range(snr_db)
        protocols = [Protocol.parse(p) for p in protocol] or [spec.protocol]
        decoders = [DecoderKind.parse(d) for d in decoder] or [DecoderKind.SCD]
        n_threads = resolve_threads(threads)
        with _output(out) as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            for gamma in gammas:
                reference = capacity(spec.bits_per_symbol, gamma)
                for p in protocols:
                    for d in decoders:
                        config = SimulationConfiguration(
                            protocol=p,
                            decoder=d,
                            list_size=list_size if d == DecoderKind.SCLD else 1,
                            llr_method=LlrMethod.parse(llr_method),
                            frames=frames,
                            seed=seed,
                            threads=n_threads,
                            chunk_frames=chunk_frames,
                            max_transmissions=max_tx,
                            crc_width=crc_width,
                        )
                        record = simulate(spec, gamma, config)
                        writer.writerow(
                            [
                                _num(gamma),
                                p.value,
                                d.value,
                                config.list_size,
                                spec.n_block,
                                spec.bits_per_symbol,
                                data_bits(spec, p, crc_width),
                                _num(record.throughput),
                                _num(reference),
                                _num(record.throughput / reference if reference > 0 else 0.0),
                                record.blocks,
                                _num(record.retx_mean),
                            ]
                        )


@app.command("ratematch")
def cmd_ratematch(
    code: str = typer.Option(..., help="SCD code file"),
    out: str = typer.Option(..., help="rate-matched code file to write"),
    snr_db: Optional[float] = typer.Option(None, help="default: design SNR"),
    list_size: int = typer.Option(32, "--list", help="SCLD list size"),
    frames: int = typer.Option(DEFAULT_BUDGET, help="channel blocks per probe"),
    seed: int = 0,
    threads: Optional[int] = None,
    crc_width: int = DEFAULT_CRC_WIDTH,
    probes: str = typer.Option("-", help="probe trace CSV, - for stdout"),
):
    with log_exceptions(log):
        spec = load_design(code)
        if isinstance(spec, IrMlpcmDesign):
            raise ValueError("IR designs cannot be rate matched")
        matched, results = rate_match_spec(
            spec,
            gamma_db=snr_db,
            list_size=list_size,
            budget=frames,
            seed=seed,
            threads=resolve_threads(threads),
            crc_width=crc_width,
        )
        save_design(matched, out)
        with _output(probes) as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["search", "K", "throughput"])
            for result in results:
                search = "joint" if result.level is None else str(result.level)
                for k, value in result.probes:
                    writer.writerow([search, k, _num(value)])


@app.command("llr-check")
def cmd_llr_check(
    mod: str = typer.Option("qam16", help="bpsk, qam4, qam16, qam64 or qam256"),
    snr_db: float = 6.0,
    points: int = typer.Option(401, help="grid points of y"),
    span: Optional[float] = typer.Option(None, help="y runs over [-span, span]"),
    samples: int = typer.Option(0, help="Monte-Carlo samples for the sign agreement"),
    seed: int = 0,
    out: str = typer.Option("-", help="CSV file, - for stdout"),
):
    """Exact and piecewise PAM LLRs over a grid of y, lower bits zero."""
    with log_exceptions(log):
        spec = ConstellationSpec.for_modulation(Modulation.parse(mod), snr_db)
        m = spec.pam_order
        limit = float(m + 1) if span is None else span
        y = np.linspace(-limit, limit, points)
        lower = np.zeros(points, dtype=np.int64)
        with _output(out) as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["y", "level", "exact", "approx"])
            for level in range(spec.pam_levels):
                exact = pam_exact_llr(y, level, lower, m, spec.n0)
                approx = pam_piecewise_llr(y, level, lower, m, spec.n0)
                for row in zip(y, exact, approx):
                    writer.writerow([_num(row[0]), level, _num(row[1]), _num(row[2])])
        if samples > 0:
            for level, agreement in enumerate(sign_agreement(spec, samples, seed)):
                log.info(f"level {level}: sign agreement {agreement:.5f}")
                typer.echo(f"level {level}: sign agreement {agreement:.5f}", err=True)


@app.command("capacity")
def cmd_capacity(
    mod: List[str] = typer.Option(["bpsk", "qam16", "qam64"], help="repeatable"),
    snr_db: str = typer.Option("-10:1:30", help="a or a:step:b"),
    out: str = typer.Option("-", help="CSV file, - for stdout"),
):
    with log_exceptions(log):
        modulations = [Modulation.parse(m) for m in mod]
        with _output(out) as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["snr_db", "modulation", "capacity", "shannon"])
            for gamma in parse_snr_range(snr_db):
                for modulation in modulations:
                    writer.writerow(
                        [
                            _num(gamma),
                            modulation.value,
                            _num(capacity(modulation.bits_per_symbol, gamma)),
                            _num(shannon_capacity(gamma)),
                        ]
                    )


def main():
    app()


if __name__ == "__main__":
    main()
