"""Plot throughput sweeps written by ``polarthru simulate`` (needs the plot extra)."""

from typing import Dict, List, Optional, Tuple
import csv
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import typer  # noqa: E402
from polarthru.channel import capacity  # noqa: E402

app = typer.Typer()


def read_sweep(path: str) -> Dict[Tuple[str, str], List[Tuple[float, float]]]:
    curves: Dict[Tuple[str, str], List[Tuple[float, float]]] = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["protocol"], row["decoder"])
            curves.setdefault(key, []).append((float(row["snr_db"]), float(row["throughput"])))
    return curves


@app.command()
def plot(
    sweeps: List[str] = typer.Argument(..., help="sweep CSV files"),
    bits_per_symbol: Optional[int] = typer.Option(None, help="draw this constellation's capacity"),
    out: str = typer.Option("sweep.png", help="image file to write"),
):
    fig, ax = plt.subplots()
    span: List[float] = []
    for path in sweeps:
        for (protocol, decoder), points in sorted(read_sweep(path).items()):
            points.sort()
            x = [p[0] for p in points]
            ax.plot(x, [p[1] for p in points], marker="o", label=f"{protocol} {decoder}")
            span.extend(x)
    if bits_per_symbol is not None and span:
        lo, hi = min(span), max(span)
        grid = [lo + (hi - lo) * i / 100 for i in range(101)]
        ax.plot(grid, [capacity(bits_per_symbol, g) for g in grid], "k--", label="capacity")
    ax.set_xlabel("Es/N0 (dB)")
    ax.set_ylabel("throughput (bits/channel use)")
    ax.grid(True)
    ax.legend()
    fig.savefig(out, dpi=150)
    typer.echo(f"wrote {out}")


if __name__ == "__main__":
    app()
