from rich.live import Live
from rich.console import Group
from rich.text import Text
import time
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Sequence, TypeVar

import numpy as np

from .styles import console, GREEN, BLUE, YELLOW, CYAN, DIM, BRIGHT, FG, RED

from core.config import THREADS, section
from core.instrument import Instrument
from core.trajectory import StatRecord, lag_statistics, sample_batch
from models.thermometer import SweepRow, ThermometerParams, sweep_row

T = TypeVar("T")
R = TypeVar("R")


class PipelineView:
    def __init__(self, title: str, detail: str, total: int, unit: str):
        self.title     = title
        self.detail    = detail
        self.total     = total
        self.unit      = unit
        self.done      = 0
        self.failed    = 0
        self.workers: dict[int, str] = {}
        self.started   = time.monotonic()

    def set_worker(self, index: int, status: str):
        self.workers[index] = status

    def finish_task(self, index: int, ok: bool):
        self.workers.pop(index, None)
        self.done += 1
        if not ok:
            self.failed += 1

    def render(self) -> Group:
        parts = []

        header = Text()
        header.append(f" {self.title}", style=FG)
        header.append("  →  ", style=DIM)
        header.append(self.detail, style=CYAN)
        parts.append(header)
        parts.append(Text(f" {'─' * 44}", style=DIM))
        parts.append(Text())

        pct = int(100 * self.done / self.total) if self.total else 100
        label = Text()
        label.append(f" {self.unit}", style=DIM)
        label.append(f"   {self.done}/{self.total}", style=BRIGHT)
        label.append(f"   {pct}%", style=BRIGHT)
        label.append(f"   {time.monotonic() - self.started:.1f}s", style=DIM)
        parts.append(label)

        filled = int((pct / 100) * 40)
        bar_style = GREEN if self.done == self.total and not self.failed else BLUE
        parts.append(Text(" " + "█" * filled + "░" * (40 - filled), style=bar_style))
        parts.append(Text())

        for index, status in sorted(self.workers.items()):
            line = Text()
            line.append(f"   #{index:<4}", style=CYAN)
            line.append(status, style=YELLOW)
            parts.append(line)
        if self.failed:
            parts.append(Text(f"   ✗ {self.failed} failed", style=RED))

        return Group(*parts)


def run_parallel(
    items: Sequence[T],
    work: Callable[[T], R],
    title: str,
    detail: str,
    unit: str,
    threads: int | None = None,
    quiet: bool = False,
    describe: Callable[[T], str] | None = None,
) -> list[R]:
    """Run ``work`` over ``items`` on a thread pool; results come back in input order.

    The first exception raised by any task is re-raised after the pool has drained.
    """
    threads = max(1, threads or THREADS)
    view = PipelineView(title, detail, len(items), unit)
    results: list[R | None] = [None] * len(items)
    errors: list[tuple[int, BaseException]] = []
    lock = threading.Lock()

    def _task(index: int, item: T, live: Live | None) -> R:
        with lock:
            view.set_worker(index, describe(item) if describe else "running…")
            if live:
                live.update(view.render())
        return work(item)

    def _drain(live: Live | None):
        with ThreadPoolExecutor(max_workers=min(threads, max(len(items), 1))) as executor:
            futures = {executor.submit(_task, i, item, live): i for i, item in enumerate(items)}
            for future in as_completed(futures):
                index = futures[future]
                try:
                    results[index] = future.result()
                    ok = True
                except Exception as e:
                    errors.append((index, e))
                    ok = False
                with lock:
                    view.finish_task(index, ok)
                    if live:
                        live.update(view.render())

    if quiet:
        _drain(None)
    else:
        console.print()
        with Live(view.render(), console=console, refresh_per_second=4) as live:
            _drain(live)

    if errors:
        raise min(errors, key=lambda e: e[0])[1]
    return results  # type: ignore[return-value]


def run_batch(
    instr: Instrument,
    rho0: np.ndarray,
    N: int,
    L: int,
    seeds: Sequence[int],
    chunk_size: int | None = None,
    threads: int | None = None,
    quiet: bool = False,
) -> list[StatRecord]:
    """Sample one record per seed in chunks and reduce each record to (S, C_1..C_L)."""
    chunk_size = chunk_size or int(section("simulation").get("chunk_size", 250))
    chunks = [list(seeds[i:i + chunk_size]) for i in range(0, len(seeds), chunk_size)]

    def _chunk(chunk: list[int]) -> list[StatRecord]:
        records = sample_batch(instr, rho0, N, chunk)
        s, c = lag_statistics(np.stack([r.outcomes for r in records]), L)
        return [
            StatRecord(N=N, L=L, S=float(s[n]), C=c[n], seed=rec.seed)
            for n, rec in enumerate(records)
        ]

    per_chunk = run_parallel(
        chunks, _chunk, "simulate", f"{len(seeds)} records × N={N}", "chunks",
        threads=threads, quiet=quiet, describe=lambda ch: f"{len(ch)} records",
    )
    return [stat for chunk in per_chunk for stat in chunk]


def run_sweep(
    points: Sequence[ThermometerParams],
    L_max: int,
    include_equilibrium: bool = False,
    threads: int | None = None,
    quiet: bool = False,
) -> list[SweepRow]:
    return run_parallel(
        points,
        lambda p: sweep_row(p, L_max, include_equilibrium),
        "thermometer",
        f"{len(points)} grid points, L ≤ {L_max}",
        "points",
        threads=threads,
        quiet=quiet,
        describe=lambda p: f"γβ/γ={p.gamma_beta / p.gamma:g}  γτ={p.tau * p.gamma:g}  η={p.eta:g}",
    )
