from rich.table import Table
from rich.text import Text
from rich.console import Group
from rich.columns import Columns
from rich.rule import Rule
from rich import box
from .styles import (
    console, GREEN, BLUE, CYAN, DIM, FG, YELLOW, RED, MAGENTA, CLASSIFICATION_STYLE, fmt, fmt_complex,
)

VERSION = "1.0.0"


def _table(*columns: tuple[str, dict]) -> Table:
    table = Table(
        show_edge=True,
        border_style=DIM,
        box=box.ROUNDED,
        padding=(0, 1),
        header_style=DIM,
    )
    for name, opts in columns:
        table.add_column(name, **opts)
    return table


def _matrix_table(labels: list[str], m) -> Table:
    table = _table(("", {"style": CYAN}), *[(l, {"style": FG, "justify": "right"}) for l in labels])
    for label, row in zip(labels, m):
        table.add_row(label, *[fmt(x) for x in row])
    return table


def _footer(parts: list, ok: bool, message: str, total_time: float):
    parts.append(Rule(style=DIM))
    console.print(Group(*parts))
    left = Text()
    if ok:
        left.append(f"✓ {message} in {total_time:.1f}s", style=f"bold {GREEN}")
    else:
        left.append(f"⚠ {message} in {total_time:.1f}s", style=f"bold {YELLOW}")
    right = Text(f"seqmetro v{VERSION}", style=DIM, justify="right")
    console.print(Columns([left, right], expand=True))
    console.print()


def stat_labels(L: int) -> list[str]:
    return ["S"] + [f"C{l}" for l in range(1, L + 1)]


def show_analysis(report: dict, total_time: float):
    parts = [Text("Channel", style=f"bold {BLUE}")]

    cptp = report["cptp"]
    channel = _table(("CHECK", {"style": CYAN}), ("VALUE", {"style": FG, "justify": "right"}), ("", {"width": 3}))
    channel.add_row("trace residual", fmt(cptp["trace_residual"]),
                    Text("✓", style=GREEN) if cptp["trace_preserving"] else Text("✗", style=RED))
    channel.add_row("Choi min eigenvalue", fmt(cptp["choi_min_eigenvalue"]),
                    Text("✓", style=GREEN) if cptp["completely_positive"] else Text("✗", style=RED))
    cls = report["classification"]
    channel.add_row("classification", Text(cls, style=CLASSIFICATION_STYLE.get(cls, FG)), "")
    channel.add_row("spectral gap", fmt(report["spectral_gap"]), "")
    parts.append(channel)
    parts.append(Text())

    parts.append(Text("Spectrum", style=f"bold {BLUE}"))
    spectrum = _table(("#", {"style": DIM, "justify": "right"}), ("λ", {"style": FG}), ("|λ|", {"style": FG, "justify": "right"}))
    for i, lam in enumerate(report["eigenvalues"]):
        z = complex(*lam)
        spectrum.add_row(str(i), fmt_complex(z), fmt(abs(z)))
    parts.append(spectrum)
    parts.append(Text())

    if report.get("fixed_point") is not None:
        parts.append(Text("Fixed point ρ*", style=f"bold {BLUE}"))
        rho = report["fixed_point"]
        fp = _table(*[(str(j), {"style": FG, "justify": "right"}) for j in range(len(rho))])
        for row in rho:
            fp.add_row(*[fmt_complex(complex(*z)) for z in row])
        parts.append(fp)
        parts.append(Text())

    stats = report.get("stationary")
    if stats:
        parts.append(Text("Stationary statistics", style=f"bold {BLUE}"))
        st = _table(("QUANTITY", {"style": CYAN}), ("VALUE", {"style": FG, "justify": "right"}))
        st.add_row("<S>*", fmt(stats["mean_s"]))
        st.add_row("(Δs)²*", fmt(stats["var_s"]))
        for l, c in enumerate(stats["mean_c"], start=1):
            st.add_row(f"<C{l}>*", fmt(c))
        if "sigma2" in stats:
            st.add_row("σ²", fmt(stats["sigma2"]))
        parts.append(st)
        parts.append(Text())

    if report.get("sigma") is not None:
        labels = stat_labels(len(report["sigma"]) - 1)
        parts.append(Text("Asymptotic covariance Σ", style=f"bold {BLUE}"))
        parts.append(_matrix_table(labels, report["sigma"]))
        if not report.get("psd", True):
            parts.append(Text("  Σ is not positive semidefinite within tolerance", style=YELLOW))
        parts.append(Text())

    if report.get("message"):
        parts.append(Text(f"  {report['message']}", style=YELLOW))
        parts.append(Text())

    _footer(parts, cls == "Mixing", "Analysis complete" if cls == "Mixing" else f"Channel is {cls}", total_time)


def show_simulation(summary: dict, total_time: float):
    parts = [Text("Simulation", style=f"bold {BLUE}")]
    info = _table(("FIELD", {"style": CYAN}), ("VALUE", {"style": FG}))
    for key in ("N", "L", "batch", "master_seed", "rng", "initial_state"):
        if key in summary:
            info.add_row(key, str(summary[key]))
    if summary.get("out"):
        info.add_row("csv", str(summary["out"]))
    parts.append(info)
    parts.append(Text())

    labels = stat_labels(summary["L"])
    empirical = summary.get("empirical")
    if empirical:
        parts.append(Text("Empirical vs stationary", style=f"bold {BLUE}"))
        t = _table(("STAT", {"style": CYAN}), ("MEAN", {"style": FG, "justify": "right"}),
                   ("STATIONARY", {"style": FG, "justify": "right"}), ("N·VAR", {"style": FG, "justify": "right"}),
                   ("Σ", {"style": FG, "justify": "right"}))
        stationary = summary.get("stationary_means") or [None] * len(labels)
        sigma = summary.get("sigma")
        for i, label in enumerate(labels):
            t.add_row(
                label,
                fmt(empirical["mean"][i]),
                fmt(stationary[i]) if stationary[i] is not None else "—",
                fmt(summary["N"] * empirical["covariance"][i][i]) if empirical["covariance"] else "—",
                fmt(sigma[i][i]) if sigma else "—",
            )
        parts.append(t)
        parts.append(Text())

    exact = summary.get("exact")
    if exact:
        parts.append(Text("Exact enumeration", style=f"bold {BLUE}"))
        t = _table(("STAT", {"style": CYAN}), ("MEAN", {"style": FG, "justify": "right"}))
        t.add_row("total probability", fmt(exact["total_probability"], 12))
        t.add_row("S", fmt(exact["mean_s"]))
        t.add_row("Var S", fmt(exact["var_s"]))
        for l, c in enumerate(exact["mean_c"], start=1):
            t.add_row(f"C{l}", fmt(c))
        parts.append(t)
        parts.append(Text())
        parts.append(Text("Exact covariance", style=f"bold {BLUE}"))
        parts.append(_matrix_table(labels, exact["covariance"]))
        parts.append(Text())

    diag = summary.get("diagnostics")
    ok = True
    if isinstance(diag, dict) and "skewness" in diag:
        parts.append(Text("Gaussianity", style=f"bold {BLUE}"))
        t = _table(("CHECK", {"style": CYAN}), ("VALUE", {"style": FG, "justify": "right"}),
                   ("TARGET", {"style": DIM, "justify": "right"}))
        t.add_row("√N mean offset", fmt(diag["mean_offset"]), f"0 ± {fmt(diag['mean_offset_se'], 4)}")
        t.add_row("skewness", fmt(diag["skewness"]), f"0 ± {fmt(diag['skewness_se'], 4)}")
        t.add_row("excess kurtosis", fmt(diag["excess_kurtosis"]), f"0 ± {fmt(diag['excess_kurtosis_se'], 4)}")
        t.add_row("Mahalanobis² mean", fmt(diag["mahalanobis_mean"]), f"{diag['L'] + 1} ± {fmt(diag['mahalanobis_se'], 4)}")
        t.add_row("χ² 95% exceedance", fmt(diag["chi2_exceedance"]), "0.05")
        for k, (freq, bound) in sorted(diag["chebyshev"].items(), key=lambda kv: float(kv[0])):
            t.add_row(f"P(|z| ≥ {k})", fmt(freq), f"≤ {fmt(bound, 4)}")
        parts.append(t)
        parts.append(Text())
        ok = bool(diag.get("within_bands", True))
    elif diag:
        parts.append(Text(f"  diagnostics skipped: {diag}", style=DIM))
        parts.append(Text())

    _footer(parts, ok, "Simulation complete" if ok else "Simulation complete, outside Gaussian bands", total_time)


def show_fisher(summary: dict, total_time: float):
    L = summary["L"]
    parts = [Text(f"Fisher information per measurement ({summary['parameter']})", style=f"bold {BLUE}")]
    t = _table((summary["parameter"], {"style": CYAN, "justify": "right"}),
               *[(f"F{l}/N", {"style": FG, "justify": "right"}) for l in range(L + 1)],
               ("", {"width": 3}))
    for row in summary["rows"]:
        flag = Text("⚠", style=YELLOW) if row["singular"] else Text("")
        t.add_row(fmt(row["value"]), *[fmt(v) for v in row["per_measurement"]], flag)
    parts.append(t)
    parts.append(Text())
    singular = any(r["singular"] for r in summary["rows"])
    if singular:
        parts.append(Text("  ⚠ ill-conditioned Σ: pseudo-inverse used", style=YELLOW))
        parts.append(Text())
    _footer(parts, not singular, "Fisher information computed", total_time)


def show_sweep(summary: dict, total_time: float):
    L = summary["L_max"]
    parts = [Text("Standard vs sequential (per measurement)", style=f"bold {BLUE}")]
    cols = [("γβ/γ", {"style": CYAN, "justify": "right"}), ("γτ", {"style": CYAN, "justify": "right"}),
            ("η", {"style": CYAN, "justify": "right"}), ("F", {"style": MAGENTA, "justify": "right"})]
    cols += [(f"F{l}/N", {"style": FG, "justify": "right"}) for l in range(L + 1)]
    cols += [(f"gain{l}", {"style": DIM, "justify": "right"}) for l in range(1, L + 1)]
    if summary.get("equilibrium"):
        cols.append(("F_eq", {"style": FG, "justify": "right"}))
    t = _table(*cols)
    for row in summary["rows"]:
        cells = [fmt(row["gamma_ratio"]), fmt(row["tau_gamma"]), fmt(row["eta"]), fmt(row["F_standard"])]
        cells += [fmt(row[f"F{l}_per_N"]) for l in range(L + 1)]
        cells += [fmt(row[f"gain{l}"]) for l in range(1, L + 1)]
        if summary.get("equilibrium"):
            cells.append(fmt(row["F_eq"]))
        t.add_row(*cells)
    parts.append(t)
    parts.append(Text())
    if summary.get("out"):
        parts.append(Text(f"  → {summary['out']}", style=DIM))
        parts.append(Text())
    _footer(parts, True, f"{len(summary['rows'])} grid points", total_time)


def show_export(path: str, total_time: float):
    parts = [Text("Model file", style=f"bold {BLUE}"), Text(f"  → {path}", style=FG), Text()]
    _footer(parts, True, "Exported", total_time)
