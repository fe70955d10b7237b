"""Regenerate the data and a chart behind each published exhibit."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .catalog import Catalog, load_catalog
from .energy import energy_for_target, power_breakdown, setup_power
from .errors import InfeasibleTargetError, ValidationError
from .protocols import ProtocolSpec, build
from .scenario import fmt_number
from .svg import Axes, Series, emit_bar_svg, emit_svg

N_1GBIT = 1e9
N_1PBIT = 1e15
TAU_DSP = 0.018

TABLE4_PAPER = {
    "bb84": (3916.0, 1092.734),
    "e91": (8277.0, 934.287),
    "mdi": (4070.0, 46.714),
}
TABLE4_RATE_RTOL = 1e-3


@dataclass
class Exhibit:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple]
    svg: str
    extra: dict[str, str] = field(default_factory=dict)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([v if isinstance(v, str) else fmt_number(float(v)) for v in row])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {f"{self.name}.csv": self.csv_text(), f"{self.name}.svg": self.svg, **self.extra}
        paths = []
        for fname, text in sorted(files.items()):
            p = out / fname
            p.write_text(text, encoding="utf-8", newline="\n")
            paths.append(p)
        return paths


# --- helpers ---------------------------------------------------------------------


def dv_spec(family: str, **kw) -> ProtocolSpec:
    kw.setdefault("preset", "table4_repro")
    return ProtocolSpec(family, **kw)


def cv_spec(variant: str = "het_2p", family: str = "cv_gaussian", **kw) -> ProtocolSpec:
    return ProtocolSpec(family, encoding="quadrature", detector="bhd", detection_variant=variant, **kw)


def total_energy(spec: ProtocolSpec, cat: Catalog, n_target: float = N_1GBIT) -> float:
    """Energy to target, NaN when no key can be produced."""
    try:
        return energy_for_target(build(spec, cat), cat, n_target).total_J
    except InfeasibleTargetError:
        return math.nan


def curve(spec: ProtocolSpec, cat: Catalog, xs: Sequence[float], n_target: float = N_1GBIT) -> list[float]:
    return [total_energy(spec.at_distance(float(d)), cat, n_target) for d in xs]


def _curves_exhibit(
    name: str,
    xs: Sequence[float],
    series: dict[str, Callable[[float], float]],
    axes: Axes,
    x_name: str = "distance_km",
) -> Exhibit:
    cols = {k: [f(float(x)) for x in xs] for k, f in series.items()}
    rows = [tuple([float(x)] + [cols[k][i] for k in series]) for i, x in enumerate(xs)]
    svg = emit_svg([Series(k, list(xs), v) for k, v in cols.items()], axes)
    return Exhibit(name, (x_name, *series), rows, svg)


def _energy_axes(title: str, x_log: bool = False) -> Axes:
    return Axes(x_label="distance (km)", y_label="energy for 1 Gbit (J)", x_log=x_log, y_log=True, title=title)


def _lin(a: float, b: float, n: int) -> list[float]:
    return [float(v) for v in np.linspace(a, b, n)]


def _geom(a: float, b: float, n: int) -> list[float]:
    return [float(v) for v in np.geomspace(a, b, n)]


# --- exhibits --------------------------------------------------------------------


def table4(cat: Catalog) -> Exhibit:
    rows = []
    lines = []
    groups = []
    for fam, (p_paper, k_paper) in TABLE4_PAPER.items():
        s = build(dv_spec(fam, distance_km=40.0), cat)
        power = setup_power(s, cat)
        kbps = s.rate().secret_bps / 1e3
        power_ok = power == p_paper
        rate_ok = abs(kbps - k_paper) <= TABLE4_RATE_RTOL * k_paper
        rows.append((fam, power, p_paper, kbps, k_paper, "PASS" if power_ok and rate_ok else "FAIL"))
        lines.append(
            f"{'PASS' if power_ok and rate_ok else 'FAIL'} {fam}: power {power:.1f} W (paper {p_paper:.0f}), "
            f"rate {kbps:.3f} kbit/s (paper {k_paper:.3f})"
        )
        groups.append((fam, power_breakdown(s, cat)))
    svg = emit_bar_svg(groups, Axes(title="power share at 40 km"))
    cols = ("protocol", "power_W", "paper_power_W", "secret_kbps", "paper_secret_kbps", "status")
    return Exhibit("table4", cols, rows, svg, {"table4_check.txt": "\n".join(lines) + "\n"})


def fig_ee(cat: Catalog) -> Exhibit:
    xs = _lin(1, 150, 150)

    def ee(fam: str) -> Callable[[float], float]:
        return lambda d: energy_for_target(build(dv_spec(fam, distance_km=d), cat), cat, 0).ee_bits_per_J

    ex = _curves_exhibit(
        "fig_ee",
        xs,
        {f: ee(f) for f in ("bb84", "e91", "mdi")},
        Axes(x_label="distance (km)", y_label="energy efficiency (bit/J)", y_log=True, title="DV energy efficiency"),
    )
    # 1 Pbit energies as extra columns
    pbit = {f: curve(dv_spec(f), cat, xs, N_1PBIT) for f in ("bb84", "e91", "mdi")}
    ex.columns = ex.columns + tuple(f"{f}_1pbit_J" for f in pbit)
    ex.rows = [row + tuple(pbit[f][i] for f in pbit) for i, row in enumerate(ex.rows)]
    return ex


def fig_dv_1gbit(cat: Catalog) -> Exhibit:
    xs = _lin(1, 200, 200)
    return _curves_exhibit(
        "fig_dv_1gbit",
        xs,
        {f: (lambda d, f=f: total_energy(dv_spec(f, distance_km=d), cat)) for f in ("bb84", "e91", "mdi")},
        _energy_axes("DV protocols"),
    )


def fig_bb84_qber(cat: Catalog) -> Exhibit:
    xs = _lin(1, 150, 150)
    qbers = (0.01, 0.02, 0.05, 0.08)
    return _curves_exhibit(
        "fig_bb84_qber",
        xs,
        {
            f"qber_{q:g}": (lambda d, q=q: total_energy(dv_spec("bb84", distance_km=d, overrides={"qber": q}), cat))
            for q in qbers
        },
        _energy_axes("BB84 versus QBER"),
    )


def fig_detectors(cat: Catalog) -> Exhibit:
    xs = _lin(1, 200, 200)
    return _curves_exhibit(
        "fig_detectors",
        xs,
        {
            "snspd": lambda d: total_energy(dv_spec("bb84", distance_km=d), cat),
            "ingaas_apd": lambda d: total_energy(dv_spec("bb84", detector="ingaas_apd", distance_km=d), cat),
        },
        _energy_axes("BB84 detectors"),
    )


WAVELENGTH_SETUPS = {
    "1550nm_snspd": dict(wavelength_nm=1550, detector="snspd"),
    "780nm_si_apd": dict(wavelength_nm=780, detector="si_apd"),
    "532nm_si_apd": dict(wavelength_nm=532, detector="si_apd"),
}


def fig_wavelengths(cat: Catalog) -> Exhibit:
    xs = _geom(0.01, 100, 161)
    return _curves_exhibit(
        "fig_wavelengths",
        xs,
        {
            k: (lambda d, kw=kw: total_energy(dv_spec("bb84", distance_km=d, **kw), cat))
            for k, kw in WAVELENGTH_SETUPS.items()
        },
        _energy_axes("BB84 wavelengths", x_log=True),
    )


def _cv_variants(name: str, family: str, xs: Sequence[float], cat: Catalog) -> Exhibit:
    return _curves_exhibit(
        name,
        xs,
        {
            v: (lambda d, v=v: total_energy(cv_spec(v, family, distance_km=d), cat))
            for v in ("hom_1p", "het_1p", "hom_2p", "het_2p")
        },
        _energy_axes(f"{family} detection variants"),
    )


def fig_cv_gauss(cat: Catalog) -> Exhibit:
    return _cv_variants("fig_cv_gauss", "cv_gaussian", _lin(1, 150, 75), cat)


def fig_cv_psk(cat: Catalog) -> Exhibit:
    return _cv_variants("fig_cv_psk", "cv_psk", _lin(1, 40, 40), cat)


def fig_cv_vs_dv(cat: Catalog) -> Exhibit:
    xs = _lin(1, 100, 100)
    return _curves_exhibit(
        "fig_cv_vs_dv",
        xs,
        {
            "bb84_apd": lambda d: total_energy(dv_spec("bb84", detector="ingaas_apd", distance_km=d), cat),
            "bb84_snspd": lambda d: total_energy(dv_spec("bb84", distance_km=d), cat),
            "cv_het_2p_dsp": lambda d: total_energy(cv_spec(distance_km=d, overrides={"tau_dsp": TAU_DSP}), cat),
            "cv_het_2p": lambda d: total_energy(cv_spec(distance_km=d), cat),
        },
        _energy_axes("CV versus DV with DSP cost"),
    )


def _mp(family: str, n: int, d: float, **kw) -> ProtocolSpec:
    if family in ("cv_cka", "ncv_qkd"):
        kw.update(encoding="quadrature", detector="bhd")
    else:
        kw.setdefault("preset", "table4_repro")
    return ProtocolSpec(family, n_parties=n, distance_km=d, **kw)


def fig_alltoall(cat: Catalog) -> Exhibit:
    ns = list(range(3, 13))
    return _curves_exhibit(
        "fig_alltoall",
        ns,
        {
            "alltoall_pairs": lambda n: total_energy(_mp("alltoall_pairs", int(n), 10.0), cat),
            "alltoall_ghz": lambda n: total_energy(_mp("alltoall_ghz", int(n), 10.0), cat),
        },
        Axes(x_label="parties n", y_label="energy for 1e9 states (J)", y_log=True, title="all-to-all entanglement"),
        x_name="n_parties",
    )


CKA_DV = ("ghz_cka", "bell_cka", "bb84_cka")


def fig_cka_dv(cat: Catalog) -> Exhibit:
    ns = list(range(3, 11))
    by_n = {f: [total_energy(_mp(f, n, 5.0), cat) for n in ns] for f in CKA_DV}
    ds = _lin(1, 100, 100)
    by_d = {f: [total_energy(_mp(f, 5, d), cat) for d in ds] for f in CKA_DV}
    rows = [("n_parties", float(n), *(by_n[f][i] for f in CKA_DV)) for i, n in enumerate(ns)]
    rows += [("distance_km", d, *(by_d[f][i] for f in CKA_DV)) for i, d in enumerate(ds)]
    svg = emit_svg(
        [Series(f, ns, by_n[f]) for f in CKA_DV],
        Axes(x_label="parties n (5 km arms)", y_label="energy for 1 Gbit (J)", y_log=True, title="DV conference keys"),
    )
    return Exhibit("fig_cka_dv", ("sweep", "x", *CKA_DV), rows, svg)


def fig_cka_cv(cat: Catalog) -> Exhibit:
    ns = (3, 4, 5, 6)
    ds = _geom(0.01, 1.0, 41)
    series: dict[str, Callable[[float], float]] = {}
    for n in ns:
        series[f"cv_cka_n{n}"] = lambda d, n=n: total_energy(_mp("cv_cka", n, d), cat)
    for n in ns:
        series[f"ncv_qkd_n{n}"] = lambda d, n=n: total_energy(_mp("ncv_qkd", n, d), cat)
    return _curves_exhibit("fig_cka_cv", ds, series, _energy_axes("CV conference keys", x_log=True))


def fig_timebin(cat: Catalog) -> Exhibit:
    xs = _lin(1, 150, 150)
    series: dict[str, Callable[[float], float]] = {}
    for fam in ("bb84", "e91", "mdi"):
        for enc in ("polarization", "time_bin"):
            series[f"{fam}_{enc}"] = lambda d, f=fam, e=enc: total_energy(dv_spec(f, encoding=e, distance_km=d), cat)
    return _curves_exhibit("fig_timebin", xs, series, _energy_axes("encodings"))


def fig_measured(cat: Catalog) -> Exhibit:
    xs = _lin(1, 150, 150)
    meas = cat.with_mode("measured_preferred")
    sheet = cat.with_mode("datasheet")
    series: dict[str, Callable[[float], float]] = {}
    for fam in ("bb84", "e91", "mdi"):
        series[f"{fam}_datasheet"] = lambda d, f=fam: total_energy(dv_spec(f, distance_km=d), sheet)
        series[f"{fam}_measured"] = lambda d, f=fam: total_energy(dv_spec(f, distance_km=d), meas)
    return _curves_exhibit("fig_measured", xs, series, _energy_axes("datasheet versus measured"))


def fig_breakdown(cat: Catalog) -> Exhibit:
    setups = {
        "bb84": dv_spec("bb84", distance_km=40.0),
        "e91": dv_spec("e91", distance_km=40.0),
        "mdi": dv_spec("mdi", distance_km=40.0),
        "cv_het_2p": cv_spec(distance_km=40.0),
    }
    rows = []
    groups = []
    for name, spec in setups.items():
        s = build(spec, cat)
        shares = power_breakdown(s, cat)
        total = setup_power(s, cat)
        groups.append((name, shares))
        rows += [(name, cid, share * total, share) for cid, share in shares]
    svg = emit_bar_svg(groups, Axes(title="power distribution"))
    return Exhibit("fig_breakdown", ("protocol", "component", "watts", "share"), rows, svg)


EXHIBITS: dict[str, Callable[[Catalog], Exhibit]] = {
    "table4": table4,
    "fig_ee": fig_ee,
    "fig_dv_1gbit": fig_dv_1gbit,
    "fig_bb84_qber": fig_bb84_qber,
    "fig_detectors": fig_detectors,
    "fig_wavelengths": fig_wavelengths,
    "fig_cv_gauss": fig_cv_gauss,
    "fig_cv_psk": fig_cv_psk,
    "fig_cv_vs_dv": fig_cv_vs_dv,
    "fig_alltoall": fig_alltoall,
    "fig_cka_dv": fig_cka_dv,
    "fig_cka_cv": fig_cka_cv,
    "fig_timebin": fig_timebin,
    "fig_measured": fig_measured,
    "fig_breakdown": fig_breakdown,
}


def reproduce(name: str, out_dir: str | Path, cat: Catalog | None = None) -> list[Path]:
    if name not in EXHIBITS:
        raise ValidationError(f"unknown exhibit {name!r}; choose from {sorted(EXHIBITS)}")
    return EXHIBITS[name](cat or load_catalog()).write(out_dir)


def table4_passes(cat: Catalog | None = None) -> bool:
    return all(row[-1] == "PASS" for row in table4(cat or load_catalog()).rows)


__all__ = ["EXHIBITS", "Exhibit", "reproduce", "table4_passes", "curve", "total_energy", "dv_spec", "cv_spec"]
