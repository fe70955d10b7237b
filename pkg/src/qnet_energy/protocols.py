"""Protocol builders: bind catalog hardware and a rate model into a ProtocolSetup."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from types import MappingProxyType
from typing import Any, Callable, Mapping

from . import cv, dv
from .catalog import Catalog, load_catalog
from .channel import FiberChannel
from .energy import ClassicalCostParams, ProtocolSetup
from .errors import ValidationError

FAMILIES = (
    "bb84",
    "e91",
    "mdi",
    "cv_gaussian",
    "cv_psk",
    "ghz_cka",
    "bell_cka",
    "bb84_cka",
    "cv_cka",
    "ncv_qkd",
    "alltoall_pairs",
    "alltoall_ghz",
)
DV_BIPARTITE = ("bb84", "e91", "mdi")
CV_BIPARTITE = ("cv_gaussian", "cv_psk")
MULTIPARTY = ("ghz_cka", "bell_cka", "bb84_cka", "cv_cka", "ncv_qkd", "alltoall_pairs", "alltoall_ghz")
ENCODINGS = ("polarization", "time_bin", "quadrature")
DETECTORS = ("snspd", "ingaas_apd", "si_apd", "bhd")
VARIANTS = ("hom_1p", "hom_2p", "het_1p", "het_2p")
PRESET_NAMES = ("baseline_table2", "table4_repro", "custom")

# (detector kind, wavelength) -> catalog id
DETECTOR_IDS: dict[tuple[str, int], str] = {
    ("snspd", 1550): "snspd_1550",
    ("snspd", 780): "snspd_780",
    ("ingaas_apd", 1550): "ingaas_apd_1532",
    ("si_apd", 780): "si_apd_780",
    ("si_apd", 532): "si_apd_523",
    ("bhd", 1550): "balanced_detector",
}
WEAK_LASERS = {1550: "koheras_basik_x15_1550", 780: "mira_hp_f_780", 532: "verdi_c_532"}
# pump for pairs emitted at the key wavelength
SPDC_PUMPS = {1550: "mira_hp_f_780"}
CV_LASER = "koheras_basik_x15_1550"

OVERRIDE_KEYS = frozenset(
    {
        "mu",
        "qber",
        "p_coupling",
        "p_bsm",
        "p_det",
        "r_source_Hz",
        "laser_id",
        "detector_id",
        "fusion_mode",
        "p_fusion",
        "v_a",
        "v_a_bracket",
        "excess_noise",
        "v_el",
        "beta",
        "psk_m",
        "tau_dsp",
        "n_chan",
        "include_iq_modulator",
        "include_source_waveplates",
        "include_mdi_classical",
        "star_distance_km",
        "pairwise_distance_km",
    }
)


@dataclass(frozen=True)
class ProtocolSpec:
    family: str
    encoding: str = "polarization"
    wavelength_nm: int = 1550
    detector: str = "snspd"
    detection_variant: str | None = None
    n_parties: int | None = None
    distance_km: float = 0.0
    preset: str = "baseline_table2"
    overrides: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "overrides", MappingProxyType(dict(self.overrides)))
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown protocol family {self.family!r}")
        if self.encoding not in ENCODINGS:
            raise ValidationError(f"unknown encoding {self.encoding!r}")
        if self.detector not in DETECTORS:
            raise ValidationError(f"unknown detector kind {self.detector!r}")
        if self.preset not in PRESET_NAMES:
            raise ValidationError(f"unknown preset {self.preset!r}")
        if not self.distance_km >= 0:
            raise ValidationError("distance_km must be non-negative")
        unknown = set(self.overrides) - OVERRIDE_KEYS
        if unknown:
            raise ValidationError(f"unknown override keys {sorted(unknown)}")
        is_cv = self.family in CV_BIPARTITE or self.family in ("cv_cka", "ncv_qkd")
        if (self.detection_variant is not None) != (self.family in CV_BIPARTITE):
            raise ValidationError("detection_variant is required for, and only for, bipartite CV families")
        if self.detection_variant is not None and self.detection_variant not in VARIANTS:
            raise ValidationError(f"unknown detection variant {self.detection_variant!r}")
        if is_cv:
            if self.encoding != "quadrature" or self.detector != "bhd":
                raise ValidationError("CV families need quadrature encoding and bhd detection")
        elif self.encoding == "quadrature" or self.detector == "bhd":
            raise ValidationError("DV families need polarization or time_bin encoding and a photon counter")
        if "detector_id" not in self.overrides and (self.detector, int(self.wavelength_nm)) not in DETECTOR_IDS:
            raise ValidationError(f"detector {self.detector!r} is not available at {self.wavelength_nm} nm")
        if self.family in MULTIPARTY:
            if self.n_parties is None:
                raise ValidationError(f"{self.family} needs n_parties")
            low = 2 if self.family in ("ncv_qkd", "cv_cka") else 3
            if int(self.n_parties) != self.n_parties or self.n_parties < low:
                raise ValidationError(f"{self.family} needs an integer n_parties >= {low}")

    def opt(self, key: str, default: Any = None) -> Any:
        return self.overrides.get(key, default)

    def at_distance(self, distance_km: float) -> ProtocolSpec:
        return replace(self, distance_km=distance_km)


@dataclass(frozen=True)
class NetworkTopology:
    n: int
    star_distance_km: float
    pairwise_distance_km: float

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValidationError("a network needs at least 2 parties")
        if not (self.star_distance_km >= 0 and self.pairwise_distance_km >= 0):
            raise ValidationError("distances must be non-negative")

    @classmethod
    def from_spec(cls, spec: ProtocolSpec) -> NetworkTopology:
        return cls(
            n=int(spec.n_parties or 2),
            star_distance_km=float(spec.opt("star_distance_km", spec.distance_km)),
            pairwise_distance_km=float(spec.opt("pairwise_distance_km", spec.distance_km)),
        )


# --- shared helpers ------------------------------------------------------------


def _catalog(cat: Catalog | None) -> Catalog:
    return load_catalog() if cat is None else cat


def _dv_preset(spec: ProtocolSpec) -> dv.DvPreset:
    name = "baseline_table2" if spec.preset == "custom" else spec.preset
    return dv.preset(name)


def detector_id(spec: ProtocolSpec) -> str:
    return spec.opt("detector_id") or DETECTOR_IDS[(spec.detector, int(spec.wavelength_nm))]


def _lookup(table: Mapping[int, str], spec: ProtocolSpec, what: str) -> str:
    if spec.opt("laser_id"):
        return str(spec.opt("laser_id"))
    try:
        return table[int(spec.wavelength_nm)]
    except KeyError:
        raise ValidationError(f"no default {what} laser at {spec.wavelength_nm} nm; set laser_id") from None


def _dv_link(spec: ProtocolSpec, cat: Catalog, distance_km: float) -> tuple[dv.DvLinkParams, dv.DvNoise]:
    pr = _dv_preset(spec)
    p_det = float(spec.opt("p_det", cat.detection_efficiency(detector_id(spec))))
    loss = cat.fiber_loss(spec.wavelength_nm)
    link = dv.DvLinkParams(
        mu=float(spec.opt("mu", pr.mu)),
        p_coupling=float(spec.opt("p_coupling", pr.p_coupling)),
        p_det=p_det,
        channel=FiberChannel(distance_km, loss, float(spec.wavelength_nm)),
        r_source_Hz=float(spec.opt("r_source_Hz", pr.r_source_Hz)),
        p_bsm=float(spec.opt("p_bsm", pr.p_bsm)),
    )
    return link, dv.DvNoise(float(spec.opt("qber", pr.qber)))


def _weak_source(spec: ProtocolSpec) -> list[tuple[str, int]]:
    items = [(_lookup(WEAK_LASERS, spec, "weak-pulse"), 1), ("modulator_am", 1)]
    if spec.encoding == "time_bin":
        items.append(("interferometry", 1))
    return items


def _spdc_source(spec: ProtocolSpec) -> list[tuple[str, int]]:
    items = [(_lookup(SPDC_PUMPS, spec, "SPDC pump"), 1), ("oven", 1)]
    if spec.encoding == "time_bin":
        items.append(("modulator_am", 1))
    elif spec.opt("include_source_waveplates", _dv_preset(spec).include_source_waveplates):
        items.append(("waveplates", 1))
    return items


def _manipulation(spec: ProtocolSpec) -> str:
    return "interferometry" if spec.encoding == "time_bin" else "waveplates"


def _scale(items: list[tuple[str, int]], k: int) -> list[tuple[str, int]]:
    return [(cid, m * k) for cid, m in items]


def _merge(*groups: list[tuple[str, int]]) -> list[tuple[str, int]]:
    acc: dict[str, int] = {}
    for group in groups:
        for cid, m in group:
            if m > 0:
                acc[cid] = acc.get(cid, 0) + m
    return list(acc.items())


# --- bipartite DV --------------------------------------------------------------


def build_bb84(spec: ProtocolSpec, cat: Catalog | None = None) -> ProtocolSetup:
    """Weak-pulse source, a manipulation station per party, one detection station."""
    cat = _catalog(cat)
    link, noise = _dv_link(spec, cat, spec.distance_km)
    return ProtocolSetup(
        name="bb84",
        source_components=_weak_source(spec),
        manipulation_components=[(_manipulation(spec), 2)],
        detection_components=[(detector_id(spec), 1)],
        classical_components=[("computer", 2), ("time_tagger", 1)],
        rate_model=lambda: dv.dv_secret_rate(dv.bb84_raw_rate(link), noise, link.r_source_Hz),
    )


def build_e91(spec: ProtocolSpec, cat: Catalog | None = None) -> ProtocolSetup:
    cat = _catalog(cat)
    link, noise = _dv_link(spec, cat, spec.distance_km)
    return ProtocolSetup(
        name="e91",
        source_components=_spdc_source(spec),
        manipulation_components=[(_manipulation(spec), 2)],
        detection_components=[(detector_id(spec), 2)],
        classical_components=[("computer", 2), ("time_tagger", 2)],
        rate_model=lambda: dv.dv_secret_rate(dv.e91_raw_rate(link), noise, link.r_source_Hz),
    )


def build_mdi(spec: ProtocolSpec, cat: Catalog | None = None) -> ProtocolSetup:
    """Two encoded weak-pulse sources and a relay whose BSM feeds one detection station."""
    cat = _catalog(cat)
    link, noise = _dv_link(spec, cat, spec.distance_km)
    source = [(_lookup(WEAK_LASERS, spec, "weak-pulse"), 2), ("modulator_am", 2), ("waveplates", 2)]
    bsm = [("interferometry", 2)] if spec.encoding == "time_bin" else []
    classical = []
    if spec.opt("include_mdi_classical", _dv_preset(spec).include_mdi_classical):
        # Alice, Bob and the relay each run a computer and a time tagger
        classical = [("computer", 3), ("time_tagger", 3)]
    return ProtocolSetup(
        name="mdi",
        source_components=source,
        manipulation_components=bsm,
        detection_components=[(detector_id(spec), 1)],
        classical_components=classical,
        rate_model=lambda: dv.dv_secret_rate(dv.mdi_raw_rate(link), noise, link.r_source_Hz),
    )


# --- bipartite CV --------------------------------------------------------------

_BHD_COUNT = {"hom_1p": 1, "het_1p": 2, "hom_2p": 2, "het_2p": 4}


def cv_source() -> list[tuple[str, int]]:
    # the modulator bias controller is catalogued with the IQ modulator row
    return [(CV_LASER, 1), ("modulator_iq", 1), ("dac", 1), ("powermeter", 1)]


def cv_detection(variant: str) -> list[tuple[str, int]]:
    items = [
        ("adc", 1),
        (CV_LASER, 1),
        ("balanced_detector", _BHD_COUNT[variant]),
        ("polarization_controller", 1),
    ]
    if variant.startswith("hom"):
        items.append(("phase_modulator", 1))
    return items


def _dsp(spec: ProtocolSpec) -> ClassicalCostParams | None:
    tau = spec.opt("tau_dsp")
    if tau is None:
        return None
    return ClassicalCostParams(tau_dsp_J_per_symbol=float(tau), enabled=float(tau) > 0)


def cv_params(spec: ProtocolSpec, cat: Catalog, distance_km: float, variant: str) -> cv.CvParams:
    loss = cat.fiber_loss(1550)
    polarizations = 2 if variant.endswith("2p") else 1
    return cv.CvParams(
        v_a=float(spec.opt("v_a", 1.0)),
        transmittance=10.0 ** (-distance_km * loss / 10.0),
        excess_noise=float(spec.opt("excess_noise", 0.01)),
        p_det=float(spec.opt("p_det", cat.detection_efficiency("balanced_detector"))),
        v_el=float(spec.opt("v_el", 0.005)),
        beta=float(spec.opt("beta", 0.95)),
        detection="homodyne" if variant.startswith("hom") else "heterodyne",
        # a second polarization doubles the symbols per pulse
        r_source_Hz=float(spec.opt("r_source_Hz", 100e6)) * polarizations,
    )


@lru_cache(maxsize=4096)
def _optimized(kind: str, params: Any, bracket: tuple[float, float] | None) -> dv.RateResult:
    fn = {"gaussian": cv.gaussian_skr, "psk": cv.psk_skr, "cka": cv.cv_cka_skr}[kind]
    return cv.optimized_rate(fn, params, bracket)


def _bracket(spec: ProtocolSpec) -> tuple[float, float] | None:
    b = spec.opt("v_a_bracket")
    return None if b is None else (float(b[0]), float(b[1]))


def cv_rate_model(spec: ProtocolSpec, params: cv.CvParams) -> Callable[[], dv.RateResult]:
    psk = spec.family == "cv_psk"
    full: Any = cv.PskParams(params, int(spec.opt("psk_m", 4))) if psk else params
    kind = "psk" if psk else "gaussian"
    fn = cv.psk_skr if psk else cv.gaussian_skr
    if "v_a" in spec.overrides:
        return lambda: fn(full)
    # the optimum does not depend on the symbol rate, so variants share one search
    unit: Any = cv.PskParams(replace(params, r_source_Hz=1.0), full.m) if psk else replace(params, r_source_Hz=1.0)

    def rate() -> dv.RateResult:
        r = _optimized(kind, unit, _bracket(spec))
        return dv.RateResult(r.raw_per_use, r.secret_per_use, r.secret_per_use * params.r_source_Hz)

    return rate


def build_cv_qkd(spec: ProtocolSpec, cat: Catalog | None = None) -> ProtocolSetup:
    cat = _catalog(cat)
    variant = spec.detection_variant or "hom_2p"
    params = cv_params(spec, cat, spec.distance_km, variant)
    return ProtocolSetup(
        name=f"{spec.family}_{variant}",
        source_components=cv_source(),
        detection_components=cv_detection(variant),
        classical_components=[("computer", 2)],
        rate_model=cv_rate_model(spec, params),
        dsp=_dsp(spec),
    )


# --- multipartite ----------------------------------------------------------------


def ghz_counts(n: int) -> tuple[int, int, int]:
    """(pair sources, fusion stations, detectors) for an n-qubit GHZ state."""
    return math.ceil(n / 2), (n - 1) // 2, n


def alltoall_counts(n: int) -> tuple[int, int, int]:
    """(pair sources, manipulation stations, detectors) for pairwise all-to-all entanglement."""
    return n * (n - 1) // 2, n * (n - 1), n


def _ghz_setup(spec: ProtocolSpec, cat: Catalog, topo: NetworkTopology, name: str, d_km: float, secret: bool) -> ProtocolSetup:
    n = topo.n
    n_src, n_fus, n_det = ghz_counts(n)
    link, noise = _dv_link(spec, cat, d_km)
    fusion = "modulator_am" if spec.encoding == "time_bin" else "waveplates"
    mode = str(spec.opt("fusion_mode", "as_printed"))
    p_fusion = float(spec.opt("p_fusion", 0.5))

    def rate() -> dv.RateResult:
        raw = dv.ghz_cka_raw_rate(link, n, d_km, mode, p_fusion)
        if secret:
            return dv.dv_secret_rate(raw, noise, link.r_source_Hz)
        return dv.raw_as_result(raw, link.r_source_Hz)

    return ProtocolSetup(
        name=name,
        source_components=_scale(_spdc_source(spec), n_src),
        manipulation_components=[(fusion, n_fus)] if n_fus else [],
        detection_components=[(detector_id(spec), n_det)],
        # the node computers also do the time tagging
        classical_components=[("computer", n)],
        rate_model=rate,
    )


def build_multiparty(spec: ProtocolSpec, topo: NetworkTopology | None = None, cat: Catalog | None = None) -> ProtocolSetup:
    cat = _catalog(cat)
    topo = topo or NetworkTopology.from_spec(spec)
    n = topo.n
    fam = spec.family
    if fam == "ghz_cka":
        return _ghz_setup(spec, cat, topo, fam, topo.star_distance_km, secret=True)
    if fam == "alltoall_ghz":
        return _ghz_setup(spec, cat, topo, fam, topo.star_distance_km, secret=False)
    if fam == "alltoall_pairs":
        n_src, n_man, n_det = alltoall_counts(n)
        link, _ = _dv_link(spec, cat, topo.pairwise_distance_km)
        return ProtocolSetup(
            name=fam,
            source_components=_scale(_spdc_source(spec), n_src),
            manipulation_components=[(_manipulation(spec), n_man)],
            detection_components=[(detector_id(spec), n_det)],
            classical_components=[("computer", n)],
            # every pair runs in parallel, so the target is met at the single-pair rate
            rate_model=lambda: dv.raw_as_result(dv.e91_raw_rate(link), link.r_source_Hz),
        )
    links = n - 1
    if fam == "bell_cka":
        link, noise = _dv_link(spec, cat, topo.star_distance_km)
        return ProtocolSetup(
            name=fam,
            source_components=_scale(_spdc_source(spec), links),
            manipulation_components=[(_manipulation(spec), 2 * links)],
            detection_components=[(detector_id(spec), 2 * links)],
            classical_components=[("computer", n), ("time_tagger", 2 * links)],
            rate_model=lambda: dv.dv_secret_rate(dv.e91_raw_rate(link), noise, link.r_source_Hz),
        )
    if fam == "bb84_cka":
        link, noise = _dv_link(spec, cat, topo.star_distance_km)
        return ProtocolSetup(
            name=fam,
            source_components=_scale(_weak_source(spec), links),
            manipulation_components=[(_manipulation(spec), 2 * links)],
            detection_components=[(detector_id(spec), links)],
            classical_components=[("computer", n), ("time_tagger", links)],
            rate_model=lambda: dv.dv_secret_rate(dv.bb84_raw_rate(link), noise, link.r_source_Hz),
        )
    if fam == "ncv_qkd":
        variant = "hom_2p"
        params = cv_params(spec, cat, topo.star_distance_km, variant)
        return ProtocolSetup(
            name=fam,
            source_components=_scale(cv_source(), links),
            detection_components=_scale(cv_detection(variant), links),
            classical_components=[("computer", n)],
            rate_model=cv_rate_model(replace(spec, family="cv_gaussian", detection_variant=variant), params),
            dsp=_dsp(spec),
            dsp_streams=links,
        )
    if fam == "cv_cka":
        return _cv_cka_setup(spec, cat, topo)
    raise ValidationError(f"{fam} is not a multipartite family")


def _cv_cka_setup(spec: ProtocolSpec, cat: Catalog, topo: NetworkTopology) -> ProtocolSetup:
    n = topo.n
    n_chan = int(spec.opt("n_chan", 4))
    if n_chan < 1:
        raise ValidationError("n_chan must be positive")
    bob = [(CV_LASER, 1), ("modulator_iq", 1), ("dac", 1)]
    if spec.opt("include_iq_modulator", False):
        bob.append(("modulator_iq", 1))
    t = 10.0 ** (-topo.star_distance_km * cat.fiber_loss(1550) / 10.0)
    params = cv.CkaCvParams(
        m_mod=float(spec.opt("v_a", 2.0)),
        n=n,
        transmittance=t,
        p_det=float(spec.opt("p_det", cat.detection_efficiency("balanced_detector"))),
        v_el=float(spec.opt("v_el", 0.005)),
        beta=float(spec.opt("beta", 0.95)),
        r_source_Hz=float(spec.opt("r_source_Hz", 100e6)),
    )
    if "v_a" in spec.overrides:
        rate = lambda: cv.cv_cka_skr(params)  # noqa: E731
    else:
        rate = lambda: _optimized("cka", params, _bracket(spec))  # noqa: E731
    return ProtocolSetup(
        name="cv_cka",
        source_components=_merge(_scale(bob, n)),
        detection_components=[
            ("balanced_detector", n),
            ("adc", math.ceil(n / n_chan)),
            (CV_LASER, n),
        ],
        # one computer per Bob plus the central post-processing computer
        classical_components=[("computer", n + 1)],
        rate_model=rate,
        dsp=_dsp(spec),
        dsp_streams=n,
    )


_BUILDERS: dict[str, Callable[[ProtocolSpec, Catalog | None], ProtocolSetup]] = {
    "bb84": build_bb84,
    "e91": build_e91,
    "mdi": build_mdi,
    "cv_gaussian": build_cv_qkd,
    "cv_psk": build_cv_qkd,
}


def build(spec: ProtocolSpec, cat: Catalog | None = None) -> ProtocolSetup:
    """Setup for any family; multipartite families read their topology from the spec."""
    if spec.family in _BUILDERS:
        return _BUILDERS[spec.family](spec, cat)
    return build_multiparty(spec, None, cat)


def spec_from_mapping(data: Mapping[str, Any]) -> ProtocolSpec:
    known = {"family", "encoding", "wavelength_nm", "detector", "detection_variant", "n_parties", "distance_km", "preset", "overrides"}
    extra = set(data) - known
    if extra:
        raise ValidationError(f"unknown protocol keys {sorted(extra)}")
    if "family" not in data:
        raise ValidationError("protocol.family is required")
    family = str(data["family"])
    cv_family = family in CV_BIPARTITE or family in ("cv_cka", "ncv_qkd")
    return ProtocolSpec(
        family=family,
        encoding=str(data.get("encoding", "quadrature" if cv_family else "polarization")),
        wavelength_nm=int(data.get("wavelength_nm", 1550)),
        detector=str(data.get("detector", "bhd" if cv_family else "snspd")),
        detection_variant=data.get("detection_variant"),
        n_parties=data.get("n_parties"),
        distance_km=float(data.get("distance_km", 0.0)),
        preset=str(data.get("preset", "baseline_table2")),
        overrides=dict(data.get("overrides", {})),
    )
