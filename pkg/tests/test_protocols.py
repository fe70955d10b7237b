import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnet_energy import dv
from qnet_energy.energy import energy_for_target, setup_power, setup_startup_energy
from qnet_energy.errors import ValidationError
from qnet_energy.protocols import (
    DV_BIPARTITE,
    NetworkTopology,
    ProtocolSpec,
    alltoall_counts,
    build,
    build_multiparty,
    ghz_counts,
    spec_from_mapping,
)

NS = range(3, 13)


def P(cat, cid):
    return cat.power(cid)


def cv_spec(variant="het_2p", **kw):
    return ProtocolSpec("cv_gaussian", encoding="quadrature", detector="bhd", detection_variant=variant, **kw)


def multi(family, n, **kw):
    if family in ("cv_cka", "ncv_qkd"):
        kw.setdefault("encoding", "quadrature")
        kw.setdefault("detector", "bhd")
    return ProtocolSpec(family, n_parties=n, distance_km=10.0, **kw)


# --- bipartite DV ---------------------------------------------------------------------


def test_bb84_table4_power(cat):
    assert setup_power(build(ProtocolSpec("bb84", preset="table4_repro"), cat), cat) == 3916.0


@pytest.mark.parametrize("family", DV_BIPARTITE)
def test_time_bin_costs_more(cat, family):
    pol = setup_power(build(ProtocolSpec(family), cat), cat)
    tb = setup_power(build(ProtocolSpec(family, encoding="time_bin"), cat), cat)
    assert tb > pol


def test_si_apd_780(cat):
    s = build(ProtocolSpec("bb84", wavelength_nm=780, detector="si_apd", distance_km=1.0), cat)
    assert s.detection_components == (("si_apd_780", 1),)
    assert P(cat, "si_apd_780") == 15.0
    assert cat.detection_efficiency("si_apd_780") == 0.75
    link = dv.DvLinkParams(mu=0.01, p_coupling=dv.preset("baseline_table2").p_coupling, p_det=0.75,
                           channel=dv.FiberChannel(1.0, cat.fiber_loss(780), 780.0),
                           r_source_Hz=dv.preset("baseline_table2").r_source_Hz)
    assert s.rate().raw_per_use == pytest.approx(dv.bb84_raw_rate(link), rel=1e-15)


def test_e91_powers(cat):
    assert setup_power(build(ProtocolSpec("e91", preset="table4_repro"), cat), cat) == 8277.0
    assert setup_power(build(ProtocolSpec("e91"), cat), cat) == 8308.0


def test_mdi_powers(cat):
    assert setup_power(build(ProtocolSpec("mdi", preset="table4_repro"), cat), cat) == 4070.0
    pol = setup_power(build(ProtocolSpec("mdi"), cat), cat)
    tb = setup_power(build(ProtocolSpec("mdi", encoding="time_bin"), cat), cat)
    assert tb - pol == pytest.approx(2 * P(cat, "interferometry"))
    assert tb - pol == 400.0


@pytest.mark.parametrize(
    "family,kbps",
    [("bb84", 1092.734), ("e91", 934.287), ("mdi", 46.714)],
)
def test_table4_rates(cat, family, kbps):
    r = build(ProtocolSpec(family, preset="table4_repro", distance_km=40.0), cat).rate()
    assert r.secret_bps / 1e3 == pytest.approx(kbps, abs=1e-3)


# --- bipartite CV ---------------------------------------------------------------------


def test_cv_polarization_variants(cat):
    het2 = setup_power(build(cv_spec("het_2p"), cat), cat)
    het1 = setup_power(build(cv_spec("het_1p"), cat), cat)
    assert het2 - het1 == pytest.approx(2 * P(cat, "balanced_detector"))
    assert het2 - het1 == pytest.approx(6.0)


@pytest.mark.parametrize("variant,bhd", [("hom_1p", 1), ("het_1p", 2), ("hom_2p", 2), ("het_2p", 4)])
def test_cv_bhd_count(cat, variant, bhd):
    s = build(cv_spec(variant), cat)
    assert s.count("balanced_detector") == bhd
    assert s.count("phase_modulator") == (1 if variant.startswith("hom") else 0)


@pytest.mark.parametrize("variant", ["hom_1p", "het_1p", "hom_2p", "het_2p"])
def test_cv_startup_is_small(cat, variant):
    s = build(cv_spec(variant), cat)
    assert all(cat.startup_energy(cid) <= 15e3 for _, cid, _ in s.entries())


def test_cv_double_polarization_doubles_rate(cat):
    one = build(cv_spec("het_1p", distance_km=20.0), cat).rate()
    two = build(cv_spec("het_2p", distance_km=20.0), cat).rate()
    assert two.secret_bps == pytest.approx(2 * one.secret_bps, rel=1e-12)
    assert two.secret_per_use == one.secret_per_use


def test_cv_dsp_override(cat):
    assert build(cv_spec(), cat).dsp is None
    s = build(cv_spec(overrides={"tau_dsp": 0.018}), cat)
    assert s.dsp.enabled and s.dsp.tau_dsp_J_per_symbol == 0.018


def test_cv_fixed_modulation(cat):
    fixed = build(cv_spec(distance_km=10.0, overrides={"v_a": 4.0}), cat).rate()
    best = build(cv_spec(distance_km=10.0), cat).rate()
    assert 0 < fixed.secret_per_use <= best.secret_per_use


# --- multipartite counts ------------------------------------------------------------


@pytest.mark.parametrize("n", NS)
def test_ghz_counts(cat, n):
    assert ghz_counts(n) == (math.ceil(n / 2), (n - 1) // 2, n)
    s = build(multi("ghz_cka", n), cat)
    assert s.count("mira_hp_f_780") == math.ceil(n / 2)
    assert s.count("oven") == math.ceil(n / 2)
    assert s.count("snspd_1550") == n
    # source waveplates plus one waveplate station per fusion
    assert s.count("waveplates") == math.ceil(n / 2) + (n - 1) // 2
    assert s.count("computer") == n


@pytest.mark.parametrize("n", NS)
def test_alltoall_counts(cat, n):
    assert alltoall_counts(n) == (n * (n - 1) // 2, n * (n - 1), n)
    s = build(multi("alltoall_pairs", n), cat)
    assert s.count("oven") == n * (n - 1) // 2
    assert s.manipulation_components == (("waveplates", n * (n - 1)),)
    assert s.count("snspd_1550") == n


def test_ghz_n4_example(cat):
    s = build(multi("ghz_cka", 4), cat)
    assert s.count("oven") == 2
    assert s.manipulation_components == (("waveplates", 1),)
    assert s.count("snspd_1550") == 4


def test_alltoall_n4_example(cat):
    s = build(multi("alltoall_pairs", 4), cat)
    assert (s.count("oven"), s.count("snspd_1550")) == (6, 4)
    assert s.manipulation_components == (("waveplates", 12),)


def test_cv_cka_n5_example(cat):
    s = build(multi("cv_cka", 5), cat)
    assert dict(s.detection_components)["balanced_detector"] == 5
    assert dict(s.detection_components)["adc"] == 2


# --- closed-form power sums ----------------------------------------------------------


def _spdc(cat):
    return P(cat, "mira_hp_f_780") + P(cat, "oven") + P(cat, "waveplates")


def _weak(cat):
    return P(cat, "koheras_basik_x15_1550") + P(cat, "modulator_am")


def _cv_src(cat):
    return sum(P(cat, c) for c in ("koheras_basik_x15_1550", "modulator_iq", "dac", "powermeter"))


def _hom2(cat):
    return sum(P(cat, c) for c in ("adc", "koheras_basik_x15_1550", "polarization_controller", "phase_modulator")) + 2 * P(
        cat, "balanced_detector"
    )


CLOSED_FORMS = {
    "ghz_cka": lambda c, n: math.ceil(n / 2) * _spdc(c) + (n - 1) // 2 * P(c, "waveplates")
    + n * P(c, "snspd_1550") + n * P(c, "computer"),
    "alltoall_ghz": lambda c, n: math.ceil(n / 2) * _spdc(c) + (n - 1) // 2 * P(c, "waveplates")
    + n * P(c, "snspd_1550") + n * P(c, "computer"),
    "alltoall_pairs": lambda c, n: n * (n - 1) / 2 * _spdc(c) + n * (n - 1) * P(c, "waveplates")
    + n * P(c, "snspd_1550") + n * P(c, "computer"),
    "bell_cka": lambda c, n: (n - 1) * (_spdc(c) + 2 * P(c, "waveplates") + 2 * P(c, "snspd_1550") + 2 * P(c, "time_tagger"))
    + n * P(c, "computer"),
    "bb84_cka": lambda c, n: (n - 1) * (_weak(c) + 2 * P(c, "waveplates") + P(c, "snspd_1550") + P(c, "time_tagger"))
    + n * P(c, "computer"),
    "ncv_qkd": lambda c, n: (n - 1) * (_cv_src(c) + _hom2(c)) + n * P(c, "computer"),
    "cv_cka": lambda c, n: n * (P(c, "koheras_basik_x15_1550") + P(c, "modulator_iq") + P(c, "dac"))
    + n * P(c, "balanced_detector") + math.ceil(n / 4) * P(c, "adc") + n * P(c, "koheras_basik_x15_1550")
    + (n + 1) * P(c, "computer"),
}


@pytest.mark.parametrize("family", sorted(CLOSED_FORMS))
@pytest.mark.parametrize("n", NS)
def test_power_closed_form(cat, family, n):
    s = build(multi(family, n), cat)
    assert setup_power(s, cat) == pytest.approx(CLOSED_FORMS[family](cat, n), rel=1e-12)


def test_cv_cka_iq_flag(cat):
    base = setup_power(build(multi("cv_cka", 4), cat), cat)
    extra = setup_power(build(multi("cv_cka", 4, overrides={"include_iq_modulator": True}), cat), cat)
    assert extra - base == pytest.approx(4 * P(cat, "modulator_iq"))


def test_parallel_link_runtime_independent_of_n(cat):
    rates = {n: build(multi("bell_cka", n), cat).rate().secret_bps for n in (3, 6, 9)}
    assert len(set(rates.values())) == 1
    powers = [setup_power(build(multi("bb84_cka", n), cat), cat) for n in (3, 4, 5, 6)]
    steps = {round(b - a, 9) for a, b in zip(powers, powers[1:])}
    assert len(steps) == 1


def test_ghz_energy_grows_exponentially(cat):
    def report(family, n):
        return energy_for_target(build(multi(family, n, preset="table4_repro"), cat), cat, 1e9)

    pr = dv.preset("table4_repro")
    t = 10 ** (-0.018 * 10.0)
    # each extra pair of parties costs one more mu and two more lossy detected photons
    floor = 1.0 / (pr.mu * (pr.p_coupling * cat.detection_efficiency("snspd_1550") * t) ** 2)
    for n in range(3, 11):
        lo, hi = report("alltoall_ghz", n), report("alltoall_ghz", n + 2)
        assert hi.running_J / lo.running_J >= floor * (1 - 1e-12)
    pairs = [report("alltoall_pairs", n).total_J for n in NS]
    assert all(e / pairs[0] <= (n / 3) ** 2 for n, e in zip(NS, pairs))


def test_fusion_probability_mode(cat):
    printed = build(multi("ghz_cka", 5), cat).rate().raw_per_use
    fused = build(multi("ghz_cka", 5, overrides={"fusion_mode": "with_fusion_probability"}), cat).rate().raw_per_use
    assert fused == pytest.approx(printed * 0.5**2, rel=1e-12)


# --- validation ----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(family="qkd"),
        dict(family="bb84", encoding="quadrature"),
        dict(family="bb84", detector="bhd"),
        dict(family="bb84", detector="si_apd"),
        dict(family="bb84", wavelength_nm=850),
        dict(family="bb84", preset="fancy"),
        dict(family="bb84", distance_km=-1.0),
        dict(family="bb84", overrides={"colour": 1}),
        dict(family="bb84", detection_variant="het_2p"),
        dict(family="cv_gaussian", encoding="quadrature", detector="bhd"),
        dict(family="cv_gaussian", detection_variant="het_3p", encoding="quadrature", detector="bhd"),
        dict(family="ghz_cka"),
        dict(family="ghz_cka", n_parties=2),
        dict(family="ncv_qkd", n_parties=1, encoding="quadrature", detector="bhd"),
    ],
)
def test_invalid_specs(kw):
    with pytest.raises(ValidationError):
        ProtocolSpec(**kw)


def test_topology_validation():
    with pytest.raises(ValidationError):
        NetworkTopology(1, 1.0, 1.0)
    with pytest.raises(ValidationError):
        NetworkTopology(3, -1.0, 1.0)


def test_explicit_topology(cat):
    spec = multi("alltoall_pairs", 4)
    near = build_multiparty(spec, NetworkTopology(4, 10.0, 1.0), cat).rate()
    far = build_multiparty(spec, NetworkTopology(4, 10.0, 50.0), cat).rate()
    assert near.raw_per_use > far.raw_per_use


def test_spec_from_mapping_defaults():
    spec = spec_from_mapping({"family": "cv_psk", "detection_variant": "hom_1p", "distance_km": 5})
    assert (spec.encoding, spec.detector, spec.distance_km) == ("quadrature", "bhd", 5.0)
    with pytest.raises(ValidationError):
        spec_from_mapping({"family": "bb84", "bogus": 1})
    with pytest.raises(ValidationError):
        spec_from_mapping({})


def test_missing_laser_at_wavelength(cat):
    with pytest.raises(ValidationError):
        build(ProtocolSpec("e91", wavelength_nm=780, detector="si_apd"), cat)


@given(d=st.floats(0, 300))
def test_spec_overrides_are_frozen(d):
    spec = ProtocolSpec("bb84", distance_km=d, overrides={"mu": 0.2})
    with pytest.raises(TypeError):
        spec.overrides["mu"] = 0.3
    assert spec.at_distance(d + 1).overrides["mu"] == 0.2


def test_startup_sums(cat):
    s = build(multi("bell_cka", 4), cat)
    expected = math.fsum(m * cat.startup_energy(cid) for _, cid, m in s.entries())
    assert setup_startup_energy(s, cat) == expected
