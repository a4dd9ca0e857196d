import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_flow import (
    Ball,
    ConstantPsi,
    DomainError,
    DosTable,
    ModelSpec,
    NotInGap,
    QuadraticPsi,
    RegionSplit,
    bloch_dos_table,
    convergence_study,
    flow_count,
    region_split_counts,
    riemann_sandwich,
    theoretical_integral,
)
from spectral_flow.asymptotics import admissible_eps2, direction_rule, eps2_bound, trend_verdict
from spectral_flow.domain import unit_ball_volume

GAP = (2.0, 5.0)
MID = 3.5


@pytest.fixture(scope="module")
def table():
    return bloch_dos_table(ModelSpec(1, (2,), (0.0, 3.0)), n_points=1201)


def test_eps2_bound_value(gap_model):
    assert eps2_bound(gap_model, MID, GAP) == pytest.approx(math.sqrt(4 / 3))
    assert admissible_eps2(gap_model, MID, GAP) == pytest.approx(1.25 * math.sqrt(4 / 3))


def test_direction_rules_integrate_constants():
    for d, area in ((1, 2.0), (2, 2 * math.pi), (3, 4 * math.pi)):
        _, w = direction_rule(d)
        assert np.sum(w) == pytest.approx(area)


def test_zero_psi_integral(table):
    m = ModelSpec(1, (2,), (0.0, 3.0), ConstantPsi(0.0), 2.0)
    assert theoretical_integral(table, m, MID, GAP).value == 0.0


@pytest.mark.parametrize("c,p,h", [(1.0, 2.0, 0.5), (2.0, 1.0, 0.25), (0.7, 3.0, 0.4)])
def test_single_step_closed_form(c, p, h):
    m = ModelSpec(1, (2,), (0.0, 3.0), ConstantPsi(c), p)
    lam, lam_plus = 3.0, 5.0
    eta = 1e-10
    grid = np.array([-5.0, lam_plus, lam_plus + eta, 20.0])
    rho = np.array([0.2, 0.2, 0.2 + h, 0.2 + h])
    val = theoretical_integral(DosTable(grid, rho, "synthetic", "x"), m, lam, GAP).value
    assert val == pytest.approx(2 * h * (c / (lam_plus - lam)) ** (1 / p), rel=1e-6)


def test_integral_period2(table, gap_model):
    res = theoretical_integral(table, gap_model, MID, GAP)
    assert res.value == pytest.approx(0.70993, abs=5e-5)
    fine = theoretical_integral(bloch_dos_table(gap_model, n_points=2401), gap_model, MID, GAP)
    assert abs(fine.value - res.value) <= res.quadrature_error


def test_integral_errors(table, gap_model):
    with pytest.raises(NotInGap):
        theoretical_integral(table, gap_model, 1.5, GAP)
    short = DosTable(np.array([3.0, 4.0]), np.array([0.5, 0.5]), "x", "h")
    with pytest.raises(ValueError, match="covers"):
        theoretical_integral(short, gap_model, MID, GAP)


def test_flow_count_zero_alpha(gap_model):
    assert flow_count(gap_model, MID, 0.0, domain_radius=10.0) == 0


def test_flow_count_eventually_crosses(gap_model):
    from spectral_flow import assemble, assemble_perturbed

    dom = Ball(20.0, 1)
    base = np.linalg.eigvalsh(assemble(dom, gap_model).to_dense())
    counts = []
    for alpha in (0.01, 5.0, 50.0):
        dense = np.linalg.eigvalsh(assemble_perturbed(dom, gap_model, alpha).to_dense())
        oracle = int(np.sum(dense < MID) - np.sum(base < MID))
        counts.append(flow_count(gap_model, MID, alpha, domain=dom))
        assert counts[-1] == oracle
    assert counts[0] == 0 and counts[-1] >= 1


@settings(max_examples=20, deadline=None)
@given(
    a=st.floats(-1.0, 1.0),
    width=st.floats(2.0, 4.0),
    psi=st.floats(0.2, 3.0),
    alphas=st.lists(st.floats(0.0, 500.0), min_size=3, max_size=6),
)
def test_flow_count_monotone_in_alpha(a, width, psi, alphas):
    m = ModelSpec(1, (2,), (a, a + width), ConstantPsi(psi), 2.0)
    from spectral_flow import find_gap

    lo, hi = find_gap(m)
    lam = 0.5 * (lo + hi) + 1e-3 * width
    counts = [flow_count(m, lam, x, domain_radius=40.0) for x in sorted(alphas)]
    assert counts == sorted(counts)


def test_inadmissible_eps2(gap_model):
    with pytest.raises(DomainError, match="inadmissible"):
        region_split_counts(gap_model, MID, 100.0, RegionSplit(0.2, 1.0, 100.0, 2.0), gap=GAP)


@pytest.mark.parametrize("alpha", [1e2, 1e3, 1e4])
def test_splitting_and_n1_bound(gap_model, alpha):
    eps1, eps2 = 0.2, admissible_eps2(gap_model, MID, GAP)
    c = region_split_counts(gap_model, MID, alpha, RegionSplit(eps1, eps2, alpha, 2.0), gap=GAP)
    assert abs(c.N - c.N1 - c.N2) <= 2 * c.links_r
    assert c.links_r <= 8
    assert c.N3_check == 0
    assert c.N1 <= 2 * (2 * eps1 * alpha**0.5 + 1)


def test_radius_rule_doubling_is_stable(gap_model, table):
    eps2 = admissible_eps2(gap_model, MID, GAP)
    a = convergence_study(gap_model, MID, [100.0, 1000.0], 0.2, eps2, table, radius_rule=1.5, gap=GAP)
    b = convergence_study(gap_model, MID, [100.0, 1000.0], 0.2, eps2, table, radius_rule=3.0, gap=GAP)
    assert [r.N for r in a.records] == [r.N for r in b.records]


def test_zero_psi_study(table):
    m = ModelSpec(1, (2,), (0.0, 3.0), ConstantPsi(0.0), 2.0)
    rep = convergence_study(m, MID, [10.0, 100.0], 0.2, 1.0, table, gap=GAP)
    assert [r.N for r in rep.records] == [0, 0]
    assert all(r.ratio is None for r in rep.records)
    assert rep.verdict["integral_zero"] is True
    assert rep.verdict["trend_toward_1"] is None


def test_study_report_round_trip(gap_model, table):
    eps2 = admissible_eps2(gap_model, MID, GAP)
    rep = convergence_study(gap_model, MID, [100.0, 400.0], 0.2, eps2, table, gap=GAP)
    from spectral_flow import ExperimentReport

    back = ExperimentReport.from_dict(rep.to_dict())
    assert back.to_dict() == rep.to_dict()
    assert "runtime" not in rep.to_dict()["records"][0]
    assert rep.to_csv_text().splitlines()[0] == "alpha,N,N1,N2,ratio,links_r,lambda_shift"


def test_study_rejects_unsorted_grid(gap_model, table):
    with pytest.raises(ValueError):
        convergence_study(gap_model, MID, [1000.0, 100.0], 0.2, 1.5, table, gap=GAP)


def test_threads_do_not_change_results(gap_model, table, monkeypatch):
    eps2 = admissible_eps2(gap_model, MID, GAP)
    serial = convergence_study(gap_model, MID, [100.0, 300.0, 900.0], 0.2, eps2, table, gap=GAP, workers=1)
    monkeypatch.setenv("SPECTRAL_FLOW_THREADS", "3")
    threaded = convergence_study(gap_model, MID, [100.0, 300.0, 900.0], 0.2, eps2, table, gap=GAP)
    assert serial.to_dict() == threaded.to_dict()


def test_trend_verdict():
    assert trend_verdict([1.3, 0.9, 1.05])["trend_toward_1"] is True
    assert trend_verdict([1.05, 1.3])["trend_toward_1"] is False


def test_sandwich_validation(gap_model, table):
    with pytest.raises(ValueError):
        riemann_sandwich(gap_model, MID, 1e4, 0.0, 0.2, 1.4, table, n2=0)


def test_sandwich_refinement_and_bracket(gap_model, table):
    eps1, eps2 = 0.2, admissible_eps2(gap_model, MID, GAP)
    restricted = theoretical_integral(table, gap_model, MID, GAP, radial_range=(eps1, eps2)).value
    gaps = []
    for delta in (0.5, 0.25, 0.125):
        s = riemann_sandwich(gap_model, MID, 1e4, delta, eps1, eps2, table, n2=0)
        assert s.lower_sum <= restricted <= s.upper_sum
        gaps.append(s.upper_sum - s.lower_sum)
    assert gaps[2] < gaps[1] < gaps[0]


def test_sandwich_single_shell(gap_model, table):
    s = riemann_sandwich(gap_model, MID, 1e4, 5.0, 0.2, 1.5, table, n2=0)
    assert s.lower_sum <= s.upper_sum
    assert s.n_cells == 2


def test_sandwich_d2_anisotropic():
    m = ModelSpec(2, (2, 2), (0.0, 10.0, 10.0, 0.0), QuadraticPsi(1.0, ((0.5, 0.0), (0.0, 0.0))), 2.0)
    from spectral_flow import find_gap

    gap = find_gap(m, 32)
    lam = 0.5 * (gap[0] + gap[1])
    tab = bloch_dos_table(m, n_points=301, n_k=32)
    eps2 = admissible_eps2(m, lam, gap)
    s = riemann_sandwich(m, lam, 100.0, 0.25, 0.3, eps2, tab, n2=0)
    restricted = theoretical_integral(tab, m, lam, gap, radial_range=(0.3, eps2)).value
    assert s.lower_sum <= restricted + 1e-3 and restricted <= s.upper_sum + 1e-3


def test_n1_envelope_is_ball_volume(gap_model, table):
    eps2 = admissible_eps2(gap_model, MID, GAP)
    r = convergence_study(gap_model, MID, [400.0], 0.2, eps2, table, gap=GAP).records[0]
    assert r.n1_bound == pytest.approx(2 * unit_ball_volume(1) * (0.2 * 20 + 1))
