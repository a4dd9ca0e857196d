import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_count
from spectral_flow import (
    Ball,
    Box,
    ModelSpec,
    SpectrumCounter,
    ThresholdHitsSpectrum,
    assemble,
    count_below,
    eigenvalues_in_window,
    inertia,
    n_plus,
)
from spectral_flow.eigencount import ldl_inertia, sturm_count


@pytest.fixture
def path3():
    return assemble(Ball(1.5, 1), ModelSpec.free(1))


def test_path_counts(path3):
    # Dirichlet eigenvalues 2 - 2cos(j pi / 4): 2 - sqrt2, 2, 2 + sqrt2
    assert count_below(path3, -1.0) == 0
    assert count_below(path3, 5.0) == 3
    assert count_below(path3, 2.5) == 2


def test_threshold_on_eigenvalue(path3):
    res = inertia(path3, 2.0)
    assert (res.negatives, res.zeros, res.positives) == (1, 1, 1)
    with pytest.raises(ThresholdHitsSpectrum, match="threshold hits spectrum") as exc:
        count_below(path3, 2.0)
    assert exc.value.zeros == 1


@pytest.mark.parametrize("method", ["sturm", "sparse", "ldl", "eig"])
def test_methods_agree_on_path(path3, method):
    assert [SpectrumCounter(path3, method).count_below(x) for x in (0.5, 1.0, 3.0, 3.5)] == [0, 1, 2, 3]


def test_window_closed_form(path3):
    ev = eigenvalues_in_window(path3, 0.0, 4.0)
    assert ev == pytest.approx([2 - math.sqrt(2), 2.0, 2 + math.sqrt(2)], abs=1e-10)


def test_window_below_spectrum_is_empty(path3):
    assert len(eigenvalues_in_window(path3, -5.0, -1.0)) == 0


def test_window_excludes_left_endpoint(path3):
    ev = eigenvalues_in_window(path3, 2.0, 4.0)
    assert ev == pytest.approx([2 + math.sqrt(2)], abs=1e-10)


@pytest.mark.parametrize("window", [(0.1, 2.9), (-3.0, 8.0), (4.5, 7.9)])
def test_window_length_matches_counts(gap_model, window):
    op = assemble(Ball(40.0, 1), gap_model)
    ev = eigenvalues_in_window(op, *window)
    dense = np.linalg.eigvalsh(op.to_dense())
    assert len(ev) == count_below(op, window[1]) - count_below(op, window[0])
    assert ev == pytest.approx(dense[(dense > window[0]) & (dense < window[1])], abs=1e-10)


def test_window_on_lattice_d2():
    op = assemble(Box((12, 11)), ModelSpec.free(2))
    ev = eigenvalues_in_window(op, 1.0, 1.2, method="sparse")
    dense = np.linalg.eigvalsh(op.to_dense())
    assert ev == pytest.approx(dense[(dense > 1.0) & (dense < 1.2)], abs=1e-9)


def test_window_too_wide():
    # a million-plus eigenvalues in one window exceeds the budget
    n = 1_000_002
    diag = np.linspace(0.0, 1.0, n)
    counter = SpectrumCounter(sp.diags(diag).tocsc(), method="sparse")
    counter.raw = lambda lams: np.searchsorted(diag, np.atleast_1d(lams), side="left")
    with pytest.raises(ValueError, match="window too wide"):
        eigenvalues_in_window(counter, -1.0, 2.0)


def test_n_plus_diagonal():
    assert n_plus(np.diag([3.0, 1.0, 0.5]), 0.7) == 2


def test_n_plus_above_norm(rng):
    x = rng.normal(size=(6, 6))
    x = x + x.T
    assert n_plus(x, float(np.abs(x).sum(axis=1).max()) + 1e-3) == 0


def test_n_plus_random_vs_eigensolve(rng):
    for _ in range(20):
        x = rng.normal(size=(8, 8))
        x = 0.5 * (x + x.T)
        assert n_plus(x, 0.1) == int(np.sum(np.linalg.eigvalsh(x) > 0.1))


def test_n_plus_errors():
    with pytest.raises(ValueError):
        n_plus(np.eye(2), 0.0)
    with pytest.raises(ThresholdHitsSpectrum):
        n_plus(np.diag([1.0, 2.0]), 1.0)
    assert n_plus(np.zeros((0, 0)), 1.0) == 0


def test_ldl_inertia_indefinite(rng):
    for _ in range(10):
        q, _ = np.linalg.qr(rng.normal(size=(9, 9)))
        e = np.array([-3, -2, -1e-3, 0.5, 1, 2, 3, 4, 5.0])
        res = ldl_inertia(q @ np.diag(e) @ q.T)
        assert (res.negatives, res.positives) == (3, 6)


def test_sturm_handles_zero_pivot():
    # T - 2 I has an exactly vanishing first pivot
    diag, off = np.array([2.0, 2.0, 2.0]), np.array([-1.0, -1.0])
    assert list(sturm_count(diag, off, [2.0, 2.0 + 1e-12, 2.5])) == [1, 2, 2]


def test_sturm_vectorized_matches_scalar(gap_model):
    op = assemble(Ball(60.0, 1), gap_model)
    lams = np.linspace(-1, 8, 37)
    vec = sturm_count(*op.tridiagonal, lams)
    scalar = [int(sturm_count(*op.tridiagonal, [x])[0]) for x in lams]
    assert list(vec) == scalar


@settings(max_examples=40, deadline=None)
@given(
    d=st.integers(1, 2),
    radius=st.floats(1.0, 7.0),
    seed=st.integers(0, 2**32 - 1),
    lam=st.floats(-2.0, 10.0),
)
def test_counts_match_dense_oracle(d, radius, seed, lam):
    gen = np.random.default_rng(seed)
    op = assemble(Ball(radius, d), ModelSpec.free(d))
    op = op.with_diagonal(op.diagonal + gen.uniform(-2, 2, op.size))
    oracle = dense_count(op.to_dense(), lam)
    methods = ["sparse", "ldl", "eig"] + (["sturm"] if op.tridiagonal is not None else [])
    for method in methods:
        try:
            assert SpectrumCounter(op, method).count_below(lam) == oracle
        except ThresholdHitsSpectrum:
            e = np.linalg.eigvalsh(op.to_dense())
            assert np.min(np.abs(e - lam)) <= 1e-8


def test_large_sparse_path_uses_sparse_route():
    op = assemble(Box((25, 25)), ModelSpec(2, (2, 1), (0.0, 3.0)))
    counter = SpectrumCounter(op)
    assert counter.method == "sparse"
    e = np.linalg.eigvalsh(op.to_dense())
    for lam in (0.37, 2.71, 5.55):
        assert counter.count_below(lam) == int(np.sum(e < lam))
