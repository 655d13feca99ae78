import numpy as np
import pytest

from opbounds.errors import DegenerateInputError, InputError, NotPsdError
from opbounds.sketching import SketchMatrix, SketchSpec, make_p_sparsified
from opbounds.spectral import (
    check_satisfiability,
    critical_radius,
    eigendecompose_scaled_gram,
    pencil_max,
    psi_value,
    statistical_dimension,
)


def random_psd(k, rng, jitter=0.0):
    b = rng.standard_normal((k, k))
    return b @ b.T + jitter * np.eye(k)


# --- eigendecomposition -----------------------------------------------------

def test_eigendecompose_identity():
    n = 6
    dec = eigendecompose_scaled_gram(np.eye(n), n)
    assert np.allclose(dec.mu, 1.0 / n)


def test_eigendecompose_rank_one():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(5)
    dec = eigendecompose_scaled_gram(np.outer(v, v), 5)
    assert dec.mu[0] == pytest.approx(v @ v / 5, rel=1e-12)
    assert np.all(dec.mu[1:] <= 1e-12)


def test_eigendecompose_reconstructs():
    rng = np.random.default_rng(1)
    g = random_psd(6, rng)
    dec = eigendecompose_scaled_gram(g, 6)
    recon = dec.u @ np.diag(dec.mu) @ dec.u.T
    assert np.abs(recon - g / 6).max() <= 1e-10
    assert np.all(np.diff(dec.mu) <= 0)


def test_eigendecompose_rejects_non_psd():
    with pytest.raises(NotPsdError):
        eigendecompose_scaled_gram(np.diag([1.0, -1.0]), 2)
    with pytest.raises(InputError):
        eigendecompose_scaled_gram(np.array([[1.0, 0.5], [0.2, 1.0]]), 2)


# --- critical radius ---------------------------------------------------------

def test_critical_radius_all_zero():
    assert critical_radius(np.zeros(8)) == 0.0


def test_critical_radius_constant_spectrum():
    # for delta^2 >= mu the condition is sqrt(mu) <= delta^2, so delta^2 = sqrt(mu)
    for n in (2, 17, 200):
        mu = np.full(n, 0.01)
        assert critical_radius(mu) == pytest.approx(0.1, abs=1e-9)


def grid_scan_radius(mu, resolution=1e-6):
    hi = max(1.0, float(np.sqrt(mu[0])))
    deltas = np.arange(resolution, hi + resolution, resolution)
    psis = np.sqrt(np.minimum(deltas[:, None] ** 2, mu[None, :]).mean(axis=1))
    ok = psis <= deltas**2
    return float(deltas[np.argmax(ok)] ** 2)


def test_critical_radius_matches_grid_scan():
    mu = 0.5 * 2.0 ** (-np.arange(32, dtype=float))
    fast = critical_radius(mu)
    slow = grid_scan_radius(mu)
    assert fast == pytest.approx(slow, abs=5e-6)


@pytest.mark.parametrize("seed", range(30))
def test_critical_radius_boundary_and_minimality(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 60))
    mu = np.sort(rng.uniform(1e-4, 2.0, n))[::-1]
    if seed % 3 == 0:
        mu = mu * rng.uniform(0.5, 1.5) ** np.arange(n)  # mixed decay
        mu = np.sort(np.abs(mu))[::-1]
    d_sq = critical_radius(mu)
    delta = np.sqrt(d_sq)
    assert psi_value(delta, mu) <= d_sq
    if delta > 1e-8:
        probe = delta - 1e-8
        assert psi_value(probe, mu) > probe**2


# --- statistical dimension ---------------------------------------------------

def test_statistical_dimension_examples():
    mu = np.array([0.5, 0.3, 0.05])
    assert statistical_dimension(mu, 0.1) == 3
    assert statistical_dimension(mu, 0.6) == 1
    assert statistical_dimension(mu, 0.01) == 3  # no eigenvalue below -> n


def test_statistical_dimension_monotone():
    rng = np.random.default_rng(4)
    mu = np.sort(rng.uniform(0, 1, 20))[::-1]
    dims = [statistical_dimension(mu, d) for d in np.linspace(0, 1.2, 25)]
    assert all(b <= a for a, b in zip(dims, dims[1:]))


# --- satisfiability ----------------------------------------------------------

def _spectral_setup(seed, n=24):
    rng = np.random.default_rng(seed)
    g = random_psd(n, rng)
    dec = eigendecompose_scaled_gram(g, n)
    d_sq = critical_radius(dec.mu)
    d_n = statistical_dimension(dec.mu, d_sq)
    return dec, d_sq, d_n


def test_satisfiability_identity_sketch():
    dec, d_sq, d_n = _spectral_setup(0)
    n = dec.u.shape[0]
    sk = SketchMatrix(matrix=np.eye(n))
    rep = check_satisfiability(sk, dec, d_n, d_sq, c=1.0)
    assert rep.norm1 <= 1e-10
    # tail norm is sqrt(mu_{d_n+1}) <= delta_n because mu_{d_n} <= delta_n^2
    assert rep.norm2 <= np.sqrt(d_sq) + 1e-12
    assert rep.satisfiable


def test_satisfiability_zero_sketch():
    dec, d_sq, d_n = _spectral_setup(1)
    n = dec.u.shape[0]
    sk = SketchMatrix(matrix=np.zeros((4, n)))
    rep = check_satisfiability(sk, dec, d_n, d_sq, c=10.0)
    assert rep.norm1 == pytest.approx(1.0)
    assert not rep.satisfiable


def test_satisfiability_verdict_is_pure_function():
    dec, d_sq, d_n = _spectral_setup(2)
    n = dec.u.shape[0]
    sk = make_p_sparsified(SketchSpec(s=n, n=n, p=1.0, seed=0))
    rep = check_satisfiability(sk, dec, d_n, d_sq, c=5.0)
    expected = rep.norm1 <= 0.5 and rep.norm2 <= 5.0 * np.sqrt(d_sq)
    assert rep.satisfiable == expected


def test_satisfiability_rejects_bad_dn():
    dec, d_sq, _ = _spectral_setup(3)
    sk = SketchMatrix(matrix=np.eye(dec.u.shape[0]))
    with pytest.raises(InputError):
        check_satisfiability(sk, dec, 0, d_sq, c=1.0)
    with pytest.raises(InputError):
        check_satisfiability(sk, dec, dec.u.shape[0] + 1, d_sq, c=1.0)


def test_satisfiability_dn_equals_n():
    # flat spectrum scaled so no eigenvalue falls below delta^2
    n = 12
    g = 4.0 * n * np.eye(n)  # mu = 4 each; delta^2 = 2 < 4 -> d_n = n
    dec = eigendecompose_scaled_gram(g, n)
    d_sq = critical_radius(dec.mu)
    d_n = statistical_dimension(dec.mu, d_sq)
    assert d_n == n
    sk = SketchMatrix(matrix=np.eye(n))
    rep = check_satisfiability(sk, dec, d_n, d_sq, c=1.0)
    assert rep.norm2 == 0.0
    assert rep.satisfiable


# --- pencil ------------------------------------------------------------------

def test_pencil_trivial_cases():
    rng = np.random.default_rng(5)
    g = random_psd(5, rng, jitter=0.1)
    assert pencil_max(g, g) == pytest.approx(1.0, abs=1e-12)
    assert pencil_max(4.0 * g, g) == pytest.approx(4.0, rel=1e-12)


def rayleigh_oracle(g_top, g_bottom, n_samples, rng, refine_iters=200):
    """Sampled Rayleigh quotients plus an independently refined supremum via
    inverse power iteration on the pencil."""
    k = g_top.shape[0]
    vecs = rng.standard_normal((n_samples, k))
    num = np.einsum("ij,jk,ik->i", vecs, g_top, vecs)
    den = np.einsum("ij,jk,ik->i", vecs, g_bottom, vecs)
    quotients = num / den
    a = vecs[np.argmax(quotients)]
    for _ in range(refine_iters):
        a = np.linalg.solve(g_bottom, g_top @ a)
        a /= np.linalg.norm(a)
    best = (a @ g_top @ a) / (a @ g_bottom @ a)
    return quotients, best


@pytest.mark.parametrize("seed", range(5))
def test_pencil_dominates_sampled_quotients(seed):
    rng = np.random.default_rng(seed)
    g_top = random_psd(5, rng)
    g_bottom = random_psd(5, rng, jitter=0.5)
    rho = pencil_max(g_top, g_bottom)
    quotients, best = rayleigh_oracle(g_top, g_bottom, 10_000, rng)
    assert np.all(quotients <= rho * (1 + 1e-9))
    assert rho == pytest.approx(best, abs=1e-6)


def test_pencil_congruence_invariance():
    rng = np.random.default_rng(9)
    for _ in range(10):
        g_top = random_psd(4, rng)
        g_bottom = random_psd(4, rng, jitter=0.3)
        a = rng.standard_normal((4, 4)) + 0.5 * np.eye(4)
        before = pencil_max(g_top, g_bottom)
        after = pencil_max(a.T @ g_top @ a, a.T @ g_bottom @ a)
        assert after == pytest.approx(before, rel=1e-8)


def test_pencil_handles_singular_bottom():
    rng = np.random.default_rng(10)
    b = rng.standard_normal((4, 2))
    g_bottom = b @ b.T  # rank 2
    g_top = random_psd(4, rng)
    rho = pencil_max(g_top, g_bottom)
    # oracle restricted to range(G_bottom)
    vecs = (g_bottom @ rng.standard_normal((4, 3000))).T
    num = np.einsum("ij,jk,ik->i", vecs, g_top, vecs)
    den = np.einsum("ij,jk,ik->i", vecs, g_bottom, vecs)
    assert np.all(num / den <= rho * (1 + 1e-9))


def test_pencil_zero_bottom_errors():
    with pytest.raises(DegenerateInputError):
        pencil_max(np.eye(3), np.zeros((3, 3)))
