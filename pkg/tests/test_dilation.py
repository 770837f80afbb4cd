import math

import numpy as np
import pytest

from dilation_lab.channels import ChannelRep, apply, random_channel, random_density, random_kraus
from dilation_lab.dilation import (
    DilationError,
    StinespringDilation,
    eigenpath_match,
    exact_dilation_curve,
    isometry_from_kraus,
    kraus_from_isometry,
    static_dilation,
    verify_dilation,
)
from dilation_lab.dynamics import (
    SIGMA_Z,
    CurveSource,
    TimeGrid,
    channel_at,
    dephasing_channel,
    random_generator,
)
from dilation_lab.numkit import commutation_permutation, herm_eig, partial_trace_env, unitarity_residual

LN2 = math.log(2.0)


def _closed_form_isometry(t, gamma=1.0):
    a = math.exp(-gamma * t)
    al, be = math.sqrt((1 + a) / 2), math.sqrt((1 - a) / 2)
    return np.vstack([al * np.eye(2), be * SIGMA_Z]), al, be


def test_isometry_from_kraus_golden():
    k1, k2 = math.sqrt(0.75) * np.eye(2), 0.5 * SIGMA_Z
    v = isometry_from_kraus([k1, k2], 2)
    stacked, _, _ = _closed_form_isometry(LN2)
    assert np.allclose(commutation_permutation(2, 2) @ v, stacked, atol=1e-15)
    assert np.allclose(v.conj().T @ v, np.eye(2))


def test_isometry_trivial_ancilla():
    assert np.array_equal(isometry_from_kraus([np.eye(3)], 1), np.eye(3))


def test_isometry_reduced_action_matches_kraus(rng):
    for n in (2, 3):
        ks = random_kraus(n, rng)
        v = isometry_from_kraus(ks, n * n)
        rho = random_density(n, rng)
        direct = sum(k @ rho @ k.conj().T for k in ks)
        via = partial_trace_env(v @ rho @ v.conj().T, n, n * n)
        assert np.allclose(via, direct, atol=1e-10)
        back = kraus_from_isometry(v, n, n * n)
        assert all(np.array_equal(a, b) for a, b in zip(back, ks))


def test_isometry_ancilla_too_small(rng):
    with pytest.raises(DilationError):
        isometry_from_kraus(random_kraus(2, rng, 4), 3)


def test_static_dilation_golden():
    chan = dephasing_channel(1.0, LN2)
    dil = static_dilation(chan, ancilla_dim=2)
    assert dil.unitary.shape == (4, 4)
    assert unitarity_residual(dil.unitary) <= 1e-12
    stacked, al, be = _closed_form_isometry(LN2)
    p = commutation_permutation(2, 2)
    assert np.allclose(p @ dil.isometry(), stacked, atol=1e-12)
    x = np.array([0.6, 0.8j])
    omega = np.array([1.0, 0.0])
    assert np.allclose(dil.unitary @ np.kron(x, omega), dil.isometry() @ x)
    assert verify_dilation(dil, chan, trials=5).max_residual <= 1e-12


def test_static_dilation_identity():
    dil = static_dilation(ChannelRep.identity(2))
    for x in np.eye(2):
        e = np.kron(x, np.eye(4)[0])
        assert np.allclose(dil.unitary @ e, e)
    ident = StinespringDilation(2, 1, np.eye(2))
    assert verify_dilation(ident, ChannelRep.identity(2)).max_residual == 0.0


@pytest.mark.parametrize("n", [2, 3])
def test_static_dilation_random(rng, n):
    for _ in range(5):
        chan = random_channel(n, rng)
        dil = static_dilation(chan)
        assert dil.ancilla_dim == n * n
        rep = verify_dilation(dil, chan, trials=3, rng=rng)
        assert rep.passed() and rep.max_residual <= 1e-9
        assert rep.states_checked == n * n + 3


def test_corrupted_complement_does_not_matter():
    chan = dephasing_channel(1.0, LN2)
    dil = static_dilation(chan, ancilla_dim=2)
    u = dil.unitary.copy()
    rest = np.setdiff1d(np.arange(4), dil.omega_columns)
    u[:, rest[0]] *= -1
    u[:, rest[1]] *= 1j
    bad = StinespringDilation(2, 2, u)
    assert verify_dilation(bad, chan).max_residual <= 1e-12
    # flipping an omega column does change the action on coherences
    u2 = dil.unitary.copy()
    u2[:, dil.omega_columns[0]] *= -1
    assert verify_dilation(StinespringDilation(2, 2, u2), chan).max_residual > 0.1


def test_omega_index_relabels_consistently(rng):
    chan = dephasing_channel(1.0, 0.4)
    d0 = static_dilation(chan, ancilla_dim=2, omega_index=0)
    d1 = static_dilation(chan, ancilla_dim=2, omega_index=1)
    for _ in range(5):
        rho = random_density(2, rng)
        assert np.allclose(d0.reduced(rho), d1.reduced(rho), atol=1e-14)
        assert np.allclose(d1.reduced(rho), apply(chan, rho), atol=1e-14)
    assert np.allclose(d0.reduced_channel().superop, chan.superop, atol=1e-14)


def test_reduced_channel_matches_formula(rng):
    chan = random_channel(2, rng)
    dil = static_dilation(chan)
    assert np.allclose(dil.reduced_channel().superop, chan.superop, atol=1e-12)


def test_eigenpath_match_dephasing_identity():
    prev = herm_eig(dephasing_channel(1.0, 0.3).choi.matrix)
    for t in (0.31, 0.5, 1.0):
        nxt = herm_eig(dephasing_channel(1.0, t).choi.matrix)
        res = eigenpath_match(prev, nxt)
        assert list(res.permutation[:2]) == [0, 1]
        assert np.allclose(res.eig.eigenvectors[:, :2], prev.eigenvectors[:, :2], atol=1e-12)
        assert not res.warnings


def test_eigenpath_match_self_and_swap(rng):
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    e = herm_eig(g + g.conj().T)
    res = eigenpath_match(e, e)
    assert list(res.permutation) == [0, 1, 2, 3]
    assert np.allclose(res.eig.eigenvectors, e.eigenvectors)

    from dilation_lab.numkit import HermEig

    swapped = HermEig(e.eigenvalues[[1, 0, 2, 3]], e.eigenvectors[:, [1, 0, 2, 3]])
    res = eigenpath_match(e, swapped)
    assert list(res.permutation) == [1, 0, 2, 3]
    assert np.allclose(res.eig.eigenvalues, e.eigenvalues)


def test_eigenpath_match_preserves_spectrum(rng):
    for _ in range(10):
        a = random_channel(2, rng).choi.matrix
        b = random_channel(2, rng).choi.matrix
        ea, eb = herm_eig(a), herm_eig(b)
        res = eigenpath_match(ea, eb)
        assert np.allclose(np.sort(res.eig.eigenvalues), np.sort(eb.eigenvalues), atol=1e-12)
        assert np.allclose(res.eig.reconstruct(), b, atol=1e-12)


def test_exact_curve_dephasing_matches_closed_form():
    grid = TimeGrid.uniform(0.1, 2.0, 40)
    kc, uc, rep = exact_dilation_curve(CurveSource.builtin("dephasing", 1.0), grid, ancilla_dim=2)
    assert rep.max_reduced_residual <= 1e-10
    assert rep.max_unitarity_residual <= 1e-10
    p = commutation_permutation(2, 2)
    for k, t in enumerate(grid.points):
        stacked, _, _ = _closed_form_isometry(t)
        v = uc.dilation(k).isometry()
        # first columns are the isometry itself, up to a global sign per Kraus slot
        assert np.allclose(np.abs(p @ v), np.abs(stacked), atol=1e-12)
    assert all(rep.continuity_ok)
    assert not rep.warnings
    # V block changes by O(delta) between grid points
    assert rep.max_unitary_jump < 0.1


def test_exact_curve_constant_identity():
    src = CurveSource.table([0.0, 1.0], [ChannelRep.identity(2), ChannelRep.identity(2)])
    _, uc, rep = exact_dilation_curve(src, TimeGrid.uniform(0.0, 1.0, 6))
    assert rep.max_unitary_jump <= 1e-12
    for u in uc.unitaries:
        for x in np.eye(2):
            e = np.kron(x, np.eye(4)[0])
            assert np.allclose(u @ e, e)


def test_exact_curve_random_semigroup_refines():
    rng = np.random.default_rng(1)
    src = CurveSource.semigroup(random_generator(2, rng))
    jumps = []
    for num in (20, 39, 77):
        _, _, rep = exact_dilation_curve(src, TimeGrid.uniform(0.05, 1.0, num))
        assert rep.max_reduced_residual <= 1e-9
        assert rep.passed
        jumps.append(rep.max_unitary_jump)
    for a, b in zip(jumps, jumps[1:]):
        assert a / b >= 1.6


def test_exact_curve_second_difference_bounded():
    src = CurveSource.builtin("dephasing", 1.0)
    peaks = []
    for num in (40, 79, 157):
        grid = TimeGrid.uniform(0.1, 2.0, num)
        _, uc, _ = exact_dilation_curve(src, grid)
        h = grid.points[1] - grid.points[0]
        u = uc.unitaries
        second = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
        peaks.append(np.abs(second).max())
    assert max(peaks) <= 2 * min(peaks)


def test_exact_curve_caveat_at_zero():
    _, _, rep = exact_dilation_curve(CurveSource.builtin("dephasing", 1.0), TimeGrid.uniform(0.0, 1.0, 11))
    assert rep.caveats
    assert rep.passed


def test_exact_curve_verify_each_point(rng):
    src = CurveSource.semigroup(random_generator(3, rng))
    grid = TimeGrid.uniform(0.05, 0.5, 10)
    kc, uc, rep = exact_dilation_curve(src, grid)
    assert len(kc.families[0]) == 9
    for k, t in enumerate(grid.points):
        r = verify_dilation(uc.dilation(k), channel_at(src, t))
        assert r.passed()


def test_exact_curve_rank_exceeds_ancilla():
    with pytest.raises(DilationError):
        exact_dilation_curve(CurveSource.builtin("depolarizing", 1.0), TimeGrid.uniform(0.1, 1.0, 5), ancilla_dim=2)


def test_report_summary_labels():
    _, _, rep = exact_dilation_curve(CurveSource.builtin("dephasing", 1.0), TimeGrid.uniform(0.1, 1.0, 5))
    s = rep.summary()
    assert s["tolerance"] == 1e-9
    assert "frobenius" in s["residual_norm"]
    assert s["passed"]
