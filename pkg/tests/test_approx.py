import math

import numpy as np
import pytest

from dilation_lab.approx import (
    NotLipschitzError,
    approx_dilation,
    build_from_samples,
    embed_copy,
    evaluate,
    interpolate_segment,
    isometry_channel,
    mesh_for_epsilon,
    rotation,
)
from dilation_lab.channels import ChannelRep, channel_distance, convex_combination, is_cptp, random_channel
from dilation_lab.dilation import isometry_from_kraus
from dilation_lab.dynamics import CurveSource, TimeGrid, channel_at, dephasing_channel, random_generator, sample_curve
from dilation_lab.numkit import unitarity_residual


@pytest.fixture(scope="module")
def dephasing_apx():
    return approx_dilation(CurveSource.builtin("dephasing", 1.0), 2.0, 0.05)


def test_mesh_for_epsilon():
    assert mesh_for_epsilon(2.0, 0.01) == 0.005
    assert mesh_for_epsilon(2.0, 0.005) == 0.5 * mesh_for_epsilon(2.0, 0.01)
    with pytest.raises(ValueError):
        mesh_for_epsilon(0.0, 0.1)


def test_rotation_is_unitary_and_interpolates(rng):
    a_iso = isometry_from_kraus(random_channel(2, rng).kraus(), 4)
    b_iso = isometry_from_kraus(random_channel(2, rng).kraus(), 4)
    a = embed_copy(a_iso, 2, 4, 0)
    b = embed_copy(b_iso, 2, 4, 1)
    assert np.allclose(a.conj().T @ b, 0)
    for theta in (0.0, 0.3, math.pi / 4, math.pi / 2):
        r = rotation(a, b, theta)
        assert unitarity_residual(r) <= 1e-13
        assert np.allclose(r @ a, math.cos(theta) * a + math.sin(theta) * b, atol=1e-14)
    assert np.allclose(rotation(a, b, math.pi / 2) @ a, b, atol=1e-14)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_cross_terms_cancel(rng, s):
    for _ in range(20):
        pa, pb = random_channel(2, rng), random_channel(2, rng)
        va = isometry_from_kraus(pa.kraus(), 4)
        vb = isometry_from_kraus(pb.kraus(), 4)
        w = interpolate_segment(va, vb, s, 2)
        c2 = math.cos(0.5 * math.pi * s) ** 2
        expected = convex_combination([c2, 1 - c2], [pa, pb])
        assert np.linalg.norm(isometry_channel(w, 2).superop - expected.superop) <= 1e-9


def test_mesh_and_midpoint_identities(rng):
    chans = [random_channel(2, rng) for _ in range(5)]
    times = np.linspace(0.0, 1.0, 5)
    apx = build_from_samples(times, chans)
    for j, t in enumerate(times):
        assert np.linalg.norm(apx.channel_at(t).superop - chans[j].superop) <= 1e-9
    for j in range(4):
        mid = 0.5 * (times[j] + times[j + 1])
        expected = convex_combination([0.5, 0.5], [chans[j], chans[j + 1]])
        assert np.linalg.norm(apx.channel_at(mid).superop - expected.superop) <= 1e-9


def test_unitarity_and_cptp_along_curve(rng):
    chans = [random_channel(2, rng) for _ in range(4)]
    apx = build_from_samples(np.linspace(0.0, 3.0, 4), chans)
    for t in np.linspace(0.0, 3.0, 37):
        assert unitarity_residual(apx.unitary_at(t)) <= 1e-10
        assert is_cptp(apx.channel_at(t)).ok


def test_dephasing_certificate(dephasing_apx):
    apx = dephasing_apx
    assert apx.ancilla_dim == 8 <= 4 * 2**2
    assert apx.identity_start
    assert np.linalg.norm(apx.unitary_at(0.0) - np.eye(16)) <= 1e-12
    assert np.array_equal(evaluate(apx, 0.0).unitary, np.eye(16))
    assert apx.measured_sup_error < apx.epsilon
    assert apx.measured_sup_error <= apx.certified_error <= apx.epsilon
    assert apx.measured_sup_lower <= apx.measured_sup_error
    assert apx.verification_points == 10 * apx.segments + 1
    assert abs(apx.lipschitz_estimate - 2.0) <= 0.05 * 2.0
    assert math.isclose(apx.mesh, 2.0 / apx.segments)


def test_dephasing_mesh_at_two_percent():
    apx = approx_dilation(CurveSource.builtin("dephasing", 1.0), 2.0, 0.02)
    # with the 1.5 safety factor the mesh is about 0.02 / (1.5 * 2)
    assert abs(apx.mesh - 0.02 / 3.0) <= 0.1 * 0.02 / 3.0
    assert apx.measured_sup_error < 0.02


def test_error_halves_with_mesh():
    src = CurveSource.builtin("dephasing", 1.0)
    e20 = approx_dilation(src, 2.0, 1.0, segments=20).measured_sup_error
    e40 = approx_dilation(src, 2.0, 1.0, segments=40).measured_sup_error
    assert 1.5 <= e20 / e40 <= 2.5


def test_unitary_curve_continuous(dephasing_apx):
    apx = dephasing_apx
    jumps = []
    for num in (241, 481, 961):
        ts = np.linspace(0.0, 2.0, num)
        us = [apx.unitary_at(t) for t in ts]
        jumps.append(max(np.linalg.norm(b - a) for a, b in zip(us, us[1:])))
    assert jumps[0] / jumps[1] > 1.8 and jumps[1] / jumps[2] > 1.8
    # no jumps at the mesh points themselves
    eps = 1e-9
    for t in apx.nodes[1:-1]:
        assert np.linalg.norm(apx.unitary_at(t - eps) - apx.unitary_at(t + eps)) <= 1e-6


def test_unitarity_drift(dephasing_apx):
    assert max(unitarity_residual(u) for u in dephasing_apx.starts) <= 1e-10


def test_constant_identity_curve():
    src = CurveSource.table([0.0, 2.0], [ChannelRep.identity(2), ChannelRep.identity(2)])
    apx = approx_dilation(src, 2.0, 0.01)
    assert apx.segments == 1
    assert apx.measured_sup_error <= 1e-14
    for t in (0.0, 0.7, 2.0):
        assert np.array_equal(apx.unitary_at(t), np.eye(16))


def test_stinespring_source_exact_at_mesh_points():
    src = CurveSource.semigroup(random_generator(2, np.random.default_rng(5)))
    apx = approx_dilation(src, 1.0, 0.1)
    for t in apx.nodes:
        assert channel_distance(apx.channel_at(t), channel_at(src, t)).diamond_upper <= 1e-9
    assert apx.measured_sup_error <= apx.certified_error


def test_certificate_soundness_random_semigroups():
    rng = np.random.default_rng(11)
    for _ in range(3):
        src = CurveSource.semigroup(random_generator(2, rng))
        apx = approx_dilation(src, 1.0, 0.05)
        assert apx.measured_sup_error <= apx.certified_error <= 0.05 + 1e-12


def test_square_root_curve_rejected():
    # t -> dephasing(sqrt t) has unbounded slope at 0
    times = np.linspace(0.0, 1.0, 401)
    chans = [dephasing_channel(1.0, math.sqrt(t)) for t in times]
    src = CurveSource.table(times, chans)
    with pytest.raises(NotLipschitzError):
        approx_dilation(src, 1.0, 0.05)


def test_summary_fields(dephasing_apx):
    s = dephasing_apx.summary()
    assert s["ancilla_dim"] == 8
    assert s["certificate_holds"] and s["below_epsilon"]
    assert "Choi trace norm" in s["norm"]
    assert s["safety_factor"] == 1.5


def test_evaluate_out_of_range(dephasing_apx):
    from dilation_lab.dynamics import CurveError

    with pytest.raises(CurveError):
        dephasing_apx.unitary_at(2.5)


def test_non_identity_start(rng):
    chans = [random_channel(2, rng) for _ in range(3)]
    apx = build_from_samples(np.linspace(0.0, 1.0, 3), chans)
    assert not apx.identity_start
    assert unitarity_residual(apx.unitary_at(0.0)) <= 1e-12
    samples = sample_curve(CurveSource.table([0.0, 0.5, 1.0], chans), TimeGrid(apx.nodes))
    for (t, c) in samples:
        assert channel_distance(apx.channel_at(t), c).diamond_upper <= 1e-9
