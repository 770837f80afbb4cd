"""Pure-dephasing worked example: channel -> Choi -> Kraus -> isometry -> unitary.

The reference values are closed forms in ``a = exp(-gamma t)``; at
``gamma = 1, t = ln 2`` they reduce to the literals in ``GOLDEN_LN2``.
Reference matrices for the isometry and unitary are written with the
ancilla index as the outer (block) index, ``V = [K1; K2]``; this package
orders composite spaces system (x) ancilla, so those references are
compared after the commutation permutation.
"""

from __future__ import annotations

import math

import numpy as np

from .channels import choi_to_kraus
from .dilation import static_dilation, verify_dilation
from .dynamics import SIGMA_Z, dephasing_channel
from .numkit import commutation_permutation, herm_eig, unitarity_residual

GOLDEN_LN2 = {
    "gamma": 1.0,
    "t": math.log(2.0),
    "a": 0.5,
    "choi_eigenvalues": [1.5, 0.5, 0.0, 0.0],
    "alpha": math.sqrt(0.75),
    "beta": 0.5,
    "kraus": [math.sqrt(0.75) * np.eye(2), 0.5 * SIGMA_Z],
    "offdiag_factor": 0.5,
}


def reference(gamma: float, t: float) -> dict:
    a = math.exp(-gamma * t)
    alpha = math.sqrt((1 + a) / 2)
    beta = math.sqrt((1 - a) / 2)
    choi = np.array([[1, 0, 0, a], [0, 0, 0, 0], [0, 0, 0, 0], [a, 0, 0, 1]], dtype=complex)
    v1 = np.array([1, 0, 0, 1]) / math.sqrt(2)
    v2 = np.array([1, 0, 0, -1]) / math.sqrt(2)
    k1 = alpha * np.eye(2)
    k2 = beta * SIGMA_Z
    v_stacked = np.vstack([k1, k2])
    u_stacked = np.array(
        [[alpha, 0, -beta, 0], [0, alpha, 0, beta], [beta, 0, alpha, 0], [0, -beta, 0, alpha]],
        dtype=complex,
    )
    return {
        "a": a,
        "alpha": alpha,
        "beta": beta,
        "choi": choi,
        "eigenvalues": np.array([1 + a, 1 - a, 0.0, 0.0]),
        "eigenvectors": [v1, v2],
        "kraus": [k1, k2],
        "isometry_stacked": v_stacked,
        "unitary_stacked": u_stacked,
    }


def _phase_aligned_diff(x: np.ndarray, ref: np.ndarray) -> float:
    """``min_phi ||e^{i phi} x - ref||_F``."""
    ov = np.vdot(x.reshape(-1), ref.reshape(-1))
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(ph * x - ref))


def run_demo(gamma: float = 1.0, t: float = math.log(2.0), seed: int = 0, trials: int = 8) -> dict:
    """Carry out all six steps and diff each against the closed forms.

    Returns a dict of step outputs (numpy arrays) and a ``diffs`` mapping of
    named residuals; every diff is a Frobenius or absolute difference.
    """
    ref = reference(gamma, t)
    chan = dephasing_channel(gamma, t)
    n, d = 2, 2
    p = commutation_permutation(n, d)  # (x (x) f) -> (f (x) x)

    choi = chan.choi.matrix
    eig = herm_eig(choi)
    kraus = list(choi_to_kraus(chan.choi))
    dil = static_dilation(chan, ancilla_dim=d)
    v = dil.isometry()
    u = dil.unitary
    alpha = float(v[0, 0].real)
    beta = float(abs(v[1, 0]))

    rng = np.random.default_rng(seed)
    verify = verify_dilation(dil, chan, trials=trials, rng=rng)
    probe = np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, 0.7]])
    recovered = dil.reduced(probe)
    expected = np.array([[probe[0, 0], ref["a"] * probe[0, 1]], [ref["a"] * probe[1, 0], probe[1, 1]]])
    offdiag_factor = float((recovered[0, 1] / probe[0, 1]).real)

    # environment-major unitary, re-expressed in system (x) ancilla order
    u_ref = p.T @ ref["unitary_stacked"] @ p
    omega_cols = dil.omega_columns
    diffs = {
        "choi": float(np.linalg.norm(choi - ref["choi"])),
        "eigenvalues": float(np.abs(eig.eigenvalues - ref["eigenvalues"]).max()),
        "eigenvector_1": _phase_aligned_diff(eig.eigenvectors[:, 0], ref["eigenvectors"][0]),
        "eigenvector_2": _phase_aligned_diff(eig.eigenvectors[:, 1], ref["eigenvectors"][1]),
        "kraus_1": _phase_aligned_diff(kraus[0], ref["kraus"][0]),
        "kraus_2": _phase_aligned_diff(kraus[1], ref["kraus"][1]),
        "isometry": float(np.linalg.norm(p @ v - ref["isometry_stacked"])),
        "alpha": abs(alpha - ref["alpha"]),
        "beta": abs(beta - ref["beta"]),
        "unitary_isometry_block": float(np.linalg.norm(u[:, omega_cols] - u_ref[:, omega_cols])),
        "unitarity": unitarity_residual(u),
        "recovered_channel": verify.max_residual,
        "recovered_probe": float(np.linalg.norm(recovered - expected)),
        "offdiag_factor": abs(offdiag_factor - ref["a"]),
    }
    return {
        "gamma": gamma,
        "t": t,
        "a": ref["a"],
        "choi": choi,
        "eigenvalues": eig.eigenvalues,
        "eigenvectors": eig.eigenvectors,
        "kraus": kraus,
        "isometry": v,
        "isometry_stacked": p @ v,
        "unitary": u,
        "unitary_reference_stacked": ref["unitary_stacked"],
        "alpha": alpha,
        "beta": beta,
        "offdiag_factor": offdiag_factor,
        "probe": probe,
        "recovered": recovered,
        "diffs": diffs,
    }
