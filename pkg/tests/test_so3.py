import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from fibermix import so3


def random_axis(rng, max_norm=np.pi - 0.1):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v) * rng.uniform(0, max_norm)


def power_series_exp(a, terms=60):
    out = np.eye(3)
    term = np.eye(3)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


def test_skew_examples():
    assert np.all(so3.skew([0, 0, 0]) == 0)
    assert np.array_equal(so3.skew([1, 0, 0]), [[0, -1, 0], [1, 0, 0], [0, 0, 0]])
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = rng.standard_normal(3)
        a = so3.skew(v)
        assert abs(0.5 * np.trace(a.T @ a) - v @ v) < 1e-12
        assert np.allclose(so3.unskew(a), v)


def test_exp_examples():
    assert np.array_equal(so3.exp_so3([0, 0, 0]), np.eye(3))
    target = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    got = so3.exp_so3([np.pi / 2, 0, 0])
    assert np.abs(got - power_series_exp(so3.skew([np.pi / 2, 0, 0]))).max() < 1e-12
    assert np.abs(got - target).max() < 1e-12


def test_exp_matches_scipy_expm():
    rng = np.random.default_rng(1)
    for _ in range(200):
        v = random_axis(rng, 3.0)
        assert np.abs(so3.exp_so3(v) - expm(so3.skew(v))).max() < 1e-12


def test_exp_is_rotation():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        x = so3.exp_so3(random_axis(rng, 3.0))
        assert np.abs(x.T @ x - np.eye(3)).max() < 1e-12
        assert abs(np.linalg.det(x) - 1) < 1e-12


def test_exp_rejects_large_angle():
    with pytest.raises(so3.RotationError):
        so3.exp_so3([np.pi, 0, 0])


def test_small_angle_branch_continuity():
    d = np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8])
    below = so3.exp_so3(d * (so3.SMALL_ANGLE * (1 - 1e-9)))
    above = so3.exp_so3(d * (so3.SMALL_ANGLE * (1 + 1e-9)))
    assert np.abs(below - above).max() < 1e-10
    lb = so3.log_so3(so3.exp_so3(d * so3.SMALL_ANGLE * (1 - 1e-9)))
    la = so3.log_so3(so3.exp_so3(d * so3.SMALL_ANGLE * (1 + 1e-9)))
    assert np.linalg.norm(lb - la) / so3.SMALL_ANGLE < 1e-8


def test_log_examples():
    assert np.array_equal(so3.log_so3(np.eye(3)), np.zeros(3))
    x = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    assert np.abs(so3.log_so3(x) - [np.pi / 2, 0, 0]).max() < 1e-12
    assert np.abs(so3.embed(so3.exp_so3([0.1, 0.2, -0.3])) - [0.1, 0.2, -0.3]).max() < 1e-10


def test_exp_log_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        v = random_axis(rng)
        assert np.linalg.norm(so3.log_so3(so3.exp_so3(v)) - v) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1.8, 1.8), min_size=3, max_size=3))
def test_round_trip_property(v):
    v = np.array(v)
    if np.linalg.norm(v) > np.pi - 0.1:
        v = v / np.linalg.norm(v) * (np.pi - 0.1)
    assert np.linalg.norm(so3.log_so3(so3.exp_so3(v)) - v) < 1e-9


def test_rotation_angle_matches_scipy():
    rng = np.random.default_rng(4)
    for _ in range(100):
        x = Rotation.random(random_state=rng).as_matrix()
        if Rotation.from_matrix(x).magnitude() > np.pi - 1e-3:
            continue
        assert abs(so3.rotation_angle(x) - Rotation.from_matrix(x).magnitude()) < 1e-9


def test_log_near_pi_fails():
    with pytest.raises(so3.RotationError):
        so3.log_so3(np.diag([1.0, -1.0, -1.0]))


def test_log_reprojects_drifted_input():
    x = so3.exp_so3([0.2, 0.1, -0.4])
    drift = x + 1e-7 * np.random.default_rng(0).standard_normal((3, 3))
    assert np.linalg.norm(so3.log_so3(drift) - [0.2, 0.1, -0.4]) < 1e-6


def test_embed_injective():
    rng = np.random.default_rng(5)
    vs = [random_axis(rng) for _ in range(300)]
    emb = so3.embed_many([so3.exp_so3(v) for v in vs])
    d = np.linalg.norm(emb[:, None] - emb[None], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min() > 1e-6


def test_k3_normalizer():
    assert abs(so3.k3_logpdf(np.eye(3), np.zeros(3), np.eye(3)) - np.log((2 * np.pi) ** -1.5)) < 1e-12
    assert abs(so3.k3_logpdf(np.eye(3), np.zeros(3), np.eye(3)) + 2.7568) < 1e-4


def test_k3_mode_and_reembedding():
    mu = np.array([0.3, -0.2, 0.1])
    sigma = np.diag([0.1, 0.2, 0.05])
    peak = so3.k3_logpdf(so3.exp_so3(mu), mu, sigma)
    rng = np.random.default_rng(6)
    for _ in range(200):
        x = so3.exp_so3(mu + 0.3 * rng.standard_normal(3))
        assert so3.k3_logpdf(x, mu, sigma) <= peak + 1e-12
        assert so3.k3_logpdf(x, so3.embed(x), sigma) == pytest.approx(peak, abs=1e-12)


def test_k3_integrates_to_one():
    # importance sampling over R^3 with a wider Gaussian proposal
    rng = np.random.default_rng(7)
    mu = np.array([0.2, 0.1, -0.3])
    sigma = np.array([[0.2, 0.05, 0.0], [0.05, 0.1, 0.02], [0.0, 0.02, 0.15]])
    z = rng.normal(scale=1.0, size=(20000, 3)) + mu
    logq = -0.5 * ((z - mu) ** 2).sum(1) - 1.5 * np.log(2 * np.pi)
    # density at embedding point z, written as X = I with the mean shifted by -z
    logp = np.array([so3.k3_logpdf(np.eye(3), mu - zi, sigma) for zi in z])
    est = np.mean(np.exp(logp - logq))
    assert abs(est - 1.0) < 1e-2


def test_k3_rejects_non_spd():
    with pytest.raises(ValueError):
        so3.k3_logpdf(np.eye(3), np.zeros(3), -np.eye(3))
