"""Rotations in SO(3): Rodrigues exp/log maps and the R^3 embedding.

Skew matrices follow the convention

    A_v = [[ 0,  -v1,  v2],
           [ v1,   0, -v3],
           [-v2,  v3,   0]]

so ``embed`` returns the ``v`` coordinates of ``log(X)`` in that layout.
"""

import numpy as np

EPS_PI = 1e-6
SMALL_ANGLE = 1e-4
_LOG_2PI = np.log(2.0 * np.pi)


class RotationError(ValueError):
    pass


def skew(v):
    v1, v2, v3 = np.asarray(v, dtype=float)
    return np.array([[0.0, -v1, v2],
                     [v1, 0.0, -v3],
                     [-v2, v3, 0.0]])


def unskew(a):
    """Inverse of ``skew`` on the skew-symmetric part of ``a``."""
    a = np.asarray(a, dtype=float)
    return np.array([a[1, 0], a[0, 2], a[2, 1]])


def exp_so3(v):
    """Rodrigues' formula, with Taylor coefficients near the identity."""
    v = np.asarray(v, dtype=float)
    alpha = float(np.linalg.norm(v))
    if alpha >= np.pi:
        raise RotationError(f"axis vector norm {alpha} is outside [0, pi)")
    if alpha == 0.0:
        return np.eye(3)
    a = skew(v)
    if alpha < SMALL_ANGLE:
        a2 = alpha * alpha
        c1 = 1.0 - a2 / 6.0 + a2 * a2 / 120.0
        c2 = 0.5 - a2 / 24.0 + a2 * a2 / 720.0
    else:
        c1 = np.sin(alpha) / alpha
        c2 = (1.0 - np.cos(alpha)) / (alpha * alpha)
    return np.eye(3) + c1 * a + c2 * (a @ a)


def project_so3(x):
    """Nearest rotation in Frobenius norm (SVD with determinant fix)."""
    u, _, vt = np.linalg.svd(np.asarray(x, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def is_rotation(x, tol=1e-9):
    x = np.asarray(x, dtype=float)
    return (x.shape == (3, 3)
            and np.abs(x.T @ x - np.eye(3)).max() <= tol
            and abs(np.linalg.det(x) - 1.0) <= tol)


def log_so3(x):
    """Axis vector ``v`` with ``exp_so3(v) == x``.

    Raises RotationError when the rotation angle is within EPS_PI of pi,
    where the log map is not unique.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3, 3):
        raise RotationError(f"expected a 3x3 matrix, got {x.shape}")
    if not is_rotation(x):
        x = project_so3(x)
    w = unskew(x - x.T)
    sin_a = 0.5 * np.linalg.norm(w)
    cos_a = 0.5 * (np.trace(x) - 1.0)
    alpha = float(np.arctan2(sin_a, cos_a))
    if alpha >= np.pi - EPS_PI:
        raise RotationError(f"rotation angle {alpha} is too close to pi")
    if alpha == 0.0:
        return np.zeros(3)
    if alpha < SMALL_ANGLE:
        a2 = alpha * alpha
        ratio = 1.0 + a2 / 6.0 + 7.0 * a2 * a2 / 360.0
    else:
        ratio = alpha / np.sin(alpha)
    return 0.5 * ratio * w


def embed(x):
    return log_so3(x)


def embed_many(xs):
    return np.array([log_so3(x) for x in xs]).reshape(-1, 3)


def rotation_angle(x):
    return float(np.linalg.norm(log_so3(x)))


def k3_logpdf(x, mu, sigma):
    """Log density of the trivariate normal on the embedded rotation."""
    sigma = np.asarray(sigma, dtype=float)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError("Sigma must be symmetric positive definite") from None
    if not np.allclose(sigma, sigma.T):
        raise ValueError("Sigma must be symmetric positive definite")
    r = embed(x) - np.asarray(mu, dtype=float)
    z = np.linalg.solve(chol, r)
    return float(-0.5 * (3 * _LOG_2PI + z @ z) - np.log(np.diag(chol)).sum())
