"""Truth dynamics and measurement operators for the benchmark systems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PolyfiltError
from .filters_exact import MeasurementModel


@dataclass(frozen=True)
class IkedaParams:
    contraction: float = 0.9
    theta0: float = 0.4
    theta_scale: float = 6.0
    shift: float = 1.0


@dataclass(frozen=True)
class L96Params:
    n: int = 40
    F: float = 8.0
    dt: float = 0.05

    def __post_init__(self):
        if self.n < 4:
            raise PolyfiltError("cyclic stencil needs n >= 4")


def ikeda_step(state: np.ndarray, params: IkedaParams = IkedaParams()) -> np.ndarray:
    """One step of the Ikeda map; accepts a 2-vector or a 2 x N batch."""
    x = np.asarray(state, dtype=float)
    v, w = x[0], x[1]
    theta = params.theta0 - params.theta_scale / (1.0 + v * v + w * w)
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty_like(x)
    out[0] = params.shift + params.contraction * (v * c - w * s)
    out[1] = params.contraction * (v * s + w * c)
    return out


def l96_tendency(state: np.ndarray, F: float = 8.0) -> np.ndarray:
    """Lorenz '96 tendency with cyclic boundaries; vectorized over columns."""
    x = np.asarray(state, dtype=float)
    xm1 = np.roll(x, 1, axis=0)
    xm2 = np.roll(x, 2, axis=0)
    xp1 = np.roll(x, -1, axis=0)
    return -xm1 * (xm2 - xp1) - x + F


def rk4_step(f, state: np.ndarray, dt: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step."""
    if dt <= 0:
        raise PolyfiltError("dt must be positive")
    k1 = f(state)
    k2 = f(state + 0.5 * dt * k1)
    k3 = f(state + 0.5 * dt * k2)
    k4 = f(state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise PolyfiltError("non-finite state in Runge-Kutta step")
    return out


def range_measurement(noise) -> MeasurementModel:
    """Distance-from-origin measurement h(x) = ||x||, Jacobian x^T / ||x||."""

    def h(x: np.ndarray) -> np.ndarray:
        r = float(np.linalg.norm(x))
        if r < 1e-12:
            raise PolyfiltError("range measurement undefined at the origin")
        return np.array([r])

    def jac(x: np.ndarray) -> np.ndarray:
        r = float(np.linalg.norm(x))
        if r < 1e-12:
            raise PolyfiltError("range Jacobian undefined at the origin")
        return (np.asarray(x, dtype=float) / r)[None, :]

    def h_batch(X: np.ndarray) -> np.ndarray:
        return np.linalg.norm(X, axis=0)[None, :]

    def jac_batch(X: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(X, axis=0)
        if np.any(r < 1e-12):
            raise PolyfiltError("range Jacobian undefined at the origin")
        return (X / r[None, :]).T[:, None, :]

    return MeasurementModel(
        h=h, jacobian=jac, noise=noise, m=1, h_batch=h_batch, jacobian_batch=jac_batch
    )


def linear_measurement(H: np.ndarray, noise) -> MeasurementModel:
    """Generic linear measurement h(x) = H x."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    m, n = H.shape

    return MeasurementModel(
        h=lambda x: H @ np.asarray(x, dtype=float),
        jacobian=lambda x: H,
        noise=noise,
        m=m,
        h_batch=lambda X: H @ np.asarray(X, dtype=float),
        jacobian_batch=lambda X: np.broadcast_to(H, (X.shape[1], m, n)),
        linear=True,
    )


def identity_measurement(n: int, noise) -> MeasurementModel:
    """Observe all state variables directly: h(x) = x, H = I."""
    eye = np.eye(n)

    return MeasurementModel(
        h=lambda x: np.asarray(x, dtype=float),
        jacobian=lambda x: eye,
        noise=noise,
        m=n,
        h_batch=lambda X: np.asarray(X, dtype=float),
        jacobian_batch=lambda X: np.broadcast_to(eye, (X.shape[1], n, n)),
        linear=True,
    )
