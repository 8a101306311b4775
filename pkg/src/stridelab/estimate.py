"""Scalar Kalman filter for angular momentum about the contact.

L is special among walking signals: its model is trivially linear
(dL/dt = m g x_c + u_a with x_c and u_a known inputs, unit state/input/output
coefficients after discretization) and unaffected by joint torques, so a
one-state filter with constant Q and R does the whole job.  Velocity-based
estimators have to model the full contact dynamics to get the same smoothness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .pendulum import PendulumParams

__all__ = [
    "KalmanState",
    "kf_predict",
    "kf_correct",
    "riccati_steady_state",
    "kalman_demo_columns",
]


@dataclass(frozen=True)
class KalmanState:
    """Filter state.

    Attributes:
        L_hat: current momentum estimate [kg m^2/s].
        P: estimate variance.
        Q: per-step process noise variance (default 1e-4).
        R_meas: measurement noise variance (default 1e-1).
        dt: sample period [s].
    """

    L_hat: float
    P: float
    Q: float = 1e-4
    R_meas: float = 1e-1
    dt: float = 1e-3

    def __post_init__(self):
        vals = (self.L_hat, self.P, self.Q, self.R_meas, self.dt)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"KalmanState: non-finite field in {vals}")
        if self.P < 0 or self.Q < 0:
            raise ValidationError("KalmanState: P and Q must be >= 0")
        if self.R_meas <= 0 or self.dt <= 0:
            raise ValidationError("KalmanState: R_meas and dt must be > 0")


def kf_predict(
    ks: KalmanState, x_c: float, u_a: float, params: PendulumParams
) -> KalmanState:
    """Time update: one Euler step of the momentum model.

    L_hat <- L_hat + (m g x_c + u_a) dt;  P <- P + Q.
    """
    if not (math.isfinite(x_c) and math.isfinite(u_a)):
        raise ValidationError("kf_predict: non-finite input")
    return replace(
        ks,
        L_hat=ks.L_hat + (params.m * params.g * x_c + u_a) * ks.dt,
        P=ks.P + ks.Q,
    )


def kf_correct(ks: KalmanState, L_obs: float) -> KalmanState:
    """Measurement update with gain K = P / (P + R_meas).

    L_hat <- L_hat + K (L_obs - L_hat);  P <- (1 - K) P.  With P = R_meas the
    gain is exactly 1/2.
    """
    if not math.isfinite(L_obs):
        raise ValidationError("kf_correct: non-finite measurement")
    K = ks.P / (ks.P + ks.R_meas)
    return replace(ks, L_hat=ks.L_hat + K * (L_obs - ks.L_hat), P=(1.0 - K) * ks.P)


def riccati_steady_state(Q: float, R_meas: float) -> float:
    """Post-correction steady-state variance P* of the predict/correct cycle.

    P* solves P = (P + Q) R / (P + Q + R), i.e. P*^2 + Q P* - Q R = 0:
        P* = (-Q + sqrt(Q^2 + 4 Q R)) / 2.
    """
    if Q < 0 or R_meas <= 0:
        raise ValidationError("riccati_steady_state: need Q >= 0 and R_meas > 0")
    return 0.5 * (-Q + math.sqrt(Q * Q + 4.0 * Q * R_meas))


def kalman_demo_columns(
    params: PendulumParams,
    L_des: float,
    T: float,
    sigma: float,
    n_samples: int,
    seed: int,
    dt: float = 1e-3,
    Q: float = 1e-4,
) -> dict[str, np.ndarray]:
    """Columns for the filter demo: a deadbeat-stabilized walking ALIP as
    ground truth, noisy momentum observations, and the filtered estimate.

    Returns {"t", "L_true", "L_obs", "L_hat"}.  The filter's input x_c is
    sampled at interval midpoints (the update itself is the one-sample
    kf_predict step); measurements are L_true + N(0, sigma^2).
    """
    from .control import foot_placement_deadbeat, predict_L_end
    from .pendulum import AlipState, alip_reset, alip_transition

    if sigma <= 0 or n_samples <= 0:
        raise ValidationError("kalman_demo_columns: need sigma > 0 and n_samples > 0")
    rng = np.random.default_rng(seed)
    state = AlipState(x_c=0.0, L=0.0)
    ks = KalmanState(L_hat=0.0, P=sigma * sigma, Q=Q, R_meas=sigma * sigma, dt=dt)
    t = np.arange(n_samples) * dt
    L_true = np.empty(n_samples)
    L_obs = np.empty(n_samples)
    L_hat = np.empty(n_samples)
    tau = 0.0
    for k in range(n_samples):
        mid = alip_transition(params, state, dt / 2.0)
        nxt = alip_transition(params, state, dt)
        tau += dt
        if tau >= T - 1e-12:
            # End of step: place deadbeat for L_des and exchange feet.
            L_end = predict_L_end(params, nxt.x_c, nxt.L, 0.0)
            p = foot_placement_deadbeat(params, L_end, L_des, T)
            nxt = alip_reset(nxt, p_sw_x=p, p_st_x=nxt.x_c, v_z=0.0, m=params.m)
            tau = 0.0
        ks = kf_predict(ks, mid.x_c, 0.0, params)
        obs = nxt.L + sigma * rng.standard_normal()
        ks = kf_correct(ks, obs)
        state = nxt
        L_true[k] = state.L
        L_obs[k] = obs
        L_hat[k] = ks.L_hat
    return {"t": t, "L_true": L_true, "L_obs": L_obs, "L_hat": L_hat}
