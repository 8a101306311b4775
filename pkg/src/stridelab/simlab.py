"""Hybrid simulation workbench: fixed-step integration with impact events,
scenario configs, walking controllers, and CSV/JSON artifact emission.

Determinism contract: fixed-step RK4 (default 1e-4 s) with bisection event
refinement (default 1e-9 s), hand-rolled so step placement and event times
are bit-reproducible across runs and platforms.  Reduced plants (ALIP / LIP)
switch steps on the clock at exactly T; the five-link plant switches on the
touchdown guard, armed from mid-step onward so liftoff never retriggers it.

Artifacts: trace.csv (per-sample), per_step.csv, events.csv, and a
scenario.json sidecar echoing the config plus sha256 checksums of every file
written.  Floats are written with 17 significant digits (lossless round-trip).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import biped as bp
from .biped import BipedState, PlanarBiped
from .control import (
    GaitCommand,
    VirtualConstraintSpec,
    _io_torque_core,
    foot_placement_asymptotic,
    foot_placement_vz_corrected,
    planar_outputs,
)
from .errors import GaitFailureError, NumericalError, ValidationError
from .pendulum import AlipState, LipState, PendulumParams, alip_reset, wedge

__all__ = [
    "IntegratorConfig",
    "ScenarioConfig",
    "ImpactEvent",
    "StepRecord",
    "HybridTrace",
    "SineHeightProfile",
    "WalkingController",
    "assemble_posture",
    "integrate_step",
    "run_scenario",
    "make_five_link_return_map",
    "lip_vs_alip_comparison",
    "write_csv",
]

_PLANTS = ("ALIP", "LIP", "FIVE_LINK")
_ARTIFACTS = ("trace", "per_step", "events")


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings: step_size [s] and the bisection tolerance on
    the impact time [s].  event_tolerance must be smaller than step_size."""

    step_size: float = 1e-4
    event_tolerance: float = 1e-9

    def __post_init__(self):
        if not (math.isfinite(self.step_size) and self.step_size > 0):
            raise ValidationError(
                f"IntegratorConfig.step_size: must be positive (got {self.step_size})"
            )
        if not (math.isfinite(self.event_tolerance) and self.event_tolerance > 0):
            raise ValidationError(
                f"IntegratorConfig.event_tolerance: must be positive "
                f"(got {self.event_tolerance})"
            )
        if self.event_tolerance >= self.step_size:
            raise ValidationError(
                "IntegratorConfig.event_tolerance: must be smaller than step_size "
                f"(got {self.event_tolerance} >= {self.step_size})"
            )

    def to_json_dict(self) -> dict:
        return {"step_size": self.step_size, "event_tolerance": self.event_tolerance}

    @classmethod
    def from_json(cls, doc: dict) -> "IntegratorConfig":
        return cls(
            step_size=float(doc.get("step_size", 1e-4)),
            event_tolerance=float(doc.get("event_tolerance", 1e-9)),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce a rollout.

    Attributes:
        plant: "ALIP", "LIP", or "FIVE_LINK".
        gait: per-step command (L_des, T, alpha, ...).
        constraints: virtual-constraint geometry/gains (five-link tracking).
        duration: number of steps (0 allowed: empty trace, header-only CSVs).
        integrator: RK4/event settings.
        seed: RNG seed echoed into artifacts (rollouts themselves are
            deterministic; the seed feeds noise-using demos).
        outputs: artifact names to write, subset of {trace, per_step, events}.
        initial_velocity: starting CoM x-velocity [m/s]; default = the
            commanded speed L_des/(m H).
        initial_com_x: starting CoM abscissa relative to the stance contact
            [m]; default = the steady-gait step-start value for the starting
            momentum (pass 0.0 to start centered over the contact).
        l_des_final: if set, L_des ramps linearly to this value across steps.
        ankle_amplitude: stance-ankle disturbance u_a = A sin(2 pi tau / T).
        z_amplitude: if > 0, the commanded CoM height follows
            H + a + a sin(2 pi tau / T - pi/2) each step (five-link only).
        model_doc: optional five-link model JSON override.
        placement_source: "L" (momentum placement) or "v" (velocity placement).
        placement_update: "continuous" (re-evaluate the placement at every
            torque evaluation) or "step_start" (commit it once per step from
            the fresh post-impact state).
    """

    plant: str
    gait: GaitCommand
    constraints: VirtualConstraintSpec
    duration: int
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    seed: int = 0
    outputs: tuple = _ARTIFACTS
    initial_velocity: float | None = None
    initial_com_x: float | None = None
    l_des_final: float | None = None
    ankle_amplitude: float = 0.0
    z_amplitude: float = 0.0
    model_doc: dict | None = None
    placement_source: str = "L"
    placement_update: str = "continuous"

    def __post_init__(self):
        if self.plant not in _PLANTS:
            raise ValidationError(
                f"ScenarioConfig.plant: must be one of {_PLANTS} (got {self.plant!r})"
            )
        if not isinstance(self.duration, int) or self.duration < 0:
            raise ValidationError(
                f"ScenarioConfig.duration: must be an integer >= 0 (got {self.duration!r})"
            )
        object.__setattr__(self, "outputs", tuple(self.outputs))
        for name in self.outputs:
            if name not in _ARTIFACTS:
                raise ValidationError(
                    f"ScenarioConfig.outputs: unknown artifact name {name!r} "
                    f"(allowed: {_ARTIFACTS})"
                )
        if self.placement_source not in ("L", "v"):
            raise ValidationError(
                f"ScenarioConfig.placement_source: must be 'L' or 'v' "
                f"(got {self.placement_source!r})"
            )
        if self.placement_update not in ("continuous", "step_start"):
            raise ValidationError(
                f"ScenarioConfig.placement_update: must be 'continuous' or "
                f"'step_start' (got {self.placement_update!r})"
            )
        for fname in ("ankle_amplitude", "z_amplitude"):
            v = getattr(self, fname)
            if not math.isfinite(v):
                raise ValidationError(f"ScenarioConfig.{fname}: non-finite value")
        if self.z_amplitude < 0:
            raise ValidationError("ScenarioConfig.z_amplitude: must be >= 0")

    def to_json_dict(self) -> dict:
        doc = {
            "plant": self.plant,
            "gait": self.gait.to_json_dict(),
            "constraints": self.constraints.to_json_dict(),
            "duration": self.duration,
            "integrator": self.integrator.to_json_dict(),
            "seed": self.seed,
            "outputs": list(self.outputs),
            "ankle_amplitude": self.ankle_amplitude,
            "z_amplitude": self.z_amplitude,
            "placement_source": self.placement_source,
            "placement_update": self.placement_update,
        }
        if self.initial_velocity is not None:
            doc["initial_velocity"] = self.initial_velocity
        if self.initial_com_x is not None:
            doc["initial_com_x"] = self.initial_com_x
        if self.l_des_final is not None:
            doc["l_des_final"] = self.l_des_final
        if self.model_doc is not None:
            doc["model"] = self.model_doc
        return doc

    @classmethod
    def from_json(cls, doc) -> "ScenarioConfig":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        if not isinstance(doc, dict):
            raise ValidationError("ScenarioConfig.from_json: expected a JSON object")
        missing = [k for k in ("plant", "gait", "constraints", "duration") if k not in doc]
        if missing:
            raise ValidationError(f"ScenarioConfig.from_json: missing fields {missing}")
        duration = doc["duration"]
        if isinstance(duration, float) and duration.is_integer():
            duration = int(duration)
        return cls(
            plant=str(doc["plant"]),
            gait=GaitCommand.from_json(doc["gait"]),
            constraints=VirtualConstraintSpec.from_json(doc["constraints"]),
            duration=duration,
            integrator=IntegratorConfig.from_json(doc.get("integrator", {})),
            seed=int(doc.get("seed", 0)),
            outputs=tuple(doc.get("outputs", _ARTIFACTS)),
            initial_velocity=(
                float(doc["initial_velocity"]) if "initial_velocity" in doc else None
            ),
            initial_com_x=(float(doc["initial_com_x"]) if "initial_com_x" in doc else None),
            l_des_final=(float(doc["l_des_final"]) if "l_des_final" in doc else None),
            ankle_amplitude=float(doc.get("ankle_amplitude", 0.0)),
            z_amplitude=float(doc.get("z_amplitude", 0.0)),
            model_doc=doc.get("model"),
            placement_source=str(doc.get("placement_source", "L")),
            placement_update=str(doc.get("placement_update", "continuous")),
        )

    def build_model(self) -> PlanarBiped:
        return PlanarBiped.from_json(self.model_doc) if self.model_doc else PlanarBiped.default()


@dataclass
class ImpactEvent:
    """One recorded foot exchange: absolute time, pre/post states, momenta
    about old/new contacts, CoM velocity at touchdown, the displacement
    p_2to1 = (old contact - new contact), contact impulse (five-link), and
    the placement in effect."""

    step: int
    t: float
    state_minus: object
    state_plus: object
    L_minus: float
    L_plus: float
    v_c_minus: np.ndarray
    p_2to1: np.ndarray
    impulse: np.ndarray | None
    placement: float


@dataclass
class StepRecord:
    """Per-step summary row."""

    step: int
    t_start: float
    t_end: float
    L_end_minus: float
    L_start_plus: float
    placement: float
    mean_vx: float


@dataclass
class HybridTrace:
    """Sampled rollout: column arrays in `samples`, impact `events`, and
    `per_step` summaries.  Column sets: reduced plants (t, step, x_c, L,
    vx_c); five-link adds q/dq, CoM z and vz, L_c, output errors y*, torques
    u*."""

    samples: dict
    events: list
    per_step: list
    meta: dict


@dataclass(frozen=True)
class SineHeightProfile:
    """Commanded CoM height z(tau) = H + a + a sin(2 pi tau / T - pi/2):
    one oscillation per step, starting each step at the minimum H."""

    H: float
    amplitude: float
    T: float

    def __call__(self, tau: float) -> tuple[float, float, float]:
        w = 2.0 * math.pi / self.T
        ph = w * tau - math.pi / 2.0
        a = self.amplitude
        return (
            self.H + a + a * math.sin(ph),
            a * w * math.cos(ph),
            -a * w * w * math.sin(ph),
        )


# ---------------------------------------------------------------------------
# walking controller (five-link stance phase)
# ---------------------------------------------------------------------------


class WalkingController:
    """Stance-phase controller: momentum-based foot placement feeding the
    four-output virtual-constraint tracker.

    Holds the per-step context (step-start outputs, current placement target,
    per-step L_des); one instance belongs to exactly one rollout.
    """

    def __init__(
        self,
        model: PlanarBiped,
        gait: GaitCommand,
        constraints: VirtualConstraintSpec,
        z_profile: Callable[[float], Sequence[float]] | None = None,
        ankle_fn: Callable[[float], float] | None = None,
        placement_source: str = "L",
        placement_law: str = "asymptotic",
        placement_update: str = "continuous",
    ):
        if placement_source not in ("L", "v"):
            raise ValidationError(
                f"WalkingController: placement_source must be 'L' or 'v' "
                f"(got {placement_source!r})"
            )
        if placement_law not in ("asymptotic", "vz"):
            raise ValidationError(
                f"WalkingController: placement_law must be 'asymptotic' or 'vz' "
                f"(got {placement_law!r})"
            )
        if placement_update not in ("continuous", "step_start"):
            raise ValidationError(
                f"WalkingController: placement_update must be 'continuous' or "
                f"'step_start' (got {placement_update!r})"
            )
        self.model = model
        self.gait = gait
        self.vc = constraints
        self.params = PendulumParams(m=model.m_total, H=constraints.H, g=model.g)
        self.z_profile = z_profile
        self.ankle_fn = ankle_fn
        self.placement_source = placement_source
        self.placement_law = placement_law
        self.placement_update = placement_update
        self.L_des = gait.L_des
        self._Kp = np.diag(constraints.Kp)
        self._Kd = np.diag(constraints.Kd)
        self._h0_start = np.zeros(4)
        self.p_des = 0.0
        # Kinematic workspace clamp on the placement target: the swing foot
        # cannot land beyond the leg's reach from the hip (which rides a
        # little above the CoM for humanoid mass splits).  Keeps transient
        # corrections from demanding a fully straightened knee, where the
        # output decoupling matrix degenerates.
        leg_reach = 0.97 * (model.thigh.length + model.shin.length)
        hip_z = constraints.H + 0.08
        self._p_max = math.sqrt(max(leg_reach * leg_reach - hip_z * hip_z, 1e-6))

    def set_target(self, L_des: float) -> None:
        self.L_des = float(L_des)

    def on_step_start(self, state: BipedState) -> None:
        h0, _ = planar_outputs(self.model, state.q)
        self._h0_start = h0.copy()
        if self.placement_update == "step_start":
            # Decide the whole step's placement from the fresh post-impact
            # state; the reference curve then stays fixed for the step.
            terms = bp._dyn_terms(self.model, state.q, state.dq)
            self.p_des = self._placement(state.q, state.dq, terms, 0.0)
        else:
            self.p_des = float(h0[2])  # refined immediately by the first torque eval

    def _placement(self, q: np.ndarray, dq: np.ndarray, terms, tau: float) -> float:
        D_q = terms[0]
        _, s, c, dtheta = terms[3]
        p = self.params
        x_c = float(self.model.w_vec @ s) / self.model.m_total
        remaining = max(self.gait.T - tau, 0.0)
        ell = p.ell
        sh, ch = math.sinh(ell * remaining), math.cosh(ell * remaining)
        if self.placement_source == "v":
            vx = float(self.model.w_vec @ (c * dtheta)) / self.model.m_total
            v_hat = ell * sh * x_c + ch * vx
            v_des = self.L_des / (p.m * p.H)
            shT = math.sinh(ell * self.gait.T)
            chT = math.cosh(ell * self.gait.T)
            raw = ((1.0 - self.gait.alpha) * v_des + (self.gait.alpha - chT) * v_hat) / (
                ell * shT
            )
            return self._clamp(raw)
        L = float(D_q[0] @ dq)  # momentum conjugate to q0 = L about the contact
        L_hat = p.m * p.H * ell * sh * x_c + ch * L
        if self.placement_law == "vz":
            x_hat = ch * x_c + sh * L / (p.m * p.H * ell)
            vz = -float(self.model.w_vec @ (s * dtheta)) / self.model.m_total
            return self._clamp(
                foot_placement_vz_corrected(p, L_hat, x_hat, vz, self.L_des, self.gait.T)
            )
        return self._clamp(
            foot_placement_asymptotic(p, L_hat, self.L_des, self.gait.T, self.gait.alpha)
        )

    def _clamp(self, p_raw: float) -> float:
        return min(max(p_raw, -self._p_max), self._p_max)

    def _reference(self, s_phase: float, tau: float):
        from .control import virtual_constraint_derivatives

        h_d, dh_d, ddh_d = virtual_constraint_derivatives(
            self.vc, self.gait, s_phase, self._h0_start, self.p_des
        )
        if self.z_profile is not None:
            z, dz, ddz = self.z_profile(min(tau, self.gait.T))[:3]
            h_d = h_d.copy()
            dh_d = dh_d.copy()
            ddh_d = ddh_d.copy()
            h_d[1], dh_d[1], ddh_d[1] = z, dz, ddz
        return h_d, dh_d, ddh_d

    def torques_from_terms(self, q, dq, tau, terms):
        """(u, y, X) at in-step time tau, given precomputed dynamics terms.
        X is the mass-matrix solve block reused by the plant derivative."""
        if self.placement_update == "continuous":
            self.p_des = self._placement(q, dq, terms, tau)
        s_phase = min(tau / self.gait.T, 1.0)
        h_d, dh_d, ddh_d = self._reference(s_phase, tau)
        u, X, y, _dy = _io_torque_core(
            self.model, q, dq, terms, h_d, dh_d, ddh_d, self._Kp, self._Kd
        )
        return u, y, X

    def torques(self, state: BipedState, tau: float) -> np.ndarray:
        """Public single-shot evaluation (recomputes dynamics terms)."""
        terms = bp._dyn_terms(self.model, state.q, state.dq)
        u, _, _ = self.torques_from_terms(state.q, state.dq, tau, terms)
        return u

    def ankle(self, tau: float) -> float:
        return float(self.ankle_fn(tau)) if self.ankle_fn is not None else 0.0


# ---------------------------------------------------------------------------
# posture assembly (initial conditions)
# ---------------------------------------------------------------------------


def _two_link_ik(hip, foot, l_th, l_sh):
    """Absolute (thigh, shin) angles for a leg from foot to hip, knee bent
    forward (+x).  Raises NumericalError if the target is out of reach."""
    w = np.asarray(hip, dtype=float) - np.asarray(foot, dtype=float)
    r = float(np.hypot(w[0], w[1]))
    if r > l_th + l_sh - 1e-9 or r < abs(l_th - l_sh) + 1e-9:
        raise NumericalError(f"_two_link_ik: hip-foot distance {r:.4f} unreachable")
    phi = math.atan2(w[0], w[1])
    cos_a = (l_sh * l_sh + r * r - l_th * l_th) / (2.0 * l_sh * r)
    a = math.acos(max(-1.0, min(1.0, cos_a)))
    theta_shin = phi + a
    knee = np.asarray(foot, dtype=float) + l_sh * np.array(
        [math.sin(theta_shin), math.cos(theta_shin)]
    )
    d = np.asarray(hip, dtype=float) - knee
    theta_thigh = math.atan2(d[0], d[1])
    return theta_thigh, theta_shin


def assemble_posture(
    model: PlanarBiped,
    com_x: float,
    com_z: float,
    swing_foot_x: float,
    swing_foot_z: float = 0.0,
    com_velocity=(0.0, 0.0),
    torso_pitch: float = 0.0,
    swing_foot_velocity=None,
) -> BipedState:
    """Kinematically consistent state: CoM at (com_x, com_z), swing foot at
    (swing_foot_x, swing_foot_z), torso at torso_pitch, stance foot at the
    origin; CoM velocity as given with the torso pitch rate zero.

    With swing_foot_velocity=None (default) the joint rates are the
    minimum-norm solution of the three velocity constraints, which stays
    tame at any walking speed; passing a 2-vector pins the swing-foot
    velocity too (five constraints, exact solve).

    Uses leg IK for the initial guess and Newton iterations on the exact CoM
    constraint.  Raises NumericalError if the posture is unreachable.
    """
    l_th, l_sh = model.thigh.length, model.shin.length
    # Initial guess: hip a bit above the CoM (torso mass pulls the CoM up,
    # legs pull it down; the offset only needs to land in Newton's basin).
    hip_guess = np.array([com_x, com_z + 0.07])
    th1, th0 = _two_link_ik(hip_guess, (0.0, 0.0), l_th, l_sh)
    th4_t, th4_s = _two_link_ik(hip_guess, (swing_foot_x, swing_foot_z), l_th, l_sh)
    theta = np.array([th0, th1, torso_pitch, th4_t, th4_s])
    q = model.M_inv @ theta

    target = np.array([torso_pitch, com_x, com_z, swing_foot_x, swing_foot_z])
    for _ in range(60):
        com = bp.com_position(model, q)
        sw = bp.swing_foot_position(model, q)
        f = np.array([model.M_map[2] @ q, com[0], com[1], sw[0], sw[1]]) - target
        if np.max(np.abs(f)) < 1e-12:
            break
        J = np.vstack(
            [
                model.M_map[2:3, :],
                bp.com_jacobian(model, q),
                bp.swing_foot_jacobian(model, q),
            ]
        )
        try:
            dq_step = np.linalg.solve(J, f)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("assemble_posture: singular posture Jacobian") from exc
        q = q - dq_step
    else:
        raise NumericalError(
            f"assemble_posture: Newton did not converge (residual {np.max(np.abs(f)):.2e})"
        )

    if swing_foot_velocity is None:
        J = np.vstack([model.M_map[2:3, :], bp.com_jacobian(model, q)])
        rates = np.array([0.0, com_velocity[0], com_velocity[1]])
        dq, *_ = np.linalg.lstsq(J, rates, rcond=None)
        if not np.all(np.isfinite(dq)):
            raise NumericalError("assemble_posture: degenerate velocity Jacobian")
    else:
        J = np.vstack(
            [
                model.M_map[2:3, :],
                bp.com_jacobian(model, q),
                bp.swing_foot_jacobian(model, q),
            ]
        )
        rates = np.array(
            [
                0.0,
                com_velocity[0],
                com_velocity[1],
                swing_foot_velocity[0],
                swing_foot_velocity[1],
            ]
        )
        try:
            dq = np.linalg.solve(J, rates)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("assemble_posture: singular velocity Jacobian") from exc
    return BipedState(q, dq)


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


def _five_link_rhs(model, controller, tau, y):
    """Closed-loop derivative; returns (ydot, u, y_out) sharing one mass-matrix
    solve between controller and plant."""
    q, dq = y[:5], y[5:]
    terms = bp._dyn_terms(model, q, dq)
    u, y_out, X = controller.torques_from_terms(q, dq, tau, terms)
    u_a = controller.ankle(tau)
    ddq = X[:, :4] @ u + X[:, 4] + X[:, 5] * u_a
    return np.concatenate([dq, ddq]), u, y_out


def _rk4_advance(model, controller, tau, y, h, k1=None):
    """One RK4 step of the five-link closed loop from (tau, y) by h."""
    if k1 is None:
        k1 = _five_link_rhs(model, controller, tau, y)[0]
    k2 = _five_link_rhs(model, controller, tau + h / 2.0, y + (h / 2.0) * k1)[0]
    k3 = _five_link_rhs(model, controller, tau + h / 2.0, y + (h / 2.0) * k2)[0]
    k4 = _five_link_rhs(model, controller, tau + h, y + h * k3)[0]
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _swing_z(model, y) -> float:
    theta = model.M_map @ y[:5]
    return float(model.b_sw @ np.cos(theta))


def integrate_step(model, controller, state, T, integrator: IntegratorConfig, recorder=None):
    """Integrate one step; returns (pre-switch state, switch time).

    Five-link (PlanarBiped) plants run closed-loop RK4 and locate the
    touchdown guard crossing by bisection to integrator.event_tolerance; the
    guard is armed at tau >= T/2 (the swing trajectory peaks mid-step).  If no
    impact occurs by 2T a GaitFailureError is raised.  Reduced plants (pass
    PendulumParams as `model`, AlipState/LipState as `state`) switch at
    exactly tau = T; `controller` may provide `ankle(tau)` for a disturbance
    torque.  `recorder(tau, y, u, y_out)` is called at every accepted grid
    point after the first (and at the event time); for the five-link plant
    it also receives `ydot=` (the state derivative at that point, so
    integrand-exact rates need no refactoring downstream).
    """
    if isinstance(model, PlanarBiped):
        # Divergence is detected by explicit finite/residual checks; silence
        # the overflow warnings numpy would emit on the way there.
        with np.errstate(over="ignore", invalid="ignore"):
            return _integrate_step_five_link(model, controller, state, T, integrator, recorder)
    if isinstance(model, PendulumParams):
        return _integrate_step_reduced(model, controller, state, T, integrator, recorder)
    raise ValidationError(f"integrate_step: unsupported model type {type(model)!r}")


def _integrate_step_five_link(model, controller, state, T, cfg, recorder):
    h = cfg.step_size
    tau = 0.0
    y = np.concatenate([state.q, state.dq])
    rhs, u, y_out = _five_link_rhs(model, controller, tau, y)
    if recorder is not None:
        recorder(tau, y, u, y_out, ydot=rhs, first=True)
    pz_prev = _swing_z(model, y)
    while tau < 2.0 * T - 1e-12:
        y_next = _rk4_advance(model, controller, tau, y, h, k1=rhs)
        if not np.all(np.isfinite(y_next)):
            raise GaitFailureError(
                f"integrate_step: state diverged at tau = {tau + h:.4f} s"
            )
        tau_next = tau + h
        pz_next = _swing_z(model, y_next)
        armed = tau_next >= 0.5 * T and pz_prev > 0.0
        if armed and pz_next <= 0.0:
            # Bisect the sub-step length until the crossing time is pinned.
            lo, hi = 0.0, h
            y_hi = y_next
            while hi - lo > cfg.event_tolerance:
                mid = 0.5 * (lo + hi)
                y_mid = _rk4_advance(model, controller, tau, y, mid, k1=rhs)
                if _swing_z(model, y_mid) <= 0.0:
                    hi, y_hi = mid, y_mid
                else:
                    lo = mid
            t_event = tau + hi
            rhs_e, u_e, y_out_e = _five_link_rhs(model, controller, t_event, y_hi)
            if recorder is not None:
                recorder(t_event, y_hi, u_e, y_out_e, ydot=rhs_e)
            return BipedState(y_hi[:5], y_hi[5:]), t_event
        rhs, u, y_out = _five_link_rhs(model, controller, tau_next, y_next)
        if recorder is not None:
            recorder(tau_next, y_next, u, y_out, ydot=rhs)
        tau, y, pz_prev = tau_next, y_next, pz_next
    raise GaitFailureError(
        f"integrate_step: no impact within 2T = {2 * T:.3f} s (gait failure)"
    )


def _integrate_step_reduced(params, controller, state, T, cfg, recorder):
    is_alip = isinstance(state, AlipState)
    if not is_alip and not isinstance(state, LipState):
        raise ValidationError(
            f"integrate_step: reduced state must be AlipState or LipState "
            f"(got {type(state)!r})"
        )
    mH = params.m * params.H

    def ankle(tau):
        return controller.ankle(tau) if controller is not None else 0.0

    if is_alip:
        def f(tau, y):
            return np.array([y[1] / mH, params.m * params.g * y[0] + ankle(tau)])

        y = np.array([state.x_c, state.L])
    else:
        def f(tau, y):
            return np.array([y[1], (params.g / params.H) * y[0] + ankle(tau) / mH])

        y = np.array([state.x_c, state.v_c])

    h = cfg.step_size
    n_full = int(math.floor(T / h + 1e-12))
    tau = 0.0
    if recorder is not None:
        recorder(tau, y, 0.0, None, first=True)
    for i in range(n_full):
        k1 = f(tau, y)
        k2 = f(tau + h / 2.0, y + (h / 2.0) * k1)
        k3 = f(tau + h / 2.0, y + (h / 2.0) * k2)
        k4 = f(tau + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tau = (i + 1) * h
        if recorder is not None:
            recorder(tau, y, ankle(tau), None)
    rem = T - tau
    if rem > 1e-12:
        k1 = f(tau, y)
        k2 = f(tau + rem / 2.0, y + (rem / 2.0) * k1)
        k3 = f(tau + rem / 2.0, y + (rem / 2.0) * k2)
        k4 = f(tau + rem, y + rem * k3)
        y = y + (rem / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if recorder is not None:
            recorder(T, y, ankle(T), None)
    if is_alip:
        out = AlipState(x_c=float(y[0]), L=float(y[1]), tau=state.tau)
    else:
        out = LipState(x_c=float(y[0]), v_c=float(y[1]), tau=state.tau)
    return out, T


# ---------------------------------------------------------------------------
# scenario runner
# ---------------------------------------------------------------------------


def _step_target(gait: GaitCommand, l_des_final, duration: int, k: int) -> float:
    """L_des commanded for the end of step k (linear ramp if configured)."""
    if l_des_final is None or duration <= 0:
        return gait.L_des
    frac = min(k, duration) / duration
    return gait.L_des + (l_des_final - gait.L_des) * frac


_REDUCED_COLS = ("t", "step", "x_c", "L", "vx_c")
_FIVE_COLS = (
    ("t", "step")
    + tuple(f"q{i}" for i in range(5))
    + tuple(f"dq{i}" for i in range(5))
    + ("x_c", "z_c", "vx_c", "vz_c", "L", "L_c", "dL_c")
    + ("y_torso", "y_height", "y_swing_x", "y_swing_z")
    + tuple(f"u{i}" for i in range(1, 5))
)


class _SampleBuffer:
    def __init__(self, columns):
        self.columns = columns
        self.rows: list[list[float]] = []

    def append(self, row):
        self.rows.append([float(v) for v in row])

    def as_dict(self) -> dict:
        if not self.rows:
            return {c: np.empty(0) for c in self.columns}
        arr = np.asarray(self.rows)
        return {c: arr[:, i].copy() for i, c in enumerate(self.columns)}


def run_scenario(config: ScenarioConfig, out_dir=None) -> HybridTrace:
    """Execute a scenario and (optionally) write its artifacts.

    Returns the HybridTrace; when out_dir is given, writes the artifacts
    selected in config.outputs plus a scenario.json sidecar with the config
    echo and sha256 checksums.  Same config (and seed) => bit-identical files.
    """
    if config.plant == "FIVE_LINK":
        trace = _run_five_link(config)
    else:
        trace = _run_reduced(config)
    if out_dir is not None:
        _write_artifacts(config, trace, Path(out_dir))
    return trace


def _run_reduced(config: ScenarioConfig) -> HybridTrace:
    gait = config.gait
    vc = config.constraints
    model = config.build_model()
    params = PendulumParams(m=model.m_total, H=vc.H, g=model.g)
    mH = params.m * params.H
    v0 = (
        config.initial_velocity
        if config.initial_velocity is not None
        else gait.L_des / mH
    )
    is_alip = config.plant == "ALIP"

    class _Ankle:
        def __init__(self, amp, T):
            self.amp, self.T = amp, T

        def ankle(self, tau):
            return self.amp * math.sin(2.0 * math.pi * tau / self.T)

    ankle = _Ankle(config.ankle_amplitude, gait.T) if config.ankle_amplitude else None

    ell = params.ell
    chT = math.cosh(ell * gait.T)
    shT = math.sinh(ell * gait.T)
    L0 = mH * v0
    x0 = (1.0 - chT) * L0 / (mH * ell * shT) if abs(L0) > 0 else 0.0
    state = AlipState(x_c=x0, L=L0) if is_alip else LipState(x_c=x0, v_c=v0)

    buf = _SampleBuffer(_REDUCED_COLS)
    events: list[ImpactEvent] = []
    per_step: list[StepRecord] = []
    t_base = 0.0
    for k in range(config.duration):
        step_samples: list[tuple[float, float, float]] = []

        def recorder(tau, y, u_a, y_out, first=False, _k=k, _t0=t_base):
            if first and _k > 0:
                return  # boundary sample already recorded by the previous step
            if is_alip:
                x_c, L, vx = y[0], y[1], y[1] / mH
            else:
                x_c, vx, L = y[0], y[1], mH * y[1]
            buf.append((_t0 + tau, _k, x_c, L, vx))
            step_samples.append((tau, x_c, vx))

        state_minus, t_imp = integrate_step(
            params, ankle, state, gait.T, config.integrator, recorder
        )
        target = _step_target(gait, config.l_des_final, config.duration, k + 1)
        if is_alip:
            L_minus = float(state_minus.L)
            v_minus = L_minus / mH
        else:
            v_minus = float(state_minus.v_c)
            L_minus = mH * v_minus
        # The placement LAW follows placement_source regardless of plant; on
        # point-mass plants L = m H v exactly, so the two laws coincide.
        if config.placement_source == "L":
            p = foot_placement_asymptotic(params, L_minus, target, gait.T, gait.alpha)
        else:
            v_des = target / mH
            p = ((1.0 - gait.alpha) * v_des + (gait.alpha - chT) * v_minus) / (ell * shT)
        if is_alip:
            state_plus = alip_reset(
                state_minus, p_sw_x=p, p_st_x=state_minus.x_c, v_z=0.0, m=params.m
            )
            L_plus = state_plus.L
        else:
            state_plus = LipState(x_c=p, v_c=v_minus)
            L_plus = mH * v_minus
        t_end = t_base + t_imp
        events.append(
            ImpactEvent(
                step=k,
                t=t_end,
                state_minus=state_minus,
                state_plus=state_plus,
                L_minus=float(L_minus),
                L_plus=float(L_plus),
                v_c_minus=np.array(
                    [L_minus / mH if is_alip else state_minus.v_c, 0.0]
                ),
                p_2to1=np.array([p - state_minus.x_c, 0.0]),
                impulse=None,
                placement=float(p),
            )
        )
        mean_vx = float(np.mean([s[2] for s in step_samples])) if step_samples else 0.0
        per_step.append(
            StepRecord(
                step=k,
                t_start=t_base,
                t_end=t_end,
                L_end_minus=float(L_minus),
                L_start_plus=float(L_plus),
                placement=float(p),
                mean_vx=mean_vx,
            )
        )
        state = state_plus
        t_base = t_end
    return HybridTrace(
        samples=buf.as_dict(),
        events=events,
        per_step=per_step,
        meta={"config": config.to_json_dict(), "params": {"m": params.m, "H": params.H}},
    )


def _initial_five_link_state(config: ScenarioConfig, model: PlanarBiped) -> BipedState:
    vc = config.constraints
    gait = config.gait
    params = PendulumParams(m=model.m_total, H=vc.H, g=model.g)
    mH = params.m * params.H
    v0 = (
        config.initial_velocity
        if config.initial_velocity is not None
        else gait.L_des / mH
    )
    ell = params.ell
    chT, shT = math.cosh(ell * gait.T), math.sinh(ell * gait.T)
    L0 = mH * v0
    if config.initial_com_x is not None:
        x_c0 = config.initial_com_x
    else:
        x_c0 = (1.0 - chT) * L0 / (mH * ell * shT)
    x_minus = chT * x_c0 + shT * L0 / (mH * ell)
    swing_x = x_c0 - x_minus  # previous stance foot, now swing, in stance frame
    if abs(swing_x) < 0.04:
        swing_x = -0.04
    return assemble_posture(
        model,
        com_x=x_c0,
        com_z=vc.H,
        swing_foot_x=swing_x,
        com_velocity=(v0, 0.0),
    )


def _run_five_link(config: ScenarioConfig) -> HybridTrace:
    model = config.build_model()
    gait = config.gait
    vc = config.constraints
    z_profile = (
        SineHeightProfile(vc.H, config.z_amplitude, gait.T) if config.z_amplitude else None
    )
    ankle_fn = (
        (lambda tau: config.ankle_amplitude * math.sin(2.0 * math.pi * tau / gait.T))
        if config.ankle_amplitude
        else None
    )
    controller = WalkingController(
        model,
        gait,
        vc,
        z_profile=z_profile,
        ankle_fn=ankle_fn,
        placement_source=config.placement_source,
        placement_update=config.placement_update,
    )
    state = _initial_five_link_state(config, model)
    buf = _SampleBuffer(_FIVE_COLS)
    events: list[ImpactEvent] = []
    per_step: list[StepRecord] = []
    t_base = 0.0
    for k in range(config.duration):
        controller.set_target(
            _step_target(gait, config.l_des_final, config.duration, k + 1)
        )
        controller.on_step_start(state)
        step_vx: list[float] = []

        def recorder(tau, y, u, y_out, ydot=None, first=False, _k=k, _t0=t_base):
            if first and _k > 0:
                return
            q, dq = y[:5], y[5:]
            cs = bp.centroidal(model, BipedState(q, dq))
            # Analytic rate of the centroidal momentum: differentiate
            # L_c = L - m*wedge(p_c, v_c) using dL/dt = m g x_c + u_a.
            a_c = bp.com_acceleration(model, q, dq, ydot[5:])
            dL_c = (
                model.m_total * model.g * cs.p_c[0]
                + controller.ankle(tau)
                - model.m_total * wedge(cs.p_c, a_c)
            )
            buf.append(
                (_t0 + tau, _k)
                + tuple(q)
                + tuple(dq)
                + (cs.p_c[0], cs.p_c[1], cs.v_c[0], cs.v_c[1], cs.L, cs.L_c, dL_c)
                + tuple(y_out)
                + tuple(u)
            )
            step_vx.append(float(cs.v_c[0]))

        state_minus, t_imp = integrate_step(
            model, controller, state, gait.T, config.integrator, recorder
        )
        cs_minus = bp.centroidal(model, state_minus)
        dtheta_plus, _vb, impulse = bp._impact_solution(model, state_minus)
        state_plus = bp.impact_map(model, state_minus)
        cs_plus = bp.centroidal(model, state_plus)
        p_sw = bp.swing_foot_position(model, state_minus.q)
        t_end = t_base + t_imp
        events.append(
            ImpactEvent(
                step=k,
                t=t_end,
                state_minus=state_minus,
                state_plus=state_plus,
                L_minus=float(cs_minus.L),
                L_plus=float(cs_plus.L),
                v_c_minus=cs_minus.v_c.copy(),
                p_2to1=np.array([-p_sw[0], -p_sw[1]]),
                impulse=np.asarray(impulse, dtype=float),
                placement=float(controller.p_des),
            )
        )
        per_step.append(
            StepRecord(
                step=k,
                t_start=t_base,
                t_end=t_end,
                L_end_minus=float(cs_minus.L),
                L_start_plus=float(cs_plus.L),
                placement=float(controller.p_des),
                mean_vx=float(np.mean(step_vx)) if step_vx else 0.0,
            )
        )
        state = state_plus
        t_base = t_end
    return HybridTrace(
        samples=buf.as_dict(),
        events=events,
        per_step=per_step,
        meta={
            "config": config.to_json_dict(),
            "params": {"m": model.m_total, "H": vc.H},
        },
    )


def make_five_link_return_map(
    model: PlanarBiped,
    gait: GaitCommand,
    constraints: VirtualConstraintSpec,
    integrator: IntegratorConfig,
    steps_per_return: int = 2,
) -> Callable[[np.ndarray], np.ndarray]:
    """The (q, dq) -> (q, dq) return map on the just-after-impact section.

    Each invocation runs its own controller context (fresh per-step state),
    so the callable is safe to evaluate at perturbed points in any order.
    """

    def step_map(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        state = BipedState(x[:5], x[5:])
        controller = WalkingController(model, gait, constraints)
        for _ in range(steps_per_return):
            controller.on_step_start(state)
            state_minus, _ = integrate_step(model, controller, state, gait.T, integrator)
            state = bp.impact_map(model, state_minus)
        return np.concatenate([state.q, state.dq])

    return step_map


def lip_vs_alip_comparison(config: ScenarioConfig) -> dict:
    """Twin rollouts from one initial condition: momentum-based placement
    ("L") versus velocity-based placement ("v"), same plant, same everything
    else.  Returns per-step placements, mean CoM velocities, end-of-step
    momenta, a per-step placement gap, and the two traces.

    Protocol: both controllers follow the same design — measure the state
    just after impact, predict the end-of-step value of their own model's
    momentum coordinate, and commit the step's placement from it
    (placement_update="step_start").  On the five-link plant the CoM starts
    centered over the contact.  The comparison isolates the choice of
    regulated variable: v_c loses information to the centroidal angular
    momentum at impact, L about the new contact does not.

    The "gap" entry holds, per step, |p("L") - p("v")| with both laws
    evaluated at the SAME post-impact states (those of the momentum-based
    rollout), so it measures pure law disagreement rather than trajectory
    divergence.  On a point-mass plant the gap vanishes identically; on the
    five-link it is positive and scales with the momentum carried by the
    legs.
    """
    import dataclasses

    if config.plant == "FIVE_LINK" and config.initial_com_x is None:
        # Comparison protocol: start with the CoM centered over the contact.
        config = dataclasses.replace(config, initial_com_x=0.0)
    config = dataclasses.replace(config, placement_update="step_start")
    out: dict = {"plant": config.plant, "summary": {}}
    traces = {}
    for source in ("L", "v"):
        cfg = dataclasses.replace(config, placement_source=source)
        traces[source] = run_scenario(cfg)
    out["traces"] = traces
    for source in ("L", "v"):
        tr = traces[source]
        out["summary"][source] = {
            "placements": [r.placement for r in tr.per_step],
            "mean_vx": [r.mean_vx for r in tr.per_step],
            "L_end": [r.L_end_minus for r in tr.per_step],
        }
    out["gap"] = _placement_gap(config, traces)
    out["mean_gap"] = float(np.mean(out["gap"])) if out["gap"] else 0.0
    return out


def _placement_gap(config: ScenarioConfig, traces: dict) -> list[float]:
    """Per-step |momentum-law placement - velocity-law placement| along the
    step-start states of the momentum-based rollout."""
    trace_L = traces["L"]
    if config.plant != "FIVE_LINK":
        # Point-mass plants evolve identically under either law (L = m H v
        # exactly), so the twin rollouts' states coincide and the recorded
        # placements are directly comparable.
        return [
            abs(a.placement - b.placement)
            for a, b in zip(trace_L.per_step, traces["v"].per_step)
        ]
    model = config.build_model()
    twin = WalkingController(
        model,
        config.gait,
        config.constraints,
        placement_source="v",
        placement_update="step_start",
    )
    states = [_initial_five_link_state(config, model)]
    states += [ev.state_plus for ev in trace_L.events[:-1]]
    gaps = []
    for k, (state, rec) in enumerate(zip(states, trace_L.per_step)):
        twin.set_target(_step_target(config.gait, config.l_des_final, config.duration, k + 1))
        terms = bp._dyn_terms(model, state.q, state.dq)
        p_v = twin._placement(state.q, state.dq, terms, 0.0)
        gaps.append(abs(rec.placement - p_v))
    return gaps


# ---------------------------------------------------------------------------
# artifact emission
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], rows) -> None:
    """Write a CSV with 17-significant-digit floats and a fixed column order."""
    import csv

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _trace_rows(trace: HybridTrace, columns):
    cols = [trace.samples[c] for c in columns]
    n = cols[0].shape[0] if cols else 0
    for i in range(n):
        yield [c[i] for c in cols]


_EVENT_COLS = (
    "step",
    "t",
    "L_minus",
    "L_plus",
    "vx_c_minus",
    "vz_c_minus",
    "p2to1_x",
    "p2to1_z",
    "impulse_x",
    "impulse_z",
    "placement",
)

_PER_STEP_COLS = (
    "step",
    "t_start",
    "t_end",
    "L_end_minus",
    "L_start_plus",
    "placement",
    "mean_vx",
)


def _write_artifacts(config: ScenarioConfig, trace: HybridTrace, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = _FIVE_COLS if config.plant == "FIVE_LINK" else _REDUCED_COLS
    written: dict[str, Path] = {}
    if "trace" in config.outputs:
        p = out_dir / "trace.csv"
        write_csv(p, columns, _trace_rows(trace, columns))
        written["trace.csv"] = p
    if "per_step" in config.outputs:
        p = out_dir / "per_step.csv"
        write_csv(
            p,
            _PER_STEP_COLS,
            (
                [r.step, r.t_start, r.t_end, r.L_end_minus, r.L_start_plus, r.placement, r.mean_vx]
                for r in trace.per_step
            ),
        )
        written["per_step.csv"] = p
    if "events" in config.outputs:
        p = out_dir / "events.csv"
        write_csv(
            p,
            _EVENT_COLS,
            (
                [
                    e.step,
                    e.t,
                    e.L_minus,
                    e.L_plus,
                    e.v_c_minus[0],
                    e.v_c_minus[1],
                    e.p_2to1[0],
                    e.p_2to1[1],
                    e.impulse[0] if e.impulse is not None else 0.0,
                    e.impulse[1] if e.impulse is not None else 0.0,
                    e.placement,
                ]
                for e in trace.events
            ),
        )
        written["events.csv"] = p
    sidecar = {
        "config": config.to_json_dict(),
        "files": {
            name: {
                "sha256": hashlib.sha256(p.read_bytes()).hexdigest(),
                "bytes": p.stat().st_size,
            }
            for name, p in written.items()
        },
    }
    (out_dir / "scenario.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
