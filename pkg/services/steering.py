"""
Steering service for the reversibility toolkit.

Synthesizes the minimal-energy unitary perturbation that carries a freely
evolved state exactly onto a nearby target, and verifies it by integrating
the perturbed Schroedinger equation.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from services.errors import (
    DimensionError,
    NearOrthogonalError,
    PreconditionError,
    TimeOrderError,
    WindowError,
)
from services.qstate import (
    FreePropagator,
    HermitianMatrix,
    ProjectiveState,
    UnitaryMatrix,
    dagger,
    fs_distance,
    operator_norm,
    unitary_log,
)
from utils.logger import setup_logger


logger = setup_logger(__name__)

ORTHOGONAL_MARGIN = 1e-9
ZERO_ANGLE_TOL = 1e-15
MIN_ODE_STEPS = 100


@dataclass(frozen=True, eq=False)
class SteeringPlan:
    """
    Rank-2 rotation generator K and perturbation H_tilde for one window.

    The perturbation acts on (tau, tau1); tau0 is the start of the unitary
    segment. closed_form_V = e^K U(tau1, tau).
    """

    K: np.ndarray
    H_tilde: HermitianMatrix
    tau0: float
    window: Tuple[float, float]
    delta: float
    closed_form_V: UnitaryMatrix
    cost: float
    source: ProjectiveState
    target: ProjectiveState
    w: np.ndarray
    v_aligned: np.ndarray

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]

    @property
    def instantaneous_norm(self) -> float:
        """sup_t ||Delta H(t)|| = delta / duration."""
        return self.delta / self.duration

    def to_dict(self) -> dict:
        return {
            'K': self.K,
            'H_tilde': self.H_tilde,
            'tau0': self.tau0,
            'window': list(self.window),
            'delta': self.delta,
            'cost': self.cost,
            'instantaneous_norm': self.instantaneous_norm,
            'closed_form_V': self.closed_form_V,
            'source': self.source.amplitudes,
            'target': self.target.amplitudes,
        }


@dataclass(frozen=True)
class IntegrationResult:
    """Residuals of one ODE verification."""

    achieved_error: float
    propagator_error: float
    integrated_cost: float
    steps: int

    def to_dict(self) -> dict:
        return {
            'achieved_error': self.achieved_error,
            'propagator_error': self.propagator_error,
            'integrated_cost': self.integrated_cost,
            'steps': self.steps,
        }


def _rotation(w: np.ndarray, p_hat: np.ndarray, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    K = theta (|p><w| - |w><p|) and its exponential in closed form.

    K acts as a plane rotation on span{w, p}; R = e^K fixes the complement.
    """
    gen = np.outer(p_hat, np.conj(w)) - np.outer(w, np.conj(p_hat))
    plane = np.outer(w, np.conj(w)) + np.outer(p_hat, np.conj(p_hat))
    rotation = np.eye(w.size, dtype=complex) + np.sin(theta) * gen + (np.cos(theta) - 1.0) * plane
    return theta * gen, rotation


def synthesize_steering(
    u: ProjectiveState,
    hamiltonian: HermitianMatrix,
    tau0: float,
    tau: float,
    tau1: float,
    v: ProjectiveState,
    propagator: Optional[FreePropagator] = None
) -> SteeringPlan:
    """
    Build the steering plan carrying [U(tau1, tau0) u] onto [v].

    Args:
        u: State at tau0
        hamiltonian: Free Hamiltonian H
        tau0: Start of the unitary segment
        tau: Start of the perturbation window
        tau1: End of the perturbation window
        v: Target state at tau1
        propagator: Cached propagator for H (built when omitted)

    Returns:
        SteeringPlan with cost equal to the FS angle between image and target

    Raises:
        TimeOrderError: Unless 0 < tau0 <= tau < tau1
        NearOrthogonalError: If the FS angle is within 1e-9 of pi/2
    """
    if not 0 < tau0 <= tau < tau1:
        raise TimeOrderError(f"Steering needs 0 < tau0 <= tau < tau1, got ({tau0}, {tau}, {tau1})")
    prop = propagator if propagator is not None else FreePropagator(hamiltonian)
    if not (u.dim == v.dim == prop.hamiltonian.shape[0]):
        raise DimensionError(
            f"State dims {u.dim}, {v.dim} and Hamiltonian dim {prop.hamiltonian.shape[0]} disagree"
        )

    w = prop(tau1, tau0) @ u.amplitudes
    w = w / np.linalg.norm(w)
    overlap = np.vdot(w, v.amplitudes)
    v_aligned = v.amplitudes * (np.exp(-1j * np.angle(overlap)) if abs(overlap) > 0 else 1.0)

    c = float(np.real(np.vdot(w, v_aligned)))
    p = v_aligned - c * w
    s = float(np.linalg.norm(p))
    delta = float(np.arctan2(s, c))
    if delta >= np.pi / 2 - ORTHOGONAL_MARGIN:
        raise NearOrthogonalError(f"Target at FS angle {delta:.12g}, too close to pi/2")

    dim = u.dim
    remaining = prop(tau1, tau)
    duration = tau1 - tau
    if s < ZERO_ANGLE_TOL:
        K = np.zeros((dim, dim), dtype=complex)
        h_tilde = np.zeros((dim, dim), dtype=complex)
        rotation = np.eye(dim, dtype=complex)
        delta = 0.0
    else:
        K, rotation = _rotation(w, p / s, delta)
        h_tilde = unitary_log(dagger(remaining) @ rotation @ remaining) / duration

    closed_form_v = rotation @ remaining
    plan = SteeringPlan(
        K=K,
        H_tilde=h_tilde,
        tau0=float(tau0),
        window=(float(tau), float(tau1)),
        delta=delta,
        closed_form_V=closed_form_v,
        cost=operator_norm(h_tilde) * duration,
        source=u,
        target=v,
        w=w,
        v_aligned=v_aligned,
    )
    logger.debug(f"Steering plan on ({tau}, {tau1}): delta={delta:.6g}, cost={plan.cost:.6g}")
    return plan


def perturbation_at(
    plan: SteeringPlan,
    hamiltonian: HermitianMatrix,
    t: float,
    propagator: Optional[FreePropagator] = None
) -> HermitianMatrix:
    """
    Delta H(t) = U(t, tau) H_tilde U(t, tau)^dagger.

    Raises:
        WindowError: If t lies outside the plan window
    """
    tau, tau1 = plan.window
    if not tau <= t <= tau1:
        raise WindowError(f"t={t} outside steering window [{tau}, {tau1}]")
    prop = propagator if propagator is not None else FreePropagator(hamiltonian)
    u_t = prop(t, tau)
    return u_t @ plan.H_tilde @ dagger(u_t)


def _integrate(
    plan: SteeringPlan,
    prop: FreePropagator,
    steps: int
) -> Tuple[np.ndarray, float]:
    """Classical RK4 for V' = -i (H + Delta H(t)) V on the window, with Simpson cost on the same grid."""
    tau, tau1 = plan.window
    h = (tau1 - tau) / steps
    dim = plan.H_tilde.shape[0]
    base = prop.hamiltonian

    def perturbation(t: float) -> np.ndarray:
        u_t = prop(t, tau)
        return u_t @ plan.H_tilde @ dagger(u_t)

    V = np.eye(dim, dtype=complex)
    cost = 0.0
    t = tau
    dh_start = perturbation(t)
    for _ in range(steps):
        dh_mid = perturbation(t + h / 2)
        dh_end = perturbation(t + h)
        g_start, g_mid, g_end = base + dh_start, base + dh_mid, base + dh_end
        k1 = -1j * g_start @ V
        k2 = -1j * g_mid @ (V + h / 2 * k1)
        k3 = -1j * g_mid @ (V + h / 2 * k2)
        k4 = -1j * g_end @ (V + h * k3)
        V = V + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        cost += h / 6 * (operator_norm(dh_start) + 4 * operator_norm(dh_mid) + operator_norm(dh_end))
        t += h
        dh_start = dh_end
    return V, cost


def verify_steering_by_integration(
    plan: SteeringPlan,
    hamiltonian: HermitianMatrix,
    steps: int = 1000,
    propagator: Optional[FreePropagator] = None
) -> IntegrationResult:
    """
    Integrate the perturbed dynamics over the window and compare with the closed form.

    Args:
        plan: Plan to verify
        hamiltonian: Free Hamiltonian H
        steps: Fixed RK4 steps (>= 100)

    Returns:
        IntegrationResult with the FS error of the achieved state, the operator
        norm distance to closed_form_V and the quadrature of the cost integral
    """
    if steps < MIN_ODE_STEPS:
        raise PreconditionError(f"ODE verification needs at least {MIN_ODE_STEPS} steps, got {steps}")
    prop = propagator if propagator is not None else FreePropagator(hamiltonian)
    v_num, cost = _integrate(plan, prop, steps)

    tau, _ = plan.window
    start = prop(tau, plan.tau0) @ plan.source.amplitudes
    achieved = ProjectiveState(v_num @ start)
    return IntegrationResult(
        achieved_error=fs_distance(achieved, plan.target),
        propagator_error=operator_norm(v_num - plan.closed_form_V),
        integrated_cost=cost,
        steps=steps,
    )


def convergence_order(
    plan: SteeringPlan,
    hamiltonian: HermitianMatrix,
    steps_ladder: Sequence[int] = (100, 200, 400)
) -> float:
    """
    Empirical order of the integrator: slope of log error against log step size.

    The ladder should keep errors well above roundoff.
    """
    if len(steps_ladder) < 2:
        raise PreconditionError("Convergence ladder needs at least two step counts")
    prop = FreePropagator(hamiltonian)
    errors = []
    for steps in steps_ladder:
        v_num, _ = _integrate(plan, prop, steps)
        errors.append(operator_norm(v_num - plan.closed_form_V))
    sizes = np.array([plan.duration / n for n in steps_ladder])
    slope, _ = np.polyfit(np.log(sizes), np.log(errors), 1)
    logger.debug(f"RK4 errors {errors} over steps {list(steps_ladder)}: order {slope:.3f}")
    return float(slope)
