"""Newton-Raphson power flow in polar coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SLACK, PV, PQ = "slack", "pv", "pq"


class PowerFlowError(RuntimeError):
    pass


@dataclass
class PowerFlowResult:
    bus_names: list[str]
    V: np.ndarray  # complex bus voltages
    S: np.ndarray  # complex net injections
    iterations: int
    mismatch: float
    adjusted: dict = field(default_factory=dict)

    @property
    def vm(self):
        return np.abs(self.V)

    @property
    def va_deg(self):
        return np.degrees(np.angle(self.V))

    def bus(self, name: str) -> int:
        return self.bus_names.index(name)


def newton_raphson(Y, types, P, Q, Vm, Va=None, tol=1e-10, max_iter=50):
    """Solve the bus mismatch equations.

    ``P``/``Q`` are specified net injections (used where the bus type makes
    them unknown-free), ``Vm`` holds magnitudes for slack and PV buses and
    ``Va`` the slack angle. Iterates until the infinity-norm mismatch is
    below ``tol`` and then polishes with up to three further steps so the
    result is accurate to rounding.
    """
    n = len(types)
    types = list(types)
    vm = np.where([t in (SLACK, PV) for t in types], Vm, 1.0).astype(float)
    va = np.zeros(n) if Va is None else np.array(Va, dtype=float)
    pv_pq = [k for k in range(n) if types[k] != SLACK]
    pq = [k for k in range(n) if types[k] == PQ]
    if len(pv_pq) == n:
        raise PowerFlowError("power flow needs exactly one slack bus")

    def mismatch(vm, va):
        V = vm * np.exp(1j * va)
        S = V * np.conj(Y @ V)
        return np.concatenate([P[pv_pq] - S.real[pv_pq], Q[pq] - S.imag[pq]]), V

    polish = 0
    for it in range(max_iter + 1):
        F, V = mismatch(vm, va)
        err = np.abs(F).max() if F.size else 0.0
        if err < tol:
            if polish >= 3 or err < 1e-14:
                return V, err, it
            polish += 1
        if it == max_iter:
            break
        # Jacobian with respect to (va[pv_pq], vm[pq])
        I = Y @ V
        diagV = np.diag(V)
        dS_dva = 1j * diagV @ np.conj(np.diag(I) - Y @ diagV)
        dS_dvm = diagV @ np.conj(Y @ np.diag(V / np.abs(V))) + np.conj(np.diag(I)) @ np.diag(V / np.abs(V))
        J = np.block([
            [dS_dva.real[np.ix_(pv_pq, pv_pq)], dS_dvm.real[np.ix_(pv_pq, pq)]],
            [dS_dva.imag[np.ix_(pq, pv_pq)], dS_dvm.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(J, F)
        va[pv_pq] += dx[:len(pv_pq)]
        vm[pq] += dx[len(pv_pq):]
    raise PowerFlowError(f"no convergence in {max_iter} iterations (mismatch {err:.3e})")
