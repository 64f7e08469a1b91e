"""First-order solution of the linearized system and determinacy tests.

The nonlinear residuals f(x_lag, x_t, x_lead, shocks) are differentiated
numerically at the steady state, giving A dx_{t+1} + B dx_t + C dx_{t-1}
+ D eps_t = 0 in level deviations. The stabilizing solution
dx_t = P dx_{t-1} + Q eps_t is recovered from an ordered QZ decomposition
of the pencil stacked on the predetermined subspace; determinacy follows
from comparing the number of non-explosive generalized eigenvalues with
the number of predetermined variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import ordqz, qz

from .calibration import Calibration, Variant
from .model import Model, SteadyState

JAC_TRUNC = 1e-12       # finite-difference entries below this are zeroed
UNIT_CIRCLE_TOL = 1e-6  # |eigenvalue| <= 1 + tol counts as non-explosive
BOUNDARY_BAND = 1e-4    # moduli this close to 1 trigger a boundary warning
SOLVENT_TOL = 1e-8

DETERMINATE = "determinate"
INDETERMINATE = "indeterminate"
EXPLOSIVE = "explosive"


class SolverError(RuntimeError):
    """Numerical failure inside the linear rational-expectations solver."""


@dataclass(frozen=True, eq=False)
class StructuralJacobians:
    """Dense derivative blocks of the residual system at the steady state.

    A = df/dx_lead, B = df/dx, C = df/dx_lag, D = df/dshocks, each with one
    row per equation.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    variable_names: tuple = ()
    equation_labels: tuple = ()

    def scaled_rows(self, row: int, factor: float) -> "StructuralJacobians":
        """Copy with one equation rescaled (classification must not care)."""
        blocks = []
        for M in (self.A, self.B, self.C, self.D):
            M = M.copy()
            M[row] *= factor
            blocks.append(M)
        return StructuralJacobians(*blocks, self.variable_names, self.equation_labels)


@dataclass(frozen=True, eq=False)
class EigenReport:
    """Moduli of the generalized eigenvalues and the determinacy counts."""

    moduli: np.ndarray
    n_stable: int
    n_predetermined: int
    boundary_warning: bool

    @property
    def n_explosive(self) -> int:
        return len(self.moduli) - self.n_stable


@dataclass(frozen=True, eq=False)
class LinearSolution:
    """Policy matrices of dx_t = P dx_{t-1} + Q eps_t plus diagnostics."""

    P: np.ndarray
    Q: np.ndarray
    classification: str
    eigen_report: EigenReport
    solvent_residual: float
    impact_residual: float

    @property
    def determinate(self) -> bool:
        return self.classification == DETERMINATE


def jacobians(cal: Calibration, variant: Variant = Variant(),
              ss: SteadyState | None = None) -> StructuralJacobians:
    """Differentiate the residual system at the steady state.

    Central differences with per-variable step max(1e-6, 1e-6*|x_i*|);
    the supplied steady state (if any) is only used as a cross-check since
    the model rederives and certifies its own.
    """
    model = Model(cal, variant)
    if ss is not None and np.max(np.abs(ss.values - model.ss.values)) > 1e-8:
        raise SolverError("supplied steady state disagrees with the model's")
    return jacobians_from_model(model)


def jacobians_from_model(model: Model) -> StructuralJacobians:
    base = model.ss.values
    n = model.index.n
    nshock = 4
    h = np.maximum(1e-6, 1e-6 * np.abs(base))
    h_shock = 1e-6

    ncol = 6 * n + 2 * nshock
    XL = np.repeat(base[:, None], ncol, axis=1)
    XC = XL.copy()
    XF = XL.copy()
    SH = np.zeros((nshock, ncol))
    blocks = {"lag": XL, "curr": XC, "lead": XF}
    col = 0
    for name in ("lead", "curr", "lag"):
        arr = blocks[name]
        for j in range(n):
            arr[j, col] += h[j]
            arr[j, col + 1] -= h[j]
            col += 2
    for k in range(nshock):
        SH[k, col] = h_shock
        SH[k, col + 1] = -h_shock
        col += 2

    res = model.residuals(XL, XC, XF, SH)
    if np.any(~np.isfinite(res)):
        eq, pt = map(int, np.argwhere(~np.isfinite(res))[0])
        blk, j = divmod(pt, 2)
        if blk < 3 * n:
            which, vj = divmod(blk, n)
            target = model.index.names[vj]
            slot = ("lead", "current", "lagged")[which]
            raise SolverError(
                f"non-finite derivative of equation '{model.equation_labels[eq]}' "
                f"with respect to {slot} {target!r}"
            )
        raise SolverError(
            f"non-finite derivative of equation '{model.equation_labels[eq]}' "
            f"with respect to a shock"
        )

    def diff(start, steps):
        width = len(steps)
        plus = res[:, start:start + 2 * width:2]
        minus = res[:, start + 1:start + 2 * width:2]
        return (plus - minus) / (2.0 * steps)

    A = diff(0, h)
    B = diff(2 * n, h)
    C = diff(4 * n, h)
    D = diff(6 * n, np.full(nshock, h_shock))
    for M in (A, B, C, D):
        M[np.abs(M) < JAC_TRUNC] = 0.0
    return StructuralJacobians(A, B, C, D, model.index.names, model.equation_labels)


def _state_columns(J: StructuralJacobians, n_predetermined: int,
                   state_indices=None) -> np.ndarray:
    if state_indices is not None:
        idx = np.asarray(state_indices, dtype=int)
        if len(idx) != n_predetermined:
            raise SolverError(
                f"{len(idx)} state indices supplied for n_predetermined = {n_predetermined}"
            )
        implied = np.flatnonzero(np.any(J.C != 0.0, axis=0))
        missing = set(implied) - set(idx.tolist())
        if missing:
            names = J.variable_names or tuple(map(str, range(J.C.shape[1])))
            raise SolverError(
                "lagged variables missing from the predetermined set: "
                + ", ".join(names[i] for i in sorted(missing))
            )
        return idx
    idx = np.flatnonzero(np.any(J.C != 0.0, axis=0))
    if len(idx) != n_predetermined:
        raise SolverError(
            f"C has {len(idx)} nonzero columns but n_predetermined = {n_predetermined}; "
            "pass state_indices explicitly"
        )
    return idx


def _pencil(J: StructuralJacobians, states: np.ndarray):
    """Stacked pencil Gamma0 E z_{t+1} = Gamma1 z_t for z = (s_{t-1}, x_t)."""
    n = J.A.shape[1]
    ns = len(states)
    sel = np.zeros((ns, n))
    sel[np.arange(ns), states] = 1.0
    G0 = np.block([
        [np.eye(ns), np.zeros((ns, n))],
        [np.zeros((n, ns)), J.A],
    ])
    G1 = np.block([
        [np.zeros((ns, ns)), sel],
        [-J.C[:, states], -J.B],
    ])
    return G0, G1


def _stable(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    # Dynamic root alpha/beta of det(Gamma1 - lam*Gamma0) = 0; non-explosive
    # means |alpha| <= (1 + tol)|beta| (zero roots stable, infinite explosive).
    return np.abs(alpha) <= (1.0 + UNIT_CIRCLE_TOL) * np.abs(beta)


def _moduli(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.abs(alpha) / np.abs(beta)
    m[np.abs(beta) == 0.0] = np.inf
    return m


def _classify_counts(n_stable: int, n_predetermined: int) -> str:
    if n_stable == n_predetermined:
        return DETERMINATE
    if n_stable > n_predetermined:
        return INDETERMINATE
    return EXPLOSIVE


def classify_determinacy(J: StructuralJacobians, n_predetermined: int,
                         state_indices=None) -> EigenReport:
    """Eigenvalue-count classification without building the solvent."""
    states = _state_columns(J, n_predetermined, state_indices)
    G0, G1 = _pencil(J, states)
    AA, BB, *_ = qz(G1, G0, output="complex")
    alpha, beta = np.diag(AA), np.diag(BB)
    moduli = _moduli(alpha, beta)
    n_stable = int(np.sum(_stable(alpha, beta)))
    boundary = bool(np.any(np.abs(moduli[np.isfinite(moduli)] - 1.0) < BOUNDARY_BAND))
    return EigenReport(np.sort(moduli), n_stable, n_predetermined, boundary)


def solve_linear_re(J: StructuralJacobians, n_predetermined: int,
                    state_indices=None) -> LinearSolution:
    """Stabilizing first-order solution via ordered QZ.

    Returns the solution only when the eigenvalue counts certify
    determinacy; otherwise P and Q are empty and only the classification
    and eigenvalue report are meaningful.
    """
    states = _state_columns(J, n_predetermined, state_indices)
    G0, G1 = _pencil(J, states)
    AA, BB, alpha, beta, _, Z = ordqz(G1, G0, sort=_stable, output="complex")
    moduli = _moduli(alpha, beta)
    n_stable = int(np.sum(_stable(alpha, beta)))
    boundary = bool(np.any(np.abs(moduli[np.isfinite(moduli)] - 1.0) < BOUNDARY_BAND))
    report = EigenReport(np.sort(moduli), n_stable, n_predetermined, boundary)
    classification = _classify_counts(n_stable, n_predetermined)

    n = J.A.shape[1]
    ns = len(states)
    if classification != DETERMINATE:
        empty = np.empty((0, 0))
        return LinearSolution(empty, empty, classification, report, np.nan, np.nan)

    Z11 = Z[:ns, :ns]
    Z21 = Z[ns:, :ns]
    cond = np.linalg.cond(Z11)
    if not np.isfinite(cond) or cond > 1e12:
        raise SolverError(
            "stable subspace is not spanned by the predetermined variables "
            f"(cond(Z11) = {cond:.3e}); no recursive solution exists"
        )
    G = Z21 @ np.linalg.inv(Z11)
    if np.max(np.abs(G.imag)) > 1e-8:
        raise SolverError("policy matrix has a non-negligible imaginary part")
    G = G.real
    P = np.zeros((n, n))
    P[:, states] = G

    solvent_residual = float(np.max(np.abs(J.A @ P @ P + J.B @ P + J.C)))
    if solvent_residual > SOLVENT_TOL:
        raise SolverError(f"solvent residual {solvent_residual:.3e} exceeds {SOLVENT_TOL:g}")
    lead_mat = J.A @ P + J.B
    try:
        Q = np.linalg.solve(lead_mat, -J.D)
    except np.linalg.LinAlgError as exc:
        raise SolverError("singular lead matrix A P + B; impact matrix undefined") from exc
    impact_residual = float(np.max(np.abs(lead_mat @ Q + J.D)))
    spectral = float(np.max(np.abs(np.linalg.eigvals(P)))) if n else 0.0
    if spectral > 1.0 + 1e-8:
        raise SolverError(f"spectral radius of P is {spectral:.6f} despite determinacy")
    return LinearSolution(P, Q, classification, report, solvent_residual, impact_residual)


def solve_model(model: Model) -> LinearSolution:
    """Convenience wrapper: differentiate and solve in one step."""
    J = jacobians_from_model(model)
    return solve_linear_re(J, model.n_predetermined, model.index.state_indices)


def classify_model(model: Model) -> EigenReport:
    J = jacobians_from_model(model)
    return classify_determinacy(J, model.n_predetermined, model.index.state_indices)


def dump_debug_csv(J: StructuralJacobians, report: EigenReport, directory) -> list:
    """Write A/B/C/D and the eigenvalue moduli as CSV for offline inspection."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, M in (("A", J.A), ("B", J.B), ("C", J.C), ("D", J.D)):
        path = directory / f"jacobian_{name}.csv"
        np.savetxt(path, M, delimiter=",", fmt="%.12g")
        written.append(path)
    path = directory / "eigenvalue_moduli.csv"
    np.savetxt(path, report.moduli, delimiter=",", fmt="%.12g")
    written.append(path)
    return written
