"""Calibration, household-type transition matrix, and model variants.

The economy has three household types: capitalists (K) trade bonds and
capital; savers (S) trade only bonds; hand-to-mouth (H) trade nothing and
consume labor income plus bonds carried over from earlier states. Types
switch according to a 3x3 transition matrix whose stationary distribution
must match the configured population shares.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

TYPES = ("K", "S", "H")

# Tolerances for stochastic-matrix and stationarity checks.
ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-12


class CalibrationError(ValueError):
    """Invalid parameter value or infeasible parameter combination."""


class ConfigError(CalibrationError):
    """Malformed or unknown entry in a calibration file."""


class AmbiguousStationaryError(CalibrationError):
    """The transition matrix admits more than one stationary distribution."""


@dataclass(frozen=True)
class Calibration:
    """Quarterly parameterization of the model (single source of truth).

    Transition probabilities are given by four anchors (lambda_KK,
    lambda_KH, lambda_HK, lambda_SS); the remaining five entries are
    completed so the configured population shares are stationary.
    psi (labor disutility weight) and the production fixed cost are always
    derived in the steady state, never configured.
    """

    beta: float = 0.99          # discount factor
    sigma: float = 1.0          # inverse intertemporal elasticity of substitution
    varphi: float = 1.0         # inverse Frisch elasticity
    delta: float = 0.025        # capital depreciation
    iota: float = 2.5           # investment adjustment cost curvature
    alpha: float = 0.33         # capital share (standard quarterly value)
    epsilon: float = 6.0        # elasticity of substitution across varieties
    xi: float = 42.7            # price adjustment cost
    pop_K: float = 0.1          # population share of capitalists
    pop_S: float = 0.7          # population share of savers
    pop_H: float = 0.2          # population share of hand-to-mouth
    lambda_KK: float = 0.8      # P(K stays K)
    lambda_KH: float = 0.02     # P(K -> H)
    lambda_HK: float = 0.0541   # P(H -> K)
    lambda_SS: float = 0.95     # P(S stays S)
    phi_pi: float = 1.2         # interest-rate response to inflation
    rho_Rb: float = 0.0         # interest-rate smoothing
    rho_m: float = 0.3          # monetary shock persistence
    rho_g: float = 0.9          # spending shock persistence
    rho_T: float = 0.0          # tax smoothing
    rho_a: float = 0.75         # technology shock persistence
    gamma_T: float = 1.0        # tax response to debt
    gamma_TG: float = 0.1       # tax response to spending
    gamma_G: float = 0.0        # spending response to debt
    N_star: float = 0.33        # steady-state hours
    Pi_star: float = 1.0        # gross steady-state inflation
    gy_ratio: float = 0.2       # spending-to-output ratio
    by_ratio: float = 0.57      # annualized debt-to-output ratio

    def validate(self, allow_empty_saver: bool = False) -> None:
        """Raise CalibrationError on out-of-range or inconsistent values."""
        c = self
        if not (0.0 < c.beta < 1.0):
            raise CalibrationError(f"beta must lie in (0, 1), got {c.beta}")
        if not (0.0 < c.delta <= 1.0):
            raise CalibrationError(f"delta must lie in (0, 1], got {c.delta}")
        if not c.epsilon > 1.0:
            raise CalibrationError(f"epsilon must exceed 1, got {c.epsilon}")
        if not c.xi > 0.0:
            raise CalibrationError(f"xi must be positive, got {c.xi}")
        if not c.sigma > 0.0:
            raise CalibrationError(f"sigma must be positive, got {c.sigma}")
        if c.varphi < 0.0:
            raise CalibrationError(f"varphi must be nonnegative, got {c.varphi}")
        if c.iota < 0.0:
            raise CalibrationError(f"iota must be nonnegative, got {c.iota}")
        if not (0.0 < c.alpha < 1.0):
            raise CalibrationError(f"alpha must lie in (0, 1), got {c.alpha}")
        shares = {"pop_K": c.pop_K, "pop_S": c.pop_S, "pop_H": c.pop_H}
        lo = -1e-12 if allow_empty_saver else 0.0
        for name, v in shares.items():
            if allow_empty_saver and name == "pop_S":
                if not (lo <= v < 1.0):
                    raise CalibrationError(f"{name} must lie in [0, 1), got {v}")
            elif not (0.0 < v < 1.0):
                raise CalibrationError(f"{name} must lie in (0, 1), got {v}")
        if abs(c.pop_K + c.pop_S + c.pop_H - 1.0) > 1e-12:
            raise CalibrationError(
                f"population shares must sum to 1, got {c.pop_K + c.pop_S + c.pop_H!r}"
            )
        for name in ("lambda_KK", "lambda_KH", "lambda_HK", "lambda_SS"):
            v = getattr(c, name)
            if not (0.0 <= v <= 1.0):
                raise CalibrationError(f"{name} must lie in [0, 1], got {v}")
        if c.lambda_KK + c.lambda_KH > 1.0 + 1e-12:
            raise CalibrationError("lambda_KK + lambda_KH must not exceed 1")
        for name in ("rho_Rb", "rho_m", "rho_g", "rho_T", "rho_a"):
            v = getattr(c, name)
            if not (0.0 <= v < 1.0):
                raise CalibrationError(f"{name} must lie in [0, 1), got {v}")
        if c.phi_pi < 0.0:
            raise CalibrationError(f"phi_pi must be nonnegative, got {c.phi_pi}")
        if not (0.0 < c.N_star < 1.0):
            raise CalibrationError(f"N_star must lie in (0, 1), got {c.N_star}")
        if c.Pi_star <= 0.0:
            raise CalibrationError(f"Pi_star must be positive, got {c.Pi_star}")
        if not (0.0 <= c.gy_ratio < 1.0):
            raise CalibrationError(f"gy_ratio must lie in [0, 1), got {c.gy_ratio}")
        if c.by_ratio < 0.0:
            raise CalibrationError(f"by_ratio must be nonnegative, got {c.by_ratio}")

    def replace(self, **overrides) -> "Calibration":
        return replace(self, **overrides)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Variant:
    """Model-variant switches.

    agent_count "two" removes the saver island (pop_S = 0, pop_K = 0.8,
    lambda_KK = 0.98). fiscal_mode "real" states the tax and debt rules on
    real quantities, which drops the price level from the system.
    capital_portability lets households moving off the capitalist island
    carry (and consume) their rental income.
    """

    agent_count: str = "three"
    fiscal_mode: str = "nominal"
    capital_portability: bool = False

    def validate(self) -> None:
        if self.agent_count not in ("three", "two"):
            raise CalibrationError(f"agent_count must be 'three' or 'two', got {self.agent_count!r}")
        if self.fiscal_mode not in ("nominal", "real"):
            raise CalibrationError(f"fiscal_mode must be 'nominal' or 'real', got {self.fiscal_mode!r}")
        if self.agent_count == "two" and self.capital_portability:
            raise CalibrationError("capital portability requires the three-agent economy")

    @staticmethod
    def from_name(name: str, fiscal_mode: str = "nominal") -> "Variant":
        """Map the scenario names three/two/portability onto a Variant."""
        if name == "three":
            return Variant("three", fiscal_mode, False)
        if name == "two":
            return Variant("two", fiscal_mode, False)
        if name == "portability":
            return Variant("three", fiscal_mode, True)
        raise CalibrationError(f"unknown variant name {name!r}")


TWO_AGENT_OVERRIDES = {"pop_K": 0.8, "pop_S": 0.0, "pop_H": 0.2, "lambda_KK": 0.98}


def apply_variant(cal: Calibration, variant: Variant) -> Calibration:
    """Return the calibration with variant-mandated overrides applied."""
    variant.validate()
    if variant.agent_count == "two":
        cal = cal.replace(**TWO_AGENT_OVERRIDES)
        cal.validate(allow_empty_saver=True)
    else:
        cal.validate()
    return cal


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic type-transition matrix with its stationary shares.

    Row i gives the transition probabilities out of type TYPES[i]; the
    stationary shares are left-invariant: shares @ lam == shares.
    """

    lam: np.ndarray
    stationary_shares: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "stationary_shares", np.asarray(self.stationary_shares, dtype=float))

    def validate(self) -> None:
        lam, shares = self.lam, self.stationary_shares
        if lam.shape != (3, 3):
            raise CalibrationError(f"transition matrix must be 3x3, got {lam.shape}")
        if np.any(lam < -1e-12) or np.any(lam > 1.0 + 1e-12):
            i, j = np.unravel_index(int(np.argmin(np.minimum(lam, 1.0 - lam))), lam.shape)
            raise CalibrationError(
                f"lambda_{TYPES[i]}{TYPES[j]} = {lam[i, j]:.6g} is outside [0, 1]"
            )
        rows = lam.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > ROW_SUM_TOL:
            i = int(np.argmax(np.abs(rows - 1.0)))
            raise CalibrationError(
                f"row {TYPES[i]} of the transition matrix sums to {rows[i]!r}, not 1"
            )
        if np.max(np.abs(shares @ lam - shares)) > max(STATIONARY_TOL, 1e-14 * np.max(np.abs(shares))):
            raise CalibrationError("provided shares are not stationary under the transition matrix")

    def entry(self, src: str, dst: str) -> float:
        return float(self.lam[TYPES.index(src), TYPES.index(dst)])


def complete_transition_matrix(cal: Calibration) -> TransitionMatrix:
    """Fill the five non-anchor transition probabilities.

    The closed forms impose stationarity of the configured population
    shares. With an empty saver island (two-agent economy) the anchor
    lambda_HK is unusable and is itself recomputed from stationarity of the
    capitalist share; the saver row becomes (0, 1, 0).
    """
    cal.validate(allow_empty_saver=True)
    pK, pS, pH = cal.pop_K, cal.pop_S, cal.pop_H
    lKK, lKH = cal.lambda_KK, cal.lambda_KH

    if pS == 0.0:
        lKS = 1.0 - lKK - lKH
        if abs(lKS) > 1e-12:
            raise CalibrationError(
                "two-agent economy needs lambda_KK + lambda_KH = 1, got "
                f"{lKK + lKH:.6g}"
            )
        lKS = 0.0
        lHK = (1.0 - lKK) * pK / pH
        lam = np.array([
            [lKK, 0.0, lKH],
            [0.0, 1.0, 0.0],
            [lHK, 0.0, 1.0 - lHK],
        ])
        _check_completed(lam)
        tm = TransitionMatrix(lam, np.array([pK, pS, pH]))
        tm.validate()
        return tm

    lHK, lSS = cal.lambda_HK, cal.lambda_SS
    lKS = 1.0 - lKK - lKH
    lSK = ((1.0 - lKK) * pK - lHK * pH) / pS
    lHS = ((1.0 - lSS) * pS - lKS * pK) / pH
    lSH = 1.0 - lSS - lSK
    lHH = 1.0 - lHK - lHS
    lam = np.array([
        [lKK, lKS, lKH],
        [lSK, lSS, lSH],
        [lHK, lHS, lHH],
    ])
    _check_completed(lam)
    tm = TransitionMatrix(lam, np.array([pK, pS, pH]))
    tm.validate()
    return tm


def _check_completed(lam: np.ndarray) -> None:
    bad = (lam < -1e-12) | (lam > 1.0 + 1e-12)
    if np.any(bad):
        i, j = map(int, np.argwhere(bad)[0])
        raise CalibrationError(
            f"completed probability lambda_{TYPES[i]}{TYPES[j]} = {lam[i, j]:.6g} "
            "falls outside [0, 1]; the calibration is infeasible"
        )


def stationary_shares(tm: TransitionMatrix, on_ambiguous: str = "raise") -> np.ndarray:
    """Stationary distribution of the type-transition chain.

    Solves the two-equation fixed point for (share_K, share_S) with the
    third share by normalization. A reducible chain has no unique fixed
    point; then either raise AmbiguousStationaryError (default) or, with
    on_ambiguous="keep", return the shares stored on the matrix with a
    warning.
    """
    lam = tm.lam
    # Fixed point of the share laws of motion, third share substituted out:
    #   pK = lKK pK + lSK pS + lHK (1 - pK - pS)
    #   pS = lKS pK + lSS pS + lHS (1 - pK - pS)
    A = np.array([
        [lam[0, 0] - lam[2, 0] - 1.0, lam[1, 0] - lam[2, 0]],
        [lam[0, 1] - lam[2, 1], lam[1, 1] - lam[2, 1] - 1.0],
    ])
    b = np.array([-lam[2, 0], -lam[2, 1]])
    if abs(np.linalg.det(A)) < 1e-12:
        if on_ambiguous == "keep":
            warnings.warn(
                "transition chain is reducible: stationary distribution is not "
                "unique, keeping the configured shares",
                stacklevel=2,
            )
            return tm.stationary_shares.copy()
        raise AmbiguousStationaryError(
            "transition chain is reducible; the stationary distribution is not unique"
        )
    pK, pS = np.linalg.solve(A, b)
    return np.array([pK, pS, 1.0 - pK - pS])


# Calibration file keys: the dataclass fields, plus the Table-style aliases
# for the population shares.
_KEY_ALIASES = {"Pi_K": "pop_K", "Pi_S": "pop_S", "Pi_H": "pop_H"}
_VALID_KEYS = {f.name for f in fields(Calibration)}


def parse_config_text(text: str) -> dict:
    """Parse flat `key = value` lines into calibration overrides.

    Blank lines and `#` comments are ignored. Unknown keys are errors.
    """
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        key = _KEY_ALIASES.get(key, key)
        if key not in _VALID_KEYS:
            raise ConfigError(f"line {lineno}: unknown calibration key {key!r}")
        try:
            overrides[key] = float(value.strip())
        except ValueError:
            raise ConfigError(f"line {lineno}: cannot parse value {value.strip()!r} for {key!r}") from None
    return overrides


def load_config(path) -> Calibration:
    """Load a calibration file; omitted keys keep their defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        overrides = parse_config_text(fh.read())
    cal = Calibration(**overrides)
    cal.validate()
    return cal
