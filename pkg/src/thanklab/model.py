"""Variable indexing, the nonlinear equilibrium system, and its steady state.

Timing normalization: end-of-period choices (per-capita bond purchases Z,
the government debt stock B, the capital stock K_K) are indexed by the
period in which they are decided, so every equation involves only one lag
and one lead. Island-wide bond positions BB_j, the policy rate R_b, the
price level P, per-capita investment I_K and taxes T enter with explicit
one-period lags. Nominal interest rates are net (R_b); real returns R and
the composite capital return are gross, so the bond Euler equations read
u'(C_t) = beta * R_t * E[mix of u'(C_{t+1})].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import (
    Calibration,
    CalibrationError,
    TransitionMatrix,
    Variant,
    apply_variant,
    complete_transition_matrix,
)

SS_TOL = 1e-10          # max-norm residual bound certified by steady_state
SHOCK_NAMES = ("eps_a", "eps_g", "eps_m", "eps_T")

#: (name, timing, unit) in canonical order. P only exists under nominal
#: fiscal policy; under real fiscal policy B, T, Z and BB are real stocks.
_VARIABLE_SPEC = [
    ("C_K", "jump", "level"),
    ("C_S", "jump", "level"),
    ("C_H", "jump", "level"),
    ("C", "static", "level"),
    ("N_K", "static", "level"),
    ("N_S", "static", "level"),
    ("N_H", "static", "level"),
    ("N", "static", "level"),
    ("W", "static", "level"),
    ("Y", "jump", "level"),
    ("MC", "static", "level"),
    ("MPL", "static", "level"),
    ("MPK", "static", "level"),
    ("R_K", "jump", "rate"),
    ("D", "static", "level"),
    ("Q", "jump", "level"),
    ("X", "jump", "level"),
    ("S_adj", "static", "level"),
    ("S_adj_prime", "jump", "level"),
    ("I_K", "predetermined", "level"),
    ("I", "static", "level"),
    ("K_K", "predetermined", "level"),
    ("K", "static", "level"),
    ("LP", "static", "rate"),
    ("R", "static", "rate"),
    ("R_b", "predetermined", "rate"),
    ("Pi", "jump", "rate"),
    ("P", "predetermined", "level"),
    ("Z_K", "static", "level"),
    ("Z_S", "static", "level"),
    ("BB_K", "predetermined", "level"),
    ("BB_S", "predetermined", "level"),
    ("BB_H", "predetermined", "level"),
    ("B", "predetermined", "level"),
    ("T", "predetermined", "level"),
    ("T_K", "static", "level"),
    ("T_S", "static", "level"),
    ("T_H", "static", "level"),
    ("S_b", "static", "share"),
    ("A", "exogenous", "level"),
    ("M", "exogenous", "level"),
    ("G", "exogenous", "level"),
]


class ModelError(ValueError):
    """Inconsistent model inputs (non-finite values, domain violations)."""


class InfeasibleSteadyState(ModelError):
    """The calibration admits no valid resting point."""


@dataclass(frozen=True)
class VariableIndex:
    """Ordered endogenous variables with timing and unit tags.

    Timing: 'predetermined' variables enter some equation with a lag,
    'jump' variables with a lead, 'static' only contemporaneously and
    'exogenous' marks the driven AR(1) processes (which are predetermined
    states for counting purposes).
    """

    names: tuple
    timing: dict
    units: dict
    pos: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ModelError("variable names must be unique")
        object.__setattr__(self, "pos", {n: i for i, n in enumerate(self.names)})

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def state_names(self) -> tuple:
        return tuple(n for n in self.names if self.timing[n] in ("predetermined", "exogenous"))

    @property
    def state_indices(self) -> tuple:
        return tuple(self.pos[n] for n in self.state_names)

    @property
    def n_predetermined(self) -> int:
        return len(self.state_names)

    def __getitem__(self, name: str) -> int:
        return self.pos[name]


def build_variable_index(variant: Variant) -> VariableIndex:
    spec = _VARIABLE_SPEC
    if variant.fiscal_mode == "real":
        spec = [row for row in spec if row[0] != "P"]
    names = tuple(r[0] for r in spec)
    timing = {r[0]: r[1] for r in spec}
    units = {r[0]: r[2] for r in spec}
    return VariableIndex(names, timing, units)


@dataclass(frozen=True)
class SteadyState:
    """Resting point of the system plus the derived constants.

    values holds one entry per VariableIndex name; psi and the fixed cost F
    are backed out from the wage condition and the zero-profit condition;
    tau_K/tau_S/tau_H are the constant real transfers that support equal
    consumption across types, with population-weighted sum zero.
    """

    index: VariableIndex
    values: np.ndarray
    psi: float
    F: float
    tau_K: float
    tau_S: float
    tau_H: float

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.index[name]])

    def as_dict(self) -> dict:
        out = {n: float(self.values[self.index[n]]) for n in self.index.names}
        out.update(psi=self.psi, F=self.F, tau_K=self.tau_K, tau_S=self.tau_S, tau_H=self.tau_H)
        return out


class Model:
    """Bundles a calibration + variant with the equations built on them.

    All methods are pure functions of the constructor arguments; instances
    are immutable after construction and safe to share across processes.
    """

    def __init__(self, cal: Calibration, variant: Variant = Variant()):
        variant.validate()
        self.variant = variant
        self.cal = apply_variant(cal, variant)
        self.tm = complete_transition_matrix(self.cal)
        self.index = build_variable_index(variant)
        self.equation_labels = _equation_labels(variant)
        if len(self.equation_labels) != self.index.n:
            raise ModelError(
                f"{len(self.equation_labels)} equations for {self.index.n} variables"
            )
        self.ss = self._steady_state()
        self._verify_steady_state()

    # -- steady state ---------------------------------------------------

    def _steady_state(self) -> SteadyState:
        c, tm = self.cal, self.tm
        lam = tm.lam
        pK, pS, pH = c.pop_K, c.pop_S, c.pop_H

        pi_ss = c.Pi_star
        if self.variant.fiscal_mode == "nominal" and abs(pi_ss - 1.0) > 1e-12:
            raise InfeasibleSteadyState(
                "nominal fiscal policy requires Pi_star = 1 (stationary price level)"
            )
        rb_gross = pi_ss / c.beta            # Taylor rule at rest
        r_gross = 1.0 / c.beta               # real bond return, gross
        # Price setting at rest: (1-eps) + eps*MC - Pi*xi*(Pi-1)*(1-beta) = 0
        mc = ((c.epsilon - 1.0) + c.xi * pi_ss * (pi_ss - 1.0) * (1.0 - c.beta)) / c.epsilon
        rk = 1.0 / c.beta - 1.0 + c.delta    # capital Euler at rest, Q = 1
        kn = (rk / (mc * c.alpha)) ** (1.0 / (c.alpha - 1.0))   # K/N
        N = c.N_star
        K = kn * N
        mpl = (1.0 - c.alpha) * kn ** c.alpha
        mpk = c.alpha * kn ** (c.alpha - 1.0)
        w = mc * mpl
        gross_output = N ** (1.0 - c.alpha) * K ** c.alpha
        F = gross_output - (w * N + rk * K)
        Y = gross_output - F
        if Y <= 0.0 or K <= 0.0:
            raise InfeasibleSteadyState("nonpositive output or capital at rest")
        B = c.by_ratio * 4.0 * Y
        I = c.delta * K
        G = c.gy_ratio * Y
        C = Y - I - G
        if C <= 0.0:
            raise InfeasibleSteadyState(
                f"nonpositive consumption at rest (C* = {C:.6g}); reduce gy_ratio or delta"
            )
        psi = w / (N ** c.varphi * C ** c.sigma)
        T = G + (rb_gross / pi_ss - 1.0) * B

        zK = B / pK
        zS = 0.0
        bbK = lam[0, 0] * pK * zK
        bbS = lam[0, 1] * pK * zK
        bbH = lam[0, 2] * pK * zK
        kK = K / pK
        iK = c.delta * kK

        port_S = port_H = 0.0
        if self.variant.capital_portability:
            port_S = lam[0, 1] * rk * kK * pK / pS
            port_H = lam[0, 2] * rk * kK * pK / pH

        # Real transfers supporting equal consumption; the capitalist's
        # follows from the weighted budget identity (Walras).
        tau_H = C - w * N - (rb_gross / pi_ss) * bbH / pH - port_H + T
        if self.variant.agent_count == "two":
            tau_S = 0.0
            tau_K = -(pH * tau_H) / pK
        else:
            tau_S = C + zS - w * N - (rb_gross / pi_ss) * bbS / pS - port_S + T
            tau_K = -(pS * tau_S + pH * tau_H) / pK

        v = np.empty(self.index.n)
        ix = self.index
        vals = {
            "C_K": C, "C_S": C, "C_H": C, "C": C,
            "N_K": N, "N_S": N, "N_H": N, "N": N,
            "W": w, "Y": Y, "MC": mc, "MPL": mpl, "MPK": mpk, "R_K": rk,
            "D": 0.0, "Q": 1.0, "X": 1.0, "S_adj": 0.0, "S_adj_prime": 0.0,
            "I_K": iK, "I": I, "K_K": kK, "K": K,
            "LP": 1.0, "R": r_gross, "R_b": rb_gross - 1.0, "Pi": pi_ss,
            "Z_K": zK, "Z_S": zS, "BB_K": bbK, "BB_S": bbS, "BB_H": bbH,
            "B": B, "T": T, "T_K": T, "T_S": T, "T_H": T,
            "S_b": B / Y, "A": 1.0, "M": 1.0, "G": G,
        }
        if self.variant.fiscal_mode == "nominal":
            vals["P"] = 1.0
        for name, val in vals.items():
            if name in ix.pos:
                v[ix[name]] = val
        return SteadyState(ix, v, psi, F, tau_K, tau_S, tau_H)

    def _verify_steady_state(self) -> None:
        x = self.ss.values
        res = self.residuals(x, x, x, np.zeros(4))
        worst = float(np.max(np.abs(res)))
        if worst > SS_TOL:
            k = int(np.argmax(np.abs(res)))
            raise InfeasibleSteadyState(
                f"steady-state residual {worst:.3e} on equation "
                f"'{self.equation_labels[k]}' exceeds {SS_TOL:g}"
            )
        wsum = self.cal.pop_K * self.ss.tau_K + self.cal.pop_S * self.ss.tau_S \
            + self.cal.pop_H * self.ss.tau_H
        if abs(wsum) > 1e-12 * max(1.0, abs(self.ss.tau_K)):
            raise InfeasibleSteadyState(f"transfers do not aggregate to zero ({wsum:.3e})")

    # -- residual system -------------------------------------------------

    def residuals(self, x_lag, x, x_lead, shocks, check: bool = True) -> np.ndarray:
        """One residual per equilibrium condition.

        Each of x_lag, x, x_lead is a vector over the VariableIndex (or a
        matrix with one column per evaluation point); shocks holds
        (eps_a, eps_g, eps_m, eps_T). Expectations are evaluated at the
        point forecast x_lead, which is exact to first order.
        """
        x_lag = np.asarray(x_lag, dtype=float)
        x = np.asarray(x, dtype=float)
        x_lead = np.asarray(x_lead, dtype=float)
        shocks = np.asarray(shocks, dtype=float)
        if check:
            self._check_inputs(x_lag, x, x_lead, shocks)

        c, ss = self.cal, self.ss
        lam = self.tm.lam
        lKK, lKS, lKH = lam[0]
        lSK, lSS, lSH = lam[1]
        lHK, lHS, lHH = lam[2]
        pK, pS, pH = c.pop_K, c.pop_S, c.pop_H
        nominal = self.variant.fiscal_mode == "nominal"
        ix = self.index.pos

        def cur(name):
            return x[ix[name]]

        def lag(name):
            return x_lag[ix[name]]

        def lead(name):
            return x_lead[ix[name]]

        sig, phi = c.sigma, c.varphi
        beta, delta, iota, alpha = c.beta, c.delta, c.iota, c.alpha
        eps_a, eps_g, eps_m, eps_T = shocks

        cK, cS, cH, cAgg = cur("C_K"), cur("C_S"), cur("C_H"), cur("C")
        uK, uS, uH = cK ** -sig, cS ** -sig, cH ** -sig
        uK1 = lead("C_K") ** -sig
        uS1 = lead("C_S") ** -sig
        uH1 = lead("C_H") ** -sig
        q, q1 = cur("Q"), lead("Q")
        rk, rk1 = cur("R_K"), lead("R_K")
        r = cur("R")
        rb, rb_l = cur("R_b"), lag("R_b")
        pi, pi1 = cur("Pi"), lead("Pi")
        w, y, y1 = cur("W"), cur("Y"), lead("Y")
        n = cur("N")
        a, m, g = cur("A"), cur("M"), cur("G")
        iK, iK_l = cur("I_K"), lag("I_K")
        kK, kK_l = cur("K_K"), lag("K_K")
        xg, xg1 = cur("X"), lead("X")
        s, sp, sp1 = cur("S_adj"), cur("S_adj_prime"), lead("S_adj_prime")
        zK, zS = cur("Z_K"), cur("Z_S")
        b, b_l = cur("B"), lag("B")
        t, t_l = cur("T"), lag("T")
        K_agg_l = pK * kK_l

        rb_star = ss["R_b"]
        T_star, B_star, G_star = ss["T"], ss["B"], ss["G"]

        if nominal:
            p, p_l = cur("P"), lag("P")
            defl = p            # deflates current nominal stocks
            carry = p           # deflates (1 + R_b) x lagged nominal stocks
        else:
            defl = 1.0
            carry = pi          # lagged real stocks erode with inflation

        port_S = port_H = 0.0
        if self.variant.capital_portability:
            port_S = lKS * rk * kK_l * pK / pS if pS > 0 else 0.0
            port_H = lKH * rk * kK_l * pK / pH

        res = [None] * len(self.equation_labels)
        lab = self._eq_pos

        res[lab["euler_capital"]] = uK - beta * (rk1 + (1.0 - delta) * q1) / q * uK1
        res[lab["euler_bond_K"]] = uK - beta * r * (lKK * uK1 + lKS * uS1 + lKH * uH1)
        if self.variant.agent_count == "two":
            res[lab["euler_bond_S"]] = zS
            res[lab["budget_S"]] = cS - cK
        else:
            res[lab["euler_bond_S"]] = uS - beta * r * (lSK * uK1 + lSS * uS1 + lSH * uH1)
            res[lab["budget_S"]] = (
                cS + zS / defl
                - w * cur("N_S")
                - (1.0 + rb_l) * lag("BB_S") / (pS * carry)
                - port_S - ss.tau_S + cur("T_S") / defl
            )
        res[lab["union_wage"]] = w - ss.psi * n ** phi * cAgg ** sig
        res[lab["hours_K"]] = cur("N_K") - n
        res[lab["hours_S"]] = cur("N_S") - n
        res[lab["hours_H"]] = cur("N_H") - n
        res[lab["bond_lom_K"]] = cur("BB_K") - lKK * pK * zK - lSK * pS * zS
        res[lab["bond_lom_S"]] = cur("BB_S") - lKS * pK * zK - lSS * pS * zS
        res[lab["bond_lom_H"]] = cur("BB_H") - lKH * pK * zK - lSH * pS * zS
        if self.variant.agent_count == "two":
            # Textbook hand-to-mouth: bond income and the lump-sum tax enter
            # at their resting values, so all tax variation falls on the
            # asset-holding capitalists and the fiscal stance is neutral.
            hb_inc = (1.0 + rb_star) * ss["BB_H"] / pH
            tax_H = T_star
        else:
            hb_inc = (1.0 + rb_l) * lag("BB_H") / (pH * carry)
            tax_H = cur("T_H") / defl
        res[lab["budget_H"]] = (
            cH - w * cur("N_H") - hb_inc - port_H - ss.tau_H + tax_H
        )
        res[lab["production"]] = (a * n) ** (1.0 - alpha) * K_agg_l ** alpha - ss.F - y
        res[lab["mpl_def"]] = cur("MPL") - (1.0 - alpha) * a ** (1.0 - alpha) * (n / K_agg_l) ** -alpha
        res[lab["wage_pricing"]] = w - cur("MPL") * cur("MC")
        res[lab["profit_identity"]] = y - cur("D") - n * w - rk * K_agg_l
        res[lab["mpk_def"]] = cur("MPK") - alpha * (K_agg_l / (n * a)) ** (alpha - 1.0)
        res[lab["rental_rate"]] = rk - cur("MC") * cur("MPK")
        res[lab["capital_acc"]] = kK - iK * (1.0 - s) - kK_l * (1.0 - delta)
        res[lab["inv_growth"]] = xg - iK / iK_l
        res[lab["adj_cost"]] = s - iota * (xg - 1.0) ** 2
        res[lab["adj_cost_prime"]] = sp - 2.0 * iota * (xg - 1.0)
        res[lab["tobin_q"]] = q * (1.0 - s - xg * sp) + beta * q1 * (uK1 / uK) * sp1 * xg1 ** 2 - 1.0
        res[lab["lp_def"]] = cur("LP") - (rk1 + (1.0 - delta) * q1) / (q * r)
        res[lab["agg_investment"]] = cur("I") - pK * iK
        res[lab["agg_capital"]] = cur("K") - pK * kK
        res[lab["resource"]] = y - cur("I") - cAgg - g / defl
        res[lab["real_rate"]] = r - (1.0 + rb) / pi1
        res[lab["agg_consumption"]] = cAgg - pK * cK - pS * cS - pH * cH
        res[lab["nkpc"]] = (
            (1.0 - c.epsilon) + c.epsilon * cur("MC")
            - pi * c.xi * (pi - 1.0)
            + beta * c.xi * pi1 * (uK1 / uK) * (pi1 - 1.0) * y1 / y
        )
        res[lab["taylor_rule"]] = (
            (1.0 + rb) / (1.0 + rb_star)
            - ((1.0 + rb_l) / (1.0 + rb_star)) ** c.rho_Rb
            * (pi / c.Pi_star) ** ((1.0 - c.rho_Rb) * c.phi_pi) * m
        )
        res[lab["mp_shock"]] = np.log(m) - c.rho_m * np.log(lag("M")) - eps_m
        res[lab["tech_shock"]] = np.log(a) - c.rho_a * np.log(lag("A")) - eps_a
        res[lab["spending_rule"]] = (
            np.log(g / G_star) - c.rho_g * np.log(lag("G") / G_star)
            + (1.0 - c.rho_g) * c.gamma_G * np.log(b_l / B_star) - eps_g
        )
        if nominal:
            res[lab["gov_budget"]] = b - g - (1.0 + rb_l) * b_l + t
            res[lab["inflation_def"]] = pi - p / p_l
            res[lab["debt_share"]] = cur("S_b") - b / (p * y)
        else:
            res[lab["gov_budget"]] = b - g - (1.0 + rb_l) * b_l / pi + t
            res[lab["debt_share"]] = cur("S_b") - b / y
        res[lab["bond_clearing"]] = b - pK * zK - pS * zS
        res[lab["tax_rule"]] = (
            np.log(t / T_star) - c.rho_T * np.log(t_l / T_star)
            - (1.0 - c.rho_T) * c.gamma_T * np.log(b_l / B_star)
            - (1.0 - c.rho_T) * c.gamma_TG * np.log(g / G_star) - eps_T
        )
        res[lab["tax_eq_K"]] = cur("T_K") - t
        res[lab["tax_eq_S"]] = cur("T_S") - t
        res[lab["tax_eq_H"]] = cur("T_H") - t

        out = np.empty((len(res),) + np.shape(x[0]), dtype=float)
        for i, r_i in enumerate(res):
            out[i] = r_i
        return out

    @property
    def _eq_pos(self) -> dict:
        try:
            return self.__eq_pos
        except AttributeError:
            self.__eq_pos = {name: i for i, name in enumerate(self.equation_labels)}
            return self.__eq_pos

    def _check_inputs(self, x_lag, x, x_lead, shocks) -> None:
        for arr, tag in ((x_lag, "lagged"), (x, "current"), (x_lead, "lead")):
            if arr.shape[0] != self.index.n:
                raise ModelError(f"{tag} vector has {arr.shape[0]} rows, expected {self.index.n}")
            bad = ~np.isfinite(arr)
            if np.any(bad):
                j = int(np.argwhere(bad)[0][0])
                raise ModelError(f"non-finite {tag} value for variable {self.index.names[j]!r}")
        if shocks.shape[0] != 4 or np.any(~np.isfinite(shocks)):
            raise ModelError("shock vector must hold 4 finite entries (eps_a, eps_g, eps_m, eps_T)")
        if self.cal.sigma >= 1.0:
            for name in ("C_K", "C_S", "C_H", "K_K"):
                for arr, tag in ((x_lag, "lagged"), (x, "current"), (x_lead, "lead")):
                    if np.any(arr[self.index[name]] <= 0.0):
                        raise ModelError(f"nonpositive {tag} value for {name!r}")

    @property
    def n_predetermined(self) -> int:
        return self.index.n_predetermined


def _equation_labels(variant: Variant) -> tuple:
    labels = [
        "euler_capital", "euler_bond_K", "euler_bond_S",
        "union_wage", "hours_K", "hours_S", "hours_H",
        "bond_lom_K", "bond_lom_S", "bond_lom_H",
        "budget_S", "budget_H",
        "production", "mpl_def", "wage_pricing", "profit_identity",
        "mpk_def", "rental_rate",
        "capital_acc", "inv_growth", "adj_cost", "adj_cost_prime",
        "tobin_q", "lp_def",
        "agg_investment", "agg_capital", "resource", "real_rate",
        "agg_consumption", "nkpc", "taylor_rule",
        "mp_shock", "tech_shock", "spending_rule",
        "gov_budget", "bond_clearing", "inflation_def", "debt_share",
        "tax_rule", "tax_eq_K", "tax_eq_S", "tax_eq_H",
    ]
    if variant.fiscal_mode == "real":
        labels.remove("inflation_def")
    return tuple(labels)


def steady_state(cal: Calibration, variant: Variant = Variant()) -> SteadyState:
    """Closed-form steady state, certified against the residual system."""
    return Model(cal, variant).ss


def residuals(x_lag, x, x_lead, shocks, cal: Calibration, variant: Variant = Variant()) -> np.ndarray:
    """Residual vector of the full system at an arbitrary point."""
    return Model(cal, variant).residuals(x_lag, x, x_lead, shocks)
