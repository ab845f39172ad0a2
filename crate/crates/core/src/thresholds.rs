//! Exponent arithmetic and admissibility predicates for almost-diagonal kernels.
//!
//! All comparisons are strict `>` on floats. Shared subexpressions are evaluated in one fixed order so
//! that rules which coincide algebraically also coincide bit for bit.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seqspace::{Exponent, Family};
use crate::weights::WeightProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `D > J`, `E > n/2 + s`, `F > J - n/2 - s`.
    Unweighted,
    /// The unweighted rule with `J_τ` and the shift `n(τ - 1/p)₊`.
    UnweightedTau,
    /// The unweighted τ rule shifted by `(Δ, d/p, d̃/p')` through the conjugated kernel.
    Conjugation,
    /// `D > J + nτ̂`, `E > n/2 + s + nτ̂`, `F > J - n/2 - s`.
    Dimension,
    /// Critical and supercritical rule, needing `τ ≥ 1/p`.
    LargeTau,
    /// `D > J̃`, `E > n/2 + s̃`, `F > J̃ - n/2 - s̃`.
    Sharp,
}

impl Rule {
    pub const ALL: [Rule; 6] =
        [Rule::Unweighted, Rule::UnweightedTau, Rule::Conjugation, Rule::Dimension, Rule::LargeTau, Rule::Sharp];

    pub fn name(&self) -> &'static str {
        match self {
            Rule::Unweighted => "unweighted",
            Rule::UnweightedTau => "unweighted_tau",
            Rule::Conjugation => "conjugation",
            Rule::Dimension => "dimension",
            Rule::LargeTau => "large_tau",
            Rule::Sharp => "sharp",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown rule '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

/// Strict lower bounds for `(D, E, F)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

impl Bounds {
    fn component(&self, i: usize) -> f64 {
        [self.d, self.e, self.f][i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleBounds {
    pub rule: Rule,
    pub bounds: Bounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub n: usize,
    pub family: Family,
    pub s: f64,
    pub tau: f64,
    pub p: f64,
    pub q: Exponent,
    pub d: f64,
    pub d_tilde: f64,
    pub delta: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J_tau")]
    pub j_tau: f64,
    pub regime: Regime,
    pub tau_hat: f64,
    #[serde(rename = "J_tilde")]
    pub j_tilde: f64,
    pub s_tilde: f64,
    pub r_tilde: f64,
    /// Which `(p̃, q̃)` give the same almost-diagonal class.
    pub equivalent_pq: String,
    pub rules: Vec<RuleBounds>,
}

impl ThresholdReport {
    pub fn bounds(&self, rule: Rule) -> Option<Bounds> {
        self.rules.iter().find(|r| r.rule == rule).map(|r| r.bounds)
    }

    /// `(τ - 1/p)₊`.
    pub fn tau_excess(&self) -> f64 {
        (self.tau - 1.0 / self.p).max(0.0)
    }
}

/// `J = n/min(1,p)` for `b`, `n/min(1,p,q)` for `f`.
pub fn j_number(n: usize, family: Family, p: f64, q: Exponent) -> f64 {
    let nf = n as f64;
    match family {
        Family::B => nf / p.min(1.0),
        Family::F => nf / p.min(1.0).min(q.min_one()),
    }
}

/// Regime of `(τ, q)` relative to `τ = 1/p`.
pub fn regime(family: Family, tau: f64, p: f64, q: Exponent) -> Regime {
    let crit = 1.0 / p;
    if tau > crit || (tau == crit && q.is_infinite()) {
        Regime::Supercritical
    } else if tau == crit && family == Family::F {
        Regime::Critical
    } else {
        Regime::Subcritical
    }
}

/// `[(τ - 1/p) + d/(np)]₊`.
pub fn tau_hat_shifted(n: usize, tau: f64, p: f64, d: f64) -> f64 {
    ((tau - 1.0 / p) + d / (n as f64 * p)).max(0.0)
}

/// `[τ - (1/p)(1 - d/n)]₊`.
pub fn tau_hat_scaled(n: usize, tau: f64, p: f64, d: f64) -> f64 {
    (tau - (1.0 - d / n as f64) / p).max(0.0)
}

/// `nτ̂`, evaluated as `[n(τ - 1/p) + d/p]₊` so that it never exceeds `d/p` when `τ ≤ 1/p`.
fn n_tau_hat(nf: f64, tau: f64, p: f64, d: f64) -> f64 {
    (nf * (tau - 1.0 / p) + d / p).max(0.0)
}

fn check_inputs(s: f64, tau: f64, q: Exponent) -> Result<()> {
    if !s.is_finite() {
        return Err(invalid(format!("s must be finite, got {s}")));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau must be in [0, inf), got {tau}")));
    }
    if let Exponent::Finite(v) = q {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("q must be in (0, inf], got {v}")));
        }
    }
    Ok(())
}

/// Computes every threshold quantity and the lower bounds of each rule.
#[allow(clippy::too_many_arguments)]
pub fn classify(
    n: usize,
    family: Family,
    s: f64,
    tau: f64,
    p: f64,
    q: Exponent,
    d: f64,
    d_tilde: f64,
) -> Result<ThresholdReport> {
    check_inputs(s, tau, q)?;
    let profile = WeightProfile::new(p, d, d_tilde, n)?;
    let nf = n as f64;
    let half_n = nf / 2.0;
    let j = j_number(n, family, p, q);
    let regime = regime(family, tau, p, q);
    let j_tau = match regime {
        Regime::Supercritical => nf,
        Regime::Critical => nf / q.min_one(),
        Regime::Subcritical => j,
    };
    let d_over_p = d / p;
    let dual = profile.dual_term();
    let delta = profile.delta();
    let excess = (tau - 1.0 / p).max(0.0);
    let n_excess = nf * excess;
    let nth = n_tau_hat(nf, tau, p, d);
    let tau_hat = nth / nf;
    let j_tilde = j_tau + nth.min(d_over_p);
    let s_tilde = s + nth;
    let r_tilde = nf / j_tilde;

    let base = half_n + s;
    let mut rules = vec![
        RuleBounds { rule: Rule::Unweighted, bounds: Bounds { d: j, e: base, f: j - half_n - s } },
        RuleBounds {
            rule: Rule::UnweightedTau,
            bounds: Bounds { d: j_tau, e: base + n_excess, f: (j_tau - half_n - s) - n_excess },
        },
        RuleBounds {
            rule: Rule::Conjugation,
            bounds: Bounds {
                d: j_tau + delta,
                e: base + n_excess + d_over_p,
                f: (j_tau - half_n - s) - n_excess + dual,
            },
        },
        RuleBounds { rule: Rule::Dimension, bounds: Bounds { d: j + nth, e: base + nth, f: j - half_n - s } },
    ];
    let large_tau_applies = tau >= 1.0 / p && (tau > 1.0 / p || q.is_infinite() || family == Family::F);
    if large_tau_applies {
        let shift = nf * (tau - 1.0 / p);
        rules.push(RuleBounds {
            rule: Rule::LargeTau,
            bounds: Bounds { d: j_tau + d_over_p, e: base + shift + d_over_p, f: (j_tau - half_n - s) - shift },
        });
    }
    rules.push(RuleBounds {
        rule: Rule::Sharp,
        bounds: Bounds { d: j_tilde, e: half_n + s_tilde, f: j_tilde - half_n - s_tilde },
    });

    let equivalent_pq = match family {
        Family::B => format!("p~ = {r_tilde}, q~ in (0, inf]"),
        Family::F => format!("min(p~, q~) = {r_tilde}"),
    };
    Ok(ThresholdReport {
        n,
        family,
        s,
        tau,
        p,
        q,
        d,
        d_tilde: profile.d_tilde,
        delta,
        j,
        j_tau,
        regime,
        tau_hat,
        j_tilde,
        s_tilde,
        r_tilde,
        equivalent_pq,
        rules,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub rule: Rule,
    pub admissible: bool,
    /// `(D - bound_D, E - bound_E, F - bound_F)`; admissible iff all are positive.
    pub margins: [f64; 3],
}

/// Strict check of `(D, E, F)` against one rule.
pub fn admissible(d: f64, e: f64, f: f64, report: &ThresholdReport, rule: Rule) -> Result<Admissibility> {
    let b = report.bounds(rule).ok_or_else(|| Error::RuleNotApplicable {
        rule: rule.to_string(),
        reason: format!("{:?} regime with tau = {}, p = {}", report.regime, report.tau, report.p),
    })?;
    Ok(Admissibility {
        rule,
        admissible: d > b.d && e > b.e && f > b.f,
        margins: [d - b.d, e - b.e, f - b.f],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    pub r_tilde: f64,
    pub s_tilde: f64,
    pub constraint: String,
}

pub fn equivalent_exponents(report: &ThresholdReport) -> Equivalence {
    Equivalence { r_tilde: report.r_tilde, s_tilde: report.s_tilde, constraint: report.equivalent_pq.clone() }
}

/// The unweighted, `τ = 0` report at `(s̃, r̃, r̃)`.
pub fn reduced_report(report: &ThresholdReport) -> Result<ThresholdReport> {
    let r = report.r_tilde;
    classify(report.n, Family::B, report.s_tilde, 0.0, r, Exponent::Finite(r), 0.0, 0.0)
}

/// Whether the sharp rule and the unweighted rule at `(s̃, r̃, r̃)` agree on `(D, E, F)`.
pub fn equivalence_agrees(d: f64, e: f64, f: f64, report: &ThresholdReport) -> Result<bool> {
    let lhs = admissible(d, e, f, report, Rule::Sharp)?.admissible;
    let rhs = admissible(d, e, f, &reduced_report(report)?, Rule::Unweighted)?.admissible;
    Ok(lhs == rhs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub description: String,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleComparison {
    /// Per exponent `D, E, F`, the applicable rule with the smallest bound (first one on ties).
    pub weakest: [Rule; 3],
    pub facts: Vec<Fact>,
}

/// Orders the applicable rules and checks the inequalities between them that hold in this regime.
pub fn compare_rules(report: &ThresholdReport) -> RuleComparison {
    let mut weakest = [Rule::Unweighted; 3];
    for (i, w) in weakest.iter_mut().enumerate() {
        let mut best = f64::INFINITY;
        // the unweighted rules ignore the weight and are only comparable when d = 0
        for rb in &report.rules {
            let usable = report.d == 0.0 || !matches!(rb.rule, Rule::Unweighted | Rule::UnweightedTau);
            if usable && rb.bounds.component(i) < best {
                best = rb.bounds.component(i);
                *w = rb.rule;
            }
        }
    }
    let names = ["D", "E", "F"];
    let mut facts = Vec::new();
    let mut le = |a: Rule, b: Rule, comps: &[usize]| {
        if let (Some(x), Some(y)) = (report.bounds(a), report.bounds(b)) {
            for &i in comps {
                facts.push(Fact {
                    description: format!("{a} {} bound <= {b} {} bound", names[i], names[i]),
                    holds: x.component(i) <= y.component(i),
                });
            }
        }
    };
    if report.regime == Regime::Subcritical {
        le(Rule::Dimension, Rule::Conjugation, &[0, 1, 2]);
    } else {
        le(Rule::LargeTau, Rule::Conjugation, &[0, 2]);
    }
    if report.tau == 0.0 && report.d == 0.0 {
        let (a, b) = (report.bounds(Rule::Sharp).expect("always present"), report.bounds(Rule::Unweighted).expect("always present"));
        facts.push(Fact { description: "sharp bounds == unweighted bounds".into(), holds: a == b });
    }
    RuleComparison { weakest, facts }
}

/// Inputs for the older weighted rules, which are kept for comparison tables only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoricalInputs {
    /// Doubling exponents of a scalar weight, `w(Q)/w(R)` between `(|Q|/|R|)^α₂` and `(|Q|/|R|)^α₁`.
    pub alpha1: f64,
    pub alpha2: f64,
    /// Doubling exponent of order `p` of a matrix weight, taken as given.
    pub beta_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoricalBounds {
    pub label: String,
    pub bounds: Bounds,
}

/// Bounds of older results. The scalar-weight rule is reported with a caveat on its `α₂ - α₁` term.
pub fn historical_rules(report: &ThresholdReport, inputs: &HistoricalInputs) -> Result<Vec<HistoricalBounds>> {
    let HistoricalInputs { alpha1, alpha2, beta_w } = *inputs;
    if !(alpha1 > 0.0 && alpha2 >= alpha1) {
        return Err(invalid("need 0 < alpha1 <= alpha2"));
    }
    if !(beta_w >= report.n as f64) {
        return Err(invalid("beta_w must be at least n"));
    }
    let (nf, p, s, j) = (report.n as f64, report.p, report.s, report.j);
    let half_n = nf / 2.0;
    let eps0 = (nf * (alpha2 - alpha1) / p).max(2.0 * nf * (report.tau - alpha1 / p));
    let mut out = vec![HistoricalBounds {
        label: "scalar_weight_doubling (unverified alpha2 - alpha1 term)".into(),
        bounds: Bounds { d: j + eps0, e: half_n + s + eps0 / 2.0, f: j - half_n - s + eps0 / 2.0 },
    }];
    if report.tau == 0.0 {
        let extra = (beta_w - nf) / p;
        out.push(match report.family {
            Family::B => HistoricalBounds {
                label: "matrix_weight_doubling_b".into(),
                bounds: Bounds { d: j + extra, e: half_n + s, f: j - half_n - s + extra },
            },
            Family::F => HistoricalBounds {
                label: "matrix_weight_doubling_f".into(),
                bounds: Bounds { d: j + beta_w / p, e: half_n + s + nf / p, f: j - half_n - s + extra },
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fin(x: f64) -> Exponent {
        Exponent::Finite(x)
    }

    #[test]
    fn plain_unweighted_example() {
        let r = classify(1, Family::F, 0.0, 0.0, 2.0, fin(2.0), 0.0, 0.0).unwrap();
        assert_eq!((r.j, r.regime, r.tau_hat, r.j_tilde, r.s_tilde), (1.0, Regime::Subcritical, 0.0, 1.0, 0.0));
        assert_eq!(r.bounds(Rule::Sharp).unwrap(), Bounds { d: 1.0, e: 0.5, f: 0.5 });
        assert!(r.bounds(Rule::LargeTau).is_none());
    }

    #[test]
    fn j_takes_q_for_triebel() {
        assert_eq!(j_number(2, Family::F, 0.5, fin(1.0 / 3.0)), 6.0);
        assert_eq!(j_number(2, Family::B, 0.5, fin(1.0 / 3.0)), 4.0);
    }

    #[test]
    fn supercritical_example() {
        let r = classify(1, Family::B, 0.0, 1.0, 2.0, fin(2.0), 0.5, 0.3).unwrap();
        assert_eq!(r.regime, Regime::Supercritical);
        assert_eq!(r.j_tau, 1.0);
        assert!((r.tau_hat - 0.75).abs() < 1e-15);
        assert!((r.j_tilde - 1.25).abs() < 1e-15);
        assert!((r.s_tilde - 0.75).abs() < 1e-15);
        assert!((r.r_tilde - 0.8).abs() < 1e-15);
        let thm = r.bounds(Rule::Conjugation).unwrap();
        let lt = r.bounds(Rule::LargeTau).unwrap();
        assert!((thm.d - 1.4).abs() < 1e-15 && (lt.d - 1.25).abs() < 1e-15);
        assert!(!admissible(1.3, 10.0, 10.0, &r, Rule::Conjugation).unwrap().admissible);
        assert!(admissible(1.3, 10.0, 10.0, &r, Rule::LargeTau).unwrap().admissible);
    }

    #[test]
    fn strict_boundary_and_margins() {
        let r = classify(1, Family::F, 0.0, 0.0, 2.0, fin(2.0), 0.0, 0.0).unwrap();
        let a = admissible(1.1, 0.6, 0.6, &r, Rule::Sharp).unwrap();
        assert!(a.admissible);
        for m in a.margins {
            assert!((m - 0.1).abs() < 1e-15);
        }
        assert!(!admissible(1.0, 0.6, 0.6, &r, Rule::Sharp).unwrap().admissible);
    }

    #[test]
    fn large_tau_rule_not_applicable_in_subcritical() {
        let r = classify(1, Family::B, 0.0, 0.5, 2.0, fin(2.0), 0.0, 0.0).unwrap();
        assert_eq!(r.regime, Regime::Subcritical);
        assert!(matches!(admissible(5.0, 5.0, 5.0, &r, Rule::LargeTau), Err(Error::RuleNotApplicable { .. })));
    }

    #[test]
    fn critical_regime_only_for_triebel() {
        assert_eq!(regime(Family::F, 0.5, 2.0, fin(2.0)), Regime::Critical);
        assert_eq!(regime(Family::B, 0.5, 2.0, fin(2.0)), Regime::Subcritical);
        assert_eq!(regime(Family::B, 0.5, 2.0, Exponent::Infinite), Regime::Supercritical);
        let r = classify(1, Family::F, 0.0, 0.5, 2.0, fin(0.5), 0.0, 0.0).unwrap();
        assert_eq!(r.j_tau, 2.0);
    }

    #[test]
    fn reduced_exponent_examples() {
        let r = classify(1, Family::F, 0.0, 0.0, 2.0, fin(2.0), 0.0, 0.0).unwrap();
        assert_eq!(equivalent_exponents(&r).r_tilde, 1.0);
        assert!(equivalence_agrees(1.1, 0.6, 0.6, &r).unwrap());
    }

    #[test]
    fn dual_dimension_ignored_for_small_p() {
        let r = classify(1, Family::B, 0.0, 0.0, 0.5, fin(1.0), 0.5, 0.4).unwrap();
        assert_eq!(r.d_tilde, 0.0);
        assert_eq!(r.delta, 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(classify(1, Family::B, 0.0, -0.1, 2.0, fin(2.0), 0.0, 0.0).is_err());
        assert!(classify(1, Family::B, 0.0, 0.0, 2.0, fin(0.0), 0.0, 0.0).is_err());
        assert!(classify(1, Family::B, 0.0, 0.0, 2.0, fin(2.0), 1.0, 0.0).is_err());
        assert!(classify(1, Family::B, f64::NAN, 0.0, 2.0, fin(2.0), 0.0, 0.0).is_err());
    }

    #[test]
    fn historical_rules_are_weaker_at_tau_zero() {
        let r = classify(1, Family::F, 0.0, 0.0, 2.0, fin(2.0), 0.0, 0.0).unwrap();
        let h = historical_rules(&r, &HistoricalInputs { alpha1: 1.0, alpha2: 1.0, beta_w: 1.0 }).unwrap();
        assert_eq!(h.len(), 2);
        let sharp = r.bounds(Rule::Sharp).unwrap();
        for hb in h {
            assert!(hb.bounds.d >= sharp.d && hb.bounds.f >= sharp.f);
        }
    }
}
