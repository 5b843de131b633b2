//! Settlement values, exposures and loss/gain given default.
//!
//! Amounts are seen from the investor. `M` is the mark-to-market value of
//! the contract, `C2` collateral held by the investor (used when `M >= 0`),
//! `C1` collateral posted by the investor (used when `M < 0`) and
//! `V = U2 − U1` the net lock-up margin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The defaulting party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Investor,
    Counterparty,
}

/// Margin agreement in force.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettlementMode {
    #[default]
    Uncollateralized,
    Collateral,
    LockUp,
    Segregated,
    LockUpSegregated,
}

impl SettlementMode {
    pub fn label(self) -> &'static str {
        match self {
            SettlementMode::Uncollateralized => "uncollateralized",
            SettlementMode::Collateral => "collateral",
            SettlementMode::LockUp => "lock_up",
            SettlementMode::Segregated => "segregated",
            SettlementMode::LockUpSegregated => "lock_up_segregated",
        }
    }

    pub fn has_collateral(self) -> bool {
        self != SettlementMode::Uncollateralized
    }

    pub fn has_lockup(self) -> bool {
        matches!(self, SettlementMode::LockUp | SettlementMode::LockUpSegregated)
    }

    pub fn is_segregated(self) -> bool {
        matches!(self, SettlementMode::Segregated | SettlementMode::LockUpSegregated)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlementTerms {
    /// Investor recovery rate.
    pub r1: f64,
    /// Counterparty recovery rate.
    pub r2: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
    #[serde(default)]
    pub u1: f64,
    #[serde(default)]
    pub u2: f64,
    #[serde(default)]
    pub mode: SettlementMode,
}

impl SettlementTerms {
    pub fn uncollateralized(r1: f64, r2: f64) -> Self {
        Self { r1, r2, c1: 0.0, c2: 0.0, u1: 0.0, u2: 0.0, mode: SettlementMode::Uncollateralized }
    }

    pub fn with_mode(mut self, mode: SettlementMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_collateral(mut self, c1: f64, c2: f64) -> Self {
        self.c1 = c1;
        self.c2 = c2;
        self
    }

    /// Sets the net lock-up `V`, split into its nonnegative parts.
    pub fn with_lockup(mut self, v: f64) -> Self {
        self.u2 = v.max(0.0);
        self.u1 = (-v).max(0.0);
        self
    }

    /// Net lock-up margin `V = U2 − U1`.
    pub fn v(&self) -> f64 {
        self.u2 - self.u1
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("R1", self.r1), ("R2", self.r2)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidSettlement(format!("{name} = {r} outside [0, 1]")));
            }
        }
        for (name, c) in [("C1", self.c1), ("C2", self.c2), ("U1", self.u1), ("U2", self.u2)] {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidSettlement(format!("{name} = {c} must be nonnegative")));
            }
        }
        Ok(())
    }

    fn check_alignment(&self, m: f64) -> Result<()> {
        if m < 0.0 && self.c2 > 0.0 {
            return Err(Error::InvalidSettlement(format!("C2 = {} held while M = {m} < 0", self.c2)));
        }
        if m >= 0.0 && self.c1 > 0.0 {
            return Err(Error::InvalidSettlement(format!("C1 = {} posted while M = {m} >= 0", self.c1)));
        }
        Ok(())
    }
}

#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

/// Collateralized exposure `E = M − C`, `C` signed (negative when posted by
/// the investor).
pub fn exposure(m: f64, c: f64) -> f64 {
    m - c
}

// Every settlement value is written as `M` minus the survivor's loss or
// plus its gain on the uncollateralized excess `y`, so full recovery and
// full collateral return `M` bit for bit.

#[inline]
fn counterparty_close(m: f64, y: f64, r2: f64) -> f64 {
    m - (1.0 - r2) * pos(y)
}

#[inline]
fn investor_close(m: f64, y: f64, r1: f64) -> f64 {
    m + (1.0 - r1) * neg(y)
}

pub fn settle_uncollateralized(m: f64, terms: &SettlementTerms, defaulter: Party) -> f64 {
    match defaulter {
        Party::Counterparty => counterparty_close(m, m, terms.r2),
        Party::Investor => investor_close(m, m, terms.r1),
    }
}

/// Excess of `M` over the collateral on the side that applies.
#[inline]
fn excess(m: f64, terms: &SettlementTerms, v: f64) -> f64 {
    if m >= 0.0 {
        m - terms.c2 + v
    } else {
        m + terms.c1 + v
    }
}

pub fn settle_collateralized(m: f64, terms: &SettlementTerms, defaulter: Party) -> Result<f64> {
    terms.check_alignment(m)?;
    let y = excess(m, terms, 0.0);
    Ok(match defaulter {
        Party::Investor => investor_close(m, y, terms.r1),
        Party::Counterparty => counterparty_close(m, y, terms.r2),
    })
}

pub fn settle_lockup(m: f64, terms: &SettlementTerms, defaulter: Party) -> Result<f64> {
    terms.check_alignment(m)?;
    let y = excess(m, terms, terms.v());
    Ok(match defaulter {
        Party::Investor => investor_close(m, y, terms.r1),
        Party::Counterparty => counterparty_close(m, y, terms.r2),
    })
}

/// Collateral posted by the defaulter's creditor is returned in full.
pub fn settle_segregated(m: f64, terms: &SettlementTerms, defaulter: Party) -> Result<f64> {
    terms.check_alignment(m)?;
    let y = excess(m, terms, 0.0);
    Ok(match defaulter {
        Party::Investor if m >= 0.0 => m,
        Party::Investor => investor_close(m, y, terms.r1),
        Party::Counterparty if m < 0.0 => m,
        Party::Counterparty => counterparty_close(m, y, terms.r2),
    })
}

pub fn settle_lockup_segregated(m: f64, terms: &SettlementTerms, defaulter: Party) -> Result<f64> {
    terms.check_alignment(m)?;
    let y = excess(m, terms, terms.v());
    Ok(match defaulter {
        Party::Investor if m >= 0.0 => m,
        Party::Investor => investor_close(m, y, terms.r1),
        Party::Counterparty if m < 0.0 => m,
        Party::Counterparty => counterparty_close(m, y, terms.r2),
    })
}

/// Settlement value under `terms.mode`.
pub fn settle(m: f64, terms: &SettlementTerms, defaulter: Party) -> Result<f64> {
    match terms.mode {
        SettlementMode::Uncollateralized => Ok(settle_uncollateralized(m, terms, defaulter)),
        SettlementMode::Collateral => settle_collateralized(m, terms, defaulter),
        SettlementMode::LockUp => settle_lockup(m, terms, defaulter),
        SettlementMode::Segregated => settle_segregated(m, terms, defaulter),
        SettlementMode::LockUpSegregated => settle_lockup_segregated(m, terms, defaulter),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LgdVariant {
    Uncollateralized,
    Collateralized,
    Segregated,
}

/// Loss on counterparty default or gain on investor default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LgdSide {
    Loss,
    Gain,
}

/// Investor's loss (`M − S²`) or gain (`S¹ − M`) when marked value and
/// replacement cost coincide.
pub fn lgd_symmetric(m: f64, terms: &SettlementTerms, variant: LgdVariant, side: LgdSide) -> f64 {
    let (r1, r2, c1, c2) = (terms.r1, terms.r2, terms.c1, terms.c2);
    let nonneg = m >= 0.0;
    match (variant, side) {
        (LgdVariant::Uncollateralized, LgdSide::Loss) => (1.0 - r2) * pos(m),
        (LgdVariant::Uncollateralized, LgdSide::Gain) => (1.0 - r1) * neg(m),
        (LgdVariant::Collateralized, LgdSide::Loss) => {
            (1.0 - r2) * if nonneg { pos(m - c2) } else { pos(m + c1) }
        }
        (LgdVariant::Collateralized, LgdSide::Gain) => {
            (1.0 - r1) * if nonneg { neg(m - c2) } else { neg(m + c1) }
        }
        (LgdVariant::Segregated, LgdSide::Loss) => {
            if nonneg {
                (1.0 - r2) * pos(m - c2)
            } else {
                0.0
            }
        }
        (LgdVariant::Segregated, LgdSide::Gain) => {
            if nonneg {
                0.0
            } else {
                (1.0 - r1) * neg(m + c1)
            }
        }
    }
}

/// Threshold, minimum transfer and haircut parameters of a margin agreement.
/// Index 1 refers to collateral posted by the investor, 2 by the counterparty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginTerms {
    pub threshold1: f64,
    pub threshold2: f64,
    pub min_transfer1: f64,
    pub min_transfer2: f64,
    pub haircut1: f64,
    pub haircut2: f64,
    /// Margin period of risk in years.
    pub margin_period: f64,
    /// Gross up pre-default collateral by the haircut as well.
    pub diversified: bool,
}

impl MarginTerms {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.threshold1,
            self.threshold2,
            self.min_transfer1,
            self.min_transfer2,
            self.haircut1,
            self.haircut2,
            self.margin_period,
        ];
        if all.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidSettlement("margin terms must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Approximate collateral held against `side`'s exposure.
///
/// `exposure_path` holds `(t, E_t)` samples with increasing `t`. Before the
/// first default the collateral is `(E − (H + A))⁺`; afterwards it stays
/// frozen at its value at `first_default`, grossed up by `1 + h`, until the
/// end of the margin period. Samples after that are dropped.
pub fn collateral_path(exposure_path: &[(f64, f64)], margin: &MarginTerms, first_default: f64, side: Party) -> Vec<(f64, f64)> {
    let (h, a, cut) = match side {
        Party::Investor => (margin.threshold1, margin.min_transfer1, margin.haircut1),
        Party::Counterparty => (margin.threshold2, margin.min_transfer2, margin.haircut2),
    };
    let raw = |e: f64| pos(e - (h + a));
    let gross = if margin.diversified { 1.0 + cut } else { 1.0 };
    let at_default = exposure_path
        .iter()
        .take_while(|(t, _)| *t <= first_default)
        .last()
        .map(|&(_, e)| raw(e))
        .unwrap_or(0.0);
    let frozen = (1.0 + cut) * at_default;
    exposure_path
        .iter()
        .take_while(|(t, _)| *t <= first_default + margin.margin_period)
        .map(|&(t, e)| if t <= first_default { (t, gross * raw(e)) } else { (t, frozen) })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collateralization {
    Under,
    Over,
    Neither,
}

/// Sign-pair classification of an exposure from `side`'s perspective.
pub fn classify_collateralization(e: f64, m: f64, side: Party) -> Collateralization {
    match side {
        Party::Investor if e > 0.0 && m > 0.0 => Collateralization::Under,
        Party::Investor if e > 0.0 && m < 0.0 => Collateralization::Over,
        Party::Counterparty if e > 0.0 && m < 0.0 => Collateralization::Under,
        Party::Counterparty if e > 0.0 && m > 0.0 => Collateralization::Over,
        _ => Collateralization::Neither,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(r2: f64) -> SettlementTerms {
        SettlementTerms::uncollateralized(0.5, r2)
    }

    #[test]
    fn uncollateralized_examples() {
        assert_relative_eq!(settle_uncollateralized(100.0, &t(0.4), Party::Counterparty), 40.0);
        assert_eq!(settle_uncollateralized(-50.0, &t(0.4), Party::Counterparty), -50.0);
        let full = SettlementTerms::uncollateralized(1.0, 1.0);
        for m in [-3.0, 0.0, 7.5] {
            assert_eq!(settle_uncollateralized(m, &full, Party::Counterparty), m);
            assert_eq!(settle_uncollateralized(m, &full, Party::Investor), m);
        }
    }

    #[test]
    fn exposure_examples() {
        assert_eq!(exposure(100.0, 60.0), 40.0);
        assert_eq!(exposure(33.0, 33.0), 0.0);
        assert_eq!(exposure(-50.0, -30.0), -20.0);
    }

    #[test]
    fn collateralized_examples() {
        let a = t(0.5).with_mode(SettlementMode::Collateral).with_collateral(0.0, 60.0);
        assert_relative_eq!(settle_collateralized(100.0, &a, Party::Counterparty).unwrap(), 80.0);
        let b = t(0.5).with_mode(SettlementMode::Collateral).with_collateral(30.0, 0.0);
        assert_relative_eq!(settle_collateralized(-50.0, &b, Party::Counterparty).unwrap(), -50.0);
        let full = t(0.3).with_mode(SettlementMode::Collateral).with_collateral(0.0, 42.0);
        assert_eq!(settle_collateralized(42.0, &full, Party::Counterparty).unwrap(), 42.0);
        assert_eq!(settle_collateralized(42.0, &full, Party::Investor).unwrap(), 42.0);
    }

    #[test]
    fn misaligned_collateral_rejected() {
        let a = t(0.5).with_mode(SettlementMode::Collateral).with_collateral(0.0, 60.0);
        assert!(settle_collateralized(-1.0, &a, Party::Counterparty).is_err());
        let b = t(0.5).with_mode(SettlementMode::Collateral).with_collateral(10.0, 0.0);
        assert!(settle(1.0, &b, Party::Investor).is_err());
    }

    #[test]
    fn lockup_examples() {
        let a = t(0.5).with_mode(SettlementMode::LockUp).with_collateral(0.0, 60.0).with_lockup(10.0);
        assert_relative_eq!(settle_lockup(100.0, &a, Party::Counterparty).unwrap(), 75.0);
        let full = SettlementTerms { r1: 1.0, r2: 1.0, ..a };
        assert_eq!(settle_lockup(100.0, &full, Party::Counterparty).unwrap(), 100.0);
    }

    #[test]
    fn segregated_examples() {
        let a = SettlementTerms::uncollateralized(0.3, 0.3).with_mode(SettlementMode::Segregated);
        assert_relative_eq!(settle_segregated(-50.0, &a, Party::Investor).unwrap(), -15.0);
        let b = a.with_collateral(55.0, 0.0);
        assert_relative_eq!(settle_segregated(-50.0, &b, Party::Investor).unwrap(), -50.0);
        let c = a.with_collateral(0.0, 60.0);
        assert_relative_eq!(settle_segregated(40.0, &c, Party::Counterparty).unwrap(), 40.0);
        let d = t(0.5).with_mode(SettlementMode::Segregated).with_collateral(0.0, 60.0);
        assert_relative_eq!(settle_segregated(100.0, &d, Party::Counterparty).unwrap(), 80.0);
    }

    #[test]
    fn lockup_segregated_examples() {
        let a = t(0.5).with_mode(SettlementMode::LockUpSegregated).with_collateral(0.0, 60.0).with_lockup(10.0);
        assert_eq!(settle_lockup_segregated(100.0, &a, Party::Investor).unwrap(), 100.0);
        assert_relative_eq!(settle_lockup_segregated(100.0, &a, Party::Counterparty).unwrap(), 75.0);
    }

    #[test]
    fn lgd_examples() {
        let a = t(0.4);
        assert_relative_eq!(lgd_symmetric(100.0, &a, LgdVariant::Uncollateralized, LgdSide::Loss), 60.0);
        assert_eq!(lgd_symmetric(-50.0, &a, LgdVariant::Uncollateralized, LgdSide::Loss), 0.0);
        assert_eq!(lgd_symmetric(100.0, &t(1.0), LgdVariant::Uncollateralized, LgdSide::Loss), 0.0);
    }

    #[test]
    fn collateral_path_examples() {
        let m = MarginTerms {
            threshold1: 10.0,
            threshold2: 10.0,
            min_transfer1: 5.0,
            min_transfer2: 5.0,
            haircut1: 0.1,
            haircut2: 0.1,
            margin_period: 0.5,
            diversified: false,
        };
        let path = [(0.0, 20.0), (0.5, 12.0), (1.0, 20.0), (1.2, 99.0), (1.4, 0.0), (2.0, 50.0)];
        let c = collateral_path(&path, &m, 1.0, Party::Investor);
        assert_eq!(c.len(), 5);
        assert_relative_eq!(c[0].1, 5.0);
        assert_eq!(c[1].1, 0.0);
        assert_relative_eq!(c[2].1, 5.0);
        assert_relative_eq!(c[3].1, 5.5);
        assert_relative_eq!(c[4].1, 5.5);
        let d = collateral_path(&path, &MarginTerms { diversified: true, ..m }, 1.0, Party::Investor);
        assert_relative_eq!(d[0].1, 5.5);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_collateralization(5.0, 10.0, Party::Investor), Collateralization::Under);
        assert_eq!(classify_collateralization(5.0, -10.0, Party::Investor), Collateralization::Over);
        assert_eq!(classify_collateralization(0.0, 3.0, Party::Investor), Collateralization::Neither);
        assert_eq!(classify_collateralization(0.0, -3.0, Party::Counterparty), Collateralization::Neither);
    }
}
