//! Risk-free CDS values on the tenor grid.
//!
//! Defaults are observed at tenor dates: a named default inside
//! `(t_x, t_{x+1}]` takes effect at `t_{x+1}` and the chain restarts there
//! from the state at the default. The protection leg pays `1 − R` on the
//! reference default; the premium accrues on the reference survival curve
//! by the trapezoid rule.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::contagion::{first_event_kernels, Entity, FirstEventChain, GeneratorSpec};
use crate::convention::{RankKind, RankRule};
use crate::error::{Error, Result};
pub use crate::grid::TenorGrid;
use crate::roots::find_root;

/// CDS economics, notional 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub maturity: f64,
    /// Running spread per year.
    pub spread: f64,
    /// Recovery of the reference entity.
    pub recovery: f64,
}

impl ContractSpec {
    pub fn new(maturity: f64, spread: f64, recovery: f64) -> Result<Self> {
        let c = Self { maturity, spread, recovery };
        c.validate()?;
        Ok(c)
    }

    pub fn with_spread(self, spread: f64) -> Self {
        Self { spread, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::InvalidContract(format!("maturity must be positive, got {}", self.maturity)));
        }
        if !(0.0..=1.0).contains(&self.recovery) {
            return Err(Error::InvalidContract(format!("recovery {} outside [0, 1]", self.recovery)));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::InvalidContract(format!("spread must be nonnegative, got {}", self.spread)));
        }
        Ok(())
    }
}

/// Which of the investor and the counterparty are still alive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Survivors {
    pub investor: bool,
    pub counterparty: bool,
}

impl Survivors {
    pub const BOTH: Survivors = Survivors { investor: true, counterparty: true };
    pub const INVESTOR: Survivors = Survivors { investor: true, counterparty: false };
    pub const COUNTERPARTY: Survivors = Survivors { investor: false, counterparty: true };
    pub const NONE: Survivors = Survivors { investor: false, counterparty: false };

    fn entities(self) -> Vec<Entity> {
        let mut v = Vec::with_capacity(3);
        if self.investor {
            v.push(Entity::Investor);
        }
        if self.counterparty {
            v.push(Entity::Counterparty);
        }
        v.push(Entity::Reference);
        v
    }

    fn without(self, e: Entity) -> Self {
        match e {
            Entity::Investor => Survivors { investor: false, ..self },
            Entity::Counterparty => Survivors { counterparty: false, ..self },
            Entity::Reference => self,
        }
    }
}

/// Leg values per tenor index and systemic count; both vanish at maturity.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskFreeLegs {
    /// Probability that the reference defaults by `T`.
    pub protection: Vec<Vec<f64>>,
    /// Expected premium-accrual time to `τ ∧ T`.
    pub annuity: Vec<Vec<f64>>,
}

impl RiskFreeLegs {
    /// `(1 − R)·protection − κ·annuity` at `(t_j, j0)`.
    pub fn value(&self, contract: &ContractSpec, j: usize, j0: usize) -> f64 {
        (1.0 - contract.recovery) * self.protection[j][j0] - contract.spread * self.annuity[j][j0]
    }
}

/// Risk-free leg tables for the survivor sets and count offsets a pricing
/// task needs.
#[derive(Clone, Debug)]
pub struct RiskFreeModel {
    spec: GeneratorSpec,
    grid: TenorGrid,
    legs: HashMap<(Survivors, usize), RiskFreeLegs>,
}

impl RiskFreeModel {
    /// Builds the tables for every `(survivors, offset)` in `requests` and
    /// for the states they can reach.
    pub fn build(spec: &GeneratorSpec, grid: &TenorGrid, requests: &[(Survivors, usize)]) -> Result<Self> {
        spec.validate()?;
        let mut model = Self { spec: spec.clone(), grid: grid.clone(), legs: HashMap::new() };
        for &(s, o) in requests {
            model.ensure(s, o)?;
        }
        Ok(model)
    }

    /// Tables for the all-alive chain only.
    pub fn standard(spec: &GeneratorSpec, grid: &TenorGrid) -> Result<Self> {
        Self::build(spec, grid, &[(Survivors::BOTH, 0)])
    }

    fn ensure(&mut self, surv: Survivors, offset: usize) -> Result<()> {
        if self.legs.contains_key(&(surv, offset)) {
            return Ok(());
        }
        let named: Vec<Entity> = surv.entities().into_iter().filter(|e| *e != Entity::Reference).collect();
        for &e in &named {
            self.ensure(surv.without(e), offset + 1)?;
        }
        let chain = FirstEventChain::from_spec(&self.spec, &surv.entities(), offset)?;
        let kernels = first_event_kernels(&chain, &self.grid)?;
        let w = self.spec.m + 1;
        let steps = self.grid.steps();
        let mut protection = vec![vec![0.0; w]; steps + 1];
        let mut annuity = vec![vec![0.0; w]; steps + 1];
        let ref_pos = chain.position(Entity::Reference).unwrap();
        let children: Vec<(usize, &RiskFreeLegs)> = named
            .iter()
            .map(|&e| (chain.position(e).unwrap(), &self.legs[&(surv.without(e), offset + 1)]))
            .collect();
        for j in (0..steps).rev() {
            let step = kernels.step(j);
            let dt = self.grid.dt(j);
            for w0 in 0..w {
                let mut p = 0.0;
                let mut a = 0.0;
                let mut ref_hit = 0.0;
                for v in 0..w {
                    let stay = step.stay[(w0, v)];
                    p += stay * protection[j + 1][v];
                    a += stay * annuity[j + 1][v];
                    ref_hit += step.hit[ref_pos][(w0, v)];
                    for &(pos, child) in &children {
                        let h = step.hit[pos][(w0, v)];
                        p += h * child.protection[j + 1][v];
                        a += h * child.annuity[j + 1][v];
                    }
                }
                protection[j][w0] = p + ref_hit;
                annuity[j][w0] = a + dt * (1.0 - 0.5 * ref_hit);
            }
        }
        self.legs.insert((surv, offset), RiskFreeLegs { protection, annuity });
        Ok(())
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TenorGrid {
        &self.grid
    }

    pub fn legs(&self, surv: Survivors, offset: usize) -> Result<&RiskFreeLegs> {
        self.legs.get(&(surv, offset)).ok_or_else(|| {
            Error::InvalidModel(format!("risk-free legs for {surv:?} at offset {offset} were not built"))
        })
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j > self.grid.steps() {
            return Err(Error::InvalidGrid(format!("tenor index {j} beyond maturity")));
        }
        Ok(())
    }
}

/// Risk-free CDS value at `t_j` given `l` systemic defaults and all named
/// parties alive.
pub fn riskfree_cds_value(contract: &ContractSpec, model: &RiskFreeModel, l: usize, j: usize) -> Result<f64> {
    model.check_index(j)?;
    if l > model.spec.m {
        return Err(Error::InvalidModel(format!("count {l} exceeds m = {}", model.spec.m)));
    }
    Ok(model.legs(Survivors::BOTH, 0)?.value(contract, j, l))
}

/// Premium leg `E[τ ∧ T − t_j]` for the all-alive state with `l` defaults.
pub fn riskfree_premium_leg(model: &RiskFreeModel, l: usize, j: usize) -> Result<f64> {
    model.check_index(j)?;
    Ok(model.legs(Survivors::BOTH, 0)?.annuity[j][l])
}

/// Spread making the risk-free CDS worthless at inception.
pub fn riskfree_par_spread(maturity: f64, recovery: f64, model: &RiskFreeModel) -> Result<f64> {
    let base = ContractSpec::new(maturity, 0.0, recovery)?;
    if (model.grid.maturity() - maturity).abs() > 1e-12 {
        return Err(Error::InvalidGrid(format!(
            "grid ends at {} but maturity is {maturity}",
            model.grid.maturity()
        )));
    }
    let l0 = model.spec.initial_count;
    let legs = model.legs(Survivors::BOTH, 0)?;
    if !(legs.protection[0][l0] > 0.0) {
        return Err(Error::Solver("protection leg is zero; par spread undefined".into()));
    }
    let root = find_root(|k| Ok(legs.value(&base.with_spread(k), 0, l0)), 0.0, 10.0, 1e-9)?;
    Ok(root.x)
}

/// Value of the `n`-th equivalent contract at `(t_j, j0)` once the
/// counterparty has defaulted, with `offset` named defaults in the count.
pub fn equivalent_contract_value_rank_n(
    contract: &ContractSpec,
    model: &RiskFreeModel,
    j0: usize,
    j: usize,
    rule: RankRule,
    offset: usize,
) -> Result<f64> {
    match rule.kind {
        RankKind::Zero => Ok(0.0),
        RankKind::RiskFree => {
            model.check_index(j)?;
            Ok(model.legs(Survivors::INVESTOR, offset)?.value(contract, j, j0))
        }
    }
}
