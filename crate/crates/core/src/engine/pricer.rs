//! Bilateral CDS pricing with successive equivalent contracts.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::conditioned::conditioned_model;
use super::tree::{node_data, NodeData, NodeSet, PricingTree};
use crate::cds::{riskfree_par_spread, ContractSpec, RiskFreeLegs, RiskFreeModel, Survivors};
use crate::contagion::{first_event_kernels, Entity, FirstEventChain, GeneratorSpec};
use crate::convention::{Convention, RankKind, RankRule};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::TenorGrid;
use crate::roots::find_root;
use crate::settlement::{settle, Party, SettlementMode, SettlementTerms};

/// Price tolerance of the par-spread solve.
pub const PRICE_TOLERANCE: f64 = 1e-8;
/// Search interval of the par-spread solve.
pub const SPREAD_BRACKET: (f64, f64) = (0.0, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub convention: Convention,
    pub rule: RankRule,
    /// Probability mass kept by the count windows of the tree.
    pub coverage: f64,
    /// Replacement-counterparty defaults raise the systemic count.
    pub systemic_replacements: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl EngineOptions {
    pub fn new(convention: Convention, rule: RankRule) -> Self {
        Self { convention, rule, coverage: 0.95, systemic_replacements: false, execution: Execution::default() }
    }

    pub fn with_coverage(mut self, coverage: f64) -> Self {
        self.coverage = coverage;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_systemic_replacements(mut self, on: bool) -> Self {
        self.systemic_replacements = on;
        self
    }
}

/// Close-out terms applied at every default inside the tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSettlement {
    #[serde(default)]
    pub mode: SettlementMode,
    pub r1: f64,
    pub r2: f64,
    /// Collateral as a fraction of the replacement value at the node.
    #[serde(default)]
    pub collateral_fraction: f64,
    /// Net lock-up margin for the lock-up modes.
    #[serde(default)]
    pub lockup: f64,
    /// Settle the investor's own default instead of treating it as worthless.
    #[serde(default)]
    pub investor_settlement: bool,
}

impl TreeSettlement {
    pub fn uncollateralized(r1: f64, r2: f64) -> Self {
        Self { mode: SettlementMode::Uncollateralized, r1, r2, collateral_fraction: 0.0, lockup: 0.0, investor_settlement: false }
    }

    pub fn with_investor_settlement(mut self, on: bool) -> Self {
        self.investor_settlement = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        SettlementTerms::uncollateralized(self.r1, self.r2).validate()?;
        if !(0.0..=1.0).contains(&self.collateral_fraction) {
            return Err(Error::InvalidSettlement(format!(
                "collateral fraction {} outside [0, 1]",
                self.collateral_fraction
            )));
        }
        if !self.lockup.is_finite() {
            return Err(Error::InvalidSettlement("lock-up must be finite".into()));
        }
        Ok(())
    }

    /// Terms at a node whose replacement value is `value`.
    pub fn terms(&self, value: f64) -> SettlementTerms {
        let mut t = SettlementTerms::uncollateralized(self.r1, self.r2).with_mode(self.mode);
        if self.mode.has_collateral() {
            let c = self.collateral_fraction * value.abs();
            t = if value >= 0.0 { t.with_collateral(0.0, c) } else { t.with_collateral(c, 0.0) };
        }
        if self.mode.has_lockup() {
            t = t.with_lockup(self.lockup);
        }
        t
    }

    pub fn counterparty_default(&self, value: f64) -> Result<f64> {
        settle(value, &self.terms(value), Party::Counterparty)
    }

    pub fn investor_default(&self, value: f64) -> Result<f64> {
        if self.investor_settlement {
            settle(value, &self.terms(value), Party::Investor)
        } else {
            Ok(0.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Children {
    Leaf { kind: RankKind, offset: usize },
    Layer(usize),
}

#[derive(Clone, Debug)]
struct Layer {
    offset: usize,
    nodes: Arc<NodeSet>,
    children: Children,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Valuation {
    Bilateral,
    FirstDefaultFree,
}

/// Spread-independent precomputation for one convention and rank rule.
#[derive(Clone, Debug)]
pub struct PricingEngine {
    spec: GeneratorSpec,
    grid: TenorGrid,
    recovery: f64,
    options: EngineOptions,
    riskfree: RiskFreeModel,
    root: NodeData,
    root_children: Children,
    layers: Vec<Layer>,
}

impl PricingEngine {
    pub fn new(spec: &GeneratorSpec, grid: &TenorGrid, recovery: f64, options: EngineOptions) -> Result<Self> {
        Self::validate_options(spec, &options)?;
        ContractSpec::new(grid.maturity(), 0.0, recovery)?;
        let n = options.rule.n;
        let offset_of = |k: usize| if options.systemic_replacements { k } else { 1 };

        let (root_children, plan): (Children, Vec<(usize, Children)>) = match options.convention {
            Convention::A => (Children::Leaf { kind: RankKind::RiskFree, offset: 1 }, vec![]),
            Convention::APrime => (
                Children::Layer(0),
                vec![(1, Children::Leaf { kind: RankKind::RiskFree, offset: 1 })],
            ),
            _ if n == 1 => (Children::Leaf { kind: options.rule.kind, offset: 1 }, vec![]),
            _ => {
                let plan = (1..n)
                    .map(|k| {
                        let child = if k + 1 == n {
                            Children::Leaf { kind: options.rule.kind, offset: offset_of(n) }
                        } else {
                            Children::Layer(k)
                        };
                        (offset_of(k), child)
                    })
                    .collect();
                (Children::Layer(0), plan)
            }
        };

        let mut requests = vec![(Survivors::BOTH, 0), (Survivors::INVESTOR, 1), (Survivors::COUNTERPARTY, 1)];
        for (offset, child) in &plan {
            requests.push((Survivors::COUNTERPARTY, offset + 1));
            if let Children::Leaf { offset: o, .. } = child {
                requests.push((Survivors::INVESTOR, *o));
            }
        }
        let riskfree = RiskFreeModel::build(spec, grid, &requests)?;

        let coverage_for = |c: &Children| match c {
            Children::Layer(_) => options.coverage,
            Children::Leaf { .. } => 1.0,
        };
        let mut cache: Vec<((usize, u64), Arc<NodeSet>)> = Vec::new();
        let mut layers = Vec::with_capacity(plan.len());
        for (offset, children) in plan {
            let cov = coverage_for(&children);
            let key = (offset, cov.to_bits());
            let nodes = match cache.iter().find(|(k, _)| *k == key) {
                Some((_, n)) => n.clone(),
                None => {
                    let chain = conditioned_model(spec, options.convention, offset)?;
                    let kernels = first_event_kernels(&chain, grid)?;
                    let nodes = Arc::new(NodeSet::build(&kernels, cov, options.execution));
                    cache.push((key, nodes.clone()));
                    nodes
                }
            };
            layers.push(Layer { offset, nodes, children });
        }

        let chain = FirstEventChain::from_spec(spec, &[Entity::Investor, Entity::Counterparty, Entity::Reference], 0)?;
        let kernels = first_event_kernels(&chain, grid)?;
        let root = node_data(&kernels, 0, spec.initial_count, coverage_for(&root_children));

        Ok(Self { spec: spec.clone(), grid: grid.clone(), recovery, options, riskfree, root, root_children, layers })
    }

    /// Checks that don't need any kernels.
    pub fn validate_options(spec: &GeneratorSpec, options: &EngineOptions) -> Result<()> {
        spec.validate()?;
        options.rule.validate()?;
        if !(0.5..=1.0).contains(&options.coverage) {
            return Err(Error::InvalidModel(format!("truncation coverage {} outside [0.5, 1]", options.coverage)));
        }
        Ok(())
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn grid(&self) -> &TenorGrid {
        &self.grid
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn riskfree(&self) -> &RiskFreeModel {
        &self.riskfree
    }

    pub fn contract(&self, spread: f64) -> ContractSpec {
        ContractSpec { maturity: self.grid.maturity(), spread, recovery: self.recovery }
    }

    /// Risk-free value of the CDS at inception.
    pub fn riskfree_value(&self, spread: f64) -> Result<f64> {
        Ok(self.riskfree.legs(Survivors::BOTH, 0)?.value(&self.contract(spread), 0, self.spec.initial_count))
    }

    pub fn riskfree_par_spread(&self) -> Result<f64> {
        riskfree_par_spread(self.grid.maturity(), self.recovery, &self.riskfree)
    }

    /// Replacement values under convention a: risk-free value once the
    /// original counterparty has defaulted.
    pub fn convention_a_replacement(&self) -> Result<&RiskFreeLegs> {
        self.riskfree.legs(Survivors::INVESTOR, 1)
    }

    fn child_value(&self, src: Children, values: &[Vec<Vec<f64>>], contract: &ContractSpec, j: usize, j0: usize) -> Result<f64> {
        Ok(match src {
            Children::Leaf { kind: RankKind::Zero, .. } => 0.0,
            Children::Leaf { kind: RankKind::RiskFree, offset } => {
                self.riskfree.legs(Survivors::INVESTOR, offset)?.value(contract, j, j0)
            }
            Children::Layer(i) => values[i][j][j0],
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn node_value(
        &self,
        node: &NodeData,
        children: Children,
        investor_offset: usize,
        values: &[Vec<Vec<f64>>],
        contract: &ContractSpec,
        settlement: &TreeSettlement,
        how: Valuation,
    ) -> Result<f64> {
        let mut v = (1.0 - contract.recovery) * node.protection - contract.spread * node.annuity;
        for h in &node.counterparty {
            let c = self.child_value(children, values, contract, h.next as usize, h.j0 as usize)?;
            v += h.weight
                * match how {
                    Valuation::Bilateral => settlement.counterparty_default(c)?,
                    Valuation::FirstDefaultFree => c,
                };
        }
        if how == Valuation::FirstDefaultFree || settlement.investor_settlement {
            let legs = self.riskfree.legs(Survivors::COUNTERPARTY, investor_offset)?;
            for h in &node.investor {
                let mv = legs.value(contract, h.next as usize, h.j0 as usize);
                v += h.weight
                    * match how {
                        Valuation::Bilateral => settlement.investor_default(mv)?,
                        Valuation::FirstDefaultFree => mv,
                    };
            }
        }
        Ok(v)
    }

    fn evaluate(&self, spread: f64, settlement: &TreeSettlement, how: Valuation) -> Result<PricingTree> {
        settlement.validate()?;
        let contract = self.contract(spread);
        contract.validate()?;
        let steps = self.grid.steps();
        let width = self.spec.m + 1;
        let mut values: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let rank = i + 1;
            let flat = self.options.execution.map_range((steps + 1) * width, |idx| {
                let (j, j0) = (idx / width, idx % width);
                if j < rank {
                    return Ok(f64::NAN);
                }
                self.node_value(layer.nodes.get(j, j0), layer.children, layer.offset + 1, &values, &contract, settlement, how)
            });
            let flat = flat.into_iter().collect::<Result<Vec<f64>>>()?;
            values[i] = flat.chunks(width).map(|c| c.to_vec()).collect();
        }
        let root = self.node_value(&self.root, self.root_children, 1, &values, &contract, settlement, how)?;
        Ok(PricingTree { layers: values, root, dates: self.grid.dates().to_vec() })
    }

    /// Full tree of equivalent-contract values at `spread`.
    pub fn build_tree(&self, spread: f64, settlement: &TreeSettlement) -> Result<PricingTree> {
        self.evaluate(spread, settlement, Valuation::Bilateral)
    }

    /// Bilateral price at inception.
    pub fn price_bilateral(&self, spread: f64, settlement: &TreeSettlement) -> Result<f64> {
        Ok(self.evaluate(spread, settlement, Valuation::Bilateral)?.root)
    }

    /// Price when every default is settled at the replacement value.
    pub fn first_default_free_price(&self, spread: f64) -> Result<f64> {
        let s = TreeSettlement::uncollateralized(1.0, 1.0);
        Ok(self.evaluate(spread, &s, Valuation::FirstDefaultFree)?.root)
    }

    /// Spread zeroing the bilateral price, with a monotonicity check of the
    /// price curve around it.
    pub fn par_spread_bilateral(&self, settlement: &TreeSettlement) -> Result<SpreadFit> {
        self.solve(|k| self.price_bilateral(k, settlement))
    }

    pub fn par_spread_first_default_free(&self) -> Result<SpreadFit> {
        self.solve(|k| self.first_default_free_price(k))
    }

    fn solve(&self, price: impl Fn(f64) -> Result<f64>) -> Result<SpreadFit> {
        let (lo, hi) = SPREAD_BRACKET;
        let root = find_root(&price, lo, hi, PRICE_TOLERANCE).map_err(|e| {
            let curve: Vec<String> = [0.0, 0.01, 0.1, 1.0, 10.0]
                .iter()
                .map(|&k| match price(k) {
                    Ok(p) => format!("{k}:{p:.6e}"),
                    Err(_) => format!("{k}:error"),
                })
                .collect();
            match e {
                Error::Solver(msg) => Error::Solver(format!("{msg}; price curve {}", curve.join(" "))),
                other => other,
            }
        })?;
        let k = root.x;
        let mut samples = Vec::new();
        for x in [0.0, 0.5 * k, k, 1.5 * k, 3.0 * k + 1e-3, hi] {
            samples.push((x, price(x)?));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        samples.dedup_by(|a, b| a.0 == b.0);
        if samples.windows(2).any(|w| w[1].1 >= w[0].1) {
            let curve: Vec<String> = samples.iter().map(|(x, p)| format!("{x:.6e}:{p:.6e}")).collect();
            return Err(Error::Solver(format!("price is not decreasing in the spread: {}", curve.join(" "))));
        }
        Ok(SpreadFit { spread: k, price: root.fx, evaluations: root.evaluations, samples })
    }

    /// Fits the bilateral spread and reports the adjustment at inception.
    pub fn cva(&self, settlement: &TreeSettlement) -> Result<BilateralPriceReport> {
        let fit = self.par_spread_bilateral(settlement)?;
        let cva = self.riskfree_value(fit.spread)?;
        Ok(BilateralPriceReport {
            convention: self.options.convention,
            rule: self.options.rule,
            mode: settlement.mode,
            r2: settlement.r2,
            spread: fit.spread,
            cva,
            price_at_spread: fit.price,
            first_default_free_price: self.first_default_free_price(fit.spread)?,
            riskfree_spread: self.riskfree_par_spread()?,
            price_samples: fit.samples,
        })
    }

    /// Adjustment `P − P̂` at `spread` summed event by event: replacement
    /// value lost at the investor's default, and replacement value less
    /// settlement at the counterparty's default, using the tree's
    /// settlement inputs.
    pub fn cva_direct(&self, spread: f64, settlement: &TreeSettlement, tree: &PricingTree) -> Result<f64> {
        settlement.validate()?;
        let contract = self.contract(spread);
        let after_investor = self.riskfree.legs(Survivors::COUNTERPARTY, 1)?;
        let after_counterparty = self.riskfree.legs(Survivors::INVESTOR, 1)?;
        let mut cva = 0.0;
        for h in &self.root.investor {
            let v = after_investor.value(&contract, h.next as usize, h.j0 as usize);
            cva += h.weight * (v - settlement.investor_default(v)?);
        }
        for h in &self.root.counterparty_full {
            cva += h.weight * after_counterparty.value(&contract, h.next as usize, h.j0 as usize);
        }
        for h in &self.root.counterparty {
            let c = self.child_value(self.root_children, &tree.layers, &contract, h.next as usize, h.j0 as usize)?;
            cva -= h.weight * settlement.counterparty_default(c)?;
        }
        Ok(cva)
    }
}

/// Result of a par-spread solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadFit {
    pub spread: f64,
    /// Price at the fitted spread.
    pub price: f64,
    pub evaluations: usize,
    /// `(spread, price)` samples used for the monotonicity check.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilateralPriceReport {
    pub convention: Convention,
    pub rule: RankRule,
    pub mode: SettlementMode,
    pub r2: f64,
    pub spread: f64,
    /// Risk-free value at the fitted spread.
    pub cva: f64,
    pub price_at_spread: f64,
    pub first_default_free_price: f64,
    pub riskfree_spread: f64,
    pub price_samples: Vec<(f64, f64)>,
}

/// Compact record for serialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub convention: String,
    pub rule: String,
    pub settlement: String,
    #[serde(rename = "R2")]
    pub r2: f64,
    pub spread: f64,
    pub cva: f64,
}

impl From<&BilateralPriceReport> for ReportRecord {
    fn from(r: &BilateralPriceReport) -> Self {
        Self {
            convention: r.convention.to_string(),
            rule: r.rule.label(),
            settlement: r.mode.label().to_string(),
            r2: r.r2,
            spread: r.spread,
            cva: r.cva,
        }
    }
}

/// Fits the bilateral spread for one convention and rank rule.
pub fn cva(spec: &GeneratorSpec, grid: &TenorGrid, recovery: f64, options: EngineOptions, settlement: &TreeSettlement) -> Result<BilateralPriceReport> {
    PricingEngine::new(spec, grid, recovery, options)?.cva(settlement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contagion::{event_probabilities, ChainState, Multipliers};
    use approx::assert_abs_diff_eq;

    fn spec() -> GeneratorSpec {
        GeneratorSpec::from_survival(10, 0.97, 2.5, Multipliers::new(1.0, 0.8, 1.3)).unwrap()
    }

    fn grid(steps: usize) -> TenorGrid {
        TenorGrid::uniform(3.0, steps).unwrap()
    }

    fn engine(c: Convention, rule: RankRule, steps: usize) -> PricingEngine {
        PricingEngine::new(&spec(), &grid(steps), 0.45, EngineOptions::new(c, rule)).unwrap()
    }

    #[test]
    fn rank_one_collapses_to_convention_a() {
        let s = TreeSettlement::uncollateralized(0.4, 0.4);
        let a = engine(Convention::A, RankRule::risk_free(1), 12).price_bilateral(0.03, &s).unwrap();
        for c in [Convention::B, Convention::C, Convention::CPrime] {
            let p = engine(c, RankRule::risk_free(1), 12).price_bilateral(0.03, &s).unwrap();
            assert_abs_diff_eq!(p, a, epsilon = 1e-14);
        }
    }

    #[test]
    fn full_recovery_everywhere_is_first_default_free() {
        let s = TreeSettlement::uncollateralized(1.0, 1.0).with_investor_settlement(true);
        for c in Convention::ALL {
            let e = engine(c, RankRule::risk_free(3), 12);
            let p = e.price_bilateral(0.02, &s).unwrap();
            assert_abs_diff_eq!(p, e.first_default_free_price(0.02).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn nothing_to_exchange_prices_at_zero() {
        let e = PricingEngine::new(&spec(), &grid(12), 1.0, EngineOptions::new(Convention::B, RankRule::zero(1))).unwrap();
        let p = e.price_bilateral(0.0, &TreeSettlement::uncollateralized(0.4, 0.0)).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn convention_a_with_full_recovery_has_no_adjustment() {
        let e = engine(Convention::A, RankRule::risk_free(1), 36);
        let s = TreeSettlement::uncollateralized(1.0, 1.0).with_investor_settlement(true);
        let r = e.cva(&s).unwrap();
        assert_abs_diff_eq!(r.spread, r.riskfree_spread, epsilon = 1e-7);
        assert_abs_diff_eq!(r.cva, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn direct_adjustment_matches_price_difference() {
        let steps = 24;
        let s = TreeSettlement::uncollateralized(0.4, 0.3);
        for c in Convention::ALL {
            let e = engine(c, RankRule::risk_free(3), steps);
            for k in [0.0, 0.02, 0.1] {
                let tree = e.build_tree(k, &s).unwrap();
                let direct = e.cva_direct(k, &s, &tree).unwrap();
                let diff = e.riskfree_value(k).unwrap() - tree.root;
                assert_abs_diff_eq!(direct, diff, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn bilateral_spread_is_below_riskfree_and_cva_positive() {
        let e = engine(Convention::B, RankRule::risk_free(2), 24);
        let r = e.cva(&TreeSettlement::uncollateralized(0.4, 0.4)).unwrap();
        assert!(r.spread < r.riskfree_spread);
        assert!(r.cva > 0.0);
        assert!(r.price_at_spread.abs() < PRICE_TOLERANCE);
        assert!(r.price_samples.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn coverage_is_validated() {
        let o = EngineOptions::new(Convention::B, RankRule::risk_free(2)).with_coverage(0.3);
        assert!(PricingEngine::new(&spec(), &grid(6), 0.45, o).is_err());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let s = TreeSettlement::uncollateralized(0.4, 0.4);
        let mk = |x| {
            let o = EngineOptions::new(Convention::C, RankRule::risk_free(4)).with_execution(x);
            PricingEngine::new(&spec(), &grid(18), 0.45, o).unwrap().price_bilateral(0.02, &s).unwrap()
        };
        assert_eq!(mk(Execution::Sequential), mk(Execution::Parallel));
    }

    /// Memoized recursion over event tables, full coverage.
    struct Oracle<'a> {
        engine: &'a PricingEngine,
        kernels: Vec<crate::contagion::FirstEventKernels>,
        n: usize,
        contract: ContractSpec,
        s: TreeSettlement,
    }

    impl Oracle<'_> {
        fn value(&self, rank: usize, j: usize, j0: usize) -> f64 {
            let rf = self.engine.riskfree();
            if rank == self.n {
                return rf.legs(Survivors::INVESTOR, 1).unwrap().value(&self.contract, j, j0);
            }
            let kernels = &self.kernels[rank];
            let table = event_probabilities(kernels, ChainState::alive(j0), j).unwrap();
            let g = self.engine.grid();
            let mut v = 0.0;
            for x in j..g.steps() {
                let refr = table.first_default_mass(x, Entity::Reference);
                v += (1.0 - self.contract.recovery) * refr;
                v -= self.contract.spread * g.dt(x) * (table.survival(x) - 0.5 * refr);
                for (jj, &q) in table.first_default(x, Entity::Counterparty).unwrap().iter().enumerate() {
                    if q > 0.0 {
                        v += q * self.s.counterparty_default(self.value(rank + 1, x + 1, jj)).unwrap();
                    }
                }
            }
            v
        }
    }

    #[test]
    fn tree_matches_recursive_oracle_at_full_coverage() {
        let n = 3;
        let o = EngineOptions::new(Convention::B, RankRule::risk_free(n)).with_coverage(1.0);
        let sp = spec();
        let g = grid(6);
        let e = PricingEngine::new(&sp, &g, 0.45, o).unwrap();
        let mut kernels = vec![first_event_kernels(
            &FirstEventChain::from_spec(&sp, &[Entity::Investor, Entity::Counterparty, Entity::Reference], 0).unwrap(),
            &g,
        )
        .unwrap()];
        for _ in 1..n {
            kernels.push(first_event_kernels(&conditioned_model(&sp, Convention::B, 1).unwrap(), &g).unwrap());
        }
        let s = TreeSettlement::uncollateralized(0.4, 0.3);
        let oracle = Oracle { engine: &e, kernels, n, contract: e.contract(0.02), s };
        let expect = oracle.value(0, 0, sp.initial_count);
        assert_abs_diff_eq!(e.price_bilateral(0.02, &s).unwrap(), expect, epsilon = 1e-13);
    }

    #[test]
    fn truncation_error_is_small() {
        let s = TreeSettlement::uncollateralized(0.4, 0.4);
        let full = PricingEngine::new(&spec(), &grid(24), 0.45, EngineOptions::new(Convention::B, RankRule::risk_free(3)).with_coverage(1.0))
            .unwrap()
            .cva(&s)
            .unwrap();
        let cut = engine(Convention::B, RankRule::risk_free(3), 24).cva(&s).unwrap();
        assert!(((cut.spread - full.spread) / full.spread).abs() < 5e-3);
    }
}
