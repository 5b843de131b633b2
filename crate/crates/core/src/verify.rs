//! Invariant suites shared by the `verify` command and the test suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contagion::{
    build_counting_generator, build_generator, event_probabilities, first_event_kernels, propagate, step_kernels, ChainState,
    Entity, FirstEventChain, GeneratorSpec, IntensityTable, Multipliers,
};
use crate::engine::{EngineOptions, PricingEngine, TreeSettlement};
use crate::error::Result;
use crate::exec::Execution;
use crate::grid::TenorGrid;
use crate::mc::{compare_event_tables, estimate_convention_a_price, first_named_frequencies, simulate, SimConfig};
use crate::settlement::{settle, Party, SettlementMode, SettlementTerms};
use crate::{Convention, RankRule};

/// Outcome of one suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    /// Worst measured deviation.
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl SuiteResult {
    pub fn new(name: &str, measured: f64, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), passed: measured <= tolerance, measured, tolerance, detail }
    }

    fn failed(name: &str, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), passed: false, measured: f64::NAN, tolerance, detail }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: measured {:.3e} (tolerance {:.3e}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance,
            self.detail
        )
    }
}

const MODES: [SettlementMode; 5] = [
    SettlementMode::Uncollateralized,
    SettlementMode::Collateral,
    SettlementMode::LockUp,
    SettlementMode::Segregated,
    SettlementMode::LockUpSegregated,
];

fn bits_differ(a: f64, b: f64) -> bool {
    a.to_bits() != b.to_bits()
}

/// Randomized exact identities of the settlement values: full recovery and
/// full collateral return `M`, and every mode reduces to the simpler one
/// when its extra feature is switched off.
pub fn settlement_identities(tuples: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    let mut first = String::new();
    let mut note = |what: &str, m: f64, got: f64, want: f64| {
        failures += 1;
        if first.is_empty() {
            first = format!("first failure: {what} at M = {m}: {got} != {want}");
        }
    };
    for _ in 0..tuples {
        let m: f64 = rng.random_range(-2.0..2.0);
        let c: f64 = rng.random_range(0.0..2.0);
        let v: f64 = rng.random_range(-1.0..1.0);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let (c1, c2) = if m >= 0.0 { (0.0, c) } else { (c, 0.0) };
        let base = SettlementTerms::uncollateralized(r1, r2).with_collateral(c1, c2).with_lockup(v);
        for party in [Party::Investor, Party::Counterparty] {
            let s = |t: SettlementTerms| settle(m, &t, party).expect("aligned terms");
            for mode in MODES {
                let full_recovery = SettlementTerms { r1: 1.0, r2: 1.0, ..base }.with_mode(mode);
                let got = s(full_recovery);
                if bits_differ(got, m) {
                    note("full recovery", m, got, m);
                }
            }
            let (fc1, fc2) = if m >= 0.0 { (0.0, m) } else { (-m, 0.0) };
            for mode in [SettlementMode::Collateral, SettlementMode::Segregated] {
                let full = base.with_collateral(fc1, fc2).with_mode(mode);
                let got = s(full);
                if bits_differ(got, m) {
                    note("full collateral", m, got, m);
                }
            }
            let no_lockup = base.with_lockup(0.0);
            let chains = [
                (no_lockup.with_mode(SettlementMode::LockUp), no_lockup.with_mode(SettlementMode::Collateral), "lock-up V = 0"),
                (
                    no_lockup.with_mode(SettlementMode::LockUpSegregated),
                    no_lockup.with_mode(SettlementMode::Segregated),
                    "segregated lock-up V = 0",
                ),
                (
                    base.with_collateral(0.0, 0.0).with_lockup(0.0).with_mode(SettlementMode::Collateral),
                    base.with_mode(SettlementMode::Uncollateralized),
                    "zero collateral",
                ),
            ];
            for (a, b, what) in chains {
                let (x, y) = (s(a), s(b));
                if bits_differ(x, y) {
                    note(what, m, x, y);
                }
            }
            // segregation only changes the side where the survivor posted
            let owes = (party == Party::Counterparty) == (m >= 0.0);
            if owes {
                let (x, y) = (s(base.with_mode(SettlementMode::Segregated)), s(base.with_mode(SettlementMode::Collateral)));
                if bits_differ(x, y) {
                    note("segregation on the defaulter's side", m, x, y);
                }
            }
        }
    }
    let detail = if failures == 0 { format!("{tuples} tuples") } else { format!("{failures} violations; {first}") };
    SuiteResult::new("settlement identities", failures as f64, 0.0, detail)
}

/// Law of the total default count: full chain against the counting chain
/// at `dates` equally spaced dates up to `horizon`, for each `m`, with unit
/// multipliers. With `tamper` a negative rate is written into the full
/// generator first; validation must catch it.
pub fn counting_chain_equivalence(intensity: &IntensityTable, ms: &[usize], dates: usize, horizon: f64, tamper: bool) -> SuiteResult {
    const TOL: f64 = 1e-10;
    let name = "counting-chain reduction";
    let grid = match TenorGrid::uniform(horizon, dates) {
        Ok(g) => g,
        Err(e) => return SuiteResult::failed(name, TOL, e.to_string()),
    };
    let mut worst = 0.0f64;
    for &m in ms {
        let spec = match GeneratorSpec::new(m, intensity.clone(), Multipliers::UNIT) {
            Ok(s) => s,
            Err(e) => return SuiteResult::failed(name, TOL, format!("m = {m}: {e}")),
        };
        let run = || -> Result<f64> {
            let mut full = build_generator(&spec)?;
            if tamper {
                let (from, to) = (ChainState::alive(0).index(), ChainState { investor: true, ..ChainState::alive(0) }.index());
                let r = full.rate(from, to);
                full.set_raw(from, to, -r);
                full.set_raw(from, from, full.rate(from, from) + 2.0 * r);
            }
            full.validate()?;
            let counting = build_counting_generator(&spec)?;
            counting.validate()?;
            let kf = step_kernels(&full, &grid)?;
            let kc = step_kernels(&counting, &grid)?;
            let mut p = vec![0.0; full.dim()];
            p[ChainState::alive(0).index()] = 1.0;
            let mut q = vec![0.0; counting.dim()];
            q[0] = 1.0;
            let mut err = 0.0f64;
            for x in 0..grid.steps() {
                p = propagate(&p, &kf[x..=x]);
                q = propagate(&q, &kc[x..=x]);
                let mut law = vec![0.0; counting.dim()];
                for (i, s) in full.states().iter().enumerate() {
                    law[s.total_defaults()] += p[i];
                }
                err = law.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(err, f64::max);
            }
            Ok(err)
        };
        match run() {
            Ok(e) => worst = worst.max(e),
            Err(e) => return SuiteResult::failed(name, TOL, format!("m = {m}: generator rejected: {e}")),
        }
    }
    SuiteResult::new(name, worst, TOL, format!("sup-norm over m = {ms:?}, {dates} dates"))
}

/// Monte Carlo against the matrix values: first-default table cells and
/// the convention-a price at the tree's fitted spread, both in standard
/// errors.
pub fn oracle_agreement(
    spec: &GeneratorSpec,
    grid: &TenorGrid,
    recovery: f64,
    settlement: &TreeSettlement,
    sim: &SimConfig,
    sigmas: f64,
) -> SuiteResult {
    let name = "oracle agreement";
    let run = || -> Result<(f64, String)> {
        let gen = build_generator(spec)?;
        let start = ChainState::alive(spec.initial_count);
        let sim = SimConfig { horizon: grid.maturity(), ..*sim };
        let paths = simulate(&gen, start, &sim, Execution::Parallel)?;
        let chain = FirstEventChain::from_spec(spec, &[Entity::Investor, Entity::Counterparty, Entity::Reference], 0)?;
        let exact = event_probabilities(&first_event_kernels(&chain, grid)?, start, 0)?;
        let cells = compare_event_tables(&first_named_frequencies(&paths, grid, spec.m), &exact, grid, 1e-3);
        let worst_cell = cells.iter().max_by(|a, b| a.z.total_cmp(&b.z)).expect("cells");
        let engine = PricingEngine::new(spec, grid, recovery, EngineOptions::new(Convention::A, RankRule::risk_free(1)))?;
        let fit = engine.par_spread_bilateral(settlement)?;
        let contract = engine.contract(fit.spread);
        let est = estimate_convention_a_price(
            &paths,
            grid,
            &contract,
            engine.convention_a_replacement()?,
            engine.riskfree().legs(crate::cds::Survivors::COUNTERPARTY, 1)?,
            settlement,
        )?;
        let z_price = est.z_score(fit.price);
        Ok((
            worst_cell.z.max(z_price),
            format!(
                "{} cells, worst {} at {:.2} sigma; convention-a price at {:.7} is {:.3e} ± {:.1e} ({:.2} sigma)",
                cells.len(),
                worst_cell.label,
                worst_cell.z,
                fit.spread,
                est.mean,
                est.stderr,
                z_price
            ),
        ))
    };
    match run() {
        Ok((z, detail)) => SuiteResult::new(name, z, sigmas, detail),
        Err(e) => SuiteResult::failed(name, sigmas, e.to_string()),
    }
}
