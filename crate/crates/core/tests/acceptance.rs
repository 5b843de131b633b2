//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! before asserting, so `cargo test --test acceptance -- --nocapture`
//! gives the whole scorecard.

use std::sync::OnceLock;
use std::time::Instant;

use contagion_cva::cds::Survivors;
use contagion_cva::cli::{self, SpreadTable};
use contagion_cva::config::{preset, RunConfig};
use contagion_cva::contagion::*;
use contagion_cva::engine::*;
use contagion_cva::mc::*;
use contagion_cva::verify::{counting_chain_equivalence, settlement_identities, SuiteResult};
use contagion_cva::{Convention, Execution, RankRule, TenorGrid};

const TABLE1_RISKFREE: f64 = 0.0550386;
const TABLE2_RISKFREE: f64 = 0.4356549;
const RANK_ONE_SPREADS: [(f64, f64); 2] = [(0.95, 0.0535901), (0.8, 0.3291373)];
const TABLE1_FITTED_A: f64 = 0.0535767;
const MODEL_BAND: f64 = 0.05;

/// Documented readings of the contagion factor and the grid.
const READINGS: [(f64, usize); 4] = [(1.5, 36), (1.5, 48), (2.5, 36), (2.5, 48)];

const A: usize = 0;
const A_PRIME: usize = 1;
const B: usize = 2;
const C: usize = 3;
const C_PRIME: usize = 4;

fn config(table: &str, factor: f64, steps: usize) -> RunConfig {
    let patch = format!(r#"{{"model": {{"contagion_factor": {factor}}}, "grid": {{"steps": {steps}}}}}"#);
    RunConfig::merged(preset(table).unwrap(), &patch).unwrap()
}

struct Sweep {
    factor: f64,
    steps: usize,
    table: SpreadTable,
    seconds: f64,
}

fn sweeps(table: &'static str, cell: &'static OnceLock<Vec<Sweep>>) -> &'static [Sweep] {
    cell.get_or_init(|| {
        READINGS
            .iter()
            .map(|&(factor, steps)| {
                let t = Instant::now();
                let table = cli::run_table(&config(table, factor, steps), Execution::Parallel).unwrap();
                Sweep { factor, steps, table, seconds: t.elapsed().as_secs_f64() }
            })
            .collect()
    })
}

fn table1() -> &'static [Sweep] {
    static CELL: OnceLock<Vec<Sweep>> = OnceLock::new();
    sweeps("table1", &CELL)
}

fn table2() -> &'static [Sweep] {
    static CELL: OnceLock<Vec<Sweep>> = OnceLock::new();
    sweeps("table2", &CELL)
}

fn spreads(t: &SpreadTable) -> Vec<(f64, Vec<f64>)> {
    t.rows.iter().map(|r| (r.r2, r.spreads().into_iter().map(|s| s.unwrap_or(f64::NAN)).collect())).collect()
}

fn rel(x: f64, target: f64) -> f64 {
    (x / target - 1.0).abs()
}

fn finish(r: SuiteResult) {
    println!("{}", r.line());
    assert!(r.passed, "{}", r.line());
}

fn verdict(name: &str, failures: usize, detail: String) -> SuiteResult {
    SuiteResult::new(name, failures as f64, 0.0, detail)
}

/// Ordering violations in a Table-1 sweep.
fn table1_violations(t: &SpreadTable) -> Vec<String> {
    let rows = spreads(t);
    let mut bad = Vec::new();
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for c in 0..t.conventions.len() {
        if sorted.windows(2).any(|w| w[1].1[c] < w[0].1[c]) {
            bad.push(format!("{} not nondecreasing in R2", t.conventions[c]));
        }
    }
    for (r2, s) in &rows {
        let mid = [s[A_PRIME], s[B], s[C]];
        if *r2 >= 0.5 {
            if !mid.iter().all(|&m| s[A] < m) {
                bad.push(format!("R2 {r2}: a not below a'/b/c"));
            }
            if !mid.iter().all(|&m| s[C_PRIME] > m) {
                bad.push(format!("R2 {r2}: c' not above a'/b/c"));
            }
        }
        if *r2 <= 0.4 && !s.iter().all(|&x| x < t.riskfree_spread) {
            bad.push(format!("R2 {r2}: not all below the risk-free spread"));
        }
    }
    bad
}

#[test]
fn table1_structure() {
    let runs = table1();
    let mut best = usize::MAX;
    let mut detail = Vec::new();
    for s in runs {
        let err = rel(s.table.riskfree_spread, TABLE1_RISKFREE);
        let mut bad = table1_violations(&s.table);
        if err > MODEL_BAND {
            bad.push(format!("risk-free {:.7} is {:.1}% off", s.table.riskfree_spread, 100.0 * err));
        }
        if s.seconds > 300.0 || s.table.failed() {
            bad.push(format!("runtime {:.1}s, failed cells {}", s.seconds, s.table.failed()));
        }
        detail.push(format!(
            "factor {} M {}: rf {:.7} ({:.1}%), {} violations{} in {:.1}s",
            s.factor,
            s.steps,
            s.table.riskfree_spread,
            100.0 * err,
            bad.len(),
            bad.first().map(|b| format!(" [{b}]")).unwrap_or_default(),
            s.seconds
        ));
        best = best.min(bad.len());
    }
    finish(verdict("table 1 structure", best, detail.join("; ")));
}

#[test]
fn table2_riskfree_and_flip() {
    let runs = table2();
    let mut best = usize::MAX;
    let mut detail = Vec::new();
    for s in runs {
        let err = rel(s.table.riskfree_spread, TABLE2_RISKFREE);
        let mut bad = 0;
        if err > MODEL_BAND {
            bad += 1;
        }
        for (r2, row) in spreads(&s.table) {
            if r2 >= 0.5 && ![row[A_PRIME], row[B], row[C]].iter().all(|&m| row[A] > m) {
                bad += 1;
            }
        }
        detail.push(format!("factor {} M {}: rf {:.7} ({:.1}%), {bad} violations", s.factor, s.steps, s.table.riskfree_spread, 100.0 * err));
        best = best.min(bad);
    }
    finish(verdict("table 2 risk-free spread and ordering flip", best, detail.join("; ")));
}

fn rule_table(table: &str) -> SpreadTable {
    cli::run_table(&RunConfig::from_json(preset(table).unwrap()).unwrap(), Execution::Parallel).unwrap()
}

#[test]
fn rank_one_collapse() {
    let mut worst_exact = 0.0f64;
    let mut published_ok = false;
    let mut detail = Vec::new();
    for (table, (p, target)) in ["table3", "table4"].iter().zip(RANK_ONE_SPREADS) {
        let t = rule_table(table);
        let row = t.rows.iter().find(|r| r.rule == RankRule::risk_free(1)).unwrap();
        let s: Vec<f64> = row.spreads().into_iter().map(|x| x.unwrap()).collect();
        for i in [B, C, C_PRIME] {
            worst_exact = worst_exact.max((s[i] - s[A]).abs());
        }
        let mut best = f64::MAX;
        for (factor, steps) in READINGS {
            let cfg = config(table, factor, steps);
            let e = PricingEngine::new(&cfg.spec().unwrap(), &cfg.grid().unwrap(), 0.45, EngineOptions::new(Convention::A, RankRule::risk_free(1))).unwrap();
            let k = e.par_spread_bilateral(&cfg.engine.settlement.terms(0.4)).unwrap().spread;
            best = best.min(rel(k, target));
        }
        published_ok = best <= MODEL_BAND;
        detail.push(format!("p {p}: a {:.7} vs {target} best reading {:.1}% off", s[A], 100.0 * best));
        if !published_ok {
            break;
        }
    }
    let r = SuiteResult::new("rank-1 collapse", worst_exact, 1e-10, detail.join("; "));
    finish(SuiteResult { passed: r.passed && published_ok, ..r });
}

#[test]
fn rank_stabilization() {
    let pick = |t: &SpreadTable, n: usize| -> Vec<f64> {
        t.rows.iter().find(|r| r.rule == RankRule::risk_free(n)).unwrap().spreads().into_iter().map(|x| x.unwrap()).collect()
    };
    let t3 = rule_table("table3");
    let (s3, s4) = (pick(&t3, 3), pick(&t3, 4));
    let worst = s3.iter().zip(&s4).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let t4 = rule_table("table4");
    let (u2, u3, u4) = (pick(&t4, 2), pick(&t4, 3), pick(&t4, 4));
    let growing: Vec<String> = (0..u2.len())
        .filter(|&i| (u3[i] - u4[i]).abs() > (u2[i] - u3[i]).abs())
        .map(|i| t4.conventions[i].to_string())
        .collect();
    let per_conv: Vec<String> = t3.conventions.iter().zip(s3.iter().zip(&s4)).map(|(c, (a, b))| format!("{c} {:.1e}", (a - b).abs())).collect();
    let r = SuiteResult::new(
        "rank stabilization",
        worst,
        1e-6,
        format!("p 0.95 |s3 - s4|: {}; p 0.8 growing differences in {:?}", per_conv.join(", "), growing),
    );
    finish(SuiteResult { passed: r.passed && growing.is_empty(), ..r });
}

#[test]
fn recovery_limit() {
    let t = rule_table("table1");
    let row = t.rows.iter().find(|r| r.r2 == 0.01).unwrap();
    let s: Vec<f64> = row.spreads().into_iter().map(|x| x.unwrap()).collect();
    let gap = s.iter().copied().fold(f64::MIN, f64::max) - s.iter().copied().fold(f64::MAX, f64::min);
    finish(SuiteResult::new("recovery limit", gap, 1e-4, format!("spreads at R2 0.01: {s:?}")));
}

#[test]
fn settlement_identity_suite() {
    finish(settlement_identities(100_000, 20120501));
}

#[test]
fn counting_chain_reduction() {
    let intensity = IntensityTable::Geometric { initial: 0.05, factor: 1.5 };
    finish(counting_chain_equivalence(&intensity, &[1, 2, 3], 12, 3.0, false));
}

#[test]
fn monte_carlo_cross_check() {
    let cfg = RunConfig::from_json(preset("table1").unwrap()).unwrap();
    let spec = cfg.spec().unwrap();
    let grid: TenorGrid = cfg.grid().unwrap();
    let start = ChainState::alive(spec.initial_count);
    let sim = SimConfig { paths: 1_000_000, seed: 20120501, horizon: grid.maturity() };
    let paths = simulate(&build_generator(&spec).unwrap(), start, &sim, Execution::Parallel).unwrap();
    let chain = FirstEventChain::from_spec(&spec, &[Entity::Investor, Entity::Counterparty, Entity::Reference], 0).unwrap();
    let exact = event_probabilities(&first_event_kernels(&chain, &grid).unwrap(), start, 0).unwrap();
    let cells = compare_event_tables(&first_named_frequencies(&paths, &grid, spec.m), &exact, &grid, 1e-3);
    let worst_cell = cells.iter().max_by(|a, b| a.z.total_cmp(&b.z)).unwrap();
    let e = PricingEngine::new(&spec, &grid, cfg.contract.recovery, EngineOptions::new(Convention::A, RankRule::risk_free(1))).unwrap();
    let terms = cfg.engine.settlement.terms(0.4);
    let est = estimate_convention_a_price(
        &paths,
        &grid,
        &e.contract(TABLE1_FITTED_A),
        e.convention_a_replacement().unwrap(),
        e.riskfree().legs(Survivors::COUNTERPARTY, 1).unwrap(),
        &terms,
    )
    .unwrap();
    let z = est.z_score(0.0);
    let tree = e.price_bilateral(TABLE1_FITTED_A, &terms).unwrap();
    let r = SuiteResult::new(
        "monte carlo cross-check",
        z.max(worst_cell.z),
        3.0,
        format!(
            "price at {TABLE1_FITTED_A} is {:.3e} ± {:.1e} ({z:.1} sigma from 0, tree {tree:.3e}); {} event cells, worst {} at {:.2} sigma",
            est.mean,
            est.stderr,
            cells.len(),
            worst_cell.label,
            worst_cell.z
        ),
    );
    finish(r);
}

#[test]
fn cva_zero_at_full_recovery() {
    let cfg = RunConfig::from_json(preset("table1").unwrap()).unwrap();
    let s = TreeSettlement::uncollateralized(1.0, 1.0).with_investor_settlement(true);
    let mut worst = 0.0f64;
    for p in [0.95, 0.8] {
        let spec = GeneratorSpec::from_survival(10, p, 1.5, Multipliers::new(1.0, 0.8, 1.3)).unwrap();
        let e = PricingEngine::new(&spec, &cfg.grid().unwrap(), 0.45, EngineOptions::new(Convention::A, RankRule::risk_free(3))).unwrap();
        worst = worst.max(e.cva(&s).unwrap().cva.abs());
    }
    finish(SuiteResult::new("cva zero under convention a at full recovery", worst, 1e-8, "p 0.95 and 0.8".into()));
}
