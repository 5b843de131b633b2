//! Exact-time Monte Carlo simulation of the default chain.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path id),
//! so results do not depend on how paths are scheduled.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cds::{ContractSpec, RiskFreeLegs};
use crate::contagion::{ChainState, Entity, EventTable, RateMatrix};
use crate::engine::TreeSettlement;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::TenorGrid;

/// Paths per work item.
const CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub paths: usize,
    pub seed: u64,
    /// Events after this time are not recorded.
    pub horizon: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Config("simulation needs at least one path".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Systemic,
    Investor,
    Counterparty,
    Reference,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Systemic => "systemic",
            EventKind::Investor => "investor",
            EventKind::Counterparty => "counterparty",
            EventKind::Reference => "reference",
        }
    }

    pub fn entity(self) -> Option<Entity> {
        match self {
            EventKind::Systemic => None,
            EventKind::Investor => Some(Entity::Investor),
            EventKind::Counterparty => Some(Entity::Counterparty),
            EventKind::Reference => Some(Entity::Reference),
        }
    }

    fn between(from: ChainState, to: ChainState) -> Option<Self> {
        let flags = |s: ChainState| [s.investor, s.counterparty, s.reference];
        let (f, t) = (flags(from), flags(to));
        if f.iter().zip(&t).any(|(a, b)| *a && !*b) {
            return None;
        }
        let flips = [f[0] != t[0], f[1] != t[1], f[2] != t[2]];
        match (to.j0 as isize - from.j0 as isize, flips) {
            (1, [false, false, false]) => Some(EventKind::Systemic),
            (0, [true, false, false]) => Some(EventKind::Investor),
            (0, [false, true, false]) => Some(EventKind::Counterparty),
            (0, [false, false, true]) => Some(EventKind::Reference),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// State reached by the event.
    pub state: ChainState,
    /// Total default count just before the event.
    pub count_before: u32,
}

/// All simulated paths, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    initial: ChainState,
    horizon: f64,
    offsets: Vec<usize>,
    events: Vec<Event>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn initial(&self) -> ChainState {
        self.initial
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn path(&self, i: usize) -> &[Event] {
        &self.events[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Event]> + '_ {
        (0..self.len()).map(move |i| self.path(i))
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// First named default on a path.
    pub fn first_named(path: &[Event]) -> Option<&Event> {
        path.iter().find(|e| e.kind != EventKind::Systemic)
    }

    /// CSV dump with header `path,time,kind`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "path,time,kind")?;
        for (i, p) in self.iter().enumerate() {
            for e in p {
                writeln!(w, "{i},{},{}", e.time, e.kind.label())?;
            }
        }
        Ok(())
    }
}

struct Jumps {
    /// Per state: exit rate and `(cumulative rate, target, kind)`.
    table: Vec<(f64, Vec<(f64, usize, EventKind)>)>,
}

impl Jumps {
    fn new(gen: &RateMatrix<ChainState>) -> Result<Self> {
        gen.validate()?;
        let states = gen.states();
        let mut table = Vec::with_capacity(gen.dim());
        for i in 0..gen.dim() {
            let mut acc = 0.0;
            let mut out = Vec::new();
            for j in 0..gen.dim() {
                let r = gen.rate(i, j);
                if i == j || r == 0.0 {
                    continue;
                }
                let kind = EventKind::between(states[i], states[j]).ok_or_else(|| {
                    Error::InvalidModel(format!("transition {} -> {} is not a single default", states[i], states[j]))
                })?;
                acc += r;
                out.push((acc, j, kind));
            }
            table.push((acc, out));
        }
        Ok(Self { table })
    }
}

/// Simulates `cfg.paths` independent paths from `initial`.
pub fn simulate(gen: &RateMatrix<ChainState>, initial: ChainState, cfg: &SimConfig, exec: Execution) -> Result<PathSet> {
    cfg.validate()?;
    let jumps = Jumps::new(gen)?;
    let states = gen.states();
    let start = states
        .iter()
        .position(|s| *s == initial)
        .ok_or_else(|| Error::InvalidModel(format!("initial state {initial} is not in the generator")))?;
    let chunks = cfg.paths.div_ceil(CHUNK);
    let parts = exec.map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(cfg.paths);
        let mut events = Vec::new();
        let mut lens = Vec::with_capacity(hi - lo);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for p in lo..hi {
            rng.set_stream(p as u64);
            rng.set_word_pos(0);
            let before = events.len();
            let mut s = start;
            let mut t = 0.0;
            loop {
                let (exit, ref out) = jumps.table[s];
                if exit <= 0.0 {
                    break;
                }
                let u: f64 = rng.random();
                t += -(1.0 - u).ln() / exit;
                if t > cfg.horizon {
                    break;
                }
                let v = rng.random::<f64>() * exit;
                let k = out.partition_point(|&(c, _, _)| c <= v).min(out.len() - 1);
                let (_, to, kind) = out[k];
                events.push(Event { time: t, kind, state: states[to], count_before: states[s].total_defaults() as u32 });
                s = to;
            }
            lens.push(events.len() - before);
        }
        (events, lens)
    });
    let mut offsets = Vec::with_capacity(cfg.paths + 1);
    offsets.push(0);
    let mut events = Vec::new();
    for (ev, lens) in parts {
        for l in lens {
            offsets.push(offsets.last().unwrap() + l);
        }
        events.extend(ev);
    }
    Ok(PathSet { initial, horizon: cfg.horizon, offsets, events })
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for x in xs {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Self { mean, stderr: (var / n.max(1) as f64).sqrt(), samples: n }
    }

    /// `|mean − target|` in standard errors; infinite when the error is zero
    /// and the mean is off.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else if self.stderr == 0.0 {
            f64::INFINITY
        } else {
            d / self.stderr
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target) <= sigmas
    }
}

/// Binomial frequency of `hits` among `n` paths.
pub fn frequency(hits: usize, n: usize) -> Estimate {
    let p = hits as f64 / n as f64;
    Estimate { mean: p, stderr: (p * (1.0 - p) / n as f64).sqrt(), samples: n }
}

/// Empirical first-named-default table on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalEvents {
    pub paths: usize,
    /// `first[x][e][j0]` counts, entity order investor, counterparty, reference.
    pub first: Vec<[Vec<usize>; 3]>,
    /// Paths with no named default by `t_x`.
    pub alive: Vec<usize>,
}

const ENTITIES: [Entity; 3] = [Entity::Investor, Entity::Counterparty, Entity::Reference];

fn entity_slot(e: Entity) -> usize {
    match e {
        Entity::Investor => 0,
        Entity::Counterparty => 1,
        Entity::Reference => 2,
    }
}

pub fn first_named_frequencies(paths: &PathSet, grid: &TenorGrid, m: usize) -> EmpiricalEvents {
    let steps = grid.steps();
    let mut first = vec![[vec![0; m + 1], vec![0; m + 1], vec![0; m + 1]]; steps];
    let mut alive = vec![0; steps + 1];
    for p in paths.iter() {
        let hit = PathSet::first_named(p).and_then(|e| grid.interval_of(e.time).map(|x| (x, e)));
        let until = match hit {
            Some((x, e)) => {
                let slot = entity_slot(e.kind.entity().unwrap());
                first[x][slot][e.state.j0] += 1;
                x
            }
            None => steps,
        };
        for a in alive.iter_mut().take(until + 1) {
            *a += 1;
        }
    }
    EmpiricalEvents { paths: paths.len(), first, alive }
}

/// One compared cell of an event table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub label: String,
    pub exact: f64,
    pub estimate: Estimate,
    pub z: f64,
}

/// Compares survival, entity-by-year and entity-by-count aggregates of the
/// first-default table with an exact one. Count cells with exact mass below
/// `min_mass` are skipped.
pub fn compare_event_tables(
    empirical: &EmpiricalEvents,
    exact: &EventTable,
    grid: &TenorGrid,
    min_mass: f64,
) -> Vec<CellCheck> {
    let n = empirical.paths;
    let steps = grid.steps();
    let mut out = Vec::new();
    let mut push = |label: String, exact: f64, hits: usize| {
        let estimate = frequency(hits, n);
        let z = estimate.z_score(exact);
        out.push(CellCheck { label, exact, estimate, z });
    };
    let mut year_of = Vec::with_capacity(steps);
    for x in 0..steps {
        year_of.push(grid.date(x + 1).ceil().max(1.0) as usize);
    }
    let years = *year_of.iter().max().unwrap_or(&1);
    for y in 1..=years {
        let x = (0..steps).filter(|&x| year_of[x] == y).max().map(|x| x + 1).unwrap_or(0);
        push(format!("survival@{}", grid.date(x)), exact.survival(x), empirical.alive[x]);
    }
    for e in ENTITIES {
        let s = entity_slot(e);
        for y in 1..=years {
            let xs: Vec<usize> = (0..steps).filter(|&x| year_of[x] == y).collect();
            let p: f64 = xs.iter().map(|&x| exact.first_default_mass(x, e)).sum();
            let h: usize = xs.iter().map(|&x| empirical.first[x][s].iter().sum::<usize>()).sum();
            push(format!("{e:?}/year{y}"), p, h);
        }
        let width = empirical.first.first().map_or(0, |f| f[s].len());
        for j0 in 0..width {
            let p: f64 = (0..steps).map(|x| exact.first_default(x, e).map_or(0.0, |q| q[j0])).sum();
            if p < min_mass {
                continue;
            }
            let h: usize = (0..steps).map(|x| empirical.first[x][s][j0]).sum();
            push(format!("{e:?}/count{j0}"), p, h);
        }
    }
    out
}

/// Risk-free CDS payoff on the continuous paths.
pub fn estimate_riskfree_price(paths: &PathSet, contract: &ContractSpec) -> Estimate {
    let t_end = contract.maturity;
    Estimate::from_samples(paths.iter().map(|p| {
        match p.iter().find(|e| e.kind == EventKind::Reference && e.time <= t_end) {
            Some(e) => (1.0 - contract.recovery) - contract.spread * e.time,
            None => -contract.spread * t_end,
        }
    }))
}

/// Convention-a bilateral payoff. Named defaults take effect at the next
/// tenor date, where the survivor settles against the risk-free value of a
/// contract with the defaulted party replaced.
pub fn estimate_convention_a_price(
    paths: &PathSet,
    grid: &TenorGrid,
    contract: &ContractSpec,
    after_counterparty: &RiskFreeLegs,
    after_investor: &RiskFreeLegs,
    settlement: &TreeSettlement,
) -> Result<Estimate> {
    settlement.validate()?;
    let payoffs: Vec<f64> = paths
        .iter()
        .map(|p| payoff_a(p, grid, contract, after_counterparty, after_investor, settlement))
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(payoffs))
}

fn payoff_a(
    path: &[Event],
    grid: &TenorGrid,
    contract: &ContractSpec,
    after_counterparty: &RiskFreeLegs,
    after_investor: &RiskFreeLegs,
    settlement: &TreeSettlement,
) -> Result<f64> {
    let k = contract.spread;
    let Some(e) = PathSet::first_named(path).filter(|e| e.time <= grid.maturity()) else {
        return Ok(-k * grid.maturity());
    };
    let x = grid.interval_of(e.time).expect("time inside the grid");
    Ok(match e.kind {
        EventKind::Reference => (1.0 - contract.recovery) - k * e.time,
        EventKind::Counterparty => {
            let v = after_counterparty.value(contract, x + 1, e.state.j0);
            -k * grid.date(x + 1) + settlement.counterparty_default(v)?
        }
        EventKind::Investor => {
            let v = after_investor.value(contract, x + 1, e.state.j0);
            -k * grid.date(x + 1) + settlement.investor_default(v)?
        }
        EventKind::Systemic => unreachable!(),
    })
}

/// Pathwise adjustment under convention a: replacement value less
/// settlement at the first named default of the investor or the
/// counterparty.
pub fn estimate_convention_a_cva(
    paths: &PathSet,
    grid: &TenorGrid,
    contract: &ContractSpec,
    after_counterparty: &RiskFreeLegs,
    after_investor: &RiskFreeLegs,
    settlement: &TreeSettlement,
) -> Result<Estimate> {
    settlement.validate()?;
    let mut xs = Vec::with_capacity(paths.len());
    for p in paths.iter() {
        let loss = match PathSet::first_named(p).filter(|e| e.time <= grid.maturity()) {
            Some(e) if e.kind != EventKind::Reference => {
                let x = grid.interval_of(e.time).expect("time inside the grid");
                if e.kind == EventKind::Counterparty {
                    let v = after_counterparty.value(contract, x + 1, e.state.j0);
                    v - settlement.counterparty_default(v)?
                } else {
                    let v = after_investor.value(contract, x + 1, e.state.j0);
                    v - settlement.investor_default(v)?
                }
            }
            _ => 0.0,
        };
        xs.push(loss);
    }
    Ok(Estimate::from_samples(xs))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrongWay {
    /// Covariance of the positive loss with the intensity level.
    pub covariance: f64,
    pub stderr: f64,
    /// Paths where the counterparty defaults first before maturity.
    pub samples: usize,
    /// Paths among those with a positive loss.
    pub loss_bearing: usize,
    pub insufficient: bool,
}

impl WrongWay {
    pub fn is_wrong_way(&self) -> bool {
        !self.insufficient && self.covariance > 3.0 * self.stderr
    }
}

/// Minimum loss-bearing paths for a usable diagnostic.
pub const WRONG_WAY_MIN_PATHS: usize = 1000;

/// Covariance between the investor's positive loss `(1 − R2)·V⁺` at the
/// counterparty's default and `γ̂` at the count just before it.
pub fn wrong_way_diagnostic(
    paths: &PathSet,
    grid: &TenorGrid,
    contract: &ContractSpec,
    after_counterparty: &RiskFreeLegs,
    gamma: &[f64],
    r2: f64,
) -> WrongWay {
    let mut pairs = Vec::new();
    for p in paths.iter() {
        let Some(e) = PathSet::first_named(p).filter(|e| e.kind == EventKind::Counterparty && e.time <= grid.maturity()) else {
            continue;
        };
        let x = grid.interval_of(e.time).expect("time inside the grid");
        let v = after_counterparty.value(contract, x + 1, e.state.j0);
        pairs.push(((1.0 - r2) * v.max(0.0), gamma[e.count_before as usize]));
    }
    let n = pairs.len();
    let loss_bearing = pairs.iter().filter(|(l, _)| *l > 0.0).count();
    if n < 2 {
        return WrongWay { covariance: 0.0, stderr: 0.0, samples: n, loss_bearing, insufficient: true };
    }
    let ml = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mg = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let prod = Estimate::from_samples(pairs.iter().map(|(l, g)| (l - ml) * (g - mg)));
    WrongWay {
        covariance: prod.mean * n as f64 / (n - 1) as f64,
        stderr: prod.stderr,
        samples: n,
        loss_bearing,
        insufficient: loss_bearing < WRONG_WAY_MIN_PATHS,
    }
}

/// Empirical `P[entity defaulted by t_x]` for every grid date.
pub fn marginal_default_frequencies(paths: &PathSet, grid: &TenorGrid, kind: EventKind) -> Vec<Estimate> {
    let mut counts = vec![0usize; grid.steps() + 1];
    for p in paths.iter() {
        if let Some(e) = p.iter().find(|e| e.kind == kind) {
            if let Some(x) = grid.interval_of(e.time) {
                for c in counts.iter_mut().skip(x + 1) {
                    *c += 1;
                }
            }
        }
    }
    counts.into_iter().map(|c| frequency(c, paths.len())).collect()
}
