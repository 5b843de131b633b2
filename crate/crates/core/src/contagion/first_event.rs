//! First-default bookkeeping on the tenor grid.
//!
//! While all tracked entities are alive the chain moves only through the
//! systemic count `j0`. Each entity's default is made absorbing, recording
//! `j0` at the default time, and the augmented chain is exponentiated exactly
//! per interval; no multi-flip error arises.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::expm::expm_generator;
use super::kernel::{finish_stochastic, StepCache};
use super::model::{ChainState, GeneratorSpec};
use crate::error::{Error, Result};
use crate::grid::TenorGrid;

/// Named entities tracked by the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entity {
    Investor,
    Counterparty,
    Reference,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Entity::Investor => "investor",
            Entity::Counterparty => "counterparty",
            Entity::Reference => "reference",
        })
    }
}

/// Intensities, indexed by `j0`, of a chain run until its first named default.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstEventChain {
    m: usize,
    systemic: Vec<f64>,
    entities: Vec<(Entity, Vec<f64>)>,
}

impl FirstEventChain {
    pub fn new(m: usize, systemic: Vec<f64>, entities: Vec<(Entity, Vec<f64>)>) -> Result<Self> {
        let check = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != m + 1 {
                return Err(Error::InvalidModel(format!("{name} rates need {} entries, got {}", m + 1, v.len())));
            }
            if let Some(r) = v.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
                return Err(Error::InvalidModel(format!("{name} rate {r} must be finite and nonnegative")));
            }
            Ok(())
        };
        check("systemic", &systemic)?;
        for (e, v) in &entities {
            check(&e.to_string(), v)?;
        }
        Ok(Self { m, systemic, entities })
    }

    /// The base chain restricted to the states where `alive` entities have not
    /// defaulted and `offset` other defaults have occurred, so `l = j0 + offset`.
    pub fn from_spec(spec: &GeneratorSpec, alive: &[Entity], offset: usize) -> Result<Self> {
        let m = spec.m;
        let gamma = spec.gamma(m + offset + 1)?;
        let g = |j0: usize| gamma[j0 + offset];
        let systemic = (0..=m).map(|j0| (m - j0) as f64 * g(j0)).collect();
        let mu = spec.multipliers;
        let entities = alive
            .iter()
            .map(|&e| {
                let k = match e {
                    Entity::Investor => mu.investor,
                    Entity::Counterparty => mu.counterparty,
                    Entity::Reference => mu.reference,
                };
                (e, (0..=m).map(|j0| k * g(j0)).collect())
            })
            .collect();
        Self::new(m, systemic, entities)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn systemic(&self) -> &[f64] {
        &self.systemic
    }

    pub fn entities(&self) -> &[(Entity, Vec<f64>)] {
        &self.entities
    }

    pub fn position(&self, e: Entity) -> Option<usize> {
        self.entities.iter().position(|(x, _)| *x == e)
    }

    pub fn rates(&self, e: Entity) -> Option<&[f64]> {
        self.entities.iter().find(|(x, _)| *x == e).map(|(_, v)| v.as_slice())
    }

    /// Augmented generator: `m+1` alive states followed by one absorbing
    /// block of `m+1` states per entity.
    pub fn augmented_generator(&self) -> DMatrix<f64> {
        let w = self.m + 1;
        let dim = w * (1 + self.entities.len());
        let mut q = DMatrix::zeros(dim, dim);
        for j0 in 0..w {
            let mut out = 0.0;
            if j0 < self.m {
                q[(j0, j0 + 1)] = self.systemic[j0];
                out += self.systemic[j0];
            }
            for (p, (_, r)) in self.entities.iter().enumerate() {
                q[(j0, w * (1 + p) + j0)] = r[j0];
                out += r[j0];
            }
            q[(j0, j0)] = -out;
        }
        q
    }
}

/// Block decomposition of one interval's augmented kernel, rows indexed by
/// `j0` at the start of the interval.
#[derive(Clone, Debug)]
pub struct FirstEventStep {
    /// No tracked default; columns are `j0` at the end of the interval.
    pub stay: DMatrix<f64>,
    /// Per entity: that entity defaults first; columns are `j0` at its default.
    pub hit: Vec<DMatrix<f64>>,
}

/// Per-interval first-event kernels of one chain on a grid.
#[derive(Clone, Debug)]
pub struct FirstEventKernels {
    chain: FirstEventChain,
    grid: TenorGrid,
    steps: Vec<Arc<FirstEventStep>>,
}

pub fn first_event_kernels(chain: &FirstEventChain, grid: &TenorGrid) -> Result<FirstEventKernels> {
    let q = chain.augmented_generator();
    let w = chain.m + 1;
    let mut cache = StepCache::default();
    let mut steps = Vec::with_capacity(grid.steps());
    for x in 0..grid.steps() {
        let dt = grid.dt(x);
        let step = cache.get_or_try(dt, || {
            let k = finish_stochastic(expm_generator(&q, dt)?, 1e-12)?;
            let stay = k.view((0, 0), (w, w)).into_owned();
            let hit = (0..chain.entities.len())
                .map(|p| k.view((0, w * (1 + p)), (w, w)).into_owned())
                .collect();
            Ok(Arc::new(FirstEventStep { stay, hit }))
        })?;
        steps.push(step);
    }
    Ok(FirstEventKernels { chain: chain.clone(), grid: grid.clone(), steps })
}

impl FirstEventKernels {
    pub fn chain(&self) -> &FirstEventChain {
        &self.chain
    }

    pub fn grid(&self) -> &TenorGrid {
        &self.grid
    }

    pub fn step(&self, x: usize) -> &FirstEventStep {
        &self.steps[x]
    }

    /// Forward propagation from an alive law over `j0` at `t_start`.
    pub fn propagate(&self, start: usize, initial: &[f64]) -> EventTable {
        let w = self.chain.m + 1;
        let mut a = DVector::from_column_slice(initial);
        let mut alive = vec![a.iter().copied().collect::<Vec<_>>()];
        let mut first = Vec::with_capacity(self.grid.steps() - start);
        for x in start..self.grid.steps() {
            let s = &self.steps[x];
            let hits: Vec<Vec<f64>> = s.hit.iter().map(|h| (h.tr_mul(&a)).iter().copied().collect()).collect();
            a = s.stay.tr_mul(&a);
            debug_assert_eq!(a.len(), w);
            first.push(hits);
            alive.push(a.iter().copied().collect());
        }
        EventTable {
            start,
            entities: self.chain.entities.iter().map(|(e, _)| *e).collect(),
            alive,
            first,
        }
    }
}

/// Joint first-default probabilities by interval and systemic count.
#[derive(Clone, Debug, PartialEq)]
pub struct EventTable {
    start: usize,
    entities: Vec<Entity>,
    /// `alive[x - start][j0]`: nobody tracked has defaulted by `t_x`.
    alive: Vec<Vec<f64>>,
    /// `first[x - start][p][j0]`: entity `p` defaults first in `(t_x, t_{x+1}]`
    /// with `j0` systemic defaults at that moment.
    first: Vec<Vec<Vec<f64>>>,
}

impl EventTable {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// Number of intervals covered.
    pub fn intervals(&self) -> usize {
        self.first.len()
    }

    pub fn alive_law(&self, x: usize) -> &[f64] {
        &self.alive[x - self.start]
    }

    pub fn survival(&self, x: usize) -> f64 {
        self.alive_law(x).iter().sum()
    }

    pub fn first_default(&self, x: usize, e: Entity) -> Option<&[f64]> {
        let p = self.entities.iter().position(|&y| y == e)?;
        Some(&self.first[x - self.start][p])
    }

    /// Probability that `e` defaults first in interval `x`, any count.
    pub fn first_default_mass(&self, x: usize, e: Entity) -> f64 {
        self.first_default(x, e).map_or(0.0, |v| v.iter().sum())
    }

    /// Sum of all first-default cells plus terminal survival.
    pub fn total_mass(&self) -> f64 {
        let hits: f64 = self.first.iter().flatten().flatten().sum();
        hits + self.alive.last().unwrap().iter().sum::<f64>()
    }
}

/// Event table of the chain started at `t_start` in `initial`.
///
/// `initial` must have every tracked entity alive. The count after an
/// entity's default is `j0 + 1` plus whatever offset the chain carries.
pub fn event_probabilities(kernels: &FirstEventKernels, initial: ChainState, start: usize) -> Result<EventTable> {
    let chain = &kernels.chain;
    for (e, _) in &chain.entities {
        let dead = match e {
            Entity::Investor => initial.investor,
            Entity::Counterparty => initial.counterparty,
            Entity::Reference => initial.reference,
        };
        if dead {
            return Err(Error::InvalidModel(format!("initial state {initial} has {e} already defaulted")));
        }
    }
    if initial.j0 > chain.m {
        return Err(Error::InvalidModel(format!("initial count {} exceeds m = {}", initial.j0, chain.m)));
    }
    if start > kernels.grid.steps() {
        return Err(Error::InvalidGrid(format!("start index {start} beyond grid")));
    }
    let mut init = vec![0.0; chain.m + 1];
    init[initial.j0] = 1.0;
    Ok(kernels.propagate(start, &init))
}
