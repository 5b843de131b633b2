//! Per-node probability data and the layered price tree.

use std::io::{self, Write};

use crate::contagion::{Entity, FirstEventKernels};
use crate::exec::Execution;

/// Weighted reference to a child node: contract value at `(t_next, j0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub next: u32,
    pub j0: u32,
    pub weight: f64,
}

/// Everything about a node that does not depend on the spread or the
/// settlement terms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeData {
    /// Probability that the reference defaults first.
    pub protection: f64,
    /// Expected premium-accrual time until the first default or maturity.
    pub annuity: f64,
    /// Counterparty defaults first; weights may be truncated.
    pub counterparty: Vec<Hit>,
    /// Counterparty defaults first, every count kept.
    pub counterparty_full: Vec<Hit>,
    /// Investor defaults first.
    pub investor: Vec<Hit>,
}

/// Smallest contiguous index window holding at least `coverage` of the
/// mass of `q`. Among equally short windows the heaviest wins.
pub fn smallest_window(q: &[f64], coverage: f64) -> Option<(usize, usize)> {
    let total: f64 = q.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let first = q.iter().position(|&x| x > 0.0)?;
    let last = q.iter().rposition(|&x| x > 0.0)?;
    if coverage >= 1.0 {
        return Some((first, last));
    }
    let target = coverage * total * (1.0 - 1e-12);
    let mut best: Option<(usize, usize, f64)> = None;
    for lo in first..=last {
        let mut mass = 0.0;
        for hi in lo..=last {
            mass += q[hi];
            if mass >= target {
                let better = match best {
                    None => true,
                    Some((bl, bh, bm)) => hi - lo < bh - bl || (hi - lo == bh - bl && mass > bm),
                };
                if better {
                    best = Some((lo, hi, mass));
                }
                break;
            }
        }
    }
    best.map(|(lo, hi, _)| (lo, hi)).or(Some((first, last)))
}

fn hits_from(q: &[f64], next: usize, window: Option<(usize, usize)>) -> Vec<Hit> {
    let (lo, hi) = match window {
        Some(w) => w,
        None => return Vec::new(),
    };
    let below: f64 = q[..lo].iter().sum();
    let above: f64 = q[hi + 1..].iter().sum();
    (lo..=hi)
        .map(|w| {
            let mut weight = q[w];
            if w == lo {
                weight += below;
            }
            if w == hi {
                weight += above;
            }
            Hit { next: next as u32, j0: w as u32, weight }
        })
        .filter(|h| h.weight > 0.0)
        .collect()
}

/// Node data for a contract started at `(t_start, j0)` under `kernels`.
/// With `coverage < 1` counterparty hits are restricted to the truncation
/// window of each interval and renormalised.
pub fn node_data(kernels: &FirstEventKernels, start: usize, j0: usize, coverage: f64) -> NodeData {
    let m = kernels.chain().m();
    let grid = kernels.grid();
    let mut init = vec![0.0; m + 1];
    init[j0] = 1.0;
    let table = kernels.propagate(start, &init);
    let has_counterparty = kernels.chain().position(Entity::Counterparty).is_some();
    let has_investor = kernels.chain().position(Entity::Investor).is_some();
    let mut out = NodeData::default();
    for x in start..grid.steps() {
        let alive: f64 = table.survival(x);
        let refr = table.first_default_mass(x, Entity::Reference);
        out.protection += refr;
        out.annuity += grid.dt(x) * (alive - 0.5 * refr);
        if has_counterparty {
            let q = table.first_default(x, Entity::Counterparty).unwrap();
            out.counterparty_full.extend(hits_from(q, x + 1, smallest_window(q, 1.0)));
            out.counterparty.extend(hits_from(q, x + 1, smallest_window(q, coverage)));
        }
        if has_investor {
            let q = table.first_default(x, Entity::Investor).unwrap();
            out.investor.extend(hits_from(q, x + 1, smallest_window(q, 1.0)));
        }
    }
    out
}

/// Node data for every `(j, j0)` on the grid, row-major in `j`.
#[derive(Clone, Debug)]
pub struct NodeSet {
    width: usize,
    nodes: Vec<NodeData>,
}

impl NodeSet {
    pub fn build(kernels: &FirstEventKernels, coverage: f64, exec: Execution) -> Self {
        let width = kernels.chain().m() + 1;
        let count = (kernels.grid().steps() + 1) * width;
        let nodes = exec.map_range(count, |i| node_data(kernels, i / width, i % width, coverage));
        Self { width, nodes }
    }

    pub fn get(&self, j: usize, j0: usize) -> &NodeData {
        &self.nodes[j * self.width + j0]
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Equivalent-contract values by rank, tenor index and systemic count.
#[derive(Clone, Debug, PartialEq)]
pub struct PricingTree {
    /// `layers[k - 1][j][j0]` for ranks `k = 1..=depth`; entries before
    /// `t_k` are not reachable and hold NaN.
    pub layers: Vec<Vec<Vec<f64>>>,
    /// Root price at `(t_0, l0)`.
    pub root: f64,
    pub dates: Vec<f64>,
}

impl PricingTree {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn value(&self, rank: usize, j: usize, j0: usize) -> f64 {
        self.layers[rank - 1][j][j0]
    }

    /// CSV dump with header `rank,tenor,count,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "rank,tenor,count,value")?;
        for (k, layer) in self.layers.iter().enumerate() {
            for (j, row) in layer.iter().enumerate() {
                for (l, v) in row.iter().enumerate() {
                    if v.is_finite() {
                        writeln!(w, "{},{},{},{:e}", k + 1, self.dates[j], l, v)?;
                    }
                }
            }
        }
        Ok(())
    }
}
