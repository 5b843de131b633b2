//! Markov chain of systemic defaults plus the investor, counterparty and
//! reference-entity default indicators.

use std::fmt;
use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convention::Convention;
use crate::error::{Error, Result};

/// State `(j0, j1, j2, j3)`: systemic defaults and the three named indicators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainState {
    pub j0: usize,
    pub investor: bool,
    pub counterparty: bool,
    pub reference: bool,
}

impl ChainState {
    pub fn alive(j0: usize) -> Self {
        Self { j0, investor: false, counterparty: false, reference: false }
    }

    /// Total default count `l = j0 + j1 + j2 + j3`.
    pub fn total_defaults(&self) -> usize {
        self.j0 + self.investor as usize + self.counterparty as usize + self.reference as usize
    }

    /// Position of the state in the base generator.
    pub fn index(&self) -> usize {
        self.j0 * 8 + (self.investor as usize) * 4 + (self.counterparty as usize) * 2 + self.reference as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            j0: i / 8,
            investor: i & 4 != 0,
            counterparty: i & 2 != 0,
            reference: i & 1 != 0,
        }
    }
}

impl fmt::Display for ChainState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.j0, self.investor as u8, self.counterparty as u8, self.reference as u8
        )
    }
}

/// State `(i, k, j1, j2, j3)` of the chain with a basket of replacement
/// counterparties; `k` counts replacement defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExtendedState {
    pub i: usize,
    pub k: usize,
    pub investor: bool,
    pub counterparty: bool,
    pub reference: bool,
}

impl ExtendedState {
    pub fn total_defaults(&self) -> usize {
        self.i + self.k + self.investor as usize + self.counterparty as usize + self.reference as usize
    }
}

impl fmt::Display for ExtendedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}:{}",
            self.i, self.k, self.investor as u8, self.counterparty as u8, self.reference as u8
        )
    }
}

/// Scalings of the named entities' intensities relative to a systemic firm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub investor: f64,
    pub counterparty: f64,
    pub reference: f64,
}

impl Multipliers {
    pub const UNIT: Multipliers = Multipliers { investor: 1.0, counterparty: 1.0, reference: 1.0 };

    pub fn new(investor: f64, counterparty: f64, reference: f64) -> Self {
        Self { investor, counterparty, reference }
    }

    pub fn is_unit(&self) -> bool {
        *self == Self::UNIT
    }
}

impl Default for Multipliers {
    fn default() -> Self {
        Self::UNIT
    }
}

/// Per-firm default intensity `γ̂(l)` as a function of the total default count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityTable {
    /// `γ̂(l) = initial · factor^l`.
    Geometric { initial: f64, factor: f64 },
    /// Explicit values for `l = 0, 1, ...`.
    Explicit(Vec<f64>),
}

impl IntensityTable {
    pub fn at(&self, l: usize) -> Result<f64> {
        match self {
            IntensityTable::Geometric { initial, factor } => Ok(initial * factor.powi(l as i32)),
            IntensityTable::Explicit(v) => v.get(l).copied().ok_or_else(|| {
                Error::InvalidModel(format!(
                    "intensity table has {} entries, count {l} requested",
                    v.len()
                ))
            }),
        }
    }

    /// First `len` values, validated positive and finite.
    pub fn values(&self, len: usize) -> Result<Vec<f64>> {
        let out: Vec<f64> = (0..len).map(|l| self.at(l)).collect::<Result<_>>()?;
        if let Some((l, g)) = out.iter().enumerate().find(|(_, g)| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidModel(format!("intensity at count {l} must be positive and finite, got {g}")));
        }
        Ok(out)
    }
}

/// Intensity specification of the contagion chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// Size of the systemic portfolio.
    pub m: usize,
    pub intensity: IntensityTable,
    pub multipliers: Multipliers,
    /// Systemic defaults already observed at time 0 (all named parties alive).
    #[serde(default)]
    pub initial_count: usize,
}

impl GeneratorSpec {
    pub fn new(m: usize, intensity: IntensityTable, multipliers: Multipliers) -> Result<Self> {
        let spec = Self { m, intensity, multipliers, initial_count: 0 };
        spec.validate()?;
        Ok(spec)
    }

    /// `γ̂(0) = −ln p` from a yearly survival probability `p`, growing by
    /// `factor` per default.
    pub fn from_survival(m: usize, p: f64, factor: f64, multipliers: Multipliers) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidModel(format!("survival probability must lie in (0, 1), got {p}")));
        }
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidModel(format!("contagion factor must be positive, got {factor}")));
        }
        Self::new(m, IntensityTable::Geometric { initial: -p.ln(), factor }, multipliers)
    }

    pub fn with_initial_count(mut self, l0: usize) -> Result<Self> {
        self.initial_count = l0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let Multipliers { investor, counterparty, reference } = self.multipliers;
        for (name, v) in [("investor", investor), ("counterparty", counterparty), ("reference", reference)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} multiplier must be positive, got {v}")));
            }
        }
        if self.initial_count > self.m {
            return Err(Error::InvalidModel(format!(
                "initial count {} exceeds portfolio size {}",
                self.initial_count, self.m
            )));
        }
        if let IntensityTable::Geometric { initial, factor } = self.intensity {
            if !(initial > 0.0 && initial.is_finite() && factor > 0.0 && factor.is_finite()) {
                return Err(Error::InvalidModel("geometric intensity needs positive initial value and factor".into()));
            }
        }
        Ok(())
    }

    /// `γ̂(0..len)`, failing if an explicit table is too short.
    pub fn gamma(&self, len: usize) -> Result<Vec<f64>> {
        self.intensity.values(len)
    }
}

/// Transition intensities between labelled states; rows sum to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct RateMatrix<S> {
    states: Vec<S>,
    rates: DMatrix<f64>,
}

impl<S: Copy + fmt::Display> RateMatrix<S> {
    /// Builds from off-diagonal rates; the diagonal is filled in.
    pub fn from_offdiagonal(states: Vec<S>, mut rates: DMatrix<f64>) -> Self {
        let n = states.len();
        assert_eq!(rates.nrows(), n);
        assert_eq!(rates.ncols(), n);
        for i in 0..n {
            rates[(i, i)] = 0.0;
            let out: f64 = rates.row(i).sum();
            rates[(i, i)] = -out;
        }
        Self { states, rates }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[(from, to)]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rates[(i, i)]
    }

    /// Overwrites one entry without touching the diagonal. Meant for fault
    /// injection in diagnostics.
    pub fn set_raw(&mut self, from: usize, to: usize, value: f64) {
        self.rates[(from, to)] = value;
    }

    /// Checks nonnegative off-diagonals and zero row sums.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            let mut sum = 0.0;
            let mut scale: f64 = 0.0;
            for j in 0..n {
                let q = self.rates[(i, j)];
                if !q.is_finite() {
                    return Err(Error::InvalidModel(format!("non-finite rate from {} to {}", self.states[i], self.states[j])));
                }
                if i != j && q < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "negative rate {q} from {} to {}",
                        self.states[i], self.states[j]
                    )));
                }
                sum += q;
                scale = scale.max(q.abs());
            }
            if sum.abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::InvalidModel(format!("row {} sums to {sum}", self.states[i])));
            }
        }
        Ok(())
    }

    /// CSV matrix: header of state labels, one row per from-state.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write_matrix_csv(&mut w, &self.states, &self.rates)
    }
}

pub(crate) fn write_matrix_csv<W: Write, S: fmt::Display>(w: &mut W, states: &[S], m: &DMatrix<f64>) -> io::Result<()> {
    write!(w, "from")?;
    for s in states {
        write!(w, ",{s}")?;
    }
    writeln!(w)?;
    for (i, s) in states.iter().enumerate() {
        write!(w, "{s}")?;
        for j in 0..states.len() {
            write!(w, ",{:e}", m[(i, j)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Generator on the `8(m+1)` states `(j0, j1, j2, j3)`.
///
/// From a state with total count `l < m + 3`, systemic defaults arrive at
/// rate `(m − j0)·γ̂(l)` and each surviving named entity defaults at its
/// multiplier times `γ̂(l)`.
pub fn build_generator(spec: &GeneratorSpec) -> Result<RateMatrix<ChainState>> {
    spec.validate()?;
    let m = spec.m;
    let gamma = match &spec.intensity {
        IntensityTable::Explicit(v) if v.len() < m + 3 => {
            return Err(Error::InvalidModel(format!(
                "intensity table needs {} entries for m = {m}, got {}",
                m + 3,
                v.len()
            )))
        }
        _ => spec.gamma(m + 3)?,
    };
    let dim = 8 * (m + 1);
    let states: Vec<ChainState> = (0..dim).map(ChainState::from_index).collect();
    let mut q = DMatrix::zeros(dim, dim);
    let mu = spec.multipliers;
    for s in &states {
        let l = s.total_defaults();
        if l >= m + 3 {
            continue;
        }
        let g = gamma[l];
        let i = s.index();
        if s.j0 < m {
            q[(i, ChainState { j0: s.j0 + 1, ..*s }.index())] = (m - s.j0) as f64 * g;
        }
        if !s.investor {
            q[(i, ChainState { investor: true, ..*s }.index())] = mu.investor * g;
        }
        if !s.counterparty {
            q[(i, ChainState { counterparty: true, ..*s }.index())] = mu.counterparty * g;
        }
        if !s.reference {
            q[(i, ChainState { reference: true, ..*s }.index())] = mu.reference * g;
        }
    }
    Ok(RateMatrix::from_offdiagonal(states, q))
}

/// Pure-death counting chain on `{0, ..., m+3}` with rate `(m+3−l)·γ̂(l)`.
/// Valid only when all entities share the systemic intensity.
pub fn build_counting_generator(spec: &GeneratorSpec) -> Result<RateMatrix<usize>> {
    spec.validate()?;
    if !spec.multipliers.is_unit() {
        return Err(Error::InvalidModel(
            "counting reduction requires unit multipliers for all named entities".into(),
        ));
    }
    let m = spec.m;
    let gamma = spec.gamma(m + 3)?;
    let dim = m + 4;
    let mut q = DMatrix::zeros(dim, dim);
    for l in 0..m + 3 {
        q[(l, l + 1)] = (m + 3 - l) as f64 * gamma[l];
    }
    Ok(RateMatrix::from_offdiagonal((0..dim).collect(), q))
}

/// Generator with a basket of `n` successive counterparties: after the
/// original counterparty defaults, the `k`-th replacement defaults at a rate
/// fixed by the close-out convention.
///
/// Replacement defaults count toward the systemic level.
pub fn build_extended_generator(spec: &GeneratorSpec, n: usize, convention: Convention) -> Result<RateMatrix<ExtendedState>> {
    spec.validate()?;
    if matches!(convention, Convention::A | Convention::APrime) {
        return Err(Error::Unsupported(format!(
            "convention {convention} has no replacement-counterparty chain"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidModel("extended chain needs n >= 2".into()));
    }
    let m = spec.m;
    let gamma = spec.gamma(m + n + 3)?;
    let l0 = spec.initial_count;
    let mu = spec.multipliers;

    let mut states = Vec::with_capacity(8 * (m + 1) * n);
    for i in 0..=m {
        for k in 0..n {
            for bits in 0..8usize {
                states.push(ExtendedState {
                    i,
                    k,
                    investor: bits & 4 != 0,
                    counterparty: bits & 2 != 0,
                    reference: bits & 1 != 0,
                });
            }
        }
    }
    let index = |s: &ExtendedState| -> usize {
        (s.i * n + s.k) * 8 + (s.investor as usize) * 4 + (s.counterparty as usize) * 2 + s.reference as usize
    };
    let dim = states.len();
    let mut q = DMatrix::zeros(dim, dim);
    for s in &states {
        let from = index(s);
        let l = s.total_defaults();
        let g = gamma[l];
        let live_replacement = s.counterparty && !s.investor && !s.reference;
        if s.i < m {
            q[(from, index(&ExtendedState { i: s.i + 1, ..*s }))] = (m - s.i) as f64 * g;
        }
        if !s.investor {
            let rate = if convention == Convention::CPrime && s.counterparty {
                mu.investor * gamma[s.i]
            } else {
                mu.investor * g
            };
            q[(from, index(&ExtendedState { investor: true, ..*s }))] = rate;
        }
        if !s.reference {
            q[(from, index(&ExtendedState { reference: true, ..*s }))] = mu.reference * g;
        }
        if !s.counterparty {
            q[(from, index(&ExtendedState { counterparty: true, ..*s }))] = mu.counterparty * g;
        }
        if live_replacement && s.k + 1 < n {
            let rate = match convention {
                Convention::B => mu.counterparty * gamma[l0],
                _ => mu.counterparty * gamma[s.i],
            };
            q[(from, index(&ExtendedState { k: s.k + 1, ..*s }))] = rate;
        }
    }
    Ok(RateMatrix::from_offdiagonal(states, q))
}
