//! JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::contagion::{GeneratorSpec, IntensityTable, Multipliers};
use crate::engine::{EngineOptions, TreeSettlement};
use crate::error::{Error, Result};
use crate::grid::TenorGrid;
use crate::mc::SimConfig;
use crate::settlement::SettlementMode;
use crate::{Convention, RankRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelConfig,
    pub contract: ContractConfig,
    pub grid: GridConfig,
    pub engine: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Systemic portfolio size.
    pub m: usize,
    /// Yearly survival probability of a systemic firm; sets `γ̂(0) = −ln p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival: Option<f64>,
    /// `γ̂(l+1)/γ̂(l)` for a generated table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contagion_factor: Option<f64>,
    /// Explicit `γ̂(0..=m+2)`, overriding the generated table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensities: Option<Vec<f64>>,
    /// Investor, counterparty and reference multipliers.
    #[serde(default = "default_multipliers")]
    pub multipliers: [f64; 3],
    #[serde(default)]
    pub initial_count: usize,
}

fn default_multipliers() -> [f64; 3] {
    [1.0, 0.8, 1.3]
}

impl ModelConfig {
    pub fn intensity(&self) -> Result<IntensityTable> {
        if let Some(v) = &self.intensities {
            if v.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                return Err(Error::InvalidModel("intensities must be positive".into()));
            }
            return Ok(IntensityTable::Explicit(v.clone()));
        }
        let p = self.survival.ok_or_else(|| Error::Config("model needs `survival` or `intensities`".into()))?;
        let factor = self.contagion_factor.ok_or_else(|| Error::Config("model needs `contagion_factor`".into()))?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidModel(format!("survival probability must lie in (0, 1), got {p}")));
        }
        Ok(IntensityTable::Geometric { initial: -p.ln(), factor })
    }

    pub fn spec(&self) -> Result<GeneratorSpec> {
        let [i, c, r] = self.multipliers;
        let spec = GeneratorSpec::new(self.m, self.intensity()?, Multipliers::new(i, c, r))?;
        spec.gamma(self.m + 3)?;
        spec.with_initial_count(self.initial_count)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    pub maturity: f64,
    pub recovery: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dates: Option<Vec<f64>>,
}

impl GridConfig {
    pub fn grid(&self, maturity: f64) -> Result<TenorGrid> {
        let grid = match (&self.dates, self.steps) {
            (Some(d), None) => TenorGrid::from_dates(d.clone())?,
            (None, Some(n)) => TenorGrid::uniform(maturity, n)?,
            _ => return Err(Error::Config("grid needs exactly one of `steps` and `dates`".into())),
        };
        if (grid.maturity() - maturity).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!("grid ends at {} but maturity is {maturity}", grid.maturity())));
        }
        Ok(grid)
    }
}

/// What the rows of the output table range over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableRows {
    /// One row per counterparty recovery, a single rank rule.
    #[default]
    Recovery,
    /// One row per rank rule, a single counterparty recovery.
    Rule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub conventions: Vec<Convention>,
    pub rank_rules: Vec<RankRule>,
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    #[serde(default)]
    pub systemic_replacements: bool,
    #[serde(default)]
    pub settlement: SettlementConfig,
    /// Counterparty recovery rates.
    pub r2: Vec<f64>,
    #[serde(default)]
    pub rows: TableRows,
}

fn default_coverage() -> f64 {
    0.95
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettlementConfig {
    #[serde(default)]
    pub mode: SettlementMode,
    #[serde(default = "default_r1")]
    pub r1: f64,
    #[serde(default)]
    pub collateral_fraction: f64,
    #[serde(default)]
    pub lockup: f64,
    #[serde(default)]
    pub investor_settlement: bool,
}

fn default_r1() -> f64 {
    0.4
}

impl Default for SettlementConfig {
    fn default() -> Self {
        Self { mode: SettlementMode::default(), r1: default_r1(), collateral_fraction: 0.0, lockup: 0.0, investor_settlement: false }
    }
}

impl SettlementConfig {
    pub fn terms(&self, r2: f64) -> TreeSettlement {
        TreeSettlement {
            mode: self.mode,
            r1: self.r1,
            r2,
            collateral_fraction: self.collateral_fraction,
            lockup: self.lockup,
            investor_settlement: self.investor_settlement,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub paths: usize,
    pub seed: u64,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

fn default_sigmas() -> f64 {
    3.0
}

impl OracleConfig {
    pub fn sim(&self, horizon: f64) -> SimConfig {
        SimConfig { paths: self.paths, seed: self.seed, horizon }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub dump_generator: bool,
    #[serde(default)]
    pub dump_kernels: bool,
    #[serde(default)]
    pub dump_trees: bool,
    #[serde(default)]
    pub dump_paths: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_tuples")]
    pub settlement_tuples: usize,
    #[serde(default = "default_counting_m")]
    pub counting_m: Vec<usize>,
    #[serde(default = "default_counting_dates")]
    pub counting_dates: usize,
    /// Writes a negative rate into the full generator before the
    /// reduction check.
    #[serde(default)]
    pub tamper_generator: bool,
}

fn default_tuples() -> usize {
    100_000
}

fn default_counting_m() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_counting_dates() -> usize {
    12
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            settlement_tuples: default_tuples(),
            counting_m: default_counting_m(),
            counting_dates: default_counting_dates(),
            tamper_generator: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Overlays `patch` on `base`: objects merge key by key, anything else
    /// replaces.
    pub fn merged(base: &str, patch: &str) -> Result<Self> {
        let mut b: Value = serde_json::from_str(base)?;
        let p: Value = serde_json::from_str(patch)?;
        merge(&mut b, p);
        Ok(serde_json::from_value(b)?)
    }

    pub fn spec(&self) -> Result<GeneratorSpec> {
        self.model.spec()
    }

    pub fn grid(&self) -> Result<TenorGrid> {
        self.grid.grid(self.contract.maturity)
    }

    pub fn engine_options(&self, convention: Convention, rule: RankRule) -> EngineOptions {
        EngineOptions::new(convention, rule)
            .with_coverage(self.engine.coverage)
            .with_systemic_replacements(self.engine.systemic_replacements)
    }

    /// Checks every block against its module's invariants.
    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        let grid = self.grid()?;
        let e = &self.engine;
        if e.conventions.is_empty() {
            return Err(Error::Config("convention list is empty".into()));
        }
        if e.rank_rules.is_empty() {
            return Err(Error::Config("rank rule list is empty".into()));
        }
        if e.r2.is_empty() {
            return Err(Error::Config("counterparty recovery list is empty".into()));
        }
        for r in &e.rank_rules {
            r.validate()?;
        }
        match e.rows {
            TableRows::Recovery if e.rank_rules.len() != 1 => {
                return Err(Error::Config("recovery rows need exactly one rank rule".into()))
            }
            TableRows::Rule if e.r2.len() != 1 => {
                return Err(Error::Config("rule rows need exactly one counterparty recovery".into()))
            }
            _ => {}
        }
        for &r2 in &e.r2 {
            e.settlement.terms(r2).validate()?;
        }
        for &c in &e.conventions {
            for &r in &e.rank_rules {
                crate::engine::PricingEngine::validate_options(&spec, &self.engine_options(c, r))?;
            }
        }
        crate::cds::ContractSpec::new(self.contract.maturity, 0.0, self.contract.recovery)?;
        if let Some(o) = &self.oracle {
            o.sim(grid.maturity()).validate()?;
            if !(o.sigmas > 0.0) {
                return Err(Error::Config("oracle sigmas must be positive".into()));
            }
        }
        Ok(())
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Presets reproducing the published tables.
pub const PRESETS: [(&str, &str); 5] = [
    ("table1", include_str!("../presets/table1.json")),
    ("table2", include_str!("../presets/table2.json")),
    ("table3", include_str!("../presets/table3.json")),
    ("table4", include_str!("../presets/table4.json")),
    ("table5", include_str!("../presets/table5.json")),
];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}`; known: table1..table5")))
}
