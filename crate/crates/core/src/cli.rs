//! Table sweeps, output files and the verification run behind the `cva`
//! binary.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{preset, RunConfig, TableRows};
use crate::contagion::{build_generator, step_kernels, write_kernel_csv, ChainState};
use crate::engine::{BilateralPriceReport, PricingEngine, ReportRecord};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mc::simulate;
use crate::verify::{counting_chain_equivalence, oracle_agreement, settlement_identities, SuiteResult};
use crate::{Convention, RankRule};

/// `x` with `digits` significant digits in positional notation.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), x);
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Loads a config file, overlaid on a preset when one is named.
pub fn load_config(path: &Path, preset_name: Option<&str>) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    match preset_name {
        Some(p) => RunConfig::merged(preset(p)?, &text),
        None => RunConfig::from_json(&text),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub label: String,
    pub r2: f64,
    pub rule: RankRule,
    /// One entry per configured convention, in order.
    pub cells: Vec<std::result::Result<BilateralPriceReport, String>>,
}

impl TableRow {
    pub fn spreads(&self) -> Vec<Option<f64>> {
        self.cells.iter().map(|c| c.as_ref().ok().map(|r| r.spread)).collect()
    }

    /// `(max − min)·10⁴` and `(max − min)/min·10⁴` over the converged cells.
    pub fn range_bp(&self) -> Option<(f64, f64)> {
        let s: Vec<f64> = self.spreads().into_iter().flatten().collect();
        if s.is_empty() {
            return None;
        }
        let max = s.iter().copied().fold(f64::MIN, f64::max);
        let min = s.iter().copied().fold(f64::MAX, f64::min);
        Some(((max - min) * 1e4, (max - min) / min * 1e4))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpreadTable {
    pub rows_kind: TableRows,
    pub conventions: Vec<Convention>,
    pub rows: Vec<TableRow>,
    /// NaN when the risk-free solve failed; see `riskfree_error`.
    pub riskfree_spread: f64,
    pub riskfree_error: Option<String>,
}

pub const FAILED: &str = "FAILED";

impl SpreadTable {
    pub fn failed(&self) -> bool {
        self.riskfree_error.is_some() || self.rows.iter().any(|r| r.cells.iter().any(|c| c.is_err()))
    }

    fn riskfree_cell(&self) -> String {
        if self.riskfree_error.is_some() {
            FAILED.to_string()
        } else {
            fmt_sig(self.riskfree_spread, 7)
        }
    }

    pub fn errors(&self) -> Vec<String> {
        let mut out: Vec<String> = self.riskfree_error.iter().map(|e| format!("risk-free: {e}")).collect();
        for r in &self.rows {
            for (c, cell) in self.conventions.iter().zip(&r.cells) {
                if let Err(e) = cell {
                    out.push(format!("{} {c}: {e}", r.label));
                }
            }
        }
        out
    }

    fn key_header(&self) -> &'static str {
        match self.rows_kind {
            TableRows::Recovery => "R2",
            TableRows::Rule => "rule",
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(self.key_header());
        for c in &self.conventions {
            write!(s, ",{c}").unwrap();
        }
        s.push_str(",range_abs_bp,range_rel_bp,riskfree\n");
        for r in &self.rows {
            s.push_str(&r.label);
            for v in r.spreads() {
                match v {
                    Some(x) => write!(s, ",{}", fmt_sig(x, 7)).unwrap(),
                    None => write!(s, ",{FAILED}").unwrap(),
                }
            }
            match r.range_bp() {
                Some((a, b)) => write!(s, ",{},{}", fmt_sig(a, 7), fmt_sig(b, 7)).unwrap(),
                None => write!(s, ",{FAILED},{FAILED}").unwrap(),
            }
            writeln!(s, ",{}", self.riskfree_cell()).unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut header = vec![self.key_header().to_string()];
        header.extend(self.conventions.iter().map(|c| c.to_string()));
        header.push("range bp".into());
        header.push("rel bp".into());
        let mut rows = vec![header];
        for r in &self.rows {
            let mut line = vec![r.label.clone()];
            line.extend(r.spreads().into_iter().map(|v| v.map_or(FAILED.to_string(), |x| fmt_sig(x, 7))));
            match r.range_bp() {
                Some((a, b)) => line.extend([format!("{a:.1}"), format!("{b:.1}")]),
                None => line.extend([FAILED.to_string(), FAILED.to_string()]),
            }
            rows.push(line);
        }
        let widths: Vec<usize> = (0..rows[0].len()).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap()).collect();
        let mut s = String::new();
        for r in &rows {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            writeln!(s, "{}", cells.join("  ")).unwrap();
        }
        writeln!(s, "risk-free spread {}", self.riskfree_cell()).unwrap();
        s
    }

    pub fn records(&self) -> Vec<ReportRecord> {
        self.rows.iter().flat_map(|r| r.cells.iter().filter_map(|c| c.as_ref().ok().map(ReportRecord::from))).collect()
    }
}

/// Spread-independent engines for every `(convention, rule)` pair.
pub struct Engines {
    pub engines: Vec<std::result::Result<PricingEngine, String>>,
    rules: usize,
}

impl Engines {
    pub fn build(cfg: &RunConfig, exec: Execution) -> Result<Self> {
        let spec = cfg.spec()?;
        let grid = cfg.grid()?;
        let convs = &cfg.engine.conventions;
        let rules = &cfg.engine.rank_rules;
        let engines = exec.map_range(convs.len() * rules.len(), |i| {
            let (c, r) = (convs[i / rules.len()], rules[i % rules.len()]);
            PricingEngine::new(&spec, &grid, cfg.contract.recovery, cfg.engine_options(c, r).with_execution(exec))
                .map_err(|e| e.to_string())
        });
        Ok(Self { engines, rules: rules.len() })
    }

    pub fn get(&self, conv: usize, rule: usize) -> std::result::Result<&PricingEngine, String> {
        self.engines[conv * self.rules + rule].as_ref().map_err(|e| e.clone())
    }
}

/// Runs the configured sweep. Solver failures end up in the cells; only
/// invalid configurations are errors.
pub fn run_table(cfg: &RunConfig, exec: Execution) -> Result<SpreadTable> {
    cfg.validate()?;
    let engines = Engines::build(cfg, exec)?;
    sweep(cfg, &engines, exec)
}

pub fn sweep(cfg: &RunConfig, engines: &Engines, exec: Execution) -> Result<SpreadTable> {
    let e = &cfg.engine;
    let points: Vec<(usize, usize)> = match e.rows {
        TableRows::Recovery => (0..e.r2.len()).map(|i| (i, 0)).collect(),
        TableRows::Rule => (0..e.rank_rules.len()).map(|k| (0, k)).collect(),
    };
    let nc = e.conventions.len();
    let cells = exec.map_range(points.len() * nc, |i| {
        let (ri, ki) = points[i / nc];
        let engine = engines.get(i % nc, ki)?;
        engine.cva(&e.settlement.terms(e.r2[ri])).map_err(|err| err.to_string())
    });
    let mut rows = Vec::with_capacity(points.len());
    for (p, chunk) in points.iter().zip(cells.chunks(nc)) {
        let (r2, rule) = (e.r2[p.0], e.rank_rules[p.1]);
        let label = match e.rows {
            TableRows::Recovery => format!("{r2}"),
            TableRows::Rule => rule.label(),
        };
        rows.push(TableRow { label, r2, rule, cells: chunk.to_vec() });
    }
    let (riskfree_spread, riskfree_error) = match engines.engines.iter().find_map(|x| x.as_ref().ok()) {
        Some(engine) => match engine.riskfree_par_spread() {
            Ok(k) => (k, None),
            Err(err) => (f64::NAN, Some(err.to_string())),
        },
        None => (f64::NAN, Some("no engine could be built".into())),
    };
    Ok(SpreadTable { rows_kind: e.rows, conventions: e.conventions.clone(), rows, riskfree_spread, riskfree_error })
}

#[derive(Clone, Debug, Serialize)]
pub struct Timings {
    pub engines_ms: f64,
    pub sweep_ms: f64,
    pub dumps_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub name: String,
    pub status: String,
    pub version: String,
    pub preset: Option<String>,
    pub threads: Option<usize>,
    pub parallel: bool,
    pub riskfree_spread: Option<f64>,
    pub outputs: Vec<String>,
    pub errors: Vec<String>,
    pub timings: Option<Timings>,
    pub config: Option<RunConfig>,
}

impl Manifest {
    fn new(cfg: Option<&RunConfig>, opts: &RunOptions) -> Self {
        Self {
            name: cfg.map_or_else(String::new, |c| c.name.clone()),
            status: "ok".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            preset: opts.preset.clone(),
            threads: opts.threads,
            parallel: cfg!(feature = "parallel"),
            riskfree_spread: None,
            outputs: Vec::new(),
            errors: Vec::new(),
            timings: None,
            config: cfg.cloned(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
    pub threads: Option<usize>,
}

pub struct RunOutcome {
    pub table: Option<SpreadTable>,
    pub manifest: Manifest,
    pub exit_code: i32,
}

fn file_tag(s: &str) -> String {
    s.replace('\'', "_prime").replace('.', "p")
}

fn write_file(dir: &Path, name: &str, body: &[u8], manifest: &mut Manifest) -> Result<()> {
    fs::write(dir.join(name), body)?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn write_dumps(cfg: &RunConfig, engines: &Engines, table: &SpreadTable, dir: &Path, manifest: &mut Manifest) -> Result<()> {
    let out = &cfg.output;
    if out.dump_generator || out.dump_kernels {
        let generator = build_generator(&cfg.spec()?)?;
        if out.dump_generator {
            let mut buf = Vec::new();
            generator.write_csv(&mut buf)?;
            write_file(dir, "generator.csv", &buf, manifest)?;
        }
        if out.dump_kernels {
            let grid = cfg.grid()?;
            let kernels = step_kernels(&generator, &grid)?;
            for (x, k) in kernels.iter().enumerate() {
                if x > 0 && std::sync::Arc::ptr_eq(&k.matrix, &kernels[x - 1].matrix) {
                    continue;
                }
                let mut buf = Vec::new();
                write_kernel_csv(generator.states(), k, &mut buf)?;
                write_file(dir, &format!("kernel_{x:03}.csv"), &buf, manifest)?;
            }
        }
    }
    if out.dump_trees {
        let e = &cfg.engine;
        for row in &table.rows {
            let ki = e.rank_rules.iter().position(|r| *r == row.rule).unwrap_or(0);
            for (ci, (c, cell)) in e.conventions.iter().zip(&row.cells).enumerate() {
                let (Ok(report), Ok(engine)) = (cell, engines.get(ci, ki)) else { continue };
                let tree = engine.build_tree(report.spread, &e.settlement.terms(row.r2))?;
                let mut buf = Vec::new();
                tree.write_csv(&mut buf)?;
                let name = format!("tree_{}_{}_r2_{}.csv", file_tag(c.label()), row.rule.label(), file_tag(&row.r2.to_string()));
                write_file(dir, &name, &buf, manifest)?;
            }
        }
    }
    if out.dump_paths {
        let o = cfg.oracle.ok_or_else(|| Error::Config("path dump needs an oracle block".into()))?;
        let spec = cfg.spec()?;
        let paths = simulate(
            &build_generator(&spec)?,
            ChainState::alive(spec.initial_count),
            &o.sim(cfg.contract.maturity),
            Execution::Parallel,
        )?;
        let f = fs::File::create(dir.join("paths.csv"))?;
        paths.write_csv(BufWriter::new(f))?;
        manifest.outputs.push("paths.csv".into());
    }
    Ok(())
}

/// Full `run` command. Every failure is reported in the manifest; the
/// exit code is nonzero when anything failed.
pub fn run(config_path: &Path, opts: &RunOptions) -> RunOutcome {
    let t0 = Instant::now();
    if let Some(n) = opts.threads {
        crate::exec::set_threads(n);
    }
    let cfg = match load_config(config_path, opts.preset.as_deref()).and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            let mut manifest = Manifest::new(None, opts);
            manifest.status = FAILED.into();
            manifest.errors.push(format!("invalid configuration: {e}"));
            if let Some(dir) = &opts.out {
                let _ = fs::create_dir_all(dir)
                    .and_then(|_| fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest).unwrap()));
            }
            return RunOutcome { table: None, manifest, exit_code: 2 };
        }
    };
    let mut manifest = Manifest::new(Some(&cfg), opts);
    let exec = Execution::Parallel;
    let result = (|| -> Result<(SpreadTable, Timings)> {
        let t_engines = Instant::now();
        let engines = Engines::build(&cfg, exec)?;
        let engines_ms = t_engines.elapsed().as_secs_f64() * 1e3;
        let t_sweep = Instant::now();
        let table = sweep(&cfg, &engines, exec)?;
        let sweep_ms = t_sweep.elapsed().as_secs_f64() * 1e3;
        let t_dumps = Instant::now();
        let dir = opts.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from));
        if let Some(dir) = &dir {
            fs::create_dir_all(dir)?;
            let stem = if cfg.name.is_empty() { "table".to_string() } else { cfg.name.clone() };
            write_file(dir, &format!("{stem}.csv"), table.to_csv().as_bytes(), &mut manifest)?;
            write_file(dir, &format!("{stem}.txt"), table.to_text().as_bytes(), &mut manifest)?;
            write_file(dir, "reports.json", &serde_json::to_vec_pretty(&table.records())?, &mut manifest)?;
            write_dumps(&cfg, &engines, &table, dir, &mut manifest)?;
        }
        let dumps_ms = t_dumps.elapsed().as_secs_f64() * 1e3;
        Ok((table, Timings { engines_ms, sweep_ms, dumps_ms, total_ms: t0.elapsed().as_secs_f64() * 1e3 }))
    })();
    let (table, mut exit_code) = match result {
        Ok((table, timings)) => {
            manifest.timings = Some(timings);
            manifest.riskfree_spread = table.riskfree_error.is_none().then_some(table.riskfree_spread);
            manifest.errors = table.errors();
            let code = if table.failed() { 1 } else { 0 };
            (Some(table), code)
        }
        Err(e) => {
            manifest.errors.push(e.to_string());
            (None, 1)
        }
    };
    if exit_code != 0 {
        manifest.status = FAILED.into();
    }
    if let Some(dir) = opts.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)) {
        if fs::create_dir_all(&dir)
            .and_then(|_| fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest).expect("manifest")))
            .is_err()
        {
            exit_code = exit_code.max(1);
        }
    }
    RunOutcome { table, manifest, exit_code }
}

/// Runs every invariant suite for `cfg`. A config that fails validation
/// yields a single failed suite.
pub fn verify(cfg: &RunConfig) -> Vec<SuiteResult> {
    let mut out = Vec::new();
    let fail = |detail: String| SuiteResult {
        name: "configuration".into(),
        passed: false,
        measured: f64::NAN,
        tolerance: 0.0,
        detail,
    };
    if let Err(e) = cfg.validate() {
        out.push(fail(e.to_string()));
        return out;
    }
    let Some(oracle) = cfg.oracle else {
        out.push(fail("verification needs an oracle block".into()));
        return out;
    };
    out.push(SuiteResult { name: "configuration".into(), passed: true, measured: 0.0, tolerance: 0.0, detail: "valid".into() });
    out.push(settlement_identities(cfg.verify.settlement_tuples, oracle.seed));
    match cfg.model.intensity() {
        Ok(intensity) => out.push(counting_chain_equivalence(
            &intensity,
            &cfg.verify.counting_m,
            cfg.verify.counting_dates,
            cfg.contract.maturity,
            cfg.verify.tamper_generator,
        )),
        Err(e) => out.push(fail(e.to_string())),
    }
    match (cfg.spec(), cfg.grid()) {
        (Ok(spec), Ok(grid)) => out.push(oracle_agreement(
            &spec,
            &grid,
            cfg.contract.recovery,
            &cfg.engine.settlement.terms(cfg.engine.r2[0]),
            &oracle.sim(cfg.contract.maturity),
            oracle.sigmas,
        )),
        (Err(e), _) | (_, Err(e)) => out.push(fail(e.to_string())),
    }
    out
}
