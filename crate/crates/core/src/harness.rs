//! Configuration-driven ensembles with reproducible, resumable output.
//!
//! Output directory layout:
//! - `config.toml`: the configuration echo; a resumed run must match it.
//! - `records.csv`: one row per (energy, replicate, level), appended in that
//!   order. Floats use the shortest representation that round-trips.
//! - `summary.json`: a pure function of the sorted records.
//! - `run_meta.json`: wall-clock and scheduling data, kept apart so the two
//!   files above stay byte-reproducible.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{self, ChaosForm};
use crate::coeffs;
use crate::error::{Error, Result};
use crate::geometry::{self, LengthMethod};
use crate::lattice::{self, FrequencySet};
use crate::manifold::Manifold;
use crate::rng;
use crate::sampler;
use crate::special::{gaussian_pdf, gaussian_sf};

/// Environment variable consulted when the configuration sets no worker count.
pub const WORKERS_ENV: &str = "LKCWAVE_WORKERS";

pub const CONFIG_FILE: &str = "config.toml";
pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const META_FILE: &str = "run_meta.json";
pub const PLOT_DIR: &str = "plotdata";

/// Grid sizing. `rows` (and `cols` on the sphere) override the density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    #[serde(default = "default_density")]
    pub points_per_wavelength: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
}

fn default_density() -> f64 {
    sampler::DEFAULT_POINTS_PER_WAVELENGTH
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            points_per_wavelength: default_density(),
            rows: None,
            cols: None,
        }
    }
}

impl GridPolicy {
    /// `(rows, cols)` for energy `n`.
    pub fn shape(&self, manifold: Manifold, n: u64) -> (usize, usize) {
        let (r, c) = sampler::default_resolution(manifold, n, self.points_per_wavelength);
        match (manifold, self.rows, self.cols) {
            (Manifold::Torus, Some(m), _) => (m, m),
            (Manifold::Sphere, rows, cols) => (rows.unwrap_or(r), cols.unwrap_or(c)),
            _ => (r, c),
        }
    }
}

/// Boundary-length estimator choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthChoice {
    Marching,
    Band,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorPolicy {
    #[serde(default = "default_length")]
    pub length: LengthChoice,
    /// Band half-width, in units of the (unit) field standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Record second-chaos terms alongside the curvatures.
    #[serde(default = "default_true")]
    pub chaos: bool,
}

fn default_length() -> LengthChoice {
    LengthChoice::Marching
}

fn default_true() -> bool {
    true
}

impl Default for EstimatorPolicy {
    fn default() -> Self {
        EstimatorPolicy {
            length: LengthChoice::Marching,
            eps: None,
            chaos: true,
        }
    }
}

impl EstimatorPolicy {
    pub fn length_method(&self) -> LengthMethod {
        match self.length {
            LengthChoice::Marching => LengthMethod::Marching,
            LengthChoice::Band => LengthMethod::Band {
                eps: self.eps.unwrap_or(0.05),
            },
        }
    }
}

/// Everything needed to reproduce an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: Manifold,
    pub energies: Vec<u64>,
    pub levels: Vec<f64>,
    pub replicates: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub estimators: EstimatorPolicy,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if self.energies.is_empty() {
            return invalid("at least one energy index is required".into());
        }
        if self.levels.is_empty() {
            return invalid("at least one level is required".into());
        }
        if self.replicates == 0 {
            return invalid("replicates must be at least 1".into());
        }
        if let Some(u) = self.levels.iter().find(|u| !u.is_finite()) {
            return invalid(format!("level {u} is not finite"));
        }
        if self.workers == Some(0) {
            return invalid("workers must be at least 1".into());
        }
        if !(self.grid.points_per_wavelength > 0.0) {
            return invalid("grid.points_per_wavelength must be positive".into());
        }
        if let Some(eps) = self.estimators.eps {
            if !(eps > 0.0) {
                return invalid(format!("estimators.eps must be positive, got {eps}"));
            }
        }
        for &n in &self.energies {
            self.manifold
                .validate_energy(n)
                .map_err(|e| Error::InvalidConfig(format!("energy {n}: {e}")))?;
            let (rows, cols) = self.grid.shape(self.manifold, n);
            let min = match self.manifold {
                Manifold::Torus => sampler::min_torus_resolution(n),
                Manifold::Sphere => sampler::min_sphere_resolution(n),
            };
            if rows.min(cols) < min {
                return invalid(format!("grid {rows}x{cols} is below the minimum {min} for energy {n}"));
            }
        }
        Ok(())
    }

    fn resolved_workers(&self) -> Option<usize> {
        self.workers
            .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
            .filter(|&w| w > 0)
    }
}

/// One row of `records.csv`. Chaos columns are empty when not computed or
/// not defined (the Euler-characteristic derivative form off the torus or
/// for degenerate lattice sets).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub manifold: Manifold,
    pub n: u64,
    pub replicate: u64,
    pub seed: u64,
    pub level: f64,
    pub rows: usize,
    pub cols: usize,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub estimator: String,
    pub under_resolved: bool,
    pub int_h2: Option<f64>,
    pub area_chaos2: Option<f64>,
    pub boundary_chaos2_derivative: Option<f64>,
    pub boundary_chaos2_reduced: Option<f64>,
    pub epc_chaos2_derivative: Option<f64>,
    pub epc_chaos2_reduced: Option<f64>,
}

/// Interrupts a run after a number of completed replicates; used to test
/// resumption.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunControl {
    pub stop_after: Option<u64>,
}

/// Scheduling and timing data for one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub crate_version: String,
    pub workers: usize,
    pub resumed_replicates: u64,
    pub computed_replicates: u64,
    pub complete: bool,
    pub wall_seconds: f64,
}

/// Everything a run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    /// `None` when the run was interrupted.
    pub summary: Option<Summary>,
    pub meta: RunMeta,
}

/// Runs the ensemble to completion.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleResult> {
    run_ensemble_with(cfg, RunControl::default())
}

/// Runs the ensemble, resuming from any records already in the output
/// directory.
pub fn run_ensemble_with(cfg: &ExperimentConfig, control: RunControl) -> Result<EnsembleResult> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_text = cfg.to_toml()?;
    let config_path = dir.join(CONFIG_FILE);
    if config_path.exists() {
        let previous = ExperimentConfig::load(&config_path)?;
        if !same_experiment(&previous, cfg) {
            return Err(Error::InvalidConfig(format!(
                "{} holds results of a different configuration",
                dir.display()
            )));
        }
    }
    fs::write(&config_path, &config_text).map_err(|e| Error::io(&config_path, e))?;

    let records_path = dir.join(RECORDS_FILE);
    let mut records = recover_records(&records_path, cfg)?;
    let levels = cfg.levels.len() as u64;
    let per_energy = cfg.replicates;
    let total = per_energy * cfg.energies.len() as u64;
    let done = records.len() as u64 / levels;

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = cfg.resolved_workers() {
            b = b.num_threads(w);
        }
        b.build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
    };
    let workers = pool.current_num_threads();
    let target = control.stop_after.map_or(total, |s| (done + s).min(total));

    let file = OpenOptions::new()
        .append(true)
        .open(&records_path)
        .map_err(|e| Error::io(&records_path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    let frequency_sets: Vec<Option<FrequencySet>> = cfg
        .energies
        .iter()
        .map(|&n| match cfg.manifold {
            Manifold::Torus => lattice::enumerate_frequencies(n).map(Some),
            Manifold::Sphere => Ok(None),
        })
        .collect::<Result<_>>()?;

    let batch = (4 * workers).max(1) as u64;
    let mut next = done;
    while next < target {
        let end = (next + batch).min(target);
        let rows: Vec<Vec<Record>> = pool.install(|| {
            (next..end)
                .into_par_iter()
                .map(|g| {
                    let e = (g / per_energy) as usize;
                    replicate_records(cfg, cfg.energies[e], frequency_sets[e].as_ref(), g % per_energy)
                })
                .collect::<Result<_>>()
        })?;
        for rec in rows.iter().flatten() {
            writer
                .serialize(rec)
                .map_err(|e| Error::io(&records_path, std::io::Error::other(e)))?;
        }
        writer.flush().map_err(|e| Error::io(&records_path, e))?;
        records.extend(rows.into_iter().flatten());
        next = end;
    }
    drop(writer);

    let complete = next == total;
    let summary = if complete {
        let s = summarize_records(cfg, &records)?;
        write_json(&dir.join(SUMMARY_FILE), &s)?;
        Some(s)
    } else {
        None
    };
    let meta = RunMeta {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        workers,
        resumed_replicates: done,
        computed_replicates: next - done,
        complete,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&dir.join(META_FILE), &meta)?;
    Ok(EnsembleResult {
        config: cfg.clone(),
        records,
        summary,
        meta,
    })
}

/// Two configurations produce the same records. Worker count and output
/// location do not affect results.
fn same_experiment(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    let strip = |c: &ExperimentConfig| ExperimentConfig {
        workers: None,
        output_dir: PathBuf::new(),
        ..c.clone()
    };
    strip(a) == strip(b)
}

const HEADER: &str = "manifold,n,replicate,seed,level,rows,cols,l0,l1,l2,estimator,under_resolved,int_h2,area_chaos2,boundary_chaos2_derivative,boundary_chaos2_reduced,epc_chaos2_derivative,epc_chaos2_reduced";

/// Loads existing records, drops a trailing partial line and any incomplete
/// replicate, truncates the file to match, and creates it if missing.
fn recover_records(path: &Path, cfg: &ExperimentConfig) -> Result<Vec<Record>> {
    if !path.exists() {
        fs::write(path, format!("{HEADER}\n")).map_err(|e| Error::io(path, e))?;
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let complete_len = text.rfind('\n').map_or(0, |i| i + 1);
    let body = &text[..complete_len];
    let mut lines = body.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        _ => {
            fs::write(path, format!("{HEADER}\n")).map_err(|e| Error::io(path, e))?;
            return Ok(Vec::new());
        }
    }
    let levels = cfg.levels.len();
    let mut records = Vec::new();
    let mut offset = HEADER.len() + 1;
    let mut kept = offset;
    for line in lines {
        let rec = parse_record(line)?;
        let idx = records.len() as u64;
        let (g, l) = (idx / levels as u64, (idx % levels as u64) as usize);
        let e = (g / cfg.replicates) as usize;
        if e >= cfg.energies.len()
            || rec.n != cfg.energies[e]
            || rec.replicate != g % cfg.replicates
            || rec.level != cfg.levels[l]
        {
            return Err(Error::MalformedRecord(format!(
                "record {} of {} does not follow the configured order",
                idx + 1,
                path.display()
            )));
        }
        records.push(rec);
        offset += line.len() + 1;
        if records.len() % levels == 0 {
            kept = offset;
        }
    }
    records.truncate(records.len() / levels * levels);
    let file = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.set_len(kept as u64).map_err(|e| Error::io(path, e))?;
    Ok(records)
}

fn parse_record(line: &str) -> Result<Record> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(line.as_bytes());
    let mut it = rdr.deserialize::<Record>();
    match it.next() {
        Some(Ok(r)) => Ok(r),
        Some(Err(e)) => Err(Error::MalformedRecord(format!("{e}: '{line}'"))),
        None => Err(Error::MalformedRecord(format!("empty line '{line}'"))),
    }
}

/// Reads every record of a records file.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        Some(_) => {
            return Err(Error::MalformedRecord(format!(
                "{} has an unexpected header",
                path.display()
            )))
        }
        None => return Err(Error::MalformedRecord(format!("{} is empty", path.display()))),
    }
    let records: Vec<Record> = lines
        .filter(|l| !l.trim().is_empty())
        .map(parse_record)
        .collect::<Result<_>>()?;
    if records.is_empty() {
        return Err(Error::MalformedRecord(format!(
            "{} contains no records",
            path.display()
        )));
    }
    Ok(records)
}

fn replicate_records(cfg: &ExperimentConfig, n: u64, fs: Option<&FrequencySet>, replicate: u64) -> Result<Vec<Record>> {
    let seed = rng::stream_seed(cfg.seed ^ n.wrapping_mul(0x5851_f42d_4c95_7f2d), replicate);
    let (rows, cols) = cfg.grid.shape(cfg.manifold, n);
    let grid = match fs {
        Some(fs) => sampler::sample_torus(fs, seed, rows)?,
        None => sampler::sample_sphere(n, seed, rows, cols)?,
    };
    let int_h2 = if cfg.estimators.chaos {
        Some(chaos::integral_hermite(&grid, 2)?)
    } else {
        None
    };
    let epc_derivative_ok = fs.is_some_and(|fs| !fs.is_epc_degenerate());
    let epc_reduced_ok = fs.is_none_or(|fs| !fs.is_epc_degenerate());
    let method = cfg.estimators.length_method();
    cfg.levels
        .iter()
        .map(|&u| {
            let est = geometry::lkc_estimate(&grid, u, method)?;
            let chaos_term = |ok: bool, k: usize, form: ChaosForm| -> Result<Option<f64>> {
                if !cfg.estimators.chaos || !ok {
                    return Ok(None);
                }
                Ok(Some(chaos::second_chaos(&grid, k, u, form)?.value))
            };
            Ok(Record {
                manifold: cfg.manifold,
                n,
                replicate,
                seed,
                level: u,
                rows: grid.rows,
                cols: grid.cols,
                l0: est.l0,
                l1: est.l1,
                l2: est.l2,
                estimator: est.estimator_label(),
                under_resolved: est.under_resolved,
                int_h2,
                area_chaos2: chaos_term(true, 2, ChaosForm::Reduced)?,
                boundary_chaos2_derivative: chaos_term(true, 1, ChaosForm::Derivative)?,
                boundary_chaos2_reduced: chaos_term(true, 1, ChaosForm::Reduced)?,
                epc_chaos2_derivative: chaos_term(epc_derivative_ok, 0, ChaosForm::Derivative)?,
                epc_chaos2_reduced: chaos_term(epc_reduced_ok, 0, ChaosForm::Reduced)?,
            })
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Sample moments of one column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub std_err: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Moments {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let variance = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Moments {
            mean,
            variance,
            std_err: (variance / n).sqrt(),
        }
    }
}

/// Closed-form expectations of the three curvatures under the Gaussian
/// kinematic formula with gradient variance `λ/2` per direction.
pub fn expected_lkc(manifold: Manifold, n: u64, u: f64) -> [f64; 3] {
    let lam = manifold.eigenvalue(n);
    let area = manifold.area();
    let phi = gaussian_pdf(u);
    [
        manifold.euler_characteristic() as f64 * gaussian_sf(u)
            + area * lam / 2.0 * u * phi / (2.0 * std::f64::consts::PI),
        area * 0.5 * (lam / 2.0).sqrt() * (std::f64::consts::PI / 2.0).sqrt() * phi,
        area * gaussian_sf(u),
    ]
}

/// `Var ∫H₂(f)`: `2/N_n` on the torus, `32π²/(2n+1)` on the sphere.
pub fn expected_var_int_h2(manifold: Manifold, n: u64) -> Result<f64> {
    match manifold {
        Manifold::Torus => Ok(2.0 / lattice::enumerate_frequencies(n)?.multiplicity as f64),
        Manifold::Sphere => Ok(32.0 * std::f64::consts::PI.powi(2) / (2.0 * n as f64 + 1.0)),
    }
}

/// Statistics of one (energy, level) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub n: u64,
    pub level: f64,
    pub replicates: usize,
    pub l0: Moments,
    pub l1: Moments,
    pub l2: Moments,
    pub expected: [f64; 3],
    /// `|mean − expected| ≤ 3·std_err` for `L₀, L₁, L₂`.
    pub mean_within_3se: [bool; 3],
    /// Pearson correlation of each `L_k` with `∫H₂(f)`.
    pub corr_with_int_h2: Option<[f64; 3]>,
    /// Predicted variance of the second chaos, `(c_k(u)(√(λ/2))^{2−k})²·Var∫H₂`.
    pub second_chaos_variance: Option<[f64; 3]>,
    /// Largest `|derivative − reduced|/(1 + |reduced|)` over records.
    pub max_reduction_error: Option<[f64; 2]>,
}

/// Per-energy statistics of `∫H₂(f)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub n: u64,
    pub eigenvalue: f64,
    pub replicates: usize,
    pub int_h2: Option<Moments>,
    pub expected_var_int_h2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub manifold: Manifold,
    pub energies: Vec<EnergySummary>,
    pub levels: Vec<LevelSummary>,
}

/// Order-independent summary: records are sorted by `(n, replicate, level)`
/// before any arithmetic.
pub fn summarize_records(cfg: &ExperimentConfig, records: &[Record]) -> Result<Summary> {
    summarize_sorted(cfg.manifold, records)
}

fn summarize_sorted(manifold: Manifold, records: &[Record]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::MalformedRecord("no records to summarise".into()));
    }
    if let Some(r) = records.iter().find(|r| r.manifold != manifold) {
        return Err(Error::MalformedRecord(format!(
            "record of n = {} is on the {}",
            r.n, r.manifold
        )));
    }
    let mut sorted: Vec<&Record> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.n, a.replicate)
            .cmp(&(b.n, b.replicate))
            .then(a.level.total_cmp(&b.level))
    });
    let mut by_energy: BTreeMap<u64, Vec<&Record>> = BTreeMap::new();
    for r in sorted {
        by_energy.entry(r.n).or_default().push(r);
    }
    let mut energies = Vec::new();
    let mut levels = Vec::new();
    for (&n, recs) in &by_energy {
        let lam = manifold.eigenvalue(n);
        let mut per_rep: BTreeMap<u64, Option<f64>> = BTreeMap::new();
        for r in recs {
            per_rep.insert(r.replicate, r.int_h2);
        }
        let h2: Option<Vec<f64>> = per_rep.values().copied().collect();
        let var_h2 = expected_var_int_h2(manifold, n)?;
        energies.push(EnergySummary {
            n,
            eigenvalue: lam,
            replicates: per_rep.len(),
            int_h2: h2.as_deref().map(Moments::of),
            expected_var_int_h2: var_h2,
        });
        let mut by_level: BTreeMap<u64, Vec<&Record>> = BTreeMap::new();
        for r in recs {
            by_level.entry(level_key(r.level)).or_default().push(r);
        }
        for group in by_level.values() {
            let u = group[0].level;
            let col = |f: fn(&Record) -> f64| group.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (l0, l1, l2) = (col(|r| r.l0), col(|r| r.l1), col(|r| r.l2));
            let m = [Moments::of(&l0), Moments::of(&l1), Moments::of(&l2)];
            let expected = expected_lkc(manifold, n, u);
            let mean_within_3se = [0, 1, 2].map(|k| (m[k].mean - expected[k]).abs() <= 3.0 * m[k].std_err);
            let h2: Option<Vec<f64>> = group.iter().map(|r| r.int_h2).collect();
            let corr_with_int_h2 = h2
                .as_ref()
                .map(|x| [chaos::pearson(x, &l0), chaos::pearson(x, &l1), chaos::pearson(x, &l2)]);
            let second_chaos_variance = h2
                .as_ref()
                .map(|_| [0, 1, 2].map(|k| coeffs::reduced_multiplier(k, u, lam).powi(2) * var_h2));
            let rel = |d: Option<f64>, r: Option<f64>| match (d, r) {
                (Some(d), Some(r)) => Some((d - r).abs() / (1.0 + r.abs())),
                _ => None,
            };
            let worst = |f: &dyn Fn(&Record) -> Option<f64>| -> Option<f64> {
                group
                    .iter()
                    .map(|r| f(r))
                    .collect::<Option<Vec<f64>>>()
                    .map(|v| v.into_iter().fold(0.0, f64::max))
            };
            let e0 = worst(&|r| rel(r.epc_chaos2_derivative, r.epc_chaos2_reduced));
            let e1 = worst(&|r| rel(r.boundary_chaos2_derivative, r.boundary_chaos2_reduced));
            let max_reduction_error = match (e0, e1) {
                (Some(a), Some(b)) => Some([a, b]),
                (None, Some(b)) => Some([f64::NAN, b]),
                _ => None,
            };
            levels.push(LevelSummary {
                n,
                level: u,
                replicates: group.len(),
                l0: m[0],
                l1: m[1],
                l2: m[2],
                expected,
                mean_within_3se,
                corr_with_int_h2,
                second_chaos_variance,
                max_reduction_error,
            });
        }
    }
    Ok(Summary {
        manifold,
        energies,
        levels,
    })
}

/// Total order key for float levels.
fn level_key(u: f64) -> u64 {
    let b = u.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Summary of a results directory (or a records file) without recomputing
/// any field.
pub fn summarize(path: &Path) -> Result<Summary> {
    let records_path = if path.is_dir() {
        path.join(RECORDS_FILE)
    } else {
        path.to_path_buf()
    };
    let records = read_records(&records_path)?;
    summarize_sorted(records[0].manifold, &records)
}

/// Writes `variance_vs_n.csv`, `correlation_vs_n.csv` and
/// `lkc_means_vs_u.csv` under `<results>/plotdata`, one row per
/// (energy, level). Returns the written paths.
pub fn emit_plotdata(results: &Path) -> Result<Vec<PathBuf>> {
    let summary = summarize(results)?;
    let base = if results.is_dir() {
        results.to_path_buf()
    } else {
        results.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    let out = base.join(PLOT_DIR);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let energy: BTreeMap<u64, &EnergySummary> = summary.energies.iter().map(|e| (e.n, e)).collect();
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();

    let mut variance = String::from(
        "n,level,eigenvalue,var_int_h2,expected_var_int_h2,var_l0,var_l1,var_l2,chaos2_var_l0,chaos2_var_l1,chaos2_var_l2\n",
    );
    let mut correlation = String::from("n,level,corr_l0_int_h2,corr_l1_int_h2,corr_l2_int_h2\n");
    let mut means =
        String::from("n,level,mean_l0,se_l0,expected_l0,mean_l1,se_l1,expected_l1,mean_l2,se_l2,expected_l2\n");
    for s in &summary.levels {
        let e = energy[&s.n];
        let cv = |k: usize| fmt_opt(s.second_chaos_variance.map(|v| v[k]));
        variance += &format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            s.n,
            s.level,
            e.eigenvalue,
            fmt_opt(e.int_h2.map(|m| m.variance)),
            e.expected_var_int_h2,
            s.l0.variance,
            s.l1.variance,
            s.l2.variance,
            cv(0),
            cv(1),
            cv(2)
        );
        let cc = |k: usize| fmt_opt(s.corr_with_int_h2.map(|v| v[k]));
        correlation += &format!("{},{},{},{},{}\n", s.n, s.level, cc(0), cc(1), cc(2));
        means += &format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            s.n,
            s.level,
            s.l0.mean,
            s.l0.std_err,
            s.expected[0],
            s.l1.mean,
            s.l1.std_err,
            s.expected[1],
            s.l2.mean,
            s.l2.std_err,
            s.expected[2]
        );
    }
    let mut paths = Vec::new();
    for (name, body) in [
        ("variance_vs_n.csv", variance),
        ("correlation_vs_n.csv", correlation),
        ("lkc_means_vs_u.csv", means),
    ] {
        let p = out.join(name);
        let mut f = File::create(&p).map_err(|e| Error::io(&p, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            manifold: Manifold::Torus,
            energies: vec![5],
            levels: vec![0.0, 1.0],
            replicates: 3,
            seed: 7,
            output_dir: dir.to_path_buf(),
            workers: Some(2),
            grid: GridPolicy::default(),
            estimators: EstimatorPolicy::default(),
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = config(Path::new("out"));
        cfg.grid.rows = Some(64);
        cfg.estimators = EstimatorPolicy {
            length: LengthChoice::Band,
            eps: Some(0.1),
            chaos: false,
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let base =
            "manifold = \"torus\"\nenergies = [5]\nlevels = [0.0]\nreplicates = 2\nseed = 1\noutput_dir = \"o\"\n";
        assert!(ExperimentConfig::from_toml(base).is_ok());
        let unknown = format!("{base}colour = \"red\"\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&unknown),
            Err(Error::InvalidConfig(_))
        ));
        let bad_n = base.replace("[5]", "[3]");
        let err = ExperimentConfig::from_toml(&bad_n).unwrap_err();
        assert!(
            matches!(&err, Error::InvalidConfig(m) if m.contains("sum of two squares")),
            "{err}"
        );
        assert!(ExperimentConfig::from_toml(&base.replace("replicates = 2", "replicates = 0")).is_err());
        let nested = format!("{base}[grid]\ndensity = 3\n");
        assert!(ExperimentConfig::from_toml(&nested).is_err());
    }

    #[test]
    fn level_keys_sort_like_floats() {
        let mut xs = vec![1.5, -0.0, -2.0, 0.5, -0.5, 3.0];
        xs.sort_by_key(|&x| level_key(x));
        assert_eq!(xs, vec![-2.0, -0.5, -0.0, 0.5, 1.5, 3.0]);
    }

    #[test]
    fn moments_of_a_small_sample() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn expectations_at_known_levels() {
        let e = expected_lkc(Manifold::Torus, 25, 0.0);
        assert_eq!(e[0], 0.0);
        assert!((e[2] - 0.5).abs() < 1e-15);
        let s = expected_lkc(Manifold::Sphere, 10, -40.0);
        assert!((s[0] - 2.0).abs() < 1e-12 && (s[2] - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((expected_var_int_h2(Manifold::Torus, 25).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }
}
