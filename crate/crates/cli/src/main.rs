use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lkcwave::artifact;
use lkcwave::chaos::{self, ChaosForm, ReductionReport, ReductionSettings};
use lkcwave::coeffs;
use lkcwave::geometry::{self, LengthMethod};
use lkcwave::harness::{self, ExperimentConfig, RunControl, WORKERS_ENV};
use lkcwave::lattice;
use lkcwave::sampler::{self, WaveSpec};
use lkcwave::{Error, Manifold};

const EXIT_INVALID: u8 = 1;
const EXIT_VERIFICATION: u8 = 2;

#[derive(Parser)]
#[command(
    name = "lkcwave",
    version,
    about = "Random Laplace eigenfunctions, excursion-set curvatures and their chaos projections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LengthArg {
    Marching,
    Band,
}

#[derive(Subcommand)]
enum Command {
    /// Frequency points of the torus eigenvalue 4π²n as CSV, with N_n and μ̂_n(4).
    Lattice { n: u64 },
    /// Every scalar coefficient at (manifold, n, u) as key,value CSV.
    Coeffs {
        #[arg(long)]
        manifold: Manifold,
        #[arg(long)]
        n: u64,
        #[arg(long, allow_hyphen_values = true)]
        u: f64,
    },
    /// Samples one realisation on a grid and writes the field artifact.
    Sample {
        #[arg(long)]
        manifold: Manifold,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `M` for an M×M torus grid, `ROWSxCOLS` on the sphere; default 16 points per wavelength.
        #[arg(long)]
        res: Option<String>,
        /// Output path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Curvature estimates of a field artifact at the given levels.
    Lkc {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        levels: Vec<f64>,
        #[arg(long, value_enum, default_value = "marching")]
        length: LengthArg,
        /// Band half-width for `--length band`.
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
    /// One chaos component of L_k for a field artifact.
    Chaos {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, allow_hyphen_values = true)]
        u: f64,
        #[arg(long, default_value = "derivative")]
        form: ChaosForm,
    },
    /// Compares derivative and reduced second-chaos forms over an ensemble.
    VerifyReduction {
        /// TOML settings; overrides the individual flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        manifold: Option<Manifold>,
        #[arg(long, required_unless_present = "config")]
        n: Option<u64>,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "-2,-1,-0.5,0,0.5,1,2"
        )]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        replicates: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for `report.json` and `replicate_errors.csv`; the report goes to standard output when absent.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Runs (or resumes) an ensemble described by a TOML configuration.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        /// Stop after this many newly computed replicates.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Summary statistics of a results directory or records file, as JSON.
    Summarize { results: PathBuf },
    /// Writes plot-ready CSV tables next to the records.
    Plotdata { results: PathBuf },
}

enum Failure {
    Invalid(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(w) = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFICATION)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Lattice { n } => cmd_lattice(n),
        Command::Coeffs { manifold, n, u } => cmd_coeffs(manifold, n, u),
        Command::Sample {
            manifold,
            n,
            seed,
            res,
            out,
        } => cmd_sample(manifold, n, seed, res.as_deref(), out.as_deref()),
        Command::Lkc {
            input,
            levels,
            length,
            eps,
        } => {
            let method = match length {
                LengthArg::Marching => LengthMethod::Marching,
                LengthArg::Band => LengthMethod::Band { eps },
            };
            cmd_lkc(&input, &levels, method)
        }
        Command::Chaos { input, k, q, u, form } => cmd_chaos(&input, k, q, u, form),
        Command::VerifyReduction {
            config,
            manifold,
            n,
            levels,
            replicates,
            seed,
            out_dir,
        } => {
            let settings = match config {
                Some(path) => ReductionSettings::from_toml(&read_text(&path)?)?,
                None => ReductionSettings::new(
                    manifold.expect("required by clap"),
                    n.expect("required by clap"),
                    levels,
                    replicates,
                    seed,
                ),
            };
            cmd_verify(&settings, out_dir.as_deref())
        }
        Command::Ensemble { config, stop_after } => {
            let cfg = ExperimentConfig::load(&config)?;
            let res = harness::run_ensemble_with(&cfg, RunControl { stop_after })?;
            let mut out = io::stdout().lock();
            writeln!(out, "records: {}", cfg.output_dir.join(harness::RECORDS_FILE).display())?;
            match res.summary {
                Some(_) => writeln!(out, "summary: {}", cfg.output_dir.join(harness::SUMMARY_FILE).display())?,
                None => writeln!(
                    out,
                    "interrupted after {} replicates; rerun to resume",
                    res.meta.resumed_replicates + res.meta.computed_replicates
                )?,
            }
            Ok(())
        }
        Command::Summarize { results } => {
            let summary = harness::summarize(&results)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serialises")
            );
            Ok(())
        }
        Command::Plotdata { results } => {
            for p in harness::emit_plotdata(&results)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn emit(text: &str) -> Outcome {
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn cmd_lattice(n: u64) -> Outcome {
    let fs = lattice::enumerate_frequencies(n)?;
    let mut s = String::from("n,xi1,xi2\n");
    for &(a, b) in &fs.points {
        let _ = writeln!(s, "{n},{a},{b}");
    }
    let mu = lattice::mu_hat4_exact(&fs);
    let _ = writeln!(
        s,
        "# N_n={} mu_hat4={}/{} ({})",
        fs.multiplicity,
        mu.numer(),
        mu.denom(),
        lattice::mu_hat4(&fs)
    );
    emit(&s)
}

fn cmd_coeffs(manifold: Manifold, n: u64, u: f64) -> Outcome {
    manifold.validate_energy(n)?;
    let lam = manifold.eigenvalue(n);
    let mut rows: Vec<(String, f64)> = vec![("eigenvalue".into(), lam)];
    for q in 0..=4 {
        rows.push((format!("gamma_{q}"), coeffs::gamma_coeff(q, u)));
    }
    for l in 0..=4 {
        rows.push((format!("beta_{l}"), coeffs::beta_coeff(l, u)));
    }
    for (a, b) in [(0, 0), (2, 0), (0, 2), (4, 0), (2, 2), (0, 4)] {
        rows.push((format!("alpha_{a}{b}"), coeffs::alpha_coeff(a, b)?));
    }
    rows.push(("boundary_prefactor".into(), coeffs::boundary_prefactor(lam)));
    let c = coeffs::reduction_constants(u);
    for k in 0..=2 {
        rows.push((format!("c{k}"), c.get(k)));
        rows.push((format!("reduced_multiplier_{k}"), coeffs::reduced_multiplier(k, u, lam)));
    }
    let kappa = coeffs::kappa_set(manifold, n)?;
    for (i, v) in kappa.kappa.iter().enumerate() {
        rows.push((format!("kappa{}", i + 1), *v));
    }
    if manifold == Manifold::Torus {
        let fs = lattice::enumerate_frequencies(n)?;
        rows.push(("N_n".into(), fs.multiplicity as f64));
        rows.push(("mu_hat4".into(), lattice::mu_hat4(&fs)));
        if !fs.is_epc_degenerate() {
            let h = coeffs::h_coeffs(&fs, u)?;
            for (i, v) in h.as_array().iter().enumerate() {
                rows.push((format!("h{}", i + 1), *v));
            }
            rows.push(("h35".into(), h.h35));
            let ibp = coeffs::ibp_constants(&fs, u)?;
            for (name, v) in [("A", ibp.a), ("B", ibp.b), ("C", ibp.c), ("D", ibp.d), ("E", ibp.e)] {
                rows.push((name.into(), v));
            }
        }
    }
    let mut s = String::from("key,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v:?}");
    }
    emit(&s)
}

fn parse_res(manifold: Manifold, n: u64, res: Option<&str>) -> Result<(usize, usize), Failure> {
    let bad = |r: &str| Failure::Invalid(format!("--res expects M or ROWSxCOLS, got '{r}'"));
    match res {
        None => Ok(sampler::default_resolution(
            manifold,
            n,
            sampler::DEFAULT_POINTS_PER_WAVELENGTH,
        )),
        Some(r) => match r.split_once('x') {
            Some((a, b)) => Ok((a.parse().map_err(|_| bad(r))?, b.parse().map_err(|_| bad(r))?)),
            None => {
                let m: usize = r.parse().map_err(|_| bad(r))?;
                Ok(match manifold {
                    Manifold::Torus => (m, m),
                    Manifold::Sphere => (m, 2 * m),
                })
            }
        },
    }
}

fn cmd_sample(manifold: Manifold, n: u64, seed: u64, res: Option<&str>, out: Option<&Path>) -> Outcome {
    let spec = WaveSpec::new(manifold, n, seed)?;
    let (rows, cols) = parse_res(manifold, n, res)?;
    let grid = sampler::sample(&spec, rows, cols)?;
    match out {
        Some(p) => artifact::write_field(&grid, p)?,
        None => emit(&artifact::field_to_csv(&grid))?,
    }
    Ok(())
}

fn cmd_lkc(input: &Path, levels: &[f64], method: LengthMethod) -> Outcome {
    let grid = artifact::read_field(input)?;
    let mut s = String::from("level,L0,L1,L2,estimator,resolution\n");
    for &u in levels {
        let e = geometry::lkc_estimate(&grid, u, method)?;
        let _ = writeln!(
            s,
            "{u:?},{:?},{:?},{:?},{},{}x{}",
            e.l0,
            e.l1,
            e.l2,
            e.estimator_label(),
            e.rows,
            e.cols
        );
    }
    emit(&s)
}

fn cmd_chaos(input: &Path, k: usize, q: usize, u: f64, form: ChaosForm) -> Outcome {
    let grid = artifact::read_field(input)?;
    let value = match (k, q) {
        (_, 2) => chaos::second_chaos(&grid, k, u, form)?.value,
        (2, _) => chaos::area_chaos(&grid, u, q)?.value,
        (1, _) if form == ChaosForm::Derivative => chaos::boundary_chaos(&grid, u, q)?.value,
        (0, 0) => harness::expected_lkc(grid.manifold(), grid.spec.n, u)[0],
        (0 | 1, _) => {
            return Err(Failure::Invalid(format!(
                "chaos order {q} of L_{k} is not available in the {form} form"
            )))
        }
        _ => return Err(Failure::Invalid(format!("k must be 0, 1 or 2, got {k}"))),
    };
    emit(&format!("k,q,u,form,value\n{k},{q},{u:?},{form},{value:?}\n"))
}

fn report_csv(report: &ReductionReport) -> String {
    let mut s = String::from("k,u,seed,derivative,reduced,abs_err,pass\n");
    for c in &report.pathwise {
        let _ = writeln!(
            s,
            "{},{:?},{},{:?},{:?},{:?},{}",
            c.k, c.u, c.seed, c.derivative, c.reduced, c.abs_err, c.pass
        );
    }
    s
}

fn cmd_verify(settings: &ReductionSettings, out_dir: Option<&Path>) -> Outcome {
    let report = chaos::verify_reduction(settings)?;
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("report.json"), json + "\n")?;
            fs::write(dir.join("replicate_errors.csv"), report_csv(&report))?;
        }
        None => println!("{json}"),
    }
    eprintln!(
        "{} pathwise checks, max error {:.3e}; {} statistical checks",
        report.pathwise.len(),
        report.max_pathwise_error,
        report.statistical.len()
    );
    if report.pass {
        Ok(())
    } else {
        let failed =
            report.pathwise.iter().filter(|c| !c.pass).count() + report.statistical.iter().filter(|c| !c.pass).count();
        Err(Failure::Verification(format!("{failed} checks out of tolerance")))
    }
}
