//! Command-line surface: k-sample tests on CSV datasets, process
//! simulation, Monte-Carlo size/power studies, real-data subsampling and
//! asymptotic power evaluation.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use fanova::harness::{
    asymptotic_power_baseline, asymptotic_power_ss, estimate_size, power_curve, subsample_study,
    AsymptoticBaseline, ExperimentConfig, McSizes, ShrinkingAlternative, SubsampleConfig,
    TestSelector, TestSettings,
};
use fanova::io::{
    read_dataset_csv, render_reports, write_dataset_csv, write_report, ReportFormat, RunManifest,
};
use fanova::simulate::{generate_grouped, shift_functions, ProcessSpec, ShiftSpec};
use fanova::{Error, GridDomain, Result, TestReport};

#[derive(Parser)]
#[command(name = "fanova", version, about = "k-sample comparison tests for functional data")]
struct Cli {
    /// Cap the worker thread count (results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DomainArgs {
    /// Left endpoint of the observation interval
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    /// Right endpoint of the observation interval
    #[arg(long, default_value_t = 1.0)]
    b: f64,
}

#[derive(Args)]
struct ProcessArgs {
    /// Process name: sbm, gbm, sbm2, t<df> or t<df>sq
    #[arg(long)]
    process: String,
    /// Contamination probability (applies the scale with this probability)
    #[arg(long)]
    contaminate_p: Option<f64>,
    /// Contamination scale
    #[arg(long, default_value_t = 5.0)]
    contaminate_s: f64,
}

impl ProcessArgs {
    fn build(&self) -> Result<ProcessSpec> {
        let base = ProcessSpec::parse_name(&self.process)?;
        let spec = match self.contaminate_p {
            Some(p) => ProcessSpec::Contaminated {
                base: Box::new(base),
                p,
                s: self.contaminate_s,
            },
            None => base,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run tests on a CSV dataset (group label column + value columns)
    Test {
        /// Dataset path
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        domain: DomainArgs,
        /// Comma-separated test selectors, e.g. ss-perm,cff,hr
        #[arg(long, value_delimiter = ',', required = true)]
        tests: Vec<String>,
        /// Resamples / Monte-Carlo draws per calibration
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        /// Use the exact permutation enumeration for ss-perm when feasible
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        seed: u64,
        /// Output path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// json or csv
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Generate a grouped dataset from a process specification
    Simulate {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long, default_value_t = 0.25)]
        a: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
        /// Grid points per observation
        #[arg(long, default_value_t = 100)]
        m: usize,
        /// Comma-separated group sizes
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0.0)]
        c1: f64,
        #[arg(long, default_value_t = 0.0)]
        c2: f64,
        #[arg(long)]
        seed: u64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate test sizes under the null from a TOML experiment config
    Size {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Common-random-number power curves from a TOML experiment config
    Power {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Curve CSV path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run manifest JSON path
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Subsampling size/power study on a real dataset
    Subsample {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        domain: DomainArgs,
        /// Test selector
        #[arg(long, default_value = "ss-perm")]
        test: String,
        /// Resamples per test run
        #[arg(long, default_value_t = 500)]
        replicates: usize,
        #[arg(long, default_value_t = 200)]
        replications: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Subgroup size; default floor(group size / K)
        #[arg(long)]
        subgroup_size: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Asymptotic power under shrinking alternatives
    AsymPower {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long, default_value_t = 0.25)]
        a: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
        #[arg(long, default_value_t = 100)]
        m: usize,
        /// Test: ss, cff, zc or hr
        #[arg(long, default_value = "ss")]
        test: String,
        #[arg(long, default_value_t = 0.0)]
        c1: f64,
        #[arg(long, default_value_t = 0.0)]
        c2: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 2000)]
        pairs: usize,
        #[arg(long, default_value_t = 2000)]
        outer: usize,
        #[arg(long, default_value_t = 200)]
        inner: usize,
        #[arg(long, default_value_t = 20000)]
        draws: usize,
        #[arg(long)]
        seed: u64,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_tests_on(
    sample: &fanova::GroupedSample,
    tests: &[String],
    replicates: usize,
    exact: bool,
    seed: u64,
) -> Result<Vec<TestReport>> {
    let mut reports = Vec::new();
    for name in tests {
        let selector = TestSelector::from_str(name)?;
        let report = if exact && selector == TestSelector::SsPerm {
            fanova::inference::exact_permutation_test(sample)?
        } else {
            selector.run(sample, replicates, seed)?
        };
        reports.push(report);
    }
    Ok(reports)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::InvalidInput("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Test { data, domain, tests, replicates, exact, seed, out, format } => {
            let format = ReportFormat::from_str(&format)?;
            let (sample, _) = read_dataset_csv(&data, domain.a, domain.b)?;
            let reports = run_tests_on(&sample, &tests, replicates, exact, seed)?;
            match out {
                Some(path) => write_report(&reports, &path, format),
                None => emit(&render_reports(&reports, format)?, None),
            }
        }
        Command::Simulate { process, a, b, m, sizes, c1, c2, seed, out } => {
            let spec = process.build()?;
            let domain = GridDomain::new(a, b, m)?;
            let shift = ShiftSpec { c1, c2, domain };
            let sample = generate_grouped(&spec, &shift, &sizes, seed)?;
            let labels: Vec<String> = (1..=sizes.len()).map(|k| format!("g{k}")).collect();
            write_dataset_csv(&out, &sample, &labels)
        }
        Command::Size { config, seed, out } => {
            let text = std::fs::read_to_string(&config)?;
            let config = ExperimentConfig::from_toml(&text)?;
            let table = estimate_size(&config, seed)?;
            emit(&table.to_csv(), out.as_ref())
        }
        Command::Power { config, seed, out, manifest } => {
            let start = Instant::now();
            let text = std::fs::read_to_string(&config)?;
            let parsed = ExperimentConfig::from_toml(&text)?;
            let curve = power_curve(&parsed, seed)?;
            emit(&curve.to_csv(), out.as_ref())?;
            if let Some(path) = manifest {
                let mut m = RunManifest::new("power", seed);
                m.config.insert("config_file".into(), config.display().to_string());
                m.config.insert("config_toml".into(), text);
                m.wall_clock_seconds = start.elapsed().as_secs_f64();
                std::fs::write(&path, m.to_json()?)?;
            }
            Ok(())
        }
        Command::Subsample {
            data,
            domain,
            test,
            replicates,
            replications,
            alpha,
            subgroup_size,
            seed,
            out,
        } => {
            let (sample, labels) = read_dataset_csv(&data, domain.a, domain.b)?;
            let config = SubsampleConfig {
                test: TestSettings { test: TestSelector::from_str(&test)?, replicates },
                replications,
                alpha,
                subgroup_size,
            };
            let report = subsample_study(&sample, &config, seed)?;
            let mut text = String::from("study,group,rate,se,errors\n");
            for (g, cell) in &report.size_by_group {
                text.push_str(&format!(
                    "size,{},{:.17e},{:.17e},{}\n",
                    labels[*g], cell.rate, cell.se, cell.errors
                ));
            }
            for g in &report.omitted_groups {
                text.push_str(&format!("omitted,{},,,\n", labels[*g]));
            }
            text.push_str(&format!(
                "power,all,{:.17e},{:.17e},{}\n",
                report.power.rate, report.power.se, report.power.errors
            ));
            emit(&text, out.as_ref())
        }
        Command::AsymPower {
            process,
            a,
            b,
            m,
            test,
            c1,
            c2,
            alpha,
            pairs,
            outer,
            inner,
            draws,
            seed,
        } => {
            let domain = GridDomain::new(a, b, m)?;
            let shift = shift_functions(&ShiftSpec { c1, c2, domain });
            let alt = ShrinkingAlternative {
                process: process.build()?,
                domain,
                lambdas: vec![1.0 / 3.0; 3],
                deltas: shift.to_vec(),
            };
            let mc = McSizes { pairs, outer, inner, draws };
            let (power, note) = match test.as_str() {
                "ss" => {
                    let r = asymptotic_power_ss(&alt, alpha, mc, seed)?;
                    (r.power, r.unstable.then(|| "inverse-distance average unstable".to_string()))
                }
                "cff" => (asymptotic_power_baseline(AsymptoticBaseline::Cff, &alt, alpha, mc, seed)?, None),
                "zc" => (asymptotic_power_baseline(AsymptoticBaseline::Zc, &alt, alpha, mc, seed)?, None),
                "hr" => (asymptotic_power_baseline(AsymptoticBaseline::Hr, &alt, alpha, mc, seed)?, None),
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown asymptotic test {other}; use ss, cff, zc or hr"
                    )))
                }
            };
            println!("test,c1,c2,alpha,power");
            println!("{test},{c1},{c2},{alpha},{power:.17e}");
            if let Some(note) = note {
                eprintln!("warning: {note}");
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message; --help/--version are successes
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
