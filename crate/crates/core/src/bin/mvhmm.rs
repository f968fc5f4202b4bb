//! Command-line front end: filtering, smoothing, prediction, synthetic
//! data and oracle validation suites.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mvhmm::dual::{dw_log_survival, dw_log_typed, gillespie_oracle, DualKind, DwDualSpec, FvDual, FvDualSpec};
use mvhmm::dw::DwEngine;
use mvhmm::fv::FvEngine;
use mvhmm::io::{
    check_normalized, fmt_real, format_mixture, format_pmf, load_timeline, write_header, write_timeline, BaseSpec,
    Dataset, ModelKind, RunConfig,
};
use mvhmm::model::{MultiIndex, ObservationTimeline, TypeRegistry};
use mvhmm::oracle::{
    cir_duality_reports, particle_smoother_dw, particle_smoother_fv, simulate_dw_data, simulate_fv_data,
    wf_duality_reports, OracleReport,
};
use mvhmm::{Error, Result};

#[derive(Parser)]
#[command(name = "mvhmm", version, about = "Exact inference for measure-valued diffusion hidden Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Observation file.
    #[arg(long)]
    data: PathBuf,
    /// Index of the collection time.
    #[arg(long)]
    at: usize,
    /// Sum repeated rows for the same cell instead of rejecting them.
    #[arg(long)]
    aggregate: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Filtering law at a collection time given data up to it.
    Filter(DataArgs),
    /// Smoothing law at a collection time given all data.
    Smooth(DataArgs),
    /// Predictive law of further draws at a collection time.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        /// Number of further labels to sample.
        #[arg(long)]
        samples: Option<usize>,
        /// Print the analytic pmf of the next draw.
        #[arg(long)]
        pmf: bool,
    },
    /// Synthetic data from a discrete base measure.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated collection times.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Draws per time (Fleming-Viot).
        #[arg(long, default_value_t = 10)]
        size: u32,
        /// Poisson draws per time (Dawson-Watanabe).
        #[arg(long, default_value_t = 1)]
        draws: usize,
    },
    /// Oracle cross-checks; exits nonzero if any check fails.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        suite: Suite,
        /// Monte Carlo replicates (particles for the particle suite).
        #[arg(long, default_value_t = 100_000)]
        replicates: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Duality,
    Particle,
    DualRates,
}

enum Engine {
    Fv(FvEngine),
    Dw(DwEngine),
}

fn engine(config: &RunConfig, registry: TypeRegistry) -> Result<Engine> {
    let base = config.base_measure()?;
    Ok(match config.model {
        ModelKind::Fv => Engine::Fv(FvEngine::with_options(
            &base,
            registry,
            config.tolerance(),
            config.pruning_epsilon,
        )?),
        ModelKind::Dw => Engine::Dw(DwEngine::with_options(
            &base,
            config.beta.expect("validated"),
            registry,
            config.dw_rate_scale,
            config.pruning_epsilon,
        )?),
    })
}

fn load(args: &DataArgs) -> Result<(RunConfig, Dataset, Engine)> {
    let config = RunConfig::from_file(&args.config)?;
    let data = load_timeline(&args.data, args.aggregate)?;
    if data.model != config.model {
        return Err(Error::Schema("data columns do not match the configured model".into()));
    }
    data.timeline.check_index(args.at)?;
    let engine = engine(&config, data.registry.clone())?;
    Ok((config, data, engine))
}

const REPORT_TOL: f64 = 1e-10;

fn mixture_command(args: &DataArgs, smooth: bool) -> Result<String> {
    let (config, data, engine) = load(args)?;
    let name = if smooth { "smooth" } else { "filter" };
    let tl = &data.timeline;
    match engine {
        Engine::Fv(e) => {
            let law = if smooth { e.smooth(tl, args.at)? } else { e.filter(tl, args.at)? };
            check_normalized(&law.components, REPORT_TOL)?;
            Ok(format_mixture(name, config.model, &data, args.at, &law.components, None))
        }
        Engine::Dw(e) => {
            let law = if smooth { e.smooth(tl, args.at)? } else { e.filter(tl, args.at)? };
            check_normalized(&law.components, REPORT_TOL)?;
            Ok(format_mixture(name, config.model, &data, args.at, &law.components, Some(law.rate_offset)))
        }
    }
}

fn predict(args: &DataArgs, samples: Option<usize>, pmf: bool) -> Result<String> {
    let (config, data, engine) = load(args)?;
    let mut out = String::new();
    write_header(&mut out, "predict", config.model, &data, args.at);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let show_pmf = pmf || samples.is_none();
    match engine {
        Engine::Fv(e) => {
            let law = e.smooth(&data.timeline, args.at)?;
            if show_pmf {
                let next = e.predictive_pmf::<&str>(&law, &[]);
                format_pmf(&mut out, "next", &next, e.registry());
            }
            if let Some(n) = samples {
                let labels = e.predictive_sample(&law, n, &mut rng);
                writeln!(out, "samples = {}", labels.join(",")).unwrap();
            }
        }
        Engine::Dw(e) => {
            let law = e.smooth(&data.timeline, args.at)?;
            if show_pmf {
                let counts = e.predict_count_pmf(&law)?;
                writeln!(out, "count_mean = {}", fmt_real(e.predict_count_mean(&law))).unwrap();
                writeln!(out, "count_tail_bound = {}", fmt_real(counts.tail_bound)).unwrap();
                for (n, p) in counts.probs.iter().enumerate() {
                    writeln!(out, "count {n} = {}", fmt_real(*p)).unwrap();
                }
                let first = e.first_label_pmf(&law)?;
                format_pmf(&mut out, "first", &first, e.registry());
            }
            if let Some(n) = samples {
                for d in 0..n {
                    let (m, labels) = e.predict_draw(&law, &mut rng)?;
                    writeln!(out, "draw {d} size = {m} labels = {}", labels.join(",")).unwrap();
                }
            }
        }
    }
    Ok(out)
}

/// Registered labels and parameter masses of a fully discrete base.
fn discrete_alpha(config: &RunConfig) -> Result<(Vec<String>, Vec<f64>)> {
    let BaseSpec::Discrete(atoms) = &config.base else {
        return Err(Error::Config("simulation needs base = discrete".into()));
    };
    let total: f64 = atoms.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("p0.* masses must sum to 1 for simulation, got {total}")));
    }
    Ok((
        atoms.keys().cloned().collect(),
        atoms.values().map(|p| config.theta * p).collect(),
    ))
}

fn simulate(config: &RunConfig, times: &[f64], size: u32, draws: usize) -> Result<Dataset> {
    let (labels, alpha) = discrete_alpha(config)?;
    let registry = TypeRegistry::new(labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let timeline = match config.model {
        ModelKind::Fv => ObservationTimeline::from_counts(times.to_vec(), simulate_fv_data(&alpha, times, size, &mut rng))?,
        ModelKind::Dw => {
            let beta = config.beta.expect("validated");
            let groups = simulate_dw_data(&alpha, beta, times, draws, &mut rng);
            ObservationTimeline::new(times.to_vec(), groups, alpha.len())?
        }
    };
    Ok(Dataset {
        model: config.model,
        registry,
        timeline,
    })
}

/// Two-type parameter used by the validation suites: the configured atoms
/// when the base has exactly two, otherwise an even split of `theta`.
fn suite_alpha(config: &RunConfig) -> Vec<f64> {
    match &config.base {
        BaseSpec::Discrete(atoms) if atoms.len() == 2 => atoms.values().map(|p| config.theta * p).collect(),
        _ => vec![config.theta / 2.0; 2],
    }
}

fn suite_multi_indices() -> Vec<MultiIndex> {
    [[1, 0], [0, 1], [1, 1], [2, 1], [0, 3]]
        .iter()
        .map(|c| MultiIndex::new(c.to_vec()))
        .collect()
}

fn duality_suite(config: &RunConfig, replicates: usize) -> Result<Vec<OracleReport>> {
    let alpha = suite_alpha(config);
    let ms = suite_multi_indices();
    match config.model {
        ModelKind::Fv => wf_duality_reports(&alpha, &[0.3, 0.7], 0.5, &ms, replicates, config.seed),
        ModelKind::Dw => {
            let spec = DwDualSpec::new(config.theta, config.beta.expect("validated"), 1.0)
                .with_rate_scale(config.dw_rate_scale);
            cir_duality_reports(&alpha, spec, &[0.8, 1.5], 0.7, &ms, replicates, config.seed)
        }
    }
}

fn particle_suite(config: &RunConfig, particles: usize) -> Result<Vec<OracleReport>> {
    let alpha = suite_alpha(config);
    let registry = TypeRegistry::new(["a", "b"])?;
    let atoms = [("a".to_string(), alpha[0] / config.theta), ("b".to_string(), alpha[1] / config.theta)];
    let base = mvhmm::model::BaseMeasure::discrete(config.theta, atoms.into_iter().collect())?;
    let times = vec![0.0, 0.4, 1.0];
    let mut reports = Vec::new();
    match config.model {
        ModelKind::Fv => {
            let counts = [[2u32, 1], [0, 2], [1, 1]].iter().map(|c| MultiIndex::new(c.to_vec())).collect();
            let tl = ObservationTimeline::from_counts(times, counts)?;
            let engine = FvEngine::with_options(&base, registry, config.tolerance(), config.pruning_epsilon)?;
            for i in 0..tl.len() {
                let exact = engine.smooth(&tl, i)?.mean(engine.params());
                let est = particle_smoother_fv(&alpha, &tl, i, particles, config.seed)?;
                reports.push(OracleReport::new(format!("fv smooth mean t{i}"), exact[0], est[0].mean, est[0].std_error, 0.0));
            }
        }
        ModelKind::Dw => {
            let beta = config.beta.expect("validated");
            let draws = [[2u32, 1], [0, 2], [1, 1]].iter().map(|c| vec![MultiIndex::new(c.to_vec())]).collect();
            let tl = ObservationTimeline::new(times, draws, 2)?;
            let engine = DwEngine::with_options(&base, beta, registry, config.dw_rate_scale, config.pruning_epsilon)?;
            for i in 0..tl.len() {
                let exact = engine.smooth(&tl, i)?.mean(engine.params());
                let est = particle_smoother_dw(&alpha, beta, &tl, i, particles, config.seed)?;
                for j in 0..2 {
                    reports.push(OracleReport::new(
                        format!("dw smooth mean t{i} type{j}"),
                        exact[j],
                        est[j].mean,
                        est[j].std_error,
                        0.0,
                    ));
                }
            }
        }
    }
    Ok(reports)
}

/// Exact transition probability from the start state.
type ExactLaw = Box<dyn Fn(&MultiIndex) -> Result<f64>>;

fn dual_rates_suite(config: &RunConfig, replicates: usize) -> Result<Vec<OracleReport>> {
    let start = MultiIndex::new(vec![2, 1]);
    let t = 0.5;
    let mut reports = Vec::new();
    let (kind, exact): (DualKind, ExactLaw) = match config.model {
        ModelKind::Fv => {
            let dual = FvDual::with_tolerance(config.theta, config.tolerance());
            let s = start.clone();
            (
                DualKind::Fv(FvDualSpec { theta: config.theta }),
                Box::new(move |k| Ok(dual.log_typed(&s, k, t)?.exp())),
            )
        }
        ModelKind::Dw => {
            let spec = DwDualSpec::new(config.theta, config.beta.expect("validated"), 1.0)
                .with_rate_scale(config.dw_rate_scale);
            let log_q = dw_log_survival(&spec, t)?;
            let s = start.clone();
            (DualKind::Dw(spec), Box::new(move |k| Ok(dw_log_typed(&s, k, log_q)?.exp())))
        }
    };
    let law = gillespie_oracle(kind, &start, t, replicates as u64, config.seed);
    for k in start.below() {
        reports.push(OracleReport::new(
            format!("dual transition {start}->{k}"),
            exact(&k)?,
            law.prob(&k),
            law.std_error(&k),
            0.0,
        ));
    }
    Ok(reports)
}

fn validate(config: &RunConfig, suite: Suite, replicates: usize) -> Result<(String, bool)> {
    let reports = match suite {
        Suite::Duality => duality_suite(config, replicates)?,
        Suite::Particle => particle_suite(config, replicates)?,
        Suite::DualRates => dual_rates_suite(config, replicates)?,
    };
    let mut out = String::new();
    let mut ok = true;
    for r in &reports {
        ok &= r.pass;
        writeln!(out, "{r}").unwrap();
    }
    writeln!(out, "result = {}", if ok { "pass" } else { "FAIL" }).unwrap();
    Ok((out, ok))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Filter(args) => print!("{}", mixture_command(&args, false)?),
        Command::Smooth(args) => print!("{}", mixture_command(&args, true)?),
        Command::Predict { data, samples, pmf } => print!("{}", predict(&data, samples, pmf)?),
        Command::Simulate {
            config,
            times,
            out,
            size,
            draws,
        } => {
            let config = RunConfig::from_file(&config)?;
            let data = simulate(&config, &times, size, draws)?;
            let file = std::fs::File::create(&out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
            write_timeline(file, &data)?;
        }
        Command::Validate {
            config,
            suite,
            replicates,
        } => {
            let config = RunConfig::from_file(&config)?;
            let (text, ok) = validate(&config, suite, replicates)?;
            print!("{text}");
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
