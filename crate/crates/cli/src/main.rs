use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mccard::eval::evaluate;
use mccard::harness::{ablation_spec, run_sweep, Method, SweepOutput, SweepSpec};
use mccard::model_selection::{cv_select, default_h_grid, default_lambda_grid, CvScore, CvSolver, DEFAULT_FOLDS};
use mccard::synthgen::{generate, NoiseSpec, ScenarioSpec};
use mccard::{fit_ls_ard, fit_mcc_ard, fit_mcc_l1, Dataset, FitConfig, L1Config, LikelihoodVariant, SparseLinearModel};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "mccard", version, about = "Robust sparse regression with correntropy and ARD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for sweeps and cross-validation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress and solver warnings.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    LsArd,
    MccArd,
    MccArdProper,
    MccL1,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    R,
    NegRmse,
}

#[derive(Args)]
struct ProfileArgs {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic train/test pair and write it as CSV.
    Generate {
        /// ScenarioSpec JSON; defaults to the profile scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Outlier scale override.
        #[arg(long)]
        tau: Option<f64>,
        /// Outlier proportion override.
        #[arg(long)]
        psi: Option<f64>,
        #[command(flatten)]
        common: ProfileArgs,
    },
    /// Fit a model to a dataset CSV and write it as JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Solver config JSON (FitConfig, or L1Config for mcc_l1).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Kernel bandwidth; overrides the config.
        #[arg(long)]
        h: Option<f64>,
        /// L1 penalty for mcc_l1; overrides the config.
        #[arg(long)]
        lambda: Option<f64>,
        /// Choose h (and lambda) by cross-validation on the given data.
        #[arg(long)]
        cv: bool,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long, value_enum, default_value = "r")]
        score: ScoreArg,
        /// Seed of the fold assignment.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the CV score table to this CSV path.
        #[arg(long)]
        cv_table: Option<PathBuf>,
        /// Model JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model JSON on a dataset CSV that carries its ground truth.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Metrics JSON path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo sweep over outlier scale and proportion.
    Sweep {
        /// SweepSpec JSON; defaults to the profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: ProfileArgs,
    },
    /// Sweep comparing the deviant and proper likelihoods on shared data.
    Ablation {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: ProfileArgs,
    },
}

type AnyResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn read_json<T: DeserializeOwned>(path: &Path) -> AnyResult<T> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> AnyResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn generate_cmd(config: Option<PathBuf>, tau: Option<f64>, psi: Option<f64>, common: ProfileArgs) -> AnyResult<()> {
    let mut spec: ScenarioSpec = match config {
        Some(p) => read_json(&p)?,
        None => match common.profile {
            Profile::Desk => ScenarioSpec::desk_scale(NoiseSpec::default(), 0),
            Profile::Paper => ScenarioSpec::paper_scale(NoiseSpec::default(), 0),
        },
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    spec.noise = NoiseSpec::new(
        spec.noise.gaussian_variance,
        tau.unwrap_or(spec.noise.outlier_scale),
        psi.unwrap_or(spec.noise.outlier_proportion),
    )?;
    let (train, test) = generate(&spec)?;
    fs::create_dir_all(&common.out)?;
    train.save(&common.out.join("train.csv"))?;
    test.save(&common.out.join("test.csv"))?;
    write_json(&common.out.join("scenario.json"), &spec)?;
    println!("wrote {} and {}", common.out.join("train.csv").display(), common.out.join("test.csv").display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fit_cmd(
    data: PathBuf,
    method: MethodArg,
    config: Option<PathBuf>,
    h: Option<f64>,
    lambda: Option<f64>,
    cv: bool,
    folds: usize,
    score: ScoreArg,
    seed: u64,
    cv_table: Option<PathBuf>,
    out: PathBuf,
) -> AnyResult<()> {
    let ds = Dataset::load(&data)?;
    let score = match score {
        ScoreArg::R => CvScore::R,
        ScoreArg::NegRmse => CvScore::NegRmse,
    };
    let save_table = |res: &mccard::model_selection::CvResult| -> AnyResult<()> {
        if let Some(p) = &cv_table {
            res.write_csv(fs::File::create(p)?)?;
        }
        eprintln!("cv selected h = {}, lambda = {:?}, score = {}", res.best_h, res.best_lambda, res.best_score);
        Ok(())
    };
    let model: SparseLinearModel = match method {
        MethodArg::LsArd => {
            let cfg: FitConfig = config.map(|p| read_json(&p)).transpose()?.unwrap_or_else(FitConfig::ls_ard_default);
            fit_ls_ard(&ds, &cfg)?
        }
        MethodArg::MccArd | MethodArg::MccArdProper => {
            let mut cfg: FitConfig = config.map(|p| read_json(&p)).transpose()?.unwrap_or_default();
            if matches!(method, MethodArg::MccArdProper) {
                cfg.likelihood_variant = LikelihoodVariant::Proper;
            }
            if let Some(h) = h {
                cfg.kernel_bandwidth = h;
            }
            if cv {
                let grid = default_h_grid(&ds);
                let res = cv_select(&ds, &CvSolver::MccArd(cfg.clone()), &grid, None, folds, score, seed)?;
                save_table(&res)?;
                cfg.kernel_bandwidth = res.best_h;
            }
            fit_mcc_ard(&ds, &cfg)?
        }
        MethodArg::MccL1 => {
            let mut cfg: L1Config = config.map(|p| read_json(&p)).transpose()?.unwrap_or_default();
            if let Some(h) = h {
                cfg.kernel_bandwidth = h;
            }
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            if cv {
                let (hg, lg) = (default_h_grid(&ds), default_lambda_grid(&ds, 8));
                let res = cv_select(&ds, &CvSolver::MccL1(cfg.clone()), &hg, Some(&lg), folds, score, seed)?;
                save_table(&res)?;
                cfg.kernel_bandwidth = res.best_h;
                cfg.lambda = res.best_lambda.unwrap_or(cfg.lambda);
            }
            fit_mcc_l1(&ds, &cfg)?
        }
    };
    for w in &model.warnings {
        log::warn!("{w:?}");
    }
    write_json(&out, &model)?;
    eprintln!("{} of {} features selected after {} iterations", model.n_selected(), model.dim(), model.iterations);
    Ok(())
}

fn eval_cmd(model: PathBuf, data: PathBuf, out: Option<PathBuf>) -> AnyResult<()> {
    let m: SparseLinearModel = read_json(&model)?;
    let ds = Dataset::load(&data)?;
    let report = evaluate(&m, &ds)?;
    match out {
        Some(p) => write_json(&p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn sweep_spec(config: Option<PathBuf>, common: &ProfileArgs) -> AnyResult<SweepSpec> {
    let mut spec: SweepSpec = match &config {
        Some(p) => read_json(p)?,
        None => match common.profile {
            Profile::Desk => SweepSpec::desk(0),
            Profile::Paper => SweepSpec::paper(0),
        },
    };
    if let Some(seed) = common.seed {
        spec.master_seed = seed;
    }
    Ok(spec)
}

fn report(out: &SweepOutput, dir: &Path) {
    let failed = out.detail.iter().filter(|d| d.error.is_some()).count();
    println!(
        "{} runs ({failed} failed); wrote {} and {}",
        out.detail.len(),
        dir.join("detail.csv").display(),
        dir.join("aggregate.csv").display()
    );
}

fn sweep_cmd(config: Option<PathBuf>, common: ProfileArgs, ablation: bool) -> AnyResult<()> {
    let mut spec = sweep_spec(config, &common)?;
    if ablation {
        spec = ablation_spec(&spec);
    }
    let names: Vec<&str> = spec.methods.iter().map(Method::name).collect();
    log::info!(
        "{} tau x {} psi x {} reps, methods {names:?}",
        spec.tau_values.len(),
        spec.psi_values.len(),
        spec.repetitions
    );
    fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("spec.json"), &spec)?;
    let out = run_sweep(&spec, &common.out)?;
    report(&out, &common.out);
    Ok(())
}

fn run(cli: Cli) -> AnyResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Generate { config, tau, psi, common } => generate_cmd(config, tau, psi, common),
        Command::Fit { data, method, config, h, lambda, cv, folds, score, seed, cv_table, out } => {
            fit_cmd(data, method, config, h, lambda, cv, folds, score, seed, cv_table, out)
        }
        Command::Eval { model, data, out } => eval_cmd(model, data, out),
        Command::Sweep { config, common } => sweep_cmd(config, common, false),
        Command::Ablation { config, common } => sweep_cmd(config, common, true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
