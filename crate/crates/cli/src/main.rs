use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nnsysid::dynmodel::ModelOrders;
use nnsysid::signals::{Band, NoiseSpec};
use nnsysid::{InitScale, LmConfig, ScheduleMode, TrainingMethod};
use nnsysid_cli::experiment::{self, BenchConfig, ChenConfig, GenerateMeta, ModelSpec, NoiseKind, SweepConfig};
use nnsysid_cli::formats::{self, ModelFile, TrainingMeta};
use nnsysid_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "nnsysid",
    version,
    about = "Neural network system identification with series-parallel and parallel training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate Chen benchmark training and validation data.
    Generate(GenerateArgs),
    /// Train a model on a dataset CSV.
    Train(TrainArgs),
    /// Free-run a model on a dataset and report the MSE.
    Validate(ValidateArgs),
    /// Noise sweep comparing training methods.
    Sweep(SweepArgs),
    /// Time training runs across N and N_theta grids.
    Bench(BenchArgs),
}

#[derive(Args)]
struct OrderArgs {
    #[arg(long, default_value_t = 2)]
    ny: usize,
    #[arg(long, default_value_t = 2)]
    nu: usize,
    #[arg(long, default_value_t = 1)]
    taud: usize,
}

impl OrderArgs {
    fn orders(&self) -> Result<ModelOrders> {
        Ok(ModelOrders::new(self.ny, self.nu, self.taud)?)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "data")]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    n_val: usize,
    #[arg(long, default_value_t = 5)]
    hold: usize,
    /// Equation error standard deviation.
    #[arg(long, default_value_t = 0.1)]
    sigma_v: f64,
    /// Output error standard deviation.
    #[arg(long, default_value_t = 0.5)]
    sigma_w: f64,
    /// Noise band: white, low:<wc> or high:<wc>.
    #[arg(long, default_value = "white")]
    band: Band,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV.
    data: PathBuf,
    #[arg(long, default_value = "model")]
    out: PathBuf,
    #[arg(long, default_value = "p-phi")]
    method: TrainingMethod,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    orders: OrderArgs,
    /// Hidden layer sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    hidden: Vec<usize>,
    /// Weight initialization scale: fan-in or layer-size.
    #[arg(long, default_value_t = InitScale::default())]
    init: InitScale,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SolverArgs {
    /// Damping update: fletcher or paper-literal.
    #[arg(long, default_value = "fletcher", value_parser = parse_schedule)]
    schedule: ScheduleMode,
    #[arg(long, default_value_t = experiment::EXPERIMENT_LAMBDA0)]
    lambda0: f64,
}

impl SolverArgs {
    fn config(&self, epochs: usize) -> LmConfig {
        LmConfig {
            max_epochs: epochs,
            lambda0: self.lambda0,
            schedule: self.schedule,
            ..LmConfig::default()
        }
    }
}

fn parse_schedule(s: &str) -> std::result::Result<ScheduleMode, String> {
    match s {
        "fletcher" => Ok(ScheduleMode::Fletcher),
        "paper-literal" => Ok(ScheduleMode::PaperLiteral),
        _ => Err(format!("unknown schedule `{s}` (fletcher | paper-literal)")),
    }
}

#[derive(Args)]
struct ValidateArgs {
    model: PathBuf,
    data: PathBuf,
    /// Directory for `simulation.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
    /// Equation error levels (sweeps v with w = 0), comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "sigma_w",
        required_unless_present = "sigma_w"
    )]
    sigma_v: Vec<f64>,
    /// Output error levels (sweeps w with v = 0), comma separated.
    #[arg(long, value_delimiter = ',')]
    sigma_w: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "white")]
    band: Vec<Band>,
    #[arg(long, value_delimiter = ',', default_value = "sp,p-phi")]
    method: Vec<TrainingMethod>,
    #[arg(long, default_value_t = 12)]
    realizations: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    n_val: usize,
    #[arg(long, default_value_t = 10)]
    hidden: usize,
    #[arg(long, default_value_t = InitScale::default())]
    init: InitScale,
    #[arg(long, default_value_t = experiment::EXPERIMENT_LAMBDA0)]
    lambda0: f64,
    #[command(flatten)]
    orders: OrderArgs,
    #[arg(long, default_value_t = 0.3)]
    trim: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "bench")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 61)]
    fixed_n_theta: usize,
    #[arg(long, value_delimiter = ',', default_value = "61,121,181,241,301")]
    n_theta_grid: Vec<usize>,
    #[arg(long, default_value_t = 10000)]
    fixed_n: usize,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = ChenConfig {
        n_train: a.n,
        n_val: a.n_val,
        hold: a.hold,
        equation_noise: NoiseSpec {
            sigma: a.sigma_v,
            band: a.band,
        },
        output_noise: NoiseSpec {
            sigma: a.sigma_w,
            band: a.band,
        },
    };
    let data = experiment::generate_chen(&cfg, a.seed, &[])?;
    formats::write_dataset(&a.out.join("train.csv"), &data.train)?;
    formats::write_dataset(&a.out.join("validation.csv"), &data.validation)?;
    formats::write_json(&a.out.join("metadata.json"), &GenerateMeta::new(&cfg, a.seed))?;
    println!(
        "wrote {} training and {} validation samples to {}",
        a.n,
        a.n_val,
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = formats::read_dataset(&a.data)?;
    let spec = ModelSpec {
        orders: a.orders.orders()?,
        hidden: a.hidden,
        init: a.init,
    };
    let (model, scaled) = experiment::init_model(&spec, &data, a.seed, &[])?;
    let cfg = a.solver.config(a.epochs);
    cfg.validate()?;
    let meta = |objective: f64| TrainingMeta {
        method: a.method,
        epochs: a.epochs,
        seed: a.seed,
        final_objective: Some(objective),
    };
    match nnsysid::training::train(&model, &scaled, a.method, &cfg) {
        Ok(outcome) => {
            formats::write_history(&a.out.join("history.csv"), &outcome.state.history)?;
            ModelFile::from_model(
                &outcome.model,
                outcome.initial_conditions.as_ref(),
                Some(meta(outcome.state.objective)),
            )
            .save(&a.out.join("model.json"))?;
            println!(
                "{}: {} epochs, V = {:e}, model written to {}",
                a.method,
                outcome.state.epoch,
                outcome.state.objective,
                a.out.join("model.json").display()
            );
            Ok(())
        }
        Err(abort) => {
            formats::write_history(&a.out.join("history.csv"), &abort.state.history)?;
            Err(abort.into())
        }
    }
}

fn validate(a: ValidateArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?.to_model()?;
    let data = formats::read_dataset(&a.data)?;
    let v = experiment::validate(&model, &data)?;
    if let Some(dir) = &a.out {
        let n_y = data.n_outputs();
        let rows: Vec<Vec<String>> = (0..v.simulated.nrows())
            .map(|i| {
                let k = v.start + i;
                let mut row = vec![(k + 1).to_string()];
                row.extend((0..n_y).map(|c| data.y[(k, c)].to_string()));
                row.extend((0..n_y).map(|c| v.simulated[(i, c)].to_string()));
                row
            })
            .collect();
        let mut header = vec!["k".to_string()];
        header.extend((1..=n_y).map(|c| format!("y{c}")));
        header.extend((1..=n_y).map(|c| format!("yhat{c}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        formats::write_table(&dir.join("simulation.csv"), &header, &rows)?;
    }
    println!("mse = {}", v.mse);
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (noise, sigmas) = if a.sigma_v.is_empty() {
        (NoiseKind::Output, a.sigma_w)
    } else {
        (NoiseKind::Equation, a.sigma_v)
    };
    let cfg = SweepConfig {
        noise,
        bands: a.band,
        sigmas,
        realizations: a.realizations,
        methods: a.method,
        epochs: a.epochs,
        n_train: a.n,
        n_val: a.n_val,
        hidden: a.hidden,
        init: a.init,
        lambda0: a.lambda0,
        orders: a.orders.orders()?,
        trim: a.trim,
        seed: a.seed,
        ..SweepConfig::default()
    };
    let results = experiment::run_sweep(&cfg)?;
    experiment::write_sweep(&results, &a.out)?;
    for s in &results.summaries {
        let cell = &results.cells[s.cell];
        let stats = s
            .stats
            .map(|st| {
                format!(
                    "{:.4} ± {:.4} (median {:.4})",
                    st.trimmed_mean, st.trimmed_std, st.median
                )
            })
            .unwrap_or_else(|| "n/a".into());
        println!(
            "{:<8} {:<10} sigma={:<6} {:<8} {stats}  [{} ok, {} missing]",
            cell.noise, cell.band, cell.sigma, s.method, s.n_ok, s.n_missing
        );
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        n_grid: a.n_grid,
        fixed_n_theta: a.fixed_n_theta,
        n_theta_grid: a.n_theta_grid,
        fixed_n: a.fixed_n,
        repetitions: a.repetitions,
        epochs: a.epochs,
        seed: a.seed,
        ..BenchConfig::default()
    };
    let results = experiment::run_bench(&cfg)?;
    experiment::write_bench(&results, &a.out)?;
    for f in &results.fits {
        println!(
            "{:<8} slope_N = {}  slope_N_theta = {}",
            f.method,
            f.slope_n.map_or("n/a".into(), |s| format!("{s:.3}")),
            f.slope_n_theta.map_or("n/a".into(), |s| format!("{s:.3}"))
        );
    }
    if let Some(r) = results.p_sp_ratio_mean {
        println!(
            "P/SP wall-time ratio: mean {r:.3}, max {:.3}",
            results.p_sp_ratio_max.unwrap_or(r)
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Validate(a) => validate(a),
        Command::Sweep(a) => sweep(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", report(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report(e: &CliError) -> String {
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    msg
}
