use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use cc_mimo::dofopt::dof_max;
use cc_mimo::harness::{
    dof_sweep, emit_results, format_results, run_experiment, validate_invariants, EvalMode,
    ExperimentFile, ExperimentSpec, OutputFormat, Scheme, DEFAULT_REALIZATIONS,
};
use cc_mimo::model::NetworkConfig;
use cc_mimo::scheduling::{base_schedule, extended_schedule, feasible_betas};
use cc_mimo::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ccmimo",
    version,
    about = "Cache-aided MIMO delivery: DoF, schedules and Monte Carlo rate sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal (Ω, β) and DoF, or a DoF table over several antenna counts.
    Dof {
        #[arg(long)]
        k: usize,
        /// Transmit antennas; a comma-separated list prints a sweep table.
        #[arg(long, value_delimiter = ',', required = true)]
        l: Vec<usize>,
        #[arg(long)]
        g: usize,
        #[arg(long)]
        t: usize,
    },
    /// Multicast schedule for one target set of users 1..=Ω.
    Schedule {
        #[arg(long)]
        omega: usize,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        g: usize,
        /// Streams per user; defaults to the largest feasible value.
        #[arg(long)]
        beta: Option<usize>,
    },
    /// Monte Carlo symmetric-rate sweep over an SNR grid.
    Sweep(SweepArgs),
    /// Runs the built-in invariant checks.
    Validate,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment file; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    g: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    n0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Users per transmission, or `auto`.
    #[arg(long, value_parser = parse_auto)]
    omega: Option<Auto>,
    /// Streams per user, or `auto`.
    #[arg(long, value_parser = parse_auto)]
    beta: Option<Auto>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    #[arg(long)]
    eval_mode: Option<EvalMode>,
}

#[derive(Clone, Copy)]
enum Auto {
    Auto,
    Value(usize),
}

impl Auto {
    fn value(self) -> Option<usize> {
        match self {
            Auto::Auto => None,
            Auto::Value(v) => Some(v),
        }
    }
}

fn parse_auto(s: &str) -> Result<Auto, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Auto::Auto);
    }
    s.parse()
        .map(Auto::Value)
        .map_err(|e| format!("{s:?}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = Vec::new();
    let result = run(cli.command, &mut out);
    // a closed pipe (e.g. `| head`) is not an error
    let _ = std::io::stdout().write_all(&out);
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::FailureBudgetExceeded { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command, out: &mut Vec<u8>) -> Result<ExitCode, Error> {
    match command {
        Command::Dof { k, l, g, t } => {
            if let [l] = l[..] {
                let sol = dof_max(&NetworkConfig::with_gain(k, l, g, t, 1.0, 1.0)?)?;
                writeln!(
                    out,
                    "omega={} beta={} dof={}",
                    sol.omega_star, sol.beta_star, sol.dof
                )?;
                writeln!(out, "omega,beta_max,dof")?;
                for p in &sol.frontier {
                    writeln!(out, "{},{},{}", p.omega, p.beta_max, p.dof)?;
                }
            } else {
                writeln!(out, "l,dof,omega,beta,reference")?;
                for row in dof_sweep(&l, g, t, k)? {
                    let reference = row.reference.map_or("n/a".to_string(), |r| r.to_string());
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        row.l, row.dof, row.omega, row.beta, reference
                    )?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Schedule {
            omega,
            t,
            l,
            g,
            beta,
        } => {
            let options = feasible_betas(omega, t, l, g)?;
            let chosen = match beta {
                Some(b) => options.iter().find(|f| f.beta == b).copied(),
                None => options.last().copied(),
            };
            let Some(choice) = chosen else {
                let list: Vec<String> = options.iter().map(|f| f.beta.to_string()).collect();
                return Err(Error::InvalidExperiment(format!(
                    "no feasible beta (feasible: [{}])",
                    list.join(",")
                )));
            };
            let users: Vec<usize> = (1..=omega).collect();
            let base = base_schedule(&users, t)?;
            let ext = extended_schedule(&base, choice.eta, choice.delta)?;
            writeln!(
                out,
                "beta0={} b0={} s0={} beta={} eta={} delta={}",
                base.params.beta0,
                base.params.b0,
                base.params.s0,
                choice.beta,
                choice.eta,
                choice.delta
            )?;
            writeln!(out, "# base")?;
            write!(out, "{}", base.to_text())?;
            writeln!(out, "# extended")?;
            write!(out, "{}", ext.to_text())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(args) => {
            let spec = sweep_spec(args.config.as_ref(), &args)?;
            let rows = run_experiment(&spec)?;
            match &args.out {
                Some(path) => emit_results(&rows, path, args.format)?,
                None => out.extend_from_slice(format_results(&rows, args.format)?.as_bytes()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate => {
            let outcomes = validate_invariants();
            for o in &outcomes {
                writeln!(
                    out,
                    "{} {}: {}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.detail
                )?;
            }
            Ok(if outcomes.iter().all(|o| o.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn sweep_spec(config: Option<&PathBuf>, args: &SweepArgs) -> Result<ExperimentSpec, Error> {
    let mut spec = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let file: ExperimentFile =
                toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            file.into_spec()?
        }
        None => {
            let missing = |name: &str| {
                Error::InvalidExperiment(format!("--{name} is required without --config"))
            };
            let k = args.k.ok_or_else(|| missing("k"))?;
            let l = args.l.ok_or_else(|| missing("l"))?;
            let g = args.g.ok_or_else(|| missing("g"))?;
            let t = args.t.ok_or_else(|| missing("t"))?;
            let n0 = args.n0.unwrap_or(1.0);
            ExperimentSpec {
                config: NetworkConfig::with_gain(k, l, g, t, n0, n0)?,
                scheme: args.scheme.ok_or_else(|| missing("scheme"))?,
                omega: None,
                beta: None,
                snr_grid_db: args.snr.clone().ok_or_else(|| missing("snr"))?,
                realizations: DEFAULT_REALIZATIONS,
                seed: 0,
                eval_mode: EvalMode::default(),
            }
        }
    };
    if config.is_some() {
        let c = spec.config.clone();
        let n0 = args.n0.unwrap_or(c.n0);
        spec.config = NetworkConfig::with_gain(
            args.k.unwrap_or(c.k),
            args.l.unwrap_or(c.l),
            args.g.unwrap_or(c.g),
            args.t.unwrap_or(c.t),
            n0,
            n0,
        )?;
        if let Some(s) = args.scheme {
            spec.scheme = s;
        }
        if let Some(snr) = &args.snr {
            spec.snr_grid_db = snr.clone();
        }
    }
    if let Some(o) = args.omega {
        spec.omega = o.value();
    }
    if let Some(b) = args.beta {
        spec.beta = b.value();
    }
    if let Some(r) = args.realizations {
        spec.realizations = r;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(m) = args.eval_mode {
        spec.eval_mode = m;
    }
    Ok(spec)
}
