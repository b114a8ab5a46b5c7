//! Command-line front end: evaluate identities, cross-check them by Monte
//! Carlo, run the quadrature check suite, sweep parameters to CSV, or inspect
//! a model's root system.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use levy_exit::identities::{self, ExitQuery};
use levy_exit::model::LevyModel;
use levy_exit::scale::ScaleContext;
use levy_exit::sim::{self, SimConfig};
use levy_exit::verify::{self, CheckReport};
use levy_exit::{Error, Result};

#[derive(Parser)]
#[command(name = "exit", version, about = "Exit identities for spectrally-negative processes under Poissonian observation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate one identity from the closed-form scale functions.
    Eval(EvalArgs),
    /// Evaluate an identity and cross-check it against Monte Carlo.
    Verify(VerifyArgs),
    /// Run the quadrature-based identity check suite, reporting CSV rows.
    Check(CheckArgs),
    /// Sweep one parameter over a range and write the values as CSV.
    Table(TableArgs),
    /// Print drift, roots, residues and Phi_q for a model.
    Info(InfoArgs),
}

fn parse_extended(s: &str) -> std::result::Result<f64, String> {
    if s == "inf" {
        Ok(f64::INFINITY)
    } else {
        s.parse::<f64>().map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Model description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Killing (discount) rate.
    #[arg(long, default_value_t = 0.0)]
    q: f64,
}

impl ModelArgs {
    fn load(&self) -> Result<LevyModel> {
        let text = fs::read_to_string(&self.model)
            .map_err(|e| Error::InvalidModel(format!("{}: {e}", self.model.display())))?;
        LevyModel::from_json(&text)
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    identity: String,
    /// Starting level.
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    /// Upper barrier; "inf" selects the unbounded-above formulas.
    #[arg(long, default_value = "inf", value_parser = parse_extended)]
    a: f64,
    /// Deficit/overshoot transform argument.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Regulator transform argument (reflected identities).
    #[arg(long, default_value_t = 0.0)]
    vartheta: f64,
    /// Regulator passage level.
    #[arg(long, default_value_t = 0.0)]
    y: f64,
    /// Observation rate; "inf" selects continuous observation.
    #[arg(long, default_value = "inf", value_parser = parse_extended)]
    lambda: f64,
}

impl QueryArgs {
    fn query(&self) -> ExitQuery {
        ExitQuery {
            x: self.x,
            a: self.a,
            theta: self.theta,
            vartheta: self.vartheta,
            y: self.y,
            lambda: self.lambda,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    query: QueryArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Simulation horizon override.
    #[arg(long)]
    horizon: Option<f64>,
    /// Euler substep for models with a Brownian part.
    #[arg(long, default_value_t = 1e-3)]
    euler_step: f64,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Write the CSV report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    query: QueryArgs,
    /// Parameter to sweep: x, a, theta, vartheta, y, lambda or q.
    #[arg(long)]
    sweep: String,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long, default_value_t = 21)]
    steps: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InfoArgs {
    #[command(flatten)]
    model: ModelArgs,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Numeric(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Eval(args) => {
            let model = args.model.load()?;
            let ctx = ScaleContext::new(model, args.model.q)?;
            let v = identities::evaluate(&ctx, &args.query.identity, &args.query.query())?;
            println!("{v:.12}");
            Ok(0)
        }
        Cmd::Verify(args) => {
            let model = args.model.load()?;
            let q = args.model.q;
            let ctx = ScaleContext::new(model.clone(), q)?;
            let query = args.query.query();
            let target = sim::mc_target(&ctx, &args.query.identity, &query)?;
            let cfg = SimConfig {
                n_paths: args.paths,
                seed: args.seed,
                horizon: args.horizon,
                euler_step: args.euler_step,
            };
            let est = sim::estimate(&model, q, &args.query.identity, &query, &cfg)?;
            let z = sim::z_score(&est, target);
            println!("identity  {}", args.query.identity);
            println!("formula   {target:.12}");
            println!("mc_mean   {:.12} +/- {:.12}", est.mean, est.std_error);
            println!("paths     {}", est.n_paths);
            if est.truncated_fraction > 0.0 {
                println!("truncated {:.3e}", est.truncated_fraction);
            }
            if est.bias_warning {
                println!("warning   horizon truncation may bias this estimate");
            }
            println!("z         {z:.3}");
            if z.abs() <= 4.0 {
                println!("PASS");
                Ok(0)
            } else {
                println!("FAIL");
                Ok(3)
            }
        }
        Cmd::Check(args) => {
            let model = args.model.load()?;
            let reports = verify::run_suite(&model)?;
            let mut text = String::from(CheckReport::CSV_HEADER);
            text.push('\n');
            for r in &reports {
                text.push_str(&r.csv_row());
                text.push('\n');
            }
            let failed = reports.iter().filter(|r| !r.pass).count();
            write_out(args.out.as_deref(), &text)?;
            eprintln!("{}/{} checks passed", reports.len() - failed, reports.len());
            Ok(if failed == 0 { 0 } else { 3 })
        }
        Cmd::Table(args) => {
            let model = args.model.load()?;
            if args.steps < 2 {
                return Err(Error::Domain("need at least 2 sweep steps".into()));
            }
            let base = args.query.query();
            let mut text = format!(
                "# identity={} q={} x={} a={} theta={} vartheta={} y={} lambda={}\n",
                args.query.identity,
                args.model.q,
                base.x,
                base.a,
                base.theta,
                base.vartheta,
                base.y,
                base.lambda
            );
            text.push_str(&format!("{},value\n", args.sweep));
            let mut ctx = if args.sweep != "q" {
                Some(ScaleContext::new(model.clone(), args.model.q)?)
            } else {
                None
            };
            for i in 0..args.steps {
                let t = i as f64 / (args.steps - 1) as f64;
                let p = args.from + t * (args.to - args.from);
                let mut query = base;
                let mut q = args.model.q;
                match args.sweep.as_str() {
                    "x" => query.x = p,
                    "a" => query.a = p,
                    "theta" => query.theta = p,
                    "vartheta" => query.vartheta = p,
                    "y" => query.y = p,
                    "lambda" => query.lambda = p,
                    "q" => q = p,
                    other => {
                        return Err(Error::Domain(format!("unknown sweep parameter {other:?}")))
                    }
                }
                if ctx.is_none() {
                    ctx = Some(ScaleContext::new(model.clone(), q)?);
                }
                let v = identities::evaluate(ctx.as_ref().unwrap(), &args.query.identity, &query)?;
                if args.sweep == "q" {
                    ctx = None;
                }
                text.push_str(&format!("{p},{v:.12e}\n"));
            }
            write_out(args.out.as_deref(), &text)?;
            Ok(0)
        }
        Cmd::Info(args) => {
            let model = args.model.load()?;
            let q = args.model.q;
            let rs = model.roots(q)?;
            println!("psi'(0)   {:.12}", model.mean_drift());
            println!("q         {q}");
            println!("Phi_q     {:.12}", rs.phi);
            println!("W_q(0)    {:.12}", rs.w_at_zero());
            for (z, r) in rs.roots.iter().zip(&rs.residues) {
                println!("root      {z:.12}  residue {r:.12}");
            }
            Ok(0)
        }
    }
}

fn write_out(path: Option<&std::path::Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| Error::Domain(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::Domain(e.to_string()))
        }
    }
}
