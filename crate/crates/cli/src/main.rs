use std::fs::File;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inherent_dae::experiment::{
    default_combinations, default_mode, default_t_end, run_experiment, Combination,
};
use inherent_dae::inherent::QKind;
use inherent_dae::integrate::{IntegratorSpec, Method, StepMode, Version};
use inherent_dae::problems::{list_problems, ProblemKind, ProblemSpec};
use inherent_dae::verify::run_checks;

#[derive(Parser)]
#[command(name = "inherent-dae", version, about = "Integrate DAEs through their inherent ODE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run method/version combinations on a built-in problem.
    Run(RunArgs),
    /// Print the problem catalog.
    ListProblems,
    /// Run the built-in property checks.
    Verify {
        /// Random cases per randomized check.
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Seed of the random generator.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    problem: String,
    /// Methods; repeat or separate by commas. Without it the problem's
    /// default table is run.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Versions, zipped with the methods (a single value of any list is
    /// broadcast).
    #[arg(long, value_delimiter = ',')]
    version: Vec<String>,
    /// Stage counts, zipped with the methods (a single value is broadcast).
    #[arg(long, value_delimiter = ',')]
    stages: Vec<usize>,
    /// Fixed number of equidistant steps.
    #[arg(long, conflicts_with = "tol")]
    steps: Option<usize>,
    /// Tolerance of the step size control.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Problem parameter override, e.g. `delta=-1e4`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<String>,
    /// Write 0 for wall times so fixed-grid reports are reproducible.
    #[arg(long)]
    no_timing: bool,
}

fn broadcast<T: Clone>(name: &str, v: Vec<T>, n: usize) -> Result<Vec<Option<T>>, String> {
    match v.len() {
        0 => Ok(vec![None; n]),
        1 => Ok(vec![Some(v[0].clone()); n]),
        k if k == n => Ok(v.into_iter().map(Some).collect()),
        k => Err(format!("{k} values for --{name} but {n} combinations")),
    }
}

fn combinations(args: &RunArgs, kind: ProblemKind) -> Result<Vec<Combination>, String> {
    if args.method.is_empty() {
        if !args.version.is_empty() || !args.stages.is_empty() {
            return Err("--version and --stages need --method".into());
        }
        return Ok(default_combinations(kind));
    }
    let n = args.method.len().max(args.version.len()).max(args.stages.len());
    let methods = broadcast("method", args.method.clone(), n)?;
    let versions = broadcast("version", args.version.clone(), n)?;
    let stages = broadcast("stages", args.stages.clone(), n)?;
    let mut out = Vec::with_capacity(n);
    for ((m, v), s) in methods.into_iter().zip(versions).zip(stages) {
        let method: Method = m.expect("methods are present").parse().map_err(|e| format!("{e}"))?;
        let version = match v {
            Some(v) => v.parse::<Version>().map_err(|e| format!("{e}"))?,
            None if method == Method::GaussLobatto => Version::Direct,
            None => Version::Ode(QKind::Inherent),
        };
        out.push(Combination::new(
            method,
            version,
            s.unwrap_or_else(|| method.default_stages()),
        ));
    }
    Ok(out)
}

fn run(args: RunArgs) -> Result<bool, String> {
    let kind: ProblemKind = args.problem.parse().map_err(|e| format!("{e}"))?;
    let mut problem = ProblemSpec::new(kind);
    for p in &args.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| format!("parameter '{p}' is not KEY=VALUE"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("parameter '{p}' has no numeric value"))?;
        problem.set(k.trim(), v).map_err(|e| format!("{e}"))?;
    }
    let combos = combinations(&args, kind)?;
    let mode = match (args.steps, args.tol) {
        (Some(n), _) => StepMode::Fixed(n),
        (None, Some(tol)) => StepMode::Adaptive(tol),
        (None, None) => default_mode(kind),
    };
    let t_end = args.t_end.unwrap_or_else(|| default_t_end(kind));
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(format!("invalid end time {t_end}"));
    }
    for c in &combos {
        IntegratorSpec::new(c.method, c.stages, mode, c.version).map_err(|e| format!("{e}"))?;
    }
    let mut report = run_experiment(&problem, &combos, mode, t_end);
    if args.no_timing {
        for r in &mut report.rows {
            r.wall_ms = 0.0;
        }
    }
    print!("{}", report.to_text());
    if let Some(path) = &args.csv {
        let file = File::create(path).map_err(|e| format!("cannot create {path}: {e}"))?;
        report.write_csv(file).map_err(|e| format!("{e}"))?;
    }
    Ok(!report.any_failed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListProblems => {
            println!(
                "{:<9} {:>2} {:>3} {:>2} {:>2}  {:<13} {:<26} description",
                "name", "n", "mu", "a", "d", "symmetry", "parameters"
            );
            for e in list_problems() {
                let params = e
                    .params
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                println!(
                    "{:<9} {:>2} {:>3} {:>2} {:>2}  {:<13} {:<26} {}",
                    e.name, e.n, e.mu, e.a, e.d, e.symmetry, params, e.description
                );
            }
            ExitCode::SUCCESS
        }
        Command::Verify { cases, seed } => {
            let results = run_checks(cases, seed);
            let mut ok = true;
            for r in &results {
                println!(
                    "{} {:<40} {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                ok &= r.passed;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Run(args) => match run(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        },
    }
}
