use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use infection_caps::classifier::render_report;
use infection_caps::oracle::{compare, grid_membership_with};
use infection_caps::policy::{simulate, Control};
use infection_caps::scenario::ScenarioFile;
use infection_caps::{Analysis, Error, SetKind, State};

#[derive(Parser)]
#[command(
    name = "infection-caps",
    version,
    about = "Safe sets and fumigation policy for capped vector-borne outbreaks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the classification report.
    Classify {
        scenario: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Trace one barrier curve and write it as CSV.
    Barrier {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        set: SetArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write both regions as JSON and CSV, plus the efficiency ratio.
    Region {
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the brute-force grid oracle.
    Oracle {
        scenario: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the barriers and compare the regions against the grid oracle.
    Verify {
        scenario: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 0.99)]
        threshold: f64,
    },
    /// Simulate under a constant input or the closed-loop policy.
    Simulate {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_state)]
        x0: State,
        /// `const:<u>` or `policy`.
        #[arg(long)]
        u: String,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recommend an input for one state.
    Advise {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_state)]
        x: State,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Serve the HTTP API.
    Serve {
        scenario: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SetArg {
    Admissible,
    Mrpi,
}

impl From<SetArg> for SetKind {
    fn from(s: SetArg) -> Self {
        match s {
            SetArg::Admissible => SetKind::Admissible,
            SetArg::Mrpi => SetKind::Mrpi,
        }
    }
}

enum Failure {
    Invalid(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Verification(_) | Error::HorizonExceeded { .. } => Failure::Verification(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn parse_state(s: &str) -> Result<State, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts[..] else {
        return Err(format!("expected two comma-separated numbers, got {s:?}"));
    };
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let x = State::new(num(a)?, num(b)?);
    if !x.is_finite() || !x.in_unit_square() {
        return Err(format!("{x} is outside the unit square"));
    }
    Ok(x)
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Classify {
            scenario,
            json: as_json,
        } => {
            let s = ScenarioFile::load(&scenario)?;
            let cls = infection_caps::classify(&s.model, &s.caps);
            if as_json {
                print!("{}", json(&cls));
            } else {
                print!("{}", render_report(&s.model, &s.caps, &cls));
            }
            Ok(())
        }
        Command::Barrier { scenario, set, out } => {
            let s = ScenarioFile::load(&scenario)?;
            let kind = SetKind::from(set);
            let cls = infection_caps::classify(&s.model, &s.caps);
            if !cls.has_barrier(kind) {
                return Err(Failure::Invalid(format!(
                    "{} case: no {kind} barrier to trace",
                    cls.case
                )));
            }
            let curve =
                infection_caps::barrier::compute_barrier_with(&s.model, &s.caps, kind, &s.settings.barrier_options())?
                    .ok_or_else(|| Failure::Verification(format!("the {kind} barrier leaves the box immediately")))?;
            emit(out.as_deref(), &curve.to_csv())
        }
        Command::Region { scenario, out_dir } => {
            let s = ScenarioFile::load(&scenario)?;
            let an = Analysis::from_scenario(&s)?;
            fs::create_dir_all(&out_dir)?;
            for r in [&an.regions.admissible, &an.regions.mrpi] {
                fs::write(out_dir.join(format!("{}.json", r.kind)), json(r))?;
                fs::write(out_dir.join(format!("{}.csv", r.kind)), r.to_csv())?;
            }
            fs::write(out_dir.join("regions.json"), json(&an.regions))?;
            println!("case: {}", an.classification.case);
            println!(
                "efficiency_ratio: {}",
                serde_json::to_string(&an.regions.efficiency_ratio).expect("serializable")
            );
            Ok(())
        }
        Command::Oracle { scenario, grid, out } => {
            let s = ScenarioFile::load(&scenario)?;
            let n = grid.unwrap_or(s.settings.grid);
            let v = grid_membership_with(&s.model, &s.caps, n, n, s.settings.horizon, &s.settings.integrator())?;
            emit(out.as_deref(), &v.to_csv())
        }
        Command::Verify {
            scenario,
            grid,
            threshold,
        } => verify(&scenario, grid, threshold),
        Command::Simulate {
            scenario,
            x0,
            u,
            horizon,
            eps,
            out,
        } => {
            let s = ScenarioFile::load(&scenario)?;
            let mut opts = s.settings.sim_options();
            if let Some(e) = eps {
                opts.eps = e;
            }
            let horizon = horizon.unwrap_or(s.settings.horizon);
            let analysis;
            let control = match u.as_str() {
                "policy" => {
                    analysis = Analysis::from_scenario(&s)?;
                    Control::ClosedLoop(analysis.context())
                }
                other => {
                    let v = other
                        .strip_prefix("const:")
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| {
                            Failure::Invalid(format!("--u must be const:<value> or policy, got {other:?}"))
                        })?;
                    if !(s.model.u_min..=s.model.u_max).contains(&v) {
                        return Err(Failure::Invalid(format!(
                            "u = {v} is outside [{}, {}]",
                            s.model.u_min, s.model.u_max
                        )));
                    }
                    Control::Constant(v)
                }
            };
            let tr = simulate(&s.model, &s.caps, x0, &control, horizon, &opts)?;
            if let Some(v) = tr.violation {
                eprintln!("cap {} violated at t = {} ({}, {})", v.face, v.t, v.x1, v.x2);
            }
            emit(out.as_deref(), &tr.to_csv())
        }
        Command::Advise { scenario, x, eps } => {
            let s = ScenarioFile::load(&scenario)?;
            let an = Analysis::from_scenario(&s)?;
            let advice = an.recommend(x, eps.unwrap_or(s.settings.eps))?;
            print!("{}", json(&advice));
            Ok(())
        }
        Command::Serve { scenario, port, host } => {
            let s = ScenarioFile::load(&scenario)?;
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            rt.block_on(infection_caps_service::serve(s, addr))?;
            Ok(())
        }
    }
}

fn verify(scenario: &Path, grid: Option<usize>, threshold: f64) -> Outcome {
    let s = ScenarioFile::load(scenario)?;
    let an = Analysis::from_scenario(&s)?;
    println!("case: {}", an.classification.case);
    let mut failures = Vec::new();
    for (curve, report) in an.curves().zip(an.verification()?) {
        let status = if report.passed() { "ok" } else { "FAILED" };
        println!(
            "{} barrier: {status} ({} samples, hamiltonian {:.2e}, graze distance {:.2e})",
            curve.set_kind,
            curve.samples.len(),
            report.hamiltonian_max,
            report.graze_distance
        );
        failures.extend(
            report
                .failures
                .iter()
                .map(|f| format!("{} barrier: {f}", curve.set_kind)),
        );
    }
    let n = grid.unwrap_or(s.settings.grid);
    let verdict = grid_membership_with(&s.model, &s.caps, n, n, s.settings.horizon, &s.settings.integrator())?;
    let cmp = compare(&verdict, &an.regions, s.settings.band)?;
    print!("{}", cmp.summary());
    if !cmp.passed(threshold) {
        failures.push(format!("oracle agreement below {threshold}"));
    }
    if failures.is_empty() {
        println!("verify: pass");
        Ok(())
    } else {
        Err(Failure::Verification(failures.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(2)
        }
    }
}
