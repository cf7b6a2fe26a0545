//! Command-line front end: scenario analysis, rolling integration,
//! transport along curves, and the built-in verification suite.
//!
//! Exit codes: 0 success; 1 verification or residual failure; 2 malformed
//! scenario/control/manifold input; 3 rank-unstable flag computation;
//! 4 chart exit during integration (partial CSV flushed with an error
//! marker row).

use clap::{Parser, Subcommand};
use rollkit_core::error::CoreError;
use rollkit_core::flag::{controllability_report, FlagOptions};
use rollkit_core::io;
use rollkit_core::linalg::RankPolicy;
use rollkit_core::rolling::{integrate_rolling_partial, verify_rolling_conditions, Stepper};
use rollkit_core::scenario::{control_from_str, manifold_from_str, scenario_from_str};
use rollkit_core::verify::{run_all, VerifyOptions};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rollkit", version, about = "Rolling manifolds without twisting or slipping")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the distribution flag of a scenario and report ranks, step
    /// and the controllability verdict as JSON.
    Analyze {
        /// Scenario name, JSON file path, or inline JSON.
        #[arg(long)]
        scenario: String,
        /// Finite-difference step for the bracket cross-check.
        #[arg(long)]
        fd_step: Option<f64>,
        /// Relative singular-value threshold for rank decisions.
        #[arg(long)]
        rank_tol: Option<f64>,
    },
    /// Integrate a rolling trajectory; writes CSV and prints the condition
    /// residual report as JSON.
    Roll {
        #[arg(long)]
        scenario: String,
        /// Control name, JSON file path, or inline JSON.
        #[arg(long)]
        control: String,
        /// Duration.
        #[arg(long = "T", alias = "t", default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Stepping scheme: rk4 or exp.
        #[arg(long, default_value = "rk4")]
        stepper: String,
        /// Also carry the normal isometry (started at the identity); both
        /// charts must share an ambient codimension.
        #[arg(long)]
        extended: bool,
    },
    /// Transport tangent (or normal) coefficients along a curve CSV.
    Transport {
        /// Manifold name (`sphere:2`, `se3`, ...), JSON file, or inline JSON.
        #[arg(long)]
        manifold: String,
        /// Curve CSV path (columns t, x1..xm [, u1..un]).
        #[arg(long)]
        curve: PathBuf,
        /// Initial coefficients, comma separated.
        #[arg(long)]
        v0: String,
        /// Transport in the normal bundle instead of the tangent bundle.
        #[arg(long)]
        normal: bool,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in verification suite and print the criterion table.
    Verify {
        /// Substring filter on criterion id or name.
        #[arg(long)]
        filter: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    });
}

fn exit_code_for(e: &CoreError) -> i32 {
    match e {
        CoreError::BadInput(_) | CoreError::Dimension(_) | CoreError::NonFinite(_) => 2,
        CoreError::RankUnstable { .. } => 3,
        CoreError::DomainExit { .. } => 4,
        _ => 1,
    }
}

/// Resolves an argument that may be a file path, a name, or inline JSON.
fn read_arg(text: &str) -> String {
    let path = std::path::Path::new(text);
    if !text.trim_start().starts_with('{') && path.is_file() {
        std::fs::read_to_string(path).unwrap_or_else(|_| text.to_string())
    } else {
        text.to_string()
    }
}

fn dispatch(cli: Cli) -> Result<i32, CoreError> {
    match cli.cmd {
        Cmd::Analyze {
            scenario,
            fd_step,
            rank_tol,
        } => {
            let sc = scenario_from_str(&read_arg(&scenario))?;
            let opts = FlagOptions {
                h: fd_step.unwrap_or(1e-5),
                h_alt: fd_step.map(|h| h * 10.0).unwrap_or(1e-4),
                rank: RankPolicy {
                    tau: rank_tol.unwrap_or(1e-8),
                },
                fd_cross_check: true,
            };
            let report = controllability_report(&sc.pair, &sc.start, 6, opts)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(0)
        }
        Cmd::Roll {
            scenario,
            control,
            t,
            dt,
            out,
            stepper,
            extended,
        } => {
            let sc = scenario_from_str(&read_arg(&scenario))?;
            let ctrl = control_from_str(&read_arg(&control), sc.pair.n())?;
            let stepper = match stepper.as_str() {
                "rk4" => Stepper::Rk4,
                "exp" => Stepper::ExactExp,
                other => {
                    return Err(CoreError::BadInput(format!(
                        "unknown stepper `{other}` (rk4, exp)"
                    )))
                }
            };
            let b0 = if extended {
                Some(rollkit_core::linalg::Matrix::identity(sc.pair.codim()?))
            } else {
                None
            };
            let (traj, err) =
                integrate_rolling_partial(&sc.pair, &sc.start, b0.as_ref(), &ctrl, t, dt, stepper)?;
            let csv = io::trajectory_to_csv(&sc.pair, &traj, err.as_ref());
            std::fs::write(&out, csv)
                .map_err(|e| CoreError::BadInput(format!("cannot write {}: {e}", out.display())))?;
            if let Some(e) = err {
                eprintln!("error: {e}");
                return Ok(exit_code_for(&e));
            }
            let report = verify_rolling_conditions(&sc.pair, &traj)?;
            let json = io::ResidualJson::from(&report);
            println!(
                "{}",
                serde_json::to_string_pretty(&json).expect("report serializes")
            );
            let ok = report.noslip <= 1e-6
                && report.notwist_tangential <= 1e-6
                && report.notwist_normal.is_none_or(|v| v <= 1e-6)
                && report.orientation;
            Ok(if ok { 0 } else { 1 })
        }
        Cmd::Transport {
            manifold,
            curve,
            v0,
            normal,
            out,
        } => {
            let chart = manifold_from_str(&read_arg(&manifold))?;
            let text = std::fs::read_to_string(&curve)
                .map_err(|e| CoreError::BadInput(format!("cannot read {}: {e}", curve.display())))?;
            let curve = io::curve_from_csv(&text)?;
            let v0: Vec<f64> = v0
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| CoreError::BadInput(format!("bad coefficient `{s}`")))
                })
                .collect::<Result<_, _>>()?;
            let path = if normal {
                rollkit_core::connection::normal_parallel_transport(&chart, &curve, &v0)?
            } else {
                rollkit_core::connection::parallel_transport(&chart, &curve, &v0)?
            };
            let csv = io::coefficients_to_csv(&curve.t, &path);
            match out {
                Some(p) => std::fs::write(&p, csv)
                    .map_err(|e| CoreError::BadInput(format!("cannot write {}: {e}", p.display())))?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Cmd::Verify { filter } => {
            let seed = std::env::var("ROLLKIT_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            let results = run_all(&VerifyOptions {
                filter,
                seed,
                corrupt_sphere_gamma: false,
            })?;
            if results.is_empty() {
                return Err(CoreError::BadInput("filter matched no criteria".into()));
            }
            let mut all_pass = true;
            for r in &results {
                println!(
                    "{} {:<32} {} ({:.2}s)",
                    r.id,
                    r.name,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.seconds
                );
                for line in &r.lines {
                    println!(
                        "    {:<70} expected {:<12} observed {:<12} tol {:<10} {}",
                        line.what,
                        line.expected,
                        line.observed,
                        line.tolerance,
                        if line.pass { "pass" } else { "FAIL" }
                    );
                }
                all_pass &= r.pass;
            }
            Ok(if all_pass { 0 } else { 1 })
        }
    }
}
