//! Command-line laboratory for the Bernoulli-Laplace urn chain: exact kernel
//! dumps, mixing and cutoff scans, coupling experiments, and the
//! verification suites, all as reproducible batch jobs emitting CSV/JSON.

use clap::{Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use urnmix::chain::{build_kernel, ChainParams};
use urnmix::couplings::{
    four_phase_batch, independent_step, monotone_step, CoupledPair, DecomposedState,
};
use urnmix::io::{self, Metadata};
use urnmix::mixing::{self, StartPolicy};
use urnmix::rng::par_collect;
use urnmix::verification::{
    any_failed, default_h_grid, default_mgf_grid, default_stochastic_grid, mgf_constant_probe,
    run_exact_suite, run_stochastic_suite, CheckReport,
};
use urnmix::Error;

#[derive(Parser)]
#[command(
    name = "urnmix",
    version,
    about = "Exact analysis and simulation laboratory for the (n, k) Bernoulli-Laplace urn chain"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory for default file names (overrides $URNMIX_OUT_DIR).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    Extremes,
    #[value(name = "all-states")]
    AllStates,
}

impl From<PolicyArg> for StartPolicy {
    fn from(p: PolicyArg) -> StartPolicy {
        match p {
            PolicyArg::Extremes => StartPolicy::Extremes,
            PolicyArg::AllStates => StartPolicy::AllStates,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CoupleMode {
    Monotone,
    Independent,
    Decomposed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    Exact,
    Stochastic,
    Mgf,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Write the exact banded kernel as `i,j,p` CSV (17 significant digits).
    KernelDump {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact d(t) profile up to the mixing time t_mix(eps).
    Mix {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = PolicyArg::Extremes)]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mixing-time ladder against the cutoff time scale.
    CutoffScan {
        #[arg(long)]
        k: u32,
        /// Comma-separated urn sizes, e.g. 250,500,1000,2000,4000.
        #[arg(long, value_delimiter = ',')]
        n_ladder: Vec<u32>,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated coupled-pair gap trajectories.
    Couple {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        x0: u32,
        #[arg(long)]
        y0: u32,
        #[arg(long, value_enum, default_value_t = CoupleMode::Monotone)]
        mode: CoupleMode,
        #[arg(long, default_value_t = 100)]
        reps: u64,
        /// Steps per replica (micro steps in decomposed mode).
        #[arg(long, default_value_t = 200)]
        t_max: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated four-phase pipeline runs.
    FourPhase {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 0)]
        x0: u32,
        #[arg(long, default_value_t = 4.0)]
        gamma1: f64,
        #[arg(long, default_value_t = 1000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite; exit status 1 if any check fails.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replicas for the heaviest stochastic checks.
        #[arg(long, default_value_t = 1_000_000)]
        reps: u64,
        /// Largest urn size of the exact sweep.
        #[arg(long, default_value_t = 60)]
        n_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: jobs: must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: jobs: {e}");
            return ExitCode::from(2);
        }
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("URNMIX_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    match run(cli, &out_dir) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn open_out(
    out: Option<PathBuf>,
    out_dir: &std::path::Path,
    default_name: &str,
) -> urnmix::Result<Box<dyn Write>> {
    let path = out.unwrap_or_else(|| out_dir.join(default_name));
    if path.as_os_str() == "-" {
        return Ok(Box::new(std::io::stdout().lock()));
    }
    let file = File::create(&path)?;
    Ok(Box::new(BufWriter::new(file)))
}

fn rows_to_json<W: Write>(w: &mut W, rows: &[serde_json::Value]) -> urnmix::Result<()> {
    let text = serde_json::to_string_pretty(rows).expect("rows serialize");
    w.write_all(text.as_bytes())?;
    writeln!(w)?;
    Ok(())
}

fn run(cli: Cli, out_dir: &std::path::Path) -> urnmix::Result<ExitCode> {
    match cli.command {
        Command::KernelDump { n, k, out } => {
            if n > 5000 {
                return Err(Error::invalid(
                    "n",
                    "kernel-dump is guarded at n <= 5000 for dense dumps",
                ));
            }
            let params = ChainParams::new(n, k)?;
            let kernel = build_kernel(params)?;
            let mut meta = Metadata::new("kernel-dump");
            meta.push("n", n);
            meta.push("k", k);
            let mut w = open_out(out, out_dir, "kernel.csv")?;
            io::write_kernel_csv(&mut w, &kernel, &meta)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Mix {
            n,
            k,
            eps,
            policy,
            format,
            out,
        } => {
            let params = ChainParams::new(n, k)?;
            let kernel = build_kernel(params)?;
            let policy: StartPolicy = policy.into();
            let t_mix = mixing::mixing_time(&kernel, eps, policy)?;
            let times: Vec<u64> = (0..=t_mix).collect();
            let profile = mixing::profile(&kernel, policy, &times)?;
            let mut meta = Metadata::new("mix");
            meta.push("n", n);
            meta.push("k", k);
            meta.push("eps", io::fmt_f64(eps));
            meta.push("policy", policy);
            meta.push("t_mix", t_mix);
            let mut w = open_out(out, out_dir, "mix.csv")?;
            match format {
                FormatArg::Csv => io::write_profile_csv(&mut w, &profile, &meta)?,
                FormatArg::Json => {
                    let rows: Vec<serde_json::Value> = profile
                        .times
                        .iter()
                        .zip(&profile.distances)
                        .map(|(t, d)| serde_json::json!({"n": n, "k": k, "t": t, "d": d}))
                        .collect();
                    rows_to_json(&mut w, &rows)?;
                }
            }
            println!("t_mix({eps}) = {t_mix} for n = {n}, k = {k} [{policy}]");
            Ok(ExitCode::SUCCESS)
        }
        Command::CutoffScan {
            k,
            n_ladder,
            eps,
            format,
            out,
        } => {
            if n_ladder.is_empty() {
                return Err(Error::invalid("n_ladder", "at least one urn size"));
            }
            let ladder: Vec<ChainParams> = n_ladder
                .iter()
                .map(|&n| ChainParams::new(n, k))
                .collect::<urnmix::Result<_>>()?;
            let records = mixing::window_diagnostic(&ladder, eps)?;
            let mut meta = Metadata::new("cutoff-scan");
            meta.push("k", k);
            meta.push(
                "n_ladder",
                n_ladder
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            meta.push("eps", io::fmt_f64(eps));
            let mut w = open_out(out, out_dir, "cutoff-scan.csv")?;
            match format {
                FormatArg::Csv => io::write_cutoff_csv(&mut w, &records, &meta)?,
                FormatArg::Json => {
                    let rows: Vec<serde_json::Value> = records
                        .iter()
                        .map(|r| {
                            serde_json::json!({
                                "n": r.n, "k": r.k, "eps": r.eps, "t_mix": r.t_mix,
                                "t_star": r.t_star, "ratio": r.ratio,
                                "nw_upper": r.nw_upper, "nw_ok": r.nw_ok,
                            })
                        })
                        .collect();
                    rows_to_json(&mut w, &rows)?;
                }
            }
            for r in &records {
                println!(
                    "n={:5} k={:3} t_mix={:6} t*={:6} ratio={:.4} nw_ok={}",
                    r.n, r.k, r.t_mix, r.t_star, r.ratio, r.nw_ok
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Couple {
            n,
            k,
            x0,
            y0,
            mode,
            reps,
            t_max,
            seed,
            format,
            out,
        } => {
            let params = ChainParams::new(n, k)?;
            params.check_state("x0", x0)?;
            params.check_state("y0", y0)?;
            let paths: Vec<Vec<u32>> = match mode {
                CoupleMode::Monotone => par_collect(seed, reps, |_, rng| {
                    let mut pair = CoupledPair::new(x0, y0);
                    let mut path = Vec::with_capacity(t_max as usize + 1);
                    path.push(pair.gap());
                    for _ in 0..t_max {
                        pair = monotone_step(pair, params, rng);
                        path.push(pair.gap());
                    }
                    path
                }),
                CoupleMode::Independent => par_collect(seed, reps, |_, rng| {
                    let mut pair = CoupledPair::new(x0, y0);
                    let mut path = Vec::with_capacity(t_max as usize + 1);
                    path.push(pair.gap());
                    for _ in 0..t_max {
                        pair = independent_step(pair, params, rng);
                        path.push(pair.gap());
                    }
                    path
                }),
                CoupleMode::Decomposed => {
                    if k == 0 {
                        return Err(Error::invalid("k", "decomposed mode needs k >= 1"));
                    }
                    par_collect(seed, reps, |_, rng| {
                        let mut x = DecomposedState::new(params, x0).expect("validated");
                        let mut y = DecomposedState::new(params, y0).expect("validated");
                        let mut path = Vec::with_capacity(t_max as usize + 1);
                        path.push(x.red_left().abs_diff(y.red_left()));
                        for _ in 0..t_max {
                            x.step(rng);
                            y.step(rng);
                            path.push(x.red_left().abs_diff(y.red_left()));
                        }
                        path
                    })
                }
            };
            let mut meta = Metadata::new("couple");
            meta.push("n", n);
            meta.push("k", k);
            meta.push("x0", x0);
            meta.push("y0", y0);
            meta.push("mode", format!("{mode:?}").to_lowercase());
            meta.push("reps", reps);
            meta.push("t_max", t_max);
            meta.push("seed", seed);
            let mut w = open_out(out, out_dir, "couple.csv")?;
            match format {
                FormatArg::Csv => io::write_gap_paths_csv(&mut w, seed, &paths, &meta)?,
                FormatArg::Json => {
                    let rows: Vec<serde_json::Value> = paths
                        .iter()
                        .enumerate()
                        .flat_map(|(replica, path)| {
                            path.iter().enumerate().map(move |(t, gap)| {
                                serde_json::json!({
                                    "seed": seed, "replica": replica, "t": t, "gap": gap,
                                })
                            })
                        })
                        .collect();
                    rows_to_json(&mut w, &rows)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::FourPhase {
            n,
            k,
            x0,
            gamma1,
            reps,
            seed,
            format,
            out,
        } => {
            let params = ChainParams::new(n, k)?;
            let records = four_phase_batch(params, x0, gamma1, reps, seed)?;
            let uncensored = records.iter().filter(|r| r.censored_phase() == 0).count();
            let mut meta = Metadata::new("four-phase");
            meta.push("n", n);
            meta.push("k", k);
            meta.push("x0", x0);
            meta.push("gamma1", io::fmt_f64(gamma1));
            meta.push("reps", reps);
            meta.push("seed", seed);
            let mut w = open_out(out, out_dir, "four-phase.csv")?;
            match format {
                FormatArg::Csv => io::write_four_phase_csv(&mut w, seed, &records, &meta)?,
                FormatArg::Json => {
                    let rows: Vec<serde_json::Value> = records
                        .iter()
                        .enumerate()
                        .map(|(replica, r)| {
                            serde_json::json!({
                                "seed": seed, "replica": replica,
                                "tau1": r.tau1.map(|t| t as i64).unwrap_or(-1),
                                "tau2": r.tau2.map(|t| t as i64).unwrap_or(-1),
                                "tau3": r.tau3.map(|t| t as i64).unwrap_or(-1),
                                "tau4": r.tau4.map(|t| t as i64).unwrap_or(-1),
                                "censored_phase": r.censored_phase(),
                                "final_gap": r.final_gap,
                                "last_step_tv": r.last_step_tv,
                            })
                        })
                        .collect();
                    rows_to_json(&mut w, &rows)?;
                }
            }
            println!(
                "four-phase: {uncensored}/{} replicas uncensored ({:.4})",
                records.len(),
                uncensored as f64 / records.len() as f64
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            suite,
            seed,
            reps,
            n_max,
            out,
        } => {
            let mut reports: Vec<CheckReport> = Vec::new();
            if matches!(suite, SuiteArg::Exact | SuiteArg::All) {
                reports.extend(run_exact_suite(n_max, 1e-10)?);
            }
            if matches!(suite, SuiteArg::Stochastic | SuiteArg::All) {
                reports.extend(run_stochastic_suite(
                    &default_stochastic_grid(),
                    reps,
                    seed,
                )?);
            }
            if matches!(suite, SuiteArg::Mgf | SuiteArg::All) {
                reports.extend(mgf_constant_probe(&default_mgf_grid(), &default_h_grid())?);
            }
            for r in &reports {
                let dir = match r.direction {
                    urnmix::verification::Direction::Le => "<=",
                    urnmix::verification::Direction::Eq => "=",
                };
                println!(
                    "{} {}: statistic {:.6e} {} {:.6e} (tol {:.2e}, n={}, k={}, reps={})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.statistic,
                    dir,
                    r.bound,
                    r.tolerance,
                    r.n,
                    r.k,
                    r.replicas
                );
            }
            let name = match suite {
                SuiteArg::Exact => "verify-exact.json",
                SuiteArg::Stochastic => "verify-stochastic.json",
                SuiteArg::Mgf => "verify-mgf.json",
                SuiteArg::All => "verify-all.json",
            };
            let mut w = open_out(out, out_dir, name)?;
            io::write_reports_json(&mut w, &reports)?;
            if any_failed(&reports) {
                Ok(ExitCode::from(1))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}
