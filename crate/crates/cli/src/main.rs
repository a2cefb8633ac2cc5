use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};

use ppdfl::bench::{fit_line, k_sweep, share_sweep, write_csv, BenchPoint};
use ppdfl::config::{KSpec, RunConfig, UniformWord, WeightsSpec};
use ppdfl::consensus::{decay_table, min_iterations};
use ppdfl::field::PrimeModulus;
use ppdfl::fixed_point::{check_p_bound, Precision};
use ppdfl::privacy::{adversary_infer, AdversarySet, CoordMode};
use ppdfl::protocol::{initial_models, run_training, ProtocolConfig, RecordLevel};
use ppdfl::topology::{contraction_radius, generate_topology, mh_weights, TopologyKind, TopologySchedule};
use ppdfl::transcript::Transcript;
use ppdfl::Error;

/// Writes a line to stdout; a closed pipe is not an error.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

const EXIT_CONFIG: u8 = 2;
const EXIT_BOUND: u8 = 3;
const EXIT_LEAK: u8 = 4;
const EXIT_INVARIANT: u8 = 5;

#[derive(Parser)]
#[command(name = "ppdfl", version, about = "Masked average-consensus aggregation simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every round of a configuration and write trajectories, models,
    /// the message transcript and a summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print lambda_2 of the weight matrix and the decay of ||N A^k - 1 1^T||.
    Spectral {
        #[arg(long)]
        topology: TopologyKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        k_max: usize,
    },
    /// Check the prime and iteration-count bounds of a configuration.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Analyse what a coalition of learners can infer.
    Privacy(PrivacyArgs),
    /// Time rounds against share count and consensus against K.
    Bench {
        #[arg(long, value_enum, default_value_t = Sweep::Both)]
        sweep: Sweep,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value = "random:6")]
        topology: TopologyKind,
        #[arg(long, value_delimiter = ',', default_value = "200,400,600,800,1000,1200")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "500,1000,1500,2000,2500,3000")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PrivacyArgs {
    /// Transcript to analyse; without it the configuration is simulated first.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the configuration's schedule.
    #[arg(long)]
    topology: Option<TopologyKind>,
    /// Learner count when no configuration is given.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "")]
    adversary: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Analyse every coordinate instead of the first.
    #[arg(long)]
    all_coords: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sweep {
    Shares,
    K,
    Both,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = err
            .chain()
            .find_map(|e| e.downcast_ref::<Error>())
            .map_or(EXIT_CONFIG, exit_code);
        Self { code, err }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_CONFIG,
            err: e.into(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::PrimeBound(_) | Error::IterationBound(_) | Error::RangeViolation { .. } | Error::NoFiniteK(_) => {
            EXIT_BOUND
        }
        Error::Config(_)
        | Error::Parse { .. }
        | Error::BadParameters(_)
        | Error::NotPrime(_)
        | Error::ModulusTooLarge(_)
        | Error::DisconnectedGraph
        | Error::IsolatedLearner(_)
        | Error::BadWeights(_)
        | Error::TranscriptIncomplete(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_INVARIANT,
    }
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure {
        code,
        err: anyhow::anyhow!(msg.into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("PPDFL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let res = match cli.cmd {
        Cmd::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Cmd::Spectral { topology, n, seed, k_max } => spectral(topology, n, seed, k_max),
        Cmd::Bounds { config, seed } => bounds(&config, seed),
        Cmd::Privacy(args) => privacy(args),
        Cmd::Bench {
            sweep,
            n,
            topology,
            dims,
            ks,
            reps,
            seed,
            out,
        } => bench(sweep, n, topology, &dims, &ks, reps, seed, out.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<(RunConfig, PathBuf), Failure> {
    let (mut cfg, base) = RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok((cfg, base))
}

fn writer(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let (run, base) = load(config, seed)?;
    let cfg = run.protocol_config()?;
    let schedule = run.schedule(&base)?;
    let rounds: Vec<_> = (1..=cfg.rounds).map(|t| schedule.round(t)).collect::<Result<_, _>>()?;
    let digest = hex(&Sha256::digest(TopologySchedule::to_json(&rounds)));

    let trainer = run.trainer();
    let init = initial_models(&cfg, run.initial_scale());
    let outcome = run_training(&cfg, trainer.as_ref(), &schedule, init, RecordLevel::Full)?;

    fs::create_dir_all(out)?;
    let mut traj = writer(&out.join("trajectories.csv"))?;
    let mut dec = writer(&out.join("decoded_trajectories.csv"))?;
    let mut models = writer(&out.join("models.csv"))?;
    writeln!(models, "round,learner_id,coordinate,local,decoded,oracle")?;
    let scale = cfg.scale() as f64;
    let mut per_round = Vec::new();
    let mut max_dev = 0.0f64;
    for (idx, r) in outcome.rounds.iter().enumerate() {
        r.trajectory()?.write_csv(r.round, &mut traj, idx == 0)?;
        r.decoded_trajectory(&cfg)?.write_csv(r.round, &mut dec, idx == 0)?;
        for (i, (local, decoded)) in r.local_models.iter().zip(&r.decoded).enumerate() {
            for (l, (x, d)) in local.iter().zip(decoded).enumerate() {
                writeln!(models, "{},{},{},{x},{d},{}", r.round, i + 1, l + 1, r.oracle[l] as f64 / scale)?;
            }
        }
        max_dev = max_dev.max(r.max_deviation);
        per_round.push(json!({
            "round": r.round,
            "k": r.k_used,
            "lambda2": r.lambda2,
            "max_deviation": r.max_deviation,
            "exact": r.exact,
            "rounding_margin": r.rounding_margin,
            "timings_seconds": {
                "shares": r.timings.shares.as_secs_f64(),
                "initial_state": r.timings.initial_state.as_secs_f64(),
                "consensus": r.timings.consensus.as_secs_f64(),
                "reconstruction": r.timings.reconstruction.as_secs_f64(),
            },
        }));
    }
    traj.flush()?;
    dec.flush()?;
    models.flush()?;
    let mut tw = writer(&out.join("transcript.jsonl"))?;
    outcome.transcript.write_jsonl(&mut tw)?;
    tw.flush()?;

    let all_exact = outcome.rounds.iter().all(|r| r.exact);
    let summary = json!({
        "manifest": {
            "config": run,
            "schedule_sha256": digest,
            "seed": cfg.seed,
            "version": env!("CARGO_PKG_VERSION"),
        },
        "max_deviation": max_dev,
        "exact": all_exact,
        "rounds": per_round,
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
    out!("rounds: {}", cfg.rounds);
    out!("max deviation: {max_dev}");
    out!("output: {}", out.display());
    if !all_exact {
        return Err(fail(EXIT_INVARIANT, "decoded models differ from the quantized weighted aggregate"));
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn spectral(kind: TopologyKind, n: usize, seed: u64, k_max: usize) -> Result<(), Failure> {
    let g = generate_topology(kind, n, seed)?;
    let a = mh_weights(&g)?;
    let lambda2 = contraction_radius(&a);
    out!("# topology {kind}, N = {n}, edges {}", g.n_edges());
    out!("# lambda2 {lambda2:.6}");
    out!("k,norm");
    for row in decay_table(&a, k_max) {
        out!("{},{:.12e}", row.k, row.norm);
    }
    Ok(())
}

fn bounds(config: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let (run, base) = load(config, seed)?;
    let prec = Precision::new(run.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let p = PrimeModulus::new(run.prime).map_err(|e| Error::Config(e.to_string()))?;
    let report = check_p_bound(p.get(), run.n_learners, prec, run.theta_max);
    let mut ok = report.ok;
    out!(
        "prime: p = {p}, required > {} ({}): {}",
        report.required,
        "p > max{N, 1 + 2 * 10^sigma * N * theta_max}",
        if report.ok { "pass" } else { "FAIL" }
    );
    out!("max admissible |theta|: {:.4} (theta_max {})", report.max_admissible, run.theta_max);
    let schedule = run.schedule(&base)?;
    for t in 1..=run.rounds {
        let g = schedule.round(t)?;
        let line = match mh_weights(&g).and_then(|a| min_iterations(&a, p).map(|k| (k, contraction_radius(&a)))) {
            Ok((k, lambda2)) => {
                let verdict = match run.k_policy {
                    KSpec::Fixed(fixed) if fixed < k => {
                        ok = false;
                        format!("FAIL: K = {fixed} violates 2 p sqrt(N) ||N A^K - 1 1^T|| < 1")
                    }
                    KSpec::Fixed(_) => "pass".to_string(),
                    KSpec::Auto(_) => "auto".to_string(),
                };
                format!("round {t}: lambda2 {lambda2:.6}, minimal K {k}: {verdict}")
            }
            Err(e) => {
                ok = false;
                format!("round {t}: FAIL: {e}")
            }
        };
        out!("{line}");
    }
    if ok {
        Ok(())
    } else {
        Err(fail(EXIT_BOUND, "bound check failed"))
    }
}

fn default_run(n: usize, schedule: String) -> RunConfig {
    RunConfig {
        n_learners: n,
        model_dim: 1,
        sigma: 2,
        prime: 1020431,
        rounds: 1,
        k_policy: KSpec::Auto(ppdfl::config::AutoWord::Auto),
        weights: WeightsSpec::Uniform(UniformWord::Uniform),
        theta_max: 10.0,
        seed: 0,
        schedule,
        initial_scale: None,
        trainer_noise: 0.0,
    }
}

fn privacy(args: PrivacyArgs) -> Result<(), Failure> {
    let (mut run, base) = match &args.config {
        Some(path) => load(path, args.seed)?,
        None => {
            let n = args
                .n
                .ok_or_else(|| fail(EXIT_CONFIG, "privacy needs --config or --n"))?;
            let mut run = default_run(n, "complete".into());
            run.seed = args.seed.unwrap_or(0);
            (run, PathBuf::new())
        }
    };
    if let Some(kind) = args.topology {
        run.schedule = kind.to_string();
    }
    let cfg: ProtocolConfig = run.protocol_config()?;
    let transcript = match &args.transcript {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Transcript::read_jsonl(BufReader::new(f))?
        }
        None => {
            let schedule = run.schedule(&base)?;
            let init = initial_models(&cfg, run.initial_scale());
            run_training(&cfg, run.trainer().as_ref(), &schedule, init, RecordLevel::NoConsensus)?.transcript
        }
    };
    let n = transcript
        .rounds
        .first()
        .map_or(cfg.n_learners, |r| r.topology.n_nodes());
    let adv = AdversarySet::parse(n, &args.adversary)?;
    let mode = if args.all_coords { CoordMode::All } else { CoordMode::Representative };
    let report = adversary_infer(&transcript, &adv, cfg.prime, cfg.precision, mode)?;
    let text = serde_json::to_string_pretty(&report.to_json()).expect("json") + "\n";
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("privacy.json"), &text)?;
        }
        None => {
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
        }
    }
    if report.perfect_secrecy() {
        eprintln!("perfect secrecy holds in all {} rounds", report.rounds.len());
        Ok(())
    } else {
        let first = report.rounds.iter().find(|r| !r.decomposition.is_whole()).expect("a failing round");
        Err(fail(
            EXIT_LEAK,
            format!(
                "leakage in round {}: surrounded sets {:?}",
                first.round,
                first.decomposition.member_lists()
            ),
        ))
    }
}

fn report_fit(name: &str, points: &[BenchPoint]) {
    let fit = fit_line(points);
    match (fit.slope, fit.r_squared) {
        (Some(s), Some(r2)) => out!("{name}: slope {s:.6e} s/unit, R^2 {r2:.4}"),
        _ => out!("{name}: slope undefined ({} distinct points)", points.len()),
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    sweep: Sweep,
    n: usize,
    kind: TopologyKind,
    dims: &[usize],
    ks: &[usize],
    reps: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let emit = |file: &str, x_name: &str, points: &[BenchPoint]| -> Result<(), Failure> {
        match out {
            Some(dir) => {
                let mut w = writer(&dir.join(file))?;
                write_csv(points, x_name, &mut w)?;
                w.flush()?;
            }
            None => {
                let _ = write_csv(points, x_name, std::io::stdout().lock());
            }
        }
        Ok(())
    };
    if matches!(sweep, Sweep::Shares | Sweep::Both) {
        let pts = share_sweep(n, kind, dims, reps, seed)?;
        emit("bench_shares.csv", "shares_per_learner", &pts)?;
        report_fit("shares", &pts);
    }
    if matches!(sweep, Sweep::K | Sweep::Both) {
        let pts = k_sweep(n, kind, 16, ks, reps, seed)?;
        emit("bench_k.csv", "k", &pts)?;
        report_fit("consensus", &pts);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ppdfl::protocol::KPolicy;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::PrimeBound("x".into())), EXIT_BOUND);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::ZeroInverse), EXIT_INVARIANT);
        let wrapped: Failure = anyhow::Error::from(Error::IterationBound("k".into()))
            .context("round 1")
            .into();
        assert_eq!(wrapped.code, EXIT_BOUND);
    }

    #[test]
    fn kpolicy_roundtrip() {
        let mut run = default_run(3, "line".into());
        run.k_policy = KSpec::Fixed(7);
        assert_eq!(run.protocol_config().unwrap().k_policy, KPolicy::Fixed(7));
    }
}
