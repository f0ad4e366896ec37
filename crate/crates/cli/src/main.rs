use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use noma_relay::harness::{self, parse_list, verify, Scheme, SimConfig, CONFIG_KEYS};
use noma_relay::nomacore::InterferenceForm;

/// Sub-channel and power allocation simulator for a NOMA relay cell.
#[derive(Parser)]
#[command(name = "nomasim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and write instances.csv, aggregate.json and proposals_cdf.csv.
    Run(RunArgs),
    /// Run a campaign per grid point of N, q_u and q_l.
    Sweep(SweepArgs),
    /// Stability, quota, budget, water-filling and oracle checks on seeded instances.
    Verify(VerifyArgs),
    /// Matching wall time against N.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Campaign seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Any config key as `--key value`, applied after the file.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    /// Axis to sweep, `n_pairs=5..50`, `q_u=2,4,8` or `q_l=1..3`. Repeatable.
    #[arg(long = "vary", value_name = "KEY=LIST")]
    vary: Vec<String>,
    /// Shorthand for `--n_subchannels`.
    #[arg(long)]
    subchannels: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of seeded instances per check.
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    /// First seed.
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
    #[arg(long, default_value = "physical")]
    interference_form: InterferenceForm,
}

#[derive(Args)]
struct BenchArgs {
    /// Values of N to time.
    #[arg(long, default_value = "5,15,25")]
    n_values: String,
    /// Schemes to time.
    #[arg(long, default_value = "ssd,dsd")]
    schemes: String,
    #[command(flatten)]
    common: Common,
}

/// File, then `--key value` overrides, then `--seed`. Returns the config,
/// whether a seed was given anywhere, and any `own` flags found among the
/// overrides (they land there when written after the first override).
fn load(common: &Common, own: &[&str]) -> Result<(SimConfig, bool, Vec<(String, String)>)> {
    let mut cfg = SimConfig::default();
    let mut seeded = false;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let keys = cfg
            .apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
        seeded = keys.iter().any(|k| k == "seed");
    }
    let mut passed = Vec::new();
    let mut it = common.overrides.iter();
    while let Some(flag) = it.next() {
        let body = flag
            .strip_prefix("--")
            .ok_or_else(|| anyhow!("unexpected argument `{flag}` (overrides look like `--key value`)"))?;
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| anyhow!("`--{body}` needs a value"))?;
                (body.to_string(), v.clone())
            }
        };
        let key = key.replace('-', "_");
        if own.contains(&key.as_str()) {
            passed.push((key, value));
            continue;
        }
        if key == "config" || (key == "seed" && common.seed.is_some()) {
            bail!("`--{key}` given twice or after an override");
        }
        if !CONFIG_KEYS.contains(&key.as_str()) {
            bail!("unknown option `--{key}`");
        }
        cfg.set(&key, &value)?;
        seeded |= key == "seed";
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        seeded = true;
    }
    cfg.validate()?;
    Ok((cfg, seeded, passed))
}

fn run(args: RunArgs) -> Result<()> {
    let (cfg, seeded, _) = load(&args.common, &[])?;
    if !seeded {
        bail!("a seed is required: pass --seed or set `seed` in the config file");
    }
    let r = harness::run_campaign(&cfg)?;
    let a = &r.aggregate;
    println!(
        "{} instances x {} slots, scheme {}: sum-rate {:.6} +/- {:.6}, scheduled {:.2}, proposals {:.2} -> {}",
        cfg.n_instances,
        cfg.n_slots,
        cfg.scheme,
        a.sum_rate.mean,
        a.sum_rate.stderr,
        a.scheduled_pairs.mean,
        a.proposals.mean,
        cfg.output_dir.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let (mut cfg, _, late) = load(&args.common, &["vary", "subchannels"])?;
    let mut vary = args.vary.clone();
    let mut subchannels = args.subchannels;
    for (key, value) in late {
        if key == "vary" {
            vary.push(value);
        } else {
            subchannels = Some(value.parse().with_context(|| format!("bad value `{value}` for `--subchannels`"))?);
        }
    }
    if let Some(k) = subchannels {
        cfg.params.n_subchannels = k;
    }
    for v in &vary {
        let (key, list) = v
            .split_once('=')
            .ok_or_else(|| anyhow!("--vary expects KEY=LIST, got `{v}`"))?;
        let values = parse_list(key, list)?;
        match key {
            "n_pairs" => cfg.sweep.n_pairs = Some(values),
            "q_u" => cfg.sweep.q_u = Some(values),
            "q_l" => cfg.sweep.q_l = Some(values),
            _ => bail!("cannot sweep `{key}` (expected n_pairs, q_u or q_l)"),
        }
    }
    if cfg.sweep.is_empty() {
        cfg.sweep.q_u = Some(vec![2, 4, 8]);
        cfg.sweep.q_l = Some(vec![1, 2, 3]);
    }
    cfg.validate()?;
    let rows = harness::run_sweep(&cfg)?;
    println!("scheme  N  K  q_u q_l  sum_rate        scheduled  proposals");
    for r in &rows {
        println!(
            "{:<6} {:>3} {:>2} {:>3} {:>3}  {:.6e}  {:>9.2}  {:>9.2}",
            r.scheme, r.n_pairs, r.n_subchannels, r.q_u, r.q_l, r.sum_rate_mean, r.scheduled_pairs_mean, r.proposals_mean
        );
    }
    println!("summary -> {}", cfg.output_dir.join("sweep.csv").display());
    Ok(())
}

fn verify_cmd(args: VerifyArgs) -> Result<bool> {
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let report = verify::verify(args.seeds, args.base_seed, args.interference_form)?;
    for c in &report.checks {
        println!("{c}");
    }
    Ok(report.passed())
}

fn bench(args: BenchArgs) -> Result<()> {
    let (cfg, _, _) = load(&args.common, &[])?;
    let ns = parse_list("n_values", &args.n_values)?;
    let schemes = args
        .schemes
        .split(',')
        .map(|s| s.trim().parse::<Scheme>())
        .collect::<Result<Vec<_>, _>>()?;
    let rows = harness::run_bench(&cfg, &ns, &schemes)?;
    println!("scheme   N  wall_us      proposals");
    for r in &rows {
        println!("{:<6} {:>3}  {:>11.1}  {:>9.2}", r.scheme, r.n_pairs, r.wall_time_us_mean, r.proposals_mean);
    }
    println!("timings -> {}", cfg.output_dir.join("bench.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Verify(a) => verify_cmd(a),
        Command::Bench(a) => bench(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
