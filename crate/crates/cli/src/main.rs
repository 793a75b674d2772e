mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use ddimstego_core::chaos::{KeyCodeword, RealKey, KEY_BITS};
use ddimstego_core::ddim::estimator::toy;
use ddimstego_core::ddim::protocol::ExternalEstimator;
use ddimstego_core::ddim::{DiffusionSchedule, NoiseEstimator, ScheduleConfig};
use ddimstego_core::integrity::{verify, Verdict};
use ddimstego_core::pipeline::{
    hide, reveal, single_pixel_tamper, substitution_attack, HideRequest, Scheme, SessionLedger,
};
use ddimstego_core::raster::{io, partition, predict_errors, Histogram};
use ddimstego_core::rdh::{eligible_positions, flatten_saturated, Mode};
use ddimstego_core::Error;

use config::FileConfig;

const DEFAULT_BACKEND: &str = "toy:analytic";
const BACKEND_ENV: &str = "STEGANO_BACKEND";

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub const USAGE: u8 = 1;
    pub const TAMPERED: u8 = 2;
    pub const MALFORMED: u8 = 3;
    pub const CAPACITY: u8 = 4;

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Tampered(_) => Self::TAMPERED,
            Error::Malformed(_) => Self::MALFORMED,
            Error::CapacityExceeded { .. } | Error::NoZeroBin => Self::CAPACITY,
            _ => Self::USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "ddimstego", version, about = "Coverless image steganography with DDIM containers")]
struct Cli {
    /// Flat key=value file supplying defaults for scheme, backend, key and schedule.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    RealKey,
    WithoutKey,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Sequential,
    Cdjb,
}

#[derive(Args, Clone, Default)]
struct KeyArgs {
    /// real-key (default) or without-key.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Key file holding `mu=…;a0=…` or a 26-digit hex codeword.
    #[arg(long, value_name = "FILE")]
    key: Option<PathBuf>,
    /// Inline 26-digit hex codeword.
    #[arg(long, conflicts_with = "key")]
    codeword: Option<String>,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// toy:analytic, toy:zero, toy:linear:<k>, toy:constant:<c> or external:<command>.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    beta_end: Option<f64>,
    #[arg(long)]
    sub_steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random real key.
    Keygen {
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Deterministic generation from a seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Count zero-error positions and the payload bits they carry.
    Capacity {
        image: PathBuf,
        #[arg(long, value_enum, default_value = "cdjb")]
        mode: ModeArg,
    },
    /// Turn a secret image into a stego container.
    Hide {
        secret: PathBuf,
        #[arg(long)]
        kpri: String,
        #[arg(long)]
        kpub: String,
        #[arg(short, long, value_name = "FILE")]
        out: PathBuf,
        /// Also write the container before embedding.
        #[arg(long, value_name = "FILE")]
        container_out: Option<PathBuf>,
        /// JSON session ledger to append this session to.
        #[arg(long, value_name = "FILE")]
        ledger: Option<PathBuf>,
        #[command(flatten)]
        keys: KeyArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Recover the secret image from a stego container.
    Reveal {
        stego: PathBuf,
        #[arg(short, long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_name = "FILE")]
        container_out: Option<PathBuf>,
        /// Continue past a failed integrity check.
        #[arg(long, conflicts_with = "strict")]
        permissive: bool,
        /// Abort on a failed integrity check (default).
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        keys: KeyArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Check a stego container's integrity.
    Verify {
        stego: PathBuf,
        #[command(flatten)]
        keys: KeyArgs,
    },
    /// Simulate substitution and single-pixel tamper attacks.
    AttackSim {
        stego: PathBuf,
        /// Image delivered in place of the stego object.
        #[arg(long, value_name = "FILE")]
        replacement: Option<PathBuf>,
        /// Random single-pixel tamper trials.
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        keys: KeyArgs,
    },
    /// Prediction-error histogram.
    Histogram {
        image: PathBuf,
        /// Print `value,count` rows instead of JSON.
        #[arg(long)]
        csv: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(CliError::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Keygen { out, seed } => keygen(out.as_deref(), seed),
        Command::Capacity { image, mode } => capacity(&image, mode),
        Command::Hide {
            secret,
            kpri,
            kpub,
            out,
            container_out,
            ledger,
            keys,
            model,
        } => {
            let scheme = resolve_scheme(&keys, &cfg)?;
            let (schedule, backend) = resolve_model(&model, &cfg)?;
            let estimator = open_backend(&backend, &schedule)?;
            let secret_grid = io::load_gray(&secret)?;
            let out_data = hide(&HideRequest {
                secret: &secret_grid,
                k_pri: &kpri,
                k_pub: &kpub,
                scheme,
                schedule: &schedule,
                estimator: estimator.as_ref(),
            })?;
            io::save(&out_data.stego, &out)?;
            if let Some(p) = &container_out {
                io::save(&out_data.container, p)?;
            }
            let ledger_report = match &ledger {
                Some(p) => Some(update_ledger(p, &scheme, &kpub)?),
                None => None,
            };
            emit(&json!({
                "command": "hide",
                "scheme": scheme.name(),
                "backend": backend,
                "schedule": schedule_json(&schedule, &model, &cfg)?,
                "width": out_data.stego.width(),
                "height": out_data.stego.height(),
                "stego": out.display().to_string(),
                "embedding": out_data.stats,
                "clamped": out_data.clamped,
                "ledger": ledger_report,
            }));
            Ok(0)
        }
        Command::Reveal {
            stego,
            out,
            container_out,
            permissive,
            strict,
            keys,
            model,
        } => {
            let scheme = resolve_scheme(&keys, &cfg)?;
            let strict = if permissive {
                false
            } else if strict {
                true
            } else {
                cfg.parsed::<bool>("strict")?.unwrap_or(true)
            };
            let (schedule, backend) = resolve_model(&model, &cfg)?;
            let estimator = open_backend(&backend, &schedule)?;
            let grid = io::load_gray(&stego)?;
            let r = reveal(&grid, &scheme, &schedule, estimator.as_ref(), strict)?;
            if let Some(secret) = &r.secret {
                io::save(secret, &out)?;
            }
            if let Some(p) = &container_out {
                io::save(&r.container, p)?;
            }
            emit(&json!({
                "command": "reveal",
                "scheme": scheme.name(),
                "backend": backend,
                "strict": strict,
                "verdict": r.verdict,
                "kpri": r.k_pri,
                "kpub": r.k_pub,
                "secret": out.display().to_string(),
            }));
            Ok(verdict_code(r.verdict))
        }
        Command::Verify { stego, keys } => {
            let scheme = resolve_scheme(&keys, &cfg)?;
            let grid = io::load_gray(&stego)?;
            let verdict = verify(&grid, &scheme);
            println!("{}", json!({ "verdict": verdict }));
            Ok(verdict_code(verdict))
        }
        Command::AttackSim {
            stego,
            replacement,
            trials,
            seed,
            keys,
        } => {
            let scheme = resolve_scheme(&keys, &cfg)?;
            attack_sim(&stego, replacement.as_deref(), trials, seed, &scheme)
        }
        Command::Histogram { image, csv } => histogram(&image, csv),
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Authentic => 0,
        Verdict::Tampered => CliError::TAMPERED,
        Verdict::Malformed => CliError::MALFORMED,
    }
}

fn emit(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn resolve_scheme(keys: &KeyArgs, cfg: &FileConfig) -> CliResult<Scheme> {
    let scheme = match keys.scheme {
        Some(s) => s,
        None => match cfg.get("scheme") {
            None | Some("real-key") => SchemeArg::RealKey,
            Some("without-key") => SchemeArg::WithoutKey,
            Some(other) => return Err(CliError::usage(format!("config: unknown scheme {other:?}"))),
        },
    };
    if scheme == SchemeArg::WithoutKey {
        eprintln!("warning: without-key scheme places conditions at predictable positions; anyone can extract them");
        return Ok(Scheme::WithoutKey);
    }
    let key = if let Some(hex) = &keys.codeword {
        KeyCodeword::from_hex(hex.trim())?.key()?
    } else if let Some(path) = keys.key.as_deref().or(cfg.get("key").map(Path::new)) {
        read_key(path)?
    } else {
        return Err(CliError::usage(
            "real-key scheme needs --key FILE or --codeword HEX (or --scheme without-key)",
        ));
    };
    Ok(Scheme::RealKey(key))
}

fn read_key(path: &Path) -> CliResult<RealKey> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("key file {}: {e}", path.display())))?;
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| CliError::usage(format!("key file {} is empty", path.display())))?;
    Ok(line.parse()?)
}

fn resolve_model(model: &ModelArgs, cfg: &FileConfig) -> CliResult<(DiffusionSchedule, String)> {
    let d = ScheduleConfig::default();
    let sc = ScheduleConfig {
        steps: pick(model.steps, cfg.parsed("steps")?, d.steps),
        beta_start: pick(model.beta_start, cfg.parsed("beta_start")?, d.beta_start),
        beta_end: pick(model.beta_end, cfg.parsed("beta_end")?, d.beta_end),
        sub_steps: pick(model.sub_steps, cfg.parsed("sub_steps")?, d.sub_steps),
    };
    let backend = model
        .backend
        .clone()
        .or_else(|| std::env::var(BACKEND_ENV).ok().filter(|v| !v.is_empty()))
        .or_else(|| cfg.get("backend").map(str::to_owned))
        .unwrap_or_else(|| DEFAULT_BACKEND.to_owned());
    Ok((sc.build().map_err(|e| CliError::usage(e.to_string()))?, backend))
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn schedule_json(s: &DiffusionSchedule, model: &ModelArgs, cfg: &FileConfig) -> CliResult<Value> {
    let d = ScheduleConfig::default();
    Ok(json!({
        "steps": s.steps(),
        "sub_steps": s.sub_steps(),
        "beta_start": pick(model.beta_start, cfg.parsed("beta_start")?, d.beta_start),
        "beta_end": pick(model.beta_end, cfg.parsed("beta_end")?, d.beta_end),
    }))
}

fn open_backend(selector: &str, schedule: &DiffusionSchedule) -> CliResult<Box<dyn NoiseEstimator>> {
    if let Some(name) = selector.strip_prefix("toy:") {
        return toy(name, schedule).map_err(|e| CliError::usage(e.to_string()));
    }
    if let Some(cmd) = selector.strip_prefix("external:") {
        let parts = shlex::split(cmd)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| CliError::usage(format!("cannot parse backend command {cmd:?}")))?;
        return Ok(Box::new(ExternalEstimator::spawn(&parts[0], &parts[1..])?));
    }
    Err(CliError::usage(format!(
        "backend must be toy:<name> or external:<command>, got {selector:?}"
    )))
}

fn update_ledger(path: &Path, scheme: &Scheme, k_pub: &str) -> CliResult<Value> {
    let mut ledger: SessionLedger = if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("ledger {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("ledger {}: {e}", path.display())))?
    } else {
        SessionLedger::new()
    };
    ledger.record(scheme, k_pub);
    let text = serde_json::to_string_pretty(&ledger).expect("ledger serializes");
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::usage(format!("ledger {}: {e}", path.display())))?;
    Ok(ledger_json(&ledger))
}

fn ledger_json(l: &SessionLedger) -> Value {
    json!({
        "sessions": l.sessions().len(),
        "distinct_keys": l.distinct_keys(),
        "key_exchange_bits": l.key_exchange_bits(),
        "pseudo_key_baseline_bits": l.pseudo_key_baseline_bits(),
    })
}

fn keygen(out: Option<&Path>, seed: Option<u64>) -> CliResult<u8> {
    let mut rng = match seed {
        Some(s) => StdRng::seed_from_u64(s),
        None => StdRng::from_entropy(),
    };
    let mu_frac = rng.gen_range(600_000_000_000_000..1_000_000_000_000_000u64);
    let a0_frac = rng.gen_range(1..ddimstego_core::chaos::SCALE);
    let key = RealKey::from_digits(mu_frac, a0_frac)?;
    let word = key.encode();
    debug_assert_eq!(word.key()?, key);
    if let Some(p) = out {
        std::fs::write(p, key.to_line() + "\n")
            .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
    }
    emit(&json!({
        "command": "keygen",
        "mu": key.mu_string(),
        "a0": key.a0_string(),
        "codeword": word.to_hex(),
        "bits": KEY_BITS,
        "out": out.map(|p| p.display().to_string()),
    }));
    Ok(0)
}

fn capacity(image: &Path, mode: ModeArg) -> CliResult<u8> {
    let mode = match mode {
        ModeArg::Sequential => Mode::Sequential,
        ModeArg::Cdjb => Mode::Cdjb,
    };
    let planes = io::load_planes(image)?;
    let mut eligible = 0usize;
    let mut zero_bins = Vec::new();
    for plane in &planes {
        let (flat, _) = flatten_saturated(plane)?;
        let map = predict_errors(&flat, &partition(&flat)?)?;
        eligible += eligible_positions(&map).len();
        zero_bins.push(map.zero_bin());
    }
    emit(&json!({
        "command": "capacity",
        "mode": match mode { Mode::Sequential => "sequential", Mode::Cdjb => "cdjb" },
        "planes": planes.len(),
        "eligible_zero": eligible,
        "window": mode.window(),
        "payload_bits": eligible / mode.window(),
        "zero_bins": zero_bins,
    }));
    Ok(0)
}

fn histogram(image: &Path, csv: bool) -> CliResult<u8> {
    let planes = io::load_planes(image)?;
    let mut hist = Histogram::from_errors(&[]);
    for plane in &planes {
        hist.merge(&predict_errors(plane, &partition(plane)?)?.histogram());
    }
    if csv {
        print!("{}", hist.to_csv());
        return Ok(0);
    }
    let peak = hist.nonzero().max_by_key(|&(v, c)| (c, std::cmp::Reverse(v.abs()))).map(|(v, _)| v);
    let bins: Vec<Value> = hist
        .nonzero()
        .map(|(v, c)| json!({ "error": v, "count": c }))
        .collect();
    emit(&json!({
        "command": "histogram",
        "planes": planes.len(),
        "total": hist.total(),
        "peak": peak,
        "zero_bin": hist.zero_bin(),
        "bins": bins,
    }));
    Ok(0)
}

fn attack_sim(stego: &Path, replacement: Option<&Path>, trials: usize, seed: u64, scheme: &Scheme) -> CliResult<u8> {
    let grid = io::load_gray(stego)?;
    let baseline = verify(&grid, scheme);
    let replacement_report = match replacement {
        Some(p) => Some(substitution_attack(&grid, &io::load_gray(p)?, scheme)?),
        None => None,
    };
    let mut rng = StdRng::seed_from_u64(seed);
    let (mut tampered, mut malformed, mut undetected) = (0usize, 0usize, 0usize);
    for _ in 0..trials {
        let r = rng.gen_range(0..grid.height());
        let c = rng.gen_range(0..grid.width());
        match verify(&single_pixel_tamper(&grid, r, c), scheme) {
            Verdict::Authentic => undetected += 1,
            Verdict::Tampered => tampered += 1,
            Verdict::Malformed => malformed += 1,
        }
    }
    emit(&json!({
        "command": "attack-sim",
        "scheme": scheme.name(),
        "baseline": baseline,
        "replacement": replacement_report,
        "single_pixel": {
            "trials": trials,
            "seed": seed,
            "tampered": tampered,
            "malformed": malformed,
            "undetected": undetected,
        },
    }));
    Ok(0)
}
