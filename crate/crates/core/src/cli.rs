//! Command-line front end: key generation, dataset encryption, the search
//! server and client, and the benchmark harness.
//!
//! Exit codes: 0 found (or success), 1 not found, 2 operational error,
//! 3 benchmark regression.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::he::{Evaluator, HeContext, KeyFile, KeyPair, SchemeParams, PRESETS};
use crate::prodtree::{padded_size, Dataset, TreeConfig};
use crate::protocol::{expected_message_count, run_search, serve_connection, serve_tcp, Mode, SearchOutcome, ZeroTest};
use crate::transport::{duplex, max_frame_from_env, tcp_connect, Endpoint, Role, DEFAULT_PORT, DEFAULT_TIMEOUT};

pub const EXIT_FOUND: u8 = 0;
pub const EXIT_NOT_FOUND: u8 = 1;
pub const EXIT_ERROR: u8 = 2;
pub const EXIT_REGRESSION: u8 = 3;

pub const BENCH_HEADER: &str =
    "n,n_padded,backend,messages_paper,messages_wire,bytes_up,bytes_down,build_ms,search_ms,hmul_count";

#[derive(Debug, Parser)]
#[command(name = "hesearch", version, about = "Encrypted search over a homomorphic product tree")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key file and its public-only companion (<out>.pub).
    Keygen(KeygenArgs),
    /// Encrypt a CSV of values (one per line) into a dataset file.
    Encrypt(EncryptArgs),
    /// Serve search sessions over an encrypted dataset.
    Serve(ServeArgs),
    /// Search a server for a value; prints its index or "not found".
    Search(SearchArgs),
    /// Measure message counts, traffic and timings; writes CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Derive the keys deterministically from this seed (testing only).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EncryptArgs {
    #[arg(long = "public-keys", visible_alias = "keys")]
    pub public_keys: PathBuf,
    /// CSV input, one decimal per line.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long = "public-keys")]
    pub public_keys: Option<PathBuf>,
    /// A full key file; only its public parts are used.
    #[arg(long, conflicts_with = "public_keys")]
    pub keys: Option<PathBuf>,
    /// Encrypted dataset file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = format!("127.0.0.1:{DEFAULT_PORT}"))]
    pub listen: String,
    /// Expected magnitude of non-matching differences; enables per-level
    /// normalization by 1/g² when different from 1.
    #[arg(long = "expected-gap", default_value_t = 1.0)]
    pub expected_gap: f64,
    /// Exit after this many sessions.
    #[arg(long)]
    pub sessions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(allow_hyphen_values = true)]
    pub target: f64,
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long, default_value_t = format!("127.0.0.1:{DEFAULT_PORT}"))]
    pub connect: String,
    /// Zero threshold; defaults to exact zero on plain and 1e-4 on ckks.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// strict or robust; defaults to strict on plain and robust on ckks.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub stats: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Plain,
    Ckks,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Backend::Plain)]
    pub backend: Backend,
    /// Fixed preset; by default ckks runs use desk-d with d = log2(n_padded).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

type CliResult = Result<u8, String>;

pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Encrypt(a) => encrypt(a),
        Command::Serve(a) => serve(a),
        Command::Search(a) => search(a),
        Command::Bench(a) => bench(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), String> {
    fs::write(path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn load_keys(path: &Path) -> Result<(Arc<HeContext>, KeyPair), String> {
    let (ctx, keys) = KeyFile::load(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((Arc::new(ctx), keys))
}

fn keygen(a: KeygenArgs) -> CliResult {
    let params = SchemeParams::preset(&a.preset)
        .ok_or_else(|| format!("unknown preset '{}'; available presets: {}", a.preset, PRESETS.join(", ")))?;
    if params.is_insecure() {
        eprintln!("warning: preset '{}' is INSECURE and meant for testing only", a.preset);
    }
    let ctx = HeContext::new(params).map_err(|e| e.to_string())?;
    let keys = match a.seed {
        Some(seed) => ctx.keygen(seed),
        None => ctx.keygen_with_rng(&mut ChaCha20Rng::from_entropy()),
    }
    .map_err(|e| e.to_string())?;
    let mut public_path = a.out.clone().into_os_string();
    public_path.push(".pub");
    let public_path = PathBuf::from(public_path);
    write(&a.out, &KeyFile::encode(&ctx, &keys))?;
    write(&public_path, &KeyFile::encode(&ctx, &keys.public_only()))?;
    println!("preset: {}", a.preset);
    println!("params: {}", ctx.params_id());
    println!("backend: {}", ctx.tag());
    if let SchemeParams::Ckks(p) = ctx.params() {
        println!("ring degree: {}", p.ring_degree);
        println!("max depth: {}", p.max_depth);
    }
    println!("keys: {}", a.out.display());
    println!("public keys: {}", public_path.display());
    Ok(EXIT_FOUND)
}

/// One decimal per line; blank lines are skipped.
pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let v: f64 = s.parse().map_err(|_| format!("line {}: cannot parse '{s}' as a number", i + 1))?;
        if !v.is_finite() {
            return Err(format!("line {}: value must be finite", i + 1));
        }
        out.push(v);
    }
    Ok(out)
}

fn encrypt(a: EncryptArgs) -> CliResult {
    let (ctx, keys) = load_keys(&a.public_keys)?;
    let text = String::from_utf8(read(&a.data)?).map_err(|_| format!("{} is not UTF-8", a.data.display()))?;
    let values = parse_values(&text)?;
    if values.is_empty() {
        return Err("dataset must be nonempty".into());
    }
    let ev = Evaluator::from_keys(Arc::clone(&ctx), &keys).map_err(|e| e.to_string())?;
    let mut items = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        items.push(ev.encrypt(v).map_err(|e| format!("value {} out of range: {e}", i + 1))?);
    }
    let data = Dataset::new(ctx.params_id(), items).map_err(|e| e.to_string())?;
    write(&a.out, &data.to_bytes(&ctx))?;
    println!("encrypted {} values", data.len());
    Ok(EXIT_FOUND)
}

fn serve(a: ServeArgs) -> CliResult {
    let path = a.public_keys.or(a.keys).ok_or("serve needs --public-keys or --keys")?;
    let (ctx, keys) = load_keys(&path)?;
    let keys = keys.public_only();
    let data = Dataset::from_bytes(&ctx, &read(&a.data)?).map_err(|e| format!("{}: {e}", a.data.display()))?;
    if !(a.expected_gap.is_finite() && a.expected_gap > 0.0) {
        return Err("--expected-gap must be positive".into());
    }
    let max_frame = max_frame_from_env()?;
    let ev = Evaluator::from_keys(Arc::clone(&ctx), &keys).map_err(|e| e.to_string())?;
    let listener = TcpListener::bind(&a.listen).map_err(|e| format!("cannot bind {}: {e}", a.listen))?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    println!("listening on {addr}");
    std::io::stdout().flush().ok();
    log::info!("serving n={} backend={} on {addr}", data.len(), ctx.tag());
    serve_tcp(
        listener,
        Arc::new(ev),
        Arc::new(data),
        TreeConfig { expected_gap: a.expected_gap },
        DEFAULT_TIMEOUT,
        max_frame,
        a.sessions,
    )
    .map_err(|e| e.to_string())?;
    Ok(EXIT_FOUND)
}

fn search(a: SearchArgs) -> CliResult {
    let (ctx, keys) = load_keys(&a.keys)?;
    let sk = keys.secret().map_err(|e| format!("{}: {e}", a.keys.display()))?;
    let zero = match a.epsilon {
        Some(eps) if eps > 0.0 && eps.is_finite() => ZeroTest::Threshold(eps),
        Some(_) => return Err("--epsilon must be positive".into()),
        None => ZeroTest::default_for(ctx.tag()),
    };
    let mode = a.mode.unwrap_or(Mode::default_for(ctx.tag()));
    let target = ctx.encrypt(&keys.public, a.target).map_err(|e| e.to_string())?;
    let mut ep = tcp_connect(&a.connect, DEFAULT_TIMEOUT)
        .map_err(|e| format!("cannot connect to {}: {e}", a.connect))?
        .with_max_frame(max_frame_from_env()?);
    let report = run_search(&mut ep, &ctx, sk, target, zero, mode).map_err(|e| e.to_string())?;
    if a.stats {
        eprintln!(
            "messages={} messages_wire={} bytes_up={} bytes_down={}",
            report.messages,
            report.wire_messages(),
            report.traffic.bytes_sent,
            report.traffic.bytes_received
        );
    }
    match report.outcome {
        SearchOutcome::Found(i) => {
            println!("{i}");
            Ok(EXIT_FOUND)
        }
        SearchOutcome::NotFound => {
            println!("not found");
            Ok(EXIT_NOT_FOUND)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    pub n_padded: usize,
    pub backend: String,
    pub messages_paper: u64,
    pub messages_wire: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub build_ms: f64,
    pub search_ms: f64,
    pub hmul_count: u64,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3},{:.3},{}",
            self.n,
            self.n_padded,
            self.backend,
            self.messages_paper,
            self.messages_wire,
            self.bytes_up,
            self.bytes_down,
            self.build_ms,
            self.search_ms,
            self.hmul_count
        )
    }

    /// Formula deviations, empty when the record is consistent.
    pub fn deviations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let expected = expected_message_count(self.n_padded as u64);
        if self.messages_paper != expected {
            out.push(format!("messages_paper {} != {expected}", self.messages_paper));
        }
        if self.messages_wire != expected + 1 {
            out.push(format!("messages_wire {} != {}", self.messages_wire, expected + 1));
        }
        if self.hmul_count != self.n_padded as u64 - 1 {
            out.push(format!("hmul_count {} != {}", self.hmul_count, self.n_padded - 1));
        }
        out
    }
}

/// Dataset of `n` values around a random target: one position holds the
/// target, every other value differs from it by a magnitude in [0.9, 1.1].
pub fn gap_dataset<R: Rng>(rng: &mut R, n: usize) -> (Vec<f64>, f64, usize) {
    let target = rng.gen_range(-1.0..=1.0);
    let hit = rng.gen_range(0..n);
    let values = (0..n)
        .map(|i| {
            if i == hit {
                target
            } else {
                let gap: f64 = rng.gen_range(0.9..=1.1);
                if rng.gen() {
                    target + gap
                } else {
                    target - gap
                }
            }
        })
        .collect();
    (values, target, hit)
}

fn bench_params(a: &BenchArgs, n_padded: usize) -> Result<(String, SchemeParams), String> {
    let name = match (&a.preset, a.backend) {
        (Some(p), _) => p.clone(),
        (None, Backend::Plain) => "plain".to_string(),
        (None, Backend::Ckks) => format!("desk-{}", n_padded.trailing_zeros().max(1)),
    };
    let params = SchemeParams::preset(&name).ok_or_else(|| format!("no preset '{name}' for n_padded={n_padded}"))?;
    let expected = match a.backend {
        Backend::Plain => crate::he::BackendTag::Plain,
        Backend::Ckks => crate::he::BackendTag::Ckks,
    };
    if params.tag() != expected {
        return Err(format!("preset '{name}' does not use the {expected} backend"));
    }
    Ok((name, params))
}

/// One bench trial over the in-process transport.
fn bench_trial(
    ctx: &Arc<HeContext>,
    keys: &KeyPair,
    n: usize,
    rng: &mut ChaCha20Rng,
) -> Result<(BenchRecord, bool), String> {
    let ev = Evaluator::from_keys(Arc::clone(ctx), keys).map_err(|e| e.to_string())?;
    let (values, target, hit) = gap_dataset(rng, n);
    let data = Arc::new(Dataset::encrypt(&ev, &values).map_err(|e| e.to_string())?);
    let target = ev.encrypt(target).map_err(|e| e.to_string())?;
    let sk = keys.secret().map_err(|e| e.to_string())?;
    let (client_end, server_end) = duplex(DEFAULT_TIMEOUT);
    let server_ev = ev.fork();
    let server = thread::spawn(move || {
        let mut ep = Endpoint::new(server_end, Role::Server);
        serve_connection(&mut ep, &server_ev, data, TreeConfig::default())
    });
    let mut ep = Endpoint::new(client_end, Role::Client);
    let start = Instant::now();
    let report = run_search(&mut ep, ctx, sk, target, ZeroTest::default_for(ctx.tag()), Mode::default_for(ctx.tag()));
    let elapsed = start.elapsed();
    drop(ep);
    let served = server.join().map_err(|_| "server thread panicked".to_string())?;
    let report = report.map_err(|e| e.to_string())?;
    let served = served.map_err(|e| e.to_string())?;
    let build_ms = served.build_time.as_secs_f64() * 1e3;
    let record = BenchRecord {
        n,
        n_padded: padded_size(n).0,
        backend: ctx.tag().to_string(),
        messages_paper: report.messages,
        messages_wire: report.wire_messages(),
        bytes_up: report.traffic.bytes_sent,
        bytes_down: report.traffic.bytes_received,
        build_ms,
        search_ms: (elapsed.as_secs_f64() * 1e3 - build_ms).max(0.0),
        hmul_count: served.hmul,
    };
    Ok((record, report.outcome == SearchOutcome::Found(hit)))
}

fn bench(a: BenchArgs) -> CliResult {
    if a.n.contains(&0) {
        return Err("--n values must be positive".into());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let mut keyring: HashMap<String, (Arc<HeContext>, KeyPair)> = HashMap::new();
    let mut csv = String::from(BENCH_HEADER);
    csv.push('\n');
    let mut regressions = Vec::new();
    for &n in &a.n {
        let (name, params) = bench_params(&a, padded_size(n).0)?;
        if !keyring.contains_key(&name) {
            let ctx = Arc::new(HeContext::new(params).map_err(|e| e.to_string())?);
            let keys = ctx.keygen(rng.gen()).map_err(|e| e.to_string())?;
            keyring.insert(name.clone(), (ctx, keys));
        }
        let (ctx, keys) = &keyring[&name];
        for trial in 0..a.trials {
            let (record, correct) = bench_trial(ctx, keys, n, &mut rng)?;
            let _ = writeln!(csv, "{}", record.csv_row());
            for d in record.deviations() {
                regressions.push(format!("n={n} trial={trial}: {d}"));
            }
            if !correct {
                regressions.push(format!("n={n} trial={trial}: wrong search result"));
            }
        }
    }
    match &a.out {
        Some(path) => write(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    if regressions.is_empty() {
        Ok(EXIT_FOUND)
    } else {
        for r in &regressions {
            eprintln!("regression: {r}");
        }
        Ok(EXIT_REGRESSION)
    }
}
