//! `mcs`: key generation, encryption, the chosen-plaintext attack, sub-key
//! recovery and the statistics harness.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::SeedableRng;

use mcs_core::attack::{ees_decrypt, run_attack_logged, AttackError, CipherOracle, EncryptionOracle};
use mcs_core::formats::{emit_key_file, parse_key_file, read_equivalent_key, write_equivalent_key, PgmImage};
use mcs_core::keyrecovery::{grade, recover, RecoveryReport, SOffset};
use mcs_core::stats;
use mcs_core::{SecretKey, BITS_PER_BLOCK, PLAIN_BLOCK};

#[derive(Parser)]
#[command(name = "mcs", version, about = "MCS cipher, its differential attack and sub-key recovery")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a random legal key.
    Keygen {
        /// Seed for a reproducible key; OS entropy otherwise.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Encrypt a raw file or a PGM image.
    Encrypt {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, short)]
        key: PathBuf,
        /// Zero-pad to a multiple of 15 bytes.
        #[arg(long)]
        pad: bool,
        #[arg(long)]
        pgm: bool,
    },
    /// Decrypt a raw file or a PGM image.
    Decrypt {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, short)]
        key: PathBuf,
        /// Keep only the first LEN plaintext bytes.
        #[arg(long, value_name = "LEN")]
        trim: Option<usize>,
        #[arg(long)]
        pgm: bool,
    },
    /// Encrypt standard input to standard output (for `attack --oracle-cmd`).
    Oracle {
        #[arg(long, short)]
        key: PathBuf,
    },
    /// Run the seven-plaintext attack and write an equivalent key.
    Attack {
        /// Key for the built-in oracle; the attack itself never sees it.
        #[arg(long, short, required_unless_present = "oracle_cmd", conflicts_with = "oracle_cmd")]
        key: Option<PathBuf>,
        /// Shell command reading a plaintext on stdin and writing its ciphertext.
        #[arg(long)]
        oracle_cmd: Option<String>,
        /// Base plaintext (its length fixes how many blocks the key covers).
        #[arg(long)]
        base: PathBuf,
        /// Read the base, verify ciphertext and expected plaintext as PGM.
        #[arg(long)]
        pgm: bool,
        /// Zero-pad the base to a multiple of 15 bytes.
        #[arg(long)]
        pad: bool,
        #[arg(long, short)]
        out: PathBuf,
        /// Ciphertext to decrypt with the recovered key.
        #[arg(long, requires = "expect")]
        verify: Option<PathBuf>,
        /// Plaintext the verify ciphertext must decrypt to.
        #[arg(long, requires = "verify")]
        expect: Option<PathBuf>,
    },
    /// Recover rotation sub-keys and controlling bits from an equivalent key.
    RecoverSubkeys {
        eqkey: PathBuf,
        /// True key, to grade the recovered items.
        #[arg(long, short)]
        key: Option<PathBuf>,
    },
    /// Statistics runs.
    Stats {
        #[arg(value_enum)]
        which: StatsKind,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Blocks per key for `ambiguity`.
        #[arg(long, default_value_t = 1024)]
        blocks: usize,
        /// `stilde`: only use blocks whose vertical amounts cover the whole set.
        #[arg(long)]
        forced: bool,
    },
    /// Time encryption, decryption and the attack.
    Bench {
        /// Plaintext sizes in bytes, each a multiple of 15.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsKind {
    Prop1,
    Ambiguity,
    Stilde,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Keygen { seed, out } => keygen(seed, out.as_deref()),
        Cmd::Encrypt {
            input,
            output,
            key,
            pad,
            pgm,
        } => encrypt(&input, &output, &load_key(&key)?, pad, pgm),
        Cmd::Decrypt {
            input,
            output,
            key,
            trim,
            pgm,
        } => decrypt(&input, &output, &load_key(&key)?, trim, pgm),
        Cmd::Oracle { key } => oracle(&load_key(&key)?),
        Cmd::Attack {
            key,
            oracle_cmd,
            base,
            pgm,
            pad,
            out,
            verify,
            expect,
        } => {
            let mut oracle: Box<dyn EncryptionOracle> = match (key, oracle_cmd) {
                (Some(k), _) => Box::new(CipherOracle::new(&load_key(&k)?)),
                (None, Some(cmd)) => Box::new(SubprocessOracle { cmd }),
                (None, None) => bail!("need --key or --oracle-cmd"),
            };
            let check = verify.zip(expect);
            attack(oracle.as_mut(), &base, pgm, pad, &out, check)
        }
        Cmd::RecoverSubkeys { eqkey, key } => {
            let ek = read_equivalent_key(&read(&eqkey)?)?;
            let key = key.map(|k| load_key(&k)).transpose()?;
            let report = recover(&ek);
            print!("{}", render_report(&report, key.as_ref()));
            Ok(())
        }
        Cmd::Stats {
            which,
            trials,
            seed,
            blocks,
            forced,
        } => {
            match which {
                StatsKind::Prop1 => stats_prop1(trials, seed),
                StatsKind::Ambiguity => stats_ambiguity(trials, blocks, seed),
                StatsKind::Stilde => stats_stilde(trials, seed, forced),
            }
            Ok(())
        }
        Cmd::Bench { sizes, reps, seed } => bench(&sizes, reps, seed),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

fn load_key(path: &Path) -> Result<SecretKey> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_key_file(&text).with_context(|| format!("parsing key file {}", path.display()))
}

fn pad_to_block(data: &mut Vec<u8>) {
    data.resize(data.len().div_ceil(PLAIN_BLOCK) * PLAIN_BLOCK, 0);
}

fn keygen(seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let key = match seed {
        Some(s) => SecretKey::random(&mut StdRng::seed_from_u64(s)),
        None => SecretKey::random(&mut rand::rng()),
    };
    let text = emit_key_file(&key);
    match out {
        Some(p) => write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Pixel stream of a PGM with its recorded padding removed.
fn pgm_payload(img: &PgmImage) -> Result<&[u8]> {
    let pad = img.recorded_pad().unwrap_or(0);
    if pad > img.pixels.len() {
        bail!("recorded pad {pad} exceeds {} pixels", img.pixels.len());
    }
    Ok(&img.pixels[..img.pixels.len() - pad])
}

fn plain_dims(img: &PgmImage) -> Option<(usize, usize)> {
    img.comments.iter().find_map(|c| {
        let (w, h) = c.trim().strip_prefix("plain=")?.split_once('x')?;
        Some((w.parse().ok()?, h.parse().ok()?))
    })
}

fn encrypt(input: &Path, output: &Path, key: &SecretKey, pad: bool, pgm: bool) -> Result<()> {
    let raw = read(input)?;
    if pgm {
        let img = PgmImage::parse(&raw)?;
        let mut data = img.pixels.clone();
        pad_to_block(&mut data);
        let ct = mcs_core::cipher::encrypt(&data, key)?;
        let mut out = PgmImage::from_stream(img.width, &ct)?;
        out.comments.push(format!(" plain={}x{}", img.width, img.height));
        write(output, &out.to_bytes())
    } else {
        let mut data = raw;
        if pad {
            pad_to_block(&mut data);
        }
        write(output, &mcs_core::cipher::encrypt(&data, key)?)
    }
}

fn decrypt(input: &Path, output: &Path, key: &SecretKey, trim: Option<usize>, pgm: bool) -> Result<()> {
    let raw = read(input)?;
    if pgm {
        let img = PgmImage::parse(&raw)?;
        let mut pt = mcs_core::cipher::decrypt(pgm_payload(&img)?, key)?;
        let out = match plain_dims(&img) {
            Some((w, h)) if w * h <= pt.len() => {
                pt.truncate(w * h);
                PgmImage::new(w, h, pt)?
            }
            _ => {
                if let Some(t) = trim {
                    pt.truncate(t);
                }
                PgmImage::from_stream(img.width, &pt)?
            }
        };
        write(output, &out.to_bytes())
    } else {
        let mut pt = mcs_core::cipher::decrypt(&raw, key)?;
        if let Some(t) = trim {
            pt.truncate(t);
        }
        write(output, &pt)
    }
}

fn oracle(key: &SecretKey) -> Result<()> {
    let mut plain = Vec::new();
    std::io::stdin().read_to_end(&mut plain)?;
    let ct = mcs_core::cipher::encrypt(&plain, key)?;
    std::io::stdout().write_all(&ct)?;
    Ok(())
}

/// Oracle that runs a shell command per query.
struct SubprocessOracle {
    cmd: String,
}

impl EncryptionOracle for SubprocessOracle {
    fn query(&mut self, plaintext: &[u8]) -> Result<Vec<u8>, AttackError> {
        let err = |e: std::io::Error| AttackError::Oracle(format!("{}: {e}", self.cmd));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(err)?;
        let mut stdin = child.stdin.take().expect("piped");
        let data = plaintext.to_vec();
        let feeder = std::thread::spawn(move || stdin.write_all(&data));
        let out = child.wait_with_output().map_err(err)?;
        feeder
            .join()
            .map_err(|_| AttackError::Oracle("stdin writer panicked".into()))?
            .map_err(err)?;
        if !out.status.success() {
            return Err(AttackError::Oracle(format!("{} exited with {}", self.cmd, out.status)));
        }
        Ok(out.stdout)
    }
}

fn read_payload(path: &Path, pgm: bool) -> Result<Vec<u8>> {
    let raw = read(path)?;
    if pgm {
        Ok(pgm_payload(&PgmImage::parse(&raw)?)?.to_vec())
    } else {
        Ok(raw)
    }
}

fn attack(
    oracle: &mut dyn EncryptionOracle,
    base: &Path,
    pgm: bool,
    pad: bool,
    out: &Path,
    check: Option<(PathBuf, PathBuf)>,
) -> Result<()> {
    let mut base = read_payload(base, pgm)?;
    if pad || pgm {
        pad_to_block(&mut base);
    }
    let mut queries = 0usize;
    let mut counting = |p: &[u8]| {
        queries += 1;
        oracle.query(p)
    };
    let t = Instant::now();
    let (ek, log) = run_attack_logged(&mut counting, &base)?;
    let elapsed = t.elapsed();
    write(out, &write_equivalent_key(&ek))?;
    println!("queries: {queries}");
    println!("blocks: {}", log.num_blocks);
    println!("ambiguous expansion indices: {}", log.ambiguous_blocks.len());
    for k in &log.ambiguous_blocks {
        println!("  block {k}: resolved to l = {}", ek.blocks[*k].l.map_or("-".into(), |l| l.to_string()));
    }
    println!("blocks with an unknown row: {}", log.blocks_with_unknown_rows);
    println!("time: {:.3} s", elapsed.as_secs_f64());
    println!("equivalent key written to {}", out.display());
    if let Some((ct_path, pt_path)) = check {
        let ct = read_payload(&ct_path, pgm)?;
        let expect = read_payload(&pt_path, pgm)?;
        let pt = ees_decrypt(&ct, &ek)?;
        let n = expect.len().min(pt.len());
        let errors = pt[..n].iter().zip(&expect[..n]).filter(|(a, b)| a != b).count() + expect.len().abs_diff(n);
        if errors == 0 {
            println!("verify: {} bytes match", expect.len());
        } else {
            bail!("verify: {errors} of {} plaintext bytes differ", expect.len());
        }
    }
    Ok(())
}

fn render_report(report: &RecoveryReport, key: Option<&SecretKey>) -> String {
    let mut s = String::new();
    let n = report.num_blocks();
    s += &format!("blocks: {n}\n");
    for h in 0..2 {
        let cands: Vec<String> = report.alpha_beta[h].iter().map(|(a, b)| format!("({a},{b})")).collect();
        let cands = if cands.is_empty() { "none (illegal set)".to_string() } else { cands.join(" ") };
        s += &format!("half {}: R = {}; (alpha, beta) candidates: {cands}\n", h + 1, report.rotation_sets[h]);
    }
    let mut unique = [0usize; 2];
    for offs in &report.s_offsets {
        for h in 0..2 {
            if matches!(offs[h], SOffset::Unique(_)) {
                unique[h] += 1;
            }
        }
    }
    s += &format!(
        "row offsets determined: half 1 {}/{n}, half 2 {}/{n}\n",
        unique[0], unique[1]
    );
    let total = n * BITS_PER_BLOCK;
    let known = report.known_bits();
    s += &format!(
        "controlling bits determined: {known} of {total} ({:.2}%)\n",
        100.0 * known as f64 / total.max(1) as f64
    );
    let narrowed = report.pairs.iter().filter(|p| p.admissible.len() < 4).count();
    s += &format!(
        "rotation bit pairs constrained: {} ({narrowed} narrowed to two values)\n",
        report.pairs.len()
    );
    if let Some(key) = key {
        let g = grade(report, key);
        let yn = |b: bool| if b { "yes" } else { "no" };
        s += &format!(
            "grade: rotation sets correct: {}; true (alpha, beta) among candidates: {}\n",
            yn(g.rotation_sets_correct),
            yn(g.alpha_beta_contains_truth)
        );
        s += &format!("grade: bits assigned {}, wrong {}\n", g.assigned, g.wrong_bits);
        s += &format!("grade: pair constraints {}, violated {}\n", g.pairs, g.violated_pairs);
    }
    s
}

fn stats_prop1(trials: u64, seed: u64) {
    let rows = stats::prop1_table(trials, seed);
    println!("alpha beta    p  n   formula  empirical  3sigma  ok");
    for r in &rows {
        println!(
            "{:>5} {:>4} {:>4} {:>2}  {:>8.5}  {:>9.5}  {:>6.4}  {}",
            r.alpha,
            r.beta,
            r.p,
            r.n,
            r.formula,
            r.empirical,
            3.0 * r.sigma(),
            if r.agrees() { "yes" } else { "NO" }
        );
    }
    let bad = rows.iter().filter(|r| !r.agrees()).count();
    println!("cells outside 3 sigma: {bad} of {}", rows.len());
}

fn stats_ambiguity(keys: u64, blocks: usize, seed: u64) {
    let s = stats::ambiguity_rate(keys as usize, blocks, seed);
    println!("keys: {}  blocks: {}", s.keys, s.blocks);
    println!("ambiguous expansion indices: {}  rate: {:.4e}", s.ambiguous, s.rate());
    println!("bound 15/16^5 = {:.4e}", stats::AMBIGUITY_BOUND);
    println!("failed runs: {}", s.failures);
}

fn stats_stilde(trials: u64, seed: u64, forced: bool) {
    let s = stats::stilde_rate(trials, seed, forced);
    let used = s.trials - s.skipped;
    let sigma = stats::binomial_sigma(stats::STILDE_MODEL, used.max(1));
    println!("keys: {}  used: {used}  full-set observation forced: {forced}", s.trials);
    println!("non-unique row offsets: {}  rate: {:.4}", s.non_unique, s.rate());
    println!(
        "model value {:.4} (3 sigma = {:.4}); lower bound {:.4}",
        stats::STILDE_MODEL,
        3.0 * sigma,
        stats::STILDE_LOWER_BOUND
    );
    println!("shift-symmetric rotation sets: {:.4} of legal pairs", stats::stilde_symmetric_fraction());
    for ((a, b), n, amb) in &s.per_pair {
        println!("  ({a},{b}): {amb}/{n}");
    }
}

fn bench(sizes: &[usize], reps: usize, seed: u64) -> Result<()> {
    if let Some(bad) = sizes.iter().find(|s| *s % PLAIN_BLOCK != 0) {
        bail!("size {bad} is not a multiple of {PLAIN_BLOCK}");
    }
    let rows = stats::bench(sizes, reps, seed)?;
    println!("{:>10} {:>12} {:>12} {:>12} {:>8}", "bytes", "encrypt_ms", "decrypt_ms", "attack_ms", "ratio");
    for r in &rows {
        println!(
            "{:>10} {:>12.3} {:>12.3} {:>12.3} {:>8.2}",
            r.bytes,
            r.encrypt.as_secs_f64() * 1e3,
            r.decrypt.as_secs_f64() * 1e3,
            r.attack.as_secs_f64() * 1e3,
            r.attack.as_secs_f64() / r.encrypt.as_secs_f64().max(1e-12)
        );
    }
    if rows.len() >= 2 {
        let ratios: Vec<String> = stats::doubling_ratios(&rows).iter().map(|r| format!("{r:.2}")).collect();
        let (a, b, worst) = stats::linear_fit(&rows);
        println!("successive attack-time ratios: {}", ratios.join(" "));
        println!(
            "linear fit: {:.3} ms + {:.3} us/byte, largest relative residual {:.3}",
            a * 1e3,
            b * 1e6,
            worst
        );
    }
    Ok(())
}
