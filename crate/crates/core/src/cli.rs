//! `glyphgan` command line: train, sample, profile, compose, verify.
//!
//! Every option can also come from a `key = value` file given with
//! `--config` (keys are the long option names with `-` or `_`; `#` starts a
//! comment). Flags override the file, which overrides the defaults. The
//! effective configuration is printed to stderr before each run.
//!
//! Exit codes: 0 success, 1 invalid configuration or input value, 2 missing
//! or unreadable file, 3 failure while running.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::data::{
    encode_pgm, load_corpus, read_pgm, CharCode, Charset, CharsetKind, DataError, GlyphImage, IdxDataset,
};
use crate::gan::{sample_noise, GanModel};
use crate::profile::{
    converge, profile_from_corpus, ControllerState, ConvergenceStatus, GanGlyphs, GlyphSource, HandwritingProfile,
    ProfileError, StubGlyphs, DEFAULT_EPS_ANGLE, DEFAULT_EPS_SPACING, DEFAULT_ETA,
};
use crate::train::{verify, Checkpoint, TrainConfig, TrainError, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_RUN: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Run(_) => EXIT_RUN,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let msg = e.to_string();
        match e {
            TrainError::ConfigInvalid(_)
            | TrainError::CharsetTooSmall(_)
            | TrainError::DegenerateBatch(_)
            | TrainError::OutOfCharset(_)
            | TrainError::EmptyClass(_) => CliError::Config(msg),
            TrainError::Io(_) | TrainError::Corrupt(_) | TrainError::VersionMismatch { .. } | TrainError::Data(_) => {
                CliError::Io(msg)
            }
            TrainError::Gan(_) => CliError::Run(msg),
        }
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        let msg = e.to_string();
        match e {
            ProfileError::IgnoredPair(..)
            | ProfileError::NoProfileData(..)
            | ProfileError::OutOfCharset(_)
            | ProfileError::InvalidConfig(_) => CliError::Config(msg),
            ProfileError::Io(_) | ProfileError::Corrupt(_) | ProfileError::VersionMismatch { .. } => CliError::Io(msg),
            ProfileError::Metrics(_) | ProfileError::Gan(_) | ProfileError::Data(_) => CliError::Run(msg),
        }
    }
}

/// Errors while reading input files.
fn input_error(e: DataError) -> CliError {
    match e {
        DataError::OutOfCharset(_) | DataError::UnknownCharset(_) => CliError::Config(e.to_string()),
        other => CliError::Io(other.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "glyphgan",
    version,
    about = "Character-conditioned handwriting GAN and word composer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on an IDX image/label pair; writes final.ckpt and train_log.csv
    Train(TrainArgs),
    /// Write a grid of generated glyphs (rows = characters, columns = noise draws)
    Sample(SampleArgs),
    /// Measure a word-image corpus into a spacing/angle profile
    Profile(ProfileArgs),
    /// Compose a word and run the spacing/angle controller
    Compose(ComposeArgs),
    /// Print the discriminator score of an image claimed to be a character
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// digits | letters
    #[arg(long)]
    charset: Option<String>,
    /// Use only the first N samples (0 = all)
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_g: Option<f64>,
    #[arg(long)]
    lr_d: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    lambda_mis: Option<f64>,
    /// Also write checkpoint-<step>.ckpt every N steps (0 = off)
    #[arg(long)]
    checkpoint_interval: Option<u64>,
    /// Continue from this checkpoint
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Characters, one grid row each (default: the whole charset)
    #[arg(long)]
    chars: Option<String>,
    #[arg(long)]
    per_char: Option<usize>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus manifest (word, writer, file per line)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    charset: Option<String>,
}

#[derive(Debug, Args)]
struct ComposeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Solid-box glyphs instead of a checkpoint
    #[arg(long)]
    stub: bool,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    word: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eps_spacing: Option<f64>,
    #[arg(long)]
    eps_angle: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Fail on pairs without profile data instead of using defaults
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// PGM image
    #[arg(long)]
    image: Option<PathBuf>,
    /// Claimed character
    #[arg(long = "char")]
    claimed: Option<String>,
}

/// Flag, config-file and default resolution for one command.
struct Settings {
    file: BTreeMap<String, String>,
    effective: Vec<(String, String)>,
}

impl Settings {
    fn load(path: Option<&Path>, known: &[&str]) -> Result<Self, CliError> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            file = parse_config(&text)?;
        }
        if let Some(k) = file.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown configuration key {k:?}")));
        }
        Ok(Self {
            file,
            effective: Vec::new(),
        })
    }

    fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = match (flag, self.file.get(key)) {
            (Some(v), _) => v,
            (None, Some(s)) => s
                .parse()
                .map_err(|_| CliError::Config(format!("bad value for {key}: {s:?}")))?,
            (None, None) => default,
        };
        self.effective.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    fn flag(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        self.value(key, flag.then_some(true), false)
    }

    fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let v = match (flag, self.file.get(key)) {
            (Some(v), _) => Some(v),
            (None, Some(s)) => Some(
                s.parse()
                    .map_err(|_| CliError::Config(format!("bad value for {key}: {s:?}")))?,
            ),
            (None, None) => None,
        };
        if let Some(v) = &v {
            self.effective.push((key.to_string(), v.to_string()));
        }
        Ok(v)
    }

    fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::Config(format!("--{} is required", key.replace('_', "-"))))
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let p = self.required(key, flag.map(|p| p.display().to_string()))?;
        existing(PathBuf::from(p))
    }

    fn print(&self, command: &str) {
        eprintln!("# glyphgan {command}");
        for (k, v) in &self.effective {
            eprintln!("{k} = {v}");
        }
    }
}

/// Flat `key = value` lines; `#` comments and blank lines are skipped and
/// `-` in keys is read as `_`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim().replace('-', "_");
        if k.is_empty() || out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Config(format!(
                "config line {}: empty or repeated key {k:?}",
                i + 1
            )));
        }
    }
    Ok(out)
}

fn existing(p: PathBuf) -> Result<PathBuf, CliError> {
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::Io(format!("{}: no such file", p.display())))
    }
}

fn out_dir(settings: &mut Settings, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(settings.value("out", flag.map(|p| p.display().to_string()), ".".to_string())?);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn charset(settings: &mut Settings, flag: Option<String>, default: &str) -> Result<Charset, CliError> {
    let name = settings.value("charset", flag, default.to_string())?;
    let kind: CharsetKind = name.parse().map_err(input_error)?;
    Ok(Charset::new(kind))
}

fn codes(charset: &Charset, text: &str) -> Result<Vec<CharCode>, CliError> {
    text.chars()
        .map(|c| {
            u8::try_from(c as u32)
                .ok()
                .and_then(|b| charset.code(b).ok())
                .ok_or_else(|| CliError::Config(format!("{c:?} is outside the {} charset", charset.kind())))
        })
        .collect()
}

const COMMON_KEYS: [&str; 2] = ["out", "seed"];

fn keys(extra: &[&'static str]) -> Vec<&'static str> {
    COMMON_KEYS.iter().chain(extra).copied().collect()
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut s = Settings::load(
        a.common.config.as_deref(),
        &keys(&[
            "images",
            "labels",
            "charset",
            "limit",
            "epochs",
            "batch_size",
            "lr_g",
            "lr_d",
            "beta1",
            "beta2",
            "lambda_mis",
            "checkpoint_interval",
            "resume",
        ]),
    )?;
    let images = s.path("images", a.images)?;
    let labels = s.path("labels", a.labels)?;
    let mut cfg = TrainConfig::new(charset(&mut s, a.charset, "digits")?);
    let limit = s.value("limit", a.limit, 0)?;
    cfg.epochs = s.value("epochs", a.epochs, cfg.epochs)?;
    cfg.batch_size = s.value("batch_size", a.batch_size, cfg.batch_size)?;
    cfg.seed = s.value("seed", a.common.seed, cfg.seed)?;
    cfg.lr_g = s.value("lr_g", a.lr_g, cfg.lr_g)?;
    cfg.lr_d = s.value("lr_d", a.lr_d, cfg.lr_d)?;
    cfg.beta1 = s.value("beta1", a.beta1, cfg.beta1)?;
    cfg.beta2 = s.value("beta2", a.beta2, cfg.beta2)?;
    cfg.lambda_mis = s.value("lambda_mis", a.lambda_mis, cfg.lambda_mis)?;
    cfg.checkpoint_interval = s.value("checkpoint_interval", a.checkpoint_interval, cfg.checkpoint_interval)?;
    let resume = s
        .optional("resume", a.resume.map(|p| p.display().to_string()))?
        .map(PathBuf::from);
    let out = out_dir(&mut s, a.common.out)?;
    cfg.output_dir = Some(out.clone());
    s.print("train");
    cfg.validate()?;

    let mut data = IdxDataset::load(&images, &labels).map_err(input_error)?;
    if limit > 0 {
        data = data.take(limit.min(data.count()));
    }
    let mut trainer = match resume {
        Some(p) => Trainer::resume(Checkpoint::load(&existing(p)?)?, cfg)?,
        None => Trainer::new(cfg, &data)?,
    };
    trainer.run(&data)?;
    trainer.checkpoint().save(&out.join("final.ckpt"))?;
    trainer.log().write_csv(&out.join("train_log.csv"))?;
    if let Some(last) = trainer.log().records.last() {
        eprintln!(
            "step {}: d_loss {:.4} g_loss {:.4}",
            last.step + 1,
            last.d_loss(trainer.config.lambda_mis),
            last.g_loss
        );
    }
    Ok(())
}

fn load_model(s: &mut Settings, flag: Option<PathBuf>) -> Result<GanModel<f32>, CliError> {
    let path = s.path("checkpoint", flag)?;
    Ok(Checkpoint::load(&path)?.model)
}

fn cmd_sample(a: SampleArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref(), &keys(&["checkpoint", "chars", "per_char"]))?;
    let model = load_model(&mut s, a.checkpoint)?;
    let all = String::from_utf8_lossy(model.charset().chars()).into_owned();
    let chars = s.value("chars", a.chars, all)?;
    let per_char = s.value("per_char", a.per_char, 8)?;
    let seed = s.value("seed", a.common.seed, 1)?;
    let out = out_dir(&mut s, a.common.out)?;
    s.print("sample");
    if chars.is_empty() || per_char == 0 {
        return Err(CliError::Config("need at least one character and one draw".into()));
    }
    let codes = codes(model.charset(), &chars)?;
    let noise = sample_noise(per_char, model.config.noise_dim, seed);
    let cell = model.config.image_size;
    let mut grid = GlyphImage::blank(codes.len() * cell, per_char * cell);
    for (row, &c) in codes.iter().enumerate() {
        let glyphs = model
            .generate_batch(&vec![c; per_char], &noise)
            .map_err(|e| CliError::Run(e.to_string()))?;
        for (col, g) in glyphs.iter().enumerate() {
            for y in 0..cell {
                for x in 0..cell {
                    grid.set(row * cell + y, col * cell + x, g.get(y, x));
                }
            }
        }
    }
    write(&out.join("samples.pgm"), &encode_pgm(&grid))
}

fn cmd_profile(a: ProfileArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref(), &keys(&["manifest", "charset"]))?;
    let manifest = s.path("manifest", a.manifest)?;
    let charset = charset(&mut s, a.charset, "letters")?;
    let out = out_dir(&mut s, a.common.out)?;
    s.print("profile");
    let corpus = load_corpus(&manifest, &charset).map_err(input_error)?;
    if corpus.is_empty() {
        return Err(CliError::Config(format!("{}: corpus is empty", manifest.display())));
    }
    let (profile, summary) = profile_from_corpus(&corpus, &charset)?;
    profile.save(&out.join("profile.bin"))?;
    let cov = profile.coverage();
    println!(
        "words used {} skipped {}; pairs {}; cells covered: layer0 {} layer1 {} (of {} each)",
        summary.words_used,
        summary.words_skipped,
        summary.pairs_observed,
        cov[0],
        cov[1],
        crate::profile::SIDE * crate::profile::SIDE
    );
    Ok(())
}

fn cmd_compose(a: ComposeArgs) -> Result<(), CliError> {
    let mut s = Settings::load(
        a.common.config.as_deref(),
        &keys(&[
            "checkpoint",
            "stub",
            "profile",
            "word",
            "eta",
            "eps_spacing",
            "eps_angle",
            "max_iters",
            "strict",
        ]),
    )?;
    let stub = s.flag("stub", a.stub)?;
    let model = if stub {
        None
    } else {
        Some(load_model(&mut s, a.checkpoint)?)
    };
    let profile = HandwritingProfile::load(&s.path("profile", a.profile)?)?;
    let word: String = s.required("word", a.word)?;
    let seed = s.value("seed", a.common.seed, 1)?;
    let mut state = ControllerState::new(
        s.value("eta", a.eta, DEFAULT_ETA)?,
        s.value("eps_spacing", a.eps_spacing, DEFAULT_EPS_SPACING)?,
        s.value("eps_angle", a.eps_angle, DEFAULT_EPS_ANGLE)?,
    )?;
    state.strict = s.flag("strict", a.strict)?;
    let max_iters = s.value("max_iters", a.max_iters, 50)?;
    let out = out_dir(&mut s, a.common.out)?;
    s.print("compose");

    let mut stubs;
    let mut gan;
    let source: &mut dyn GlyphSource = match &model {
        Some(m) => {
            gan = GanGlyphs { model: m, seed };
            &mut gan
        }
        None => {
            stubs = StubGlyphs::new(Charset::new(profile.kind()), 32, (8, 23, 6, 25));
            &mut stubs
        }
    };
    codes(source.charset(), &word)?;
    let outcome = converge(&word, source, &profile, state, max_iters)?;

    let cols: Vec<String> = word
        .chars()
        .collect::<Vec<_>>()
        .windows(2)
        .enumerate()
        .map(|(i, w)| format!("{}{}@{i}", w[0], w[1]))
        .collect();
    let csv = |pick: fn(&crate::profile::IterationRecord) -> &Vec<f64>| {
        let mut text = std::iter::once("iteration".to_string())
            .chain(cols.iter().cloned())
            .collect::<Vec<_>>()
            .join(",");
        text.push('\n');
        for rec in &outcome.history {
            let vals = pick(rec).iter().map(|v| v.to_string());
            text.push_str(
                &std::iter::once(rec.iteration.to_string())
                    .chain(vals)
                    .collect::<Vec<_>>()
                    .join(","),
            );
            text.push('\n');
        }
        text
    };
    write(&out.join("compose.pgm"), &encode_pgm(&outcome.result.canvas))?;
    write(&out.join("objectives.csv"), csv(|r| &r.spacing_objectives).as_bytes())?;
    write(&out.join("angles.csv"), csv(|r| &r.angle_objectives).as_bytes())?;
    let status = match outcome.status {
        ConvergenceStatus::Converged => "converged",
        ConvergenceStatus::NonConvergence => "not converged",
    };
    println!(
        "{status} after {} iterations; max spacing objective {} px, max angle objective {} deg",
        outcome.iterations,
        outcome.result.max_spacing_objective(),
        outcome.result.max_angle_objective()
    );
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), CliError> {
    let mut s = Settings::load(a.common.config.as_deref(), &keys(&["checkpoint", "image", "char"]))?;
    let model = load_model(&mut s, a.checkpoint)?;
    let image = read_pgm(&s.path("image", a.image)?).map_err(input_error)?;
    let claimed: String = s.required("char", a.claimed)?;
    s.print("verify");
    let c = match codes(model.charset(), &claimed)?.as_slice() {
        &[c] => c,
        _ => return Err(CliError::Config(format!("--char takes one character, got {claimed:?}"))),
    };
    println!("{}", verify(&model, &image, c)?);
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code; diagnostics go to stderr.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Compose(a) => cmd_compose(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_syntax() {
        let c = parse_config("# run\nepochs = 3\nbatch-size=16  # small\n\n").unwrap();
        assert_eq!(c["epochs"], "3");
        assert_eq!(c["batch_size"], "16");
        assert!(parse_config("epochs 3").is_err());
        assert!(parse_config("a=1\na=2").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["glyphgan"]), EXIT_CONFIG);
        assert_eq!(run(["glyphgan", "train", "--epochs", "x"]), EXIT_CONFIG);
        assert_eq!(run(["glyphgan", "--help"]), EXIT_OK);
    }
}
