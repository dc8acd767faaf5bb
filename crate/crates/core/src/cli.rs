//! The `les` command.
//!
//! Exit codes: 0 ok, 1 I/O or failed check, 2 ingestion (and usage), 3 stats or
//! feature table, 4 injection target, 5 CDAN params or shapes.
//!
//! Every command computes all of its outputs before writing any of them, and
//! each file is written to a temporary sibling and renamed into place.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::au::{AuSequence, Emotion, AU_COUNT};
use crate::cdan::{self, CdanError, CdanParams, ExprCoeff, ParamsError, Sample, TrainConfig};
use crate::ingest::{self, IngestError};
use crate::injector::{self, InjectError, InjectionTarget};
use crate::les::{self, ActVector, IsoVector, LesError, LesVector};
use crate::stats::{self, ClusterMethod, DatasetStats, FeatureTable, Opt2Mode, StatsError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INGEST: i32 = 2;
pub const EXIT_STATS: i32 = 3;
pub const EXIT_TARGET: i32 = 4;
pub const EXIT_PARAMS: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        Self::new(EXIT_INGEST, e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        Self::new(EXIT_STATS, e.to_string())
    }
}

impl From<LesError> for CliError {
    fn from(e: LesError) -> Self {
        Self::new(EXIT_STATS, e.to_string())
    }
}

impl From<InjectError> for CliError {
    fn from(e: InjectError) -> Self {
        let code = match e {
            InjectError::Stats(_) | InjectError::Les(_) => EXIT_STATS,
            _ => EXIT_TARGET,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ParamsError> for CliError {
    fn from(e: ParamsError) -> Self {
        Self::new(EXIT_PARAMS, e.to_string())
    }
}

impl From<CdanError> for CliError {
    fn from(e: CdanError) -> Self {
        Self::new(EXIT_PARAMS, e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "les",
    version,
    about = "Linear emotion space tools for OpenFace AU sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit dataset statistics and the anchor feature table from a labeled manifest.
    Fit(FitArgs),
    /// Apply an emotion-level or AU-bias edit to an AU CSV.
    Inject(InjectArgs),
    /// Outlier, isolation and clustering reports.
    Diagnose {
        #[command(subcommand)]
        command: DiagnoseCommand,
    },
    /// Cross-dimension attention net utilities.
    Cdan {
        #[command(subcommand)]
        command: CdanCommand,
    },
    /// Write the LES vectors of a labeled corpus as CSV (`e1..e41`).
    Export(ExportArgs),
    /// Write a seeded synthetic corpus and its manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Opt2Arg {
    Literal,
    Centered,
}

impl From<Opt2Arg> for Opt2Mode {
    fn from(a: Opt2Arg) -> Self {
        match a {
            Opt2Arg::Literal => Opt2Mode::Literal,
            Opt2Arg::Centered => Opt2Mode::Centered,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_stats: PathBuf,
    #[arg(long)]
    pub out_table: PathBuf,
    #[arg(long, value_enum, default_value = "literal")]
    pub opt2: Opt2Arg,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub table: PathBuf,
    /// Target emotion (with --level).
    #[arg(long, requires = "level", conflicts_with_all = ["au", "replay"])]
    pub emo: Option<String>,
    #[arg(long, requires = "emo", allow_negative_numbers = true)]
    pub level: Option<f64>,
    /// 1-based canonical AU position (with --bias).
    #[arg(long, requires = "bias", conflicts_with = "replay")]
    pub au: Option<usize>,
    #[arg(long, requires = "au", allow_negative_numbers = true)]
    pub bias: Option<f64>,
    /// Re-apply the edits recorded in a previous trace.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Emotion label of the input sequence (neutral when omitted).
    #[arg(long)]
    pub source_emotion: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_trace: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseCommand {
    /// Flag anchor coordinates that differ significantly from zero.
    Outliers(OutlierArgs),
    /// Survey inner/outer pair distances of isolation vectors.
    Isolation(IsolationArgs),
    /// Cluster corpus frames and score the partition.
    Clustering(ClusteringArgs),
}

#[derive(Debug, Args)]
pub struct OutlierArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, conflicts_with = "confidence", default_value_t = 3.291)]
    pub z: f64,
    /// Two-sided confidence level, converted to z.
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Sample size for every row instead of the anchor frame counts.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IsolationArgs {
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    #[arg(long, env = "LES_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Space {
    Action,
    Isolation,
    Les,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Kmeans,
    Gmm,
}

#[derive(Debug, Args)]
pub struct ClusteringArgs {
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "kmeans")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "action")]
    pub space: Space,
    #[arg(long, env = "LES_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, env = "LES_SEED", default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub sequences_per_class: usize,
    #[arg(long, default_value_t = 30)]
    pub frames: usize,
}

#[derive(Debug, Subcommand)]
pub enum CdanCommand {
    /// Xavier-initialized parameters.
    Init {
        #[arg(long, env = "LES_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serial inference: reads `{"u": [17], "v": [24], "beta": [64]}`, writes beta''.
    Infer {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long)]
        params: PathBuf,
        /// Sample JSON with u, v, beta and target; random when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = cdan::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, env = "LES_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Train on a JSON-lines dataset, or on the linear toy fixture.
    TrainToy(TrainArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// JSON-lines samples; the linear fixture is used when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.86)]
    pub decay: f64,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    /// Train both levels end to end instead of level 1 then level 2.
    #[arg(long)]
    pub joint: bool,
    #[arg(long, env = "LES_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub loss_csv: PathBuf,
}

/// Parse `args` (program name first) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INGEST } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Inject(a) => cmd_inject(&a),
        Command::Diagnose { command } => cmd_diagnose(&command),
        Command::Cdan { command } => cmd_cdan(&command),
        Command::Export(a) => cmd_export(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::new(EXIT_IO, format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn write_all(outputs: &[(&Path, &[u8])]) -> Result<(), CliError> {
    for (path, bytes) in outputs {
        write_atomic(path, bytes)?;
    }
    Ok(())
}

fn read_text(path: &Path, code: i32) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::new(code, format!("{}: {e}", path.display())))
}

fn load_stats(path: &Path) -> Result<DatasetStats, CliError> {
    DatasetStats::from_json(&read_text(path, EXIT_STATS)?)
        .map_err(|e| CliError::new(EXIT_STATS, format!("{}: {e}", path.display())))
}

fn load_table(path: &Path) -> Result<FeatureTable, CliError> {
    FeatureTable::from_json(&read_text(path, EXIT_STATS)?)
        .map_err(|e| CliError::new(EXIT_STATS, format!("{}: {e}", path.display())))
}

fn load_params(path: &Path) -> Result<CdanParams, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::new(EXIT_PARAMS, format!("{}: {e}", path.display())))?;
    cdan::load_params(&bytes).map_err(|e| CliError::new(EXIT_PARAMS, format!("{}: {e}", path.display())))
}

fn parse_emotion(s: &str, code: i32) -> Result<Emotion, CliError> {
    s.parse()
        .map_err(|e: crate::au::UnknownEmotionName| CliError::new(code, e.to_string()))
}

pub fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let catalog = ingest::load_catalog_file(&a.manifest)?;
    let stats = stats::fit_stats(&catalog, a.opt2.into())?;
    for w in &stats.warnings {
        eprintln!("warning: {w}");
    }
    let table = stats::build_feature_table(&catalog, &stats)?;
    write_all(&[
        (&a.out_stats, stats.to_json().as_bytes()),
        (&a.out_table, table.to_json().as_bytes()),
    ])
}

pub fn cmd_inject(a: &InjectArgs) -> Result<(), CliError> {
    let mut seq = ingest::read_au_csv(&a.input)?;
    if let Some(name) = &a.source_emotion {
        seq.emotion = Some(parse_emotion(name, EXIT_TARGET)?);
    }
    let stats = load_stats(&a.stats)?;
    let table = load_table(&a.table)?;
    let (out, trace) = if let Some(path) = &a.replay {
        let prior = injector::trace_from_jsonl(&read_text(path, EXIT_TARGET)?)
            .map_err(|e| CliError::new(EXIT_TARGET, format!("{}: {e}", path.display())))?;
        injector::replay_trace(&seq, &stats, &prior)?
    } else {
        let target = match (&a.emo, a.level, a.au, a.bias) {
            (Some(emo), Some(level), None, None) => InjectionTarget::EmotionLevel {
                emotion: parse_emotion(emo, EXIT_TARGET)?,
                level,
            },
            (None, None, Some(au_index), Some(bias)) => InjectionTarget::AuBias { au_index, bias },
            _ => {
                return Err(CliError::new(
                    EXIT_TARGET,
                    "give --emo with --level, --au with --bias, or --replay",
                ))
            }
        };
        injector::inject_sequence(&seq, &stats, &table, &target)?
    };
    if out.clamped > 0 {
        eprintln!("warning: {} intensities clamped into [0, 5]", out.clamped);
    }
    write_all(&[
        (&a.out, ingest::write_au_csv(&out).as_bytes()),
        (&a.out_trace, injector::trace_to_jsonl(&trace).as_bytes()),
    ])
}

/// LES vector and emotion label of every frame of a labeled corpus.
fn corpus_vectors(manifest: &Path, stats: &DatasetStats) -> Result<Vec<(LesVector, Emotion)>, CliError> {
    let catalog: Vec<AuSequence> = ingest::load_catalog_file(manifest)?;
    let mut out = Vec::new();
    for seq in &catalog {
        let emotion = seq.emotion.unwrap_or(Emotion::Neutral);
        for f in &seq.frames {
            out.push((les::reconstruct(&f.au, stats, emotion)?, emotion));
        }
    }
    Ok(out)
}

pub fn cmd_diagnose(command: &DiagnoseCommand) -> Result<(), CliError> {
    match command {
        DiagnoseCommand::Outliers(a) => {
            let table = load_table(&a.table)?;
            let z = match a.confidence {
                Some(c) => stats::z_for_confidence(c)?,
                None => a.z,
            };
            let m = stats::outlier_matrix(&table, z, a.n)?;
            if let Some(t) = m.threshold {
                eprintln!("threshold {t:.6}");
            }
            write_atomic(&a.out, m.to_csv().as_bytes())
        }
        DiagnoseCommand::Isolation(a) => {
            let stats = load_stats(&a.stats)?;
            let vectors: Vec<(IsoVector, String)> = corpus_vectors(&a.manifest, &stats)?
                .into_iter()
                .map(|(w, e)| (les::decompose(&w).1, e.name().to_string()))
                .collect();
            let survey = stats::isolation_survey(&vectors, a.pairs, a.seed);
            eprintln!(
                "{} pairs ({} inner, {} outer), {} bound violations",
                survey.pairs, survey.inner, survey.outer, survey.violations
            );
            write_atomic(&a.out, survey.to_csv().as_bytes())
        }
        DiagnoseCommand::Clustering(a) => {
            let stats = load_stats(&a.stats)?;
            let corpus = corpus_vectors(&a.manifest, &stats)?;
            let points: Vec<Vec<f64>> = corpus
                .iter()
                .map(|(w, _)| match a.space {
                    Space::Action => w.0[..AU_COUNT].to_vec(),
                    Space::Isolation => w.0[AU_COUNT..].to_vec(),
                    Space::Les => w.0.to_vec(),
                })
                .collect();
            let labels: Vec<String> = corpus.iter().map(|(_, e)| e.name().to_string()).collect();
            let method = match a.method {
                MethodArg::Kmeans => ClusterMethod::Kmeans,
                MethodArg::Gmm => ClusterMethod::Gmm,
            };
            let report = stats::cluster(&points, a.k, method, a.seed, Some(&labels))?;
            eprintln!("silhouette {:.6}", report.silhouette);
            write_atomic(&a.out, to_json_line(&report).as_bytes())
        }
    }
}

fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialize");
    s.push('\n');
    s
}

pub fn cmd_export(a: &ExportArgs) -> Result<(), CliError> {
    let stats = load_stats(&a.stats)?;
    let corpus = corpus_vectors(&a.manifest, &stats)?;
    write_atomic(
        &a.out,
        les::les_vectors_to_csv(corpus.iter().map(|(w, _)| w)).as_bytes(),
    )
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let config = crate::synth::SynthConfig {
        seed: a.seed,
        sequences_per_class: a.sequences_per_class,
        frames_per_sequence: a.frames,
        ..Default::default()
    };
    let corpus = crate::synth::generate(&config);
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", a.out_dir.display())))?;
    let manifest = crate::synth::write_corpus(&a.out_dir, &corpus)
        .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", a.out_dir.display())))?;
    eprintln!(
        "wrote {} sequences, manifest {}",
        corpus.len(),
        manifest.display()
    );
    Ok(())
}

/// Raw inference input; lengths are checked against the network.
#[derive(Debug, Deserialize)]
struct InferInput {
    u: Vec<f64>,
    v: Vec<f64>,
    beta: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct SampleInput {
    u: Vec<f64>,
    v: Vec<f64>,
    beta: Vec<f64>,
    target: Vec<f64>,
}

fn check_len(what: &'static str, xs: &[f64], expected: usize) -> Result<(), CliError> {
    if xs.len() != expected {
        return Err(CdanError::BadLength {
            what,
            expected,
            got: xs.len(),
        }
        .into());
    }
    Ok(())
}

fn to_sample(s: SampleInput) -> Result<Sample, CliError> {
    check_len("u", &s.u, cdan::LEVEL1_LEN)?;
    check_len("v", &s.v, cdan::LEVEL2_LEN)?;
    Ok(Sample {
        u: ActVector::from_slice(&s.u).expect("length checked"),
        v: IsoVector::from_slice(&s.v).expect("length checked"),
        beta: ExprCoeff::new(s.beta)?,
        target: ExprCoeff::new(s.target)?,
    })
}

fn random_sample(seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mags: [f64; AU_COUNT] = std::array::from_fn(|_| rng.random_range(0.0..1.5));
    let emotion = Emotion::EXPRESSIVE[rng.random_range(0..Emotion::EXPRESSIVE.len())];
    let coeffs = |rng: &mut ChaCha8Rng| {
        ExprCoeff::new((0..cdan::D_MODEL).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("finite")
    };
    Sample {
        u: ActVector(std::array::from_fn(|_| rng.random_range(-2.0..2.0))),
        v: IsoVector::with_slot(&mags, emotion),
        beta: coeffs(&mut rng),
        target: coeffs(&mut rng),
    }
}

pub fn cmd_cdan(command: &CdanCommand) -> Result<(), CliError> {
    match command {
        CdanCommand::Init { seed, out } => write_atomic(out, &cdan::save_params(&cdan::init_params(*seed))),
        CdanCommand::Infer { params, input, out } => {
            let p = load_params(params)?;
            let inp: InferInput = serde_json::from_str(&read_text(input, EXIT_PARAMS)?)
                .map_err(|e| CliError::new(EXIT_PARAMS, format!("{}: {e}", input.display())))?;
            check_len("u", &inp.u, cdan::LEVEL1_LEN)?;
            check_len("v", &inp.v, cdan::LEVEL2_LEN)?;
            let beta = ExprCoeff::new(inp.beta)?;
            let u = ActVector::from_slice(&inp.u).expect("length checked");
            let v = IsoVector::from_slice(&inp.v).expect("length checked");
            let (_, beta_second) = cdan::infer(&u, &v, &beta, &p)?;
            write_atomic(out, to_json_line(&beta_second).as_bytes())
        }
        CdanCommand::Gradcheck {
            params,
            input,
            epsilon,
            seed,
        } => {
            let p = load_params(params)?;
            let sample = match input {
                Some(path) => {
                    let s: SampleInput = serde_json::from_str(&read_text(path, EXIT_PARAMS)?)
                        .map_err(|e| CliError::new(EXIT_PARAMS, format!("{}: {e}", path.display())))?;
                    to_sample(s)?
                }
                None => random_sample(*seed),
            };
            let r = cdan::grad_check_scoped(&p, &sample, cdan::GradScope::Serial, *epsilon, *seed)?;
            println!(
                "max_rel_err {:e} over {} parameters (worst {}): {}",
                r.max_rel_err,
                r.checked,
                r.worst,
                if r.pass { "pass" } else { "FAIL" }
            );
            if r.pass {
                Ok(())
            } else {
                Err(CliError::new(EXIT_IO, "gradient check failed"))
            }
        }
        CdanCommand::TrainToy(a) => {
            let p = load_params(&a.params)?;
            let data = match &a.data {
                Some(path) => read_text(path, EXIT_PARAMS)?
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .enumerate()
                    .map(|(i, l)| {
                        let s: SampleInput = serde_json::from_str(l).map_err(|e| {
                            CliError::new(EXIT_PARAMS, format!("{} line {}: {e}", path.display(), i + 1))
                        })?;
                        to_sample(s)
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                None => cdan::linear_toy_dataset(a.samples, a.seed),
            };
            let config = TrainConfig {
                epochs: a.epochs,
                lr: a.lr,
                decay: a.decay,
                batch: a.batch,
                shuffle_seed: a.seed,
                stages: if a.joint {
                    vec![cdan::Stage::Joint]
                } else {
                    vec![cdan::Stage::Level1, cdan::Stage::Level2]
                },
            };
            let initial = cdan::mse(&p, &data)?;
            let report = cdan::train_toy(&data, p, &config)?;
            let last = cdan::mse(&report.params, &data)?;
            eprintln!(
                "mse {initial:.6e} -> {last:.6e} ({:.4} of initial)",
                last / initial
            );
            write_all(&[
                (&a.out, &cdan::save_params(&report.params)),
                (&a.loss_csv, report.loss_csv().as_bytes()),
            ])
        }
    }
}
