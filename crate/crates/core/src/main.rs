use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use msvbx::pipeline::{cluster_recording, Mode, PipelineConfig};
use msvbx::plda::{LabeledEmbeddings, PldaBackend};
use msvbx::recording::{read_recording, write_recording};
use msvbx::scorer::score_corpus;
use msvbx::stitch::{format_rttm, read_rttm, Segment};
use msvbx::synth::{generate, linspace_desc, sample_labeled_set, SynthConfig};

#[derive(Parser)]
#[command(name = "msvbx", version, about = "Multi-stream VBx speaker clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the LDA + PLDA backend on labeled embeddings.
    TrainBackend(TrainArgs),
    /// Cluster recordings and write one RTTM plus ELBO trace per recording.
    Cluster(ClusterArgs),
    /// Score hypothesis RTTMs against references.
    Score(ScoreArgs),
    /// Sample a synthetic recording with ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled embeddings JSON: {"vectors": [[..]], "speaker_labels": [..]}.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the backend model JSON.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 32)]
    lda_dim: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Msvbx,
    Vbx,
}

#[derive(Args)]
struct ClusterArgs {
    /// Recording files (.msvb) or directories containing them.
    #[arg(required = true)]
    recordings: Vec<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON file with pipeline settings; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    fa: Option<f64>,
    #[arg(long)]
    fb: Option<f64>,
    #[arg(long)]
    p_loop: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    elbo_rel_tol: Option<f64>,
    #[arg(long)]
    pi_drop_eps: Option<f64>,
    #[arg(long)]
    cahc_threshold: Option<f64>,
    #[arg(long)]
    activity_threshold: Option<f64>,
    /// Median filter window in seconds.
    #[arg(long)]
    median_window: Option<f64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    ref_dir: PathBuf,
    #[arg(long)]
    hyp_dir: PathBuf,
    /// Seconds excluded on each side of every reference boundary.
    #[arg(long, default_value_t = 0.25)]
    collar: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "synth")]
    recording_id: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    num_speakers: usize,
    #[arg(long, default_value_t = 200)]
    num_chunks: usize,
    #[arg(long, default_value_t = 2)]
    max_streams: usize,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    /// Comma-separated between-speaker variances, or one value used for
    /// every dimension. Defaults to evenly spaced 10 down to 1.
    #[arg(long, value_delimiter = ',')]
    phi: Vec<f64>,
    #[arg(long, default_value_t = 0.8)]
    p_loop: f64,
    /// Comma-separated probabilities of 0..=max-streams active streams.
    /// Defaults to an even split over 1..=max-streams.
    #[arg(long, value_delimiter = ',')]
    active_count_probs: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    frames_per_chunk: usize,
    #[arg(long, default_value_t = 0.1)]
    frame_step: f64,
    #[arg(long, default_value_t = 0.0)]
    flip_prob: f64,
    /// Also write the ground-truth RTTM.
    #[arg(long)]
    rttm: bool,
    /// Also write an independent labeled training set to this path.
    #[arg(long)]
    labeled_out: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    labeled_speakers: usize,
    #[arg(long, default_value_t = 20)]
    labeled_per_speaker: usize,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<msvbx::Error> for Failure {
    fn from(e: msvbx::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult = Result<(), Failure>;

fn require(path: &Path, what: &str) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} not found: {}", path.display())))
    }
}

fn train_backend(args: TrainArgs) -> CliResult {
    require(&args.input, "labeled embeddings")?;
    let data = LabeledEmbeddings::load(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let backend = PldaBackend::train(&data, args.lda_dim)?;
    backend.save(&args.output)?;
    log::info!(
        "trained backend: {} -> {} dims on {} embeddings",
        backend.input_dim(),
        backend.lda_dim(),
        data.len()
    );
    Ok(())
}

fn collect_recordings(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        require(p, "recording")?;
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Failure::Runtime(e.into()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "msvb"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn pipeline_config(args: &ClusterArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            require(path, "config file")?;
            let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(e.into()))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    let inf = &mut cfg.inference;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(inf.fa, args.fa);
    set!(inf.fb, args.fb);
    set!(inf.p_loop, args.p_loop);
    set!(inf.tau, args.tau);
    set!(inf.max_iters, args.max_iters);
    set!(inf.elbo_rel_tol, args.elbo_rel_tol);
    set!(inf.pi_drop_eps, args.pi_drop_eps);
    set!(cfg.cahc_threshold, args.cahc_threshold);
    set!(cfg.activity_threshold, args.activity_threshold);
    set!(cfg.median_window, args.median_window);
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::Msvbx => Mode::Msvbx,
            ModeArg::Vbx => Mode::Vbx,
        };
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn cluster_one(path: &Path, backend: &PldaBackend, cfg: &PipelineConfig, out_dir: &Path) -> anyhow::Result<()> {
    let rec = read_recording(path)?;
    let outcome = cluster_recording(&rec, backend, cfg)?;
    let id = rec.recording_id();
    fs::write(out_dir.join(format!("{id}.rttm")), format_rttm(&outcome.result.segments()))?;
    fs::write(out_dir.join(format!("{id}.elbo.jsonl")), outcome.diagnostics_jsonl()?)?;
    log::info!(
        "{id}: {} speakers after {} iterations",
        outcome.result.num_speakers(),
        outcome.diagnostics.len()
    );
    Ok(())
}

fn cluster(args: ClusterArgs) -> CliResult {
    require(&args.model, "model")?;
    let files = collect_recordings(&args.recordings)?;
    let cfg = pipeline_config(&args)?;
    if args.workers == Some(0) {
        return Err(Failure::Usage("--workers must be positive".into()));
    }
    let backend = PldaBackend::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Failure::Runtime(e.into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Runtime(e.into()))?;
    let failures: Vec<String> = pool.install(|| {
        files
            .par_iter()
            .filter_map(|f| {
                cluster_one(f, &backend, &cfg, &args.out_dir)
                    .err()
                    .map(|e| format!("{}: {e:#}", f.display()))
            })
            .collect()
    });
    for f in &failures {
        log::error!("{f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!("{} of {} recordings failed", failures.len(), files.len())))
    }
}

fn read_rttm_dir(dir: &Path) -> anyhow::Result<std::collections::BTreeMap<String, Vec<Segment>>> {
    let mut out = std::collections::BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|x| x == "rttm") {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let segs = read_rttm(&path).with_context(|| format!("reading {}", path.display()))?;
            out.insert(id, segs);
        }
    }
    Ok(out)
}

fn score(args: ScoreArgs) -> CliResult {
    require(&args.ref_dir, "reference directory")?;
    require(&args.hyp_dir, "hypothesis directory")?;
    if !(args.collar >= 0.0) {
        return Err(Failure::Usage("--collar must be >= 0".into()));
    }
    let report = score_corpus(&read_rttm_dir(&args.ref_dir)?, &read_rttm_dir(&args.hyp_dir)?, args.collar)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.into()))?;
    match args.output {
        Some(path) => fs::write(path, text + "\n").map_err(|e| Failure::Runtime(e.into()))?,
        None => {
            // A closed pipe on stdout is not worth a failure exit.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> CliResult {
    let phi = match args.phi.as_slice() {
        [] => linspace_desc(10.0, 1.0, args.embed_dim),
        [v] => vec![*v; args.embed_dim],
        many => many.to_vec(),
    };
    let probs = if args.active_count_probs.is_empty() {
        let k = args.max_streams.min(args.num_speakers).max(1);
        (0..=args.max_streams)
            .map(|c| if c >= 1 && c <= k { 1.0 / k as f64 } else { 0.0 })
            .collect()
    } else {
        args.active_count_probs.clone()
    };
    let cfg = SynthConfig {
        recording_id: args.recording_id.clone(),
        num_speakers: args.num_speakers,
        num_chunks: args.num_chunks,
        max_streams: args.max_streams,
        embed_dim: args.embed_dim,
        phi,
        p_loop: args.p_loop,
        active_count_probs: probs,
        frames_per_chunk: args.frames_per_chunk,
        frame_step: args.frame_step,
        flip_prob: args.flip_prob,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let out = generate(&cfg)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Failure::Runtime(e.into()))?;
    let id = &args.recording_id;
    write_recording(&out.recording, args.out_dir.join(format!("{id}.msvb")))?;
    out.truth.save(args.out_dir.join(format!("{id}.truth.json")))?;
    if args.rttm {
        let rec = out.recording.with_active_streams(0.05)?;
        let res = msvbx::stitch::stitch(&rec, &out.truth.labels, 0.5)?;
        fs::write(args.out_dir.join(format!("{id}.rttm")), format_rttm(&res.segments()))
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    if let Some(path) = &args.labeled_out {
        let seed = args.seed.wrapping_add(0x5eed);
        sample_labeled_set(&cfg.phi, args.labeled_speakers, args.labeled_per_speaker, seed)?.save(path)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MSVBX_LOG", "warn")).init();
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let result = match cli.command {
        Command::TrainBackend(a) => train_backend(a),
        Command::Cluster(a) => cluster(a),
        Command::Score(a) => score(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
