use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lecturebook::collection::{backend_from_spec, dedup_by_video_id, expand_queries, load_taxonomy, search_all};
use lecturebook::corpus::{
    encode_corpus, read_corpus, validate_corpus, CorpusRules, PackingStrategy, WhitespaceTokenizer, DEFAULT_EOV_TOKEN,
};
use lecturebook::media::AutoToolkit;
use lecturebook::metrics::{adapt_external, corpus_stats, insi_sim, ppl_report, shuffle_images, DirImageSource, ExternalFormat};
use lecturebook::pipeline::{
    doctor, Pipeline, RunConfig, ServiceMode, Stage, StageSelection,
};
use lecturebook::services::mock::PerceptualProjection;
use lecturebook::services::{FixtureTables, FrameEmbedder, MockServer, PerplexityScorer};
use lecturebook::Error;

#[derive(Parser)]
#[command(name = "lecturebook", version, about = "Turn instructional videos into an interleaved image-text corpus")]
struct Cli {
    /// Log line format on stderr.
    #[arg(long, value_enum, default_value_t = LogFormat::Text, global = true)]
    log: LogFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogFormat {
    Text,
    Json,
}

#[derive(Args, Clone)]
struct RunTarget {
    /// Run configuration (TOML).
    #[arg(long, default_value = "lecturebook.toml")]
    config: PathBuf,
    /// Working directory; overrides the config and WORKDIR.
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// Force mock services.
    #[arg(long)]
    mock: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one stage or all of them.
    Run {
        /// collect, video, clip, frame, assemble, metrics or all.
        stage: String,
        #[command(flatten)]
        target: RunTarget,
        /// Stop after this many items of the first stage commit.
        #[arg(long, hide = true)]
        abort_after: Option<usize>,
    },
    /// Expand the taxonomy into queries and print deduplicated search results.
    Collect {
        #[arg(long)]
        taxonomy: PathBuf,
        /// fixture:<dir> or live:<url>.
        #[arg(long)]
        backend: String,
        #[arg(long, default_value_t = 50)]
        top_k: usize,
        /// Write JSON lines here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the video stage over collected videos.
    VideoStage {
        #[command(flatten)]
        target: RunTarget,
        /// Collect manifest of an existing workdir.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Number of transcript judges.
        #[arg(long)]
        judges: Option<usize>,
    },
    /// Interleave and pack the frame-stage output into the corpus.
    Assemble {
        #[command(flatten)]
        target: RunTarget,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        max_images: Option<usize>,
        #[arg(long)]
        eov: Option<String>,
    },
    /// Corpus audits.
    Metrics {
        #[command(subcommand)]
        command: MetricsCommand,
    },
    /// Check a corpus file against the record invariants.
    Validate {
        corpus: PathBuf,
        #[arg(long, default_value = DEFAULT_EOV_TOKEN)]
        eov: String,
    },
    /// Check media tools, inputs, services and the workdir.
    Doctor {
        #[command(flatten)]
        target: RunTarget,
    },
    /// Serve the mock services over HTTP.
    ServeMock {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, env = "SERVICE_TOKEN")]
        token: Option<String>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Write a self-contained demo project.
    Demo {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArgs {
    corpus: PathBuf,
    /// Root that image refs resolve against; defaults to the corpus's workdir.
    #[arg(long)]
    images: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Sample count and image/token distributions.
    Stats(CorpusArgs),
    /// In-sample image similarity per image-count bucket.
    InsiSim {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_delimiter = ',', default_value = "4,5,6,7,8")]
        buckets: Vec<usize>,
        /// Also write the L-vs-score table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Permute image order in a fraction of samples.
    Shuffle {
        corpus: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perplexity of each sample's text.
    Ppl {
        corpus: PathBuf,
        /// Fixture directory whose reference text fits the unigram model.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Convert an external interleaved corpus.
    Adapt {
        input: PathBuf,
        #[arg(long)]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(target: &RunTarget) -> anyhow::Result<(RunConfig, PathBuf)> {
    let mut config = RunConfig::load(&target.config)?;
    config.apply_env(|k| std::env::var(k).ok());
    if target.mock {
        config.services.mode = ServiceMode::Mock;
    }
    let workdir = target
        .workdir
        .clone()
        .or_else(|| config.run.workdir.clone())
        .ok_or_else(|| Error::Config("missing field `run.workdir` (or WORKDIR / --workdir)".into()))?;
    Ok((config, workdir))
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run_stages(pipeline: &Pipeline, selection: StageSelection) -> anyhow::Result<()> {
    let report = pipeline.run(selection)?;
    for s in &report.stages {
        eprintln!(
            "{:<9} done {:>4}  dropped {:>4}  skipped {:>4}  pending {:>4}",
            s.stage,
            s.done,
            s.dropped,
            s.skipped,
            s.pending.len()
        );
    }
    let pending = report.pending();
    if !pending.is_empty() {
        eprintln!("{} item(s) pending, rerun to retry: {}", pending.len(), pending.join(", "));
    }
    Ok(())
}

fn images_root(args: &CorpusArgs) -> PathBuf {
    args.images.clone().unwrap_or_else(|| {
        // corpus files live in <workdir>/corpus/
        args.corpus
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    })
}

fn metrics(command: MetricsCommand) -> anyhow::Result<()> {
    match command {
        MetricsCommand::Stats(args) => print_json(&corpus_stats(&read_corpus(&args.corpus)?)),
        MetricsCommand::InsiSim { corpus, buckets, csv } => {
            let samples = read_corpus(&corpus.corpus)?;
            let source = DirImageSource {
                root: images_root(&corpus),
            };
            let embedder: &dyn FrameEmbedder = &PerceptualProjection::default();
            let report = insi_sim(&samples, &source, embedder, &buckets)?;
            if let Some(path) = csv {
                fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
            }
            print_json(&report)
        }
        MetricsCommand::Shuffle { corpus, p, seed, out } => {
            let mut samples = read_corpus(&corpus)?;
            let shuffled = shuffle_images(&mut samples, p, seed)?;
            // Shuffled samples break chronology on purpose, so they skip record checks.
            let mut bytes = Vec::new();
            for sample in &samples {
                serde_json::to_writer(&mut bytes, sample)?;
                bytes.push(b'\n');
            }
            lecturebook::util::write_atomic(&out, &bytes)?;
            eprintln!("shuffled {} of {} sample(s)", shuffled.len(), samples.len());
            Ok(())
        }
        MetricsCommand::Ppl { corpus, fixtures } => {
            let tables = match fixtures {
                Some(dir) => FixtureTables::load(&dir)?,
                None => FixtureTables::default(),
            };
            let model = tables.unigram_model();
            let scorer: &dyn PerplexityScorer = &model;
            print_json(&ppl_report(&read_corpus(&corpus)?, scorer))
        }
        MetricsCommand::Adapt { input, format, out } => {
            let format: ExternalFormat = format.parse()?;
            let adapted = adapt_external(&input, format, &WhitespaceTokenizer)?;
            for e in &adapted.errors {
                eprintln!("{}:{}: {}", input.display(), e.line, e.message);
            }
            let rules = CorpusRules {
                eov_token: DEFAULT_EOV_TOKEN,
                tokenizer: &WhitespaceTokenizer,
            };
            lecturebook::util::write_atomic(&out, &encode_corpus(&adapted.samples, &rules)?)?;
            eprintln!("adapted {} sample(s), {} bad record(s)", adapted.samples.len(), adapted.errors.len());
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run {
            stage,
            target,
            abort_after,
        } => {
            let selection: StageSelection = stage.parse()?;
            let (config, workdir) = load_config(&target)?;
            let mut pipeline = Pipeline::new(config, Some(&workdir))?;
            if let Some(n) = abort_after {
                pipeline.abort_after = Some((selection.stages()[0], n));
            }
            run_stages(&pipeline, selection)
        }
        Command::Collect {
            taxonomy,
            backend,
            top_k,
            out,
        } => {
            let taxonomy = load_taxonomy(&taxonomy)?;
            let backend = backend_from_spec(&backend)?;
            let results = search_all(backend.as_ref(), &expand_queries(&taxonomy), top_k)?;
            let (kept, dropped) = dedup_by_video_id(results);
            for d in &dropped {
                eprintln!("duplicate_video_id {} ({}#{})", d.meta.video_id, d.point_id, d.rank);
            }
            let mut lines = String::new();
            for r in &kept {
                lines.push_str(&serde_json::to_string(r)?);
                lines.push('\n');
            }
            match out {
                Some(path) => lecturebook::util::write_atomic(&path, lines.as_bytes())?,
                None => print!("{lines}"),
            }
            Ok(())
        }
        Command::VideoStage { target, input, judges } => {
            let (mut config, mut workdir) = load_config(&target)?;
            if let Some(manifest) = input {
                // <workdir>/manifests/collect.jsonl
                workdir = manifest
                    .parent()
                    .and_then(Path::parent)
                    .ok_or_else(|| anyhow!("cannot find the workdir of {}", manifest.display()))?
                    .to_path_buf();
            }
            if let Some(n) = judges {
                if n == 0 {
                    bail!(Error::InvalidArgument("--judges must be at least 1".into()));
                }
                let ids = &mut config.pipeline.judges;
                let base = ids.clone();
                ids.clear();
                for i in 0..n {
                    ids.push(base.get(i).cloned().unwrap_or_else(|| format!("judge-{}", i + 1)));
                }
            }
            run_stages(&Pipeline::new(config, Some(&workdir))?, StageSelection::One(Stage::Video))
        }
        Command::Assemble {
            target,
            strategy,
            budget,
            max_images,
            eov,
        } => {
            let (mut config, workdir) = load_config(&target)?;
            let p = &mut config.pipeline;
            if let Some(s) = strategy {
                p.packing_strategy = s.parse::<PackingStrategy>()?;
            }
            if let Some(b) = budget {
                p.token_budget = b;
            }
            if let Some(m) = max_images {
                p.max_images_per_sample = m;
            }
            if let Some(e) = eov {
                p.eov_token = e;
            }
            p.validate()?;
            run_stages(&Pipeline::new(config, Some(&workdir))?, StageSelection::One(Stage::Assemble))
        }
        Command::Metrics { command } => metrics(command),
        Command::Validate { corpus, eov } => {
            let rules = CorpusRules {
                eov_token: &eov,
                tokenizer: &WhitespaceTokenizer,
            };
            let report = validate_corpus(&corpus, &rules)?;
            print_json(&report)?;
            if report.n_violations > 0 {
                bail!(Error::Validation(format!("{} violation(s)", report.n_violations)));
            }
            Ok(())
        }
        Command::Doctor { target } => {
            let (config, workdir) = load_config(&target)?;
            let report = doctor(&config, &workdir, &AutoToolkit::default());
            print!("{}", report.render());
            if !report.all_ok() {
                eprintln!("doctor found problems");
            }
            Ok(())
        }
        Command::ServeMock {
            fixtures,
            addr,
            token,
            workers,
        } => {
            let mut server = MockServer::new(FixtureTables::load(&fixtures)?);
            if let Some(t) = token {
                server = server.with_token(t);
            }
            let handle = server.start(&addr, workers)?;
            eprintln!("mock services listening on {}", handle.base_url());
            handle.wait();
            Ok(())
        }
        Command::Demo { out } => {
            let layout = lecturebook::demo::write_demo(&out)?;
            println!("{}", layout.config.display());
            Ok(())
        }
    }
}

/// 2 for configuration and usage problems, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::InvalidArgument(_)) => 2,
        _ => 1,
    }
}

fn init_logging(format: LogFormat) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    match format {
        LogFormat::Json => builder.json().init(),
        LogFormat::Text => builder.init(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log);
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
