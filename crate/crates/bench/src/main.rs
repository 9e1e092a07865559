use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use demorph_bench::demorpher::materialize_outputs;
use demorph_bench::embedder::embed_manifest;
use demorph_bench::error::{exit, HarnessError, Result};
use demorph_bench::io::{load_manifest, write_file};
use demorph_bench::pipeline::{run_evaluation, write_records, EvaluationConfig};
use demorph_bench::registry::{demorphers, embedders};
use demorph_bench::report::{render, ReportFormat};
use demorph_bench::sanity::{run_sanity, SanityConfig, DEFAULT_EPSILON};
use demorph_bench::synth::{generate, write_benchmark, SynthConfig};
use demorph_core::biometric::{
    compute_threshold_at_fmr, ScoreSet, DEFAULT_TARGET_FMR, DEFAULT_TAU,
};
use demorph_core::dataset::{classify_scenario, load_embedding_store, read_id_list, ScenarioSplit};
use demorph_core::pairing::ConditionParams;

#[derive(Parser)]
#[command(
    name = "demorph-bench",
    version,
    about = "Demorphing evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score demorphing outputs and write the aggregate report.
    Evaluate(EvaluateArgs),
    /// Calibrate a match threshold from a genuine/impostor score CSV.
    Threshold {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TARGET_FMR)]
        fmr: f64,
    },
    /// Run the identity-versus-quality sanity sweep.
    Sanity {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPSILON, hide = true)]
        epsilon: f64,
    },
    /// Classify a train/test identity split as scenario 1, 2 or 3.
    ValidateScenario {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Write baseline demorpher outputs and a rewritten manifest.
    DemorphBaseline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic alpha-blend morph benchmark.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        identities: usize,
        #[arg(long, default_value_t = 100)]
        morphs: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Embed every image of a manifest with a built-in embedder into a BEMB store.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "grid8")]
        embedder: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    gallery: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TARGET_FMR)]
    fmr: f64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, requires = "epsilon")]
    theta: Option<f64>,
    #[arg(long, requires = "theta")]
    epsilon: Option<f64>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    records_out: Option<PathBuf>,
    #[arg(long)]
    skip_bad_records: bool,
    #[arg(long)]
    bw_normalize: bool,
    #[arg(long)]
    allow_negative_b: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Dataset label in the report; defaults to the manifest's directory name.
    #[arg(long)]
    dataset: Option<String>,
}

fn dataset_label(manifest: &Path) -> String {
    manifest
        .canonicalize()
        .ok()
        .as_deref()
        .and_then(Path::parent)
        .and_then(Path::file_name)
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    if args.threads == Some(0) {
        return Err(HarnessError::Validation(
            "--threads must be at least 1".into(),
        ));
    }
    let records = load_manifest(&args.manifest)?;
    let store = load_embedding_store(&args.embeddings)?;
    let gallery = args
        .gallery
        .as_ref()
        .map(load_embedding_store)
        .transpose()?;
    let config = EvaluationConfig {
        dataset_name: args
            .dataset
            .unwrap_or_else(|| dataset_label(&args.manifest)),
        target_fmr: args.fmr,
        tau: args.tau,
        conditions: args
            .theta
            .zip(args.epsilon)
            .map(|(theta, epsilon)| ConditionParams { theta, epsilon }),
        allow_negative_b: args.allow_negative_b,
        bw_normalize: args.bw_normalize,
        skip_bad_records: args.skip_bad_records,
        threads: args.threads,
        ..Default::default()
    };
    let run = run_evaluation(&records, &store, gallery.as_ref(), &config)?;
    if let Some(path) = &args.records_out {
        write_records(&run.records, path)?;
    }
    write_file(
        &args.out,
        render(std::slice::from_ref(&run.report), args.format)?,
    )?;
    for reject in &run.report.rejects {
        eprintln!("rejected {}: {}", reject.morph_id, reject.error);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Evaluate(args) => evaluate(args),
        Command::Threshold { scores, fmr } => {
            let file = std::fs::File::open(&scores).map_err(HarnessError::io(&scores))?;
            let set = ScoreSet::read_csv(std::io::BufReader::new(file))?;
            let t = compute_threshold_at_fmr(&set, fmr)?;
            println!("threshold {}", t.value);
            println!("achieved_fmr {}", t.achieved_fmr);
            Ok(())
        }
        Command::Sanity { seed, out, epsilon } => {
            let report = run_sanity(&SanityConfig { seed, epsilon }, Some(&out))?;
            println!("crossover levels {:?}", report.crossover_levels);
            Ok(())
        }
        Command::ValidateScenario { train, test } => {
            let split = ScenarioSplit {
                train_identities: read_id_list(&train)?,
                test_identities: read_id_list(&test)?,
            };
            println!("scenario {}", classify_scenario(&split)?.number());
            Ok(())
        }
        Command::DemorphBaseline {
            manifest,
            kind,
            out,
        } => {
            let registry = demorphers();
            let demorpher = registry.get(&kind)?;
            let records = load_manifest(&manifest)?;
            let written = materialize_outputs(&records, demorpher, &out)?;
            println!(
                "wrote {} records to {}",
                written.len(),
                out.join("manifest.jsonl").display()
            );
            Ok(())
        }
        Command::Synth {
            seed,
            out,
            identities,
            morphs,
            size,
        } => {
            let bench = generate(&SynthConfig {
                seed,
                identities,
                morphs,
                size,
                ..Default::default()
            })?;
            let records = write_benchmark(&bench, &out)?;
            println!(
                "wrote {} morphs over {identities} identities to {}",
                records.len(),
                out.display()
            );
            Ok(())
        }
        Command::Embed {
            manifest,
            embedder,
            out,
        } => {
            let registry = embedders();
            let embedder = registry.get(&embedder)?;
            let records = load_manifest(&manifest)?;
            let store = embed_manifest(&records, embedder)?;
            store.save(&out)?;
            println!("wrote {} embeddings to {}", store.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::VALIDATION
            } else {
                exit::SUCCESS
            });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
