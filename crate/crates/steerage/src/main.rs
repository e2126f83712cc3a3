//! Pipeline entry point: synthesize data, embed and cluster action windows,
//! train the manager/worker pair, evaluate, predict, and plot.
//!
//! Flag values override run-config values; the global `--seed` wins last.
//! Flag paths resolve against the working directory, config paths against
//! the config file. Every error prints as `error[<kind>]: <message>`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use steerage::autodiff::Tensor;
use steerage::data::{
    load_log, normalize_image, read_ppm, split, synth_generate, DrivingRecord, SynthConfig,
};
use steerage::embed::{
    cluster_report, kmeans_coords, make_windows, tsne_embed, window_sign_label, EmbeddedPoint,
    EmbeddedWindow, Embedding, TsneConfig,
};
use steerage::error::{Error, Result};
use steerage::nn::{rollout, Mode};
use steerage::plot::{predictions_svg, scatter_svg};
use steerage::runconfig::RunConfig;
use steerage::train::{
    compare_k, compare_k_csv, lookup_for_config, parse_predictions_csv, predictions_to_csv,
    train_joint, Model, TrainInputs,
};

/// Members listed per cluster in the report file.
const REPORT_NEAREST: usize = 8;

#[derive(Parser)]
#[command(name = "steerage", version, about = "Hierarchical steering-angle prediction pipeline")]
struct Cli {
    /// Seed override for the selected command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving outputs (default: config `out_dir`, else `.`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Flat key=value run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic driving log with rendered frames.
    Synth {
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Frame height and width in pixels.
        #[arg(long)]
        image_size: Option<usize>,
        /// Background noise amplitude in [0, 1].
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Embed action windows with t-SNE; write the artifact and a scatter plot.
    Embed {
        /// Driving log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Window length m.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        perplexity: Option<f64>,
        /// Gradient-descent iterations.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Re-cluster an embedding artifact and write it back with a report.
    Cluster {
        /// Embedding artifact produced by `embed`.
        #[arg(long)]
        embedding: Option<PathBuf>,
        /// Number of centroids.
        #[arg(long)]
        k: Option<usize>,
        /// Log the artifact came from; verifies window hashes and colors
        /// the scatter plot by steering sign.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train a manager/worker pair; write checkpoint, metrics, predictions.
    Train {
        #[arg(long)]
        log: Option<PathBuf>,
        /// gt-tsne, pred-tsne, learned, or none.
        #[arg(long)]
        mode: Option<String>,
        /// Embedding artifact; required by the centroid modes.
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated centroid counts: train pred-tsne once per k and
        /// write a k,test_rmse table instead of a checkpoint.
        #[arg(long)]
        k_list: Option<String>,
        /// Extra key=value overrides, applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Evaluate a checkpoint on the test split of a log.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Roll out predictions over a half-open sample range.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Sample range `start..end`.
        #[arg(long)]
        range: String,
    },
    /// Render a predictions CSV as an SVG line chart.
    Plot {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            eprint!("error[config]: {}", msg.strip_prefix("error: ").unwrap_or(&msg));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind_tag());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut rc = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        rc.train.seed = seed;
    }
    let out_dir = cli
        .out_dir
        .or_else(|| rc.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    match cli.command {
        Command::Synth { n, image_size, noise } => cmd_synth(&rc, &out_dir, n, image_size, noise),
        Command::Embed { log, m, perplexity, iterations } => {
            cmd_embed(&rc, &out_dir, log, m, perplexity, iterations)
        }
        Command::Cluster { embedding, k, log } => cmd_cluster(&rc, &out_dir, embedding, k, log),
        Command::Train { log, mode, embedding, epochs, k_list, set } => {
            cmd_train(rc, &out_dir, cli.seed, log, mode, embedding, epochs, k_list, set)
        }
        Command::Eval { checkpoint, log } => cmd_eval(&rc, &out_dir, checkpoint, log),
        Command::Predict { checkpoint, log, range } => {
            cmd_predict(&rc, &out_dir, checkpoint, log, &range)
        }
        Command::Plot { predictions } => cmd_plot(&rc, &out_dir, predictions),
    }
}

/// A path that must come from either a flag or the run config.
fn required(flag: Option<PathBuf>, from_config: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| from_config.clone()).ok_or_else(|| {
        Error::config(format!("{what} is required: pass --{what} or set `{what}` in the config"))
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads and normalizes every record's frame, relative to `frame_dir` when
/// set and to the log's directory otherwise.
fn load_frames(
    log: &Path,
    frame_dir: Option<&Path>,
    records: &[DrivingRecord],
) -> Result<Vec<Tensor>> {
    let base = frame_dir
        .unwrap_or_else(|| log.parent().unwrap_or_else(|| Path::new(".")))
        .to_path_buf();
    records
        .iter()
        .map(|r| Ok(normalize_image(&read_ppm(base.join(&r.frame_path))?)))
        .collect()
}

fn cmd_synth(
    rc: &RunConfig,
    out_dir: &Path,
    n: Option<usize>,
    image_size: Option<usize>,
    noise: Option<f64>,
) -> Result<()> {
    let cfg = SynthConfig {
        n: n.unwrap_or(rc.synth_n),
        seed: rc.train.seed,
        image_size: image_size.unwrap_or(rc.image_size),
        noise: noise.unwrap_or(rc.noise),
        m: rc.train.m,
    };
    let records = synth_generate(out_dir, &cfg)?;
    println!("wrote {} records under {}", records.len(), out_dir.display());
    Ok(())
}

fn cmd_embed(
    rc: &RunConfig,
    out_dir: &Path,
    log: Option<PathBuf>,
    m: Option<usize>,
    perplexity: Option<f64>,
    iterations: Option<usize>,
) -> Result<()> {
    let log = required(log, &rc.log, "log")?;
    let m = m.unwrap_or(rc.train.m);
    let records = load_log(&log)?;
    let windows = make_windows(&records, m)?;
    let cfg = TsneConfig {
        perplexity: perplexity.unwrap_or(rc.perplexity),
        iterations: iterations.unwrap_or(rc.tsne_iterations),
        seed: rc.train.seed,
    };
    let result = tsne_embed(&windows, &cfg)?;

    // One provisional cluster; `cluster` re-fits the table with a real k.
    let coords: Vec<[f64; 2]> = result.points.iter().map(|p| p.coords).collect();
    let set = kmeans_coords(&coords, 1, rc.train.seed)?;
    let emb = Embedding::build(m, &windows, &result.points, &set)?;
    let artifact = out_dir.join("embedding.txt");
    emb.save(&artifact)?;

    let labels: Vec<_> = windows.iter().map(|w| window_sign_label(w, rc.zero_band)).collect();
    let svg = scatter_svg(&result.points, &labels, &emb.centroids, &rc.centroid_color)?;
    write_text(&out_dir.join("embedding_scatter.svg"), &svg)?;

    println!(
        "embedded {} windows (m = {m}); KL {:.4} -> {:.4}",
        windows.len(),
        result.diagnostics.kl_start,
        result.diagnostics.kl_final
    );
    println!("wrote {} and embedding_scatter.svg", artifact.display());
    Ok(())
}

fn cmd_cluster(
    rc: &RunConfig,
    out_dir: &Path,
    embedding: Option<PathBuf>,
    k: Option<usize>,
    log: Option<PathBuf>,
) -> Result<()> {
    let path = required(embedding, &rc.embedding, "embedding")?;
    let log = required(log, &rc.log, "log")?;
    let k = k.unwrap_or(rc.train.k);
    let emb = Embedding::load(&path)?;

    let records = load_log(&log)?;
    let windows = make_windows(&records, emb.m)?;
    emb.verify_windows(&windows)?;

    let points: Vec<EmbeddedPoint> = emb
        .windows
        .iter()
        .map(|w| EmbeddedPoint { tau: w.tau, coords: w.coords })
        .collect();
    let coords: Vec<[f64; 2]> = emb.windows.iter().map(|w| w.coords).collect();
    let set = kmeans_coords(&coords, k, rc.train.seed)?;

    let updated = Embedding {
        m: emb.m,
        centroids: set.centroids.clone(),
        windows: emb
            .windows
            .iter()
            .zip(&set.assignment)
            .map(|(w, &c)| EmbeddedWindow { centroid: c, ..w.clone() })
            .collect(),
    };
    let artifact = out_dir.join("embedding.txt");
    updated.save(&artifact)?;

    let labels: Vec<_> = windows.iter().map(|w| window_sign_label(w, rc.zero_band)).collect();
    let svg = scatter_svg(&points, &labels, &updated.centroids, &rc.centroid_color)?;
    write_text(&out_dir.join("embedding_scatter.svg"), &svg)?;

    let mut report = String::new();
    for (c, taus) in cluster_report(&set, &points, REPORT_NEAREST).iter().enumerate() {
        let size = set.assignment.iter().filter(|&&a| a == c).count();
        let members: Vec<String> = taus.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(
            report,
            "cluster {c}: centroid ({:.4}, {:.4}), {size} members, nearest tau {}",
            set.centroids[c][0],
            set.centroids[c][1],
            members.join(" ")
        );
    }
    write_text(&out_dir.join("cluster_report.txt"), &report)?;

    println!("clustered {} windows into k = {k}, inertia {:.4}", points.len(), set.inertia());
    println!("wrote {}, embedding_scatter.svg, cluster_report.txt", artifact.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    mut rc: RunConfig,
    out_dir: &Path,
    seed: Option<u64>,
    log: Option<PathBuf>,
    mode: Option<String>,
    embedding: Option<PathBuf>,
    epochs: Option<usize>,
    k_list: Option<String>,
    set: Vec<String>,
) -> Result<()> {
    let log = required(log, &rc.log, "log")?;
    for pair in &set {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::config(format!("--set expects key=value, got `{pair}`"))
        })?;
        rc.apply(key.trim(), value.trim(), Path::new("."))?;
    }
    if let Some(mode) = mode {
        rc.train.mode = mode.parse()?;
    }
    if let Some(epochs) = epochs {
        rc.train.epochs = epochs;
    }
    if let Some(seed) = seed {
        rc.train.seed = seed;
    }
    rc.train.validate()?;

    let records = load_log(&log)?;
    let frames = load_frames(&log, rc.frame_dir.as_deref(), &records)?;
    let dataset = split(records, rc.train.train_fraction)?;
    let records = dataset.records();

    let emb = match rc.train.mode {
        Mode::GtTsne | Mode::PredTsne => {
            let path = required(embedding, &rc.embedding, "embedding")?;
            let emb = Embedding::load(&path)?;
            if emb.m != rc.train.m {
                return Err(Error::config(format!(
                    "embedding artifact was built with m = {} but training uses m = {}",
                    emb.m, rc.train.m
                )));
            }
            Some(emb)
        }
        Mode::Learned | Mode::None => None,
    };

    if let Some(list) = k_list {
        let emb = emb.as_ref().ok_or_else(|| {
            Error::contract("a k-list sweep needs mode=pred-tsne and an embedding artifact")
        })?;
        let ks: Vec<usize> = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::config(format!("--k-list: cannot parse `{s}`")))
            })
            .collect::<Result<_>>()?;
        let points: Vec<EmbeddedPoint> = emb
            .windows
            .iter()
            .map(|w| EmbeddedPoint { tau: w.tau, coords: w.coords })
            .collect();
        let rows = compare_k(records, &frames, dataset.n_train(), &points, &rc.train, &ks)?;
        let csv = compare_k_csv(&rows);
        let path = out_dir.join("compare_k.csv");
        write_text(&path, &csv)?;
        print!("{csv}");
        println!("wrote {}", path.display());
        return Ok(());
    }

    let lookup = emb.as_ref().map(|e| lookup_for_config(e, &rc.train)).transpose()?;
    let inputs = TrainInputs {
        records,
        frames: &frames,
        n_train: dataset.n_train(),
        lookup: lookup.as_ref(),
    };
    let (model, history) = train_joint(&inputs, &rc.train)?;

    let ckpt = out_dir.join("model.ckpt");
    model.save(&ckpt)?;
    write_text(&out_dir.join("metrics.csv"), &history.to_csv())?;
    let eval = model.evaluate(&frames, records, dataset.n_train())?;
    write_text(&out_dir.join("predictions.csv"), &predictions_to_csv(&eval.records))?;

    println!("mode {}: test rmse {:.5}, mae {:.5}", rc.train.mode, eval.rmse, eval.mae);
    println!("wrote {}, metrics.csv, predictions.csv", ckpt.display());
    Ok(())
}

fn cmd_eval(
    rc: &RunConfig,
    out_dir: &Path,
    checkpoint: Option<PathBuf>,
    log: Option<PathBuf>,
) -> Result<()> {
    let ckpt = required(checkpoint, &rc.checkpoint, "checkpoint")?;
    let log = required(log, &rc.log, "log")?;
    let model = Model::load(&ckpt)?;
    let records = load_log(&log)?;
    let frames = load_frames(&log, rc.frame_dir.as_deref(), &records)?;
    let dataset = split(records, model.config.train_fraction)?;

    let eval = model.evaluate(&frames, dataset.records(), dataset.n_train())?;
    write_text(&out_dir.join("predictions.csv"), &predictions_to_csv(&eval.records))?;
    println!(
        "mode {}: test rmse {:.5}, mae {:.5} over {} samples",
        model.config.mode,
        eval.rmse,
        eval.mae,
        eval.records.len()
    );
    Ok(())
}

fn cmd_predict(
    rc: &RunConfig,
    out_dir: &Path,
    checkpoint: Option<PathBuf>,
    log: Option<PathBuf>,
    range: &str,
) -> Result<()> {
    let (start, end) = range
        .split_once("..")
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
        .filter(|(a, b)| a < b)
        .ok_or_else(|| {
            Error::config(format!("--range wants `start..end` with start < end, got `{range}`"))
        })?;
    let ckpt = required(checkpoint, &rc.checkpoint, "checkpoint")?;
    let log = required(log, &rc.log, "log")?;
    let model = Model::load(&ckpt)?;
    let records = load_log(&log)?;
    let frames = load_frames(&log, rc.frame_dir.as_deref(), &records)?;

    let preds = rollout(&model.worker, &model.manager, &frames, &records, start, end)?;
    write_text(&out_dir.join("predictions.csv"), &predictions_to_csv(&preds))?;
    println!("predicted samples {start}..{end}, wrote predictions.csv");
    Ok(())
}

fn cmd_plot(rc: &RunConfig, out_dir: &Path, predictions: Option<PathBuf>) -> Result<()> {
    let path = required(predictions, &rc.predictions, "predictions")?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let records = parse_predictions_csv(&text, &path)?;
    let svg = predictions_svg(&records);
    let out = out_dir.join("predictions.svg");
    write_text(&out, &svg)?;
    println!("plotted {} points to {}", records.len(), out.display());
    Ok(())
}
