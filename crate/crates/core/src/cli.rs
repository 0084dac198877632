//! Command-line interface.
//!
//! Flags override config-file values; everything resolves into one
//! [`RunConfig`] that is written beside the outputs, so re-running a command
//! with `--config <snapshot>` reproduces the run.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::Dataset;
use crate::downstream::{self, fit_linear_svm};
use crate::error::{Error, Result};
use crate::io::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::io::config::RunConfig;
use crate::io::{atomic_write, off, xyz};
use crate::jigsaw::{self, VoxelPermutation};
use crate::net::{attach_classifier_head, swap_head, Parameters};
use crate::rng::{purpose, Rng};
use crate::selfcheck::run_selfcheck;
use crate::synth::{synthesize_dataset, ShapeFamily};
use crate::train::{self, TaskKind};

#[derive(Parser)]
#[command(
    name = "pointjig",
    version,
    about = "Self-supervised pre-training for point clouds by voxel shuffling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train on the voxel-shuffle task and write a checkpoint
    Pretrain(PretrainArgs),
    /// Fine-tune a checkpoint on labeled data (segmentation or classification)
    Finetune(FinetuneArgs),
    /// Export embeddings as CSV, optionally with a 2D PCA projection
    Embed(EmbedArgs),
    /// Train a linear SVM on frozen embeddings and report test accuracy
    EvalSvm(EvalSvmArgs),
    /// Write original/shuffled clouds with voxel labels for inspection
    JigsawPreview(PreviewArgs),
    /// Run the built-in oracle and invariant quick suite
    Selfcheck,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; command-line flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset: a directory, an .xyz/.off file, or `synth:<spec>`
    #[arg(long)]
    data: Option<String>,
    /// Run seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output checkpoint path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training-log CSV path (default `<out>.log.csv`)
    #[arg(long)]
    log: Option<PathBuf>,
    /// Voxels per axis
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    /// Per-point part segmentation
    Seg,
    /// Object classification
    Cls,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to start from
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Output checkpoint path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training-log CSV path (default `<out>.log.csv`)
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Embedding CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a 2D PCA projection CSV here
    #[arg(long)]
    pca2d: Option<PathBuf>,
    /// Which split to export (default `all`)
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args)]
struct EvalSvmArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Label a fraction of the train split (few-shot protocol)
    #[arg(long, conflicts_with = "labels_n")]
    labels_frac: Option<f64>,
    /// Label exactly n samples of the train split (few-shot protocol)
    #[arg(long)]
    labels_n: Option<usize>,
    #[arg(long)]
    c_reg: Option<f64>,
    /// Unit-normalize embeddings before the classifier
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    train_split: Option<String>,
    #[arg(long)]
    test_split: Option<String>,
    /// Metrics CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PreviewArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for the .xyz files
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cloud index to preview
    #[arg(long)]
    index: Option<usize>,
    /// Voxels per axis
    #[arg(long)]
    k: Option<usize>,
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Finetune(args) => cmd_finetune(args),
        Command::Embed(args) => cmd_embed(args),
        Command::EvalSvm(args) => cmd_eval_svm(args),
        Command::JigsawPreview(args) => cmd_preview(args),
        Command::Selfcheck => return if run_selfcheck() { 0 } else { 1 },
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve_common(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(data) = &common.data {
        cfg.data = Some(data.clone());
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn apply_train_flags(cfg: &mut RunConfig, flags: &TrainFlags) {
    if let Some(epochs) = flags.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(batch) = flags.batch_size {
        cfg.train.batch_size = batch;
    }
    if let Some(lr) = flags.learning_rate {
        cfg.train.learning_rate = lr;
    }
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn require<'a, T>(value: &'a Option<T>, what: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{what} required (flag or config)")))
}

/// Writes the resolved-config snapshot beside an output file.
fn write_snapshot(cfg: &RunConfig, beside: &Path) -> Result<()> {
    let mut name = beside.as_os_str().to_owned();
    name.push(".config.toml");
    cfg.save(PathBuf::from(name))
}

// ---------------------------------------------------------------- datasets

/// Loads `--data`: `synth:<families>[,count=..][,points=..][,seed=..]`, a
/// single .xyz/.off file, or a directory (`<root>/*.xyz`,
/// `<root>/<class>/*.xyz`, or `<root>/<class>/<split>/*.xyz`). Loaded
/// clouds are normalized to the unit cube; synthetic datasets get
/// stratified `train`/`test` splits.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let spec = require(&cfg.data, "--data")?;
    if let Some(rest) = spec.strip_prefix("synth:") {
        return load_synth(rest, cfg);
    }
    let path = Path::new(spec);
    if path.is_file() {
        let cloud = load_cloud_file(path, cfg, 0, cfg.train.seed)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cloud".into());
        Dataset::new(name, vec![cloud])
    } else if path.is_dir() {
        load_directory(path, cfg)
    } else {
        Err(Error::Config(format!("data path '{spec}' does not exist")))
    }
}

fn load_synth(spec: &str, cfg: &RunConfig) -> Result<Dataset> {
    let mut fields = spec.split(',');
    let family_spec = fields
        .next()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config("synth: no families given".into()))?;
    let families: Vec<ShapeFamily> = family_spec
        .split('+')
        .map(ShapeFamily::parse)
        .collect::<Result<_>>()?;
    let mut count = 50usize;
    let mut points = 256usize;
    let mut seed = cfg.train.seed;
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("synth: bad field '{field}'")))?;
        let parse_err = || Error::Config(format!("synth: bad value '{value}' for {key}"));
        match key {
            "count" => count = value.parse().map_err(|_| parse_err())?,
            "points" => points = value.parse().map_err(|_| parse_err())?,
            "seed" => seed = value.parse().map_err(|_| parse_err())?,
            _ => return Err(Error::Config(format!("synth: unknown field '{key}'"))),
        }
    }
    let mut rng = Rng::stream2(seed, purpose::DATA, 0);
    synthesize_dataset(&families, count, points, &mut rng)?
        .with_stratified_split("train", "test", 0.5)
}

fn is_cloud_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("xyz") | Some("off")
    )
}

fn load_cloud_file(
    path: &Path,
    cfg: &RunConfig,
    file_index: u64,
    seed: u64,
) -> Result<crate::cloud::PointCloud> {
    let cloud = match path.extension().and_then(|e| e.to_str()) {
        Some("xyz") => xyz::load_xyz(path)?,
        Some("off") => {
            let mode = if cfg.ingest.off_vertices {
                off::OffMode::Vertices
            } else {
                off::OffMode::SurfaceSample {
                    points: cfg.ingest.points,
                    seed: Rng::stream2(seed, purpose::DATA, file_index).next_u64(),
                }
            };
            off::load_off(path, mode)?
        }
        _ => {
            return Err(Error::Config(format!(
                "unsupported file type '{}'",
                path.display()
            )))
        }
    };
    Ok(jigsaw::scale_to_unit_cube(&cloud))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();
    Ok(entries)
}

fn load_directory(root: &Path, cfg: &RunConfig) -> Result<Dataset> {
    let seed = cfg.train.seed;
    let name = root
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let entries = sorted_entries(root)?;
    let class_dirs: Vec<&PathBuf> = entries.iter().filter(|p| p.is_dir()).collect();

    if class_dirs.is_empty() {
        // flat directory of cloud files, unlabeled
        let mut clouds = Vec::new();
        let mut counter = 0u64;
        for file in entries.iter().filter(|p| p.is_file() && is_cloud_file(p)) {
            clouds.push(load_cloud_file(file, cfg, counter, seed)?);
            counter += 1;
        }
        if clouds.is_empty() {
            return Err(Error::Dataset(format!(
                "no .xyz/.off files under '{}'",
                root.display()
            )));
        }
        return Dataset::new(name, clouds);
    }

    // one subdirectory per class, optionally one more level of split dirs
    let mut clouds = Vec::new();
    let mut labels = Vec::new();
    let mut splits: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    let mut counter = 0u64;
    for (class, class_dir) in class_dirs.iter().enumerate() {
        for entry in sorted_entries(class_dir)? {
            if entry.is_file() && is_cloud_file(&entry) {
                clouds.push(load_cloud_file(&entry, cfg, counter, seed)?);
                labels.push(class);
                counter += 1;
            } else if entry.is_dir() {
                let split_name = entry
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                for file in sorted_entries(&entry)? {
                    if file.is_file() && is_cloud_file(&file) {
                        splits.entry(split_name.clone()).or_default().push(clouds.len());
                        clouds.push(load_cloud_file(&file, cfg, counter, seed)?);
                        labels.push(class);
                        counter += 1;
                    }
                }
            }
        }
    }
    if clouds.is_empty() {
        return Err(Error::Dataset(format!(
            "no .xyz/.off files under '{}'",
            root.display()
        )));
    }
    let num_classes = class_dirs.len();
    let mut ds = Dataset::new(name, clouds)?.with_class_labels(labels, num_classes)?;
    for (split, indices) in splits {
        ds = ds.with_split(split, indices)?;
    }
    Ok(ds)
}

// ---------------------------------------------------------------- commands

fn cmd_pretrain(args: PretrainArgs) -> Result<()> {
    let mut cfg = resolve_common(&args.common)?;
    cfg.command = Some("pretrain".into());
    apply_train_flags(&mut cfg, &args.train);
    if let Some(k) = args.k {
        cfg.jigsaw.k = k;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(path_string(out));
    }
    if let Some(log) = &args.log {
        cfg.log = Some(path_string(log));
    }
    cfg.train.task = TaskKind::Pretrain;
    cfg.network.num_point_classes = cfg.jigsaw.num_classes();
    cfg.validate()?;

    let out = PathBuf::from(require(&cfg.out, "--out")?);
    let dataset = load_dataset(&cfg)?;
    let (params, log) = train::pretrain(&dataset, &cfg.jigsaw, &cfg.network, &cfg.train)?;

    let steps = log.records.len() as u64 * dataset.len().div_ceil(cfg.train.batch_size) as u64;
    save_checkpoint(&out, &Checkpoint::new(params, steps, cfg.train.seed))?;
    let log_path = cfg
        .log
        .clone()
        .unwrap_or_else(|| format!("{}.log.csv", out.display()));
    atomic_write(&log_path, log.to_csv().as_bytes())?;
    cfg.log = Some(log_path);
    write_snapshot(&cfg, &out)?;

    let last = log.records.last().expect("at least one epoch");
    println!(
        "pretrain: {} clouds, {} epochs, final loss {:.6}, per-point accuracy {:.4}",
        dataset.len(),
        log.records.len(),
        last.loss,
        last.accuracy
    );
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn cmd_finetune(args: FinetuneArgs) -> Result<()> {
    let mut cfg = resolve_common(&args.common)?;
    cfg.command = Some("finetune".into());
    apply_train_flags(&mut cfg, &args.train);
    if let Some(ckpt) = &args.ckpt {
        cfg.ckpt = Some(path_string(ckpt));
    }
    if let Some(out) = &args.out {
        cfg.out = Some(path_string(out));
    }
    if let Some(log) = &args.log {
        cfg.log = Some(path_string(log));
    }
    if let Some(task) = args.task {
        cfg.train.task = match task {
            TaskArg::Seg => TaskKind::FinetuneSegmentation,
            TaskArg::Cls => TaskKind::FinetuneClassification,
        };
    }
    if cfg.train.task == TaskKind::Pretrain {
        return Err(Error::Config("--task seg|cls required".into()));
    }

    let ckpt_path = PathBuf::from(require(&cfg.ckpt, "--ckpt")?);
    let out = PathBuf::from(require(&cfg.out, "--out")?);
    let dataset = load_dataset(&cfg)?;
    let loaded = load_checkpoint(&ckpt_path)?;

    let mut head_rng = Rng::stream2(cfg.train.seed, purpose::INIT, 1);
    let params: Parameters = match cfg.train.task {
        TaskKind::FinetuneSegmentation => {
            let parts = dataset
                .point_labels()
                .ok_or_else(|| Error::Config("finetune: dataset has no point labels".into()))?
                .iter()
                .flatten()
                .max()
                .map(|&m| m + 1)
                .unwrap_or(1);
            swap_head(&loaded.params, parts, &mut head_rng)
        }
        TaskKind::FinetuneClassification => {
            let classes = dataset
                .num_classes()
                .ok_or_else(|| Error::Config("finetune: dataset has no class labels".into()))?;
            attach_classifier_head(&loaded.params, classes, &mut head_rng)
        }
        TaskKind::Pretrain => unreachable!("validated above"),
    };
    cfg.network = params.config.clone();
    cfg.validate()?;

    let train_set = if dataset.split_names().any(|s| s == cfg.eval.train_split) {
        dataset.restricted_to(&cfg.eval.train_split)?
    } else {
        dataset
    };
    let (tuned, log) = train::finetune(&params, &train_set, &params.config, &cfg.train)?;

    let steps = log.records.len() as u64 * train_set.len().div_ceil(cfg.train.batch_size) as u64;
    save_checkpoint(&out, &Checkpoint::new(tuned, loaded.step + steps, cfg.train.seed))?;
    let log_path = cfg
        .log
        .clone()
        .unwrap_or_else(|| format!("{}.log.csv", out.display()));
    atomic_write(&log_path, log.to_csv().as_bytes())?;
    cfg.log = Some(log_path);
    write_snapshot(&cfg, &out)?;

    let last = log.records.last().expect("at least one epoch");
    println!(
        "finetune: {} clouds, {} epochs, final loss {:.6}, accuracy {:.4}",
        train_set.len(),
        log.records.len(),
        last.loss,
        last.accuracy
    );
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn embedding_csv(
    dataset: &Dataset,
    indices: &[usize],
    rows: &[Vec<f64>],
    header_values: &[String],
) -> String {
    let labels = dataset.class_labels();
    let mut csv = String::from("cloud_id,class_label");
    for h in header_values {
        csv.push(',');
        csv.push_str(h);
    }
    csv.push('\n');
    for (&idx, row) in indices.iter().zip(rows) {
        let label = labels.map_or(String::new(), |l| l[idx].to_string());
        csv.push_str(&format!("{idx},{label}"));
        for v in row {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    csv
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let mut cfg = resolve_common(&args.common)?;
    cfg.command = Some("embed".into());
    if let Some(ckpt) = &args.ckpt {
        cfg.ckpt = Some(path_string(ckpt));
    }
    if let Some(out) = &args.out {
        cfg.out = Some(path_string(out));
    }
    if let Some(pca) = &args.pca2d {
        cfg.pca2d = Some(path_string(pca));
    }
    if let Some(split) = &args.split {
        cfg.split = Some(split.clone());
    }
    cfg.validate()?;

    let ckpt_path = PathBuf::from(require(&cfg.ckpt, "--ckpt")?);
    let out = PathBuf::from(require(&cfg.out, "--out")?);
    let dataset = load_dataset(&cfg)?;
    let loaded = load_checkpoint(&ckpt_path)?;
    let split = cfg.split.clone().unwrap_or_else(|| "all".into());
    let indices = dataset.split(&split)?;
    let embeddings = downstream::extract_embeddings(&loaded.params, &dataset, &indices);

    let dim = loaded.params.config.embed_dim;
    let header: Vec<String> = (0..dim).map(|c| format!("e{c}")).collect();
    atomic_write(
        &out,
        embedding_csv(&dataset, &indices, &embeddings, &header).as_bytes(),
    )?;
    println!(
        "embed: wrote {} x {} embeddings to {}",
        embeddings.len(),
        dim,
        out.display()
    );

    if let Some(pca_path) = cfg.pca2d.clone() {
        let projected = downstream::pca_2d(&embeddings, cfg.train.seed)?;
        let rows: Vec<Vec<f64>> = projected.iter().map(|p| p.to_vec()).collect();
        let header = vec!["pc1".to_string(), "pc2".to_string()];
        atomic_write(
            Path::new(&pca_path),
            embedding_csv(&dataset, &indices, &rows, &header).as_bytes(),
        )?;
        println!("embed: wrote 2D PCA projection to {pca_path}");
    }
    write_snapshot(&cfg, &out)?;
    Ok(())
}

fn cmd_eval_svm(args: EvalSvmArgs) -> Result<()> {
    let mut cfg = resolve_common(&args.common)?;
    cfg.command = Some("eval-svm".into());
    if let Some(ckpt) = &args.ckpt {
        cfg.ckpt = Some(path_string(ckpt));
    }
    if let Some(out) = &args.out {
        cfg.out = Some(path_string(out));
    }
    if let Some(frac) = args.labels_frac {
        cfg.eval.labels_frac = Some(frac);
    }
    if let Some(n) = args.labels_n {
        cfg.eval.labels_n = Some(n);
    }
    if let Some(c) = args.c_reg {
        cfg.eval.c_reg = c;
    }
    if args.normalize {
        cfg.eval.normalize_embeddings = true;
    }
    if let Some(s) = &args.train_split {
        cfg.eval.train_split = s.clone();
    }
    if let Some(s) = &args.test_split {
        cfg.eval.test_split = s.clone();
    }
    cfg.validate()?;
    if cfg.eval.labels_frac.is_some() && cfg.eval.labels_n.is_some() {
        return Err(Error::Config(
            "eval-svm: give either labels_frac or labels_n, not both".into(),
        ));
    }

    let ckpt_path = PathBuf::from(require(&cfg.ckpt, "--ckpt")?);
    let dataset = load_dataset(&cfg)?;
    let loaded = load_checkpoint(&ckpt_path)?;
    let seed = cfg.train.seed;

    let labels = dataset
        .class_labels()
        .ok_or_else(|| Error::Config("eval-svm: dataset has no class labels".into()))?;
    let full_train = dataset.split(&cfg.eval.train_split)?;
    let test_idx = dataset.split(&cfg.eval.test_split)?;

    let requested = match (cfg.eval.labels_n, cfg.eval.labels_frac) {
        (Some(n), None) => Some(n),
        (None, Some(f)) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("labels_frac {f} not in [0, 1]")));
            }
            let num_classes = dataset.num_classes().unwrap_or(1);
            Some(
                ((f * full_train.len() as f64).round() as usize)
                    .clamp(num_classes, full_train.len()),
            )
        }
        (None, None) => None,
        (Some(_), Some(_)) => unreachable!("rejected above"),
    };
    let (train_idx, labeled) = match requested {
        Some(n) if n < full_train.len() => {
            let plan = downstream::few_shot_sample(&dataset, &cfg.eval.train_split, n, seed)?;
            (plan.selected_indices, n)
        }
        _ => {
            let n = full_train.len();
            (full_train, n)
        }
    };

    let mut train_emb = downstream::extract_embeddings(&loaded.params, &dataset, &train_idx);
    let mut test_emb = downstream::extract_embeddings(&loaded.params, &dataset, &test_idx);
    if cfg.eval.normalize_embeddings {
        downstream::unit_normalize(&mut train_emb);
        downstream::unit_normalize(&mut test_emb);
    }
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
    let classifier = fit_linear_svm(
        &train_emb,
        &train_labels,
        cfg.eval.c_reg,
        &mut Rng::stream2(seed, purpose::EVAL, 0),
    )?;
    let predictions: Vec<usize> = test_emb.iter().map(|e| classifier.predict(e)).collect();
    let accuracy = downstream::accuracy(&predictions, &test_labels)?;

    println!(
        "eval-svm: accuracy {accuracy:.4} ({} labeled train, {} test, C_reg {})",
        labeled,
        test_idx.len(),
        cfg.eval.c_reg
    );
    if let Some(out) = cfg.out.clone() {
        let out = PathBuf::from(out);
        let mut csv = String::from("key,value\n");
        csv.push_str(&format!("dataset,{}\n", dataset.name));
        csv.push_str(&format!("train_split,{}\n", cfg.eval.train_split));
        csv.push_str(&format!("test_split,{}\n", cfg.eval.test_split));
        csv.push_str(&format!("labeled_train,{labeled}\n"));
        csv.push_str(&format!("test_size,{}\n", test_idx.len()));
        csv.push_str(&format!("c_reg,{}\n", cfg.eval.c_reg));
        csv.push_str(&format!("seed,{seed}\n"));
        csv.push_str(&format!("accuracy,{accuracy}\n"));
        atomic_write(&out, csv.as_bytes())?;
        write_snapshot(&cfg, &out)?;
        println!("metrics written to {}", out.display());
    }
    Ok(())
}

fn cmd_preview(args: PreviewArgs) -> Result<()> {
    let mut cfg = resolve_common(&args.common)?;
    cfg.command = Some("jigsaw-preview".into());
    if let Some(out) = &args.out {
        cfg.out = Some(path_string(out));
    }
    if let Some(index) = args.index {
        cfg.preview_index = index;
    }
    if let Some(k) = args.k {
        cfg.jigsaw.k = k;
    }
    cfg.validate()?;

    let out_dir = PathBuf::from(require(&cfg.out, "--out")?);
    let dataset = load_dataset(&cfg)?;
    let index = cfg.preview_index;
    if index >= dataset.len() {
        return Err(Error::Config(format!(
            "preview index {index} out of range ({} clouds)",
            dataset.len()
        )));
    }
    let k = cfg.jigsaw.k;
    let cloud = dataset.cloud(index);
    let normalized = jigsaw::scale_to_unit_cube(cloud);
    let assignment = jigsaw::voxelize(&normalized, k);

    let mut rng = Rng::stream2(cfg.train.seed, purpose::PREVIEW, index as u64);
    let perm = VoxelPermutation::sample(&mut rng, k);
    let donor_idx = rng.index(dataset.len());
    let donor = (cfg.jigsaw.replace_count > 0).then(|| dataset.cloud(donor_idx));
    let sample =
        jigsaw::make_jigsaw_sample_with_permutation(cloud, &cfg.jigsaw, perm, &mut rng, donor)?;

    std::fs::create_dir_all(&out_dir)?;
    let original_labels: Vec<usize> = assignment.ids.iter().map(|v| v.0).collect();
    xyz::save_xyz(
        out_dir.join("original.xyz"),
        &normalized,
        Some(&original_labels),
    )?;
    let target_labels: Vec<usize> = sample.targets.iter().map(|v| v.0).collect();
    xyz::save_xyz(
        out_dir.join("shuffled.xyz"),
        &sample.shuffled,
        Some(&target_labels),
    )?;
    write_snapshot(&cfg, &out_dir.join("preview"))?;
    println!(
        "jigsaw-preview: cloud {index} (n={}), k={k}; wrote original.xyz and shuffled.xyz to {}",
        cloud.len(),
        out_dir.display()
    );
    Ok(())
}
