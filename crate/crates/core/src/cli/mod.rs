//! Command-line front end: `neural-ricci {train, analyze, sweep, ablate, report}`.

pub mod config;
pub mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::curvature::{CostMode, GroundMetric, NeighborMode};
use crate::data::mnist::{ingest_mnist, DatasetHandle};
use crate::data::{calibration_subset, Dataset};
use crate::error::{Error, Result};
use crate::graph::NeuralGraph;
use crate::nn::io::{load_model, save_model};
use crate::nn::model::{Activation, ModelSpec};
use crate::nn::train::{accuracy, train_sgd};
use crate::pruning::{
    ascending_order, curves_csv, run_ablation, score_magnitude, score_snip, score_synflow, sweep, zero_biases,
    AblationInputs, AblationKind, Method, PruneMask, SparsityCurve,
};
use crate::ranking::{curvature_table, edge_records_csv, rank_by_curvature, CurvatureTable, TableMeta};

pub use config::{Arch, OrderChoice, RunConfig, Scheme};

#[derive(Parser, Debug)]
#[command(
    name = "neural-ricci",
    version,
    about = "Neural Ricci curvature analysis and pruning sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "NEURAL_RICCI_JOBS")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model file (default `<out>/model.bin`).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Directory with the IDX files.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct CurvatureFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    ground_metric: Option<GroundMetric>,
    /// Neighbor masses: neural or static.
    #[arg(long)]
    neighbors: Option<NeighborMode>,
    /// Edge cost: neural or static.
    #[arg(long)]
    edge_cost: Option<CostMode>,
    /// Calibration examples per class.
    #[arg(long)]
    calib_per_class: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and save it.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long)]
        activation: Option<Activation>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        wd: Option<f64>,
        /// Seed for initialization and shuffling.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Compute the per-weight curvature table.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        curvature: CurvatureFlags,
        /// Also write every per-edge, per-example value.
        #[arg(long)]
        dump_edges: bool,
    },
    /// Remove weights in ranked order and record test accuracy.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        order: Option<OrderChoice>,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        calib_per_class: Option<usize>,
    },
    /// Run one of the ablation studies.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: Option<AblationKind>,
        #[command(flatten)]
        curvature: CurvatureFlags,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        fractions: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        calib_sizes: Option<Vec<usize>>,
    },
    /// Summarize sweep results.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 success, 1 runtime failure, 2 usage or
/// configuration error.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(j) = common.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(m) = &common.model {
        cfg.model_path = Some(m.clone());
    }
    if let Some(d) = &common.data {
        cfg.dataset.path = d.clone();
    }
    Ok(cfg)
}

fn apply_curvature(cfg: &mut RunConfig, f: &CurvatureFlags) {
    if let Some(a) = f.alpha {
        cfg.curvature.alpha = a;
    }
    if let Some(g) = f.ground_metric {
        cfg.curvature.ground = g;
    }
    if let Some(n) = f.neighbors {
        cfg.curvature.neighbors = n;
    }
    if let Some(c) = f.edge_cost {
        cfg.curvature.cost = c;
    }
    if let Some(k) = f.calib_per_class {
        cfg.calibration_per_class = k;
    }
}

fn dispatch(command: Command) -> Result<()> {
    let (cfg, action): (RunConfig, Box<dyn FnOnce(&RunConfig) -> Result<()> + Send>) = match command {
        Command::Train {
            common,
            arch,
            activation,
            scheme,
            wd,
            seed,
            epochs,
            lr,
            batch_size,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(a) = arch {
                cfg.model.arch = a;
            }
            if let Some(a) = activation {
                cfg.model.activation = a;
            }
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            if let Some(w) = wd {
                cfg.weight_decay = w;
            }
            if let Some(s) = seed {
                cfg.model.seed = s;
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(l) = lr {
                cfg.train.lr = l;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = b;
            }
            (cfg, Box::new(cmd_train))
        }
        Command::Analyze {
            common,
            curvature,
            dump_edges,
        } => {
            let mut cfg = base_config(&common)?;
            apply_curvature(&mut cfg, &curvature);
            (cfg, Box::new(move |c: &RunConfig| cmd_analyze(c, dump_edges)))
        }
        Command::Sweep {
            common,
            methods,
            order,
            fractions,
            calib_per_class,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(m) = methods {
                cfg.methods = m;
            }
            if let Some(o) = order {
                cfg.order = o;
            }
            if let Some(f) = fractions {
                cfg.fractions = Some(f);
            }
            if let Some(k) = calib_per_class {
                cfg.calibration_per_class = k;
            }
            (cfg, Box::new(cmd_sweep))
        }
        Command::Ablate {
            common,
            kind,
            curvature,
            fractions,
            calib_sizes,
        } => {
            let mut cfg = base_config(&common)?;
            apply_curvature(&mut cfg, &curvature);
            if let Some(k) = kind {
                cfg.ablation.kind = Some(k);
            }
            if let Some(f) = fractions {
                cfg.fractions = Some(f);
            }
            if let Some(s) = calib_sizes {
                cfg.ablation.calib_sizes = s;
            }
            (cfg, Box::new(cmd_ablate))
        }
        Command::Report { common } => (base_config(&common)?, Box::new(cmd_report)),
    };
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| action(&cfg))
}

fn load_data(cfg: &RunConfig) -> Result<DatasetHandle> {
    let mut h = ingest_mnist(&cfg.dataset.path, cfg.dataset.validation_size)?;
    h.name = cfg.dataset.name.clone();
    Ok(h)
}

fn calibration(cfg: &RunConfig, data: &DatasetHandle) -> Result<Dataset> {
    calibration_subset(&data.train, cfg.calibration_per_class * data.train.classes)
}

fn load_checked_model(cfg: &RunConfig, data: &DatasetHandle) -> Result<ModelSpec> {
    let path = cfg.model_path();
    let model = load_model(&path)?;
    if model.input_dims != data.test.inputs.first().map_or(0, |x| x.len()) || model.output_dims != data.test.classes {
        return Err(Error::InvalidInput(format!(
            "model {} ({} -> {}) does not match the dataset",
            path.display(),
            model.input_dims,
            model.output_dims
        )));
    }
    Ok(model)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let init = cfg.build_model(data.train.inputs[0].len(), data.train.classes)?;
    let (model, log) = train_sgd(&init, &data.train, &cfg.train_config())?;
    let path = cfg.model_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_model(&model, &path)?;
    let test_acc = accuracy(&model, &data.test);
    let mut log_csv = log.to_csv();
    log_csv.push_str(&format!("# test_accuracy,{test_acc}\n"));
    write(&cfg.output_dir.join("train_log.csv"), log_csv)?;
    let summary = serde_json::json!({
        "arch": cfg.model.arch,
        "activation": cfg.model.activation,
        "scheme": cfg.scheme,
        "train": cfg.train_config(),
        "model_hash": model.hash_hex(),
        "parameters": model.weight_count(),
        "mean_abs_weight": model.mean_abs_weight(),
        "test_accuracy": test_acc,
    });
    write(
        &cfg.output_dir.join("train_summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    println!("model: {}", path.display());
    println!("test accuracy: {test_acc:.4}");
    Ok(())
}

fn cmd_analyze(cfg: &RunConfig, dump_edges: bool) -> Result<()> {
    let data = load_data(cfg)?;
    let model = load_checked_model(cfg, &data)?;
    let calib = calibration(cfg, &data)?;
    let graph = NeuralGraph::build(&model)?;
    let (mut table, records) = curvature_table(&model, &graph, &calib, &cfg.curvature, dump_edges)?;
    table.meta.calibration = format!(
        "{}: first {} per class of the training split",
        cfg.dataset.name, cfg.calibration_per_class
    );
    let out = &cfg.output_dir;
    write(&out.join("curvature.csv"), table.to_csv())?;
    write(&out.join("curvature.json"), table.meta_json())?;
    if dump_edges {
        write(&out.join("curvature_edges.csv"), edge_records_csv(&records))?;
    }
    let p = table.entries.len();
    let neg = table.entries.iter().filter(|e| e.kappa_min < 0.0).count();
    let sentinel = table.entries.iter().filter(|e| e.sentinel).count();
    println!("parameters: {p}");
    println!("negative: {neg} ({:.2}%)", 100.0 * neg as f64 / p as f64);
    println!("nonnegative: {} ({:.2}%)", p - neg, 100.0 * (p - neg) as f64 / p as f64);
    println!("sentinel fraction: {:.4}", sentinel as f64 / p as f64);
    Ok(())
}

/// Reads the table written by `analyze` and checks it belongs to `model`.
fn load_table(cfg: &RunConfig, model: &ModelSpec) -> Result<CurvatureTable> {
    let csv_path = cfg.output_dir.join("curvature.csv");
    let json_path = cfg.output_dir.join("curvature.json");
    let missing = |p: &Path| Error::InvalidInput(format!("{} not found; run `analyze` first", p.display()));
    let text = std::fs::read_to_string(&csv_path).map_err(|_| missing(&csv_path))?;
    let meta_text = std::fs::read_to_string(&json_path).map_err(|_| missing(&json_path))?;
    let meta: serde_json::Value = serde_json::from_str(&meta_text)?;
    let hash = meta["model_hash"].as_str().unwrap_or_default();
    if hash != model.hash_hex() {
        return Err(Error::InvalidInput(format!(
            "{} was computed for a different model",
            csv_path.display()
        )));
    }
    let table = CurvatureTable::from_csv(
        &text,
        TableMeta {
            model_hash: hash.to_string(),
            ..Default::default()
        },
    )?;
    if table.entries.len() != model.weight_count() {
        return Err(Error::Format("curvature table does not cover every weight".into()));
    }
    Ok(table)
}

fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let model = load_checked_model(cfg, &data)?;
    let fractions = cfg.fractions();
    let mut orders: Vec<(Method, &str, Vec<usize>)> = Vec::new();
    for &method in &cfg.methods {
        match method {
            Method::Curvature => {
                let ranked = rank_by_curvature(&load_table(cfg, &model)?, &model);
                if cfg.order != OrderChoice::NegativeFirst {
                    orders.push((method, "positive-first", ranked.positive_first()));
                }
                if cfg.order != OrderChoice::PositiveFirst {
                    orders.push((method, "negative-first", ranked.negative_first()));
                }
            }
            Method::Magnitude => orders.push((
                method,
                "score-ascending",
                ascending_order(&score_magnitude(&model).scores, &model),
            )),
            Method::Snip => {
                let calib = calibration(cfg, &data)?;
                let s = score_snip(&model, &calib)?;
                orders.push((method, "score-ascending", ascending_order(&s.scores, &model)));
            }
            Method::Synflow => {
                let (_, order) = score_synflow(&model, &cfg.synflow)?;
                orders.push((method, "score-ascending", order));
            }
        }
    }
    let mut curves = Vec::new();
    for (method, label, order) in &orders {
        let c = sweep(&model, order, &fractions, &data.test, method.name(), label)?;
        write(
            &cfg.output_dir.join(format!("sweep_{}_{}.csv", method.name(), label)),
            c.to_csv(),
        )?;
        curves.push(c);
    }
    write(&cfg.output_dir.join("curves.csv"), curves_csv(&curves))?;
    write(
        &cfg.output_dir.join("curves.svg"),
        svg::curves_svg("Accuracy under weight removal", &curves),
    )?;
    for c in &curves {
        println!("{} ({}): AUC {:.4}", c.method, c.order, c.auc());
    }
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    let kind = cfg
        .ablation
        .kind
        .ok_or_else(|| Error::Config("no ablation kind given (use --kind)".into()))?;
    let data = load_data(cfg)?;
    let model = load_checked_model(cfg, &data)?;
    let graph = NeuralGraph::build(&model)?;
    let fractions = cfg.fractions();
    let inputs = AblationInputs {
        model: &model,
        graph: &graph,
        pool: &data.train,
        calibration_size: cfg.calibration_per_class * data.train.classes,
        test: &data.test,
        curvature: cfg.curvature,
        fractions: &fractions,
        calib_sizes: &cfg.ablation.calib_sizes,
    };
    let report = run_ablation(kind, &inputs)?;
    let name = serde_json::to_value(kind)?.as_str().unwrap_or("ablation").to_string();
    let dir = cfg.output_dir.join(format!("ablation-{name}"));
    report.write_dir(&dir)?;
    let curves: Vec<SparsityCurve> = report
        .variants
        .iter()
        .map(|v| SparsityCurve {
            method: v.name.clone(),
            ..v.curve.clone()
        })
        .collect();
    write(
        &dir.join("curves.svg"),
        svg::curves_svg(&format!("Ablation: {name}"), &curves),
    )?;
    for v in &report.variants {
        println!("{}: AUC {:.4}", v.name, v.auc);
    }
    Ok(())
}

/// Parses the combined curve CSV written by `sweep`.
pub fn parse_curves_csv(text: &str) -> Result<Vec<SparsityCurve>> {
    let mut lines = text.lines();
    if lines.next() != Some("fraction,accuracy,method,order") {
        return Err(Error::Format("curve csv has an unexpected header".into()));
    }
    let mut curves: Vec<SparsityCurve> = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("bad curve row '{line}'"));
        if f.len() != 4 {
            return Err(bad());
        }
        let point = (f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?);
        match curves.last_mut() {
            Some(c) if c.method == f[2] && c.order == f[3] => c.points.push(point),
            _ => curves.push(SparsityCurve {
                method: f[2].to_string(),
                order: f[3].to_string(),
                model_hash: String::new(),
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let out = &cfg.output_dir;
    let curves_path = out.join("curves.csv");
    let text = std::fs::read_to_string(&curves_path)
        .map_err(|_| Error::InvalidInput(format!("{} not found; run `sweep` first", curves_path.display())))?;
    let curves = parse_curves_csv(&text)?;
    let data = load_data(cfg)?;
    let model = load_checked_model(cfg, &data)?;
    let empty = PruneMask::from_order(model.weight_count(), &[], 0);
    let all_removed = PruneMask {
        keep: vec![false; model.weight_count()],
    };
    let base = accuracy(&empty.apply(&model), &data.test);
    let chance = accuracy(&zero_biases(&all_removed.apply(&model)), &data.test);
    let checkpoints = [0.1, 0.2, 0.3, 0.4, 0.5];
    let mut md = String::from("# Pruning report\n\n");
    md.push_str(&format!(
        "Model: `{}` ({} weights)\n\n",
        cfg.model_path().display(),
        model.weight_count()
    ));
    md.push_str(&format!("Unpruned test accuracy: {base:.4}\n\n"));
    md.push_str(&format!(
        "All weights and biases zeroed: accuracy {chance:.4} (chance is {:.4})\n\n",
        1.0 / data.test.classes as f64
    ));
    md.push_str("| method | order | AUC |");
    for c in checkpoints {
        md.push_str(&format!(" {:.0}% |", c * 100.0));
    }
    md.push_str("\n|---|---|---|");
    md.push_str(&"---|".repeat(checkpoints.len()));
    md.push('\n');
    let mut summary = Vec::new();
    for c in &curves {
        md.push_str(&format!("| {} | {} | {:.4} |", c.method, c.order, c.auc()));
        let mut at = BTreeMap::new();
        for f in checkpoints {
            match c.accuracy_at(f) {
                Some(a) => {
                    md.push_str(&format!(" {a:.4} |"));
                    at.insert(format!("{f}"), a);
                }
                None => md.push_str(" - |"),
            }
        }
        md.push('\n');
        summary.push(serde_json::json!({
            "method": c.method, "order": c.order, "auc": c.auc(), "accuracy_at": at,
        }));
    }
    if let Ok(meta) = std::fs::read_to_string(out.join("curvature.json")) {
        let v: serde_json::Value = serde_json::from_str(&meta)?;
        md.push_str(&format!(
            "\nCurvature table: {} negative, {} nonnegative, {} sentinel minima (alpha {}).\n",
            v["negative"], v["nonnegative"], v["sentinel_minima"], v["alpha"]
        ));
    }
    write(&out.join("report.md"), md)?;
    let json = serde_json::json!({
        "unpruned_accuracy": base,
        "zeroed_accuracy": chance,
        "curves": summary,
    });
    write(&out.join("report.json"), serde_json::to_string_pretty(&json)? + "\n")?;
    println!("wrote {}", out.join("report.md").display());
    Ok(())
}
