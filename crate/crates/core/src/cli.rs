//! Command-line interface: `train`, `predict` and `bench`.

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{run_on_dataset, BenchMethod, Protocol, SyntheticSpec};
use crate::dataset::{default_na_tokens, load_csv, load_csv_with_schema, write_csv};
use crate::error::{Error, Result};
use crate::forward::ForwardConfig;
use crate::impute::ImputePolicy;
use crate::tree::{fit_tree, load_model, save_model, GrowConfig, Method, Stopping, TreeModel};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "foldtree", version, about = "LDA-split decision trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a tree on a CSV file and write the model as JSON.
    Train(TrainArgs),
    /// Predict a CSV file with a saved model.
    Predict(PredictArgs),
    /// Run a synthetic benchmark.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Ldatree,
    Foldtree,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StoppingArg {
    Prestop,
    Cv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ImputationArg {
    Node,
    Root,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[arg(long, value_enum, default_value = "ldatree")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "cv")]
    pub stopping: StoppingArg,
    /// Split acceptance p-value when pre-stopping.
    #[arg(long, default_value_t = 0.01)]
    pub prestop_p: f64,
    /// Split acceptance p-value while growing before CV pruning.
    #[arg(long, default_value_t = 0.6)]
    pub growth_p: f64,
    /// Significance level of each forward-selection step.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Test each forward step at `alpha` instead of `alpha / candidates`.
    #[arg(long)]
    pub no_bonferroni: bool,
    #[arg(long, value_enum, default_value = "node")]
    pub imputation: ImputationArg,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TreeArgs {
    pub fn config(&self) -> Result<GrowConfig> {
        for (name, v) in [
            ("prestop-p", self.prestop_p),
            ("growth-p", self.growth_p),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("--{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("--folds must be at least 2, got {}", self.folds)));
        }
        Ok(GrowConfig {
            method: match self.method {
                MethodArg::Ldatree => Method::LdaTree,
                MethodArg::Foldtree => Method::FoldTree,
            },
            stopping: match self.stopping {
                StoppingArg::Prestop => Stopping::Prestop,
                StoppingArg::Cv => Stopping::CvPrune,
            },
            prestop_p: self.prestop_p,
            growth_p: self.growth_p,
            forward: ForwardConfig {
                alpha: self.alpha,
                bonferroni: !self.no_bonferroni,
            },
            imputation: match self.imputation {
                ImputationArg::Node => ImputePolicy::NodeWise,
                ImputationArg::Root => ImputePolicy::RootNode,
            },
            folds: self.folds,
            seed: self.seed,
            ..GrowConfig::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Extra cell values to read as missing, besides "", "NA" and "?".
    #[arg(long = "na")]
    pub na: Vec<String>,
    #[command(flatten)]
    pub tree: TreeArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Add one posterior probability column per class.
    #[arg(long)]
    pub probs: bool,
    #[arg(long = "na")]
    pub na: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// chessboard3x3, rotated_chessboard, chessboard_noise, xor6d,
    /// dominant_class or split_strength_demo.
    pub spec: String,
    #[arg(long, default_value = "ldatree,foldtree,plurality,axis_gini")]
    pub methods: String,
    /// k-fold cross-validation instead of a holdout split.
    #[arg(long, conflicts_with = "holdout")]
    pub cv: Option<usize>,
    /// Training fraction of a stratified holdout split (default 0.5).
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Also write the generated dataset to this CSV file.
    #[arg(long)]
    pub dump_csv: Option<PathBuf>,
    #[command(flatten)]
    pub tree: TreeArgs,
}

fn na_tokens(extra: &[String]) -> HashSet<String> {
    let mut t = default_na_tokens();
    t.extend(extra.iter().cloned());
    t
}

fn p_summary(model: &TreeModel) -> String {
    let mut ps: Vec<f64> = model
        .nodes
        .iter()
        .filter(|n| !n.is_leaf())
        .filter_map(|n| n.diagnostics.strength.map(|s| s.p_value))
        .collect();
    if ps.is_empty() {
        return "no accepted splits".into();
    }
    ps.sort_by(f64::total_cmp);
    format!(
        "{} accepted splits, p-value min {:.3e} median {:.3e} max {:.3e}",
        ps.len(),
        ps[0],
        ps[ps.len() / 2],
        ps[ps.len() - 1]
    )
}

pub fn cmd_train(args: &TrainArgs, out: &mut impl Write) -> Result<TreeModel> {
    let config = args.tree.config()?;
    let ds = load_csv(&args.data, &args.target, &na_tokens(&args.na))?;
    let model = fit_tree(&ds, &config)?;
    save_model(&model, &args.out)?;
    let _ = writeln!(out, "rows:              {}", ds.n_rows());
    let _ = writeln!(out, "leaves:            {}", model.n_leaves());
    let _ = writeln!(out, "depth:             {}", model.depth());
    let _ = writeln!(out, "training accuracy: {:.6}", model.training_accuracy);
    let _ = writeln!(out, "splits:            {}", p_summary(&model));
    if let Some(report) = &model.pruning {
        let c = &report.candidates[report.chosen];
        let _ = writeln!(
            out,
            "pruning:           {}-fold cv accuracy {:.4} (se {:.4}) at {} leaves",
            report.folds, c.cv_accuracy, c.se, c.leaves
        );
    }
    let _ = writeln!(out, "model written to   {}", args.out.display());
    Ok(model)
}

pub fn cmd_predict(args: &PredictArgs, out: &mut impl Write) -> Result<()> {
    let model = load_model(&args.model)?;
    let (table, target) = load_csv_with_schema(
        &args.data,
        &model.schema,
        Some(&model.target_name),
        &na_tokens(&args.na),
    )?;
    let pred = model.predict_full(&table)?;

    let path = &args.out;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec![format!("predicted_{}", model.target_name)];
    if args.probs {
        header.extend(model.classes.iter().map(|c| format!("prob_{c}")));
    }
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for r in 0..table.n_rows() {
        rec.clear();
        rec.push(model.classes[pred.labels[r]].clone());
        if args.probs {
            rec.extend(pred.posteriors.row(r).iter().map(|p| p.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let _ = writeln!(out, "predicted {} rows to {}", table.n_rows(), path.display());
    if let Some(labels) = target {
        let known = labels
            .iter()
            .zip(&pred.labels)
            .filter(|(t, _)| t.is_some())
            .count();
        let correct = labels
            .iter()
            .zip(&pred.labels)
            .filter(|(t, &p)| t.as_deref() == Some(model.classes[p].as_str()))
            .count();
        if known > 0 {
            let _ = writeln!(out, "accuracy: {:.6}", correct as f64 / known as f64);
        }
    }
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs, out: &mut impl Write) -> Result<()> {
    let methods = BenchMethod::parse_list(&args.methods)?;
    let config = args.tree.config()?;
    let spec = SyntheticSpec::named(&args.spec, args.tree.seed)?;
    let protocol = match (args.cv, args.holdout) {
        (Some(k), _) => Protocol::Cv { k },
        (None, Some(fraction)) => Protocol::Holdout { fraction },
        (None, None) => Protocol::Holdout { fraction: 0.5 },
    };
    let ds = spec.generate()?;
    if let Some(path) = &args.dump_csv {
        write_csv(&ds, path)?;
    }
    let report = run_on_dataset(spec, &ds, &methods, protocol, args.tree.seed, &config)?;
    let text = if args.json {
        report.to_json()?
    } else {
        report.to_text()
    };
    let _ = writeln!(out, "{}", text.trim_end());
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Csv(c) if c.is_io_error() => EXIT_IO,
        Error::UnknownMethod(_) | Error::UnknownSpec(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Caps rayon's global pool at `FOLDTREE_THREADS` when that is set.
pub fn init_threads() {
    if let Some(n) = std::env::var("FOLDTREE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn run(cli: &Cli, out: &mut impl Write) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, out).map(|_| ()),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    init_threads();
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
