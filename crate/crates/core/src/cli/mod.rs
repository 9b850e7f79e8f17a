//! Command-line front end.

mod render;

pub use render::{render_svg, xml_escape, PALETTE};

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_kv_text, parse_override, TrainConfig};
use crate::data::{generate_synthetic_dataset, parse_clip_file, serialize_dataset, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::model::{forward, predict, ModelParams, Prediction};
use crate::relation::{build_relation_graph_with, RelationMode, RelationParams};
use crate::train::{evaluate, load_checkpoint, save_checkpoint, train};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

const PREDICT_FIELDS: &str = "Output: one line per clip, in file order, tab-separated:\n  \
clip_id  activity_id  activity_name  activity_probability  action_ids\n\
action_ids lists the predicted action class of every actor in file order, comma-separated.";

#[derive(Parser, Debug)]
#[command(name = "actorgraph", version, about = "Group activity recognition over actor relation graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default)]
struct NameArgs {
    /// Comma-separated action class names
    #[arg(long, value_delimiter = ',')]
    action_names: Vec<String>,
    /// Comma-separated activity class names
    #[arg(long, value_delimiter = ',')]
    activity_names: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic clip dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train (stage 1, then stage 2 when stage=2) and write a checkpoint and metrics report
    Train {
        /// Training split
        #[arg(long)]
        data: PathBuf,
        /// Split to report metrics on (defaults to the training split)
        #[arg(long)]
        eval: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Metrics report path (stdout when omitted)
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        names: NameArgs,
    },
    /// Metrics report of a trained model on a labeled split
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        names: NameArgs,
    },
    /// Per-clip predictions
    #[command(after_help = PREDICT_FIELDS)]
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        names: NameArgs,
    },
    /// Print a clip's relation graph, one matrix row per line
    Graph {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clip: String,
        /// Graph of a trained model's branch
        #[arg(long, conflicts_with = "mode")]
        model: Option<PathBuf>,
        /// Graph over raw features with a fixed kernel (ncc or sad)
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, default_value_t = 0)]
        branch: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write one SVG per clip with predicted labels
    Render {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Only this clip
        #[arg(long)]
        clip: Option<String>,
        #[command(flatten)]
        names: NameArgs,
    },
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Runs the tool and returns its exit code: 0 on success, 1 on usage
/// errors, 2 on data or model errors.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_clip_file(&bytes)
}

fn collect_pairs(args: &ConfigArgs) -> CliResult<Vec<(String, String)>> {
    let mut pairs = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("config file {}: {e}", p.display())))?;
            parse_kv_text(&text)?
        }
        None => Vec::new(),
    };
    for o in &args.overrides {
        pairs.push(parse_override(o)?);
    }
    if let Some(seed) = args.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    Ok(pairs)
}

fn resolve_train_config(args: &ConfigArgs) -> CliResult<TrainConfig> {
    Ok(TrainConfig::from_pairs(&collect_pairs(args)?)?)
}

fn log_config<'a>(err: &mut dyn Write, pairs: impl IntoIterator<Item = (&'a str, String)>) {
    for (k, v) in pairs {
        let _ = writeln!(err, "config {k}={v}");
    }
}

fn apply_names(ds: &mut Dataset, names: &NameArgs) -> CliResult<()> {
    if !names.action_names.is_empty() {
        if names.action_names.len() != ds.num_actions() {
            return Err(Failure::Usage(format!(
                "{} action names for {} action classes",
                names.action_names.len(),
                ds.num_actions()
            )));
        }
        ds.action_names = names.action_names.clone();
    }
    if !names.activity_names.is_empty() {
        if names.activity_names.len() != ds.num_activities() {
            return Err(Failure::Usage(format!(
                "{} activity names for {} activity classes",
                names.activity_names.len(),
                ds.num_activities()
            )));
        }
        ds.activity_names = names.activity_names.clone();
    }
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn check_model_fits(m: &ModelParams, ds: &Dataset) -> Result<()> {
    let dims = m.dims();
    if dims.input_dim != ds.feature_dim {
        return Err(Error::FeatureDim { expected: dims.input_dim, actual: ds.feature_dim });
    }
    if dims.num_actions != ds.num_actions() || dims.num_activities != ds.num_activities() {
        return Err(Error::Dimension(format!(
            "model has {} action / {} activity classes, data declares {} / {}",
            dims.num_actions,
            dims.num_activities,
            ds.num_actions(),
            ds.num_activities()
        )));
    }
    Ok(())
}

fn predict_all(ds: &Dataset, m: &ModelParams, cfg: &TrainConfig) -> Result<Vec<Prediction>> {
    ds.clips.iter().map(|c| predict(c, m, cfg)).collect()
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Synth { out: path, cfg } => {
            let mut sc = SynthConfig::default();
            let mut seed = 0;
            for (k, v) in collect_pairs(&cfg)? {
                if k == "seed" {
                    seed = v.parse().map_err(|_| Failure::Usage(format!("seed: cannot parse `{v}`")))?;
                } else {
                    sc.set(&k, &v)?;
                }
            }
            sc.validate()?;
            log_config(err, sc.to_pairs());
            log_config(err, [("seed", seed.to_string())]);
            let ds = generate_synthetic_dataset(&sc, seed)?;
            std::fs::write(&path, serialize_dataset(&ds)?).map_err(Error::from)?;
        }
        Command::Train { data, eval, checkpoint, report, cfg, names } => {
            let cfg = resolve_train_config(&cfg)?;
            log_config(err, cfg.to_pairs());
            let mut ds = read_dataset(&data)?;
            apply_names(&mut ds, &names)?;
            let outcome = train(&ds, &cfg)?;
            save_checkpoint(&outcome.model, &cfg, &checkpoint)?;
            let eval_ds = match eval {
                Some(p) => {
                    let mut e = read_dataset(&p)?;
                    apply_names(&mut e, &names)?;
                    check_model_fits(&outcome.model, &e)?;
                    e
                }
                None => ds,
            };
            let metrics = evaluate(&eval_ds, &outcome.model, &cfg)?.with_loss_curve(outcome.loss_curve);
            let text = metrics.report(&cfg, &eval_ds.action_names, &eval_ds.activity_names);
            write_or_print(report.as_deref(), &text, out)?;
        }
        Command::Eval { model, data, report, names } => {
            let (m, cfg) = load_checkpoint(&model)?;
            log_config(err, cfg.to_pairs());
            let mut ds = read_dataset(&data)?;
            apply_names(&mut ds, &names)?;
            check_model_fits(&m, &ds)?;
            let metrics = evaluate(&ds, &m, &cfg)?;
            let text = metrics.report(&cfg, &ds.action_names, &ds.activity_names);
            write_or_print(report.as_deref(), &text, out)?;
        }
        Command::Predict { model, data, names } => {
            let (m, cfg) = load_checkpoint(&model)?;
            log_config(err, cfg.to_pairs());
            let mut ds = read_dataset(&data)?;
            apply_names(&mut ds, &names)?;
            check_model_fits(&m, &ds)?;
            let mut text = String::new();
            for (clip, p) in ds.clips.iter().zip(predict_all(&ds, &m, &cfg)?) {
                let actions: Vec<String> = p.action_classes.iter().map(usize::to_string).collect();
                let _ = writeln!(
                    text,
                    "{}\t{}\t{}\t{}\t{}",
                    clip.clip_id,
                    p.activity_class,
                    ds.activity_names[p.activity_class],
                    p.activity_probs[p.activity_class],
                    actions.join(",")
                );
            }
            out.write_all(text.as_bytes()).map_err(Error::from)?;
        }
        Command::Graph { data, clip, model, mode, branch, cfg: cfg_args } => {
            let ds = read_dataset(&data)?;
            let clip = ds
                .clip(&clip)
                .ok_or_else(|| Failure::Data(Error::Invalid(format!("no clip `{clip}` in {}", data.display()))))?;
            let (g, mode) = match (model, mode) {
                (Some(path), None) => {
                    if !cfg_args.overrides.is_empty() || cfg_args.config.is_some() {
                        return Err(Failure::Usage("config flags do not apply with --model".into()));
                    }
                    let (mut m, cfg) = load_checkpoint(&path)?;
                    log_config(err, cfg.to_pairs());
                    if branch >= m.branches.len() {
                        return Err(Failure::Usage(format!("model has {} graph branches", m.branches.len())));
                    }
                    m.relational = true;
                    let f = forward(&m, clip, &cfg.graph_options())?;
                    (f.graph(branch).expect("relational forward records graphs").clone(), m.branches[branch].mode)
                }
                (None, Some(mode)) => {
                    let mode: RelationMode = mode.parse()?;
                    if mode.is_learned() {
                        return Err(Failure::Usage("the dot mode needs --model".into()));
                    }
                    let cfg = resolve_train_config(&cfg_args)?;
                    log_config(err, cfg.to_pairs());
                    let p = RelationParams::zeros(ds.feature_dim, 1, cfg.mu);
                    (build_relation_graph_with(clip, mode, &p, &cfg.graph_options())?.g, mode)
                }
                _ => return Err(Failure::Usage("give exactly one of --model and --mode".into())),
            };
            let mut text = format!("# clip {} mode {mode} actors {}\n", clip.clip_id, g.rows());
            for r in 0..g.rows() {
                let row: Vec<String> = g.row(r).iter().map(f64::to_string).collect();
                let _ = writeln!(text, "{}", row.join(" "));
            }
            out.write_all(text.as_bytes()).map_err(Error::from)?;
        }
        Command::Render { model, data, out_dir, clip, names } => {
            let (m, cfg) = load_checkpoint(&model)?;
            log_config(err, cfg.to_pairs());
            let mut ds = read_dataset(&data)?;
            apply_names(&mut ds, &names)?;
            check_model_fits(&m, &ds)?;
            if let Some(id) = &clip {
                ds.clips.retain(|c| &c.clip_id == id);
                if ds.clips.is_empty() {
                    return Err(Failure::Data(Error::Invalid(format!("no clip `{id}`"))));
                }
            }
            std::fs::create_dir_all(&out_dir).map_err(Error::from)?;
            for (c, p) in ds.clips.iter().zip(predict_all(&ds, &m, &cfg)?) {
                let svg = render_svg(c, &p, &ds.action_names, &ds.activity_names)?;
                let path = out_dir.join(format!("{}.svg", c.clip_id.replace(['/', '\\'], "_")));
                std::fs::write(&path, svg).map_err(Error::from)?;
                let _ = writeln!(out, "{}", path.display());
            }
        }
    }
    Ok(())
}
