//! Command-line front end.
//!
//! Commands build their outputs in memory as named artifacts; a single writer
//! then sends them to stdout, to `--out`, or into `--out-dir` together with a
//! `manifest.json` recording the arguments, seed and content hashes.
//! `replay` reruns a manifest and checks the hashes.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::datasets::{self, EncodingLayout};
use crate::error::{GraphGpError, Result};
use crate::experiment::{self, ExperimentConfig};
use crate::gp::{self, FeatureMode, GpKernel, GpModel, KernelDescriptor, ModelFile, OptimizeOptions};
use crate::graphspace::{GraphCode, GraphFile, GraphSpace, GraphSpaceKind};
use crate::invariance::{Averaging, InvariantKernel, PermSubgroup, Projection, QuotientGraph};
use crate::kernels::{IsotropicKernel, KernelSpec};
use crate::kravchuk::KravchukTable;
use crate::seed;

pub const MANIFEST_NAME: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "graphgp-manifest-1";

#[derive(Debug, Parser)]
#[command(name = "graphgp", version, about = "Gaussian processes on spaces of graphs")]
pub struct Cli {
    /// Directory receiving every output file plus manifest.json.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Root seed; named substreams are derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel values and profiles.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Kravchuk tables.
    #[command(subcommand)]
    Table(TableCommand),
    /// Quotient graphs under node-permutation groups.
    #[command(subcommand)]
    Quotient(QuotientCommand),
    /// Fit a GP to encoded data and save the model.
    Fit(FitArgs),
    /// Posterior means and variances from a saved model.
    Predict(PredictArgs),
    /// Draw prior or posterior samples.
    Sample(SampleArgs),
    /// Molecule datasets.
    #[command(subcommand)]
    Data(DataCommand),
    /// Run the repeated-split regression benchmark.
    Experiment(ExperimentArgs),
    /// Rerun a manifest and compare output hashes.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand)]
pub enum KernelCommand {
    /// k at one Hamming distance.
    Eval {
        /// Kernel spec as inline JSON or a path.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m: usize,
    },
    /// CSV of k(m) and its level components for m = 0..d, optional SVG.
    Profile {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Invariant kernel between two graphs, or its Gram matrix over a file.
    Invariant {
        #[arg(long)]
        spec: String,
        /// Space as inline JSON or a path, e.g. {"kind":"U","n":4}.
        #[arg(long)]
        space: String,
        /// Node blocks such as "0,1,2|3"; unlisted nodes stay fixed.
        #[arg(long)]
        blocks: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        /// Overrides the root seed for the permutation sample.
        #[arg(long = "mc-seed")]
        mc_seed: Option<u64>,
        /// Bit strings; both or neither.
        #[arg(long, requires = "y")]
        x: Option<String>,
        #[arg(long, requires = "x")]
        y: Option<String>,
        /// Graph list for a Gram matrix.
        #[arg(long, conflicts_with = "x")]
        graphs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Exact,
    Mc,
    Enumerated,
}

#[derive(Debug, Subcommand)]
pub enum TableCommand {
    /// Normalized table as CSV, rows j and columns m.
    Dump {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum QuotientCommand {
    /// Classes and inter-class weights as JSON.
    Build {
        #[arg(long)]
        space: String,
        #[arg(long)]
        blocks: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Encoded JSON lines, or molecules when --layout is given.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub layout: Option<String>,
    /// Kernel descriptor or bare spec, inline JSON or a path.
    #[arg(long)]
    pub kernel: String,
    /// Initial noise variance on the standardized scale.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long)]
    pub optimize: bool,
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Graph list: bit strings, graph files or encoded records, one per line.
    #[arg(long)]
    pub graphs: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SampleMethod {
    Exact,
    Walsh,
    Random,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Prior kernel; ignored with --model.
    #[arg(long, required_unless_present = "model")]
    pub kernel: Option<String>,
    #[arg(long, required_unless_present = "model")]
    pub space: Option<String>,
    /// Draw from this model's posterior instead of a prior.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Graph list; defaults to every graph of a space with d ≤ 10.
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = SampleMethod::Exact)]
    pub method: SampleMethod,
    /// Spectral levels kept by the feature methods; defaults to d.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, default_value_t = 256)]
    pub anchors: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Encode molecules as graph codes.
    Encode {
        #[arg(long)]
        layout: String,
        #[arg(long = "in")]
        input: PathBuf,
        /// Drop molecules whose element counts exceed the Graph-A caps.
        #[arg(long)]
        filter: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded train/test split of a JSON-lines file.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// One output file; the first artifact of a command is its primary output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

impl Artifact {
    fn new(name: &str, content: String) -> Self {
        Artifact {
            name: name.into(),
            content,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub fnv1a: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    /// Subcommand arguments without the global options and `--out`.
    pub args: Vec<String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

/// What a command produced and read.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub inputs: Vec<PathBuf>,
    /// Extra files requested by path, such as `--svg`.
    pub side_files: Vec<(PathBuf, String)>,
    /// Human-readable summary for stderr.
    pub notes: Vec<String>,
}

fn fnv1a(bytes: &[u8]) -> String {
    let h = bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    });
    format!("{h:016x}")
}

fn record(path: &Path) -> Result<FileRecord> {
    let bytes = std::fs::read(path).map_err(|e| GraphGpError::io(path, e))?;
    Ok(FileRecord {
        path: path.display().to_string(),
        bytes: bytes.len() as u64,
        fnv1a: fnv1a(&bytes),
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| GraphGpError::io(path, e))
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| GraphGpError::io(dir, e))?;
    }
    std::fs::write(path, content).map_err(|e| GraphGpError::io(path, e))
}

/// Inline JSON when the argument starts with `{` or `[`, otherwise a file path.
fn json_arg<T: serde::de::DeserializeOwned>(arg: &str, what: &str, inputs: &mut Vec<PathBuf>) -> Result<T> {
    let trimmed = arg.trim_start();
    let text = if trimmed.starts_with('{') || trimmed.starts_with('[') {
        arg.to_string()
    } else {
        let path = PathBuf::from(arg);
        let text = read_text(&path)?;
        inputs.push(path);
        text
    };
    serde_json::from_str(&text).map_err(|e| GraphGpError::json(what, e))
}

#[derive(Deserialize)]
struct SpaceArg {
    kind: GraphSpaceKind,
    n: usize,
}

fn space_arg(arg: &str, inputs: &mut Vec<PathBuf>) -> Result<GraphSpace> {
    let s: SpaceArg = json_arg(arg, "space", inputs)?;
    GraphSpace::new(s.kind, s.n)
}

/// A kernel descriptor (tagged by "type") or a bare spec taken as isotropic.
fn kernel_arg(arg: &str, inputs: &mut Vec<PathBuf>) -> Result<KernelDescriptor> {
    let value: serde_json::Value = json_arg(arg, "kernel", inputs)?;
    if value.get("type").is_some() {
        serde_json::from_value(value).map_err(|e| GraphGpError::json("kernel descriptor", e))
    } else {
        let spec: KernelSpec = serde_json::from_value(value).map_err(|e| GraphGpError::json("kernel spec", e))?;
        Ok(KernelDescriptor::Isotropic { spec })
    }
}

/// One encoded example per line, as written by `data encode`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncodedRecord {
    #[serde(default)]
    pub id: String,
    pub kind: GraphSpaceKind,
    pub n: usize,
    pub code: String,
    #[serde(default)]
    pub target: Option<f64>,
}

/// Graph list entries with optional ids and targets.
struct GraphList {
    space: GraphSpace,
    ids: Vec<String>,
    codes: Vec<GraphCode>,
    targets: Vec<Option<f64>>,
}

/// Reads bit strings (needs `space`), graph files or encoded records.
fn read_graphs(path: &Path, space: Option<&GraphSpace>) -> Result<GraphList> {
    let text = read_text(path)?;
    let mut space = space.cloned();
    let (mut ids, mut codes, mut targets) = (Vec::new(), Vec::new(), Vec::new());
    let ctx = |i: usize| format!("{} line {}", path.display(), i + 1);
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line = line.trim();
        let (code, id, target) = if line.starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| GraphGpError::json(ctx(i), e))?;
            if value.get("code").is_some() {
                let r: EncodedRecord = serde_json::from_value(value).map_err(|e| GraphGpError::json(ctx(i), e))?;
                let s = space.get_or_insert(GraphSpace::new(r.kind, r.n)?).clone();
                if s.kind() != r.kind || s.n() != r.n {
                    return Err(GraphGpError::invalid(format!("{}: graph is not in {}", ctx(i), s.key())));
                }
                (s.code_from_str(&r.code)?, r.id, r.target)
            } else {
                let g: GraphFile = serde_json::from_value(value).map_err(|e| GraphGpError::json(ctx(i), e))?;
                let s = space.get_or_insert(g.space()?).clone();
                (g.to_code(&s)?, String::new(), None)
            }
        } else {
            let s = space.as_ref().ok_or_else(|| {
                GraphGpError::invalid(format!("{}: bit strings need the space to be given", ctx(i)))
            })?;
            (s.code_from_str(line)?, String::new(), None)
        };
        ids.push(if id.is_empty() { format!("{}", codes.len()) } else { id });
        codes.push(code);
        targets.push(target);
    }
    let space = space.ok_or_else(|| GraphGpError::invalid(format!("{} contains no graphs", path.display())))?;
    Ok(GraphList {
        space,
        ids,
        codes,
        targets,
    })
}

fn matrix_csv(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Minimal SVG line chart; one polyline per series.
pub fn svg_line_chart(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 8] = [
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
    ];
    let points = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<polyline points="{PAD},{PAD} {PAD},{} {},{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(x_label)
    );
    for (value, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{value:.3}</text>"#,
            PAD - 4.0,
            y + 4.0
        );
    }
    for (value, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{value}</text>"#,
            H - PAD + 16.0
        );
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            W - PAD + 4.0,
            PAD + 14.0 * i as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Kernel profile as CSV with columns `m, k, component_0 … component_d`.
pub fn profile_csv(kernel: &IsotropicKernel) -> Result<String> {
    let d = kernel.d();
    let mut header = vec!["m".to_string(), "k".to_string()];
    header.extend((0..=d).map(|j| format!("component_{j}")));
    let rows = (0..=d)
        .map(|m| {
            let mut row = vec![m as f64, kernel.profile()[m]];
            for j in 0..=d {
                row.push(kernel.component(j, m)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let mut cells = vec![format!("{}", row[0] as usize)];
        cells.extend(row[1..].iter().map(|v| format!("{v:e}")));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn averaging(mode: ModeArg, samples: usize, seed_value: u64) -> Averaging {
    match mode {
        ModeArg::Exact => Averaging::Exact,
        ModeArg::Enumerated => Averaging::Enumerated,
        ModeArg::Mc => Averaging::MonteCarlo {
            samples,
            seed: seed_value,
        },
    }
}

fn codes_for_sampling(graphs: &Option<PathBuf>, space: &GraphSpace, outcome: &mut Outcome) -> Result<(Vec<String>, Vec<GraphCode>)> {
    match graphs {
        Some(path) => {
            outcome.inputs.push(path.clone());
            let list = read_graphs(path, Some(space))?;
            Ok((list.ids, list.codes))
        }
        None => {
            let codes = space.all_codes(10)?;
            Ok((codes.iter().map(|c| c.to_string()).collect(), codes))
        }
    }
}

/// Runs one command without touching the filesystem for outputs.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let mut out = Outcome::default();
    let root = cli.seed;
    match &cli.command {
        Command::Kernel(KernelCommand::Eval { spec, d, m }) => {
            let spec: KernelSpec = json_arg(spec, "kernel spec", &mut out.inputs)?;
            let kernel = IsotropicKernel::new(spec, *d)?;
            out.artifacts
                .push(Artifact::new("kernel.txt", format!("{:e}\n", kernel.at_distance(*m)?)));
        }
        Command::Kernel(KernelCommand::Profile { spec, d, svg, .. }) => {
            let spec: KernelSpec = json_arg(spec, "kernel spec", &mut out.inputs)?;
            let kernel = IsotropicKernel::new(spec, *d)?;
            out.artifacts.push(Artifact::new("profile.csv", profile_csv(&kernel)?));
            let mut series = vec![(
                "k".to_string(),
                kernel.profile().iter().enumerate().map(|(m, &v)| (m as f64, v)).collect(),
            )];
            for j in 0..=(*d).min(3) {
                let pts = (0..=*d)
                    .map(|m| Ok((m as f64, kernel.component(j, m)?)))
                    .collect::<Result<Vec<_>>>()?;
                series.push((format!("level {j}"), pts));
            }
            let chart = svg_line_chart("kernel profile", "Hamming distance m", &series);
            match svg {
                Some(path) => out.side_files.push((path.clone(), chart)),
                None => out.artifacts.push(Artifact::new("profile.svg", chart)),
            }
        }
        Command::Kernel(KernelCommand::Invariant {
            spec,
            space,
            blocks,
            mode,
            samples,
            mc_seed,
            x,
            y,
            graphs,
            ..
        }) => {
            let spec: KernelSpec = json_arg(spec, "kernel spec", &mut out.inputs)?;
            let space = space_arg(space, &mut out.inputs)?;
            let group = PermSubgroup::parse(blocks, space.n())?;
            let seed_value = mc_seed.unwrap_or_else(|| seed::substream(root, "mc-kernel"));
            let projection = Projection::new(&space, &group, averaging(*mode, *samples, seed_value))?;
            let kernel = InvariantKernel::new(IsotropicKernel::new(spec, space.d())?, projection)?;
            match (x, y, graphs) {
                (Some(x), Some(y), _) => {
                    let value = kernel.evaluate(&space.code_from_str(x)?, &space.code_from_str(y)?)?;
                    out.artifacts.push(Artifact::new("invariant.txt", format!("{value:e}\n")));
                }
                (_, _, Some(path)) => {
                    out.inputs.push(path.clone());
                    let list = read_graphs(path, Some(&space))?;
                    let k = kernel.gram_symmetric(&list.codes)?;
                    let csv = matrix_csv(&list.ids, (0..k.nrows()).map(|i| k.row(i).iter().copied().collect()));
                    out.artifacts.push(Artifact::new("invariant.csv", csv));
                }
                _ => return Err(GraphGpError::invalid("give --x and --y, or --graphs")),
            }
        }
        Command::Table(TableCommand::Dump { d, .. }) => {
            out.artifacts
                .push(Artifact::new("table.csv", KravchukTable::shared(*d)?.to_csv()));
        }
        Command::Quotient(QuotientCommand::Build { space, blocks, .. }) => {
            let space = space_arg(space, &mut out.inputs)?;
            let group = PermSubgroup::parse(blocks, space.n())?;
            let q = QuotientGraph::build(&space, &group)?;
            out.notes.push(format!("{} classes, equitable: {}", q.len(), q.is_equitable()));
            out.artifacts.push(Artifact::new("quotient.json", pretty(&q.to_json())));
        }
        Command::Fit(args) => fit(args, &mut out)?,
        Command::Predict(args) => {
            out.inputs.push(args.model.clone());
            out.inputs.push(args.graphs.clone());
            let file: ModelFile = serde_json::from_str(&read_text(&args.model)?)
                .map_err(|e| GraphGpError::json(args.model.display().to_string(), e))?;
            let model = GpModel::from_file(&file)?;
            let space = GraphSpace::new(file.space.kind, file.space.n)?;
            let list = read_graphs(&args.graphs, Some(&space))?;
            let (means, vars) = model.predict_marginals(&list.codes)?;
            let mut csv = String::from("id,mean,variance\n");
            for ((id, m), v) in list.ids.iter().zip(&means).zip(&vars) {
                let _ = writeln!(csv, "{id},{m:e},{v:e}");
            }
            let truth: Vec<f64> = list.targets.iter().flatten().copied().collect();
            if truth.len() == means.len() && !truth.is_empty() {
                out.notes.push(format!("rmse {:.6}", datasets::rmse(&means, &truth)?));
            }
            out.artifacts.push(Artifact::new("predictions.csv", csv));
        }
        Command::Sample(args) => sample(args, root, &mut out)?,
        Command::Data(DataCommand::Encode { layout, input, filter, .. }) => {
            let layout: EncodingLayout = json_arg(layout, "layout", &mut out.inputs)?;
            out.inputs.push(input.clone());
            let mut molecules = datasets::load_molecules(input)?;
            if *filter {
                let datasets::Strategy::GraphA { type_slots } = &layout.strategy else {
                    return Err(GraphGpError::invalid("--filter needs a Graph-A layout"));
                };
                let before = molecules.len();
                molecules = datasets::filter_small(&molecules, type_slots);
                out.notes.push(format!("kept {} of {before} molecules", molecules.len()));
            }
            let data = datasets::Dataset::encode(&molecules, &layout)?;
            let mut lines = String::new();
            for e in &data.examples {
                let r = EncodedRecord {
                    id: e.id.clone(),
                    kind: data.space.kind(),
                    n: data.space.n(),
                    code: e.code.to_string(),
                    target: Some(e.target),
                };
                lines.push_str(&serde_json::to_string(&r).expect("record serializes"));
                lines.push('\n');
            }
            out.notes.push(format!("{} graphs in {}", data.len(), data.space.key()));
            out.artifacts.push(Artifact::new("codes.jsonl", lines));
        }
        Command::Data(DataCommand::Split { input, ratio, .. }) => {
            out.inputs.push(input.clone());
            let count = read_text(input)?.lines().filter(|l| !l.trim().is_empty()).count();
            let split = datasets::split(count, *ratio, seed::substream(root, "split"))?;
            out.artifacts.push(Artifact::new(
                "split.json",
                pretty(&serde_json::json!({
                    "ratio": ratio,
                    "seed": split.seed,
                    "train": split.train,
                    "test": split.test,
                })),
            ));
        }
        Command::Experiment(args) => {
            out.inputs.push(args.config.clone());
            let mut config = ExperimentConfig::load(&args.config)?;
            if root != 0 {
                config.seed = root;
            }
            if let Some(path) = &config.dataset {
                out.inputs.push(path.clone());
            }
            let report = experiment::run_experiment(&config)?;
            out.notes.push(report.table());
            out.artifacts.push(Artifact::new(
                "report.json",
                serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
            ));
        }
        Command::Replay(_) => return Err(GraphGpError::invalid("replay cannot be nested")),
    }
    Ok(out)
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json value serializes") + "\n"
}

fn fit(args: &FitArgs, out: &mut Outcome) -> Result<()> {
    let descriptor = kernel_arg(&args.kernel, &mut out.inputs)?;
    out.inputs.push(args.dataset.clone());
    let (space, xs, ys) = match &args.layout {
        Some(layout) => {
            let layout: EncodingLayout = json_arg(layout, "layout", &mut out.inputs)?;
            let molecules = datasets::load_molecules(&args.dataset)?;
            let data = datasets::Dataset::encode(&molecules, &layout)?;
            let all: Vec<usize> = (0..data.len()).collect();
            (data.space.clone(), data.codes(&all), data.targets(&all))
        }
        None => {
            let list = read_graphs(&args.dataset, None)?;
            let ys = list
                .targets
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    t.ok_or_else(|| GraphGpError::invalid(format!("record {} of the dataset has no target", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            (list.space, list.codes, ys)
        }
    };
    let init = GpKernel::from_descriptor(&descriptor, &space)?;
    let transform = gp::TargetTransform::fit(&ys)?;
    let (kernel, noise) = if args.optimize {
        let z: Vec<f64> = ys.iter().map(|&y| transform.forward(y)).collect();
        let outcome = gp::optimize_hyperparameters(
            &init,
            &xs,
            &z,
            args.noise,
            OptimizeOptions {
                budget: args.budget,
                optimize_noise: true,
            },
        )?;
        out.notes.push(format!(
            "log marginal likelihood {:.6} -> {:.6} after {} evaluations",
            outcome.initial_log_marginal_likelihood, outcome.log_marginal_likelihood, outcome.evaluations
        ));
        (outcome.kernel, outcome.noise)
    } else {
        (init, args.noise)
    };
    let model = GpModel::fit_with_transform(kernel, &xs, &ys, noise, transform)?;
    out.notes.push(format!(
        "fitted {} points in {}, log marginal likelihood {:.6}",
        xs.len(),
        space.key(),
        model.log_marginal_likelihood()
    ));
    let file = model.to_file()?;
    out.artifacts.push(Artifact::new(
        "model.json",
        serde_json::to_string_pretty(&file).expect("model serializes") + "\n",
    ));
    Ok(())
}

fn sample(args: &SampleArgs, root: u64, out: &mut Outcome) -> Result<()> {
    let sampler_seed = seed::substream(root, "sampler");
    let (ids, draws) = if let Some(path) = &args.model {
        out.inputs.push(path.clone());
        let file: ModelFile = serde_json::from_str(&read_text(path)?)
            .map_err(|e| GraphGpError::json(path.display().to_string(), e))?;
        let model = GpModel::from_file(&file)?;
        let space = GraphSpace::new(file.space.kind, file.space.n)?;
        let (ids, codes) = codes_for_sampling(&args.graphs, &space, out)?;
        (ids, gp::posterior_sample(&model, &codes, args.count, sampler_seed)?)
    } else {
        let space = space_arg(args.space.as_deref().expect("clap requires space"), &mut out.inputs)?;
        let descriptor = kernel_arg(args.kernel.as_deref().expect("clap requires kernel"), &mut out.inputs)?;
        let kernel = GpKernel::from_descriptor(&descriptor, &space)?;
        let (ids, codes) = codes_for_sampling(&args.graphs, &space, out)?;
        let draws = match (args.method, &kernel) {
            (SampleMethod::Exact, _) => gp::sample_prior_exact(&kernel, &codes, args.count, sampler_seed)?,
            (method, GpKernel::Isotropic(iso)) => {
                let levels = args.levels.unwrap_or(space.d());
                let mode = match method {
                    SampleMethod::Walsh => FeatureMode::TruncatedWalsh { levels },
                    _ => FeatureMode::RandomPhase {
                        levels,
                        anchors: args.anchors,
                        seed: seed::substream(root, "anchors"),
                    },
                };
                gp::FeatureSampler::new(iso.clone(), mode, &space)?.sample(&codes, args.count, sampler_seed)?
            }
            _ => {
                return Err(GraphGpError::invalid(
                    "feature sampling needs an isotropic kernel; use --method exact",
                ))
            }
        };
        (ids, draws)
    };
    let csv = matrix_csv(&ids, (0..draws.nrows()).map(|i| draws.row(i).iter().copied().collect()));
    out.artifacts.push(Artifact::new("samples.csv", csv));
    Ok(())
}

fn explicit_out(command: &Command) -> Option<&PathBuf> {
    match command {
        Command::Kernel(KernelCommand::Profile { out, .. })
        | Command::Kernel(KernelCommand::Invariant { out, .. })
        | Command::Table(TableCommand::Dump { out, .. })
        | Command::Quotient(QuotientCommand::Build { out, .. })
        | Command::Data(DataCommand::Encode { out, .. })
        | Command::Data(DataCommand::Split { out, .. }) => out.as_ref(),
        Command::Fit(a) => a.out.as_ref(),
        Command::Predict(a) => a.out.as_ref(),
        Command::Sample(a) => a.out.as_ref(),
        Command::Experiment(a) => a.out.as_ref(),
        Command::Kernel(KernelCommand::Eval { .. }) | Command::Replay(_) => None,
    }
}

/// Subcommand arguments with global options and `--out` removed.
fn replayable_args(args: &[String]) -> Vec<String> {
    const WITH_VALUE: [&str; 4] = ["--out", "--out-dir", "--threads", "--seed"];
    let mut kept = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if WITH_VALUE.contains(&a.as_str()) {
            skip = true;
            continue;
        }
        if WITH_VALUE.iter().any(|w| a.starts_with(&format!("{w}="))) {
            continue;
        }
        kept.push(a.clone());
    }
    kept
}

/// Writes outputs and the manifest; returns the text meant for stdout.
fn emit(cli: &Cli, args: &[String], outcome: &Outcome) -> Result<String> {
    let mut stdout = String::new();
    let mut written = Vec::new();
    for (path, content) in &outcome.side_files {
        write_text(path, content)?;
        written.push(path.clone());
    }
    let manifest_path = if let Some(path) = explicit_out(&cli.command) {
        if let Some(primary) = outcome.artifacts.first() {
            write_text(path, &primary.content)?;
            written.push(path.clone());
        }
        let name = format!(
            "{}.{MANIFEST_NAME}",
            path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        );
        Some(path.with_file_name(name))
    } else if let Some(dir) = &cli.out_dir {
        for a in &outcome.artifacts {
            let path = dir.join(&a.name);
            write_text(&path, &a.content)?;
            written.push(path);
        }
        Some(dir.join(MANIFEST_NAME))
    } else {
        if let Some(primary) = outcome.artifacts.first() {
            stdout.push_str(&primary.content);
        }
        None
    };
    if let Some(path) = manifest_path {
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cli.seed,
            threads: cli.threads,
            args: replayable_args(args),
            inputs: outcome.inputs.iter().map(|p| record(p)).collect::<Result<_>>()?,
            outputs: written.iter().map(|p| record(p)).collect::<Result<_>>()?,
        };
        write_text(&path, &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))?;
    }
    Ok(stdout)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| GraphGpError::invalid(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

fn replay(cli: &Cli, manifest_path: &Path) -> Result<String> {
    let manifest: Manifest = serde_json::from_str(&read_text(manifest_path)?)
        .map_err(|e| GraphGpError::json(manifest_path.display().to_string(), e))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(GraphGpError::invalid(format!("unknown manifest format '{}'", manifest.format)));
    }
    let out_dir = cli
        .out_dir
        .clone()
        .ok_or_else(|| GraphGpError::invalid("replay needs --out-dir for the rerun outputs"))?;
    let mut argv = vec![
        "graphgp".to_string(),
        "--seed".into(),
        manifest.seed.to_string(),
        "--threads".into(),
        manifest.threads.to_string(),
        "--out-dir".into(),
        out_dir.display().to_string(),
    ];
    argv.extend(manifest.args.iter().cloned());
    let rerun = Cli::try_parse_from(&argv).map_err(|e| GraphGpError::invalid(format!("manifest arguments: {e}")))?;
    if matches!(rerun.command, Command::Replay(_)) {
        return Err(GraphGpError::invalid("replay cannot be nested"));
    }
    let outcome = with_threads(rerun.threads, || execute(&rerun))??;
    emit(&rerun, &manifest.args, &outcome)?;
    let fresh: Manifest = serde_json::from_str(&read_text(&out_dir.join(MANIFEST_NAME))?)
        .map_err(|e| GraphGpError::json("replayed manifest", e))?;
    let name = |r: &FileRecord| Path::new(&r.path).file_name().map(|s| s.to_os_string());
    let mut report = String::new();
    let mut mismatches = Vec::new();
    for old in &manifest.outputs {
        match fresh.outputs.iter().find(|r| name(r) == name(old)) {
            Some(new) if new.fnv1a == old.fnv1a => {
                let _ = writeln!(report, "identical {}", new.path);
            }
            Some(new) => mismatches.push(format!("{} differs from {}", new.path, old.path)),
            None => mismatches.push(format!("{} was not reproduced", old.path)),
        }
    }
    if !mismatches.is_empty() {
        return Err(GraphGpError::Decomposition(format!(
            "replay is not bit-identical: {}",
            mismatches.join("; ")
        )));
    }
    Ok(report)
}

/// Parses `args`, runs the command and writes outputs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let strings: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match &cli.command {
        Command::Replay(r) => replay(&cli, &r.manifest),
        _ => with_threads(cli.threads, || execute(&cli)).and_then(|r| r).and_then(|outcome| {
            for note in &outcome.notes {
                eprintln!("{}", note.trim_end());
            }
            emit(&cli, &strings, &outcome)
        }),
    };
    match result {
        Ok(stdout) => {
            print!("{stdout}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}
