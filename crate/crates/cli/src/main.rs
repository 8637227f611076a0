//! `daq`: generate tensors, run quantized convolutions and print cost and comparison reports.
//!
//! Exit codes: 0 success, 1 PSNR below `--min-psnr`, 2 usage, 3 I/O, 4 shape, 5 internal audit
//! (accumulator overflow or a failed `--check`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use daq_core::cost::{self, CostError, CostReport, EnergyModel, OpLedger};
use daq_core::metrics::{self, compare, max_relative_deviation, CompareReport, MetricsError};
use daq_core::qconv::{
    conv_channelwise, conv_elementwise, conv_qq, conv_reference, run_block, BlockLayer, ConvError, ConvSpec, Padding, Pipeline,
    WidthAudit,
};
use daq_core::quant::{quantize_feature, quantize_qq, quantize_weight, Granularity, QuantError, StepSizeTable};
use daq_core::tensor::{generate, read_tensor, write_tensor, DType, Distribution, Tensor, TensorError};
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
    Shape(String),
    Audit(String),
    Threshold(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Threshold(_) => 1,
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
            Self::Shape(_) => 4,
            Self::Audit(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Io(m) | Self::Shape(m) | Self::Audit(m) | Self::Threshold(m) => m,
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        let m = e.to_string();
        match e {
            TensorError::InvalidShape(_) | TensorError::LengthMismatch { .. } | TensorError::ShapeOverflow(_) => Self::Shape(m),
            TensorError::InvalidDistribution(_) => Self::Usage(m),
            _ => Self::Io(m),
        }
    }
}

impl From<QuantError> for CliError {
    fn from(e: QuantError) -> Self {
        let m = e.to_string();
        match e {
            QuantError::Io(_) => Self::Io(m),
            QuantError::Shape { .. } | QuantError::LengthMismatch(..) => Self::Shape(m),
            _ => Self::Usage(m),
        }
    }
}

impl From<ConvError> for CliError {
    fn from(e: ConvError) -> Self {
        let m = e.to_string();
        match e {
            ConvError::Shape(_) | ConvError::Mismatch(_) => Self::Shape(m),
            ConvError::Overflow { .. } => Self::Audit(m),
            ConvError::Quant(q) => q.into(),
            _ => Self::Usage(m),
        }
    }
}

impl From<CostError> for CliError {
    fn from(e: CostError) -> Self {
        let m = e.to_string();
        match e {
            CostError::Io(_) => Self::Io(m),
            CostError::Overflow => Self::Audit(m),
            _ => Self::Usage(m),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Shape(..) => Self::Shape(e.to_string()),
            MetricsError::Peak(_) => Self::Usage(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "daq", version, about = "Distribution-aware quantized convolution toolkit")]
struct Cli {
    /// Step-size table (`distribution NAME` then `bits step` lines) replacing the built-in Gaussian table.
    #[arg(long, global = true)]
    step_table: Option<PathBuf>,
    /// Energy anchors (`kind width pJ` lines) layered over the defaults.
    #[arg(long, global = true)]
    energy_anchors: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random tensor and print its path and SHA-256.
    Gen(GenArgs),
    /// Run one convolution layer through a pipeline.
    Conv(ConvArgs),
    /// Analytic cost of the element-wise, channel-wise and QQ pipelines for one layer.
    Cost(CostArgs),
    /// MSE, PSNR and max-abs error between two tensors.
    Compare(CompareArgs),
    /// Run a chain of layers and compare it against the FP reference.
    Block(BlockArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    #[value(name = "table-s1")]
    TableS1,
}

#[derive(Clone, Copy, ValueEnum)]
enum DTypeArg {
    F32,
    F64,
    I32,
}

impl From<DTypeArg> for DType {
    fn from(d: DTypeArg) -> Self {
        match d {
            DTypeArg::F32 => DType::F32,
            DTypeArg::F64 => DType::F64,
            DTypeArg::I32 => DType::I32,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Comma-separated dimensions, e.g. `4,8,8`.
    #[arg(long, required = true, value_delimiter = ',')]
    shape: Vec<usize>,
    /// `gaussian[:MEAN,SD]`, `uniform[:LO,HI]` or `constant:V`.
    #[arg(long, default_value = "gaussian")]
    dist: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "f64")]
    dtype: DTypeArg,
    #[arg(short, long, default_value = "tensor.daqt")]
    output: PathBuf,
}

#[derive(Args)]
struct ConvArgs {
    /// Feature tensor, `C x H x W`.
    #[arg(long)]
    x: Option<PathBuf>,
    /// Weight tensor, `C x C_out x K x K`.
    #[arg(long)]
    w: Option<PathBuf>,
    #[arg(long, default_value = "channelwise")]
    pipeline: String,
    /// Feature and weight bit-width.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=8))]
    n: u8,
    /// Bit-width of the quantized channel statistics; required by the qq pipeline.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    m: Option<u8>,
    /// Weight scale grouping: layer, output-channel, input-channel or kernel.
    #[arg(long, default_value = "layer")]
    granularity: String,
    #[arg(long, default_value = "same")]
    padding: String,
    /// The features come out of a ReLU.
    #[arg(long)]
    post_relu: bool,
    /// Also run the element-wise pipeline and report the deviation from it.
    #[arg(long)]
    check: bool,
    /// Only build the analytic ledger; implied by `--shape-preset`.
    #[arg(long)]
    ledger_only: bool,
    /// Pin the layer shape (`table-s1`: 256 to 256 channels, 3x3, 480x270, n=2).
    #[arg(long, value_enum)]
    shape_preset: Option<Preset>,
    /// Output tensor.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Cost report path; printed after the summary when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct CostArgs {
    /// `table-s1`: C=C_out=256, K=3, H=480, W=270, n=2, m=4.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long = "C")]
    c: Option<usize>,
    #[arg(long = "Cout")]
    c_out: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "H")]
    h: Option<usize>,
    #[arg(long = "W")]
    w: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    n: Option<u8>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    m: Option<u8>,
    #[arg(long, default_value = "same")]
    padding: String,
    #[arg(long)]
    post_relu: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value_t = metrics::DEFAULT_PEAK)]
    peak: f64,
    /// Exit with 1 when the PSNR falls below this many dB.
    #[arg(long)]
    min_psnr: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BlockArgs {
    /// Block input, `C x H x W`.
    #[arg(long)]
    x: PathBuf,
    /// One per layer, in order: `WEIGHT.daqt` or `WEIGHT.daqt:relu`.
    #[arg(long = "layer", required = true)]
    layers: Vec<String>,
    #[arg(long, default_value = "channelwise")]
    pipeline: String,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=8))]
    n: u8,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    m: Option<u8>,
    #[arg(long, default_value_t = metrics::DEFAULT_PEAK)]
    peak: f64,
    /// Output tensor.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {}", e.message());
        return ExitCode::from(e.code());
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// `DAQ_THREADS` caps the rayon pool.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DAQ_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| CliError::Usage(format!("DAQ_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    let table = match &cli.step_table {
        Some(p) => StepSizeTable::load(p)?,
        None => StepSizeTable::gaussian(),
    };
    let energy = match &cli.energy_anchors {
        Some(p) => EnergyModel::load(p)?,
        None => EnergyModel::default(),
    };
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Conv(a) => cmd_conv(a, &table, &energy),
        Command::Cost(a) => cmd_cost(a, &energy),
        Command::Compare(a) => cmd_compare(a),
        Command::Block(a) => cmd_block(a, &table, &energy),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<Tensor> {
    read_tensor(path).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => io_err(path, m),
        other => other,
    })
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(report: &CostReport, format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => report.to_json()?,
        Format::Text => report.to_text(),
    })
}

fn parse_pipeline(s: &str) -> Result<Pipeline> {
    Ok(s.parse::<Pipeline>()?)
}

fn parse_padding(s: &str) -> Result<Padding> {
    Ok(s.parse::<Padding>()?)
}

fn qq_bits(pipeline: Pipeline, m: Option<u8>) -> Result<u8> {
    match (pipeline, m) {
        (Pipeline::Qq, None) => Err(CliError::Usage("the qq pipeline needs --m".into())),
        (_, m) => Ok(m.unwrap_or(4)),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let dist: Distribution = a.dist.parse()?;
    let t = generate(&a.shape, a.seed, dist)?;
    write_tensor(&t, &a.output, a.dtype.into()).map_err(|e| io_err(&a.output, e))?;
    let bytes = fs::read(&a.output).map_err(|e| io_err(&a.output, e))?;
    let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    println!("{} sha256:{hex}", a.output.display());
    Ok(())
}

fn summary_line(name: &str, ledger: &OpLedger, energy: &EnergyModel) -> Result<String> {
    let bops = ledger.bops()?;
    Ok(format!("{name}: {bops} BOPs ({:.2} G), {:.4} mJ", bops as f64 / 1e9, energy.energy_pj(ledger) * 1e-9))
}

fn audit_lines(audit: &WidthAudit) -> String {
    let mut out = String::new();
    for r in &audit.sites {
        let _ = writeln!(out, "  {:<14} planned {:>2} bits, observed [{}, {}] needs {}", r.site.name(), r.bits, r.min, r.max, r.needed_bits());
    }
    out
}

fn cmd_conv(a: ConvArgs, table: &StepSizeTable, energy: &EnergyModel) -> Result<()> {
    let pipeline = parse_pipeline(&a.pipeline)?;
    let m = qq_bits(pipeline, a.m)?;
    let granularity: Granularity = a.granularity.parse()?;
    let padding = parse_padding(&a.padding)?;

    let analytic = a.ledger_only || a.shape_preset.is_some();
    if analytic {
        let spec = match a.shape_preset {
            Some(Preset::TableS1) => ConvSpec::fhd_preset(),
            None => {
                let (x, w) = input_paths(&a)?;
                ConvSpec::from_shapes(load(x)?.shape(), load(w)?.shape())?
            }
        }
        .with_bits(a.n)
        .with_qq_bits(m)
        .with_padding(padding)
        .with_post_relu(a.post_relu);
        spec.validate()?;
        let ledger = cost::pipeline_ledger(pipeline, &spec);
        let report = CostReport::build([(pipeline.name(), &ledger)], energy)?;
        println!("{}", summary_line(pipeline.name(), &ledger, energy)?);
        return emit(&render(&report, a.format)?, a.report.as_deref());
    }

    let (xp, wp) = input_paths(&a)?;
    let (x, w) = (load(xp)?, load(wp)?);
    let spec = ConvSpec::from_shapes(x.shape(), w.shape())?.with_bits(a.n).with_qq_bits(m).with_padding(padding).with_post_relu(a.post_relu);
    spec.validate()?;

    let quantized = || -> Result<_> {
        let qx = quantize_feature(&x, spec.bits, table, spec.post_relu)?;
        let qw = quantize_weight(&w, spec.bits, table, granularity)?;
        Ok((qx, qw))
    };
    let (y, audit) = match pipeline {
        Pipeline::Reference => (conv_reference(&x, &w, &spec)?, WidthAudit::default()),
        Pipeline::Elementwise => {
            let (qx, qw) = quantized()?;
            let out = conv_elementwise(&qx, &qw, &spec)?;
            (out.y, out.width_audit)
        }
        Pipeline::Channelwise => {
            let (qx, qw) = quantized()?;
            let out = conv_channelwise(&qx, &qw, &spec)?;
            (out.y, out.width_audit)
        }
        Pipeline::Qq => {
            let (qx, qw) = quantized()?;
            let qq = quantize_qq(&qx.means(), &qx.sigmas(), m, table)?;
            let out = conv_qq(&qx, &qw, &qq, &spec)?;
            (out.y, out.width_audit)
        }
    };
    let ledger = cost::pipeline_ledger(pipeline, &spec);
    println!("{}", summary_line(pipeline.name(), &ledger, energy)?);
    print!("{}", audit_lines(&audit));

    if a.check {
        let (qx, qw) = quantized()?;
        let ew = conv_elementwise(&qx, &qw, &spec)?;
        let dev = max_relative_deviation(y.data(), ew.y.data());
        let cmp = compare(&y, &ew.y, metrics::DEFAULT_PEAK)?;
        println!("check vs elementwise: max relative deviation {dev:.3e}, mse {:e}, psnr {:.2} dB, max abs {:e}", cmp.mse, cmp.psnr_db, cmp.max_abs);
        let must_match = matches!(pipeline, Pipeline::Channelwise | Pipeline::Elementwise);
        if must_match && dev > 1e-9 {
            return Err(CliError::Audit(format!("{pipeline} deviates from elementwise by {dev:e}")));
        }
    }
    if let Some(out) = &a.output {
        write_tensor(&y, out, DType::F64).map_err(|e| io_err(out, e))?;
    }
    let report = CostReport::build([(pipeline.name(), &ledger)], energy)?;
    emit(&render(&report, a.format)?, a.report.as_deref())
}

fn input_paths(a: &ConvArgs) -> Result<(&Path, &Path)> {
    match (&a.x, &a.w) {
        (Some(x), Some(w)) => Ok((x, w)),
        _ => Err(CliError::Usage("conv needs --x and --w (or --shape-preset)".into())),
    }
}

fn cmd_cost(a: CostArgs, energy: &EnergyModel) -> Result<()> {
    let base = match a.preset {
        Some(Preset::TableS1) => ConvSpec::fhd_preset(),
        None => {
            let missing: Vec<&str> =
                [("--C", a.c), ("--Cout", a.c_out), ("--K", a.k), ("--H", a.h), ("--W", a.w)].iter().filter(|(_, v)| v.is_none()).map(|(n, _)| *n).collect();
            if !missing.is_empty() {
                return Err(CliError::Usage(format!("cost needs {} (or --preset)", missing.join(", "))));
            }
            ConvSpec::new(0, 0, 0, 0, 0)
        }
    };
    let spec = ConvSpec {
        c_in: a.c.unwrap_or(base.c_in),
        c_out: a.c_out.unwrap_or(base.c_out),
        k: a.k.unwrap_or(base.k),
        h: a.h.unwrap_or(base.h),
        w: a.w.unwrap_or(base.w),
        ..base
    }
    .with_bits(a.n.unwrap_or(base.bits))
    .with_qq_bits(a.m.unwrap_or(base.qq_bits))
    .with_padding(parse_padding(&a.padding)?)
    .with_post_relu(a.post_relu);
    spec.validate()?;

    let ledgers: Vec<(Pipeline, OpLedger)> =
        [Pipeline::Elementwise, Pipeline::Channelwise, Pipeline::Qq].into_iter().map(|p| (p, cost::pipeline_ledger(p, &spec))).collect();
    let report = CostReport::build(ledgers.iter().map(|(p, l)| (p.name(), l)), energy)?;
    emit(&render(&report, a.format)?, a.output.as_deref())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let (x, y) = (load(&a.a)?, load(&a.b)?);
    let r = compare(&x, &y, a.peak)?;
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&r).map_err(|e| CliError::Io(e.to_string()))? + "\n",
        Format::Text => compare_text(&r),
    };
    emit(&text, a.output.as_deref())?;
    match a.min_psnr {
        Some(min) if r.psnr_db < min => Err(CliError::Threshold(format!("psnr {:.2} dB below {min} dB", r.psnr_db))),
        _ => Ok(()),
    }
}

fn compare_text(r: &CompareReport) -> String {
    format!("mse {:e}\npsnr {:.4} dB (peak {})\nmax_abs {:e}\n", r.mse, r.psnr_db, r.peak, r.max_abs)
}

fn cmd_block(a: BlockArgs, table: &StepSizeTable, energy: &EnergyModel) -> Result<()> {
    let pipeline = parse_pipeline(&a.pipeline)?;
    let m = qq_bits(pipeline, a.m)?;
    let x = load(&a.x)?;
    let layers = a
        .layers
        .iter()
        .map(|spec| {
            let (path, relu) = match spec.rsplit_once(':') {
                Some((p, "relu")) => (p, true),
                _ => (spec.as_str(), false),
            };
            Ok(BlockLayer { weight: load(Path::new(path))?, relu })
        })
        .collect::<Result<Vec<_>>>()?;

    let out = run_block(&x, &layers, a.n, m, table, pipeline)?;
    let reference = run_block(&x, &layers, a.n, m, table, Pipeline::Reference)?;
    let cmp = compare(&out.y, &reference.y, a.peak)?;
    if let Some(p) = &a.output {
        write_tensor(&out.y, p, DType::F64).map_err(|e| io_err(p, e))?;
    }
    let layer_json: Vec<_> = out
        .layers
        .iter()
        .map(|l| {
            json!({
                "c_in": l.spec.c_in,
                "c_out": l.spec.c_out,
                "k": l.spec.k,
                "post_relu": l.spec.post_relu,
                "alpha_min": l.alpha_min,
                "alpha_max": l.alpha_max,
                "alpha_mean": l.alpha_mean,
                "width_audit": l.width_audit,
            })
        })
        .collect();
    let report = CostReport::build([(pipeline.name(), &out.ledger)], energy)?;
    let doc = json!({
        "pipeline": pipeline.name(),
        "cost": report.pipelines[0],
        "layers": layer_json,
        "compare_vs_reference": cmp,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))? + "\n";
    emit(&text, a.report.as_deref())
}
