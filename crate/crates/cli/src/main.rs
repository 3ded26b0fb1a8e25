//! Command-line surface for the virtual IMU pipeline: `simulate` (analytic
//! or learned), `train`, `eval` and `export-har`.
//!
//! Tunable options merge with precedence flags > TOML config file >
//! built-in defaults; input and output paths are flags only. Exit codes:
//! 0 ok, 2 configuration error, 3 format/IO error, 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use vimu_core::evalkit::{compare_traces, write_results_table, EvalError, ResultRow};
use vimu_core::kinematics::{region_motion, to_sensor_frame, GravitySign, KinematicsError};
use vimu_core::motion::{read_imu_csv, write_imu_csv, FrameTag, MotionError};
use vimu_core::postprocess::{
    distribution_map, export_har, har_windows, lowpass, normalize, HarMeta, PostprocessError,
};
use vimu_core::simnet::{
    build_windows, predict_series, train, NetworkConfig, SimnetError, TargetChannel, TrainConfig,
    WeightBundle,
};
use vimu_core::{ImuSeries, MotionTrackSet, SensorSpec};

/// Reported by `--version`: binary version plus every file format revision
/// this build reads and writes.
const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (formats: tracks=1 sensor-spec=1 weights=1 imu-csv=1)"
);

#[derive(Parser)]
#[command(name = "vimu", version = VERSION, about = "Virtual IMU synthesis from human motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize sensor-frame IMU readings for one skin region.
    Simulate(SimulateArgs),
    /// Train one network (accel or gyro) on a track set with known readings.
    Train(TrainArgs),
    /// Compare simulated readings against ground truth; write a results
    /// table and per-axis trace files.
    Eval(EvalArgs),
    /// Export filtered, normalized sliding windows for activity recognition.
    ExportHar(ExportHarArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Analytic,
    Learned,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GravitySignArg {
    Positive,
    Negative,
}

impl From<GravitySignArg> for GravitySign {
    fn from(v: GravitySignArg) -> GravitySign {
        match v {
            GravitySignArg::Positive => GravitySign::Positive,
            GravitySignArg::Negative => GravitySign::Negative,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ChannelArg {
    Accel,
    Gyro,
}

impl From<ChannelArg> for TargetChannel {
    fn from(v: ChannelArg) -> TargetChannel {
        match v {
            ChannelArg::Accel => TargetChannel::Accel,
            ChannelArg::Gyro => TargetChannel::Gyro,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MapScope {
    /// Map each of the six channels against the matching reference channel.
    Channel,
    /// Pool all channels of the recording into one distribution.
    Recording,
    /// Alias of `recording` while a single recording is supported.
    Global,
}

#[derive(Args)]
struct SimulateArgs {
    /// Mesh-vertex track CSV (`<name>.tracks.csv` with its JSON manifest).
    #[arg(long)]
    tracks: PathBuf,
    /// Region name within the track set.
    #[arg(long)]
    region: String,
    /// Sensor spec JSON (mount rotation, gravity, rate).
    #[arg(long)]
    spec: PathBuf,
    /// Output IMU CSV (sensor frame).
    #[arg(long)]
    output: PathBuf,
    /// Additionally write the global-frame intermediate series here.
    #[arg(long)]
    emit_global: Option<PathBuf>,
    /// Weights manifest; pass twice (accel and gyro) for learned mode.
    #[arg(long = "weights")]
    weights: Vec<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    gravity_sign: Option<GravitySignArg>,
    /// TOML config file supplying defaults for the tunable options.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    region: String,
    /// Ground-truth IMU CSV in the global frame, same rate as the tracks.
    #[arg(long)]
    targets: PathBuf,
    /// Which channel this network regresses.
    #[arg(long, value_enum)]
    channel: ChannelArg,
    /// Output weights manifest (`.json`; the `.bin` blob sits next to it).
    #[arg(long)]
    output: PathBuf,
    /// Optional per-epoch loss history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lstm_hidden: Option<usize>,
    /// Three conv layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    conv_channels: Option<Vec<usize>>,
    #[arg(long)]
    conv_kernel: Option<usize>,
    #[arg(long)]
    include_orientation: Option<bool>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    region: String,
    #[arg(long)]
    spec: PathBuf,
    /// Ground-truth IMU CSV (global or sensor frame; comparison happens in
    /// its frame).
    #[arg(long)]
    gt: PathBuf,
    /// Weights manifests; pass twice (accel and gyro) to add the learned row.
    #[arg(long = "weights")]
    weights: Vec<PathBuf>,
    /// Directory receiving `table.csv` and the trace files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Modality label written into the results table.
    #[arg(long)]
    modality: Option<String>,
    #[arg(long, value_enum)]
    gravity_sign: Option<GravitySignArg>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExportHarArgs {
    /// Input IMU CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output directory (`X.csv`, `y.csv`, `meta.json`).
    #[arg(long)]
    out_dir: PathBuf,
    /// Optional reference IMU CSV for distribution mapping.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, value_enum)]
    map_scope: Option<MapScope>,
    /// Low-pass cutoff in Hz.
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    overlap: Option<f64>,
    /// Activity label applied to every exported window.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    subject: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Tunable defaults loadable from a TOML file, one table per subcommand.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    simulate: SimulateFile,
    #[serde(default)]
    train: TrainFile,
    #[serde(default)]
    eval: EvalFile,
    #[serde(default, rename = "export-har")]
    export_har: ExportHarFile,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateFile {
    mode: Option<Mode>,
    gravity_sign: Option<GravitySignArg>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    seed: Option<u64>,
    epochs: Option<usize>,
    window_s: Option<f64>,
    overlap: Option<f64>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    lstm_hidden: Option<usize>,
    conv_channels: Option<Vec<usize>>,
    conv_kernel: Option<usize>,
    include_orientation: Option<bool>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalFile {
    modality: Option<String>,
    gravity_sign: Option<GravitySignArg>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportHarFile {
    map_scope: Option<MapScope>,
    cutoff: Option<f64>,
    window_s: Option<f64>,
    overlap: Option<f64>,
    label: Option<String>,
    subject: Option<String>,
}

/// Error classes mapped one-to-one onto exit codes.
enum CliError {
    /// Exit 2: bad flags, bad option values, inconsistent requests.
    Config(String),
    /// Exit 3: unreadable, unparsable or structurally invalid files.
    Format(String),
    /// Exit 4: computation failed on valid inputs.
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Format(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Format(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<MotionError> for CliError {
    fn from(e: MotionError) -> CliError {
        CliError::Format(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Format(e.to_string())
    }
}

impl From<KinematicsError> for CliError {
    fn from(e: KinematicsError) -> CliError {
        match e {
            KinematicsError::TooFewSamples { .. } => CliError::Config(e.to_string()),
            KinematicsError::DegenerateTriangle { .. } | KinematicsError::Aliased { .. } => {
                CliError::Numerical(e.to_string())
            }
            KinematicsError::LengthMismatch(..) => CliError::Format(e.to_string()),
            KinematicsError::Motion(m) => m.into(),
        }
    }
}

impl From<SimnetError> for CliError {
    fn from(e: SimnetError) -> CliError {
        match e {
            SimnetError::BadConfig(_)
            | SimnetError::EmptyBatch
            | SimnetError::RateMismatch { .. }
            | SimnetError::LengthMismatch { .. }
            | SimnetError::TooShort { .. }
            | SimnetError::ShapeMismatch { .. } => CliError::Config(e.to_string()),
            SimnetError::NonFiniteLoss(_) | SimnetError::Diverged { .. } => {
                CliError::Numerical(e.to_string())
            }
            SimnetError::WrongFrame(_) | SimnetError::BadBundle(_) => {
                CliError::Format(e.to_string())
            }
            SimnetError::Motion(m) => m.into(),
            SimnetError::Io(io) => io.into(),
        }
    }
}

impl From<PostprocessError> for CliError {
    fn from(e: PostprocessError) -> CliError {
        match e {
            PostprocessError::ZeroVariance(_) => CliError::Numerical(e.to_string()),
            PostprocessError::Io(io) => io.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> CliError {
        match e {
            EvalError::Io(io) => io.into(),
            _ => CliError::Format(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::ExportHar(args) => cmd_export_har(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
        }
    }
}

/// Loads the two bundles of a learned model and splits them by channel.
fn load_weight_pair(paths: &[PathBuf]) -> Result<(WeightBundle, WeightBundle), CliError> {
    if paths.len() != 2 {
        return Err(CliError::Config(format!(
            "learned mode needs --weights twice (accel and gyro), got {}",
            paths.len()
        )));
    }
    let a = WeightBundle::load(&paths[0])?;
    let b = WeightBundle::load(&paths[1])?;
    match (a.channel, b.channel) {
        (TargetChannel::Accel, TargetChannel::Gyro) => Ok((a, b)),
        (TargetChannel::Gyro, TargetChannel::Accel) => Ok((b, a)),
        (c, d) => Err(CliError::Config(format!(
            "--weights must cover accel and gyro, got {c:?} and {d:?}"
        ))),
    }
}

/// Global-frame motion of a region, analytic or learned.
fn simulate_global(
    set: &MotionTrackSet,
    region: &str,
    mode: Mode,
    weights: &[PathBuf],
) -> Result<ImuSeries, CliError> {
    match mode {
        Mode::Analytic => {
            if !weights.is_empty() {
                return Err(CliError::Config(
                    "--weights is only meaningful with --mode learned".into(),
                ));
            }
            let (accel, gyro) = region_motion(set, region)?;
            Ok(ImuSeries::new(FrameTag::Global, set.sample_rate, accel.values, gyro)
                .map_err(MotionError::from)?)
        }
        Mode::Learned => {
            let (accel_bundle, gyro_bundle) = load_weight_pair(weights)?;
            Ok(predict_series(&accel_bundle, &gyro_bundle, set, region)?)
        }
    }
}

/// Rotates a global-frame series into the sensor frame defined by `spec`,
/// using the region's tracked bone orientations.
fn into_sensor_frame(
    global: &ImuSeries,
    set: &MotionTrackSet,
    region: &str,
    spec: &SensorSpec,
    sign: GravitySign,
) -> Result<ImuSeries, CliError> {
    if (spec.sample_rate - set.sample_rate).abs() > 1e-9 {
        return Err(CliError::Config(format!(
            "sensor spec rate {} Hz does not match track rate {} Hz",
            spec.sample_rate, set.sample_rate
        )));
    }
    let orientation = &set.region(region)?.orientation;
    Ok(to_sensor_frame(&global.accel, &global.gyro, orientation, spec, sign)?)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let mode = args.mode.or(file.simulate.mode).unwrap_or(Mode::Analytic);
    let sign: GravitySign = args
        .gravity_sign
        .or(file.simulate.gravity_sign)
        .unwrap_or(GravitySignArg::Positive)
        .into();

    let set = vimu_core::motion::load_track_set(&args.tracks)?;
    set.region(&args.region)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let spec = SensorSpec::load(&args.spec)?;

    let global = simulate_global(&set, &args.region, mode, &args.weights)?;
    let sensor = into_sensor_frame(&global, &set, &args.region, &spec, sign)?;

    write_imu_csv(&sensor, &args.output)?;
    if let Some(path) = &args.emit_global {
        write_imu_csv(&global, path)?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        window_s: args.window_s.or(file.train.window_s).unwrap_or(defaults.window_s),
        overlap: args.overlap.or(file.train.overlap).unwrap_or(defaults.overlap),
        batch_size: args.batch_size.or(file.train.batch_size).unwrap_or(defaults.batch_size),
        epochs: args.epochs.or(file.train.epochs).unwrap_or(defaults.epochs),
        learning_rate: args
            .learning_rate
            .or(file.train.learning_rate)
            .unwrap_or(defaults.learning_rate),
        seed: args.seed.or(file.train.seed).unwrap_or(defaults.seed),
        ..defaults
    };
    let net_defaults = NetworkConfig::default();
    let conv = match args.conv_channels.or(file.train.conv_channels) {
        None => net_defaults.conv_channels,
        Some(v) => <[usize; 3]>::try_from(v).map_err(|v: Vec<usize>| {
            CliError::Config(format!("--conv-channels needs 3 widths, got {}", v.len()))
        })?,
    };
    let include_orientation = args
        .include_orientation
        .or(file.train.include_orientation)
        .unwrap_or(net_defaults.include_orientation);
    let net = NetworkConfig {
        input_dim: if include_orientation { 31 } else { 27 },
        conv_channels: conv,
        conv_kernel: args.conv_kernel.or(file.train.conv_kernel).unwrap_or(net_defaults.conv_kernel),
        lstm_hidden: args.lstm_hidden.or(file.train.lstm_hidden).unwrap_or(net_defaults.lstm_hidden),
        include_orientation,
    };

    let set = vimu_core::motion::load_track_set(&args.tracks)?;
    set.region(&args.region)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let targets = read_imu_csv(&args.targets)?;
    let channel: TargetChannel = args.channel.into();
    let windows = build_windows(&set, &args.region, &targets, channel, &net, &cfg)?;

    let (bundle, history) = train(&windows, channel, &net, &cfg)?;

    bundle.save(&args.output)?;
    if let Some(path) = &args.history {
        let mut text = String::from("epoch,loss\n");
        for (epoch, loss) in history.iter().enumerate() {
            text.push_str(&format!("{epoch},{loss:.16e}\n"));
        }
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let modality = args
        .modality
        .or(file.eval.modality)
        .unwrap_or_else(|| "tracks".to_string());
    let sign: GravitySign = args
        .gravity_sign
        .or(file.eval.gravity_sign)
        .unwrap_or(GravitySignArg::Positive)
        .into();

    let set = vimu_core::motion::load_track_set(&args.tracks)?;
    set.region(&args.region)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let spec = SensorSpec::load(&args.spec)?;
    let gt = read_imu_csv(&args.gt)?;

    // Every method is simulated in the ground truth's frame.
    let mut methods: Vec<(String, ImuSeries)> = Vec::new();
    let in_gt_frame = |global: ImuSeries| -> Result<ImuSeries, CliError> {
        match gt.frame_tag {
            FrameTag::Global => Ok(global),
            FrameTag::Sensor => into_sensor_frame(&global, &set, &args.region, &spec, sign),
        }
    };
    let analytic = simulate_global(&set, &args.region, Mode::Analytic, &[])?;
    methods.push(("analytic".to_string(), in_gt_frame(analytic)?));
    if !args.weights.is_empty() {
        let learned = simulate_global(&set, &args.region, Mode::Learned, &args.weights)?;
        methods.push(("learned".to_string(), in_gt_frame(learned)?));
    }

    std::fs::create_dir_all(&args.out_dir)?;
    let mut rows = Vec::new();
    for (method, sim) in &methods {
        let report = compare_traces(sim, &gt, args.out_dir.join(format!("trace_{method}.csv")))?;
        rows.push(ResultRow {
            method: method.clone(),
            modality: modality.clone(),
            accel_rmse: report.accel,
            gyro_rmse: report.gyro,
        });
    }
    write_results_table(&rows, args.out_dir.join("table.csv"))?;
    Ok(())
}

/// Six per-channel columns of an IMU series, in `ax..az,gx..gz` order.
fn channel_columns(series: &ImuSeries) -> Vec<Vec<f64>> {
    let mut cols = vec![Vec::with_capacity(series.len()); 6];
    for (a, g) in series.accel.iter().zip(&series.gyro) {
        for c in 0..3 {
            cols[c].push(a[c]);
            cols[3 + c].push(g[c]);
        }
    }
    cols
}

/// Low-pass plus z-score, the shared front of the export pipeline.
fn condition_channels(
    series: &ImuSeries,
    cutoff: f64,
) -> Result<Vec<Vec<f64>>, CliError> {
    let mut cols = Vec::with_capacity(6);
    for col in channel_columns(series) {
        cols.push(lowpass(&col, cutoff, series.sample_rate)?);
    }
    let rows: Vec<Vec<f64>> = (0..cols[0].len())
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    let (normed, _) = normalize(&rows)?;
    Ok(normed)
}

fn cmd_export_har(args: ExportHarArgs) -> Result<(), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let scope = args.map_scope.or(file.export_har.map_scope).unwrap_or(MapScope::Channel);
    let cutoff = args.cutoff.or(file.export_har.cutoff).unwrap_or(10.0);
    let window_s = args.window_s.or(file.export_har.window_s).unwrap_or(1.0);
    let overlap = args.overlap.or(file.export_har.overlap).unwrap_or(0.5);
    let label = args
        .label
        .or(file.export_har.label)
        .unwrap_or_else(|| "unlabeled".to_string());
    let subject = args
        .subject
        .or(file.export_har.subject)
        .unwrap_or_else(|| "s1".to_string());

    let series = read_imu_csv(&args.input)?;
    let mut rows = condition_channels(&series, cutoff)?;

    let mapped = if let Some(ref_path) = &args.reference {
        let reference = read_imu_csv(ref_path)?;
        let ref_rows = condition_channels(&reference, cutoff)?;
        rows = match scope {
            MapScope::Channel => {
                let mut out_cols = Vec::with_capacity(6);
                for c in 0..6 {
                    let sim: Vec<f64> = rows.iter().map(|r| r[c]).collect();
                    let rf: Vec<f64> = ref_rows.iter().map(|r| r[c]).collect();
                    out_cols.push(distribution_map(&sim, &rf)?);
                }
                (0..rows.len())
                    .map(|i| out_cols.iter().map(|c| c[i]).collect())
                    .collect()
            }
            MapScope::Recording | MapScope::Global => {
                let sim: Vec<f64> = rows.iter().flatten().copied().collect();
                let rf: Vec<f64> = ref_rows.iter().flatten().copied().collect();
                let flat = distribution_map(&sim, &rf)?;
                flat.chunks(6).map(|c| c.to_vec()).collect()
            }
        };
        true
    } else {
        false
    };

    let windows = har_windows(&rows, series.sample_rate, window_s, overlap)?;
    let labels = vec![label; windows.len()];
    let meta = HarMeta {
        sample_rate: series.sample_rate,
        window_s,
        overlap,
        subject,
        channels: ["ax", "ay", "az", "gx", "gy", "gz"].map(String::from).to_vec(),
        window_count: windows.len(),
        distribution_mapped: mapped,
    };
    export_har(&args.out_dir, &windows, &labels, &meta)?;
    Ok(())
}
