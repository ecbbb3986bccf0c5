//! `isac-sim`: experiment driver writing CSV files for every figure-level
//! result of the simulation engine.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use isac_core::experiments::{beam_pattern, ber_sweep, visibility_map, ExperimentError};
use isac_core::metrics::MetricsError;
use isac_core::modem::{BerChannel, ModScheme, MIN_SIMULATED_BITS};
use isac_core::montecarlo::{run_monte_carlo, summarize_localization, to_csv, MonteCarloError};
use isac_core::protocol::frame::{
    decode_response_frame, decode_sensing_frame, encode_response_frame, encode_sensing_frame, FrameBits, FrameError,
    ResponseFrame, SensingFrame,
};
use isac_core::scenario::{load_scenario, GridError, GridSpec, Scenario, ScenarioError};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_FRAME: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "isac-sim", version, about = "RIS-assisted ISAC simulator")]
struct Cli {
    /// Scenario file (flat TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gain of the wide (sensing) and directive beams over a grid.
    BeamPattern(GridArgs),
    /// BS-received power through the RISs over a grid.
    Visibility(GridArgs),
    /// Localization error statistics per SNR and threshold.
    Localize(SweepArgs),
    /// Simulated and analytic BER curves.
    Ber(BerArgs),
    /// Simulated and analytic ISAC success rates.
    IsacSr(SweepArgs),
    /// Encode or decode a 40-bit frame.
    Frame {
        #[command(subcommand)]
        action: FrameAction,
    },
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.5, 50.0])]
    x_range: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.5, 50.0])]
    y_range: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    resolution: f64,
    #[arg(long, default_value_t = 0.0)]
    z: f64,
    /// Output CSV path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 5000)]
    trials: u64,
    /// SNR points in dB.
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 40.0])]
    snr_list: Vec<f64>,
    /// Success thresholds in metres.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0, 3.0])]
    threshold_list: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Bpsk,
    Qam16,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChannelArg {
    Fixed,
    Rice,
}

#[derive(Debug, Args)]
struct BerArgs {
    /// Eb/N0 points in dB.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0])]
    snr_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [SchemeArg::Bpsk, SchemeArg::Qam16])]
    scheme: Vec<SchemeArg>,
    #[arg(long, value_enum, default_value_t = ChannelArg::Fixed)]
    channel: ChannelArg,
    /// Bits simulated per point.
    #[arg(long, default_value_t = 1_000_000)]
    bits: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl std::fmt::Display for SchemeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SchemeArg::Bpsk => "bpsk",
            SchemeArg::Qam16 => "qam16",
        })
    }
}

#[derive(Debug, Subcommand)]
enum FrameAction {
    /// Build a frame from fields and print it as 10 hex digits.
    Encode {
        /// Decimal or 0x-prefixed hex.
        #[arg(long, value_parser = parse_int)]
        user_id: u32,
        /// Sensing-frame timestamp (0–127).
        #[arg(long, default_value_t = 0, conflicts_with = "response")]
        timestamp: u8,
        /// Build a response frame instead of a sensing frame.
        #[arg(long)]
        response: bool,
        #[arg(long, requires = "response")]
        permission: bool,
        #[arg(long, requires = "response", default_value_t = 0.0)]
        height: f64,
    },
    /// Parse 10 hex digits, check the CRC and print the fields.
    Decode {
        hex: String,
        #[arg(long)]
        response: bool,
    },
}

fn parse_int(s: &str) -> Result<u32, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("{s:?}: {e}"))
}

/// Error tagged with the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn classify(error: anyhow::Error) -> Failure {
    let code = if let Some(e) = error.downcast_ref::<FrameError>() {
        match e {
            FrameError::CrcMismatch { .. } | FrameError::PreambleMismatch { .. } => EXIT_FRAME,
            _ => EXIT_VALIDATION,
        }
    } else if error.is::<ScenarioError>() || error.is::<GridError>() || error.is::<Validation>() {
        EXIT_VALIDATION
    } else if let Some(e) = error.downcast_ref::<MonteCarloError>() {
        match e {
            MonteCarloError::NoTrials
            | MonteCarloError::NoSnrPoints
            | MonteCarloError::InvalidSnr(_)
            | MonteCarloError::Metrics(MetricsError::InvalidThreshold(_)) => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    } else if let Some(e) = error.downcast_ref::<ExperimentError>() {
        match e {
            ExperimentError::Grid(_) | ExperimentError::InvalidEbN0(_) => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    } else {
        EXIT_RUNTIME
    };
    Failure { code, error }
}

/// Invalid command-line values detected after parsing.
#[derive(Debug)]
struct Validation(String);

impl std::fmt::Display for Validation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Validation {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli).map_err(classify) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

fn scenario(cli: &Cli) -> Result<Scenario> {
    Ok(match &cli.config {
        Some(path) => load_scenario(path)?,
        None => Scenario::default(),
    })
}

fn grid(args: &GridArgs) -> GridSpec {
    GridSpec {
        x: (args.x_range[0], args.x_range[1]),
        y: (args.y_range[0], args.y_range[1]),
        resolution: args.resolution,
        z: args.z,
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::BeamPattern(args) => {
            let rows = beam_pattern(&scenario(cli)?, &grid(args))?;
            write_output(args.out.as_deref(), &to_csv(&rows)?)
        }
        Command::Visibility(args) => {
            let rows = visibility_map(&scenario(cli)?, &grid(args), cli.seed)?;
            write_output(args.out.as_deref(), &to_csv(&rows)?)
        }
        Command::Localize(args) => {
            let s = scenario(cli)?;
            let result = run_monte_carlo(&s, &args.snr_list, &args.threshold_list, args.trials, cli.seed)?;
            let mut rows = Vec::new();
            for (snr, records) in &result.records {
                for &eps in &args.threshold_list {
                    rows.push(summarize_localization(*snr, records, eps)?);
                }
            }
            write_output(args.out.as_deref(), &to_csv(&rows)?)
        }
        Command::IsacSr(args) => {
            let s = scenario(cli)?;
            let result = run_monte_carlo(&s, &args.snr_list, &args.threshold_list, args.trials, cli.seed)?;
            write_output(args.out.as_deref(), &to_csv(&result.rows)?)
        }
        Command::Ber(args) => {
            if args.bits < MIN_SIMULATED_BITS {
                bail!(Validation(format!("--bits must be at least {MIN_SIMULATED_BITS}")));
            }
            let s = scenario(cli)?;
            let schemes: Vec<ModScheme> = args
                .scheme
                .iter()
                .map(|s| match s {
                    SchemeArg::Bpsk => ModScheme::Bpsk,
                    SchemeArg::Qam16 => ModScheme::Qam16,
                })
                .collect();
            let channel = match args.channel {
                ChannelArg::Fixed => BerChannel::Fixed,
                ChannelArg::Rice => BerChannel::Rice {
                    k_factor: s.radio.rice_factor,
                },
            };
            let rows = ber_sweep(&schemes, &args.snr_list, args.bits, channel, cli.seed)?;
            write_output(args.out.as_deref(), &to_csv(&rows)?)
        }
        Command::Frame { action } => frame(action),
    }
}

fn frame(action: &FrameAction) -> Result<()> {
    let text = match action {
        FrameAction::Encode {
            user_id,
            timestamp,
            response: false,
            ..
        } => {
            let f = SensingFrame::new(*user_id, *timestamp);
            describe_sensing(&encode_sensing_frame(&f)?, &f)
        }
        FrameAction::Encode {
            user_id,
            response: true,
            permission,
            height,
            ..
        } => {
            let bits = encode_response_frame(&ResponseFrame {
                user_id: *user_id,
                permission: *permission,
                height_m: *height,
            })?;
            describe_response(&bits, &decode_response_frame(&bits)?)
        }
        FrameAction::Decode { hex, response } => {
            let bits = FrameBits::from_hex(hex)?;
            if *response {
                describe_response(&bits, &decode_response_frame(&bits)?)
            } else {
                describe_sensing(&bits, &decode_sensing_frame(&bits)?)
            }
        }
    };
    write_output(None, &text)
}

fn describe_sensing(bits: &FrameBits, f: &SensingFrame) -> String {
    format!(
        "hex: {}\ntype: sensing\npreamble: {:#07b}\nuser_id: {:#07x}\ntimestamp: {}\ncrc: ok\n",
        bits.to_hex(),
        f.preamble,
        f.user_id,
        f.timestamp
    )
}

fn describe_response(bits: &FrameBits, f: &ResponseFrame) -> String {
    format!(
        "hex: {}\ntype: response\nuser_id: {:#07x}\npermission: {}\nheight_m: {:.1}\ncrc: ok\n",
        bits.to_hex(),
        f.user_id,
        f.permission,
        f.height_m
    )
}
