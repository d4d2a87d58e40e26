use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use lrac_core::audio::{read_wav, write_wav, AudioBuffer, SampleEncoding};
use lrac_core::bitstream::{pack, payload_bitrate, unpack, EncodedStream};
use lrac_core::codec::{init_weights, load_model, InitScheme, ModeSchedule, Model};
use lrac_core::compliance::{self, Budget};
use lrac_core::descriptor::ModelDescriptor;
use lrac_core::metrics::{multiscale_mel_loss, snr_db, MelLossConfig};
use lrac_core::rvq::{train_codebooks_ema, EmaConfig};
use lrac_core::scoring::{self, Battery};

#[derive(Parser)]
#[command(name = "lrac", version, about = "Low-resource speech codec toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Human,
    Machine,
}

#[derive(Clone, Copy, ValueEnum)]
enum Encoding {
    Pcm16,
    Float32,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Random,
    Framing,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Model descriptor (TOML).
    #[arg(long)]
    model: PathBuf,
    /// Weight container.
    #[arg(long)]
    weights: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a 24 kHz mono WAV file into a bitstream.
    Encode {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Mode schedule: "6", "1" or "MODE@SUPERFRAME,…" such as "1@0,6@5".
        #[arg(long, default_value = "6", value_parser = parse_schedule)]
        mode: ModeSchedule,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Decode a bitstream into a WAV file.
    Decode {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Encoding::Pcm16)]
        encoding: Encoding,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Complexity and latency report against a track's budget.
    Analyze {
        /// Model descriptor (TOML).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        track: u8,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Learn RVQ codebooks from a directory of WAV files.
    TrainCodebooks {
        #[command(flatten)]
        model: ModelArgs,
        /// Directory of 24 kHz mono WAV files.
        #[arg(long)]
        corpus: PathBuf,
        /// Where to write the updated weights.
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        /// Train every layer on every batch instead of a random prefix.
        #[arg(long)]
        no_dropout: bool,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Objective distances between a reference and a test WAV.
    Metrics {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Aggregate listening-test ratings into a final score.
    Score {
        /// Ratings CSV.
        #[arg(long)]
        ratings: PathBuf,
        /// Built-in battery for this track.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2), conflicts_with = "battery")]
        track: Option<u8>,
        /// Battery configuration (TOML).
        #[arg(long)]
        battery: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Describe a model or a bitstream.
    Info {
        /// Model descriptor (TOML).
        #[arg(long, required_unless_present = "bitstream")]
        model: Option<PathBuf>,
        /// Weight container, to count parameters.
        #[arg(long, requires = "model")]
        weights: Option<PathBuf>,
        /// Bitstream file.
        #[arg(long, conflicts_with = "model")]
        bitstream: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Write deterministic initial weights for a descriptor.
    InitWeights {
        /// Model descriptor (TOML).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Scheme::Random)]
        scheme: Scheme,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_schedule(s: &str) -> Result<ModeSchedule, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Validation failure or failed constraint.
    Check(anyhow::Error),
    Io(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Check(e.into())
    }
}

type CmdResult = std::result::Result<ExitCode, Failure>;

fn read(path: &Path) -> std::result::Result<Vec<u8>, Failure> {
    fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Io)
}

fn write(path: &Path, bytes: &[u8]) -> std::result::Result<(), Failure> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display())).map_err(Failure::Io)
}

fn with_path<T, E: Into<anyhow::Error>>(r: std::result::Result<T, E>, path: &Path) -> Result<T> {
    r.map_err(Into::into).with_context(|| path.display().to_string())
}

fn load(args: &ModelArgs) -> std::result::Result<Model, Failure> {
    let desc = read(&args.model)?;
    let weights = read(&args.weights)?;
    let descriptor = with_path(ModelDescriptor::from_bytes(&desc), &args.model)?;
    let store = with_path(lrac_core::weights::WeightStore::from_bytes(&weights), &args.weights)?;
    Ok(Model::new(descriptor, store).context("binding weights to descriptor")?)
}

fn read_audio(path: &Path) -> std::result::Result<AudioBuffer, Failure> {
    let bytes = read(path)?;
    Ok(with_path(read_wav(&bytes), path)?)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn encode(model: &ModelArgs, input: &Path, output: &Path, schedule: &ModeSchedule, format: Format) -> CmdResult {
    let model = load(model)?;
    let audio = read_audio(input)?;
    let encoded = with_path(model.encode(&audio, schedule), input)?;
    let stream = &encoded.stream;
    write(output, &pack(stream))?;
    let rate = payload_bitrate(stream)?;
    match format {
        Format::Human => {
            println!("frames: {}", rate.frames);
            println!("schedule: {schedule}");
            println!(
                "payload: {} bits, {} bit/s",
                rate.payload_bits,
                fmt_num(rate.payload_bps)
            );
            println!(
                "with signaling: {} bit/s ({} signaling bits)",
                fmt_num(rate.payload_plus_signaling_bps),
                rate.signaling_bits
            );
            println!(
                "input: {} samples, padded to {}",
                encoded.original_len, encoded.padded_len
            );
        }
        Format::Machine => print_json(&json!({
            "frames": rate.frames,
            "schedule": schedule.to_string(),
            "payload_bits": rate.payload_bits,
            "payload_bps": rate.payload_bps,
            "signaling_bits": rate.signaling_bits,
            "header_bits": rate.header_bits,
            "payload_plus_signaling_bps": rate.payload_plus_signaling_bps,
            "original_samples": encoded.original_len,
            "padded_samples": encoded.padded_len,
        })),
    }
    Ok(ExitCode::SUCCESS)
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn decode(model: &ModelArgs, input: &Path, output: &Path, encoding: Encoding, format: Format) -> CmdResult {
    let model = load(model)?;
    let bytes = read(input)?;
    let stream = with_path(unpack(&bytes), input)?;
    let audio = model.decode(&stream)?;
    let enc = match encoding {
        Encoding::Pcm16 => SampleEncoding::Pcm16,
        Encoding::Float32 => SampleEncoding::Float32,
    };
    write(output, &write_wav(&audio, enc))?;
    let modes: Vec<u8> = stream.super_frames().iter().map(|s| s.mode).collect();
    match format {
        Format::Human => println!(
            "decoded {:.3} s ({} samples, {} frames, modes {:?})",
            audio.duration(),
            audio.len(),
            stream.frame_count(),
            modes
        ),
        Format::Machine => print_json(&json!({
            "duration_s": audio.duration(),
            "samples": audio.len(),
            "frames": stream.frame_count(),
            "super_frame_modes": modes,
        })),
    }
    Ok(ExitCode::SUCCESS)
}

fn verdict_code(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn analyze(model: &Path, track: u8, format: Format) -> CmdResult {
    let bytes = read(model)?;
    let descriptor = with_path(ModelDescriptor::from_bytes(&bytes), model)?;
    let report = compliance::analyze(&descriptor, &Budget::track(track)?)?;
    match format {
        Format::Human => print!("{}", compliance::render_table(&report)),
        Format::Machine => print_json(&compliance::to_json(&report)),
    }
    Ok(verdict_code(report.pass()))
}

fn wav_files(dir: &Path) -> std::result::Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .map_err(Failure::Io)?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.with_context(|| format!("reading {}", dir.display())).map_err(Failure::Io)?.path();
        if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn mean_mel_loss(model: &Model, clips: &[AudioBuffer]) -> Result<f64> {
    let schedule = ModeSchedule::constant(model.num_layers() as u8)?;
    let cfg = MelLossConfig::default();
    let mut total = 0.0;
    for clip in clips {
        let e = model.encode(clip, &schedule)?;
        let mut y = model.decode(&e.stream)?;
        y.truncate(clip.len());
        total += multiscale_mel_loss(clip, &y, &cfg)?;
    }
    Ok(total / clips.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn train(
    model: &ModelArgs,
    corpus: &Path,
    output: &Path,
    seed: u64,
    epochs: usize,
    batch_size: usize,
    no_dropout: bool,
    format: Format,
) -> CmdResult {
    let base = load(model)?;
    let files = wav_files(corpus)?;
    if files.is_empty() {
        return Err(Failure::Check(anyhow!("no .wav files in {}", corpus.display())));
    }
    let mut clips = Vec::with_capacity(files.len());
    let mut vectors = Vec::new();
    for f in &files {
        let clip = read_audio(f)?;
        vectors.extend(with_path(base.training_vectors(&clip), f)?);
        clips.push(clip);
    }
    let cfg = EmaConfig {
        num_layers: base.num_layers(),
        epochs,
        batch_size,
        quantizer_dropout: !no_dropout,
        seed,
        ..EmaConfig::default()
    };
    let dim = base.descriptor().rvq.dim;
    let (quantizer, report) = train_codebooks_ema(&vectors, dim, &cfg).context("training codebooks")?;
    let trained = base.with_quantizer(quantizer)?;
    write(output, &trained.weights().to_bytes())?;
    let before = mean_mel_loss(&base, &clips)?;
    let after = mean_mel_loss(&trained, &clips)?;
    match format {
        Format::Human => {
            println!("files: {}, training vectors: {}", files.len(), vectors.len() / dim);
            println!("batches: {}, dead codes reset per layer: {:?}", report.batches, report.dead_codes_reset);
            println!("residual mse: {:.6} -> {:.6}", report.initial_mse, report.final_mse);
            println!("mel loss (all layers): {before:.6} -> {after:.6}");
        }
        Format::Machine => print_json(&json!({
            "files": files.len(),
            "vectors": vectors.len() / dim,
            "batches": report.batches,
            "dead_codes_reset": report.dead_codes_reset,
            "initial_mse": report.initial_mse,
            "final_mse": report.final_mse,
            "mel_loss_before": before,
            "mel_loss_after": after,
        })),
    }
    Ok(ExitCode::SUCCESS)
}

fn metrics(reference: &Path, test: &Path, format: Format) -> CmdResult {
    let r = read_audio(reference)?;
    let t = read_audio(test)?;
    let mel = multiscale_mel_loss(&r, &t, &MelLossConfig::default())?;
    let snr = snr_db(&r, &t)?;
    match format {
        Format::Human => {
            println!("mel_loss {mel:.6}");
            println!("snr_db {}", if snr.is_infinite() { "inf".to_string() } else { format!("{snr:.3}") });
        }
        Format::Machine => print_json(&json!({
            "mel_loss": mel,
            "snr_db": if snr.is_infinite() { json!("inf") } else { json!(snr) },
        })),
    }
    Ok(ExitCode::SUCCESS)
}

fn score(ratings: &Path, track: Option<u8>, battery: Option<&Path>, format: Format) -> CmdResult {
    let battery = match (track, battery) {
        (_, Some(path)) => {
            let text = String::from_utf8(read(path)?).with_context(|| path.display().to_string())?;
            with_path(Battery::from_toml(&text), path)?
        }
        (Some(t), None) => Battery::for_track(t)?,
        (None, None) => bail_usage("score needs --track or --battery")?,
    };
    let bytes = read(ratings)?;
    let records = with_path(scoring::read_ratings(bytes.as_slice()), ratings)?;
    let report = scoring::evaluate(&records, &battery)?;
    match format {
        Format::Human => print!("{}", scoring::render_table(&report)),
        Format::Machine => print_json(&scoring::to_json(&report)),
    }
    Ok(ExitCode::SUCCESS)
}

fn bail_usage<T>(msg: &str) -> std::result::Result<T, Failure> {
    use clap::CommandFactory;
    Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, msg).exit()
}

fn info(model: Option<&Path>, weights: Option<&Path>, bitstream: Option<&Path>, format: Format) -> CmdResult {
    if let Some(path) = bitstream {
        let stream = with_path(unpack(&read(path)?), path)?;
        return info_stream(&stream, format);
    }
    let path = model.expect("clap requires model or bitstream");
    let d = with_path(ModelDescriptor::from_bytes(&read(path)?), path)?;
    let params = match weights {
        Some(w) => {
            let store = with_path(lrac_core::weights::WeightStore::from_bytes(&read(w)?), w)?;
            Model::new(d.clone(), store.clone())?;
            Some(store.parameter_count())
        }
        None => None,
    };
    let bitrates: Vec<f64> = (1..=d.rvq.num_layers)
        .map(|m| (m * 10) as f64 * d.frame_rate())
        .collect();
    match format {
        Format::Human => {
            println!("model: {}", d.name);
            println!("sample rate: {} Hz, hop {} samples, {} frames/s", d.sample_rate, d.frame_hop, d.frame_rate());
            println!("encoder layers: {}, decoder layers: {}", d.encoder.len(), d.decoder.len());
            println!(
                "rvq: {} layers × 1024 codewords, dim {}, model dim {}, projection {}",
                d.rvq.num_layers, d.rvq.dim, d.rvq.model_dim, d.rvq.projection
            );
            let modes: Vec<String> = bitrates.iter().enumerate().map(|(i, b)| format!("{}: {b} bit/s", i + 1)).collect();
            println!("modes: {}", modes.join(", "));
            if let Some(p) = params {
                println!("parameters: {p}");
            }
        }
        Format::Machine => print_json(&json!({
            "name": d.name,
            "sample_rate": d.sample_rate,
            "frame_hop": d.frame_hop,
            "frame_rate": d.frame_rate(),
            "encoder_layers": d.encoder.len(),
            "decoder_layers": d.decoder.len(),
            "rvq": { "num_layers": d.rvq.num_layers, "dim": d.rvq.dim, "model_dim": d.rvq.model_dim, "projection": d.rvq.projection },
            "mode_bitrates": bitrates,
            "parameters": params,
        })),
    }
    Ok(ExitCode::SUCCESS)
}

fn info_stream(stream: &EncodedStream, format: Format) -> CmdResult {
    let modes: Vec<u8> = stream.super_frames().iter().map(|s| s.mode).collect();
    let rate = payload_bitrate(stream).ok();
    match format {
        Format::Human => {
            println!("sample rate: {} Hz, hop {}", stream.sample_rate(), stream.frame_hop());
            println!("frames: {}, super-frames: {}, modes {:?}", stream.frame_count(), modes.len(), modes);
            if let Some(r) = rate {
                println!("duration: {:.3} s, payload {} bit/s", r.duration_s, fmt_num(r.payload_bps));
            }
        }
        Format::Machine => print_json(&json!({
            "sample_rate": stream.sample_rate(),
            "frame_hop": stream.frame_hop(),
            "frames": stream.frame_count(),
            "super_frame_modes": modes,
            "payload_bps": rate.map(|r| r.payload_bps),
        })),
    }
    Ok(ExitCode::SUCCESS)
}

fn init(model: &Path, output: &Path, scheme: Scheme, seed: u64) -> CmdResult {
    let d = with_path(ModelDescriptor::from_bytes(&read(model)?), model)?;
    let scheme = match scheme {
        Scheme::Random => InitScheme::Random,
        Scheme::Framing => InitScheme::Framing,
    };
    let store = init_weights(&d, scheme, seed)?;
    write(output, &store.to_bytes())?;
    // Round-trip through the loader so a written file is always loadable.
    load_model(&read(model)?, &read(output)?)?;
    println!("wrote {} tensors, {} parameters", store.len(), store.parameter_count());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Encode { model, input, output, mode, format } => encode(&model, &input, &output, &mode, format),
        Command::Decode { model, input, output, encoding, format } => decode(&model, &input, &output, encoding, format),
        Command::Analyze { model, track, format } => analyze(&model, track, format),
        Command::TrainCodebooks { model, corpus, output, seed, epochs, batch_size, no_dropout, format } => {
            train(&model, &corpus, &output, seed, epochs, batch_size, no_dropout, format)
        }
        Command::Metrics { reference, test, format } => metrics(&reference, &test, format),
        Command::Score { ratings, track, battery, format } => score(&ratings, track, battery.as_deref(), format),
        Command::Info { model, weights, bitstream, format } => {
            info(model.as_deref(), weights.as_deref(), bitstream.as_deref(), format)
        }
        Command::InitWeights { model, output, scheme, seed } => init(&model, &output, scheme, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Check(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
