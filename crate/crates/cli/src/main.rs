//! `wptfft` command-line front end.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 invariant
//! violation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use wptfft::bench::{delay_sweep, measure_pipeline, system_delay, LengthPolicy, SweepConfig};
use wptfft::config::{KeyValues, RunConfig};
use wptfft::io::{self, LabelMap, SyntheticDatasetSpec};
use wptfft::ml::{evaluate, split_dataset, ForestParams, HyperparamSpace};
use wptfft::pipeline::{features_from_recordings, segment_recordings, train_model};
use wptfft::selection::{select_mean_over_segments, select_with};
use wptfft::{wavelet_filters, Error, ErrorClass, Execution, WptFftExtractor};

#[derive(Parser, Debug)]
#[command(
    name = "wptfft",
    version,
    about = "WPT-FFT bearing fault diagnosis pipeline"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Flat key=value file whose entries act as flags; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct SignalArgs {
    /// Signal CSV file or directory of CSV files.
    #[arg(long, required = true, value_name = "PATH")]
    input: Vec<PathBuf>,

    /// Sampling rate in Hz.
    #[arg(long)]
    fs: f64,

    /// Label map `key=label,...` applied to file-name keys.
    #[arg(long, default_value = "")]
    labels: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic dataset from a TOML description.
    Synth {
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Segment signals and write a feature CSV.
    Extract {
        #[command(flatten)]
        signals: SignalArgs,
        #[arg(long, default_value_t = 600)]
        window: usize,
        /// Defaults to the window length.
        #[arg(long)]
        hop: Option<usize>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value = "db4")]
        wavelet: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Score candidate wavelets and levels by energy-to-entropy ratio.
    SelectWavelet {
        #[command(flatten)]
        signals: SignalArgs,
        #[arg(long, default_value_t = 600)]
        window: usize,
        #[arg(long)]
        hop: Option<usize>,
        /// Comma-separated candidate wavelets.
        #[arg(long, default_value = "db1,db2,db4,db8")]
        candidates: String,
        #[arg(long, default_value_t = 5)]
        kmax: usize,
        /// Segment to score.
        #[arg(long, default_value_t = 0)]
        segment: usize,
        /// Average ratios over all segments instead of scoring one.
        #[arg(long)]
        mean: bool,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train a random forest on a feature CSV.
    Train {
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// 0 trains with default parameters; otherwise the number of
        /// Bayesian-optimization evaluations.
        #[arg(long, default_value_t = 0)]
        tune_budget: usize,
        /// Hold out a stratified test split and write it here.
        #[arg(long, value_name = "FILE")]
        test_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Write the tuning trials as CSV.
        #[arg(long, value_name = "FILE")]
        tuning_log: Option<PathBuf>,
    },
    /// Report accuracy, one-vs-rest AUC and the confusion matrix.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Classify one segment and report the measured system delay.
    Predict {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Signal CSV; the first full window (or `--segment`) is used.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long)]
        fs: f64,
        #[arg(long, default_value_t = 0)]
        segment: usize,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
    },
    /// Sweep window, level and peak count and write delay reports.
    Bench {
        /// Synthetic dataset description; the first recording of each class
        /// is used.
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value = "300,600,1200,2400")]
        windows: String,
        #[arg(long, default_value = "2,3,5")]
        levels: String,
        #[arg(long, default_value = "1,2,3")]
        peaks: String,
        #[arg(long, default_value = "db4")]
        wavelet: String,
        #[arg(long, default_value_t = 40)]
        segments_per_class: usize,
        #[arg(long, default_value_t = 50)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        /// What to do with windows not divisible by 2^k.
        #[arg(long, value_enum, default_value_t = Policy::Skip)]
        length_policy: Policy,
        /// Also time feature extraction alone.
        #[arg(long)]
        stage_timing: bool,
        /// Reuse or store per-cell models here.
        #[arg(long, value_name = "DIR")]
        model_dir: Option<PathBuf>,
        /// Free-form hardware description for the report header.
        #[arg(long, default_value = "")]
        note: String,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Policy {
    Skip,
    Pad,
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Invariant => 3,
    })
}

/// Splices `--config FILE` entries into argv right after the subcommand, so
/// later explicit flags override them.
fn expand_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>, Error> {
    let mut path = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--config" && i + 1 < argv.len() {
            path = Some(PathBuf::from(argv.remove(i + 1)));
            argv.remove(i);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let kv = KeyValues::load(&path)?;
    let mut injected = Vec::new();
    for (key, value) in kv.entries() {
        match value {
            "true" => injected.push(OsString::from(format!("--{key}"))),
            "false" => {}
            v => injected.push(OsString::from(format!("--{key}={v}"))),
        }
    }
    let sub = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(argv.len(), |p| p + 2);
    argv.splice(sub..sub, injected);
    Ok(argv)
}

fn parse_list<T: std::str::FromStr>(name: &str, s: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::InvalidParameter(format!("invalid entry `{p}` in --{name}")))
        })
        .collect()
}

fn load_recordings(signals: &SignalArgs) -> Result<Vec<io::Recording>, Error> {
    let map = LabelMap::parse(&signals.labels)?;
    let mut out = Vec::new();
    for p in &signals.input {
        out.extend(io::load_signals(p, signals.fs, &map)?);
    }
    Ok(out)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(command: Command, exec: Execution) -> Result<(), Error> {
    match command {
        Command::Synth { spec, out } => {
            let spec = SyntheticDatasetSpec::load(&spec)?;
            let recordings = spec.generate()?;
            let paths = io::write_recordings(&out, &recordings)?;
            println!("wrote {} recordings to {}", paths.len(), out.display());
        }
        Command::Extract {
            signals,
            window,
            hop,
            k,
            m,
            wavelet,
            out,
        } => {
            let cfg = RunConfig {
                inputs: signals.input.clone(),
                sample_rate: signals.fs,
                window,
                hop,
                level: k,
                peaks: m,
                wavelet,
                outputs: vec![out.clone()],
                ..RunConfig::default()
            };
            cfg.validate()?;
            let recordings = load_recordings(&signals)?;
            let data = features_from_recordings(&recordings, &cfg, exec)?;
            io::write_feature_csv(&out, &data)?;
            println!(
                "wrote {} rows x {} features to {}",
                data.len(),
                data.n_features(),
                out.display()
            );
        }
        Command::SelectWavelet {
            signals,
            window,
            hop,
            candidates,
            kmax,
            segment,
            mean,
            out,
        } => {
            let filters = parse_list::<String>("candidates", &candidates)?
                .iter()
                .map(|name| wavelet_filters(name))
                .collect::<Result<Vec<_>, _>>()?;
            let recordings = load_recordings(&signals)?;
            let segments = segment_recordings(&recordings, window, hop.unwrap_or(window))?;
            let result = if mean {
                select_mean_over_segments(&segments, &filters, kmax, exec)?
            } else {
                let seg = segments.get(segment).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "segment {segment} out of range ({} segments)",
                        segments.len()
                    ))
                })?;
                select_with(seg, &filters, kmax, exec)?
            };
            write_or_print(out.as_deref(), &io::selection_csv(&result.scores))?;
            eprintln!("selected wavelet={} level={}", result.wavelet, result.level);
        }
        Command::Train {
            features,
            model,
            seed,
            tune_budget,
            test_out,
            train_fraction,
            tuning_log,
        } => {
            let data = io::read_feature_csv(&features)?;
            let train = match &test_out {
                Some(path) => {
                    let (train, test) = split_dataset(&data, train_fraction, seed)?;
                    io::write_feature_csv(path, &test)?;
                    info!("held out {} of {} rows", test.len(), data.len());
                    train
                }
                None => data,
            };
            let (forest, tuning) = train_model(&train, tune_budget, seed, exec)?;
            io::save_model(&model, &forest)?;
            if let (Some(path), Some(t)) = (&tuning_log, &tuning) {
                let space = HyperparamSpace::forest(train.n_features(), tune_budget);
                io::write_text(path, &t.log_csv(&space.params))?;
            }
            let ForestParams {
                n_trees,
                max_depth,
                min_samples_leaf,
                ..
            } = forest.params;
            println!(
                "trained {n_trees} trees (max depth {max_depth}, min leaf {min_samples_leaf}) on {} rows; model written to {}",
                train.len(),
                model.display()
            );
        }
        Command::Evaluate {
            model,
            features,
            out,
        } => {
            let forest = io::load_model(&model)?;
            let data = io::read_feature_csv(&features)?;
            let report = io::evaluation_report(&evaluate(&forest, &data)?);
            write_or_print(out.as_deref(), &report)?;
        }
        Command::Predict {
            model,
            input,
            fs,
            segment,
            reps,
            warmup,
        } => {
            let forest = io::load_model(&model)?;
            let meta = forest.meta.clone();
            let (samples, _) = io::read_signal_file(&input)?;
            let segments = wptfft::segment_signal(&samples, fs, meta.window, meta.window)?;
            let seg = segments.get(segment).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "segment {segment} out of range ({} segments)",
                    segments.len()
                ))
            })?;
            let extractor = WptFftExtractor::new(meta.level, meta.peaks, &meta.wavelet)?;
            let prediction = forest.predict(&extractor.extract(seg)?)?;
            let tp = measure_pipeline(&extractor, &forest, seg, warmup, reps)?;
            let mut s = String::new();
            let _ = writeln!(s, "class={}", prediction.label);
            for (c, p) in forest.classes.iter().zip(&prediction.probabilities) {
                let _ = writeln!(s, "p[{c}]={p:?}");
            }
            let _ = writeln!(
                s,
                "tau_d_s={:.6} (T_vin_s={:.6} + Tp_median_s={:.6}, p95={:.6}, reps={})",
                system_delay(meta.window, fs, tp.median),
                meta.window as f64 / fs,
                tp.median,
                tp.p95,
                tp.reps
            );
            print!("{s}");
        }
        Command::Bench {
            spec,
            out,
            windows,
            levels,
            peaks,
            wavelet,
            segments_per_class,
            trees,
            seed,
            reps,
            warmup,
            length_policy,
            stage_timing,
            model_dir,
            note,
        } => {
            let spec = SyntheticDatasetSpec::load(&spec)?;
            let mut classes = Vec::new();
            for (label, s) in spec.recording_specs() {
                if !classes.iter().any(|(l, _)| l == &label) {
                    classes.push((label, s));
                }
            }
            let mut cfg = SweepConfig::published_grid(classes);
            cfg.windows = parse_list("windows", &windows)?;
            cfg.levels = parse_list("levels", &levels)?;
            cfg.peaks = parse_list("peaks", &peaks)?;
            cfg.wavelet = wavelet;
            cfg.segments_per_class = segments_per_class;
            cfg.forest.n_trees = trees;
            cfg.seed = seed;
            cfg.reps = reps;
            cfg.warmup = warmup;
            cfg.length_policy = match length_policy {
                Policy::Skip => LengthPolicy::Skip,
                Policy::Pad => LengthPolicy::ZeroPad,
            };
            cfg.stage_timing = stage_timing;
            cfg.model_dir = model_dir;
            cfg.environment_note = note;
            let report = delay_sweep(&cfg)?;
            io::write_text(&out.join("delay.csv"), &io::delay_csv(&report))?;
            io::write_text(&out.join("delay_views.csv"), &io::delay_views_csv(&report))?;
            println!(
                "measured {} cells ({} skipped); reports written to {}",
                report.rows.len(),
                report.skipped.len(),
                out.display()
            );
            if let Some(d) = report.dominance() {
                println!(
                    "avg tau_d growth: acquisition sweep {:.1}%, feature-size sweep {:.1}%",
                    100.0 * d.duration_growth,
                    100.0 * d.size_growth
                );
            }
        }
    }
    Ok(())
}
