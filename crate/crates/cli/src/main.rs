use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sig2text::dataset::{read_manifest, DatasetReader, DatasetWriter};
use sig2text::eval::{snr_sweep, write_metrics_csv, MatchMode, Metrics};
use sig2text::infer::{BeamConfig, PredictionRecord, Predictor, StopRule};
use sig2text::nn::{ModelCheckpoint, ModelConfig};
use sig2text::pipeline::{generate_record, signal_patches, GenConfig};
use sig2text::symlang::{tokens_to_display, Language};
use sig2text::tfr::StftConfig;
use sig2text::train::{split_indices, train, write_history_csv, Example, TrainConfig};
use sig2text::waveform::{SignalClass, WaveformSpec};

#[derive(Parser)]
#[command(name = "sig2text", version, about = "Radar pulse synthesis and signal-to-text recognition")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a dataset (manifest.jsonl + signals.bin).
    Gen {
        /// Comma-separated subtypes and hybrid families, e.g. `LFM,Costas,FM+PM`.
        #[arg(long, default_value = "all")]
        classes: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        snr_min: f64,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        snr_max: f64,
        #[arg(long, default_value_t = 50.0)]
        pw_min_us: f64,
        #[arg(long, default_value_t = 100.0)]
        pw_max_us: f64,
        /// ADC bits; 0 disables quantization.
        #[arg(long, default_value_t = 8)]
        adc_bits: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Separate validation dataset; otherwise `val_size` records are held out.
        #[arg(long)]
        val_data: Option<PathBuf>,
        /// `small`, `large`, `tiny` or a JSON file.
        #[arg(long, default_value = "small")]
        model_config: String,
        /// JSON file with training options.
        #[arg(long)]
        train_config: Option<PathBuf>,
        /// JSON file with STFT options; image dims follow the model.
        #[arg(long)]
        stft_config: Option<PathBuf>,
        /// Overrides the seed of the training config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// History CSV; defaults to `<out>.history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Decode every pulse of a dataset.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        beam: usize,
        #[arg(long, default_value_t = 50)]
        max_len: usize,
        /// Stop when any beam ends instead of the best one.
        #[arg(long)]
        stop_on_any: bool,
        /// Predictions JSONL; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against a dataset's ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Dataset directory.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        order_sensitive: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Description string on stdin → spec JSON on stdout.
    Parse {
        /// Read the dequantized form (`FM LFM cf 23.4 B 5.0`) instead of tokens.
        #[arg(long)]
        display: bool,
    },
    /// Spec JSON on stdin → description string on stdout.
    Serialize {
        #[arg(long)]
        display: bool,
    },
    /// Accuracy and MSE over a grid of SNRs on fresh signals.
    Sweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "all")]
        classes: String,
        /// Comma-separated SNRs in dB.
        #[arg(long, default_value = "-10,-5,0,5,10", allow_hyphen_values = true)]
        snr_grid: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        beam: usize,
        #[arg(long, default_value_t = 50)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_classes(s: &str) -> Result<Vec<SignalClass>> {
    if s == "all" {
        return Ok(GenConfig::default().classes);
    }
    s.split(',')
        .map(|c| c.trim().parse::<SignalClass>().with_context(|| format!("unknown class {c:?}")))
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn model_config(s: &str) -> Result<ModelConfig> {
    let cfg = match s {
        "small" => ModelConfig::small(),
        "large" => ModelConfig::large(),
        "tiny" => ModelConfig::tiny(),
        path => read_json(Path::new(path))?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_examples(dir: &Path, lang: &Language, stft: &StftConfig, mc: &ModelConfig) -> Result<Vec<Example>> {
    let mut rd = DatasetReader::open(dir)?;
    let mut out = Vec::with_capacity(rd.len());
    for i in 0..rd.len() {
        let e = rd.entries[i].clone();
        let sig = rd.signal(i)?;
        let patches = signal_patches(&sig, stft, mc.patch_dims)?;
        out.push(Example {
            id: e.id,
            patches: patches.data,
            tokens: lang.vocab.tokenize(&e.label_string)?,
        });
    }
    Ok(out)
}

fn run(cmd: Cmd) -> Result<()> {
    let lang = Language::radar();
    match cmd {
        Cmd::Gen {
            classes,
            n,
            snr_min,
            snr_max,
            pw_min_us,
            pw_max_us,
            adc_bits,
            seed,
            out,
        } => {
            let cfg = GenConfig {
                classes: parse_classes(&classes)?,
                n,
                snr_db: (snr_min, snr_max),
                pulse_width_s: (pw_min_us * 1e-6, pw_max_us * 1e-6),
                adc_bits: (adc_bits > 0).then_some(adc_bits),
                seed,
                ..GenConfig::default()
            };
            cfg.validate()?;
            let mut w = DatasetWriter::create(&out)?;
            for i in 0..n {
                let r = generate_record(&cfg, i)?;
                let label = lang.vocab.detokenize(&lang.serialize(&r.spec)?.ids)?;
                w.push(r.id, label, &r.signal, Some(&r.spec))?;
            }
            w.finish()?;
            log::info!("wrote {n} records to {}", out.display());
        }
        Cmd::Train {
            data,
            val_data,
            model_config: mc,
            train_config,
            stft_config,
            seed,
            out,
            history,
        } => {
            let mc = model_config(&mc)?;
            let mut tc: TrainConfig = match &train_config {
                Some(p) => read_json(p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                tc.seed = s;
            }
            let mut stft: StftConfig = match &stft_config {
                Some(p) => read_json(p)?,
                None => StftConfig::default(),
            };
            stft.image_dims = mc.image_dims;
            stft.validate()?;
            let all = load_examples(&data, &lang, &stft, &mc)?;
            let (train_set, val) = match &val_data {
                Some(v) => (all, load_examples(v, &lang, &stft, &mc)?),
                None => {
                    let (tr, va) = split_indices(all.len(), tc.val_size, tc.seed);
                    let pick = |ix: &[usize]| ix.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
                    (pick(&tr), pick(&va))
                }
            };
            log::info!("training on {} records, validating on {}", train_set.len(), val.len());
            let outcome = train(&train_set, &val, &mc, &tc, &stft)?;
            outcome.checkpoint.save(&out)?;
            let hist = history.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".history.csv");
                p.into()
            });
            write_history_csv(&outcome.history, BufWriter::new(File::create(&hist)?))?;
            log::info!("stopped ({:?}), best epoch {}", outcome.stop, outcome.best_epoch);
        }
        Cmd::Infer {
            ckpt,
            data,
            beam,
            max_len,
            stop_on_any,
            out,
        } => {
            let ck = ModelCheckpoint::load(&ckpt)?;
            let predictor = Predictor::new(ck.model::<f32>()?, ck.stft.clone());
            let cfg = BeamConfig {
                beam,
                max_len,
                stop: if stop_on_any { StopRule::AnyFrozen } else { StopRule::TopFrozen },
                ..BeamConfig::default()
            };
            let mut rd = DatasetReader::open(&data)?;
            let mut w = output(out.as_deref())?;
            for i in 0..rd.len() {
                let id = rd.entries[i].id;
                let p = predictor.predict(&rd.signal(i)?, &cfg)?;
                serde_json::to_writer(&mut w, &PredictionRecord::new(id, &p))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Cmd::Eval {
            pred,
            truth,
            order_sensitive,
            out,
        } => {
            let mut by_id: HashMap<u64, Option<WaveformSpec>> = HashMap::new();
            for (n, line) in BufReader::new(File::open(&pred)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: PredictionRecord =
                    serde_json::from_str(&line).with_context(|| format!("{} line {}", pred.display(), n + 1))?;
                by_id.insert(r.id, r.parsed);
            }
            let manifest = read_manifest(&truth)?;
            let mut preds = Vec::with_capacity(manifest.len());
            let mut truths = Vec::with_capacity(manifest.len());
            for e in &manifest {
                let Some(p) = by_id.remove(&e.id) else {
                    bail!("no prediction for record {}", e.id);
                };
                preds.push(p);
                truths.push(e.truth(&lang)?);
            }
            if !by_id.is_empty() {
                bail!("{} predictions have no ground truth", by_id.len());
            }
            let m = Metrics::compute(&preds, &truths, MatchMode { order_sensitive })?;
            let mut w = output(out.as_deref())?;
            write_metrics_csv(&[m], &mut w)?;
            w.flush()?;
        }
        Cmd::Parse { display } => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text)?;
            let spec = if display {
                lang.parse_display(&text)?
            } else {
                lang.parse_ids(&lang.vocab.tokenize(&text)?)?
            };
            println!("{}", serde_json::to_string(&spec)?);
        }
        Cmd::Serialize { display } => {
            let spec: WaveformSpec = serde_json::from_reader(io::stdin().lock())?;
            let seq = lang.serialize(&spec)?;
            if display {
                let toks = lang.vocab.tokens(&seq.ids)?;
                println!("{}", tokens_to_display(&toks, &lang.quant));
            } else {
                println!("{}", lang.vocab.detokenize(&seq.ids)?);
            }
        }
        Cmd::Sweep {
            ckpt,
            classes,
            snr_grid,
            n,
            beam,
            max_len,
            seed,
            out,
        } => {
            let ck = ModelCheckpoint::load(&ckpt)?;
            let predictor = Predictor::new(ck.model::<f32>()?, ck.stft.clone());
            let grid: Vec<f64> = snr_grid
                .split(',')
                .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad SNR {s:?}")))
                .collect::<Result<_>>()?;
            let base = GenConfig {
                classes: parse_classes(&classes)?,
                seed,
                ..GenConfig::default()
            };
            let cfg = BeamConfig::with_beam(beam, max_len);
            let mut predict = |s: &sig2text::waveform::IQSignal| -> sig2text::Result<Option<WaveformSpec>> {
                Ok(predictor.predict(s, &cfg)?.parsed.ok())
            };
            let rows = snr_sweep(&mut predict, &base, &grid, n, MatchMode::default())?;
            let mut w = output(out.as_deref())?;
            write_metrics_csv(&rows, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse().cmd) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

