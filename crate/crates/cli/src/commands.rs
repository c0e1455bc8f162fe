use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use anyhow::{anyhow, Context};
use halpha_core::classmodel::{Class, GmmModel};
use halpha_core::config::PipelineConfig;
use halpha_core::eval::{evaluate, read_reference_csv};
use halpha_core::events::{read_records, EventRecord};
use halpha_core::imgio::{load_frame, read_pgm, FrameBuffer, SequenceManifest};
use halpha_core::pipeline::{read_training_list, train as fit_model, Detector};
use halpha_core::synth::{generate_sequence, write_sequence, Scenario};
use halpha_core::Error;
use log::{info, warn};

/// Frames loaded ahead of the one being segmented.
const LOOKAHEAD: usize = 4;

/// A command-line mistake rather than a runtime failure.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// 2 for usage, configuration and input-format errors, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(
            Error::Parse(_)
            | Error::InvalidParameter(_)
            | Error::InvalidScenario(_)
            | Error::InsufficientSamples { .. }
            | Error::UnsupportedFormat(_),
        ) => 2,
        _ => 1,
    }
}

fn parent(p: &Path) -> &Path {
    p.parent().unwrap_or(Path::new("."))
}

fn read_text(p: &Path) -> anyhow::Result<String> {
    fs::read_to_string(p).map_err(|e| Error::Io { path: p.to_path_buf(), source: e }.into())
}

fn read_mask(path: &Path, frame: &FrameBuffer) -> anyhow::Result<Vec<u8>> {
    let img = read_pgm(path)?;
    if img.width != frame.width() || img.height != frame.height() {
        return Err(Error::DimensionMismatch(format!(
            "mask {} is {}x{}, frame is {}x{}",
            path.display(),
            img.width,
            img.height,
            frame.width(),
            frame.height()
        ))
        .into());
    }
    img.samples
        .iter()
        .map(|&v| u8::try_from(v).map_err(|_| Error::Parse(format!("mask {}: value {v} above 255", path.display()))))
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

pub fn train(cfg: &PipelineConfig, list: &Path) -> anyhow::Result<()> {
    let out = cfg
        .io
        .model
        .clone()
        .ok_or_else(|| UsageError("no model path: pass --output or set io.model".into()))?;
    let pairs = read_training_list(&read_text(list)?, parent(list))?;
    if pairs.is_empty() {
        return Err(UsageError(format!("{} lists no annotated frames", list.display())).into());
    }
    let mut data = Vec::with_capacity(pairs.len());
    for (i, (f, m)) in pairs.iter().enumerate() {
        let frame = load_frame(f, i)?;
        let mask = read_mask(m, &frame)?;
        data.push((frame, mask));
    }
    let fit = fit_model(data.iter().map(|(f, m)| (f, m.as_slice())), cfg)?;
    fit.model.save(&out)?;
    for c in Class::ALL {
        let k = c as usize;
        println!(
            "{:<10} samples {:>7}  log-likelihood {:.6}",
            c.name(),
            fit.sample_counts[k],
            fit.final_log_likelihood(k)
        );
    }
    println!("model written to {}", out.display());
    Ok(())
}

fn emit(out: &mut dyn Write, records: &[EventRecord]) -> io::Result<()> {
    for r in records {
        r.write_to(&mut *out)?;
    }
    out.flush()
}

pub fn detect(cfg: &PipelineConfig, manifest: &Path) -> anyhow::Result<()> {
    let model_path = cfg
        .io
        .model
        .clone()
        .ok_or_else(|| UsageError("no model: pass --model or set io.model".into()))?;
    let model = GmmModel::load(&model_path)?;
    let manifest = SequenceManifest::parse(&read_text(manifest)?, parent(manifest))?;
    let mut out: Box<dyn Write> = match &cfg.io.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    };
    let mut detector = Detector::new(cfg.clone(), model)?;
    let entries: Vec<(PathBuf, _)> = manifest.entries().to_vec();
    let (tx, rx) = mpsc::sync_channel(LOOKAHEAD);
    let loader = thread::spawn(move || {
        for (i, (path, ts)) in entries.into_iter().enumerate() {
            let frame = load_frame(&path, i).map(|mut f| {
                f.set_timestamp(ts);
                f
            });
            if tx.send((path, frame)).is_err() {
                break;
            }
        }
    });
    let (mut done, mut skipped) = (0usize, 0usize);
    for (path, frame) in rx {
        let report = frame.and_then(|f| detector.process(&f));
        match report {
            Ok(r) => {
                done += 1;
                emit(&mut *out, &r.records)?;
            }
            Err(e) => {
                skipped += 1;
                warn!("skipping {}: {e}", path.display());
            }
        }
    }
    loader.join().map_err(|_| anyhow!("frame loader panicked"))?;
    emit(&mut *out, &detector.finish())?;
    info!("{done} frames processed, {skipped} skipped");
    Ok(())
}

pub fn eval(cfg: &PipelineConfig, detections: &Path, reference: &Path) -> anyhow::Result<()> {
    let open = |p: &Path| File::open(p).map_err(|e| Error::Io { path: p.to_path_buf(), source: e });
    let records = read_records(BufReader::new(open(detections)?))
        .with_context(|| format!("reading detections {}", detections.display()))?;
    let refs =
        read_reference_csv(open(reference)?).with_context(|| format!("reading reference {}", reference.display()))?;
    let report = evaluate(&records, &refs, &cfg.tolerances());
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &cfg.io.output {
        Some(p) => fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}

pub fn synth(cfg: &PipelineConfig, scenario: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let scenario = match scenario {
        Some(p) => Scenario::from_toml(&read_text(p)?)?,
        None => Scenario::demo(),
    };
    let seq = generate_sequence(&scenario, cfg.exec())?;
    write_sequence(&seq, out)?;
    println!(
        "{} frames ({}x{}), {} flares, {} eruptions written to {}",
        seq.frames.len(),
        scenario.width,
        scenario.height,
        seq.events.flares.len(),
        seq.events.eruptions.len(),
        out.display()
    );
    Ok(())
}
