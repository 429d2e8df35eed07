//! Paired-dataset evaluation: `low/` and `high/` directories with matching
//! file names, one CSV row per pair and a JSON summary.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::codec::decode_image;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{loss_decom, loss_illum, loss_restore, psnr, ssim, SsimParams};
use crate::pipeline::enhance;

pub const CSV_HEADER: [&str; 9] = [
    "id",
    "psnr_before",
    "psnr_after",
    "ssim_before",
    "ssim_after",
    "loss_decom",
    "loss_restore",
    "loss_illum",
    "ms",
];

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub id: String,
    pub psnr_before: Option<f64>,
    pub psnr_after: Option<f64>,
    pub ssim_before: Option<f64>,
    pub ssim_after: Option<f64>,
    pub loss_decom: Option<f64>,
    pub loss_restore: Option<f64>,
    pub loss_illum: Option<f64>,
    pub ms: Option<f64>,
    pub error: Option<String>,
}

impl EvalRecord {
    fn failed(id: String, error: impl ToString) -> Self {
        Self {
            id,
            psnr_before: None,
            psnr_after: None,
            ssim_before: None,
            ssim_after: None,
            loss_decom: None,
            loss_restore: None,
            loss_illum: None,
            ms: None,
            error: Some(error.to_string()),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stat {
    #[serde(serialize_with = "serialize_db")]
    pub mean: f64,
    #[serde(serialize_with = "serialize_db")]
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub pairs: usize,
    pub succeeded: usize,
    pub failures: usize,
    pub psnr_before: Option<Stat>,
    pub psnr_after: Option<Stat>,
    pub ssim_before: Option<Stat>,
    pub ssim_after: Option<Stat>,
    pub failed_ids: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub summary: EvalSummary,
}

/// Infinite values serialize as the string `"inf"`.
fn serialize_db<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn format_value(v: Option<f64>, precision: usize) -> String {
    match v {
        None => String::new(),
        Some(v) if v == f64::INFINITY => "inf".into(),
        Some(v) => format!("{v:.precision$}"),
    }
}

/// Worker count from the `THREADS` environment variable, defaulting to the
/// number of available cores.
pub fn threads_from_env() -> usize {
    std::env::var("THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn image_names(dir: &Path) -> Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(Error::io(dir))?;
    let mut names = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(Error::io(dir))?;
        let path = entry.path();
        let supported = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if supported && path.is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.insert(name.to_owned());
            }
        }
    }
    Ok(names)
}

pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode_image(&bytes)
}

fn evaluate_pair(id: &str, low: &Path, high: &Path, cfg: &PipelineConfig) -> EvalRecord {
    let run = || -> Result<EvalRecord> {
        let s_low = load_image(low)?;
        let s_high = load_image(high)?;
        s_low.expect_same_shape(&s_high, "low/high pair")?;
        let ssim_params = SsimParams::default();
        let psnr_before = psnr(&s_low, &s_high)?;
        let ssim_before = ssim(&s_low, &s_high, &ssim_params)?;

        let start = Instant::now();
        let enhanced = enhance(&s_low, cfg, Some(&s_high))?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;

        let diag = &enhanced.diagnostics;
        let reference = diag
            .reference
            .as_ref()
            .expect("reference decomposition is present when a reference is given");
        let dec = &enhanced.decomposition;
        Ok(EvalRecord {
            id: id.to_owned(),
            psnr_before: Some(psnr_before),
            psnr_after: Some(psnr(&enhanced.output, &s_high)?),
            ssim_before: Some(ssim_before),
            ssim_after: Some(ssim(&enhanced.output, &s_high, &ssim_params)?),
            loss_decom: Some(loss_decom(
                &dec.reflectance,
                &reference.reflectance,
                &dec.illumination,
                &reference.illumination,
                &s_low,
                &s_high,
            )?),
            loss_restore: Some(loss_restore(
                &diag.restored_reflectance,
                &reference.reflectance,
            )?),
            loss_illum: Some(loss_illum(
                &diag.adjusted_illumination,
                &reference.illumination,
            )?),
            ms: cfg.timing.then_some(elapsed),
            error: None,
        })
    };
    run().unwrap_or_else(|e| EvalRecord::failed(id.to_owned(), e))
}

fn stat(values: impl Iterator<Item = f64>) -> Option<Stat> {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mid = v.len() / 2;
    let median = if v.len() % 2 == 1 || v[mid - 1] == v[mid] {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    };
    Some(Stat { mean, median })
}

pub fn summarize(records: &[EvalRecord]) -> EvalSummary {
    let ok: Vec<&EvalRecord> = records.iter().filter(|r| r.succeeded()).collect();
    let pick = |f: fn(&EvalRecord) -> Option<f64>| stat(ok.iter().filter_map(|r| f(r)));
    EvalSummary {
        pairs: records.len(),
        succeeded: ok.len(),
        failures: records.len() - ok.len(),
        psnr_before: pick(|r| r.psnr_before),
        psnr_after: pick(|r| r.psnr_after),
        ssim_before: pick(|r| r.ssim_before),
        ssim_after: pick(|r| r.ssim_after),
        failed_ids: records
            .iter()
            .filter(|r| !r.succeeded())
            .map(|r| r.id.clone())
            .collect(),
    }
}

/// Evaluates every image in `low_dir` against its namesake in `high_dir`,
/// using up to `threads` workers. Records come back in file-name order.
pub fn eval_dataset(
    low_dir: &Path,
    high_dir: &Path,
    cfg: &PipelineConfig,
    threads: usize,
) -> Result<EvalReport> {
    cfg.validate()?;
    let low = image_names(low_dir)?;
    let high = image_names(high_dir)?;
    if low.intersection(&high).next().is_none() {
        return Err(Error::Dataset(format!(
            "no matching file names between {} and {}",
            low_dir.display(),
            high_dir.display()
        )));
    }
    let jobs: Vec<(String, PathBuf, PathBuf)> = low
        .iter()
        .map(|name| (name.clone(), low_dir.join(name), high_dir.join(name)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Dataset(format!("cannot start worker pool: {e}")))?;
    let records: Vec<EvalRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|(id, low_path, high_path)| {
                if high.contains(id) {
                    evaluate_pair(id, low_path, high_path, cfg)
                } else {
                    EvalRecord::failed(
                        id.clone(),
                        format!("missing counterpart {}", high_path.display()),
                    )
                }
            })
            .collect()
    });
    let summary = summarize(&records);
    Ok(EvalReport { records, summary })
}

pub fn write_csv<W: Write>(records: &[EvalRecord], out: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::Dataset(format!("writing CSV: {e}"));
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER).map_err(to_err)?;
    for r in records {
        writer
            .write_record([
                r.id.clone(),
                format_value(r.psnr_before, 4),
                format_value(r.psnr_after, 4),
                format_value(r.ssim_before, 6),
                format_value(r.ssim_after, 6),
                format_value(r.loss_decom, 6),
                format_value(r.loss_restore, 6),
                format_value(r.loss_illum, 6),
                format_value(r.ms, 1),
            ])
            .map_err(to_err)?;
    }
    writer.flush().map_err(|e| Error::Dataset(format!("writing CSV: {e}")))?;
    Ok(())
}

pub fn summary_json(summary: &EvalSummary) -> String {
    let mut text = serde_json::to_string_pretty(summary).expect("summary is always serializable");
    text.push('\n');
    text
}

impl EvalReport {
    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_csv(&self.records, &mut buf)?;
        Ok(buf)
    }

    /// Writes the CSV to `csv_path` and the JSON summary to `json_path`.
    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.csv_bytes()?).map_err(Error::io(csv_path))?;
        std::fs::write(json_path, summary_json(&self.summary)).map_err(Error::io(json_path))?;
        Ok(())
    }
}
