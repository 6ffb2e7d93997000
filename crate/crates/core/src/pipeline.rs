//! End-to-end processing: one vignette to one [`ProcessedStack`], batches of
//! vignettes with per-file failure isolation, and timing reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::SdConfig;
use crate::error::{Result, SdError, Stage, StageExt};
use crate::io::{self, AnyVignette};
use crate::multilook::multilook_channel;
use crate::raster::{ComplexVignette, ProcessedStack, Real};
use crate::sd::decompose_timed;
use crate::synth::{self, SceneSpec};

/// Wall time per stage in milliseconds. Keys are fixed: calibrate, fft,
/// compensate, window, ifft, multilook, io.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub calibrate: f64,
    pub fft: f64,
    pub compensate: f64,
    pub window: f64,
    pub ifft: f64,
    pub multilook: f64,
    pub io: f64,
}

impl StageTimings {
    pub const KEYS: [&'static str; 7] = [
        "calibrate",
        "fft",
        "compensate",
        "window",
        "ifft",
        "multilook",
        "io",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.calibrate,
            self.fft,
            self.compensate,
            self.window,
            self.ifft,
            self.multilook,
            self.io,
        ]
    }

    fn add(&mut self, stage: Stage, d: Duration) {
        let ms = d.as_secs_f64() * 1e3;
        match stage {
            Stage::Calibrate => self.calibrate += ms,
            Stage::Fft => self.fft += ms,
            Stage::Compensate => self.compensate += ms,
            Stage::Window => self.window += ms,
            Stage::Ifft => self.ifft += ms,
            Stage::Multilook => self.multilook += ms,
            Stage::Read | Stage::Write => self.io += ms,
            Stage::Config => {}
        }
    }

    /// Sum of the compute stages (everything but io).
    pub fn compute_total(&self) -> f64 {
        self.values()[..6].iter().sum()
    }
}

/// Runs calibration, decomposition and multilooking on one vignette.
pub fn process_vignette<T: Real>(
    v: &ComplexVignette<T>,
    cfg: &SdConfig,
) -> Result<(ProcessedStack<T>, StageTimings)> {
    let mut timings = StageTimings::default();
    cfg.validate_for(v.n_az()).stage(Stage::Config)?;
    let (stack, calibrated) = decompose_timed(v, cfg, |s, d| timings.add(s, d))?;

    let t = Instant::now();
    let mut channels = Vec::with_capacity(stack.len() + 1);
    if cfg.include_original_channel {
        channels.push(multilook_channel(calibrated.data(), cfg).stage(Stage::Multilook)?);
    }
    drop(calibrated);
    for (_, img) in stack.into_bands() {
        channels.push(multilook_channel(&img, cfg).stage(Stage::Multilook)?);
    }
    let d = cfg.decimation_factor as f64;
    let out = ProcessedStack::new(
        channels,
        cfg.channel_labels(),
        v.pixel_spacing_az() * d,
        v.pixel_spacing_rg() * d,
        Some(cfg.clone()),
    )
    .stage(Stage::Multilook)?;
    timings.add(Stage::Multilook, t.elapsed());
    Ok((out, timings))
}

/// Batch configuration file: the decomposition settings plus worker count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sd: SdConfig,
    /// Worker threads; 0 picks the number of CPUs.
    pub parallelism: usize,
}

/// Sets `value` at a dotted `path` in a JSON document, creating objects on
/// the way. The value is parsed as JSON, falling back to a plain string.
pub fn apply_override(doc: &mut Value, path: &str, value: &str) -> Result<()> {
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let mut node = doc;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        if key.is_empty() {
            return Err(SdError::Config(format!("bad override path {path:?}")));
        }
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().unwrap();
        if keys.peek().is_none() {
            map.insert(key.to_string(), parsed);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert(Value::Object(Default::default()));
    }
    Ok(())
}

/// Deserializes `T` from JSON, reporting the failing field path.
pub fn from_json_value<T: serde::de::DeserializeOwned>(doc: Value) -> Result<T> {
    serde_path_to_error::deserialize(doc)
        .map_err(|e| SdError::Config(format!("at `{}`: {}", e.path(), e.inner())))
}

/// Loads a pipeline config (or defaults when `path` is `None`) and applies
/// dotted `key=value` overrides.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<PipelineConfig> {
    let mut doc = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| SdError::io(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| SdError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    let cfg: PipelineConfig = from_json_value(doc)?;
    cfg.sd.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobEntry {
    pub input_id: String,
    pub input_path: PathBuf,
    pub output_path: PathBuf,
    pub timings_ms: StageTimings,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobFailure {
    pub input_id: String,
    pub input_path: PathBuf,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl StageSummary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return StageSummary::default();
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        let p95 = v[((n as f64 * 0.95).ceil() as usize).clamp(1, n) - 1];
        StageSummary {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            p95,
        }
    }
}

/// Batch report, serialized as `report.json` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub entries: Vec<JobEntry>,
    /// Per stage key plus `total`.
    pub aggregate: BTreeMap<String, StageSummary>,
    pub failures: Vec<JobFailure>,
    pub config: SdConfig,
}

impl JobReport {
    fn build(mut entries: Vec<JobEntry>, mut failures: Vec<JobFailure>, config: SdConfig) -> Self {
        entries.sort_by(|a, b| a.input_id.cmp(&b.input_id));
        failures.sort_by(|a, b| a.input_id.cmp(&b.input_id));
        let mut aggregate = BTreeMap::new();
        for (k, key) in StageTimings::KEYS.iter().enumerate() {
            let vals: Vec<f64> = entries.iter().map(|e| e.timings_ms.values()[k]).collect();
            aggregate.insert(key.to_string(), StageSummary::of(&vals));
        }
        let totals: Vec<f64> = entries.iter().map(|e| e.total_ms).collect();
        aggregate.insert("total".to_string(), StageSummary::of(&totals));
        JobReport {
            entries,
            aggregate,
            failures,
            config,
        }
    }

    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const REPORT_FILE: &str = "report.json";
const STACK_SUFFIX: &str = ".stack";

/// A vignette found in an input directory.
#[derive(Debug, Clone, PartialEq)]
pub struct InputItem {
    pub id: String,
    pub raster: PathBuf,
    pub sidecar: PathBuf,
}

/// Every `<id>.json` sidecar in `dir` paired with `<id>.bin` (or `<id>.npy`),
/// sorted by id. Stack sidecars and reports are skipped.
pub fn discover_inputs(dir: &Path) -> Result<Vec<InputItem>> {
    let mut items = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| SdError::io(dir, e))? {
        let path = entry.map_err(|e| SdError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
            continue;
        };
        if id.ends_with(STACK_SUFFIX) || path.file_name().is_some_and(|n| n == REPORT_FILE) {
            continue;
        }
        let npy = dir.join(format!("{id}.npy"));
        let raster = if npy.exists() { npy } else { dir.join(format!("{id}.bin")) };
        items.push(InputItem {
            id,
            raster,
            sidecar: path,
        });
    }
    items.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(items)
}

/// Payload path of the stack written for input `id`.
pub fn stack_path(output_dir: &Path, id: &str) -> PathBuf {
    output_dir.join(format!("{id}{STACK_SUFFIX}.bin"))
}

fn process_item(item: &InputItem, output_dir: &Path, cfg: &SdConfig) -> std::result::Result<JobEntry, JobFailure> {
    let started = Instant::now();
    let fail = |e: SdError, fallback: Stage| JobFailure {
        input_id: item.id.clone(),
        input_path: item.raster.clone(),
        stage: e.stage().unwrap_or(fallback),
        message: e.to_string(),
    };
    let t = Instant::now();
    let vignette = io::read_vignette_any(&item.raster, &item.sidecar).map_err(|e| fail(e, Stage::Read))?;
    let read_time = t.elapsed();

    let out_raster = stack_path(output_dir, &item.id);
    let out_sidecar = io::sidecar_path_for(&out_raster);
    let mut timings = match &vignette {
        AnyVignette::C64(v) => {
            let (stack, mut timings) = process_vignette(v, cfg).map_err(|e| fail(e, Stage::Config))?;
            let t = Instant::now();
            io::write_stack(&stack, &out_raster, &out_sidecar).map_err(|e| fail(e, Stage::Write))?;
            timings.add(Stage::Write, t.elapsed());
            timings
        }
        AnyVignette::C128(v) => {
            let (stack, mut timings) = process_vignette(v, cfg).map_err(|e| fail(e, Stage::Config))?;
            let t = Instant::now();
            io::write_stack(&stack, &out_raster, &out_sidecar).map_err(|e| fail(e, Stage::Write))?;
            timings.add(Stage::Write, t.elapsed());
            timings
        }
    };
    timings.add(Stage::Read, read_time);
    Ok(JobEntry {
        input_id: item.id.clone(),
        input_path: item.raster.clone(),
        output_path: out_raster,
        timings_ms: timings,
        total_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| SdError::Config(format!("cannot start {parallelism} workers: {e}")))
}

/// Processes every vignette in `input_dir`, writing one stack per input and
/// `report.json` to `output_dir`. Per-file problems land in the report's
/// failures; only an invalid config or unusable directories abort.
pub fn run_batch(input_dir: &Path, output_dir: &Path, cfg: &PipelineConfig) -> Result<JobReport> {
    cfg.sd.validate()?;
    let items = discover_inputs(input_dir)?;
    fs::create_dir_all(output_dir).map_err(|e| SdError::io(output_dir, e))?;
    let pool = thread_pool(cfg.parallelism)?;
    let results: Vec<_> = pool.install(|| {
        items
            .par_iter()
            .map(|item| process_item(item, output_dir, &cfg.sd))
            .collect()
    });
    let (mut entries, mut failures) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(f) => failures.push(f),
        }
    }
    let report = JobReport::build(entries, failures, cfg.sd.clone());
    let path = output_dir.join(REPORT_FILE);
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&path, text + "\n").map_err(|e| SdError::io(&path, e))?;
    Ok(report)
}

/// Published reference for the added decomposition cost per vignette on an
/// Intel i9 CPU, in milliseconds. Informational only.
pub const PUBLISHED_REFERENCE_MS: f64 = 60.0;
/// Pass/fail bound for the compute median on a 4096 x 4096 vignette.
pub const THROUGHPUT_TARGET_MS: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_az: usize,
    pub n_rg: usize,
    pub repeats: usize,
    pub threads: usize,
    /// Median per stage; `io` is the in-memory payload encoding time.
    pub median_ms: StageTimings,
    /// Median of the compute total (calibrate through multilook).
    pub total_median_ms: f64,
    pub published_reference_ms: f64,
    pub target_ms: f64,
}

impl BenchReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "bench {}x{}, {} repeats, {} threads\n",
            self.n_az, self.n_rg, self.repeats, self.threads
        );
        for (k, v) in StageTimings::KEYS.iter().zip(self.median_ms.values()) {
            s += &format!("  {k:<11}{v:>10.2} ms\n");
        }
        s += &format!("  {:<11}{:>10.2} ms (compute, excludes io)\n", "total", self.total_median_ms);
        s += &format!(
            "  published reference ~{:.0} ms on an Intel i9 CPU; target <= {:.0} ms on an 8-core desktop\n",
            self.published_reference_ms, self.target_ms
        );
        s
    }
}

/// Times the full pipeline on a synthetic speckle vignette: one warmup,
/// then `repeats` measured runs; reports per-stage medians.
pub fn bench(n_az: usize, n_rg: usize, repeats: usize, cfg: &PipelineConfig) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(SdError::Config("repeats must be >= 1".into()));
    }
    cfg.sd.validate_for(n_az)?;
    let pool = thread_pool(cfg.parallelism)?;
    pool.install(|| {
        let v: ComplexVignette<f32> = synth::generate(&SceneSpec::speckle(n_az, n_rg, 0))?;
        process_vignette(&v, &cfg.sd)?;
        let mut runs = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let (stack, mut t) = process_vignette(&v, &cfg.sd)?;
            let started = Instant::now();
            std::hint::black_box(io::encode_stack_payload(&stack));
            t.io = started.elapsed().as_secs_f64() * 1e3;
            runs.push(t);
        }
        let median = |k: usize| StageSummary::of(&runs.iter().map(|t| t.values()[k]).collect::<Vec<_>>()).median;
        let median_ms = StageTimings {
            calibrate: median(0),
            fft: median(1),
            compensate: median(2),
            window: median(3),
            ifft: median(4),
            multilook: median(5),
            io: median(6),
        };
        let totals: Vec<f64> = runs.iter().map(StageTimings::compute_total).collect();
        Ok(BenchReport {
            n_az,
            n_rg,
            repeats,
            threads: rayon::current_num_threads(),
            median_ms,
            total_median_ms: StageSummary::of(&totals).median,
            published_reference_ms: PUBLISHED_REFERENCE_MS,
            target_ms: THROUGHPUT_TARGET_MS,
        })
    })
}
