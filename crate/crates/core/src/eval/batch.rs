//! Trials, batches and the newline-delimited result log.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    build_prompt, caption_request, is_refusal_text, ocr_request, ocr_similarity, parse_decision, CallContext,
    ClientError, EvalError, EvalMode, Message, ModelClient, Step, TrialRecord, LOG_SCHEMA_VERSION,
};
use crate::scenario::{ScenarioSample, Subset};

/// A run passes the extraction gate only when mean similarity exceeds this.
pub const OCR_GATE_THRESHOLD: f64 = 0.95;

fn one() -> u32 {
    1
}
fn eight() -> usize {
    8
}
fn three() -> u32 {
    3
}
fn backoff() -> u64 {
    500
}
fn here() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    #[serde(default = "one")]
    pub repeats: u32,
    #[serde(default = "eight")]
    pub max_in_flight: usize,
    #[serde(default = "three")]
    pub retries: u32,
    #[serde(default = "backoff")]
    pub backoff_ms: u64,
    /// Extra extraction call in image mode, used only for the gate.
    #[serde(default)]
    pub ocr_audit: bool,
    #[serde(default)]
    pub timestamps: bool,
    /// Directory that `image_ref` paths are relative to.
    #[serde(default = "here")]
    pub image_root: PathBuf,
}

impl Default for BatchConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub uid: String,
    pub mode: EvalMode,
    pub repeat: u32,
    pub model: String,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unsupported schema version {version}")]
    Schema { line: usize, version: u32 },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> LogError + '_ {
    move |e| LogError::Io { path: path.display().to_string(), msg: e.to_string() }
}

/// Reads a log; a missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<TrialRecord>, LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrialRecord =
            serde_json::from_str(&line).map_err(|e| LogError::Parse { line: i + 1, msg: e.to_string() })?;
        if rec.schema != LOG_SCHEMA_VERSION {
            return Err(LogError::Schema { line: i + 1, version: rec.schema });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Writes records in canonical key order, replacing the file atomically.
pub fn write_log(path: &Path, records: &[TrialRecord]) -> Result<(), LogError> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for r in sorted {
            serde_json::to_writer(&mut w, r).map_err(|e| LogError::Io { path: tmp.display().to_string(), msg: e.to_string() })?;
            w.write_all(b"\n").map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn now(on: bool) -> Option<String> {
    on.then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true))
}

fn call(
    client: &dyn ModelClient,
    msgs: &[Message],
    ctx: &CallContext<'_>,
    cfg: &BatchConfig,
) -> Result<String, ClientError> {
    let mut attempt = 0;
    loop {
        match client.complete(msgs, ctx) {
            Err(ClientError::Transport(e)) if attempt < cfg.retries => {
                log::warn!("{} {:?} retry {}: {e}", ctx.sample.uid, ctx.step, attempt + 1);
                std::thread::sleep(Duration::from_millis(cfg.backoff_ms << attempt));
                attempt += 1;
            }
            other => return other,
        }
    }
}

fn load_image(sample: &ScenarioSample, mode: EvalMode, cfg: &BatchConfig) -> Result<Option<Vec<u8>>, EvalError> {
    if !mode.needs_image() {
        return Ok(None);
    }
    let rel = sample.image_ref.as_ref().ok_or_else(|| EvalError::ArtifactMissing { uid: sample.uid.clone(), mode })?;
    let path = cfg.image_root.join(rel);
    fs::read(&path).map(Some).map_err(|e| EvalError::ArtifactUnreadable {
        uid: sample.uid.clone(),
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// One (sample, mode, repeat) trial. Client failures after retries end up in
/// the record's `error`; missing artifacts and capability gaps are errors.
pub fn run_trial(
    client: &dyn ModelClient,
    sample: &ScenarioSample,
    mode: EvalMode,
    repeat: u32,
    cfg: &BatchConfig,
) -> Result<TrialRecord, EvalError> {
    if !client.capabilities().covers(mode) {
        return Err(EvalError::Capability { model: client.model_id(), mode });
    }
    let image = load_image(sample, mode, cfg)?;
    let mut rec = TrialRecord {
        schema: LOG_SCHEMA_VERSION,
        uid: sample.uid.clone(),
        subset: sample.subset,
        dilemma_id: sample.dilemma_id.clone(),
        mode,
        model: client.model_id(),
        repeat,
        raw_response: None,
        decision: None,
        caption: None,
        ocr: None,
        ocr_similarity: None,
        substituted_ground_truth: false,
        started_at: now(cfg.timestamps),
        finished_at: None,
        error: None,
    };
    let ctx = |step| CallContext { sample, mode, step, repeat };
    let outcome = (|| -> Result<Result<String, ClientError>, EvalError> {
        let img = image.as_deref();
        let extract = |rec: &mut TrialRecord| -> Result<String, ClientError> {
            let ocr = call(client, &ocr_request(img.expect("image modes load an image")), &ctx(Step::Ocr), cfg)?;
            rec.ocr_similarity = Some(ocr_similarity(&ocr, &sample.description));
            rec.ocr = Some(ocr.clone());
            if is_refusal_text(&ocr) {
                rec.substituted_ground_truth = true;
                return Ok(sample.description.clone());
            }
            Ok(ocr)
        };
        let msgs = match mode {
            EvalMode::Text => build_prompt(sample, mode, None, None)?,
            EvalMode::Caption => {
                let caption = match call(client, &caption_request(img.expect("loaded")), &ctx(Step::Caption), cfg) {
                    Ok(c) => c,
                    Err(e) => return Ok(Err(e)),
                };
                rec.caption = Some(caption.clone());
                let text = match extract(&mut rec) {
                    Ok(t) => t,
                    Err(e) => return Ok(Err(e)),
                };
                build_prompt(sample, mode, img, Some((&caption, &text)))?
            }
            EvalMode::Image => {
                if cfg.ocr_audit {
                    if let Err(e) = extract(&mut rec) {
                        return Ok(Err(e));
                    }
                }
                build_prompt(sample, mode, img, None)?
            }
        };
        Ok(call(client, &msgs, &ctx(Step::Decision), cfg))
    })()?;
    match outcome {
        Ok(raw) => {
            rec.decision = Some(parse_decision(&raw));
            rec.raw_response = Some(raw);
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec.finished_at = now(cfg.timestamps);
    Ok(rec)
}

/// Mean extraction similarity for one model and subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRow {
    pub model: String,
    pub subset: Subset,
    pub n: usize,
    pub mean_similarity: f64,
    pub passes: bool,
}

pub fn ocr_gate(records: &[TrialRecord]) -> Vec<GateRow> {
    let mut acc: BTreeMap<(String, Subset), (usize, f64)> = BTreeMap::new();
    for r in records {
        if let Some(s) = r.ocr_similarity {
            let e = acc.entry((r.model.clone(), r.subset)).or_default();
            e.0 += 1;
            e.1 += s;
        }
    }
    acc.into_iter()
        .map(|((model, subset), (n, sum))| {
            let mean = sum / n as f64;
            GateRow { model, subset, n, mean_similarity: mean, passes: mean > OCR_GATE_THRESHOLD }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub planned: usize,
    pub executed: usize,
    pub skipped: usize,
    pub errors: usize,
    pub gate: Vec<GateRow>,
}

impl BatchReport {
    pub fn gate_failed(&self) -> bool {
        self.gate.iter().any(|g| !g.passes)
    }
}

/// Runs every (sample, mode, repeat) not already answered in `log_path`,
/// appending as trials finish, then rewrites the log in canonical order.
pub fn run_batch(
    samples: &[ScenarioSample],
    modes: &[EvalMode],
    client: &dyn ModelClient,
    cfg: &BatchConfig,
    log_path: &Path,
) -> Result<BatchReport, EvalError> {
    if cfg.repeats == 0 || cfg.max_in_flight == 0 {
        return Err(EvalError::Config("repeats and max_in_flight must be positive".into()));
    }
    let model = client.model_id();
    for &mode in modes {
        if !client.capabilities().covers(mode) {
            return Err(EvalError::Capability { model: model.clone(), mode });
        }
        if mode.needs_image() {
            for s in samples {
                let ok = s.image_ref.as_ref().is_some_and(|r| cfg.image_root.join(r).is_file());
                if !ok {
                    return Err(EvalError::ArtifactMissing { uid: s.uid.clone(), mode });
                }
            }
        }
    }

    let mut done: BTreeMap<TrialKey, TrialRecord> = BTreeMap::new();
    for r in read_log(log_path)? {
        // failed trials are retried on resume
        if r.error.is_none() {
            done.insert(r.key(), r);
        }
    }
    let mut jobs = Vec::new();
    for s in samples {
        for &mode in modes {
            for repeat in 0..cfg.repeats {
                let key = TrialKey { uid: s.uid.clone(), mode, repeat, model: model.clone() };
                if !done.contains_key(&key) {
                    jobs.push((s, mode, repeat));
                }
            }
        }
    }
    let planned = samples.len() * modes.len() * cfg.repeats as usize;
    let skipped = planned - jobs.len();
    if jobs.is_empty() {
        let records: Vec<_> = done.into_values().collect();
        write_log(log_path, &records)?;
        return Ok(BatchReport { planned, executed: 0, skipped, errors: 0, gate: ocr_gate(&records) });
    }

    let mut append = BufWriter::new(
        OpenOptions::new().create(true).append(true).open(log_path).map_err(|e| io_err(log_path)(e))?,
    );
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::sync_channel::<Result<TrialRecord, EvalError>>(cfg.max_in_flight * 2);
    let mut fresh = Vec::with_capacity(jobs.len());
    let mut first_err = None;
    std::thread::scope(|scope| {
        for _ in 0..cfg.max_in_flight.min(jobs.len()) {
            let tx = tx.clone();
            let (jobs, next) = (&jobs, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(s, mode, repeat)) = jobs.get(i) else { break };
                if tx.send(run_trial(client, s, mode, repeat, cfg)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for res in rx {
            match res {
                Ok(rec) => {
                    let line = serde_json::to_string(&rec).expect("records serialize");
                    if let Err(e) = writeln!(append, "{line}").and_then(|_| append.flush()) {
                        first_err.get_or_insert(EvalError::from(io_err(log_path)(e)));
                        next.store(usize::MAX / 2, Ordering::Relaxed);
                    }
                    fresh.push(rec);
                }
                Err(e) => {
                    // stop handing out work; records already written stay in the log
                    next.store(usize::MAX / 2, Ordering::Relaxed);
                    first_err.get_or_insert(e);
                }
            }
        }
    });
    drop(append);
    if let Some(e) = first_err {
        return Err(e);
    }
    let errors = fresh.iter().filter(|r| r.error.is_some()).count();
    let executed = fresh.len();
    for r in fresh {
        done.insert(r.key(), r);
    }
    let records: Vec<_> = done.into_values().collect();
    write_log(log_path, &records)?;
    Ok(BatchReport { planned, executed, skipped, errors, gate: ocr_gate(&records) })
}
