use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dilemma_core::agents::SyntheticAgent;
use dilemma_core::attrib::{attribute_all, matrix_csv, AttributionReport};
use dilemma_core::eval::{read_log, run_batch, EvalError, EvalMode, HttpClient, LogError, ModelClient};
use dilemma_core::generate::{generate, GenParams};
use dilemma_core::scenario::{builtin_fixtures, load_fixture_dir, DilemmaSpec, SampleIndex, ScenarioSample, Subset};
use dilemma_core::scene::{encode_png, render_sample};
use dilemma_core::stats::{
    action_curve, by_model_mode, hierarchical_fit, join, marginal_sensitivity, mft_win_rates, pitted_pairs,
    preference_strength, refusal_rates, robustness_metrics, Curve, HierFit, PreferenceStrength, RefusalRate,
    RobustnessPoint, Scheme, Trial, WinRate,
};
use dilemma_core::text::realize_description;

use crate::config::Config;
use crate::manifest::{verify_dir, ManifestBuilder};
use crate::CliError;

pub const SAMPLES: &str = "samples.jsonl";
pub const LOG: &str = "log.jsonl";
pub const ANALYSIS: &str = "analysis.json";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8], m: &mut ManifestBuilder) -> Result<(), CliError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(&path, bytes).map_err(io_err(&path))?;
    m.output(rel);
    Ok(())
}

fn csv_bytes<R: Serialize>(rows: &[R], header: &[&str]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub fn read_samples(dir: &Path) -> Result<Vec<ScenarioSample>, CliError> {
    let path = dir.join(SAMPLES);
    if !path.is_file() {
        return Err(CliError::Usage(format!("no sample file at {}", path.display())));
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Partial(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn samples_jsonl(samples: &[ScenarioSample]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut out, s).expect("sample serializes");
        out.push(b'\n');
    }
    out
}

fn load_specs(fixtures: Option<&Path>) -> Result<Vec<DilemmaSpec>, CliError> {
    match fixtures {
        None => Ok(builtin_fixtures()),
        Some(dir) => load_fixture_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display()))),
    }
}

pub struct GenerateOpts {
    pub subset: String,
    pub seed: u64,
    pub samples_per_config: u32,
    pub dilemmas: Option<Vec<String>>,
    pub fixtures: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SummaryCsv<'a> {
    dilemma: &'a str,
    subset: &'a str,
    configs: usize,
    samples: usize,
}

pub fn cmd_generate(o: GenerateOpts) -> Result<(), CliError> {
    let subset: Subset = o.subset.parse().map_err(|e: String| CliError::Usage(e))?;
    let specs = load_specs(o.fixtures.as_deref())?;
    let params = GenParams { subset, seed: o.seed, samples_per_config: o.samples_per_config, dilemmas: o.dilemmas };
    let g = generate(&params, &specs).map_err(|e| CliError::Usage(e.to_string()))?;
    create_dir(&o.out)?;
    let mut m = ManifestBuilder::new("generate");
    m.config = serde_json::json!({ "generate": params, "fixtures": o.fixtures });
    m.seeds.insert("root".into(), o.seed);
    write_file(&o.out, SAMPLES, &samples_jsonl(&g.samples), &mut m)?;
    let rows: Vec<SummaryCsv> = g
        .summary
        .iter()
        .map(|r| SummaryCsv { dilemma: &r.dilemma, subset: r.subset.as_str(), configs: r.configs, samples: r.samples })
        .collect();
    write_file(&o.out, "summary.csv", &csv_bytes(&rows, &["dilemma", "subset", "configs", "samples"]), &mut m)?;
    m.write(&o.out)?;
    log::info!("{} samples from {} dilemmas written to {}", g.samples.len(), g.summary.len(), o.out.display());
    Ok(())
}

pub struct RenderOpts {
    pub samples: PathBuf,
    pub fixtures: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct FailureRow {
    uid: String,
    error: String,
}

pub fn cmd_render(o: RenderOpts, cfg: &Config) -> Result<(), CliError> {
    let inputs = verify_dir(&o.samples, &[SAMPLES])?;
    let samples = read_samples(&o.samples)?;
    let specs = load_specs(o.fixtures.as_deref())?;
    let by_id: BTreeMap<&str, &DilemmaSpec> = specs.iter().map(|s| (s.id.as_str(), s)).collect();
    let style = &cfg.style;
    let results: Vec<Result<(String, Vec<u8>), String>> = samples
        .par_iter()
        .map(|s| {
            let spec = by_id.get(s.dilemma_id.as_str()).ok_or_else(|| format!("unknown dilemma {}", s.dilemma_id))?;
            let text = realize_description(s, spec).map_err(|e| e.to_string())?;
            let (layout, img) = render_sample(s, spec.background_family, &text, style, s.seed).map_err(|e| e.to_string())?;
            let layout = serde_json::to_string(&layout).expect("layout serializes");
            Ok((layout, encode_png(&img).map_err(|e| e.to_string())?))
        })
        .collect();
    create_dir(&o.out)?;
    let mut m = ManifestBuilder::new("render");
    m.config = serde_json::json!({ "style": style, "fixtures": o.fixtures });
    m.inputs = inputs;
    let mut rendered = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in samples.iter().zip(results) {
        match r {
            Ok((layout, png)) => {
                let image = format!("images/{}.png", s.uid);
                let layout_ref = format!("layouts/{}.json", s.uid);
                write_file(&o.out, &image, &png, &mut m)?;
                write_file(&o.out, &layout_ref, layout.as_bytes(), &mut m)?;
                let mut s = s.clone();
                s.image_ref = Some(image);
                s.layout_ref = Some(layout_ref);
                rendered.push(s);
            }
            Err(error) => failures.push(FailureRow { uid: s.uid.clone(), error }),
        }
    }
    write_file(&o.out, SAMPLES, &samples_jsonl(&rendered), &mut m)?;
    write_file(&o.out, "failures.csv", &csv_bytes(&failures, &["uid", "error"]), &mut m)?;
    m.write(&o.out)?;
    log::info!("rendered {} of {} samples", rendered.len(), samples.len());
    if !failures.is_empty() {
        return Err(CliError::Partial(format!("{} samples failed to render; see failures.csv", failures.len())));
    }
    Ok(())
}

pub struct EvaluateOpts {
    pub samples: PathBuf,
    pub out: PathBuf,
    pub modes: String,
    pub client: String,
    pub repeats: Option<u32>,
    pub max_in_flight: Option<usize>,
    pub ocr_audit: bool,
}

pub fn parse_modes(list: &str) -> Result<Vec<EvalMode>, CliError> {
    let mut modes = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let m = EvalMode::parse(part).ok_or_else(|| CliError::Usage(format!("unknown mode `{part}`")))?;
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    if modes.is_empty() {
        return Err(CliError::Usage("no modes given".into()));
    }
    modes.sort();
    Ok(modes)
}

fn make_client(spec: &str, cfg: &Config) -> Result<(Box<dyn ModelClient>, Option<u64>), CliError> {
    if let Some(name) = spec.strip_prefix("synthetic:") {
        let agent = match cfg.agents.get(name) {
            Some(p) => SyntheticAgent::new(name, p.clone()),
            None => SyntheticAgent::preset(name),
        }
        .map_err(|e| CliError::Usage(e.to_string()))?;
        let seed = agent.params.seed;
        return Ok((Box::new(agent), Some(seed)));
    }
    if spec == "http" {
        let http = cfg.http.clone().ok_or_else(|| CliError::Usage("`--client http` needs an `http` section in --config".into()))?;
        let client = HttpClient::new(http).map_err(|e| CliError::Usage(e.to_string()))?;
        return Ok((Box::new(client), None));
    }
    Err(CliError::Usage(format!("unknown client `{spec}`; expected synthetic:<preset> or http")))
}

#[derive(Serialize)]
struct GateCsv<'a> {
    model: &'a str,
    subset: &'a str,
    n: usize,
    mean_similarity: f64,
    passes: bool,
}

pub fn cmd_evaluate(o: EvaluateOpts, cfg: &Config) -> Result<(), CliError> {
    let modes = parse_modes(&o.modes)?;
    let inputs = verify_dir(&o.samples, &[SAMPLES])?;
    let samples = read_samples(&o.samples)?;
    let (client, seed) = make_client(&o.client, cfg)?;
    let mut batch = cfg.batch.clone();
    if let Some(r) = o.repeats {
        batch.repeats = r;
    }
    if let Some(k) = o.max_in_flight {
        batch.max_in_flight = k;
    }
    batch.ocr_audit |= o.ocr_audit;
    batch.image_root = o.samples.clone();
    create_dir(&o.out)?;
    let report = run_batch(&samples, &modes, client.as_ref(), &batch, &o.out.join(LOG)).map_err(|e| match e {
        EvalError::Log(LogError::Parse { line, msg }) => CliError::Partial(format!("{}: line {line}: {msg}", LOG)),
        EvalError::Log(_) | EvalError::ArtifactMissing { .. } | EvalError::Capability { .. } | EvalError::Config(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Partial(other.to_string()),
    })?;
    let mut m = ManifestBuilder::new("evaluate");
    let mut shown = batch.clone();
    shown.image_root = PathBuf::from(".");
    m.config = serde_json::json!({
        "client": o.client,
        "model": client.model_id(),
        "modes": modes,
        "batch": shown,
    });
    if let Some(s) = seed {
        m.seeds.insert("agent".into(), s);
    }
    m.inputs = inputs;
    m.output(LOG);
    let gate: Vec<GateCsv> = report
        .gate
        .iter()
        .map(|g| GateCsv { model: &g.model, subset: g.subset.as_str(), n: g.n, mean_similarity: g.mean_similarity, passes: g.passes })
        .collect();
    write_file(&o.out, "gate.csv", &csv_bytes(&gate, &["model", "subset", "n", "mean_similarity", "passes"]), &mut m)?;
    m.write(&o.out)?;
    log::info!(
        "{} planned, {} executed, {} resumed, {} errors",
        report.planned,
        report.executed,
        report.skipped,
        report.errors
    );
    if report.errors > 0 {
        return Err(CliError::Partial(format!("{} trials ended in errors; rerun to retry them", report.errors)));
    }
    if report.gate_failed() {
        return Err(CliError::Partial("OCR gate failed: mean similarity at or below 0.95; see gate.csv".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    Curves,
    Firth,
    Mft,
    Preferences,
    Robustness,
    Refusals,
    Attribution,
}

impl Diagnostic {
    const ALL: [Diagnostic; 7] = [
        Diagnostic::Curves,
        Diagnostic::Firth,
        Diagnostic::Mft,
        Diagnostic::Preferences,
        Diagnostic::Robustness,
        Diagnostic::Refusals,
        Diagnostic::Attribution,
    ];
}

pub fn parse_diagnostics(list: &str) -> Result<Vec<Diagnostic>, CliError> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "all" => out.extend(Diagnostic::ALL),
            "curves" | "quantity" => out.push(Diagnostic::Curves),
            "firth" => out.push(Diagnostic::Firth),
            "mft" => out.push(Diagnostic::Mft),
            "preferences" => out.push(Diagnostic::Preferences),
            "robustness" => out.push(Diagnostic::Robustness),
            "refusals" => out.push(Diagnostic::Refusals),
            "attribution" | "interaction" => out.push(Diagnostic::Attribution),
            other => return Err(CliError::Usage(format!("unknown diagnostic `{other}`"))),
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Usage("no diagnostics selected".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sensitivity {
    pub model: String,
    pub mode: EvalMode,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupFit {
    pub model: String,
    pub mode: EvalMode,
    pub fit: HierFit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupPreference {
    pub model: String,
    pub mode: EvalMode,
    pub preference: PreferenceStrength,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub model: String,
    pub mode: EvalMode,
    pub composition: dilemma_core::attrib::Composition,
    pub intensity: dilemma_core::attrib::Intensity,
    pub test_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Everything `analyze` computed; `report` draws from this.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Analysis {
    pub diagnostics: Vec<Diagnostic>,
    pub curves: Vec<Curve>,
    pub sensitivity: Vec<Sensitivity>,
    pub conceptual: Vec<GroupFit>,
    pub character: Vec<GroupFit>,
    pub mft: Vec<WinRate>,
    pub preferences: Vec<GroupPreference>,
    pub robustness: Vec<RobustnessPoint>,
    pub refusals: Vec<RefusalRate>,
    pub attribution: Vec<AttributionSummary>,
    pub warnings: Vec<String>,
}

pub struct AnalyzeOpts {
    pub log: PathBuf,
    pub samples: PathBuf,
    pub fixtures: Option<PathBuf>,
    pub out: PathBuf,
    pub diagnostics: String,
}

fn file_stem(model: &str, mode: EvalMode) -> String {
    let clean: String = model.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    format!("{clean}__{}", mode.as_str())
}

fn subset_of<'a>(trials: &[Trial<'a>], subset: Subset) -> Vec<Trial<'a>> {
    trials.iter().copied().filter(|t| t.sample.subset == subset).collect()
}

#[derive(Serialize)]
struct CurveCsv<'a> {
    model: &'a str,
    mode: &'a str,
    net_benefit: i64,
    n: usize,
    refusals: usize,
    p_act: f64,
}

#[derive(Serialize)]
struct SlopeCsv<'a> {
    model: &'a str,
    mode: &'a str,
    slope: Option<f64>,
}

#[derive(Serialize)]
struct EffectCsv<'a> {
    model: &'a str,
    mode: &'a str,
    scheme: &'a str,
    term: &'a str,
    step: usize,
    beta: f64,
    se: f64,
    p: f64,
    significant: bool,
}

#[derive(Serialize)]
struct WinCsv<'a> {
    model: &'a str,
    mode: &'a str,
    dimension: &'a str,
    wins: usize,
    n: usize,
    rate: f64,
}

#[derive(Serialize)]
struct PrefCsv<'a> {
    model: &'a str,
    mode: &'a str,
    first: &'a str,
    second: &'a str,
    value: f64,
    se: f64,
    n: usize,
}

#[derive(Serialize)]
struct RobustCsv<'a> {
    model: &'a str,
    mode: &'a str,
    iterative_robustness: Option<f64>,
    context_sensitivity: Option<f64>,
    repeated_samples: usize,
    tasks: usize,
}

#[derive(Serialize)]
struct RefusalCsv<'a> {
    model: &'a str,
    subset: &'a str,
    mode: &'a str,
    refusals: usize,
    n: usize,
    rate: f64,
}

#[derive(Serialize)]
struct IntensityCsv<'a> {
    model: &'a str,
    mode: &'a str,
    quant1v1_x_char: f64,
    intra_char: f64,
    inter_char: f64,
    quant1v1_x_char_signed: f64,
    intra_char_signed: f64,
    inter_char_signed: f64,
}

pub fn cmd_analyze(o: AnalyzeOpts, cfg: &Config) -> Result<(), CliError> {
    let diagnostics = parse_diagnostics(&o.diagnostics)?;
    if !o.log.is_file() {
        return Err(CliError::Usage(format!("no log at {}", o.log.display())));
    }
    let log_dir = o.log.parent().unwrap_or(Path::new("."));
    let log_name = o.log.file_name().and_then(|n| n.to_str()).unwrap_or(LOG);
    let mut inputs = verify_dir(log_dir, &[log_name])?;
    inputs.extend(verify_dir(&o.samples, &[SAMPLES])?);
    let records = read_log(&o.log).map_err(|e| match e {
        LogError::Parse { line, msg } => CliError::Partial(format!("{}: line {line}: {msg}", o.log.display())),
        other => CliError::Usage(format!("{}: {other}", o.log.display())),
    })?;
    let samples = read_samples(&o.samples)?;
    let specs = load_specs(o.fixtures.as_deref())?;
    let index = SampleIndex::new(&samples);
    let trials = join(&records, &index).map_err(|e| CliError::Usage(e.to_string()))?;

    let mut a = Analysis { diagnostics: diagnostics.clone(), ..Analysis::default() };
    let mut failed = false;
    create_dir(&o.out)?;
    let mut m = ManifestBuilder::new("analyze");
    m.config = serde_json::json!({ "diagnostics": diagnostics, "attrib": cfg.attrib, "fixtures": o.fixtures });
    m.seeds.insert("attrib".into(), cfg.attrib.seed);
    m.inputs = inputs;

    for d in &diagnostics {
        match d {
            Diagnostic::Curves => {
                a.curves = action_curve(&trials);
                a.sensitivity = a
                    .curves
                    .iter()
                    .map(|c| Sensitivity { model: c.model.clone(), mode: c.mode, slope: marginal_sensitivity(&c.points).ok() })
                    .collect();
                let rows: Vec<CurveCsv> = a
                    .curves
                    .iter()
                    .flat_map(|c| {
                        c.points.iter().map(move |p| CurveCsv {
                            model: &c.model,
                            mode: c.mode.as_str(),
                            net_benefit: p.net_benefit,
                            n: p.n,
                            refusals: p.refusals,
                            p_act: p.p_act,
                        })
                    })
                    .collect();
                write_file(&o.out, "curves.csv", &csv_bytes(&rows, &["model", "mode", "net_benefit", "n", "refusals", "p_act"]), &mut m)?;
                let rows: Vec<SlopeCsv> =
                    a.sensitivity.iter().map(|s| SlopeCsv { model: &s.model, mode: s.mode.as_str(), slope: s.slope }).collect();
                write_file(&o.out, "sensitivity.csv", &csv_bytes(&rows, &["model", "mode", "slope"]), &mut m)?;
            }
            Diagnostic::Firth => {
                for (scheme, subset) in [(Scheme::Conceptual, Subset::Quantity), (Scheme::Character, Subset::SingleFeature)] {
                    let sub = subset_of(&trials, subset);
                    for ((model, mode), group) in by_model_mode(&sub) {
                        match hierarchical_fit(&group, scheme) {
                            Ok(fit) => {
                                let g = GroupFit { model, mode, fit };
                                match scheme {
                                    Scheme::Conceptual => a.conceptual.push(g),
                                    Scheme::Character => a.character.push(g),
                                }
                            }
                            Err(e) => {
                                failed = true;
                                a.warnings.push(format!("firth {scheme:?} {model} {}: {e}", mode.as_str()));
                            }
                        }
                    }
                }
                let mut rows = Vec::new();
                for (scheme, fits) in [("conceptual", &a.conceptual), ("character", &a.character)] {
                    for g in fits {
                        for e in &g.fit.effects {
                            rows.push(EffectCsv {
                                model: &g.model,
                                mode: g.mode.as_str(),
                                scheme,
                                term: &e.term,
                                step: e.step,
                                beta: e.beta,
                                se: e.se,
                                p: e.p,
                                significant: e.significant,
                            });
                        }
                    }
                }
                let header = ["model", "mode", "scheme", "term", "step", "beta", "se", "p", "significant"];
                write_file(&o.out, "firth.csv", &csv_bytes(&rows, &header), &mut m)?;
            }
            Diagnostic::Mft => {
                a.mft = mft_win_rates(&trials, &specs);
                let rows: Vec<WinCsv> = a
                    .mft
                    .iter()
                    .map(|w| WinCsv { model: &w.model, mode: w.mode.as_str(), dimension: w.dimension.as_str(), wins: w.wins, n: w.n, rate: w.rate })
                    .collect();
                write_file(&o.out, "mft.csv", &csv_bytes(&rows, &["model", "mode", "dimension", "wins", "n", "rate"]), &mut m)?;
            }
            Diagnostic::Preferences => {
                let sub = subset_of(&trials, Subset::SingleFeature);
                for ((model, mode), group) in by_model_mode(&sub) {
                    for (x, y) in pitted_pairs(&group) {
                        if let Some(p) = preference_strength(&group, &x, &y) {
                            a.preferences.push(GroupPreference { model: model.clone(), mode, preference: p });
                        }
                    }
                }
                let rows: Vec<PrefCsv> = a
                    .preferences
                    .iter()
                    .map(|g| PrefCsv {
                        model: &g.model,
                        mode: g.mode.as_str(),
                        first: &g.preference.first,
                        second: &g.preference.second,
                        value: g.preference.value,
                        se: g.preference.se,
                        n: g.preference.n,
                    })
                    .collect();
                write_file(&o.out, "preferences.csv", &csv_bytes(&rows, &["model", "mode", "first", "second", "value", "se", "n"]), &mut m)?;
            }
            Diagnostic::Robustness => {
                a.robustness = robustness_metrics(&trials);
                let rows: Vec<RobustCsv> = a
                    .robustness
                    .iter()
                    .map(|r| RobustCsv {
                        model: &r.model,
                        mode: r.mode.as_str(),
                        iterative_robustness: r.iterative_robustness,
                        context_sensitivity: r.context_sensitivity,
                        repeated_samples: r.repeated_samples,
                        tasks: r.tasks,
                    })
                    .collect();
                let header = ["model", "mode", "iterative_robustness", "context_sensitivity", "repeated_samples", "tasks"];
                write_file(&o.out, "robustness.csv", &csv_bytes(&rows, &header), &mut m)?;
            }
            Diagnostic::Refusals => {
                a.refusals = refusal_rates(&trials);
                let rows: Vec<RefusalCsv> = a
                    .refusals
                    .iter()
                    .map(|r| RefusalCsv { model: &r.model, subset: r.subset.as_str(), mode: r.mode.as_str(), refusals: r.refusals, n: r.n, rate: r.rate })
                    .collect();
                write_file(&o.out, "refusals.csv", &csv_bytes(&rows, &["model", "subset", "mode", "refusals", "n", "rate"]), &mut m)?;
            }
            Diagnostic::Attribution => {
                let reports: Vec<AttributionReport> = match attribute_all(&trials, &cfg.attrib) {
                    Ok(r) => r,
                    Err(e) => {
                        failed = true;
                        a.warnings.push(format!("attribution: {e}"));
                        Vec::new()
                    }
                };
                for r in &reports {
                    let stem = file_stem(&r.model, r.mode);
                    write_file(&o.out, &format!("attribution/{stem}/ensemble.json"), r.ensemble.to_json().as_bytes(), &mut m)?;
                    write_file(&o.out, &format!("attribution/{stem}/phi_abs.csv"), matrix_csv(&r.mean_abs, &r.registry).as_bytes(), &mut m)?;
                    write_file(&o.out, &format!("attribution/{stem}/phi_mean.csv"), matrix_csv(&r.mean_signed, &r.registry).as_bytes(), &mut m)?;
                    a.attribution.push(AttributionSummary {
                        model: r.model.clone(),
                        mode: r.mode,
                        composition: r.composition,
                        intensity: r.intensity,
                        test_accuracy: r.test_accuracy,
                        n_train: r.n_train,
                        n_test: r.n_test,
                    });
                }
                let shares: Vec<_> = a
                    .attribution
                    .iter()
                    .map(|s| serde_json::json!({ "model": s.model, "mode": s.mode, "shares": s.composition }))
                    .collect();
                let text = serde_json::to_string_pretty(&shares).expect("shares serialize") + "\n";
                write_file(&o.out, "composition.json", text.as_bytes(), &mut m)?;
                let rows: Vec<IntensityCsv> = a
                    .attribution
                    .iter()
                    .map(|s| IntensityCsv {
                        model: &s.model,
                        mode: s.mode.as_str(),
                        quant1v1_x_char: s.intensity.quant1v1_x_char,
                        intra_char: s.intensity.intra_char,
                        inter_char: s.intensity.inter_char,
                        quant1v1_x_char_signed: s.intensity.quant1v1_x_char_signed,
                        intra_char_signed: s.intensity.intra_char_signed,
                        inter_char_signed: s.intensity.inter_char_signed,
                    })
                    .collect();
                let header = ["model", "mode", "quant1v1_x_char", "intra_char", "inter_char", "quant1v1_x_char_signed", "intra_char_signed", "inter_char_signed"];
                write_file(&o.out, "intensity.csv", &csv_bytes(&rows, &header), &mut m)?;
            }
        }
    }
    let text = serde_json::to_string_pretty(&a).expect("analysis serializes") + "\n";
    write_file(&o.out, ANALYSIS, text.as_bytes(), &mut m)?;
    m.write(&o.out)?;
    for w in &a.warnings {
        log::warn!("{w}");
    }
    if failed {
        return Err(CliError::Partial(format!("{} diagnostics failed; see warnings in {ANALYSIS}", a.warnings.len())));
    }
    Ok(())
}
