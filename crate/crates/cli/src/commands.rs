use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde_json::{json, Value};

use trackeval_core::dataio::{
    generate_synthetic, load_sequence, occluded_suite, read_homographies, write_homographies, write_sequence,
    AnnotationFormat, SuiteParams, SynthSpec,
};
use trackeval_core::metrics::SequenceMetrics;
use trackeval_core::trackers::run_conformance;
use trackeval_core::{
    aggregate, augment_dataset, evaluate_sequence, run_dsp, run_eop, run_ltp, EgoSource, ExternTracker, NccTracker,
    ResultTrace, RunConfig, Sequence, TraceTracker, Tracker,
};

use crate::overlay::render_overlay;
use crate::{core_err, AugmentArgs, Cli, CliError, Cmd, Common, ConformanceArgs, EvalArgs, MetricsArgs, OverlayArgs, SynthArgs};

pub const HOMOGRAPHY_FILE: &str = "true_homographies.ndjson";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.common)?;
    if cli.common.jobs == 0 {
        return Err(CliError::usage("usage", "--jobs must be at least 1"));
    }
    match cli.cmd {
        Cmd::Eval(a) => eval(&a, &cfg, cli.common.jobs),
        Cmd::Augment(a) => augment(&a, &cfg),
        Cmd::Synth(a) => synth(&a, &cfg),
        Cmd::Metrics(a) => metrics(&a, &cfg),
        Cmd::Overlay(a) => overlay(&a),
        Cmd::Conformance(a) => conformance(&a, &cfg),
    }
}

// ---------------------------------------------------------------- config

/// Defaults, then the config file, then `--set`, then dedicated flags.
pub fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let bad = |m: String| CliError::runtime("bad_config", m);
    let (mut doc, origin) = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| bad(format!("reading {}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", p.display())))?;
            (v, p.display().to_string())
        }
        None => (json!({}), "<defaults>".to_string()),
    };
    for o in &common.overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| bad(format!("override `{o}` is not KEY=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut doc, key, value).map_err(bad)?;
    }
    if let Some(seed) = common.seed {
        set_path(&mut doc, "seed", json!(seed)).map_err(bad)?;
    }
    RunConfig::from_json(&doc.to_string(), &origin).map_err(core_err)
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), String> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(format!("empty segment in key `{key}`"));
        }
        let obj = cur.as_object_mut().ok_or_else(|| format!("`{key}`: parent is not an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    Ok(())
}

// ---------------------------------------------------------------- choices

#[derive(Debug, Clone, PartialEq)]
pub enum TrackerChoice {
    Ncc,
    Trace(PathBuf),
    Extern(String),
}

impl TrackerChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::usage("bad_tracker", format!("unknown tracker `{s}`; expected ncc, trace:<path> or extern:<target>"));
        match s.split_once(':') {
            None if s == "ncc" => Ok(Self::Ncc),
            Some(("trace", p)) if !p.is_empty() => Ok(Self::Trace(PathBuf::from(p))),
            Some(("extern", t)) if !t.is_empty() => Ok(Self::Extern(t.to_string())),
            _ => Err(bad()),
        }
    }

    fn build(&self, seq: &Sequence, cfg: &RunConfig) -> Result<Box<dyn Tracker>, CliError> {
        Ok(match self {
            Self::Ncc => Box::new(NccTracker::new(cfg.ncc.clone(), cfg.gating.clone())),
            Self::Trace(p) => {
                let file = if p.is_dir() { p.join(format!("{}.ndjson", seq.name)) } else { p.clone() };
                Box::new(TraceTracker::from_file(&file).map_err(core_err)?)
            }
            Self::Extern(target) => Box::new(ExternTracker::open(target, timeout(cfg)).map_err(core_err)?),
        })
    }
}

fn timeout(cfg: &RunConfig) -> Duration {
    Duration::from_secs_f64(cfg.tracker_timeout_s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolChoice {
    Ltp,
    Dsp(Option<usize>),
    Eop,
}

impl ProtocolChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::usage("bad_protocol", format!("unknown protocol `{s}`; expected ltp, dsp[:n] or eop"));
        match s {
            "ltp" => Ok(Self::Ltp),
            "eop" => Ok(Self::Eop),
            "dsp" => Ok(Self::Dsp(None)),
            _ => match s.strip_prefix("dsp:").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => Ok(Self::Dsp(Some(n))),
                _ => Err(bad()),
            },
        }
    }
}

// ---------------------------------------------------------------- eval

/// Expands directories into the manifests they hold.
pub fn collect_manifests(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if !p.is_dir() {
            out.push(p.clone());
            continue;
        }
        if p.join("manifest.json").is_file() {
            out.push(p.join("manifest.json"));
            continue;
        }
        let mut found: Vec<PathBuf> = fs::read_dir(p)
            .map_err(|e| CliError::runtime("data_error", format!("{}: {e}", p.display())))?
            .filter_map(|e| e.ok().map(|e| e.path().join("manifest.json")))
            .filter(|m| m.is_file())
            .collect();
        if found.is_empty() {
            return Err(CliError::runtime("data_error", format!("no manifests under {}", p.display())));
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

fn create_dir(p: &Path) -> Result<(), CliError> {
    fs::create_dir_all(p).map_err(|e| CliError::runtime("io_error", format!("{}: {e}", p.display())))
}

/// Frames on which a fresh tracker output shows up in the trace.
pub fn kept_mask(trace: &ResultTrace) -> Vec<bool> {
    trace.records.iter().map(|r| r.score.is_some()).collect()
}

fn eval(a: &EvalArgs, cfg: &RunConfig, jobs: usize) -> Result<(), CliError> {
    let tracker = TrackerChoice::parse(&a.tracker)?;
    let protocol = ProtocolChoice::parse(&a.protocol)?;
    let scripted = match a.ego.as_str() {
        "estimated" => false,
        "scripted" => true,
        other => return Err(CliError::usage("usage", format!("unknown ego source `{other}`"))),
    };
    let manifests = collect_manifests(&a.manifests)?;
    create_dir(&a.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::runtime("io_error", e.to_string()))?;
    let results: Vec<Result<SequenceMetrics, CliError>> = pool.install(|| {
        manifests
            .par_iter()
            .map(|m| eval_one(m, &tracker, protocol, scripted, cfg, &a.out))
            .collect()
    });
    let metrics = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let report = aggregate(metrics).map_err(core_err)?;
    report.write(&a.out, "report").map_err(core_err)?;
    println!("{}", serde_json::to_string(&report.mean).expect("summary serializes"));
    Ok(())
}

fn eval_one(
    manifest: &Path,
    choice: &TrackerChoice,
    protocol: ProtocolChoice,
    scripted: bool,
    cfg: &RunConfig,
    out: &Path,
) -> Result<SequenceMetrics, CliError> {
    let seq = load_sequence(manifest).map_err(core_err)?;
    let mut tracker = choice.build(&seq, cfg)?;
    let result = match protocol {
        ProtocolChoice::Ltp => run_ltp(&seq, tracker.as_mut()).map(|t| (t, None)),
        ProtocolChoice::Dsp(n) => run_dsp(&seq, tracker.as_mut(), n.unwrap_or(cfg.schedule.dsp_n)).map(|t| (t, None)),
        ProtocolChoice::Eop => {
            let ego = if scripted {
                let dir = manifest.parent().unwrap_or(Path::new("."));
                EgoSource::Scripted(read_homographies(&dir.join(HOMOGRAPHY_FILE)).map_err(core_err)?)
            } else {
                EgoSource::Estimated { seed: cfg.seed }
            };
            run_eop(&seq, tracker.as_mut(), &cfg.schedule, &cfg.ekf, &cfg.ego, &cfg.gating, &ego)
                .map(|r| (r.trace.clone(), Some(r)))
        }
    };
    tracker.close();
    let (trace, eop) = result.map_err(core_err)?;
    trace.write(&out.join(format!("{}.ndjson", seq.name))).map_err(core_err)?;
    if let Some(run) = eop {
        run.write_diagnostics(&out.join(format!("{}.diagnostics.ndjson", seq.name))).map_err(core_err)?;
    }
    let kept = kept_mask(&trace);
    evaluate_sequence(&seq.name, &seq.tags, &trace.boxes(), &seq.gt, Some(&kept), &cfg.metrics).map_err(core_err)
}

// ---------------------------------------------------------------- others

fn augment(a: &AugmentArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let events = trackeval_core::augment::load_event_specs(&a.events).map_err(core_err)?;
    create_dir(&a.out)?;
    let m = augment_dataset(&a.manifest, &events, &cfg.augment, cfg.seed, &a.out).map_err(core_err)?;
    println!("{}", m.display());
    Ok(())
}

fn synth(a: &SynthArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let specs: Vec<SynthSpec> = match (&a.spec, a.suite) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::runtime("data_error", format!("{}: {e}", p.display())))?;
            let v: Value =
                serde_json::from_str(&text).map_err(|e| CliError::runtime("data_error", format!("{}: {e}", p.display())))?;
            let v = if v.is_array() { v } else { Value::Array(vec![v]) };
            serde_json::from_value(v).map_err(|e| CliError::runtime("data_error", format!("{}: {e}", p.display())))?
        }
        (None, Some(n)) => occluded_suite(n, cfg.seed, SuiteParams { width: a.width, height: a.height, frames: a.frames }),
        (None, None) => return Err(CliError::usage("usage", "synth needs --spec or --suite")),
    };
    create_dir(&a.out)?;
    for spec in &specs {
        let out = generate_synthetic(spec, cfg.seed).map_err(core_err)?;
        let dir = a.out.join(&spec.name);
        let format = if spec.annotation_stride == 1 { AnnotationFormat::Uav123 } else { AnnotationFormat::Vtuav };
        let m = write_sequence(&dir, &out.sequence, format).map_err(core_err)?;
        write_homographies(&dir.join(HOMOGRAPHY_FILE), &out.homographies).map_err(core_err)?;
        println!("{}", m.display());
    }
    Ok(())
}

fn metrics(a: &MetricsArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let seq = load_sequence(&a.manifest).map_err(core_err)?;
    let trace = ResultTrace::load(&a.trace).map_err(core_err)?;
    let kept = kept_mask(&trace);
    let m = evaluate_sequence(&seq.name, &seq.tags, &trace.boxes(), &seq.gt, Some(&kept), &cfg.metrics)
        .map_err(core_err)?;
    let report = aggregate(vec![m]).map_err(core_err)?;
    create_dir(&a.out)?;
    report.write(&a.out, "report").map_err(core_err)?;
    println!("{}", serde_json::to_string(&report.mean).expect("summary serializes"));
    Ok(())
}

fn overlay(a: &OverlayArgs) -> Result<(), CliError> {
    let seq = load_sequence(&a.manifest).map_err(core_err)?;
    let trace = ResultTrace::load(&a.trace).map_err(core_err)?;
    if trace.len() < seq.len() {
        return Err(CliError::runtime(
            "misaligned_trace",
            format!("trace has no record for frame {} ({} records, {} frames)", trace.len(), trace.len(), seq.len()),
        ));
    }
    if trace.len() > seq.len() {
        return Err(CliError::runtime(
            "misaligned_trace",
            format!("trace record for frame {} is past the last frame {}", seq.len(), seq.len() - 1),
        ));
    }
    create_dir(&a.out)?;
    for (i, rec) in trace.records.iter().enumerate() {
        let frame = seq.frame(i).map_err(core_err)?;
        let img = render_overlay(&frame, &rec.bbox, seq.gt[i].as_ref());
        trackeval_core::dataio::write_pgm(&a.out.join(format!("{i:06}.pgm")), &img).map_err(core_err)?;
    }
    Ok(())
}

fn conformance(a: &ConformanceArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let target = match TrackerChoice::parse(&a.tracker)? {
        TrackerChoice::Extern(t) => t,
        _ => return Err(CliError::usage("bad_tracker", "conformance needs an extern:<target> tracker")),
    };
    let mut client = ExternTracker::open(&target, timeout(cfg)).map_err(core_err)?;
    let report = run_conformance(&mut client, a.exchanges, cfg.seed).map_err(core_err)?;
    client.close();
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::runtime(
            "conformance_failed",
            format!("{} mismatches, {} violations", report.mismatches, report.violations),
        ))
    }
}
