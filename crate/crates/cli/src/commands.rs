use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use conflict_core::bench::{rule_engine_latency, stress_records, stress_tables, Timing};
use conflict_core::cms::{ingest_opencellid, run_control_loop, Classifier, EventKind, Scenario, ScenarioConfig, TopologyConfig};
use conflict_core::domain::Sidecar;
use conflict_core::genc::io::{read_dataset_file, read_sidecar, sidecar_path, write_dataset_file, write_sidecar};
use conflict_core::genc::{simulate_to_vec, synthesize_entities, Intensity, SimConfig, SnapshotRecord};
use conflict_core::learn::{
    evaluate, inference_latency, latency_us, run_seeds, stratified_split, train, Architecture, ClassifierModel,
    Confusion, EncodedSet, EvalReport, InputKind, RunMetrics, TrainConfig,
};
use conflict_core::par::Exec;
use conflict_core::rule_engine::{annotate_dataset_with, ConflictStats};
use conflict_core::{ConflictLabel, SystemModel};
use serde_json::json;

use crate::config::{parse_by_extension, ExperimentConfig};
use crate::manifest::{Artifact, Manifest, Run};

fn histogram(stats: &ConflictStats) -> String {
    ConflictLabel::ALL
        .iter()
        .map(|l| format!("{l} {}", stats.count(*l)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn dataset_name(m: usize, intensity: Intensity, seed: u64) -> String {
    format!("genc_m{m}_{intensity}_s{seed}.csv")
}

fn generate_one(cfg: &ExperimentConfig, m: usize, intensity: Intensity, default_steps: u64) -> Result<(SystemModel, Vec<SnapshotRecord>)> {
    let model = synthesize_entities(m, cfg.share_prob(), cfg.seed())?;
    let sim = SimConfig::new(cfg.steps(default_steps), cfg.sigma(), cfg.seed());
    let records = simulate_to_vec(&model, &intensity.profile(), &sim)?;
    Ok((model, records))
}

fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    let mut t = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(e) = cfg.epochs {
        t.epochs = e;
    }
    t
}

fn input_kind(arch: Architecture) -> InputKind {
    if arch.uses_graphs() {
        InputKind::RowGraph
    } else {
        InputKind::Signature
    }
}

pub fn generate(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::start("generate", cfg)?;
    let mut summary = Vec::new();
    for m in cfg.ms() {
        for intensity in cfg.intensities()? {
            let (model, records) = generate_one(cfg, m, intensity, 100_000)?;
            let (_, stats) = annotate_dataset_with(Exec::default(), &records, &model.mappings)?;
            let path = run.path(&dataset_name(m, intensity, cfg.seed()));
            write_dataset_file(&path, &records, &model.mappings)?;
            let mut sidecar = Sidecar::from_model(&model, cfg.seed(), cfg.share_prob(), cfg.sigma(), intensity.as_str());
            sidecar.config = Some(run.config_json());
            let meta = sidecar_path(&path);
            write_sidecar(&meta, &sidecar)?;
            run.record(path.clone());
            run.record(meta);
            println!(
                "m={m} {intensity}: {} rows, conflict ratio {:.2}% ({}) -> {}",
                stats.rows,
                stats.conflict_ratio * 100.0,
                histogram(&stats),
                path.display()
            );
            summary.push(json!({
                "m": m, "intensity": intensity.as_str(), "rows": stats.rows,
                "conflict_ratio": stats.conflict_ratio, "counts": stats.counts,
            }));
        }
    }
    run.finish(json!(summary))?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<(SystemModel, Vec<SnapshotRecord>)> {
    let meta = sidecar_path(path);
    let sidecar = read_sidecar(&meta).with_context(|| format!("reading sidecar {}", meta.display()))?;
    let records = read_dataset_file(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((sidecar.to_model()?, records))
}

pub fn annotate(cfg: &ExperimentConfig) -> Result<()> {
    let input = cfg.input.as_deref().ok_or_else(|| anyhow!("annotate needs --input <dataset.csv>"))?;
    let mut run = Run::start("annotate", cfg)?;
    let (model, records) = load_dataset(input)?;
    let (labels, stats) = annotate_dataset_with(Exec::default(), &records, &model.mappings)?;
    let mismatches = records.iter().zip(&labels).filter(|(r, l)| r.label != **l).count();
    let agreement = if records.is_empty() {
        100.0
    } else {
        100.0 * (records.len() - mismatches) as f64 / records.len() as f64
    };
    println!(
        "{}: {} rows, agreement with stored labels {agreement:.2}% ({mismatches} mismatches); {}; {:.1} ns/row",
        input.display(),
        records.len(),
        histogram(&stats),
        stats.mean_ns
    );
    let report = json!({
        "config": run.config_json(), "input": input, "rows": records.len(), "mismatches": mismatches,
        "agreement_pct": agreement, "counts": stats.counts, "mean_ns": stats.mean_ns,
    });
    run.write("annotate-report.json", &serde_json::to_string_pretty(&report)?)?;
    run.finish(report)?;
    Ok(())
}

pub fn train_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::start("train", cfg)?;
    let (model, records, source) = match &cfg.input {
        Some(path) => {
            let (m, r) = load_dataset(path)?;
            (m, r, path.display().to_string())
        }
        None => {
            let (m, intensity) = (cfg.ms()[0], cfg.intensities()?[0]);
            let (model, records) = generate_one(cfg, m, intensity, 100_000)?;
            (model, records, format!("generated m={m} {intensity}"))
        }
    };
    let labels: Vec<ConflictLabel> = records.iter().map(|r| r.label).collect();
    let (train_rows, test_rows) = stratified_split(&labels, 0.8, cfg.seed());
    let pick = |rows: &[usize]| -> Vec<SnapshotRecord> { rows.iter().map(|&i| records[i].clone()).collect() };
    let (train_set, test_set) = (pick(&train_rows), pick(&test_rows));
    let train_labels: Vec<ConflictLabel> = train_set.iter().map(|r| r.label).collect();
    let mut summary = Vec::new();
    for arch in cfg.arch_names(&["graphmp"])? {
        let Some(arch) = arch else {
            println!("rule: nothing to train");
            continue;
        };
        let tc = train_config(cfg, cfg.seed());
        let out = train(&train_set, &train_labels, &model.mappings, arch, &tc)?;
        let test = EncodedSet::encode(&test_set, &model.mappings, input_kind(arch), Exec::default())?;
        let confusion = evaluate(&out.model, &test, Exec::default())?;
        let path = run.write(&format!("model_{arch}.json"), &out.model.to_json()?)?;
        println!(
            "{arch} on {source}: {} epochs, loss {:.5}, test accuracy {:.2}%, macro-F1 {:.2}% -> {}",
            out.metrics.epochs,
            out.metrics.final_loss,
            confusion.accuracy(),
            confusion.macro_f1(),
            path.display()
        );
        summary.push(json!({
            "arch": arch.as_str(), "source": source, "metrics": out.metrics,
            "test_accuracy": confusion.accuracy(), "test_macro_f1": confusion.macro_f1(),
        }));
    }
    run.finish(json!(summary))?;
    Ok(())
}

fn rule_runs(records: &[SnapshotRecord], model: &SystemModel) -> Result<Vec<RunMetrics>> {
    let truth: Vec<ConflictLabel> = records.iter().map(|r| r.label).collect();
    let (pred, _) = annotate_dataset_with(Exec::default(), records, &model.mappings)?;
    Ok(vec![RunMetrics::new(0, Confusion::from_pairs(&truth, &pred)?)])
}

pub fn eval(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::start("eval", cfg)?;
    let seeds = cfg.seeds();
    let mut reports = Vec::new();
    for m in cfg.ms() {
        for intensity in cfg.intensities_or_all()? {
            let (model, records) = generate_one(cfg, m, intensity, 200_000)?;
            for arch in cfg.archs()? {
                let mut report = match arch {
                    None => {
                        let mut r = EvalReport::from_runs("rule", &rule_runs(&records, &model)?)?;
                        r.latency_us = Some(latency_us(&rule_engine_latency(&records, &model.mappings)));
                        r
                    }
                    Some(arch) => {
                        let encoded = EncodedSet::encode(&records, &model.mappings, input_kind(arch), Exec::default())?;
                        let tc = train_config(cfg, seeds[0]);
                        let runs = run_seeds(&records, &encoded, &model.mappings, arch, &tc, &seeds)?;
                        let metrics: Vec<RunMetrics> = runs.iter().map(|(r, _)| r.clone()).collect();
                        let mut r = EvalReport::from_runs(arch.as_str(), &metrics)?;
                        r.latency_us = Some(latency_us(&inference_latency(&runs[0].1.model, &encoded)?));
                        r
                    }
                };
                report.m = Some(m);
                report.intensity = Some(intensity.as_str().to_string());
                println!("{}", report.csv_row());
                reports.push(report);
            }
        }
    }
    let mut csv = format!("{}\n", EvalReport::CSV_HEADER);
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    run.write("eval.csv", &csv)?;
    run.write(
        "eval.json",
        &serde_json::to_string_pretty(&json!({ "config": run.config_json(), "reports": reports }))?,
    )?;
    run.finish(json!({ "rows": reports.len() }))?;
    Ok(())
}

fn timing_row(method: &str, m: usize, dataset: &str, t: &Timing) -> serde_json::Value {
    let us = latency_us(t);
    json!({
        "method": method, "m": m, "dataset": dataset, "mean_us": us.mean, "se_us": us.se,
        "median_us": t.median_ns / 1e3, "trials": t.trials,
    })
}

pub fn bench(cfg: &ExperimentConfig) -> Result<()> {
    let archs = cfg.arch_names(&["rule"])?;
    let models_given = cfg.model.clone().unwrap_or_default();
    let mut models: Vec<ClassifierModel> = Vec::new();
    for path in &models_given {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        models.push(ClassifierModel::from_json(&text)?);
    }
    for arch in archs.iter().flatten() {
        if !models.iter().any(|m| m.architecture == *arch) {
            bail!(
                "no trained {arch} model given; run `ricconf train --arch {arch} --out DIR` and pass --model DIR/model_{arch}.json"
            );
        }
    }
    let mut run = Run::start("bench", cfg)?;
    let mut rows = Vec::new();
    for m in cfg.ms_or(&[5, 10, 20, 30, 50]) {
        let tables = stress_tables(m);
        let stress = stress_records(&tables, 256, None);
        rows.push(timing_row("rule", m, "stress", &rule_engine_latency(&stress, &tables)));
        let (model, records) = generate_one(cfg, m, cfg.intensities()?[0], 20_000)?;
        let rule = rule_engine_latency(&records, &model.mappings);
        rows.push(timing_row("rule", m, "genc", &rule));
        for net in &models {
            let set = EncodedSet::encode(&records, &model.mappings, net.encoding.input, Exec::default())?;
            let t = inference_latency(net, &set)?;
            println!(
                "m={m}: {} {:.3} us/row vs rule {:.3} us/row (speedup {:.2}x)",
                net.architecture,
                t.mean_ns / 1e3,
                rule.mean_ns / 1e3,
                rule.mean_ns / t.mean_ns
            );
            rows.push(timing_row(net.architecture.as_str(), m, "genc", &t));
        }
    }
    let mut csv = String::from("method,m,dataset,mean_us,se_us,median_us,trials\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{:.6},{}",
            r["method"].as_str().unwrap_or(""),
            r["m"],
            r["dataset"].as_str().unwrap_or(""),
            r["mean_us"].as_f64().unwrap_or(f64::NAN),
            r["se_us"].as_f64().unwrap_or(f64::NAN),
            r["median_us"].as_f64().unwrap_or(f64::NAN),
            r["trials"]
        )?;
    }
    print!("{csv}");
    run.write("bench.csv", &csv)?;
    run.write(
        "bench.json",
        &serde_json::to_string_pretty(&json!({ "config": run.config_json(), "rows": rows }))?,
    )?;
    run.finish(json!({ "rows": rows.len() }))?;
    Ok(())
}

fn load_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    let config = match (&cfg.scenario, cfg.preset.as_deref()) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_by_extension::<ScenarioConfig>(path, &text)?
        }
        (None, None | Some("es-mro")) => ScenarioConfig::es_mro(),
        (None, Some(other)) => bail!("unknown preset {other:?}"),
    };
    Ok(Scenario::from_config(config)?)
}

pub fn scenario(cfg: &ExperimentConfig) -> Result<()> {
    let mut scenario = load_scenario(cfg)?;
    let mut run = Run::start("scenario", cfg)?;
    if let Some(path) = &cfg.topology {
        let ingest = ingest_opencellid(path, &TopologyConfig::dublin())?;
        println!("topology: {} cells ({} malformed rows skipped)", ingest.cells.len(), ingest.skipped);
        let mut buf = Vec::new();
        conflict_core::cms::write_positions(&ingest.cells, &mut buf)?;
        run.write("positions.csv", std::str::from_utf8(&buf)?)?;
        scenario.topology = ingest.cells;
    }
    let classifier = match cfg.arch_names(&["rule"])?.first().copied().flatten() {
        None => Classifier::RuleEngine,
        Some(arch) => {
            let records = simulate_to_vec(
                &scenario.model,
                &Intensity::High.profile(),
                &SimConfig::new(cfg.steps(50_000), scenario.surrogate.sigma, cfg.seed()),
            )?;
            let labels: Vec<ConflictLabel> = records.iter().map(|r| r.label).collect();
            let out = train(&records, &labels, &scenario.model.mappings, arch, &train_config(cfg, cfg.seed()))
                .with_context(|| format!("training {arch} on the scenario dataset"))?;
            Classifier::Learned(Box::new(out.model))
        }
    };
    let steps = scenario.duration;
    let result = run_control_loop(&scenario, &scenario.actions, steps, classifier)?;
    for e in &result.events {
        let line = match &e.kind {
            EventKind::Action { actor, icp, old, new } => format!("{actor} sets {icp} {old} -> {new}"),
            EventKind::Violation { kpi, value, threshold } => format!("{kpi} {value:.4} < {threshold}"),
            EventKind::Recovery { kpi, value } => format!("{kpi} recovered ({value:.4})"),
            EventKind::Trigger { kpis, .. } => format!("trigger on {}", kpis.join(", ")),
            EventKind::Classification { label, xapps, icp, classifier, .. } => format!(
                "{classifier}: {label} between {} on {}",
                xapps.join(", "),
                icp.as_deref().unwrap_or("-")
            ),
            EventKind::Mitigation { icp, old, new, feasible, .. } => {
                format!("CMS sets {icp} {old:.3} -> {new:.3} (feasible: {feasible})")
            }
            EventKind::Timeout { elapsed_us, deadline_us } => {
                format!("classification took {elapsed_us:.0} us, deadline {deadline_us:.0} us")
            }
        };
        println!("t={:>4} #{:<3} {line}", e.t, e.seq);
    }
    let mut events = Vec::new();
    result.write_events_jsonl(&mut events)?;
    run.write("events.jsonl", std::str::from_utf8(&events)?)?;
    let mut trace = Vec::new();
    result.write_trace_csv(&scenario, &mut trace)?;
    run.write("trace.csv", std::str::from_utf8(&trace)?)?;
    run.write("scenario.json", &serde_json::to_string_pretty(&scenario.config)?)?;
    let count = |name: &str| result.of_kind(name).count();
    run.finish(json!({
        "scenario": scenario.name, "steps": steps, "events": result.events.len(),
        "triggers": count("trigger"), "mitigations": count("mitigation"), "timeouts": count("timeout"),
    }))?;
    Ok(())
}

/// Summarizes every manifest in the output directory and verifies the
/// recorded checksums.
pub fn report(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.out_dir();
    let mut manifests: Vec<(PathBuf, Manifest)> = Vec::new();
    for entry in std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let is_manifest = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("-manifest.json"));
        if is_manifest {
            let text = std::fs::read_to_string(&path)?;
            manifests.push((path.clone(), serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?));
        }
    }
    if manifests.is_empty() {
        bail!("no manifests in {}; run another subcommand first", dir.display());
    }
    manifests.sort_by(|a, b| a.0.cmp(&b.0));
    let mut md = String::from("# ricconf report\n\n| command | wall clock (s) | artifact | sha256 | status |\n|---|---|---|---|---|\n");
    let mut bad = 0;
    for (_, m) in &manifests {
        for a in &m.artifacts {
            let status = match Artifact::of(&a.path) {
                Ok(now) if now.sha256 == a.sha256 => "ok",
                Ok(_) => "changed",
                Err(_) => "missing",
            };
            if status != "ok" {
                bad += 1;
            }
            writeln!(
                md,
                "| {} | {:.2} | {} | {} | {status} |",
                m.command,
                m.wall_clock_s,
                a.path.display(),
                &a.sha256[..16]
            )?;
        }
    }
    for (_, m) in &manifests {
        if m.command == "eval" {
            if let Some(csv) = m.artifacts.iter().find(|a| a.path.ends_with("eval.csv")) {
                md.push_str("\n## eval\n\n```\n");
                md.push_str(&std::fs::read_to_string(&csv.path).unwrap_or_default());
                md.push_str("```\n");
            }
        }
    }
    print!("{md}");
    std::fs::write(dir.join("report.md"), &md)?;
    if bad > 0 {
        bail!("{bad} artifacts are missing or changed since they were written");
    }
    Ok(())
}
