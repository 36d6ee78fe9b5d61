use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde_json::json;
use whitekit::probes::Split;
use whitekit::report::{
    append_records, comparison_table, read_records, summary_table, whitening_range_table, Metric,
    RunRecord, Table,
};
use whitekit::store::{
    import_csv, load_embeddings, load_with_manifest, read_manifest, save_classification, save_sts,
    save_whitening_model, synth_fixture, write_manifest, Dataset, DatasetManifest, SynthSpec, Task,
    WhiteningProvenance,
};
use whitekit::sts::fit_pair_whitening;
use whitekit::{
    apply_whitening, evaluate_classification, evaluate_classification_whitened, evaluate_sts,
    fit_whitening, isoscore, pca_project, EmbeddingMatrix, FitScope, SentencePairSet,
    WhiteningConfig, WhiteningModel,
};

use crate::args::*;
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Relative paths resolve against `WHITEKIT_DATA_DIR` when it is set; a
/// directory stands for the `manifest.json` inside it.
pub fn manifest_path(p: &Path) -> PathBuf {
    let mut path = match std::env::var_os("WHITEKIT_DATA_DIR") {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    };
    if path.is_dir() {
        path.push("manifest.json");
    }
    path
}

struct Loaded {
    path: PathBuf,
    manifest: DatasetManifest,
    data: Dataset,
}

fn load(p: &Path) -> Result<Loaded> {
    let path = manifest_path(p);
    let manifest = read_manifest(&path)?;
    let data = load_with_manifest(&path, &manifest)
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(Loaded { path, manifest, data })
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn whitening_label(m: &DatasetManifest) -> (String, String) {
    match &m.whitening {
        Some(w) => (w.kind.to_string(), w.fit_scope.to_string()),
        None => ("none".into(), "-".into()),
    }
}

fn emit(table: &Table, csv: bool) -> Result<()> {
    if csv {
        print!("{}", table.to_csv()?);
    } else {
        print!("{}", table.to_text());
    }
    Ok(())
}

fn record_run(out: Option<&Path>, records: &[RunRecord], table: Option<(&Table, &str)>) -> Result<()> {
    let Some(dir) = out else { return Ok(()) };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    append_records(dir.join("runs.jsonl"), records)?;
    if let Some((table, stem)) = table {
        let path = dir.join(format!("{stem}.csv"));
        fs::write(&path, table.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn whiten(args: &WhitenArgs) -> Result<()> {
    let src = load(&args.manifest)?;
    let cfg = WhiteningConfig {
        kind: args.kind,
        eps_relative: args.eps,
        fit_scope: args.fit_scope,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let name = &src.manifest.name;
    let model_name = &src.manifest.model_name;
    let (model, mut manifest): (WhiteningModel, DatasetManifest) = match &src.data {
        Dataset::Classification(set) => {
            let model = match args.fit_scope {
                FitScope::AllData => fit_whitening(&set.embeddings, &cfg)?,
                FitScope::TrainOnly => {
                    let rows = set.split_indices(Split::Train).ok_or_else(|| {
                        usage("--fit-scope train needs a dataset with a splits file")
                    })?;
                    fit_whitening(&set.embeddings.select_rows(&rows)?, &cfg)?
                }
            };
            let white = set.with_embeddings(apply_whitening(&model, &set.embeddings)?)?;
            let m = save_classification(&white, &args.out, name, model_name)?;
            (model, m)
        }
        Dataset::Sts(pairs) => {
            if args.fit_scope == FitScope::TrainOnly {
                return Err(usage("STS datasets have no train split; use --fit-scope all"));
            }
            let model = fit_pair_whitening(pairs, &cfg)?;
            let white = SentencePairSet::new(
                apply_whitening(&model, &pairs.left)?,
                apply_whitening(&model, &pairs.right)?,
                pairs.gold.clone(),
            )?;
            let m = save_sts(&white, &args.out, name, model_name)?;
            (model, m)
        }
    };
    let model_path = save_whitening_model(&model, args.fit_scope, &args.out, "whitening")?;
    manifest.whitening = Some(WhiteningProvenance {
        kind: args.kind,
        fit_scope: args.fit_scope,
        eps_used: model.eps_used,
        source: src.path.display().to_string(),
        model: "whitening.json".into(),
    });
    let out_manifest = args.out.join("manifest.json");
    write_manifest(&manifest, &out_manifest)?;
    println!(
        "{} whitening fitted on {}x{} (fit scope {}), eps_used {:e}",
        args.kind, model.fit_dims.0, model.fit_dims.1, args.fit_scope, model.eps_used
    );
    println!("wrote {} and {}", out_manifest.display(), model_path.display());
    Ok(())
}

fn dataset_points(data: &Dataset) -> Result<EmbeddingMatrix> {
    Ok(match data {
        Dataset::Classification(set) => set.embeddings.clone(),
        Dataset::Sts(pairs) => pairs.left.stack(&pairs.right)?,
    })
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Classification => "classification",
        Task::Sts => "sts",
    }
}

pub fn isoscore_cmd(args: &IsoscoreArgs) -> Result<()> {
    struct Row {
        stage: &'static str,
        dataset: String,
        model: String,
        task: String,
        whitening: (String, String),
        report: whitekit::IsoScoreReport,
    }
    let mut rows = Vec::new();
    if let Some(file) = &args.embeddings {
        let is_csv = file.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let x = if is_csv { import_csv(file, false)?.0 } else { load_embeddings(file)? };
        let stem = file.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        rows.push(Row {
            stage: "raw",
            dataset: stem.clone(),
            model: args.label.clone().unwrap_or(stem),
            task: "embeddings".into(),
            whitening: ("none".into(), "-".into()),
            report: isoscore(&x)?,
        });
    }
    let manifests = args.manifest.iter().map(|m| ("raw", m)).chain(args.compare.iter().map(|m| ("whitened", m)));
    for (stage, m) in manifests {
        let l = load(m)?;
        rows.push(Row {
            stage,
            dataset: l.manifest.name.clone(),
            model: args.label.clone().unwrap_or_else(|| l.manifest.model_name.clone()),
            task: task_name(l.manifest.task).into(),
            whitening: whitening_label(&l.manifest),
            report: isoscore(&dataset_points(&l.data)?)?,
        });
    }
    if args.compare.is_some() || args.csv {
        let mut text = String::from("label,stage,isoscore,n_points,n_dims\n");
        for r in &rows {
            writeln!(text, "{},{},{},{},{}", r.model, r.stage, r.report.score, r.report.n_points, r.report.n_dims)?;
        }
        print!("{text}");
    } else {
        for r in &rows {
            println!(
                "isoscore {:.4} (n_points {}, n_dims {})",
                r.report.score, r.report.n_points, r.report.n_dims
            );
        }
    }
    let ts = now();
    let records: Vec<RunRecord> = rows
        .iter()
        .map(|r| RunRecord {
            dataset: r.dataset.clone(),
            model_name: r.model.clone(),
            task: r.task.clone(),
            whitening: r.whitening.0.clone(),
            fit_scope: r.whitening.1.clone(),
            metric: Metric::Isoscore,
            value: r.report.score,
            config: json!({ "command": "isoscore", "defect": r.report.defect }),
            timestamp: ts,
            seed: 0,
        })
        .collect();
    record_run(args.out.as_deref(), &records, None)
}

fn whitening_config(flags: &WhiteningFlags) -> Option<WhiteningConfig> {
    flags.kind.map(|kind| WhiteningConfig {
        kind,
        eps_relative: flags.eps,
        fit_scope: flags.fit_scope,
    })
}

pub fn eval_cls(args: &EvalClsArgs) -> Result<()> {
    let src = load(&args.manifest)?;
    let Dataset::Classification(set) = &src.data else {
        return Err(usage(format!("{} is not a classification dataset", src.path.display())));
    };
    let cfg = args.probe.config();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let protocol = args.probe.protocol;
    let raw = evaluate_classification(set, &cfg, protocol)?;

    let whitened = if let Some(wcfg) = whitening_config(&args.whitening) {
        let r = evaluate_classification_whitened(set, &cfg, protocol, &wcfg)?;
        Some((wcfg.kind.to_string(), wcfg.fit_scope.to_string(), r))
    } else if let Some(p) = &args.whitened_manifest {
        let w = load(p)?;
        let Dataset::Classification(wset) = &w.data else {
            return Err(usage(format!("{} is not a classification dataset", w.path.display())));
        };
        let (kind, scope) = whitening_label(&w.manifest);
        Some((kind, scope, evaluate_classification(wset, &cfg, protocol)?))
    } else {
        None
    };

    let m = &src.manifest;
    let table = comparison_table(
        &m.model_name,
        &m.name,
        raw.accuracy,
        whitened.as_ref().map(|(k, _, r)| (k.as_str(), r.accuracy)),
    );
    emit(&table, args.csv)?;

    let ts = now();
    let record = |whitening: &str, scope: &str, r: &whitekit::ProbeResult| -> Result<RunRecord> {
        Ok(RunRecord {
            dataset: m.name.clone(),
            model_name: m.model_name.clone(),
            task: "classification".into(),
            whitening: whitening.into(),
            fit_scope: scope.into(),
            metric: Metric::Accuracy,
            value: r.accuracy,
            config: json!({
                "command": "eval-cls",
                "probe": serde_json::to_value(&r.config_echo)?,
                "protocol": r.protocol.to_string(),
                "chosen_l2": r.chosen_l2,
                "per_fold_accuracies": r.per_fold_accuracies,
                "whitening": serde_json::to_value(r.whitening_applied)?,
            }),
            timestamp: ts,
            seed: cfg.seed,
        })
    };
    let mut records = vec![record("none", "-", &raw)?];
    if let Some((kind, scope, r)) = &whitened {
        records.push(record(kind, scope, r)?);
    }
    record_run(args.out.as_deref(), &records, Some((&table, &format!("{}.accuracy", m.name))))
}

pub fn eval_sts(args: &EvalStsArgs) -> Result<()> {
    let src = load(&args.manifest)?;
    let Dataset::Sts(pairs) = &src.data else {
        return Err(usage(format!("{} is not an STS dataset", src.path.display())));
    };
    let raw = evaluate_sts(pairs, None)?;
    let whitened = if let Some(wcfg) = whitening_config(&args.whitening) {
        if wcfg.fit_scope == FitScope::TrainOnly {
            return Err(usage("STS datasets have no train split; use --fit-scope all"));
        }
        let model = fit_pair_whitening(pairs, &wcfg)?;
        let r = evaluate_sts(pairs, Some((&model, wcfg.fit_scope)))?;
        Some((wcfg.kind.to_string(), wcfg.fit_scope.to_string(), r.spearman_x100))
    } else if let Some(p) = &args.whitened_manifest {
        let w = load(p)?;
        let Dataset::Sts(wpairs) = &w.data else {
            return Err(usage(format!("{} is not an STS dataset", w.path.display())));
        };
        let (kind, scope) = whitening_label(&w.manifest);
        Some((kind, scope, evaluate_sts(wpairs, None)?.spearman_x100))
    } else {
        None
    };

    let m = &src.manifest;
    let table = comparison_table(
        &m.model_name,
        &m.name,
        raw.spearman_x100,
        whitened.as_ref().map(|(k, _, v)| (k.as_str(), *v)),
    );
    emit(&table, args.csv)?;

    let ts = now();
    let record = |whitening: &str, scope: &str, value: f64| RunRecord {
        dataset: m.name.clone(),
        model_name: m.model_name.clone(),
        task: "sts".into(),
        whitening: whitening.into(),
        fit_scope: scope.into(),
        metric: Metric::SpearmanX100,
        value,
        config: json!({ "command": "eval-sts", "n_pairs": raw.n_pairs, "eps": args.whitening.eps }),
        timestamp: ts,
        seed: args.seed,
    };
    let mut records = vec![record("none", "-", raw.spearman_x100)];
    if let Some((kind, scope, v)) = &whitened {
        records.push(record(kind, scope, *v));
    }
    record_run(args.out.as_deref(), &records, Some((&table, &format!("{}.spearman_x100", m.name))))
}

pub fn project(args: &ProjectArgs) -> Result<()> {
    let src = load(&args.manifest)?;
    let d = src.manifest.dim;
    if args.k == 0 || args.k > d {
        return Err(usage(format!("--k must lie in 1..={d}, got {}", args.k)));
    }
    let (x, labels) = match &src.data {
        Dataset::Classification(set) => (set.embeddings.clone(), Some(set.labels.clone())),
        Dataset::Sts(_) => (dataset_points(&src.data)?, None),
    };
    let p = pca_project(&x, args.k)?;
    let mut text = String::new();
    let mut header: Vec<String> = (1..=args.k).map(|i| format!("pc{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(text, "{}", header.join(","))?;
    for (i, row) in p.view().rows().into_iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = &labels {
            cells.push(l[i].to_string());
        }
        writeln!(text, "{}", cells.join(","))?;
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} rows x {} components to {}", p.nrows(), args.k, args.out.display());
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let task = match args.task {
        TaskArg::Classification => Task::Classification,
        TaskArg::Sts => Task::Sts,
    };
    let spec = SynthSpec {
        task,
        n: args.n,
        d: args.d,
        n_classes: args.classes,
        separation: args.separation,
        anisotropy: args.anisotropy,
        seed: args.seed,
        name: args.name.clone().unwrap_or_else(|| format!("synth-{}", task_name(task))),
        model_name: args.model_name.clone(),
    };
    let manifest = synth_fixture(&spec, &args.out).map_err(|e| match e {
        whitekit::Error::InvalidInput(msg) => usage(msg),
        other => other.into(),
    })?;
    println!(
        "wrote {} ({} x {}) to {}",
        manifest.name,
        manifest.count,
        manifest.dim,
        args.out.join("manifest.json").display()
    );
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let metric = match args.metric {
        MetricArg::Accuracy => Metric::Accuracy,
        MetricArg::SpearmanX100 => Metric::SpearmanX100,
        MetricArg::Isoscore => Metric::Isoscore,
    };
    let records = read_records(&args.runs)?;
    let table = if args.ranges {
        whitening_range_table(&records, metric)
    } else {
        summary_table(&records, metric)
    };
    if table.rows.is_empty() {
        bail!("no {} records in {}", metric.as_str(), args.runs.display());
    }
    emit(&table, args.csv)
}
