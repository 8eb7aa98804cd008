use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use fcbm_client::Client;
use fcbm_core::data::{
    annotate_dataset, generate_synthetic, load_concept_embeddings, load_dataset, save_dataset, Dataset,
    EmbeddingStorage, Preset, SyntheticSpec,
};
use fcbm_core::evaluation::{
    activation_distributions, evaluate, intervene, leakage_correlation, pareto_export, report_json,
    rmse_tier_analysis, EvalConfig, FaithfulnessReport,
};
use fcbm_core::model::{load_checkpoint, save_checkpoint, CbmModel};
use fcbm_core::training::{ablation_matrix, train, AblationCell, TrainConfig};
use fcbm_core::TOOL_VERSION;
use fcbm_server::AppState;

use crate::error::{CliError, CliResult, Stage};
use crate::{
    AblateArgs, AnnotateArgs, Command, Endpoint, EvalArgs, InterveneArgs, ParetoArgs, QueryArgs, ServeArgs,
    SynthArgs, TrainArgs, TrainOverrides,
};

pub const DEFAULT_SEED: u64 = 42;
pub const DATASET_MANIFEST: &str = "dataset.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAINLOG_FILE: &str = "trainlog.jsonl";

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Annotate(a) => annotate(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Intervene(a) => intervene_cmd(a),
        Command::Pareto(a) => pareto(a),
        Command::Serve(a) => serve(a),
        Command::Query(a) => query(a),
    }
}

/// Artifact body with the provenance fields every output carries.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    tool_version: &'static str,
    config_fingerprint: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

fn stamped<'a, T: Serialize>(fingerprint: &'a str, seed: u64, body: &'a T) -> Stamped<'a, T> {
    Stamped {
        tool_version: TOOL_VERSION,
        config_fingerprint: fingerprint,
        seed,
        body,
    }
}

fn write_text(path: &Path, text: &str, stage: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).stage(stage)?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::data(stage, format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T, stage: &str) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).stage(stage)?;
    text.push('\n');
    write_text(path, &text, stage)
}

fn read_json_object(path: &Path, stage: &str) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(stage, format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::data(stage, format!("{} must hold a JSON object", path.display()))),
        Err(e) => Err(CliError::data(stage, format!("{}: {e}", path.display()))),
    }
}

fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

fn announce(what: &str, config: &impl Serialize, seed: u64) {
    eprintln!(
        "resolved {what}: {}",
        serde_json::to_string(config).expect("config serialises")
    );
    eprintln!("seed: {seed}");
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    load_dataset(path).stage("load dataset")
}

fn load_model(path: &Path) -> CliResult<CbmModel> {
    load_checkpoint(path).stage("load checkpoint")
}

/// Preset base, then JSON fields, then flags.
pub fn resolve_synth_spec(
    spec: Option<&Path>,
    preset: Option<Preset>,
    seed: Option<u64>,
) -> CliResult<SyntheticSpec> {
    const STAGE: &str = "synth spec";
    let mut overlay = match spec {
        Some(p) => read_json_object(p, STAGE)?,
        None => Map::new(),
    };
    let json_preset = match overlay.remove("preset") {
        Some(v) => Some(serde_json::from_value::<Preset>(v).stage(STAGE)?),
        None => None,
    };
    let json_seed = match overlay.remove("seed") {
        Some(v) => Some(serde_json::from_value::<u64>(v).stage(STAGE)?),
        None => None,
    };
    let seed = seed.or(json_seed).unwrap_or(DEFAULT_SEED);
    let base = SyntheticSpec::preset(preset.or(json_preset).unwrap_or(Preset::Default), seed);
    let Value::Object(mut fields) = serde_json::to_value(&base).stage(STAGE)? else {
        unreachable!("spec serialises to an object")
    };
    for (key, value) in overlay {
        if !fields.contains_key(&key) {
            return Err(CliError::data(STAGE, format!("unknown field {key:?}")));
        }
        fields.insert(key, value);
    }
    let spec: SyntheticSpec = serde_json::from_value(Value::Object(fields)).stage(STAGE)?;
    spec.validate().stage(STAGE)?;
    Ok(spec)
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let spec = resolve_synth_spec(a.spec.as_deref(), a.preset, a.seed)?;
    let spec_json = serde_json::to_string(&spec).stage("synth spec")?;
    let fingerprint = short_hash(spec_json.as_bytes());
    announce("synthetic spec", &spec, spec.seed);
    let ds = generate_synthetic(&spec).stage("generate")?;
    std::fs::create_dir_all(&a.out).stage("write dataset")?;
    let storage = if a.inline {
        EmbeddingStorage::Inline
    } else {
        EmbeddingStorage::Binary
    };
    let manifest = a.out.join(DATASET_MANIFEST);
    save_dataset(&ds, &manifest, storage).stage("write dataset")?;
    write_json(&a.out.join("spec.json"), &stamped(&fingerprint, spec.seed, &spec), "write spec")?;
    eprintln!("wrote {} ({} samples)", manifest.display(), ds.samples.len());
    Ok(())
}

fn annotate(a: AnnotateArgs) -> CliResult<()> {
    let ds = load_data(&a.dataset)?;
    let concepts = load_concept_embeddings(&a.concept_embs).stage("load concept embeddings")?;
    let (out, warnings) = annotate_dataset(&ds, &concepts).stage("annotate")?;
    for w in &warnings {
        eprintln!("warning: concept {:?}: {}", w.concept, w.message);
    }
    save_dataset(&out, &a.out, EmbeddingStorage::Binary).stage("write dataset")?;
    eprintln!("wrote {} ({} concepts)", a.out.display(), out.k());
    Ok(())
}

/// Defaults, then the JSON file, then flags.
pub fn resolve_train_config(path: Option<&Path>, o: &TrainOverrides) -> CliResult<TrainConfig> {
    const STAGE: &str = "train config";
    let mut c = match path {
        Some(p) => serde_json::from_value(Value::Object(read_json_object(p, STAGE)?))
            .map_err(|e| CliError::data(STAGE, format!("{}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = o.regime {
        c.regime = v;
    }
    if let Some(v) = o.head {
        c.head = v;
    }
    if let Some(v) = o.leakage_loss {
        c.use_leakage_loss = v;
    }
    if let Some(v) = o.lambda {
        c.lambda = v;
    }
    if let Some(v) = o.lambda_leak {
        c.lambda_leak = v;
    }
    if let Some(v) = o.epochs {
        c.epochs = v;
    }
    if let Some(v) = o.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = o.lr {
        c.lr_init = v;
    }
    if let Some(v) = o.patience {
        c.patience = Some(v);
    }
    if o.no_patience {
        c.patience = None;
    }
    c.validate().stage(STAGE)?;
    Ok(c)
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let config = resolve_train_config(a.config.as_deref(), &a.overrides)?;
    announce("config", &config, config.seed);
    let ds = load_data(&a.dataset)?;
    let (model, log) = train(&ds, &config).stage("train")?;
    std::fs::create_dir_all(&a.out).stage("write checkpoint")?;
    save_checkpoint(&model, &a.out.join(CHECKPOINT_FILE)).stage("write checkpoint")?;
    write_text(&a.out.join(TRAINLOG_FILE), &log.to_jsonl(), "write training log")?;
    write_json(
        &a.out.join("config.json"),
        &stamped(&log.fingerprint, config.seed, &config),
        "write config",
    )?;
    if let Some(e) = log.epochs.last() {
        eprintln!(
            "trained {} epochs; last val accuracy {:.4}; wrote {}",
            log.epochs.len(),
            e.val_accuracy,
            a.out.join(CHECKPOINT_FILE).display()
        );
    }
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let model = load_model(&a.checkpoint)?;
    let ds = load_data(&a.dataset)?;
    let cfg = EvalConfig::default();
    announce("eval config", &cfg, model.seed);
    let report = evaluate(&model, &ds, a.split, &cfg).stage("evaluate")?;
    write_text(&a.out, &report_json(&report), "write report")?;
    if let Some(path) = &a.tiers {
        let tiers = rmse_tier_analysis(&report).stage("tier analysis")?;
        write_json(path, &stamped(&model.config_fingerprint, model.seed, &tiers), "write tiers")?;
    }
    if let Some(path) = &a.activations {
        let data = ds.split(a.split);
        let plots = (0..model.k())
            .map(|i| activation_distributions(&model, &data, i))
            .collect::<Result<Vec<_>, _>>()
            .stage("activation histograms")?;
        #[derive(Serialize)]
        struct Plots {
            plots: Vec<fcbm_core::evaluation::PlotDoc>,
        }
        write_json(
            path,
            &stamped(&model.config_fingerprint, model.seed, &Plots { plots }),
            "write activations",
        )?;
    }
    eprintln!(
        "{} split: accuracy {:.2}%, c-RMSE {:.4}, mean CTL {:.4}, mean ICL {:.4}",
        a.split, report.accuracy_pct, report.c_rmse, report.mean_ctl, report.mean_icl
    );
    Ok(())
}

#[derive(Serialize)]
struct CellSummary {
    label: String,
    runs: usize,
    mean_accuracy_pct: f64,
    mean_c_rmse: f64,
    mean_ctl: f64,
    mean_icl: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn report_file_name(label: &str, repeat: usize) -> String {
    format!("{}-r{repeat}.json", label.replace('+', "_"))
}

fn ablate(a: AblateArgs) -> CliResult<()> {
    let config = resolve_train_config(a.config.as_deref(), &a.overrides)?;
    announce("config", &config, config.seed);
    let ds = load_data(&a.dataset)?;
    let runs = ablation_matrix(&ds, &config, a.repeats, &EvalConfig::default()).stage("ablate")?;

    let reports_dir = a.out.join("reports");
    for run in &runs {
        write_text(
            &reports_dir.join(report_file_name(&run.label, run.repeat)),
            &report_json(&run.report),
            "write reports",
        )?;
    }
    let cells: Vec<CellSummary> = AblationCell::ALL
        .iter()
        .map(|cell| {
            let mine: Vec<&FaithfulnessReport> =
                runs.iter().filter(|r| r.cell == *cell).map(|r| &r.report).collect();
            CellSummary {
                label: cell.label(),
                runs: mine.len(),
                mean_accuracy_pct: mean(mine.iter().map(|r| r.accuracy_pct)),
                mean_c_rmse: mean(mine.iter().map(|r| r.c_rmse)),
                mean_ctl: mean(mine.iter().map(|r| r.mean_ctl)),
                mean_icl: mean(mine.iter().map(|r| r.mean_icl)),
            }
        })
        .collect();
    let ctl: Vec<f64> = runs.iter().map(|r| r.report.mean_ctl).collect();
    let icl: Vec<f64> = runs.iter().map(|r| r.report.mean_icl).collect();
    let correlation = leakage_correlation(&ctl, &icl).stage("ablate")?;

    #[derive(Serialize)]
    struct Summary<'a> {
        repeats: usize,
        cells: &'a [CellSummary],
        ctl_icl_correlation: &'a fcbm_core::evaluation::Correlation,
    }
    let base_fp = config.fingerprint();
    write_json(
        &a.out.join("summary.json"),
        &stamped(
            &base_fp,
            config.seed,
            &Summary {
                repeats: a.repeats,
                cells: &cells,
                ctl_icl_correlation: &correlation,
            },
        ),
        "write summary",
    )?;
    #[derive(Serialize)]
    struct Runs<'a> {
        runs: &'a [fcbm_core::training::AblationRun],
    }
    write_json(
        &a.out.join("runs.json"),
        &stamped(&base_fp, config.seed, &Runs { runs: &runs }),
        "write runs",
    )?;
    let labelled: Vec<(String, FaithfulnessReport)> = runs
        .iter()
        .map(|r| (format!("{}-r{}", r.label, r.repeat), r.report.clone()))
        .collect();
    let pareto = pareto_export(&labelled).stage("pareto")?;
    write_json(&a.out.join("pareto.json"), &stamped(&base_fp, config.seed, &pareto), "write pareto")?;
    for c in &cells {
        eprintln!(
            "{:<12} acc {:>6.2}%  c-RMSE {:.4}  CTL {:.4}  ICL {:.4}",
            c.label, c.mean_accuracy_pct, c.mean_c_rmse, c.mean_ctl, c.mean_icl
        );
    }
    Ok(())
}

fn intervene_cmd(a: InterveneArgs) -> CliResult<()> {
    let model = load_model(&a.checkpoint)?;
    let ds = load_data(&a.dataset)?;
    announce("intervention", &serde_json::json!({ "checkpoint": a.checkpoint }), model.seed);
    let curve = intervene(&model, &ds).stage("intervene")?;

    #[derive(Serialize)]
    struct Doc<'a> {
        #[serde(flatten)]
        curve: &'a fcbm_core::evaluation::InterventionCurve,
        plot: fcbm_core::evaluation::PlotDoc,
    }
    let doc = Doc {
        curve: &curve,
        plot: curve.plot(&model.concept_names),
    };
    write_json(&a.out, &stamped(&model.config_fingerprint, model.seed, &doc), "write curve")?;
    eprintln!(
        "accuracy {:.4} before intervention, {:.4} after all {} concepts",
        curve.accuracy[0],
        curve.accuracy[curve.accuracy.len() - 1],
        model.k()
    );
    Ok(())
}

fn pareto(a: ParetoArgs) -> CliResult<()> {
    const STAGE: &str = "pareto";
    let mut paths: Vec<PathBuf> = glob::glob(&a.reports)
        .stage(STAGE)?
        .collect::<Result<_, _>>()
        .stage(STAGE)?;
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::data(STAGE, format!("no reports match {:?}", a.reports)));
    }
    let mut reports = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::data(STAGE, format!("cannot read {}: {e}", p.display())))?;
        let report: FaithfulnessReport = serde_json::from_str(&text)
            .map_err(|e| CliError::data(STAGE, format!("{}: {e}", p.display())))?;
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        reports.push((label, report));
    }
    let doc = pareto_export(&reports).stage(STAGE)?;

    #[derive(Serialize)]
    struct Doc<'a> {
        tool_version: &'static str,
        config_fingerprints: Vec<&'a str>,
        #[serde(flatten)]
        body: &'a fcbm_core::evaluation::ParetoDoc,
    }
    let out = Doc {
        tool_version: TOOL_VERSION,
        config_fingerprints: reports.iter().map(|(_, r)| r.config_fingerprint.as_str()).collect(),
        body: &doc,
    };
    write_json(&a.out, &out, "write pareto")?;
    eprintln!(
        "{} reports, {} on the front",
        doc.points.len(),
        doc.points.iter().filter(|p| !p.dominated).count()
    );
    Ok(())
}

fn runtime(stage: &str) -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Runtime::new().stage(stage)
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    let model = load_model(&a.checkpoint)?;
    let ds = load_data(&a.dataset)?;
    announce(
        "server",
        &serde_json::json!({ "split": a.split, "bind": a.bind, "port": a.port }),
        model.seed,
    );
    let state = AppState::new(model, &ds, a.split, &EvalConfig::default()).stage("precompute")?;
    let addr = std::net::SocketAddr::new(a.bind, a.port);
    runtime("serve")?.block_on(async move {
        eprintln!("listening on http://{addr}");
        fcbm_server::serve(addr, Arc::new(state)).await.stage("serve")
    })
}

fn query(a: QueryArgs) -> CliResult<()> {
    const STAGE: &str = "query";
    let client = Client::new(a.url);
    let text = runtime(STAGE)?.block_on(async move {
        fn pretty<T: Serialize>(v: &T) -> CliResult<String> {
            serde_json::to_string_pretty(v).stage(STAGE)
        }
        match a.endpoint {
            Endpoint::Meta => pretty(&client.meta().await.stage(STAGE)?),
            Endpoint::Samples { split, offset, limit } => {
                pretty(&client.samples(split, offset, limit).await.stage(STAGE)?)
            }
            Endpoint::Sample { id } => pretty(&client.sample(&id).await.stage(STAGE)?),
            Endpoint::Predict { concepts } => pretty(&client.predict(&concepts).await.stage(STAGE)?),
            Endpoint::Curves { output } => pretty(&client.response_curves(output).await.stage(STAGE)?),
            Endpoint::Metrics => client.metrics_raw().await.stage(STAGE),
        }
    })?;
    println!("{}", text.trim_end());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_spec_layers_preset_json_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(&p, r#"{"preset": "noiseless", "seed": 7, "n_train": 40}"#).unwrap();
        let s = resolve_synth_spec(Some(&p), None, None).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.n_train, 40);
        assert_eq!(s.sigma_c, 0.0);
        let s = resolve_synth_spec(Some(&p), Some(Preset::Default), Some(9)).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.n_train, 40);
        assert!(s.sigma_c > 0.0);
        assert_eq!(resolve_synth_spec(None, None, None).unwrap().seed, DEFAULT_SEED);
    }

    #[test]
    fn synth_spec_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(&p, r#"{"n_trian": 40}"#).unwrap();
        let e = resolve_synth_spec(Some(&p), None, None).unwrap_err();
        assert!(e.message.contains("n_trian"), "{e}");
        assert_eq!(e.code, crate::EXIT_DATA);
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"epochs": 5, "seed": 3, "head": "linear"}"#).unwrap();
        let o = TrainOverrides {
            epochs: Some(7),
            no_patience: true,
            ..Default::default()
        };
        let c = resolve_train_config(Some(&p), &o).unwrap();
        assert_eq!(c.epochs, 7);
        assert_eq!(c.seed, 3);
        assert_eq!(c.head, fcbm_core::model::HeadKind::Linear);
        assert_eq!(c.patience, None);
        assert_eq!(resolve_train_config(None, &TrainOverrides::default()).unwrap().seed, DEFAULT_SEED);
    }

    #[test]
    fn config_typos_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"epoch": 5}"#).unwrap();
        let e = resolve_train_config(Some(&p), &TrainOverrides::default()).unwrap_err();
        assert_eq!(e.code, crate::EXIT_DATA);
        assert!(e.to_string().starts_with("train config:"));
    }
}
