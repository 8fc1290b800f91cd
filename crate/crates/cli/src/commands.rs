use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use qsat_core::bundle::ModelBundle;
use qsat_core::conformal::CalibrationProtocol;
use qsat_core::data::{parse_csv, to_csv, Dataset, ScoreSet};
use qsat_core::eval::report::{fingerprint, plot_csv};
use qsat_core::learners::{ModelKind, ParamMap};
use qsat_core::service::ServiceState;
use qsat_core::synth::{synthesize_dataset, GeneratorConfig, LatentScale};
use qsat_core::training::{evaluate_bundle, train, TrainConfig, TrainError};
use qsat_server::AppState;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::{Calibration, EvaluateArgs, Latent, PredictArgs, ServeArgs, SynthArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid inputs, unusable paths.
    Usage(String),
    /// Training or evaluation itself failed.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// `path` with `suffix` appended to its file name.
fn beside(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `path` with a `.qsat.json` or `.json` extension replaced by `suffix`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let name = path.to_string_lossy();
    let stem = name
        .strip_suffix(".qsat.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name);
    PathBuf::from(format!("{stem}{suffix}"))
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

/// Records the resolved configuration of a run as `<output>.config.json`.
fn echo_config(output: &Path, command: &str, config: Value) -> Result<()> {
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    write(&beside(output, ".config.json"), &pretty(&doc))
}

fn load_bundle(path: &Path) -> Result<ModelBundle> {
    ModelBundle::load(path).map_err(|e| usage(format!("cannot load bundle {}: {e}", path.display())))
}

fn load_dataset(path: &Path, scores: &ScoreSet) -> Result<(Dataset, String)> {
    let text = read(path)?;
    let ds = parse_csv(&text, scores).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok((ds, fingerprint(text.as_bytes())))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = GeneratorConfig::calibrated(args.per_design, args.signal, args.flip, args.seed);
    cfg.latent = match args.latent {
        Latent::Design => LatentScale::Design,
        Latent::Mixture => LatentScale::Mixture,
    };
    let ds = synthesize_dataset(&cfg).map_err(usage)?;
    write(&args.out, to_csv(&ds).as_bytes())?;
    write(&beside(&args.out, ".generator.json"), &pretty(&cfg))?;
    echo_config(&args.out, "synth", serde_json::to_value(args).expect("serializable"))?;
    tracing::info!(rows = ds.len(), out = %args.out.display(), "corpus written");
    Ok(())
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    if let Some(p) = &args.grids {
        let overrides: BTreeMap<ModelKind, ParamMap> =
            serde_json::from_str(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        for (kind, axes) in overrides {
            cfg.grids.insert(kind, qsat_core::eval::Grid(axes));
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(k) = args.folds {
        cfg.folds = k;
    }
    if let Some(f) = args.test_fraction {
        cfg.test_fraction = f;
    }
    if let Some(c) = args.calibration {
        cfg.calibration = match c {
            Calibration::TestSplit => CalibrationProtocol::TestSplit,
            Calibration::Dedicated => CalibrationProtocol::Dedicated,
        };
    }
    if args.no_balance {
        cfg.balance = false;
    }
    if args.include_lasso {
        cfg.include_lasso = true;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let cfg = train_config(args)?;
    let (ds, fp) = load_dataset(&args.data, &cfg.score_set)?;
    tracing::info!(rows = ds.len(), seed = cfg.seed, "training");
    let out = train(&ds, &fp, &cfg, &now()).map_err(|e| match e {
        TrainError::Data(_) | TrainError::Preprocess(_) | TrainError::Config(_) => usage(e),
        e => CliError::Failure(e.to_string()),
    })?;
    let bundle = out.bundle;
    for row in &bundle.report.rows {
        match (&row.error, row.test_r2) {
            (Some(err), _) => tracing::warn!(model = %row.kind, error = %err, "learner failed"),
            (None, Some(r2)) => tracing::info!(model = %row.kind, test_r2 = r2, "fitted"),
            _ => {}
        }
    }
    bundle.save(&args.out).map_err(usage)?;
    write(&sibling(&args.out, ".report.json"), bundle.report.to_json().as_bytes())?;
    write(&sibling(&args.out, ".report.csv"), bundle.report.to_csv().as_bytes())?;
    write(&sibling(&args.out, ".plot.csv"), plot_csv(&out.plot).as_bytes())?;
    echo_config(
        &args.out,
        "train",
        json!({
            "data": args.data,
            "out": args.out,
            "dataset_fingerprint": fp,
            "train": cfg,
        }),
    )?;
    tracing::info!(out = %args.out.display(), version = %bundle.model_version(), "bundle saved");
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let (ds, fp) = load_dataset(&args.data, &bundle.metadata.score_set)?;
    let eval = evaluate_bundle(&bundle, &ds, &fp, &now()).map_err(|e| CliError::Failure(e.to_string()))?;
    if eval.leakage_warning {
        tracing::warn!("the evaluation data is the training data; these are not held-out scores");
    }
    write(&args.out, &pretty(&eval))?;
    write(&sibling(&args.out, ".csv"), eval.report.to_csv().as_bytes())?;
    echo_config(&args.out, "evaluate", serde_json::to_value(args).expect("serializable"))?;
    Ok(())
}

/// Builds the request body from `--design`, `--score` and `--alpha` flags.
fn request_from_flags(args: &PredictArgs) -> Result<Value> {
    let mut scores = Map::new();
    for pair in &args.scores {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("--score expects KEY=VALUE, got '{pair}'")))?;
        let value = match value.trim().parse::<i64>() {
            Ok(v) => json!(v),
            Err(_) => json!(value.trim()),
        };
        if scores.insert(key.trim().to_string(), value).is_some() {
            return Err(usage(format!("--score {key} given more than once")));
        }
    }
    let mut body = Map::new();
    if let Some(d) = &args.design {
        body.insert("design".into(), json!(d));
    }
    body.insert("scores".into(), Value::Object(scores));
    if let Some(a) = args.alpha {
        body.insert("alpha".into(), json!(a));
    }
    Ok(Value::Object(body))
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let mut body = match &args.input {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => request_from_flags(args)?,
    };
    if let (Some(a), Some(obj)) = (args.alpha, body.as_object_mut()) {
        obj.insert("alpha".into(), json!(a));
    }
    let state = ServiceState::new(load_bundle(&args.bundle)?);
    let req = state.parse(&body).map_err(|e| usage(format!("invalid request: {e}")))?;
    let resp = state
        .predict(&req)
        .map_err(|e| CliError::Failure(format!("prediction failed: {e}")))?;
    let text = resp.to_json();
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
        .map_err(|e| CliError::Failure(e.to_string()))?;
    if let Some(out) = &args.out {
        write(out, text.as_bytes())?;
        echo_config(out, "predict", json!({"bundle": args.bundle, "request": body, "out": out}))?;
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let app = AppState::new(bundle);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Failure(e.to_string()))?;
    rt.block_on(async {
        let addr = format!("{}:{}", args.bind, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| usage(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(usage)?;
        #[cfg(unix)]
        qsat_server::spawn_reload_on_sighup(app.clone(), args.bundle.clone()).map_err(usage)?;
        tracing::info!(addr = %local, version = %app.snapshot().model_version, "serving");
        println!("listening on {local}");
        qsat_server::serve(listener, app, qsat_server::shutdown_signal())
            .await
            .map_err(|e| CliError::Failure(e.to_string()))
    })?;
    tracing::info!("stopped");
    Ok(())
}
