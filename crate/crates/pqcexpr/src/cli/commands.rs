use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use pqcexpr::catalog_file::{default_catalog, load_catalog, Catalog, CatalogFileError};
use pqcexpr::dataset_file::{generate, read_dataset, DatasetFileError, Progress};
use pqcexpr::model_file::{read_model, write_model, ModelDocument, ModelFileError, FEATURE_NAMES};
use pqcexpr::pipeline::{explain, metrics_block, train_models, Explained, ModelKind, PipelineError};
use pqcexpr::report::{
    beeswarm_csv, correlation_csv, dependence_csv, histogram_csv, importance_csv, saturation_report,
};
use pqcexpr::run_config::{RunConfig, BUILTIN_CATALOG};
use pqcexpr::sampling::{default_threads, estimate_parallel, thread_pool};
use pqcexpr_core::dataset::{correlation_matrix, expressibility_histogram, ExpressibilityRecord, GridFilter};
use pqcexpr_core::expressibility::ExprError;
use pqcexpr_core::learn::GbtParams;
use pqcexpr_core::{decompose, gate_counts, instantiate, AngleSource, CircuitInstance, GateCounts, GateKind, GateOp};

use super::args::{Cli, Command, Common, Span};

pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_BAD_INPUT: u8 = 4;
pub const EXIT_INSUFFICIENT: u8 = 5;
pub const EXIT_CONFIG_MISMATCH: u8 = 6;

/// Largest local-accuracy residual accepted by `explain --check`.
const LOCAL_ACCURACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl From<CatalogFileError> for CliError {
    fn from(e: CatalogFileError) -> Self {
        let code = if matches!(e, CatalogFileError::Io { .. }) { EXIT_IO } else { EXIT_BAD_INPUT };
        CliError::new(code, e.to_string())
    }
}

impl From<DatasetFileError> for CliError {
    fn from(e: DatasetFileError) -> Self {
        let code = match e {
            DatasetFileError::Io { .. } => EXIT_IO,
            DatasetFileError::ConfigMismatch { .. } => EXIT_CONFIG_MISMATCH,
            DatasetFileError::Grid(_) | DatasetFileError::Sampling(_) => EXIT_USAGE,
            DatasetFileError::Estimate { .. } => EXIT_FAILED,
            _ => EXIT_BAD_INPUT,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        let code = if matches!(e, ModelFileError::Io { .. }) { EXIT_IO } else { EXIT_BAD_INPUT };
        CliError::new(code, e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Insufficient(_) => EXIT_INSUFFICIENT,
            PipelineError::NotGbt(_) | PipelineError::Schema { .. } | PipelineError::SplitMismatch { .. } => {
                EXIT_BAD_INPUT
            }
            PipelineError::Learn(_) | PipelineError::Shap(_) => EXIT_FAILED,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        let code = if matches!(e, ExprError::Config(_)) { EXIT_USAGE } else { EXIT_FAILED };
        CliError::new(code, e.to_string())
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::new(EXIT_IO, format!("{}: {e}", path.display()))
}

type Result<T> = std::result::Result<T, CliError>;

fn single(span: Option<Span>, default: usize, flag: &str) -> Result<usize> {
    match span {
        None => Ok(default),
        Some(Span(a, b)) if a == b => Ok(a),
        Some(s) => Err(CliError::new(EXIT_USAGE, format!("--{flag} takes a single value here, got {s}"))),
    }
}

fn load(common: &Common) -> Result<Catalog> {
    Ok(match &common.catalog {
        Some(path) => load_catalog(path)?,
        None => default_catalog(),
    })
}

fn template(catalog: &Catalog, id: u32) -> Result<&pqcexpr_core::CircuitTemplate> {
    catalog.get(id).ok_or_else(|| {
        let ids: Vec<String> = catalog.templates().iter().map(|t| t.id.to_string()).collect();
        CliError::new(EXIT_USAGE, format!("unknown template id {id} (known: {})", ids.join(", ")))
    })
}

fn run_config(common: &Common, command: &str, qubits: Span, layers: Span) -> RunConfig {
    RunConfig {
        command: command.into(),
        catalog: common.catalog.as_ref().map_or(BUILTIN_CATALOG.into(), |p| p.display().to_string()),
        qubits: [qubits.0, qubits.1],
        layers: [layers.0, layers.1],
        max_layers: common.max_layers,
        param_cap: common.param_cap,
        samples: common.samples,
        bins: common.bins,
        reps: common.reps,
        seed: common.seed,
        threads: common.threads.unwrap_or_else(default_threads),
        test_fraction: common.test_fraction,
        ..RunConfig::default()
    }
}

fn write_output(path: &Path, run: &RunConfig, body: &str) -> Result<()> {
    let text = format!("{}{body}", run.header());
    pqcexpr::atomic::write_atomic(path, &text).map_err(io_error(path))
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// Reads a dataset and derives the run configuration of a downstream step
/// from the one recorded in its header.
fn read_input(common: &Common, command: &str, path: &Path) -> Result<(Vec<ExpressibilityRecord>, RunConfig)> {
    let file = read_dataset(path)?;
    let base = file.config.clone().unwrap_or_else(|| run_config(common, command, Span(0, 0), Span(0, 0)));
    let run = RunConfig {
        command: command.into(),
        seed: common.seed,
        threads: common.threads.unwrap_or_else(default_threads),
        test_fraction: common.test_fraction,
        inputs: vec![path.display().to_string()],
        output: String::new(),
        ..base
    };
    Ok((file.records(), run))
}

pub fn run(cli: Cli, stdout: &mut dyn io::Write) -> Result<()> {
    let common = &cli.common;
    if common.threads == Some(0) {
        return Err(CliError::new(EXIT_USAGE, "--threads must be at least 1"));
    }
    if !(common.test_fraction > 0.0 && common.test_fraction < 1.0) {
        return Err(CliError::new(EXIT_USAGE, "--test-fraction must lie strictly between 0 and 1"));
    }
    let mut text = String::new();
    match &cli.command {
        Command::Catalog { list, aggregate, template: id } => {
            text = catalog_cmd(common, *list, *aggregate, *id)?;
        }
        Command::Decompose { template: id } => {
            let catalog = load(common)?;
            let n = single(common.qubits, 4, "qubits")?;
            let l = single(common.layers, 1, "layers")?;
            let instance = instantiate(template(&catalog, *id)?, n, l)
                .map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))?;
            let split = decompose(&instance);
            writeln!(text, "# template {id}, {n} qubits, {l} layers: {} gates", instance.gates().len()).unwrap();
            instance.gates().iter().for_each(|g| writeln!(text, "{}", describe(g)).unwrap());
            writeln!(text, "# decomposed: {} gates", split.gates().len()).unwrap();
            split.gates().iter().for_each(|g| writeln!(text, "{}", describe(g)).unwrap());
        }
        Command::Expr { template: id, probe, json } => {
            text = expr_cmd(common, *id, *probe, *json)?;
        }
        Command::Dataset => {
            let qubits = common.qubits.unwrap_or(Span(2, 18));
            let layers = common.layers.unwrap_or(Span(1, 5));
            let mut run = run_config(common, "dataset", qubits, layers);
            let path = common.out.clone().unwrap_or_else(|| PathBuf::from("dataset.csv"));
            run.output = path.display().to_string();
            let catalog = load(common)?;
            let pool = thread_pool(run.threads).map_err(|e| CliError::new(EXIT_FAILED, e.to_string()))?;
            let mut stderr = io::stderr();
            let report = |p: &Progress| {
                let tag = if p.reused { " (reused)" } else { "" };
                let _ = writeln!(
                    stderr,
                    "[{}/{}] template {} n={} L={} kl={:.6}{tag}",
                    p.done, p.total, p.point.template_id, p.point.n_qubits, p.point.n_layers, p.kl_mean
                );
            };
            let summary = pool.install(|| generate(&catalog, &run, &path, common.resume, report))?;
            writeln!(
                text,
                "records={}\ncomputed={}\nreused={}\noutput={}",
                summary.records.len(),
                summary.computed,
                summary.reused,
                path.display()
            )
            .unwrap();
        }
        Command::Train { data, gbt, folds, lambdas } => {
            let (records, mut run) = read_input(common, "train", data)?;
            run.gbt = GbtParams {
                n_rounds: gbt.rounds,
                learning_rate: gbt.learning_rate,
                max_leaves: gbt.max_leaves,
                min_samples_leaf: gbt.min_samples_leaf,
            };
            run.lasso_folds = *folds;
            run.lasso_grid = *lambdas;
            let dir = out_dir(common, "models");
            run.output = dir.display().to_string();
            let kinds = match common.model {
                Some(k) => vec![k],
                None => vec![ModelKind::Gbt, ModelKind::Lasso],
            };
            let docs = train_models(&records, &run, &kinds)?;
            let mut metrics = String::new();
            for doc in &docs {
                write_model(&dir.join(format!("{}.model", doc.model.name())), &run, doc)?;
                metrics.push_str(&metrics_block(doc));
            }
            write_output(&dir.join("metrics.txt"), &run, &metrics)?;
            text = metrics;
        }
        Command::Explain { data, model_file, subset, check } => {
            let (records, mut run) = read_input(common, "explain", data)?;
            let (_, doc) = read_model(model_file)?;
            let explained = explain(&records, &doc, *subset)?;
            run.inputs.push(model_file.display().to_string());
            let dir = out_dir(common, "shap");
            run.output = dir.display().to_string();
            write_shap_outputs(&dir, &run, &records, &doc, &explained)?;
            text.push_str(&importance_csv(&explained.summary));
            for (name, q) in saturation_report(&explained.summary) {
                if let Some(q) = q {
                    let [a, b, c, d] = q.means;
                    writeln!(text, "saturation_{name}={a},{b},{c},{d} flattening={}", q.is_flattening()).unwrap();
                }
            }
            writeln!(text, "explained={}", explained.rows.len()).unwrap();
            if *check {
                writeln!(text, "max_local_accuracy_residual={:e}", explained.max_residual).unwrap();
                if explained.max_residual > LOCAL_ACCURACY_TOLERANCE {
                    stdout.write_all(text.as_bytes()).map_err(io_error(Path::new("<stdout>")))?;
                    return Err(CliError::new(
                        EXIT_FAILED,
                        format!("local accuracy residual {:e} exceeds {LOCAL_ACCURACY_TOLERANCE:e}", explained.max_residual),
                    ));
                }
            }
        }
        Command::Report { data, model_file, bin_width, subset } => {
            if !(*bin_width > 0.0 && bin_width.is_finite()) {
                return Err(CliError::new(EXIT_USAGE, "--bin-width must be positive"));
            }
            let (records, mut run) = read_input(common, "report", data)?;
            run.inputs.extend(model_file.iter().map(|p| p.display().to_string()));
            let dir = out_dir(common, "report");
            run.output = dir.display().to_string();
            text = report_cmd(&dir, &run, &records, model_file.as_deref(), *bin_width, *subset)?;
        }
    }
    stdout.write_all(text.as_bytes()).map_err(io_error(Path::new("<stdout>")))
}

fn counts_row(label: &str, counts: &GateCounts, params: usize) -> String {
    let mut row = format!("{label:<16}");
    for k in GateKind::ALL {
        write!(row, "{:>6}", counts[k]).unwrap();
    }
    write!(row, "{params:>8}").unwrap();
    row
}

fn catalog_cmd(common: &Common, list: bool, aggregate: bool, id: Option<u32>) -> Result<String> {
    let catalog = load(common)?;
    let mut text = String::new();
    let chosen: Vec<_> = match id {
        Some(id) => vec![template(&catalog, id)?],
        None => catalog.templates().iter().collect(),
    };
    if list {
        for t in chosen {
            writeln!(text, "{:>3}  {}", t.id, t.description).unwrap();
        }
        return Ok(text);
    }
    let n = single(common.qubits, 4, "qubits")?;
    let l = single(common.layers, 1, "layers")?;
    let mut header = format!("{:<16}", "template");
    for k in GateKind::ALL {
        write!(header, "{:>6}", k.name()).unwrap();
    }
    writeln!(text, "# {n} qubits, {l} layers\n{header}{:>8}", "params").unwrap();
    let (mut before, mut after, mut params) = (GateCounts::default(), GateCounts::default(), 0);
    for t in chosen {
        let instance = instantiate(t, n, l).map_err(|e| CliError::new(EXIT_USAGE, format!("template {}: {e}", t.id)))?;
        let split = decompose(&instance);
        let (b, a) = (gate_counts(&instance), gate_counts(&split));
        if !aggregate {
            writeln!(text, "{}", counts_row(&format!("{} before", t.id), &b, instance.n_params())).unwrap();
            writeln!(text, "{}", counts_row(&format!("{} after", t.id), &a, split.n_params())).unwrap();
        }
        before += b;
        after += a;
        params += instance.n_params();
    }
    writeln!(text, "{}", counts_row("total before", &before, params)).unwrap();
    writeln!(text, "{}", counts_row("total after", &after, params)).unwrap();
    Ok(text)
}

fn describe(g: &GateOp) -> String {
    let wires = match g.control {
        Some(c) => format!("q{c}->q{}", g.target),
        None => format!("q{}", g.target),
    };
    match g.angle {
        AngleSource::Param { slot, scale: 1.0 } => format!("{} {wires} theta[{slot}]", g.kind),
        AngleSource::Param { slot, scale } => format!("{} {wires} {scale}*theta[{slot}]", g.kind),
        AngleSource::Fixed(a) => format!("{} {wires} {a}", g.kind),
        AngleSource::None => format!("{} {wires}", g.kind),
    }
}

fn expr_cmd(common: &Common, id: Option<u32>, probe: bool, json: bool) -> Result<String> {
    let run = run_config(common, "expr", Span(0, 0), Span(0, 0));
    let instance = if probe {
        CircuitInstance::empty(1).map_err(|e| CliError::new(EXIT_FAILED, e.to_string()))?
    } else {
        let catalog = load(common)?;
        let id = id.ok_or_else(|| CliError::new(EXIT_USAGE, "--template is required without --probe"))?;
        let n = single(common.qubits, 4, "qubits")?;
        let l = single(common.layers, 1, "layers")?;
        decompose(&instantiate(template(&catalog, id)?, n, l).map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))?)
    };
    let pool = thread_pool(run.threads).map_err(|e| CliError::new(EXIT_FAILED, e.to_string()))?;
    let estimate = pool.install(|| estimate_parallel(&instance, &run.sampling()))?;
    if json {
        let value = serde_json::json!({
            "template_id": if probe { None } else { id },
            "n_qubits": instance.n_qubits,
            "n_layers": instance.n_layers,
            "n_params": instance.n_params(),
            "estimate": estimate,
        });
        return Ok(serde_json::to_string_pretty(&value).expect("estimate serializes") + "\n");
    }
    let mut text = String::new();
    match id.filter(|_| !probe) {
        Some(id) => writeln!(text, "template={id}").unwrap(),
        None => writeln!(text, "template=probe").unwrap(),
    }
    writeln!(
        text,
        "n_qubits={}\nn_layers={}\nn_params={}\nS={}\nB={}\nR={}\nseed={}\nkl_mean={}\nkl_std={}",
        instance.n_qubits,
        instance.n_layers,
        instance.n_params(),
        run.samples,
        run.bins,
        run.reps,
        run.seed,
        estimate.mean_kl,
        estimate.std_kl
    )
    .unwrap();
    for (r, kl) in estimate.per_repetition.iter().enumerate() {
        writeln!(text, "kl_rep_{r}={kl}").unwrap();
    }
    Ok(text)
}

fn write_shap_outputs(
    dir: &Path,
    run: &RunConfig,
    records: &[ExpressibilityRecord],
    doc: &ModelDocument,
    explained: &Explained,
) -> Result<()> {
    let summary = &explained.summary;
    let mut values = String::from("row,template_id,n_qubits,n_layers,base_value");
    for f in FEATURE_NAMES {
        write!(values, ",phi_{f}").unwrap();
    }
    values.push_str(",prediction\n");
    for e in &explained.explanations {
        let row = e.instance.expect("bulk explanations carry their row");
        let r = &records[row];
        write!(values, "{row},{},{},{},{}", r.template_id, r.n_qubits, r.n_layers, e.base_value).unwrap();
        for p in &e.phi {
            write!(values, ",{p}").unwrap();
        }
        writeln!(values, ",{}", e.total()).unwrap();
    }
    write_output(&dir.join("shap_values.csv"), run, &values)?;
    write_output(&dir.join("shap_importance.csv"), run, &importance_csv(summary))?;
    write_output(&dir.join("shap_beeswarm.csv"), run, &beeswarm_csv(summary))?;
    for (j, f) in FEATURE_NAMES.iter().enumerate() {
        write_output(&dir.join(format!("shap_dependence_{f}.csv")), run, &dependence_csv(summary, &doc.scaling, j))?;
    }
    Ok(())
}

fn report_cmd(
    dir: &Path,
    run: &RunConfig,
    records: &[ExpressibilityRecord],
    model_file: Option<&Path>,
    bin_width: f64,
    subset: pqcexpr::pipeline::Subset,
) -> Result<String> {
    let mut text = String::new();
    match correlation_matrix(records) {
        Ok(m) => {
            write_output(&dir.join("correlation.csv"), run, &correlation_csv(&m))?;
            if let Some(r) = m.get(GateKind::Ry, GateKind::Frz) {
                writeln!(text, "pearson_ry_frz={r}").unwrap();
            }
        }
        Err(e) => return Err(CliError::new(EXIT_INSUFFICIENT, format!("insufficient data: {e}"))),
    }
    let variant = |param_cap| GridFilter {
        qubits: 0..=usize::MAX,
        layers: 1..=usize::MAX,
        max_layers: run.max_layers,
        param_cap,
    };
    let hist = expressibility_histogram(records, bin_width, &[variant(false), variant(true)]);
    write_output(&dir.join("expr_hist.csv"), run, &histogram_csv(&hist, &["layers_only", "param_cap"]))?;
    let zero = |k: usize| hist[k].counts.first().copied().unwrap_or(0);
    writeln!(text, "zero_bin_layers_only={}\nzero_bin_param_cap={}", zero(0), zero(1)).unwrap();
    if zero(0) > 0 {
        let change = 100.0 * (zero(1) as f64 - zero(0) as f64) / zero(0) as f64;
        writeln!(text, "zero_bin_change_percent={change:.1}").unwrap();
    }
    if let Some(path) = model_file {
        let (_, doc) = read_model(path)?;
        let explained = explain(records, &doc, subset)?;
        let table = importance_csv(&explained.summary);
        write_output(&dir.join("importance.csv"), run, &table)?;
        text.push_str(&table);
    }
    Ok(text)
}
