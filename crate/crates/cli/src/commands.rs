//! Subcommand implementations. Each returns the lines it wants printed; files
//! go to `--out` next to a manifest.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::Args;
use landscape_core::hessian::{
    gauss_newton_from_trace, gn_spectral_norm, layer_spectral_norms, layerwise_bound_with_norms,
    measure_constants,
};
use landscape_core::landscape::{
    averaged_curve_with, lemma2_bound, slope_fit, taylor_check_mlp, LossLedger, IDENTITY_TOL,
};
use landscape_core::nn::{self, init_params, MlpConfig, MlpParams};
use landscape_core::train::train;
use landscape_core::{BoundConstants, Dataset, TrainConfig};
use serde::{Serialize, Serializer};

use crate::error::{CliError, CliResult};
use crate::io::{encode_params, load_dataset, read_params, DataSpec};
use crate::output::{ensure_dir, Cell, Csv, DatasetRecord, Manifest};
use crate::verify::{run_suite, Hooks};

/// Relative slack when comparing consecutive members of the bound chain.
pub const BOUND_SLACK: f64 = 1e-9;
/// Absolute slack for the radius-zero loss-difference bound.
pub const LEMMA2_SLACK: f64 = 1e-12;

fn ser_display<T: std::fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn ser_display_opt<T: std::fmt::Display, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// idx:<images>,<labels> | table:<path>[,<classes>] | blobs:<m>,<n>,<K>,<spread>[,<seed>]
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    pub dataset: DataSpec,
    /// Keep only the first N objects.
    #[arg(long)]
    pub limit: Option<usize>,
}

impl DataArgs {
    fn load(&self, manifest: &mut Manifest) -> CliResult<Dataset> {
        let (d, fingerprint) = load_dataset(&self.dataset, self.limit)?;
        manifest.dataset = Some(DatasetRecord {
            spec: self.dataset.to_string(),
            objects: d.len(),
            fingerprint,
        });
        Ok(d)
    }
}

fn params_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("flags serialize")
}

fn load_matching_params(path: &PathBuf, dataset: &Dataset) -> CliResult<MlpParams> {
    let params = read_params(path)?;
    nn::check_dataset(&params, dataset).map_err(|e| {
        CliError::Data(format!(
            "{} does not fit dataset {}: {e}",
            path.display(),
            dataset.name()
        ))
    })?;
    Ok(params)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train without bias terms (required by bound-check).
    #[arg(long)]
    pub no_bias: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train_cmd(args: &TrainArgs) -> CliResult<Vec<String>> {
    let start = Instant::now();
    let mut manifest = Manifest::new("train", args.seed, params_json(args));
    let dataset = args.data.load(&mut manifest)?;
    let model = MlpConfig::new(
        dataset.input_dim(),
        args.hidden,
        args.layers,
        dataset.num_classes(),
        !args.no_bias,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let config = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (params, report) = train(model, &config, &dataset)?;

    let mut csv = Csv::with_preamble(
        &[
            format!("objects={}", dataset.len()),
            format!("parameters={}", model.param_count()),
        ],
        &["epoch", "loss"],
    );
    csv.row([Cell::from(0usize), Cell::from(report.initial_loss)]);
    for (e, &l) in report.epoch_losses.iter().enumerate() {
        csv.row([Cell::from(e + 1), Cell::from(l)]);
    }
    csv.comment(&format!("final_accuracy={}", crate::output::real(report.final_accuracy)));
    csv.comment(&format!("grad_norm={}", crate::output::real(report.grad_norm)));

    ensure_dir(&args.out)?;
    manifest.emit(&args.out, "params.bin", &encode_params(&params))?;
    manifest.emit(&args.out, "train_report.csv", csv.as_str().as_bytes())?;
    manifest.finish(&args.out, start.elapsed())?;
    Ok(vec![format!(
        "trained {} parameters on {} objects: loss {:.6} -> {:.6}, accuracy {:.4}",
        model.param_count(),
        dataset.len(),
        report.initial_loss,
        report.final_loss,
        report.final_accuracy
    )])
}

/// `k_min,k_max` for the log-log fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window(pub usize, pub usize);

impl FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or("expected <k_min>,<k_max>")?;
        let a = a.trim().parse().map_err(|_| format!("invalid k_min {a:?}"))?;
        let b = b.trim().parse().map_err(|_| format!("invalid k_max {b:?}"))?;
        if a == 0 || a >= b {
            return Err("need 1 <= k_min < k_max".into());
        }
        Ok(Window(a, b))
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvergeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Trained parameter file.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Smoothing factor of the moving average.
    #[arg(long, default_value_t = 0.99)]
    pub ema: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fit window `k_min,k_max`; defaults to `m/10,m-1`.
    #[arg(long)]
    #[serde(serialize_with = "ser_display_opt")]
    pub slope_window: Option<Window>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Every ledger invariant checked while a curve is built.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LedgerAudit {
    pub ledgers: usize,
    pub max_identity_residual: f64,
    pub identity_violations: usize,
    pub bound_violations: usize,
}

impl LedgerAudit {
    pub fn inspect(&mut self, ledger: &LossLedger, constants: &BoundConstants) {
        self.ledgers += 1;
        let r = ledger.identity_residual();
        self.max_identity_residual = self.max_identity_residual.max(r);
        if !(r <= IDENTITY_TOL) {
            self.identity_violations += 1;
        }
        for (i, &d) in ledger.diffs().iter().enumerate() {
            if !(d <= lemma2_bound(i + 1, constants, 0.0) + LEMMA2_SLACK) {
                self.bound_violations += 1;
            }
        }
    }
}

pub fn converge_cmd(args: &ConvergeArgs) -> CliResult<Vec<String>> {
    let start = Instant::now();
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&args.ema) {
        return Err(CliError::Usage("--ema must lie in [0, 1)".into()));
    }
    let mut manifest = Manifest::new("converge", args.seed, params_json(args));
    let dataset = args.data.load(&mut manifest)?;
    let params = load_matching_params(&args.params, &dataset)?;
    let m = dataset.len();
    if m < 2 {
        return Err(CliError::Data("convergence curves need at least two objects".into()));
    }
    let constants = measure_constants(&params, &dataset, &params)?;
    let losses = nn::per_object_losses(&params, &dataset)?;

    let mut audit = LedgerAudit::default();
    audit.inspect(&LossLedger::from_losses(losses.clone())?, &constants);
    let curve = averaged_curve_with(&losses, args.reps, args.ema, args.seed, |ledger| {
        audit.inspect(ledger, &constants);
        Ok(())
    })?;

    let window = args.slope_window.unwrap_or(Window((m / 10).max(1), m - 1));
    if window.1 > curve.len() {
        return Err(CliError::Usage(format!(
            "--slope-window {window} exceeds the curve length {}",
            curve.len()
        )));
    }
    let fit = slope_fit(&curve, window.0, window.1);

    let mut csv = Csv::with_preamble(
        &[
            format!("objects={m}"),
            format!("reps={}", args.reps),
            format!("m_loss={}", crate::output::real(constants.m_loss)),
        ],
        &["k", "mean_abs_diff", "ema", "lemma2_bound_R0"],
    );
    let mut row_violation = None;
    for i in 0..curve.len() {
        let k = curve.k[i];
        let bound = lemma2_bound(k, &constants, 0.0);
        if row_violation.is_none() && !(curve.mean_abs_diff[i] <= bound + LEMMA2_SLACK) {
            row_violation = Some(k);
        }
        csv.row([
            Cell::from(k),
            Cell::from(curve.mean_abs_diff[i]),
            Cell::from(curve.ema[i]),
            Cell::from(bound),
        ]);
    }
    let slope_line = match &fit {
        Ok(f) => format!(
            "slope={} intercept={} k_min={} k_max={} points={} floored={}",
            crate::output::real(f.slope),
            crate::output::real(f.intercept),
            f.k_min,
            f.k_max,
            f.points,
            f.floored
        ),
        Err(e) => format!("slope=NA k_min={} k_max={} reason={e}", window.0, window.1),
    };
    csv.comment(&slope_line);

    ensure_dir(&args.out)?;
    manifest.emit(&args.out, "converge.csv", csv.as_str().as_bytes())?;
    manifest.finish(&args.out, start.elapsed())?;

    let mut lines = vec![
        slope_line,
        format!(
            "ledgers={} max_identity_residual={:.3e} identity_violations={} bound_violations={}",
            audit.ledgers, audit.max_identity_residual, audit.identity_violations, audit.bound_violations
        ),
    ];
    if audit.identity_violations + audit.bound_violations > 0 || row_violation.is_some() {
        lines.push(format!("first violating curve row: {row_violation:?}"));
        return Err(CliError::Violation(lines.join("\n")));
    }
    if args.slope_window.is_some() {
        fit.map_err(|e| CliError::Usage(format!("--slope-window: {e}")))?;
    }
    Ok(lines)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundCheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Parameter file; omit to draw a random bias-free network.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Hidden width of the random network.
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Depth of the random network.
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    /// Initialization seed of the random network.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Check only the first N objects.
    #[arg(long)]
    pub objects: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// One object's spectral norm and its three upper bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub object: usize,
    pub spectral_norm: f64,
    pub layerwise: f64,
    pub theorem1: f64,
    pub lemma1: f64,
}

impl BoundRow {
    /// Which link of `‖H‖ ≤ layerwise ≤ theorem1 ≤ lemma1` fails, if any.
    pub fn violation(&self) -> Option<&'static str> {
        let le = |a: f64, b: f64| a <= b * (1.0 + BOUND_SLACK);
        if !le(self.spectral_norm, self.layerwise) {
            Some("spectral norm > layerwise bound")
        } else if !le(self.layerwise, self.theorem1) {
            Some("layerwise bound > theorem bound")
        } else if !le(self.theorem1, self.lemma1) {
            Some("theorem bound > elementwise bound")
        } else {
            None
        }
    }
}

/// Evaluates the bound chain for every object of `dataset`.
pub fn bound_rows(params: &MlpParams, dataset: &Dataset) -> CliResult<(BoundConstants, Vec<BoundRow>)> {
    if params.config().bias {
        return Err(CliError::Data(
            "the spectral-norm bounds are stated for networks without bias terms; \
             train with --no-bias"
                .into(),
        ));
    }
    nn::check_dataset(params, dataset)?;
    let constants = measure_constants(params, dataset, params)?;
    let norms = layer_spectral_norms(params)?;
    let (theorem1, lemma1) = (constants.theorem1(), constants.lemma1());
    let mut rows = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let trace = nn::forward_label(params, dataset.x(i), dataset.label(i))?;
        let gn = gauss_newton_from_trace(params, &trace)?;
        rows.push(BoundRow {
            object: i,
            spectral_norm: gn_spectral_norm(&gn)?,
            layerwise: layerwise_bound_with_norms(&norms, &trace)?,
            theorem1,
            lemma1,
        });
    }
    Ok((constants, rows))
}

pub fn bound_check_cmd(args: &BoundCheckArgs) -> CliResult<Vec<String>> {
    let start = Instant::now();
    let mut manifest = Manifest::new("bound-check", args.seed, params_json(args));
    let mut dataset = args.data.load(&mut manifest)?;
    if let Some(n) = args.objects {
        if n == 0 {
            return Err(CliError::Usage("--objects must be >= 1".into()));
        }
        if n < dataset.len() {
            dataset = dataset.prefix(n)?;
        }
    }
    let params = match &args.params {
        Some(path) => load_matching_params(path, &dataset)?,
        None => {
            let config = MlpConfig::new(dataset.input_dim(), args.hidden, args.layers, dataset.num_classes(), false)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            init_params(config, args.seed)?
        }
    };
    let (c, rows) = bound_rows(&params, &dataset)?;

    let real = crate::output::real;
    let mut csv = Csv::with_preamble(
        &[
            format!("m_w={}", real(c.m_w)),
            format!("m_x={}", real(c.m_x)),
            format!("m={}", real(c.m_elem)),
            format!("m_loss={}", real(c.m_loss)),
            format!("hidden={}", c.hidden_dim),
            format!("layers={}", c.num_layers),
        ],
        &["object", "gn_spectral_norm", "layerwise_bound", "theorem1_bound", "lemma1_bound"],
    );
    let mut violations = Vec::new();
    for r in &rows {
        csv.row([
            Cell::from(r.object),
            Cell::from(r.spectral_norm),
            Cell::from(r.layerwise),
            Cell::from(r.theorem1),
            Cell::from(r.lemma1),
        ]);
        if let Some(why) = r.violation() {
            violations.push((r, why));
        }
    }
    ensure_dir(&args.out)?;
    manifest.emit(&args.out, "bound_check.csv", csv.as_str().as_bytes())?;
    manifest.finish(&args.out, start.elapsed())?;

    let worst = rows.iter().map(|r| r.spectral_norm / r.layerwise.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let summary = format!(
        "objects={} violations={} max spectral/layerwise={:.6} theorem1={:.6e} lemma1={:.6e}",
        rows.len(),
        violations.len(),
        worst,
        c.theorem1(),
        c.lemma1()
    );
    if let Some((r, why)) = violations.first() {
        return Err(CliError::Violation(format!(
            "{summary}\nfirst violation at object {}: {why} ({:?})",
            r.object, r
        )));
    }
    Ok(vec![summary])
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TaylorArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub params: PathBuf,
    /// Comma-separated radii.
    #[arg(long, value_delimiter = ',', default_value = "1e-2,5e-3,2.5e-3")]
    pub radius: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub probes: usize,
    /// Prefix size; defaults to the whole dataset.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn taylor_cmd(args: &TaylorArgs) -> CliResult<Vec<String>> {
    let start = Instant::now();
    let mut manifest = Manifest::new("taylor", args.seed, params_json(args));
    let dataset = args.data.load(&mut manifest)?;
    let params = load_matching_params(&args.params, &dataset)?;
    let k = args.k.unwrap_or(dataset.len());
    if k == 0 || k > dataset.len() {
        return Err(CliError::Usage(format!("--k must lie in 1..={}", dataset.len())));
    }
    if args.probes == 0 {
        return Err(CliError::Usage("--probes must be >= 1".into()));
    }
    if args.radius.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(CliError::Usage("--radius values must be finite and >= 0".into()));
    }

    let mut csv = Csv::with_preamble(
        &[format!("k={k}"), format!("probes={}", args.probes)],
        &["radius", "probe", "true_loss", "model_loss", "abs_error", "grad_term"],
    );
    let mut lines = Vec::new();
    for &radius in &args.radius {
        let report = taylor_check_mlp(&params, &dataset, k, radius, args.probes, args.seed)?;
        for p in &report.probes {
            csv.row([
                Cell::from(radius),
                Cell::from(p.probe),
                Cell::from(p.true_loss),
                Cell::from(p.model_loss),
                Cell::from(p.abs_error),
                Cell::from(p.grad_term),
            ]);
        }
        lines.push(format!(
            "radius={radius:e} max_abs_model_error={:.6e} base_loss={:.6} grad_norm={:.6e}",
            report.max_abs_model_error, report.base_loss, report.grad_norm
        ));
    }
    ensure_dir(&args.out)?;
    manifest.emit(&args.out, "taylor.csv", csv.as_str().as_bytes())?;
    manifest.finish(&args.out, start.elapsed())?;
    Ok(lines)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repeat the suite for this many consecutive seeds.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

pub fn verify_cmd(args: &VerifyArgs, hooks: &Hooks) -> CliResult<Vec<String>> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be >= 1".into()));
    }
    let mut lines = Vec::new();
    let mut failed = 0;
    for seed in args.seed..args.seed + args.seeds {
        let summary = run_suite(seed, hooks);
        for c in &summary.checks {
            lines.push(format!("seed={seed} {c}"));
            if !c.passed() {
                failed += 1;
            }
        }
        lines.push(format!("seed={seed} elapsed={:.2}s", summary.elapsed.as_secs_f64()));
    }
    if failed > 0 {
        lines.push(format!("{failed} check(s) failed"));
        return Err(CliError::Violation(lines.join("\n")));
    }
    lines.push("all checks passed".into());
    Ok(lines)
}
