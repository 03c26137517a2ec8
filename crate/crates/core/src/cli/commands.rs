use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ConfigError, ExperimentConfig};
use crate::device_models::DeviceChain;
use crate::linalg_pipeline::{
    neumann_invert, neumann_invert_optical, MmaUnit, MmmMode, NeumannConfig, NeumannFidelity,
};
use crate::mimo_bench::{summarize, sweep, Inverter, MimoConfig, SweepConfig};
use crate::mvm_engine::{
    golden_mvm, max_code, stream_seed, EngineConfig, FidelityMode, MvmEngine, QuantizedMatrix,
    QuantizedVector, RowDiagnostic,
};
use crate::perf_model::{diff_rows, perf_table, BlockBudget, TPU_V4};
use crate::validation::{run_validation, ValidationOptions};
use crate::wdm_planner::{plan_mma_spectrum, plan_wdm, validate_plan, MaterialModel, PlannerConfig};
use crate::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest operand space the exhaustive MVM sweep will enumerate.
const EXHAUSTIVE_LIMIT: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Jsonl => "jsonl",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" | "json-lines" => Ok(Self::Jsonl),
            other => Err(format!("unknown format '{other}' (csv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Plan,
    Mvm,
    Invert,
    Mimo,
    Perf,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Plan => "plan",
            Self::Mvm => "mvm",
            Self::Invert => "invert",
            Self::Mimo => "mimo",
            Self::Perf => "perf",
            Self::Validate => "validate",
        }
    }
}

/// What a command produced. `ok` is false only when validation fails.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub ok: bool,
}

/// Destination for one command's data files.
#[derive(Debug, Clone)]
pub struct Output {
    pub dir: PathBuf,
    pub format: Format,
    pub seed: u64,
}

impl Output {
    fn header(&self) -> String {
        match self.format {
            Format::Csv => format!("# msiph {VERSION} seed={}\n", self.seed),
            Format::Jsonl => format!(
                "{}\n",
                json!({ "tool": "msiph", "version": VERSION, "seed": self.seed })
            ),
        }
    }

    /// One record per line. CSV columns follow the struct's field order.
    fn records<T: Serialize>(&self, stem: &str, rows: &[T]) -> Result<PathBuf> {
        let path = self.dir.join(format!("{stem}.{}", self.format.extension()));
        let mut text = self.header();
        let values: Vec<Value> = rows
            .iter()
            .map(|r| serde_json::to_value(r).expect("records serialize to JSON"))
            .collect();
        match self.format {
            Format::Jsonl => {
                for v in &values {
                    text.push_str(&v.to_string());
                    text.push('\n');
                }
            }
            Format::Csv => {
                if let Some(Value::Object(first)) = values.first() {
                    text.push_str(&first.keys().cloned().collect::<Vec<_>>().join(","));
                    text.push('\n');
                }
                for v in &values {
                    if let Value::Object(map) = v {
                        let cells: Vec<String> = map.values().map(csv_cell).collect();
                        text.push_str(&cells.join(","));
                        text.push('\n');
                    }
                }
            }
        }
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Free-form text behind the usual header, commented in CSV style.
    fn text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, format!("# msiph {VERSION} seed={}\n{body}", self.seed))?;
        Ok(path)
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Resolves the seed and format, records the config next to the outputs,
/// then runs the command.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let out = Output {
        dir: out_dir.to_path_buf(),
        format: cfg.get("run.format")?,
        seed: cfg.get("run.seed")?,
    };
    fs::create_dir_all(&out.dir)?;
    let resolved = out.text(&format!("{}.config", cmd.name()), &cfg.resolved())?;
    let mut outcome = match cmd {
        Command::Plan => cmd_plan(cfg, &out),
        Command::Mvm => cmd_mvm(cfg, &out),
        Command::Invert => cmd_invert(cfg, &out),
        Command::Mimo => cmd_mimo(cfg, &out),
        Command::Perf => cmd_perf(cfg, &out),
        Command::Validate => cmd_validate(cfg, &out),
    }?;
    outcome.files.insert(0, resolved);
    Ok(outcome)
}

fn planner_config(cfg: &ExperimentConfig, channels: usize) -> Result<PlannerConfig, ConfigError> {
    Ok(PlannerConfig {
        channels,
        lambda_max_nm: cfg.get("planner.lambda_max_nm")?,
        spacing_target_nm: cfg.get("planner.spacing_nm")?,
        q_mrm: cfg.get("planner.q_mrm")?,
    })
}

fn engine_config(cfg: &ExperimentConfig, channels: usize, seed: u64) -> Result<EngineConfig> {
    let plan = plan_wdm(&planner_config(cfg, channels)?, &MaterialModel::default())?;
    let mut e = EngineConfig::new(plan, DeviceChain::with_bits(cfg.get("engine.bits")?));
    e.clock_hz = cfg.get("engine.clock_hz")?;
    e.noise_scale = cfg.get("engine.noise_scale")?;
    e.crosstalk = cfg.get("engine.crosstalk")?;
    e.seed = seed;
    e.validate()?;
    Ok(e)
}

#[derive(Serialize)]
struct PlanRow {
    channel: usize,
    lambda_nm: f64,
    spacing_nm: f64,
    rtr_mode: u64,
    n_eff: f64,
    n_g: f64,
    mrm_mode: u64,
    mrm_radius_um: f64,
    fsr_bound_um: f64,
}

#[derive(Serialize)]
struct MmaRow {
    channel: usize,
    base_nm: f64,
    offset_nm: f64,
    base_mode: u64,
    offset_mode: u64,
}

pub fn cmd_plan(cfg: &ExperimentConfig, out: &Output) -> Result<Outcome> {
    let mat = MaterialModel::default();
    let plan = plan_wdm(&planner_config(cfg, cfg.get("planner.channels")?)?, &mat)?;
    let rows: Vec<PlanRow> = (0..plan.channels())
        .map(|j| PlanRow {
            channel: j,
            lambda_nm: plan.lambdas_nm[j],
            spacing_nm: plan.spacings_nm[j],
            rtr_mode: plan.rtr_modes[j],
            n_eff: plan.n_eff[j],
            n_g: plan.n_g[j],
            mrm_mode: plan.mrm_modes[j],
            mrm_radius_um: plan.mrm_radii_um[j],
            fsr_bound_um: plan.fsr_bounds_um[j],
        })
        .collect();
    let report = validate_plan(&plan);
    let mut files = vec![out.records("plan", &rows)?, out.text("plan.txt", &plan.to_text())?];
    let mut summary = vec![
        format!("{} carriers, RTR perimeter {:.2} um", plan.channels(), plan.rtr_perimeter_um),
        format!(
            "invariants {}",
            if report.is_ok() { "hold".to_string() } else { format!("violated: {:?}", report.violations) }
        ),
    ];
    if cfg.get::<bool>("planner.mma")? {
        let mma = plan_mma_spectrum(&plan, &mat)?;
        let rows: Vec<MmaRow> = (0..mma.channels())
            .map(|j| MmaRow {
                channel: j,
                base_nm: mma.base_lambdas_nm[j],
                offset_nm: mma.offset_lambdas_nm[j],
                base_mode: mma.base_modes[j],
                offset_mode: mma.offset_modes[j],
            })
            .collect();
        files.push(out.records("plan_mma", &rows)?);
        summary.push(format!(
            "MMA comb: perimeter {:.2} um, worst residual {:.2e} nm",
            mma.perimeter_um, mma.max_residual_nm
        ));
    }
    Ok(Outcome {
        files,
        summary,
        ok: true,
    })
}

#[derive(Serialize)]
struct MvmRow<'a> {
    trial: usize,
    #[serde(flatten)]
    diag: &'a RowDiagnostic,
}

#[derive(Serialize)]
struct MvmSummary {
    fidelity: String,
    channels: usize,
    bits: u32,
    cases: u64,
    rows: u64,
    exact_rows: u64,
    within_one_lsb: u64,
    max_abs_error_lsb: i64,
}

/// Operand file: M lines of matrix codes, then one line of vector codes.
fn read_operands(path: &str, bits: u32) -> Result<(QuantizedMatrix, QuantizedVector)> {
    let text = fs::read_to_string(path)?;
    let bad = |reason: String| ConfigError::InvalidValue {
        key: "mvm.operands".into(),
        value: path.into(),
        reason,
    };
    let lines: Vec<Vec<u32>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|e| bad(format!("'{t}': {e}"))))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let (y, a) = lines
        .split_last()
        .ok_or_else(|| bad("no operands".into()))?;
    let m = y.len();
    if a.len() != m || a.iter().any(|r| r.len() != m) {
        return Err(bad(format!("need {m} rows of {m} matrix codes before the vector")).into());
    }
    let a = QuantizedMatrix::new(m, m, a.concat(), 1.0, bits)?;
    Ok((a, QuantizedVector::new(y.clone(), 1.0, bits)?))
}

pub fn cmd_mvm(cfg: &ExperimentConfig, out: &Output) -> Result<Outcome> {
    let fidelity: FidelityMode = cfg.get("mvm.fidelity")?;
    let m: usize = cfg.get("planner.channels")?;
    let ecfg = engine_config(cfg, m, out.seed)?;
    let bits = ecfg.bits();
    let engine = match fidelity {
        FidelityMode::Ideal => MvmEngine::ideal(ecfg)?,
        _ => MvmEngine::new(ecfg)?,
    };
    let top = max_code(bits);
    let mut summary = MvmSummary {
        fidelity: fidelity.to_string(),
        channels: m,
        bits,
        cases: 0,
        rows: 0,
        exact_rows: 0,
        within_one_lsb: 0,
        max_abs_error_lsb: 0,
    };
    let mut tally = |diags: &[RowDiagnostic]| {
        summary.cases += 1;
        for d in diags {
            summary.rows += 1;
            summary.exact_rows += (d.error_lsb == 0) as u64;
            summary.within_one_lsb += (d.error_lsb.abs() <= 1) as u64;
            summary.max_abs_error_lsb = summary.max_abs_error_lsb.max(d.error_lsb.abs());
        }
    };

    let mut files = Vec::new();
    if cfg.get::<bool>("mvm.exhaustive")? {
        let words = (m * m + m) as u32;
        let space = (top as u64 + 1).checked_pow(words).filter(|&n| n <= EXHAUSTIVE_LIMIT);
        let space = space.ok_or_else(|| {
            cfg.invalid("mvm.exhaustive", format!("{m}x{m} at {bits} bits is too many cases"))
        })?;
        for packed in 0..space {
            let code = |k: u32| ((packed / (top as u64 + 1).pow(k)) % (top as u64 + 1)) as u32;
            let a = QuantizedMatrix::new(m, m, (0..(m * m) as u32).map(code).collect(), 1.0, bits)?;
            let y = QuantizedVector::new(((m * m) as u32..words).map(code).collect(), 1.0, bits)?;
            let (_, diags) = engine.run_mvm_op(fidelity, &a, &y, packed)?;
            tally(&diags);
        }
    } else {
        let operands: Vec<(QuantizedMatrix, QuantizedVector)> = match cfg.path("mvm.operands") {
            Some(path) => {
                let (a, y) = read_operands(path, bits)?;
                if a.rows != m {
                    return Err(cfg.invalid("mvm.operands", format!("engine has {m} channels")).into());
                }
                vec![(a, y)]
            }
            None => (0..cfg.get::<usize>("mvm.trials")?)
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(out.seed, t as u64, 0));
                    let a = (0..m * m).map(|_| rng.gen_range(0..=top)).collect();
                    let y = (0..m).map(|_| rng.gen_range(0..=top)).collect();
                    Ok((QuantizedMatrix::new(m, m, a, 1.0, bits)?, QuantizedVector::new(y, 1.0, bits)?))
                })
                .collect::<Result<_>>()?,
        };
        let mut rows = Vec::new();
        for (t, (a, y)) in operands.iter().enumerate() {
            let (_, diags) = engine.run_mvm_op(fidelity, a, y, t as u64)?;
            debug_assert_eq!(diags.len(), golden_mvm(a, y)?.len());
            tally(&diags);
            rows.push(diags);
        }
        let flat: Vec<MvmRow> = rows
            .iter()
            .enumerate()
            .flat_map(|(trial, d)| d.iter().map(move |diag| MvmRow { trial, diag }))
            .collect();
        files.push(out.records("mvm", &flat)?);
    }
    let rate = summary.within_one_lsb as f64 / summary.rows.max(1) as f64;
    let exact = summary.exact_rows as f64 / summary.rows.max(1) as f64;
    let lines = vec![format!(
        "{} {}x{} {}-bit: {} cases, {:.4}% rows exact, {:.4}% within 1 LSB",
        summary.fidelity,
        m,
        m,
        bits,
        summary.cases,
        100.0 * exact,
        100.0 * rate
    )];
    files.push(out.records("mvm_summary", &[summary])?);
    Ok(Outcome {
        files,
        summary: lines,
        ok: true,
    })
}

fn read_matrix(path: &str) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let bad = |reason: String| ConfigError::InvalidValue {
        key: "invert.matrix".into(),
        value: path.into(),
        reason,
    };
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| bad(format!("'{t}': {e}"))))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(bad("matrix must be square".into()).into());
    }
    Ok(DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()))
}

/// Real Gram matrix HᵀH of a Gaussian N×M channel.
fn random_gram(m: usize, antennas: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0, 1));
    let h = DMatrix::from_fn(antennas, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    h.transpose() * h
}

#[derive(Serialize)]
struct Entry {
    row: usize,
    col: usize,
    value: f64,
    exact: f64,
}

pub fn cmd_invert(cfg: &ExperimentConfig, out: &Output) -> Result<Outcome> {
    let fidelity: NeumannFidelity = cfg.get("invert.fidelity")?;
    let z = match cfg.path("invert.matrix") {
        Some(p) => read_matrix(p)?,
        None => {
            let (m, n) = (cfg.get("invert.m")?, cfg.get("invert.antennas")?);
            if n < m {
                return Err(cfg.invalid("invert.antennas", "need at least invert.m antennas").into());
            }
            random_gram(m, n, out.seed)
        }
    };
    let ncfg = NeumannConfig {
        k_max: cfg.get("invert.k_max")?,
        requantize: cfg.get("invert.requantize")?,
        mmm_mode: cfg.get::<MmmMode>("invert.schedule")?,
        fidelity,
        stream: out.seed,
    };
    let run = match fidelity {
        NeumannFidelity::Float => neumann_invert(&ncfg, &z)?,
        NeumannFidelity::Optical(_) => {
            let engine = MvmEngine::new(engine_config(cfg, z.nrows(), out.seed)?)?;
            let mma = MmaUnit::new(&engine, &MaterialModel::default())?;
            neumann_invert_optical(&ncfg, &z, &engine, &mma)?
        }
    };
    let exact = z.clone().try_inverse();
    let y = run.last();
    let entries: Vec<Entry> = (0..z.nrows())
        .flat_map(|i| (0..z.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| Entry {
            row: i,
            col: j,
            value: y[(i, j)],
            exact: exact.as_ref().map_or(f64::NAN, |e| e[(i, j)]),
        })
        .collect();
    let files = vec![out.records("invert", &run.records)?, out.records("invert_matrix", &entries)?];
    let mut summary = vec![format!(
        "{}x{} {} Neumann, k={}: residual {:.3e}, {} cycles",
        z.nrows(),
        z.ncols(),
        fidelity,
        ncfg.k_max,
        run.residuals.last().copied().unwrap_or(f64::NAN),
        run.cycles
    )];
    if let Some(k) = run.diverged_at {
        summary.push(format!("residual grew for {} steps ending at k={k}", crate::linalg_pipeline::neumann::DIVERGENCE_RUN));
    }
    Ok(Outcome {
        files,
        summary,
        ok: true,
    })
}

pub fn cmd_mimo(cfg: &ExperimentConfig, out: &Output) -> Result<Outcome> {
    let base = MimoConfig {
        antennas: cfg.get("mimo.antennas")?,
        users: cfg.get("mimo.users")?,
        qam: cfg.get("mimo.qam")?,
        snr_db: 0.0,
        trials: cfg.get("mimo.trials")?,
        seed: out.seed,
    };
    let ks: Vec<usize> = cfg.list("mimo.ks")?;
    let fidelities: Vec<NeumannFidelity> = cfg.list("mimo.fidelities")?;
    let mut inverters = vec![Inverter::Exact];
    for &fidelity in &fidelities {
        inverters.extend(ks.iter().map(|&k| Inverter::Neumann { k, fidelity }));
    }
    let scfg = SweepConfig {
        base,
        snrs_db: cfg.list("mimo.snr_db")?,
        inverters,
        bits: cfg.get("mimo.bits")?,
    };
    let records = sweep(&scfg)?;
    let means = summarize(&records);
    let summary = means
        .iter()
        .map(|s| {
            format!(
                "snr {:>5} dB  {:>6} k={:<2}  SER {:.4e}  inv error {:.3e}",
                s.snr_db, s.fidelity, s.k, s.ser, s.inversion_rel_error
            )
        })
        .collect();
    Ok(Outcome {
        files: vec![out.records("mimo", &records)?, out.records("mimo_summary", &means)?],
        summary,
        ok: true,
    })
}

#[derive(Serialize)]
struct DiffRow {
    m: usize,
    metric: &'static str,
    model: f64,
    reference: f64,
    rel_diff: f64,
}

pub fn cmd_perf(cfg: &ExperimentConfig, out: &Output) -> Result<Outcome> {
    let b = BlockBudget {
        clock_hz: cfg.get("perf.clock_hz")?,
        digital_overhead_w: cfg.get::<f64>("perf.digital_overhead_mw")? * 1e-3,
        ..Default::default()
    };
    let ms: Vec<usize> = cfg.list("perf.ms")?;
    if let Some(bad) = ms.iter().find(|&&m| m < 2 || !m.is_power_of_two()) {
        return Err(cfg.invalid("perf.ms", format!("{bad} is not a power of two >= 2")).into());
    }
    let table = perf_table(&ms, &b);
    let diffs: Vec<DiffRow> = diff_rows(&table)
        .into_iter()
        .map(|(m, metric, model, reference, rel_diff)| DiffRow {
            m,
            metric,
            model,
            reference,
            rel_diff,
        })
        .collect();
    let worst = diffs.iter().map(|d| d.rel_diff.abs()).fold(0.0, f64::max);
    let mut summary: Vec<String> = table
        .iter()
        .map(|r| {
            format!(
                "M={:<3} {:>8.1} mW {:>7.3} mm2 {:>8.3} TMAC/s {:>6.1} fJ/MAC",
                r.m,
                r.soc_w * 1e3,
                r.area_mm2,
                r.tmacs,
                r.energy_fj_per_mac.unwrap_or(f64::NAN)
            )
        })
        .collect();
    if !diffs.is_empty() {
        summary.push(format!("largest deviation from the reference table: {:.3}%", 100.0 * worst));
    }
    if let Some(r) = table.iter().find(|r| r.m == TPU_V4.m) {
        summary.push(format!(
            "vs {}: {:.2}x density, {:.2}x energy",
            TPU_V4.name,
            r.density_advantage(&TPU_V4),
            r.energy_advantage(&TPU_V4).unwrap_or(f64::NAN)
        ));
    }
    Ok(Outcome {
        files: vec![out.records("perf", &table)?, out.records("perf_diff", &diffs)?],
        summary,
        ok: true,
    })
}

pub fn cmd_validate(cfg: &ExperimentConfig, out: &Output) -> Result<Outcome> {
    let opts = ValidationOptions {
        seed: out.seed,
        mvm_trials: cfg.get("validate.mvm_trials")?,
        channel_draws: cfg.get("validate.channel_draws")?,
        mimo_trials: cfg.get("validate.mimo_trials")?,
        optical_trials: cfg.get("validate.optical_trials")?,
    };
    let report = run_validation(&opts)?;
    let failed: Vec<String> = report.failures().map(|c| format!("FAIL {} {}", c.criterion, c.name)).collect();
    let mut summary = vec![format!(
        "{} checks, {} failed",
        report.checks.len(),
        failed.len()
    )];
    summary.extend(failed);
    Ok(Outcome {
        files: vec![out.records("validate", &report.checks)?],
        summary,
        ok: report.all_passed(),
    })
}
