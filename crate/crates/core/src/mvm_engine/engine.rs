//! One M×M optical matrix-vector multiply through the full signal chain.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::operands::{golden_mvm, max_code, QuantizedMatrix, QuantizedVector};
use super::EngineError;
use crate::device_models::{
    adc_quantize, calibrate_eo, noise_power_at_adc, rtr_absorbed_power, DeviceChain,
    EoCalibrationTable, RtrPdModel, SplitterModel,
};
use crate::wdm_planner::{plan_wdm, MaterialModel, PlannerConfig, WdmPlan};

/// Largest accepted row-to-row gain spread before trimming.
pub const MAX_GAIN_SPREAD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FidelityMode {
    /// Exact code arithmetic.
    Ideal,
    /// Calibrated device transfer curves, no noise.
    Device,
    /// Device curves plus sampled receiver noise.
    Full,
}

impl FidelityMode {
    pub const ALL: [FidelityMode; 3] = [Self::Ideal, Self::Device, Self::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ideal => "ideal",
            Self::Device => "device",
            Self::Full => "full",
        }
    }
}

impl fmt::Display for FidelityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for FidelityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ideal" => Ok(Self::Ideal),
            "device" => Ok(Self::Device),
            "full" => Ok(Self::Full),
            other => Err(format!("unknown fidelity mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineConfig {
    pub plan: WdmPlan,
    pub devices: DeviceChain,
    pub clock_hz: f64,
    pub seed: u64,
    /// Multiplies the sampled noise amplitude in FULL mode.
    pub noise_scale: f64,
    /// Fraction of a neighbouring ring's notch depth leaking onto a carrier.
    pub crosstalk: f64,
    /// Register-to-driver latency of the vector DAC (s).
    pub dac_latency_s: f64,
    /// Per-row responsivity multiplier; empty means every row is nominal.
    pub row_responsivity: Vec<f64>,
}

impl EngineConfig {
    pub fn new(plan: WdmPlan, devices: DeviceChain) -> Self {
        Self {
            plan,
            devices,
            clock_hz: 2e9,
            seed: 0,
            noise_scale: 1.0,
            crosstalk: 0.0,
            dac_latency_s: 100e-12,
            row_responsivity: Vec::new(),
        }
    }

    /// Default devices on a default-material plan of `channels` carriers.
    pub fn for_channels(channels: usize, bits: u32) -> Result<Self, EngineError> {
        let cfg = PlannerConfig {
            channels,
            ..PlannerConfig::default()
        };
        let plan = plan_wdm(&cfg, &MaterialModel::default())?;
        Ok(Self::new(plan, DeviceChain::with_bits(bits)))
    }

    pub fn channels(&self) -> usize {
        self.plan.channels()
    }

    pub fn bits(&self) -> u32 {
        self.devices.bits()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.devices.validate()?;
        if self.channels() == 0 {
            return Err(EngineError::InvalidConfig("plan has no carriers".into()));
        }
        if !self.row_responsivity.is_empty() && self.row_responsivity.len() != self.channels() {
            return Err(EngineError::InvalidConfig(format!(
                "{} row responsivities for {} rows",
                self.row_responsivity.len(),
                self.channels()
            )));
        }
        if !(self.clock_hz > 0.0) {
            return Err(EngineError::InvalidConfig("clock rate must be positive".into()));
        }
        if !self.devices.hs_dac.fits_clock(self.clock_hz, self.dac_latency_s) {
            return Err(EngineError::InvalidConfig(format!(
                "DAC latency {:.0} ps plus settling {:.0} ps exceed the {:.0} ps clock period",
                self.dac_latency_s * 1e12,
                self.devices.hs_dac.settling_budget_s * 1e12,
                1e12 / self.clock_hz
            )));
        }
        if !(self.noise_scale >= 0.0) || !(0.0..1.0).contains(&self.crosstalk) {
            return Err(EngineError::InvalidConfig(
                "noise scale must be >= 0 and crosstalk in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Result of probing the untrimmed chain at full scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCal {
    /// ADC LSBs per unit code product, before trimming, averaged over rows.
    pub lsb_per_product: f64,
    pub row_lsb_per_product: Vec<f64>,
    /// (max − min) / mean over rows.
    pub spread: f64,
    /// Analog gain applied ahead of the ADC so full scale lands on the top code.
    pub trim: f64,
}

/// Physical chain without the final trim.
#[derive(Debug, Clone)]
struct Chain {
    tables: Vec<EoCalibrationTable>,
    laser_w: Vec<f64>,
    split: f64,
    pd_rows: Vec<RtrPdModel>,
    dark_v: Vec<f64>,
    chain_gain: f64,
    crosstalk: f64,
}

impl Chain {
    fn build(cfg: &EngineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let plan = &cfg.plan;
        let m = plan.channels();
        let dev = &cfg.devices;
        let levels = dev.drive_levels();
        let tables = plan
            .lambdas_nm
            .iter()
            .map(|&l| calibrate_eo(&dev.mrm_for(l), &levels, l))
            .collect::<Result<Vec<_>, _>>()?;
        let split = SplitterModel::for_outputs(m).per_output();

        let mut nominal = RtrPdModel::for_plan(plan);
        nominal.responsivity = dev.responsivity;
        nominal.dr_loss_db = dev.pd_dr_loss_db;
        let pd_rows: Vec<RtrPdModel> = (0..m)
            .map(|i| {
                let mut pd = nominal.clone();
                if let Some(s) = cfg.row_responsivity.get(i) {
                    pd.responsivity *= s;
                }
                pd
            })
            .collect();

        // Comb-line equalization: every carrier contributes the same share of
        // the detector's full-scale absorbed power.
        let top = max_code(dev.bits());
        let laser_w = (0..m)
            .map(|j| {
                let g = tables[j].gain(top);
                dev.dr_oe_w / (m as f64 * nominal.absorption() * g * g * split * nominal.channel_weights[j])
            })
            .collect();

        let mut chain = Self {
            tables,
            laser_w,
            split,
            pd_rows,
            dark_v: vec![0.0; m],
            chain_gain: dev.analog.chain_gain(),
            crosstalk: cfg.crosstalk,
        };
        let zeros = vec![0u32; m];
        chain.dark_v = (0..m)
            .map(|i| chain.row_signal(i, &zeros, &zeros).1)
            .collect();
        Ok(chain)
    }

    fn channels(&self) -> usize {
        self.laser_w.len()
    }

    /// Photocurrent (A) and amplifier output (V) of row `i`, untrimmed.
    fn row_signal(&self, i: usize, a_row: &[u32], y: &[u32]) -> (f64, f64) {
        let m = self.channels();
        let powers: Vec<f64> = (0..m)
            .map(|j| {
                let t = &self.tables[j];
                let mut through = t.gain(a_row[j]);
                if self.crosstalk > 0.0 {
                    for k in [j.wrapping_sub(1), j + 1] {
                        if k < m {
                            through *= 1.0 - self.crosstalk * (1.0 - self.tables[k].gain(a_row[k]));
                        }
                    }
                }
                self.laser_w[j] * t.gain(y[j]) * self.split * through
            })
            .collect();
        let pd = &self.pd_rows[i];
        let current = pd.photocurrent(rtr_absorbed_power(pd, &powers));
        (current, current * self.chain_gain)
    }
}

fn gain_cal(chain: &Chain, bits: u32, full_scale_v: f64) -> Result<GainCal, EngineError> {
    let m = chain.channels();
    let top = max_code(bits);
    let full = vec![top; m];
    let products = m as f64 * (top as f64).powi(2);
    let lsb_v = full_scale_v / top as f64;
    let row: Vec<f64> = (0..m)
        .map(|i| (chain.row_signal(i, &full, &full).1 - chain.dark_v[i]) / products / lsb_v)
        .collect();
    let mean = row.iter().sum::<f64>() / m as f64;
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / mean;
    if !(spread < MAX_GAIN_SPREAD) {
        return Err(EngineError::GainSpreadExceeded { spread });
    }
    let target = 1.0 / (m as f64 * top as f64);
    Ok(GainCal {
        lsb_per_product: mean,
        row_lsb_per_product: row,
        spread,
        trim: target / mean,
    })
}

/// Probes the chain with full-scale operands and returns the single scalar
/// aligning every row with the golden contract.
pub fn end_to_end_gain_cal(cfg: &EngineConfig) -> Result<GainCal, EngineError> {
    let chain = Chain::build(cfg)?;
    gain_cal(&chain, cfg.bits(), cfg.devices.adc.full_scale_v)
}

/// Per-row record of one operation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowDiagnostic {
    pub op_id: u64,
    pub row: usize,
    pub photocurrent_a: f64,
    pub pre_adc_v: f64,
    pub noise_v: f64,
    pub code: u32,
    pub golden: u32,
    pub error_lsb: i64,
    /// Signal-to-noise ratio at the ADC input; absent when noiseless.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone)]
struct Calibrated {
    chain: Chain,
    gain: GainCal,
}

/// A configured array. Immutable once built, so rows and whole operations
/// can run concurrently.
#[derive(Debug, Clone)]
pub struct MvmEngine {
    cfg: EngineConfig,
    calibrated: Option<Calibrated>,
}

impl MvmEngine {
    /// Calibrates every ring and trims the receiver chain.
    pub fn new(cfg: EngineConfig) -> Result<Self, EngineError> {
        let chain = Chain::build(&cfg)?;
        let gain = gain_cal(&chain, cfg.bits(), cfg.devices.adc.full_scale_v)?;
        Ok(Self {
            cfg,
            calibrated: Some(Calibrated { chain, gain }),
        })
    }

    /// Engine that only supports IDEAL mode; skips device calibration.
    pub fn ideal(cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            calibrated: None,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn channels(&self) -> usize {
        self.cfg.channels()
    }

    pub fn bits(&self) -> u32 {
        self.cfg.bits()
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated.is_some()
    }

    pub fn gain_cal(&self) -> Option<&GainCal> {
        self.calibrated.as_ref().map(|c| &c.gain)
    }

    pub fn calibration_tables(&self) -> Option<&[EoCalibrationTable]> {
        self.calibrated.as_ref().map(|c| c.chain.tables.as_slice())
    }

    /// Per-carrier laser power after comb equalization (W).
    pub fn laser_powers(&self) -> Option<&[f64]> {
        self.calibrated.as_ref().map(|c| c.chain.laser_w.as_slice())
    }

    fn calibrated(&self) -> Result<&Calibrated, EngineError> {
        self.calibrated.as_ref().ok_or(EngineError::UncalibratedDevice)
    }

    fn check_dims(&self, a: &QuantizedMatrix, y: &QuantizedVector) -> Result<(), EngineError> {
        let m = self.channels();
        if a.rows != m || a.cols != m || y.len() != m {
            return Err(EngineError::DimensionMismatch(format!(
                "engine is {m}x{m}, got {}x{} matrix and {}-vector",
                a.rows,
                a.cols,
                y.len()
            )));
        }
        if a.bits != self.bits() || y.bits != self.bits() {
            return Err(EngineError::DimensionMismatch(format!(
                "engine is {}-bit, operands are {}/{}-bit",
                self.bits(),
                a.bits,
                y.bits
            )));
        }
        Ok(())
    }

    /// Trimmed, dark-corrected, noiseless ADC-input voltage and photocurrent of one row.
    pub fn row_analog(&self, row: usize, a_row: &[u32], y: &[u32]) -> Result<(f64, f64), EngineError> {
        let cal = self.calibrated()?;
        let (current, v) = cal.chain.row_signal(row, a_row, y);
        Ok((current, (v - cal.chain.dark_v[row]) * cal.gain.trim))
    }

    /// Standard deviation of the noise added at the ADC input for a given
    /// photocurrent, after trimming and noise scaling (V).
    pub fn noise_sigma(&self, photocurrent_a: f64) -> Result<f64, EngineError> {
        let cal = self.calibrated()?;
        Ok(noise_power_at_adc(&self.cfg.devices.analog, photocurrent_a).sqrt()
            * cal.gain.trim
            * self.cfg.noise_scale)
    }

    /// Independent noise stream for one (operation, row) pair.
    pub fn row_rng(&self, op_id: u64, row: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(stream_seed(self.cfg.seed, op_id, row as u64))
    }

    pub fn quantize(&self, v: f64) -> u32 {
        adc_quantize(&self.cfg.devices.adc, v)
    }

    pub fn run_mvm(
        &self,
        mode: FidelityMode,
        a: &QuantizedMatrix,
        y: &QuantizedVector,
    ) -> Result<(QuantizedVector, Vec<RowDiagnostic>), EngineError> {
        self.run_mvm_op(mode, a, y, 0)
    }

    /// As [`run_mvm`](Self::run_mvm), with the noise streams keyed by `op_id`.
    pub fn run_mvm_op(
        &self,
        mode: FidelityMode,
        a: &QuantizedMatrix,
        y: &QuantizedVector,
        op_id: u64,
    ) -> Result<(QuantizedVector, Vec<RowDiagnostic>), EngineError> {
        self.check_dims(a, y)?;
        let golden = golden_mvm(a, y)?;
        let m = self.channels();
        let top = max_code(self.bits());
        let fs = self.cfg.devices.adc.full_scale_v;

        let diags: Vec<RowDiagnostic> = match mode {
            FidelityMode::Ideal => (0..m)
                .map(|i| {
                    let sum: u64 = a
                        .row(i)
                        .iter()
                        .zip(&y.codes)
                        .map(|(&a, &y)| a as u64 * y as u64)
                        .sum();
                    let frac = sum as f64 / (m as f64 * (top as f64).powi(2));
                    RowDiagnostic {
                        op_id,
                        row: i,
                        photocurrent_a: frac * self.cfg.devices.dr_oe_w * self.cfg.devices.responsivity,
                        pre_adc_v: frac * fs,
                        noise_v: 0.0,
                        code: golden.codes[i],
                        golden: golden.codes[i],
                        error_lsb: 0,
                        snr_db: None,
                    }
                })
                .collect(),
            FidelityMode::Device | FidelityMode::Full => {
                self.calibrated()?;
                let noisy = mode == FidelityMode::Full && self.cfg.noise_scale > 0.0;
                (0..m)
                    .into_par_iter()
                    .map(|i| -> Result<RowDiagnostic, EngineError> {
                        let (current, v) = self.row_analog(i, a.row(i), &y.codes)?;
                        let (noise, snr_db) = if noisy {
                            let sigma = self.noise_sigma(current)?;
                            let z: f64 = StandardNormal.sample(&mut self.row_rng(op_id, i));
                            (sigma * z, Some(10.0 * (v * v / (sigma * sigma)).log10()))
                        } else {
                            (0.0, None)
                        };
                        let code = self.quantize(v + noise);
                        Ok(RowDiagnostic {
                            op_id,
                            row: i,
                            photocurrent_a: current,
                            pre_adc_v: v,
                            noise_v: noise,
                            code,
                            golden: golden.codes[i],
                            error_lsb: code as i64 - golden.codes[i] as i64,
                            snr_db,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        let out = QuantizedVector {
            codes: diags.iter().map(|d| d.code).collect(),
            scale: golden.scale,
            bits: golden.bits,
        };
        Ok((out, diags))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one named stream derived from a run seed.
pub fn stream_seed(seed: u64, op_id: u64, lane: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ op_id) ^ lane)
}
