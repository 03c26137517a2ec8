//! O/E conversion: racetrack photodetector, TIA, S2D amplifier, flash ADC.

use std::f64::consts::PI;

use serde::Serialize;

use crate::wdm_planner::WdmPlan;

pub const BOLTZMANN: f64 = 1.38e-23;
pub const ELECTRON_CHARGE: f64 = 1.602e-19;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RtrPdModel {
    pub perimeter_um: f64,
    pub q_rtr: f64,
    pub responsivity: f64,
    pub dr_loss_db: f64,
    /// Spectral weight λ_j/n_g(λ_j) of each carrier, normalized to mean 1.
    pub channel_weights: Vec<f64>,
}

impl RtrPdModel {
    /// Detector matched to a plan's comb. Weights follow the resonant
    /// build-up λ/n_g, normalized so a flat comb is absorbed at exactly
    /// the DR loss.
    pub fn for_plan(plan: &WdmPlan) -> Self {
        let raw: Vec<f64> = plan
            .lambdas_nm
            .iter()
            .zip(&plan.n_g)
            .map(|(l, ng)| l / ng)
            .collect();
        let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
        Self {
            perimeter_um: plan.rtr_perimeter_um,
            q_rtr: plan.q_mrm,
            responsivity: 0.5,
            dr_loss_db: 2.5,
            channel_weights: raw.iter().map(|w| w / mean).collect(),
        }
    }

    /// Detector that weights every channel equally.
    pub fn flat(channels: usize) -> Self {
        Self {
            perimeter_um: 0.0,
            q_rtr: 0.0,
            responsivity: 0.5,
            dr_loss_db: 2.5,
            channel_weights: vec![1.0; channels],
        }
    }

    pub fn absorption(&self) -> f64 {
        10f64.powf(-self.dr_loss_db / 10.0)
    }

    pub fn photocurrent(&self, absorbed_w: f64) -> f64 {
        self.responsivity * absorbed_w
    }
}

/// Power absorbed from per-channel input powers (W), indexed like the plan.
pub fn rtr_absorbed_power(pd: &RtrPdModel, channel_powers_w: &[f64]) -> f64 {
    pd.absorption()
        * channel_powers_w
            .iter()
            .zip(&pd.channel_weights)
            .map(|(p, w)| p * w)
            .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalogChainModel {
    pub g_m_tia: f64,
    pub r_f: f64,
    pub c_tia: f64,
    pub g_m_amp: f64,
    pub r_amp: f64,
    pub c_amp: f64,
    /// Active-inductor device transconductance (A/V).
    pub g_m_ind: f64,
    pub gamma: f64,
    pub temperature_k: f64,
}

impl Default for AnalogChainModel {
    fn default() -> Self {
        Self {
            g_m_tia: 1e-3,
            r_f: 1650.0,
            c_tia: 30e-15,
            g_m_amp: 5e-3,
            r_amp: 600.0,
            c_amp: 80e-15,
            g_m_ind: 23e-3,
            gamma: 2.5,
            temperature_k: 300.0,
        }
    }
}

impl AnalogChainModel {
    pub fn r_tia(&self) -> f64 {
        self.r_f / (1.0 + self.g_m_tia * self.r_f)
    }

    pub fn dc_transimpedance(&self) -> f64 {
        self.g_m_tia * self.r_f * self.r_tia()
    }

    pub fn amp_gain(&self) -> f64 {
        self.g_m_amp * self.r_amp
    }

    /// Photocurrent to differential ADC-input voltage (V/A).
    pub fn chain_gain(&self) -> f64 {
        self.dc_transimpedance() * self.amp_gain()
    }
}

/// TIA DC transimpedance and -3 dB bandwidth.
pub fn tia_response(c: &AnalogChainModel) -> (f64, f64) {
    let bw = 1.0 / (2.0 * PI * c.r_tia() * c.c_tia);
    (c.dc_transimpedance(), bw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseTerms {
    pub shot: f64,
    pub tia: f64,
    pub amplifier: f64,
}

impl NoiseTerms {
    pub fn total(&self) -> f64 {
        self.shot + self.tia + self.amplifier
    }
}

/// The three noise contributions at the ADC input (V², reported as W into 1 Ω).
pub fn noise_terms(c: &AnalogChainModel, i_pd: f64) -> NoiseTerms {
    let kt = BOLTZMANN * c.temperature_k;
    let r_tia = c.r_tia();
    let amp = c.g_m_amp * c.g_m_amp * c.r_amp / c.c_amp;
    let tz = c.g_m_tia * c.r_f * r_tia;
    NoiseTerms {
        shot: 0.5 * ELECTRON_CHARGE * i_pd.max(0.0) * tz * tz * amp,
        tia: kt * (c.gamma * c.g_m_tia * r_tia * r_tia + r_tia) * amp,
        amplifier: 2.0 * kt * (c.gamma * c.g_m_amp * c.r_amp + c.gamma * c.g_m_ind * c.r_amp + 1.0)
            / c.c_amp,
    }
}

pub fn noise_power_at_adc(c: &AnalogChainModel, i_pd: f64) -> f64 {
    noise_terms(c, i_pd).total()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdcModel {
    pub bits: u32,
    pub full_scale_v: f64,
}

impl Default for AdcModel {
    fn default() -> Self {
        Self {
            bits: 4,
            full_scale_v: 1.0,
        }
    }
}

impl AdcModel {
    pub fn max_code(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    pub fn comparator_count(&self) -> u32 {
        self.max_code()
    }

    pub fn lsb_v(&self) -> f64 {
        self.full_scale_v / self.max_code() as f64
    }

    pub fn quantization_noise(&self) -> f64 {
        self.lsb_v() * self.lsb_v() / 12.0
    }

    /// Quantization-to-analog-noise margin (dB).
    pub fn noise_margin_db(&self, analog_noise: f64) -> f64 {
        10.0 * (self.quantization_noise() / analog_noise).log10()
    }
}

/// Uniform quantizer, round-half-up, saturating at both rails.
pub fn adc_quantize(a: &AdcModel, v_diff: f64) -> u32 {
    let x = (v_diff / a.full_scale_v * a.max_code() as f64 + 0.5).floor();
    if x.is_nan() || x <= 0.0 {
        0
    } else {
        (x as u64).min(a.max_code() as u64) as u32
    }
}
