//! Vector (high-speed) and matrix (R-2R) DAC power models.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HsDacModel {
    pub bits: u32,
    pub v_ddh: f64,
    pub r_hs: f64,
    pub c_load: f64,
    pub settling_budget_s: f64,
}

impl Default for HsDacModel {
    fn default() -> Self {
        Self {
            bits: 4,
            v_ddh: 2.4,
            r_hs: 2000.0,
            c_load: 30e-15,
            settling_budget_s: 200e-12,
        }
    }
}

impl HsDacModel {
    pub fn tau(&self) -> f64 {
        self.r_hs * self.c_load
    }

    /// Output error left after the settling budget, as a fraction of full scale.
    pub fn settling_residual(&self) -> f64 {
        (-self.settling_budget_s / self.tau()).exp()
    }

    /// Half an LSB of the (L+1)-bit drive word.
    pub fn settling_target(&self) -> f64 {
        0.5f64.powi(self.bits as i32 + 1)
    }

    pub fn settles(&self) -> bool {
        self.settling_residual() < self.settling_target()
    }

    /// Largest driver resistance that still settles inside the budget.
    pub fn max_r_hs(&self) -> f64 {
        self.settling_budget_s / (self.c_load * (1.0 / self.settling_target()).ln())
    }

    /// Latency plus settling must fit one clock period.
    pub fn fits_clock(&self, clock_hz: f64, latency_s: f64) -> bool {
        let period = 1.0 / clock_hz;
        latency_s + self.settling_budget_s <= period
    }

    /// Static power per divider code `k` in 1..=2^L: the series string sees
    /// (k−1)(2^L−k)/(2^L−1)² of V²/R. Codes at either rail draw nothing.
    pub fn code_power(&self, k: u64) -> f64 {
        let n = 1u64 << self.bits;
        if k == 0 || k > n {
            return 0.0;
        }
        let num = ((k - 1) * (n - k)) as f64;
        let den = ((n - 1) * (n - 1)) as f64;
        self.v_ddh * self.v_ddh / self.r_hs * num / den
    }
}

/// Uniform-code average static power of the high-speed DAC divider.
pub fn hs_dac_static_power(d: &HsDacModel) -> f64 {
    let n = 1u64 << d.bits;
    (1..n).map(|k| d.code_power(k)).sum::<f64>() / n as f64
}

/// Same sum normalized by 2^(L−1) instead of 2^L, exactly twice the average.
pub fn hs_dac_static_power_printed(d: &HsDacModel) -> f64 {
    let n = 1u64 << d.bits;
    (1..n).map(|k| d.code_power(k)).sum::<f64>() / (n / 2).max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct R2rDacModel {
    pub bits: u32,
    pub v_ddh: f64,
    /// Series unit resistor R; shunt legs are 2R.
    pub r_u: f64,
}

impl Default for R2rDacModel {
    fn default() -> Self {
        Self {
            bits: 4,
            v_ddh: 2.4,
            r_u: 5e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct R2rPower {
    /// Static power averaged over all 2^L codes (W).
    pub average_w: f64,
    /// Sum of per-code static power over all codes (W); this is the figure
    /// quoted per DAC in the block budget.
    pub budget_w: f64,
    /// The same two quantities from the closed-form node-voltage recursion.
    pub closed_form_average_w: f64,
    pub closed_form_budget_w: f64,
}

impl R2rPower {
    pub fn oracle_agreement(&self) -> f64 {
        if self.average_w == 0.0 {
            return if self.closed_form_average_w == 0.0 { 0.0 } else { f64::INFINITY };
        }
        ((self.closed_form_average_w - self.average_w) / self.average_w).abs()
    }
}

/// Node voltages of the ladder for one code by nodal analysis.
///
/// Node 0 is the LSB end (terminated by 2R to ground), node L−1 the output.
/// Bit `b` of `code` drives node `b` through 2R from V or ground.
pub fn r2r_node_voltages(d: &R2rDacModel, code: u64) -> Vec<f64> {
    let l = d.bits as usize;
    let g_series = 1.0 / d.r_u;
    let g_leg = 1.0 / (2.0 * d.r_u);
    let mut g = DMatrix::<f64>::zeros(l, l);
    let mut rhs = DVector::<f64>::zeros(l);
    for p in 0..l {
        g[(p, p)] += g_leg;
        if (code >> p) & 1 == 1 {
            rhs[p] += g_leg * d.v_ddh;
        }
        if p == 0 {
            g[(p, p)] += g_leg;
        }
        if p + 1 < l {
            g[(p, p)] += g_series;
            g[(p + 1, p + 1)] += g_series;
            g[(p, p + 1)] -= g_series;
            g[(p + 1, p)] -= g_series;
        }
    }
    let v = g.lu().solve(&rhs).expect("ladder conductance matrix is nonsingular");
    v.iter().copied().collect()
}

/// Power drawn from the supply for one code: every leg tied high sources
/// V·(V − v_node)/2R.
pub fn r2r_code_power(d: &R2rDacModel, code: u64) -> f64 {
    if !d.r_u.is_finite() {
        return 0.0;
    }
    let v = r2r_node_voltages(d, code);
    (0..d.bits as usize)
        .filter(|p| (code >> p) & 1 == 1)
        .map(|p| d.v_ddh * (d.v_ddh - v[p]) / (2.0 * d.r_u))
        .sum()
}

/// Integer pair (G_p, H_p) per node counted from the output end, with
/// R_p = (G_p/H_p)·R_U the one-side equivalent resistance.
pub fn r2r_gh(bits: u32) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(bits as usize);
    let (mut g, mut h) = (1u64, 0u64);
    for _ in 0..bits {
        out.push((g, h));
        (g, h) = (3 * g + 2 * h, g + 2 * h);
    }
    out
}

/// Closed-form node voltage for node `p` (1 = output end) and code `code`,
/// as a fraction of V: superposition of every driven leg.
pub fn r2r_closed_form_fraction(bits: u32, code: u64, p: u32) -> f64 {
    let gh = r2r_gh(bits);
    (1..=bits)
        .filter(|q| (code >> (bits - q)) & 1 == 1)
        .map(|q| {
            let gp = gh[p as usize - 1].0;
            let gq = gh[q as usize - 1].0;
            gp.min(gq) as f64 / 2f64.powi((p + q - 1) as i32)
        })
        .sum()
}

fn r2r_closed_form_code_power(d: &R2rDacModel, code: u64) -> f64 {
    if !d.r_u.is_finite() {
        return 0.0;
    }
    (1..=d.bits)
        .filter(|p| (code >> (d.bits - p)) & 1 == 1)
        .map(|p| {
            let frac = r2r_closed_form_fraction(d.bits, code, p);
            d.v_ddh * d.v_ddh / d.r_u * (1.0 - frac) / 2.0
        })
        .sum()
}

pub fn r2r_dac_static_power(d: &R2rDacModel) -> R2rPower {
    let n = 1u64 << d.bits;
    let budget: f64 = (0..n).map(|k| r2r_code_power(d, k)).sum();
    let closed: f64 = (0..n).map(|k| r2r_closed_form_code_power(d, k)).sum();
    R2rPower {
        average_w: budget / n as f64,
        budget_w: budget,
        closed_form_average_w: closed / n as f64,
        closed_form_budget_w: closed,
    }
}
