//! Power, area, throughput and energy of an M×M accelerator, assembled
//! from the per-block budgets of the signal chain.

use serde::Serialize;

use crate::device_models::{
    heater_power, hs_dac_static_power, laser_power_total, HsDacModel, DeviceChain,
};

/// Dimensions swept by the published comparison table.
pub const TABLE_M: [usize; 5] = [16, 32, 64, 128, 256];

/// Per-block power (W) and footprint (µm²).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockBudget {
    /// Dynamic logic plus average static divider power of one vector DAC.
    pub hs_dac_w: f64,
    pub hs_dac_um2: f64,
    pub r2r_dac_w: f64,
    pub r2r_dac_um2: f64,
    pub mrm_tile_um2: f64,
    /// Detector tile width per carrier it must resolve (µm), 20 µm tall.
    pub rtr_pd_width_per_channel_um: f64,
    pub tile_height_um: f64,
    pub tia_w: f64,
    pub amp_w: f64,
    pub adc_w: f64,
    pub analog_chain_um2: f64,
    /// Per-row power not attributed to any named block (fitted).
    pub digital_overhead_w: f64,
    /// Splitter tree length per stage (µm).
    pub splitter_stage_um: f64,
    pub dr_oe_w: f64,
    pub clock_hz: f64,
    pub bits: u32,
}

impl Default for BlockBudget {
    fn default() -> Self {
        Self {
            hs_dac_w: 0.2e-3 + hs_dac_static_power(&HsDacModel::default()),
            hs_dac_um2: 50.0 * 20.0,
            r2r_dac_w: 7.2e-6,
            r2r_dac_um2: 20.0 * 10.0,
            mrm_tile_um2: 20.0 * 20.0,
            rtr_pd_width_per_channel_um: 15.0,
            tile_height_um: 20.0,
            tia_w: 0.1e-3,
            amp_w: 0.75e-3,
            adc_w: 1.2e-3,
            analog_chain_um2: 100.0 * 20.0,
            digital_overhead_w: DIGITAL_OVERHEAD_W,
            splitter_stage_um: 35.0,
            dr_oe_w: DeviceChain::default().dr_oe_w,
            clock_hz: 2e9,
            bits: 4,
        }
    }
}

/// Least-squares fit of the unattributed per-row power over [`TABLE_II`].
pub const DIGITAL_OVERHEAD_W: f64 = 0.634e-3;

impl BlockBudget {
    /// Named per-row electronics: vector DAC, TIA, amplifier, ADC.
    pub fn named_row_w(&self) -> f64 {
        self.hs_dac_w + self.tia_w + self.amp_w + self.adc_w
    }

    pub fn rtr_pd_um2(&self, m: usize) -> f64 {
        self.rtr_pd_width_per_channel_um * m as f64 * self.tile_height_um
    }

    pub fn splitter_um2(&self, m: usize) -> f64 {
        (m as f64).log2() * self.splitter_stage_um * m as f64 * self.tile_height_um
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerBreakdown {
    pub laser_w: f64,
    pub heater_w: f64,
    pub electronics_w: f64,
    pub soc_w: f64,
}

pub fn total_power(m: usize, b: &BlockBudget) -> PowerBreakdown {
    let laser_w = laser_power_total(m, b.dr_oe_w);
    let heater_w = heater_power(m);
    let mf = m as f64;
    let electronics_w = mf * (b.named_row_w() + b.digital_overhead_w) + mf * mf * b.r2r_dac_w;
    PowerBreakdown {
        laser_w,
        heater_w,
        electronics_w,
        soc_w: laser_w + heater_w + electronics_w,
    }
}

/// Footprint in mm². Per row: vector DAC, analog chain, y-ring. Per matrix
/// element: R-2R DAC, a-ring and the element's share of the detector.
/// Plus the splitter tree.
pub fn total_area(m: usize, b: &BlockBudget) -> f64 {
    let mf = m as f64;
    let per_row = b.hs_dac_um2 + b.analog_chain_um2 + b.mrm_tile_um2;
    let per_element = b.r2r_dac_um2 + b.mrm_tile_um2;
    let um2 = mf * per_row + mf * mf * per_element + mf * b.rtr_pd_um2(m) + b.splitter_um2(m);
    um2 * 1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfReport {
    pub m: usize,
    pub laser_w: f64,
    pub heater_w: f64,
    pub soc_w: f64,
    pub area_mm2: f64,
    pub tops: f64,
    pub tmacs: f64,
    pub density_tmacs_per_mm2: f64,
    /// Absent when the clock is stopped.
    pub energy_fj_per_mac: Option<f64>,
    pub clock_hz: f64,
    pub bits: u32,
}

pub fn perf_report(m: usize, b: &BlockBudget) -> PerfReport {
    let p = total_power(m, b);
    let area_mm2 = total_area(m, b);
    let macs = (m * m) as f64 * b.clock_hz;
    let tmacs = macs * 1e-12;
    PerfReport {
        m,
        laser_w: p.laser_w,
        heater_w: p.heater_w,
        soc_w: p.soc_w,
        area_mm2,
        tops: 2.0 * tmacs,
        tmacs,
        density_tmacs_per_mm2: tmacs / area_mm2,
        energy_fj_per_mac: (macs > 0.0).then(|| p.soc_w / macs * 1e15),
        clock_hz: b.clock_hz,
        bits: b.bits,
    }
}

/// Published reference row for one M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub m: usize,
    pub laser_mw: f64,
    pub heater_mw: f64,
    pub soc_mw: f64,
    pub area_mm2: f64,
    pub tmacs: f64,
    pub density: f64,
    pub energy_fj: f64,
}

pub const TABLE_II: [ReferenceRow; 5] = [
    ReferenceRow { m: 16, laser_mw: 64.3, heater_mw: 79.2, soc_mw: 198.7, area_mm2: 0.33, tmacs: 0.512, density: 1.56, energy_fj: 388.0 },
    ReferenceRow { m: 32, laser_mw: 130.7, heater_mw: 156.0, soc_mw: 400.7, area_mm2: 1.14, tmacs: 2.048, density: 1.80, energy_fj: 195.6 },
    ReferenceRow { m: 64, laser_mw: 265.6, heater_mw: 309.6, soc_mw: 818.0, area_mm2: 4.16, tmacs: 8.192, density: 1.97, energy_fj: 99.8 },
    ReferenceRow { m: 128, laser_mw: 539.9, heater_mw: 616.8, soc_mw: 1701.1, area_mm2: 15.77, tmacs: 32.768, density: 2.08, energy_fj: 51.9 },
    ReferenceRow { m: 256, laser_mw: 1097.3, heater_mw: 1231.2, soc_mw: 3653.3, area_mm2: 61.12, tmacs: 131.072, density: 2.14, energy_fj: 27.9 },
];

pub fn reference_row(m: usize) -> Option<&'static ReferenceRow> {
    TABLE_II.iter().find(|r| r.m == m)
}

/// Digital ASIC baseline, stored as published.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsicReference {
    pub name: &'static str,
    pub m: usize,
    pub idle_w: f64,
    pub busy_w: f64,
    pub area_mm2: f64,
    pub bits: u32,
    pub clock_hz: f64,
    pub tmacs: f64,
    pub density_tmacs_per_mm2: f64,
    pub energy_fj_per_mac: f64,
}

pub const TPU_V4: AsicReference = AsicReference {
    name: "TPUv4",
    m: 256,
    idle_w: 55.0,
    busy_w: 78.571,
    area_mm2: 400.0,
    bits: 8,
    clock_hz: 1.05e9,
    tmacs: 68.81,
    density_tmacs_per_mm2: 0.17,
    energy_fj_per_mac: 1141.9,
};

impl PerfReport {
    pub fn density_advantage(&self, asic: &AsicReference) -> f64 {
        self.density_tmacs_per_mm2 / asic.density_tmacs_per_mm2
    }

    pub fn energy_advantage(&self, asic: &AsicReference) -> Option<f64> {
        self.energy_fj_per_mac.map(|e| asic.energy_fj_per_mac / e)
    }
}

pub fn perf_table(ms: &[usize], b: &BlockBudget) -> Vec<PerfReport> {
    ms.iter().map(|&m| perf_report(m, b)).collect()
}

/// Fits the unattributed per-row power so that the modelled SoC power
/// matches the reference rows in the least-squares sense.
pub fn fit_digital_overhead(b: &BlockBudget, rows: &[ReferenceRow]) -> f64 {
    let zero = BlockBudget {
        digital_overhead_w: 0.0,
        ..b.clone()
    };
    let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), r| {
        let residual = r.soc_mw * 1e-3 - total_power(r.m, &zero).soc_w;
        let m = r.m as f64;
        (n + residual * m, d + m * m)
    });
    num / den
}

fn rel(model: f64, reference: f64) -> f64 {
    model / reference - 1.0
}

pub const DIFF_CSV_HEADER: &str = "m,metric,model,reference,rel_diff";

/// Model against the reference table, one line per (M, metric).
pub fn diff_rows(reports: &[PerfReport]) -> Vec<(usize, &'static str, f64, f64, f64)> {
    let mut out = Vec::new();
    for r in reports {
        let Some(p) = reference_row(r.m) else { continue };
        let metrics = [
            ("laser_mw", r.laser_w * 1e3, p.laser_mw),
            ("heater_mw", r.heater_w * 1e3, p.heater_mw),
            ("soc_mw", r.soc_w * 1e3, p.soc_mw),
            ("area_mm2", r.area_mm2, p.area_mm2),
            ("tmacs", r.tmacs, p.tmacs),
            ("density", r.density_tmacs_per_mm2, p.density),
            ("energy_fj", r.energy_fj_per_mac.unwrap_or(f64::NAN), p.energy_fj),
        ];
        for (name, model, reference) in metrics {
            out.push((r.m, name, model, reference, rel(model, reference)));
        }
    }
    out
}

pub const TABLE_CSV_HEADER: &str =
    "m,laser_mw,heater_mw,soc_mw,area_mm2,tops,tmacs,density_tmacs_per_mm2,energy_fj_per_mac,clock_ghz,bits";

impl PerfReport {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.3},{:.3},{:.3},{:.4},{:.3},{:.3},{:.3},{},{},{}",
            self.m,
            self.laser_w * 1e3,
            self.heater_w * 1e3,
            self.soc_w * 1e3,
            self.area_mm2,
            self.tops,
            self.tmacs,
            self.density_tmacs_per_mm2,
            self.energy_fj_per_mac.map_or(String::new(), |e| format!("{e:.2}")),
            self.clock_hz * 1e-9,
            self.bits
        )
    }
}
