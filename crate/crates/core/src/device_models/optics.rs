//! Splitter tree, laser comb budget and thermal tuning power.

use serde::Serialize;

/// Losses stacked between the laser and the detector at full scale: the
/// y-MRM, the a-MRM and the detector's absorption DR (dB).
pub const LINK_DR_LOSS_DB: f64 = 7.5;
/// Full-scale aggregate power absorbed per detector (W).
pub const DEFAULT_DR_OE_W: f64 = 670e-6;
/// Tuning power per heater-equipped resonator (W).
pub const HEATER_POWER_PER_RESONATOR_W: f64 = 2.4e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitterModel {
    pub stages: u32,
    pub split_db_per_stage: f64,
    pub excess_loss_db_per_stage: f64,
}

impl SplitterModel {
    pub fn for_outputs(m: usize) -> Self {
        Self {
            stages: m.max(1).trailing_zeros(),
            split_db_per_stage: 3.01,
            excess_loss_db_per_stage: 0.07,
        }
    }

    pub fn outputs(&self) -> usize {
        1usize << self.stages
    }

    /// Power left after the whole tree, summed over every branch.
    pub fn excess_transmission(&self) -> f64 {
        10f64.powf(-(self.stages as f64) * self.excess_loss_db_per_stage / 10.0)
    }

    /// Fraction of the input reaching one branch.
    pub fn per_output(&self) -> f64 {
        self.excess_transmission() / self.outputs() as f64
    }
}

/// Laser power per carrier that puts exactly `dr_oe_w` on each detector
/// once every stage loss and the tree's excess loss are paid.
pub fn laser_power_per_wavelength(m: usize, dr_oe_w: f64) -> f64 {
    let tree = SplitterModel::for_outputs(m);
    dr_oe_w / (10f64.powf(-LINK_DR_LOSS_DB / 10.0) * tree.excess_transmission())
}

pub fn laser_power_total(m: usize, dr_oe_w: f64) -> f64 {
    m as f64 * laser_power_per_wavelength(m, dr_oe_w)
}

/// One heater per a-MRM row share, per y-MRM and per detector:
/// M·(1+M)/M + M resonators at 2.4 mW.
pub fn heater_power(m: usize) -> f64 {
    let m = m as f64;
    HEATER_POWER_PER_RESONATOR_W * (m * (1.0 + m) / m + m)
}
