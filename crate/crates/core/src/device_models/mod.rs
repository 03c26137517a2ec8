//! Transfer and noise models for every block of the signal chain.

pub mod dac;
pub mod mrm;
pub mod optics;
pub mod receiver;

use serde::Serialize;

pub use dac::{
    hs_dac_static_power, hs_dac_static_power_printed, r2r_dac_static_power, HsDacModel, R2rDacModel,
    R2rPower,
};
pub use mrm::{calibrate_eo, calibrate_levels, mrm_transmission, EoCalibrationTable, MrmModel};
pub use optics::{heater_power, laser_power_per_wavelength, laser_power_total, SplitterModel};
pub use receiver::{
    adc_quantize, noise_power_at_adc, noise_terms, rtr_absorbed_power, tia_response, AdcModel,
    AnalogChainModel, NoiseTerms, RtrPdModel,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error("invalid device parameter: {0}")]
    InvalidParameter(String),
    #[error("E/O calibration failed: {reason} (best |INL| {best_inl:.3} LSB)")]
    CalibrationFailure { reason: String, best_inl: f64 },
}

/// Every block parameter set needed to simulate one MVM array.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceChain {
    pub hs_dac: HsDacModel,
    pub r2r_dac: R2rDacModel,
    /// Template ring; each channel's copy is parked on its own carrier.
    pub mrm: MrmModel,
    pub analog: AnalogChainModel,
    pub adc: AdcModel,
    pub responsivity: f64,
    pub pd_dr_loss_db: f64,
    /// Full-scale aggregate absorbed power per detector (W).
    pub dr_oe_w: f64,
}

impl Default for DeviceChain {
    fn default() -> Self {
        Self {
            hs_dac: HsDacModel::default(),
            r2r_dac: R2rDacModel::default(),
            mrm: MrmModel::default(),
            analog: AnalogChainModel::default(),
            adc: AdcModel::default(),
            responsivity: 0.5,
            pd_dr_loss_db: 2.5,
            dr_oe_w: optics::DEFAULT_DR_OE_W,
        }
    }
}

impl DeviceChain {
    pub fn with_bits(bits: u32) -> Self {
        let mut chain = Self::default();
        chain.hs_dac.bits = bits;
        chain.r2r_dac.bits = bits;
        chain.adc.bits = bits;
        chain
    }

    pub fn bits(&self) -> u32 {
        self.adc.bits
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let bits = self.adc.bits;
        if bits == 0 || bits > 12 {
            return Err(DeviceError::InvalidParameter(format!("resolution {bits} bits")));
        }
        if self.hs_dac.bits != bits || self.r2r_dac.bits != bits {
            return Err(DeviceError::InvalidParameter(
                "DAC and ADC resolutions differ".into(),
            ));
        }
        if !(self.responsivity > 0.0 && self.responsivity <= 1.0) {
            return Err(DeviceError::InvalidParameter(format!(
                "responsivity {} A/W outside (0, 1]",
                self.responsivity
            )));
        }
        if !(self.r2r_dac.r_u > 0.0) || !(self.hs_dac.r_hs > 0.0) {
            return Err(DeviceError::InvalidParameter("resistances must be positive".into()));
        }
        if !(self.mrm.q > 0.0) || !(self.mrm.extinction_floor > 0.0 && self.mrm.extinction_floor < 1.0)
        {
            return Err(DeviceError::InvalidParameter("ring Q or floor out of range".into()));
        }
        Ok(())
    }

    /// 2^(L+1) uniform drive levels spanning the DAC supply.
    pub fn drive_levels(&self) -> Vec<f64> {
        mrm::uniform_levels(self.bits() + 1, self.hs_dac.v_ddh)
    }

    /// Ring for one carrier, built from the template.
    pub fn mrm_for(&self, carrier_nm: f64) -> MrmModel {
        MrmModel {
            lambda_res_at_zero_nm: carrier_nm,
            ..self.mrm.clone()
        }
    }
}
