//! Micro-ring modulator transfer and E/O linearization.

use serde::Serialize;

use super::DeviceError;

/// Lorentzian all-pass notch whose resonance red-shifts linearly with drive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrmModel {
    /// Resonance at zero drive (nm).
    pub lambda_res_at_zero_nm: f64,
    /// Resonance shift per volt of reverse bias (nm/V).
    pub shift_rate_nm_per_v: f64,
    pub q: f64,
    /// Power gain at the bottom of the notch.
    pub extinction_floor: f64,
    /// Flat off-resonance loss (dB).
    pub insertion_loss_db: f64,
}

/// Loss budgeted per modulation or absorption stage at full scale (dB).
pub const STAGE_LOSS_DB: f64 = 2.5;

impl MrmModel {
    /// Ring parked on `carrier_nm` at zero drive, so code 0 sits at the
    /// notch bottom and more drive walks the notch away from the carrier.
    pub fn on_carrier(carrier_nm: f64) -> Self {
        Self {
            lambda_res_at_zero_nm: carrier_nm,
            shift_rate_nm_per_v: 0.04,
            q: 8000.0,
            extinction_floor: 1e-3,
            insertion_loss_db: 0.0,
        }
    }

    pub fn resonance_nm(&self, v_drive: f64) -> f64 {
        self.lambda_res_at_zero_nm + self.shift_rate_nm_per_v * v_drive
    }

    pub fn fwhm_nm(&self) -> f64 {
        self.lambda_res_at_zero_nm / self.q
    }

    pub fn transmission(&self, lambda_nm: f64, v_drive: f64) -> f64 {
        mrm_transmission(self, lambda_nm, v_drive)
    }
}

impl Default for MrmModel {
    fn default() -> Self {
        Self::on_carrier(1550.0)
    }
}

pub fn mrm_transmission(m: &MrmModel, lambda_nm: f64, v_drive: f64) -> f64 {
    let res = m.resonance_nm(v_drive);
    let x = 2.0 * m.q * (lambda_nm - res) / res;
    let il = 10f64.powf(-m.insertion_loss_db / 10.0);
    il * (1.0 - (1.0 - m.extinction_floor) / (1.0 + x * x))
}

/// Uniform drive levels `0..=v_max` for an `bits`-wide DAC.
pub fn uniform_levels(bits: u32, v_max: f64) -> Vec<f64> {
    let n = 1usize << bits;
    (0..n).map(|k| v_max * k as f64 / (n - 1) as f64).collect()
}

/// Code-to-level remap for one modulator and the linearity it achieves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EoCalibrationTable {
    /// Drive-level index chosen for each L-bit code.
    pub code_map: Vec<usize>,
    pub levels_v: Vec<f64>,
    /// Power gain realized by each code after remapping.
    pub gains: Vec<f64>,
    pub dnl: Vec<f64>,
    pub inl: Vec<f64>,
    /// Linearity of the plain every-other-level map, for comparison.
    pub raw_dnl: Vec<f64>,
    pub raw_inl: Vec<f64>,
}

impl EoCalibrationTable {
    pub fn bits(&self) -> u32 {
        self.code_map.len().trailing_zeros()
    }

    pub fn max_dnl(&self) -> f64 {
        max_abs(&self.dnl)
    }

    pub fn max_inl(&self) -> f64 {
        max_abs(&self.inl)
    }

    pub fn raw_max_dnl(&self) -> f64 {
        max_abs(&self.raw_dnl)
    }

    pub fn raw_max_inl(&self) -> f64 {
        max_abs(&self.raw_inl)
    }

    pub fn gain(&self, code: u32) -> f64 {
        self.gains[code as usize]
    }

    /// Gain span between the top and bottom codes.
    pub fn span(&self) -> f64 {
        self.gains[self.gains.len() - 1] - self.gains[0]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (code, (&level, &gain)) in self.code_map.iter().zip(&self.gains).enumerate() {
            out.push_str(&format!(
                "code={code} level={level} volts={:.6} gain={gain:.6} inl={:.4} dnl={}\n",
                self.levels_v[level],
                self.inl[code],
                self.dnl
                    .get(code)
                    .map(|d| format!("{d:.4}"))
                    .unwrap_or_else(|| "none".into())
            ));
        }
        out
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Endpoint-fit INL and DNL (in LSB) of a gain sequence.
pub fn linearity(gains: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = gains.len();
    let lsb = (gains[n - 1] - gains[0]) / (n - 1) as f64;
    let inl = gains
        .iter()
        .enumerate()
        .map(|(i, g)| (g - gains[0] - i as f64 * lsb) / lsb)
        .collect();
    let dnl = gains.windows(2).map(|w| (w[1] - w[0]) / lsb - 1.0).collect();
    (inl, dnl)
}

/// Worst-case bound accepted for calibrated INL and DNL (LSB).
pub const CALIBRATION_BOUND_LSB: f64 = 0.5;

/// Picks 2^L of the 2^(L+1) drive levels so the realized gains are as close
/// to a straight line as possible, minimizing max(|INL|, |DNL|).
///
/// The lowest-gain level is always code 0; the top code may use either of
/// the two highest levels. A dynamic program over (code, level) finds the
/// exact minimax subset.
pub fn calibrate_eo(
    m: &MrmModel,
    dac_levels: &[f64],
    target_lambda_nm: f64,
) -> Result<EoCalibrationTable, DeviceError> {
    let gains: Vec<f64> = dac_levels
        .iter()
        .map(|&v| mrm_transmission(m, target_lambda_nm, v))
        .collect();
    calibrate_levels(dac_levels, &gains)
}

/// Same selection for any measured gain-per-level transfer.
pub fn calibrate_levels(
    dac_levels: &[f64],
    gains: &[f64],
) -> Result<EoCalibrationTable, DeviceError> {
    let n_levels = dac_levels.len();
    if n_levels < 4 || !n_levels.is_power_of_two() || gains.len() != n_levels {
        return Err(DeviceError::InvalidParameter(format!(
            "need 2^(L+1) drive levels with one gain each, got {n_levels} levels and {} gains",
            gains.len()
        )));
    }
    let n_codes = n_levels / 2;
    if gains.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DeviceError::CalibrationFailure {
            reason: "transfer is not strictly increasing over the drive range".into(),
            best_inl: f64::INFINITY,
        });
    }

    let raw: Vec<f64> = (0..n_codes).map(|k| gains[2 * k]).collect();
    let (raw_inl, raw_dnl) = linearity(&raw);

    let mut best: Option<(f64, Vec<usize>)> = None;
    for last in [n_levels - 1, n_levels - 2] {
        if let Some((cost, path)) = minimax_subset(gains, n_codes, last) {
            if best.as_ref().map_or(true, |(c, _)| cost < *c - 1e-15) {
                best = Some((cost, path));
            }
        }
    }
    let (cost, code_map) = best.ok_or_else(|| DeviceError::CalibrationFailure {
        reason: "no monotone level subset exists".into(),
        best_inl: f64::INFINITY,
    })?;
    let chosen: Vec<f64> = code_map.iter().map(|&l| gains[l]).collect();
    let (inl, dnl) = linearity(&chosen);
    if cost > CALIBRATION_BOUND_LSB {
        return Err(DeviceError::CalibrationFailure {
            reason: format!("best subset reaches {cost:.3} LSB"),
            best_inl: max_abs(&inl),
        });
    }
    Ok(EoCalibrationTable {
        code_map,
        levels_v: dac_levels.to_vec(),
        gains: chosen,
        dnl,
        inl,
        raw_dnl,
        raw_inl,
    })
}

fn minimax_subset(gains: &[f64], n_codes: usize, last: usize) -> Option<(f64, Vec<usize>)> {
    let g0 = gains[0];
    let lsb = (gains[last] - g0) / (n_codes - 1) as f64;
    if !(lsb > 0.0) {
        return None;
    }
    let mut cost = vec![vec![f64::INFINITY; last + 1]; n_codes];
    let mut prev = vec![vec![0usize; last + 1]; n_codes];
    cost[0][0] = 0.0;
    for i in 1..n_codes {
        for l in i..=last {
            let inl = ((gains[l] - g0) / lsb - i as f64).abs();
            for p in (i - 1)..l {
                let c_prev = cost[i - 1][p];
                if !c_prev.is_finite() {
                    continue;
                }
                let dnl = ((gains[l] - gains[p]) / lsb - 1.0).abs();
                let c = c_prev.max(inl).max(dnl);
                if c < cost[i][l] {
                    cost[i][l] = c;
                    prev[i][l] = p;
                }
            }
        }
    }
    let total = cost[n_codes - 1][last];
    if !total.is_finite() {
        return None;
    }
    let mut path = vec![last];
    for i in (1..n_codes).rev() {
        path.push(prev[i][*path.last().unwrap()]);
    }
    path.reverse();
    Some((total, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn notch_bottom_equals_floor() {
        let m = MrmModel {
            extinction_floor: 10f64.powf(-STAGE_LOSS_DB / 10.0),
            ..MrmModel::default()
        };
        let g = mrm_transmission(&m, 1550.0, 0.0);
        assert!((g - 0.5623).abs() < 1e-4);
        let v = 1.5;
        assert!((mrm_transmission(&m, m.resonance_nm(v), v) - g).abs() < 1e-12);
    }

    #[test]
    fn far_detuning_is_transparent() {
        let m = MrmModel::default();
        assert!((m.fwhm_nm() - 0.19375).abs() < 1e-9);
        assert!(mrm_transmission(&m, 1560.0, 0.0) > 0.999);
        assert!(mrm_transmission(&m, 1540.0, 0.0) > 0.999);
    }

    #[test]
    fn default_calibration_meets_half_lsb() {
        let m = MrmModel::default();
        let table = calibrate_eo(&m, &uniform_levels(5, 2.4), 1550.0).unwrap();
        assert!(table.raw_max_inl() > 0.5, "{}", table.raw_max_inl());
        assert!(table.max_inl() <= 0.5 && table.max_dnl() <= 0.5);
        assert_eq!(table.code_map[0], 0);
        assert!(table.code_map.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(table.bits(), 4);
    }

    #[test]
    fn linear_device_maps_to_even_levels() {
        let levels = uniform_levels(5, 2.4);
        let gains: Vec<f64> = levels.iter().map(|v| 0.01 + 0.2 * v).collect();
        let table = calibrate_levels(&levels, &gains).unwrap();
        assert_eq!(table.code_map, (0..16).map(|k| 2 * k).collect::<Vec<_>>());
        assert!(table.max_inl() < 1e-12 && table.max_dnl() < 1e-12);
        assert!(table.raw_max_inl() < 1e-12);
    }

    #[test]
    fn linearity_of_a_line_is_zero() {
        let (inl, dnl) = linearity(&[1.0, 2.0, 3.0, 4.0]);
        assert!(inl.iter().chain(&dnl).all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn too_little_drive_fails_calibration() {
        let m = MrmModel {
            shift_rate_nm_per_v: 0.4,
            ..MrmModel::default()
        };
        let err = calibrate_eo(&m, &uniform_levels(5, 2.4), 1550.0).unwrap_err();
        assert!(matches!(err, DeviceError::CalibrationFailure { .. }));
    }
}
