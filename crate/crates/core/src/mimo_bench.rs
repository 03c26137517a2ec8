//! Massive-MIMO uplink testbench: U = H·X + noise, detected with
//! X̂ = Z⁻¹·Hᴴ·U where Z = Hᴴ·H is inverted exactly or by a truncated
//! Neumann series.
//!
//! SNR convention: `snr_db` is the received signal energy per antenna over
//! the noise power. With unit-energy symbols and CN(0, 1) channel entries
//! each antenna sees M units of signal, so the noise variance is M / SNR.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg_pipeline::{
    from_real_embedding, neumann_invert, MmaUnit, neumann_invert_optical, real_embedding, NeumannConfig,
    NeumannFidelity, PipelineError,
};
use crate::mvm_engine::{stream_seed, EngineConfig, MvmEngine};
use crate::wdm_planner::MaterialModel;

type C = Complex64;

/// Channel draws attempted before giving up on a full-rank H.
const MAX_RESAMPLES: usize = 32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MimoError {
    #[error("invalid MIMO config: {0}")]
    InvalidConfig(String),
    #[error("channel matrix is rank deficient")]
    RankDeficient,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MimoConfig {
    /// Base-station antennas N.
    pub antennas: usize,
    /// Single-antenna users M.
    pub users: usize,
    /// QAM order.
    pub qam: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for MimoConfig {
    fn default() -> Self {
        Self {
            antennas: 64,
            users: 8,
            qam: 16,
            snr_db: 20.0,
            trials: 1250,
            seed: 1,
        }
    }
}

impl MimoConfig {
    pub fn validate(&self) -> Result<(), MimoError> {
        if self.users == 0 || self.users >= self.antennas {
            return Err(MimoError::InvalidConfig(format!(
                "need 0 < users < antennas, got {} users on {} antennas",
                self.users, self.antennas
            )));
        }
        let side = (self.qam as f64).sqrt().round() as usize;
        if self.qam < 4 || side * side != self.qam || !side.is_power_of_two() {
            return Err(MimoError::InvalidConfig(format!(
                "{}-QAM is not a square power-of-4 constellation",
                self.qam
            )));
        }
        if self.snr_db.is_nan() {
            return Err(MimoError::InvalidConfig("SNR is NaN".into()));
        }
        Ok(())
    }

    /// Noise variance per receive antenna; zero at infinite SNR.
    pub fn noise_var(&self) -> f64 {
        self.users as f64 / 10f64.powf(self.snr_db / 10.0)
    }
}

/// Square QAM scaled to unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<C>,
    side: usize,
    step: f64,
}

impl Constellation {
    pub fn qam(order: usize) -> Self {
        let side = (order as f64).sqrt().round() as usize;
        // Mean energy of odd-integer square QAM is 2(side² − 1)/3.
        let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let level = |k: usize| (2.0 * k as f64 - (side as f64 - 1.0)) / norm;
        let points = (0..order).map(|n| C::new(level(n % side), level(n / side))).collect();
        Self {
            points,
            side,
            step: 2.0 / norm,
        }
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// Nearest point index; the grid is separable so each axis rounds alone.
    pub fn slice(&self, x: C) -> usize {
        let axis = |v: f64| {
            let k = (v / self.step + (self.side as f64 - 1.0) / 2.0).round();
            k.clamp(0.0, (self.side - 1) as f64) as usize
        };
        axis(x.im) * self.side + axis(x.re)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: DMatrix<C>,
    pub x: DVector<C>,
    /// Constellation indices of `x`.
    pub symbols: Vec<usize>,
    pub u: DVector<C>,
    pub noise_var: f64,
}

fn cn(rng: &mut impl Rng, var: f64) -> C {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C::new(s * re, s * im)
}

/// Draws H until it has full column rank, then symbols and noise.
pub fn generate_instance(
    cfg: &MimoConfig,
    constellation: &Constellation,
    rng: &mut impl Rng,
) -> Result<ChannelRealization, MimoError> {
    cfg.validate()?;
    let (n, m) = (cfg.antennas, cfg.users);
    let mut h = None;
    for _ in 0..MAX_RESAMPLES {
        let cand = DMatrix::from_fn(n, m, |_, _| cn(rng, 1.0));
        if gram_decompose(&cand).is_ok() {
            h = Some(cand);
            break;
        }
    }
    let h = h.ok_or(MimoError::RankDeficient)?;
    let symbols: Vec<usize> = (0..m).map(|_| rng.gen_range(0..constellation.order())).collect();
    let x = DVector::from_iterator(m, symbols.iter().map(|&s| constellation.points[s]));
    let noise_var = cfg.noise_var();
    let noise = DVector::from_fn(n, |_, _| cn(rng, noise_var));
    let u = &h * &x + noise;
    Ok(ChannelRealization {
        h,
        x,
        symbols,
        u,
        noise_var,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    pub z: DMatrix<C>,
    /// Diagonal of Z, real and positive.
    pub d: DVector<f64>,
    /// Z with its diagonal removed.
    pub e: DMatrix<C>,
}

impl Gram {
    /// ρ(D⁻¹E), from the Hermitian similar matrix D^(−1/2)·E·D^(−1/2).
    pub fn spectral_radius(&self) -> f64 {
        let m = self.d.len();
        let s = DMatrix::from_fn(m, m, |i, j| self.e[(i, j)] / (self.d[i] * self.d[j]).sqrt());
        s.symmetric_eigenvalues().iter().fold(0.0f64, |r, v| r.max(v.abs()))
    }

    pub fn inverse(&self) -> Option<DMatrix<C>> {
        self.z.clone().cholesky().map(|c| c.inverse())
    }
}

pub fn gram_decompose(h: &DMatrix<C>) -> Result<Gram, MimoError> {
    let z = h.adjoint() * h;
    if z.clone().cholesky().is_none() {
        return Err(MimoError::RankDeficient);
    }
    let m = z.nrows();
    let d = DVector::from_fn(m, |i, _| z[(i, i)].re);
    let e = DMatrix::from_fn(m, m, |i, j| if i == j { C::new(0.0, 0.0) } else { z[(i, j)] });
    Ok(Gram { z, d, e })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub x_hat: DVector<C>,
    pub decided: Vec<usize>,
    pub symbol_errors: usize,
    /// RMS distance of the equalized symbols from the transmitted ones.
    pub evm: f64,
    /// ‖Z̃⁻¹ − Z⁻¹‖_F / ‖Z⁻¹‖_F.
    pub inversion_rel_error: f64,
}

/// X̂ = z_inv·Hᴴ·U, sliced to the nearest constellation point.
pub fn linear_detect(
    inst: &ChannelRealization,
    constellation: &Constellation,
    z_inv: &DMatrix<C>,
) -> Result<DetectionResult, MimoError> {
    let exact = gram_decompose(&inst.h)?
        .inverse()
        .ok_or(MimoError::RankDeficient)?;
    let x_hat = z_inv * (inst.h.adjoint() * &inst.u);
    let decided: Vec<usize> = x_hat.iter().map(|&v| constellation.slice(v)).collect();
    let symbol_errors = decided.iter().zip(&inst.symbols).filter(|(a, b)| a != b).count();
    let m = x_hat.len() as f64;
    Ok(DetectionResult {
        evm: ((&x_hat - &inst.x).norm_squared() / m).sqrt(),
        inversion_rel_error: (z_inv - &exact).norm() / exact.norm(),
        x_hat,
        decided,
        symbol_errors,
    })
}

/// How Z⁻¹ is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Inverter {
    Exact,
    Neumann { k: usize, fidelity: NeumannFidelity },
}

impl Inverter {
    pub fn k(&self) -> usize {
        match self {
            Self::Exact => 0,
            Self::Neumann { k, .. } => *k,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Exact => "exact".into(),
            Self::Neumann { fidelity, .. } => fidelity.to_string(),
        }
    }
}

/// Optical resources shared by every trial of a sweep.
pub struct OpticalBackend {
    pub engine: MvmEngine,
    pub mma: MmaUnit,
}

impl OpticalBackend {
    /// Engine of 2M carriers, which runs M×M complex products through the
    /// real embedding.
    pub fn for_users(users: usize, bits: u32, seed: u64) -> Result<Self, MimoError> {
        let mut cfg = EngineConfig::for_channels(2 * users, bits).map_err(PipelineError::from)?;
        cfg.seed = seed;
        let engine = MvmEngine::new(cfg).map_err(PipelineError::from)?;
        let mma = MmaUnit::new(&engine, &MaterialModel::default())?;
        Ok(Self { engine, mma })
    }
}

/// Z⁻¹ by the chosen method. `stream` keys the noise of optical runs.
pub fn invert(
    gram: &Gram,
    inverter: Inverter,
    backend: Option<&OpticalBackend>,
    stream: u64,
) -> Result<DMatrix<C>, MimoError> {
    match inverter {
        Inverter::Exact => gram.inverse().ok_or(MimoError::RankDeficient),
        Inverter::Neumann { k, fidelity } => {
            let z = real_embedding(&gram.z);
            let cfg = NeumannConfig {
                k_max: k,
                fidelity,
                stream,
                ..Default::default()
            };
            let run = match (fidelity, backend) {
                (NeumannFidelity::Float, _) => neumann_invert(&cfg, &z)?,
                (NeumannFidelity::Optical(_), Some(b)) => {
                    neumann_invert_optical(&cfg, &z, &b.engine, &b.mma)?
                }
                (NeumannFidelity::Optical(_), None) => return Err(PipelineError::EngineRequired.into()),
            };
            Ok(from_real_embedding(run.last()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub trial: usize,
    pub k: usize,
    pub fidelity: String,
    pub snr_db: f64,
    pub ser: f64,
    pub inversion_rel_error: f64,
    pub spectral_radius: f64,
}

impl SweepRecord {
    pub const CSV_HEADER: &'static str = "trial,k,fidelity,snr_db,ser,inversion_rel_error,spectral_radius";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6e},{:.6}",
            self.trial, self.k, self.fidelity, self.snr_db, self.ser, self.inversion_rel_error, self.spectral_radius
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub base: MimoConfig,
    pub snrs_db: Vec<f64>,
    pub inverters: Vec<Inverter>,
    pub bits: u32,
}

impl SweepConfig {
    /// Exact inverse plus float Neumann for each k.
    pub fn float_ks(base: MimoConfig, snrs_db: Vec<f64>, ks: &[usize]) -> Self {
        let mut inverters = vec![Inverter::Exact];
        inverters.extend(ks.iter().map(|&k| Inverter::Neumann {
            k,
            fidelity: NeumannFidelity::Float,
        }));
        Self {
            base,
            snrs_db,
            inverters,
            bits: 4,
        }
    }
}

/// Every trial at every SNR, detected by every inverter on the same
/// channel draw. Deterministic for a given seed regardless of threading.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>, MimoError> {
    cfg.base.validate()?;
    let constellation = Constellation::qam(cfg.base.qam);
    let needs_engine = cfg
        .inverters
        .iter()
        .any(|i| matches!(i, Inverter::Neumann { fidelity: NeumannFidelity::Optical(_), .. }));
    let backend = if needs_engine {
        Some(OpticalBackend::for_users(cfg.base.users, cfg.bits, cfg.base.seed)?)
    } else {
        None
    };
    let m = cfg.base.users as f64;
    let mut out = Vec::new();
    for (s, &snr_db) in cfg.snrs_db.iter().enumerate() {
        let point = MimoConfig {
            snr_db,
            ..cfg.base.clone()
        };
        let rows: Vec<Vec<SweepRecord>> = (0..point.trials)
            .into_par_iter()
            .map(|trial| -> Result<Vec<SweepRecord>, MimoError> {
                let seed = stream_seed(point.seed, trial as u64, s as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let inst = generate_instance(&point, &constellation, &mut rng)?;
                let gram = gram_decompose(&inst.h)?;
                let rho = gram.spectral_radius();
                cfg.inverters
                    .iter()
                    .map(|&inv| {
                        let z_inv = invert(&gram, inv, backend.as_ref(), seed)?;
                        let det = linear_detect(&inst, &constellation, &z_inv)?;
                        Ok(SweepRecord {
                            trial,
                            k: inv.k(),
                            fidelity: inv.label(),
                            snr_db,
                            ser: det.symbol_errors as f64 / m,
                            inversion_rel_error: det.inversion_rel_error,
                            spectral_radius: rho,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        out.extend(rows.into_iter().flatten());
    }
    Ok(out)
}

/// Mean SER and inversion error per (k, fidelity, snr), in first-seen order.
pub fn summarize(records: &[SweepRecord]) -> Vec<SweepRecord> {
    let mut keys: Vec<(usize, String, f64)> = Vec::new();
    for r in records {
        let key = (r.k, r.fidelity.clone(), r.snr_db);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(k, fidelity, snr_db)| {
            let group: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.k == k && r.fidelity == fidelity && r.snr_db == snr_db)
                .collect();
            let n = group.len() as f64;
            SweepRecord {
                trial: group.len(),
                k,
                fidelity,
                snr_db,
                ser: group.iter().map(|r| r.ser).sum::<f64>() / n,
                inversion_rel_error: group.iter().map(|r| r.inversion_rel_error).sum::<f64>() / n,
                spectral_radius: group.iter().map(|r| r.spectral_radius).sum::<f64>() / n,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MimoConfig {
        MimoConfig {
            antennas: 16,
            users: 4,
            trials: 50,
            ..Default::default()
        }
    }

    #[test]
    fn constellation_has_unit_energy_and_slices_itself() {
        for order in [4, 16, 64, 256] {
            let c = Constellation::qam(order);
            let e = c.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!((e - 1.0).abs() < 1e-12);
            for (i, p) in c.points.iter().enumerate() {
                assert_eq!(c.slice(*p), i);
                assert_eq!(c.slice(*p + C::new(0.3 * c.step, -0.3 * c.step)), i);
            }
        }
    }

    #[test]
    fn config_rules() {
        assert!(MimoConfig { users: 64, ..Default::default() }.validate().is_err());
        assert!(MimoConfig { qam: 8, ..Default::default() }.validate().is_err());
        assert!(MimoConfig { qam: 36, ..Default::default() }.validate().is_err());
        assert!(MimoConfig::default().validate().is_ok());
    }

    #[test]
    fn noiseless_exact_detection_is_perfect() {
        let cfg = MimoConfig {
            snr_db: f64::INFINITY,
            ..small()
        };
        let c = Constellation::qam(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let inst = generate_instance(&cfg, &c, &mut rng).unwrap();
            assert_eq!(inst.u, &inst.h * &inst.x);
            let g = gram_decompose(&inst.h).unwrap();
            let det = linear_detect(&inst, &c, &g.inverse().unwrap()).unwrap();
            assert_eq!(det.symbol_errors, 0);
            assert!(det.inversion_rel_error < 1e-12);
        }
    }

    #[test]
    fn gram_is_hermitian_and_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = generate_instance(&small(), &Constellation::qam(16), &mut rng).unwrap();
        let g = gram_decompose(&inst.h).unwrap();
        assert!((&g.z - g.z.adjoint()).norm() < 1e-12);
        let d = DMatrix::from_diagonal(&g.d.map(|v| C::new(v, 0.0)));
        assert_eq!(d + &g.e, g.z);
        assert!(g.d.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_inverse_gives_zero_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = Constellation::qam(16);
        let inst = generate_instance(&small(), &c, &mut rng).unwrap();
        let det = linear_detect(&inst, &c, &DMatrix::zeros(4, 4)).unwrap();
        assert!(det.x_hat.iter().all(|v| *v == C::new(0.0, 0.0)));
    }

    #[test]
    fn rank_deficient_channel_is_rejected() {
        let h = DMatrix::from_fn(8, 2, |i, _| C::new(i as f64, 0.0));
        assert_eq!(gram_decompose(&h).unwrap_err(), MimoError::RankDeficient);
    }

    #[test]
    fn k1_is_the_diagonal_detector() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = generate_instance(&small(), &Constellation::qam(16), &mut rng).unwrap();
        let g = gram_decompose(&inst.h).unwrap();
        let inv = invert(&g, Inverter::Neumann { k: 1, fidelity: NeumannFidelity::Float }, None, 0).unwrap();
        let diag = DMatrix::from_diagonal(&g.d.map(|v| C::new(1.0 / v, 0.0)));
        assert!((inv - diag).norm() < 1e-15);
    }

    #[test]
    fn sweep_is_deterministic_and_converges() {
        let cfg = SweepConfig::float_ks(small(), vec![10.0, 20.0], &[1, 2, 4, 8]);
        let a = sweep(&cfg).unwrap();
        assert_eq!(a, sweep(&cfg).unwrap());
        assert_eq!(a.len(), 2 * 50 * 5);
        let summary = summarize(&a);
        let errs: Vec<f64> = summary
            .iter()
            .filter(|r| r.snr_db == 20.0 && r.fidelity == "float")
            .map(|r| r.inversion_rel_error)
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    }

    #[test]
    fn optical_needs_backend() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = generate_instance(&small(), &Constellation::qam(16), &mut rng).unwrap();
        let g = gram_decompose(&inst.h).unwrap();
        let inv = Inverter::Neumann {
            k: 2,
            fidelity: NeumannFidelity::Optical(crate::mvm_engine::FidelityMode::Ideal),
        };
        assert!(invert(&g, inv, None, 0).is_err());
    }
}
