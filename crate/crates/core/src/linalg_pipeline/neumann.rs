//! Truncated Neumann-series inverse, Y[k] = B + A·Y[k−1] with Y[0] = 0,
//! A = −D⁻¹E and B = D⁻¹.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::encoding::SignedMatrix;
use super::mmm::{sub_op, MmaUnit, MmmMode, Pipeline};
use super::PipelineError;
use crate::mvm_engine::{FidelityMode, MvmEngine};

/// Consecutive residual increases that flag a run as diverging.
pub const DIVERGENCE_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NeumannFidelity {
    /// Exact floating-point recurrence.
    Float,
    /// Every product goes through the optical engine.
    Optical(FidelityMode),
}

impl fmt::Display for NeumannFidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Float => f.pad("float"),
            Self::Optical(m) => m.fmt(f),
        }
    }
}

impl FromStr for NeumannFidelity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("float") {
            Ok(Self::Float)
        } else {
            s.parse().map(Self::Optical)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeumannConfig {
    pub k_max: usize,
    /// Feed Y[k−1] back through L-bit operands; off keeps it in floating point.
    pub requantize: bool,
    pub mmm_mode: MmmMode,
    pub fidelity: NeumannFidelity,
    /// Keys the noise streams of optical runs, so repeated inversions on one
    /// engine draw independent noise.
    pub stream: u64,
}

impl Default for NeumannConfig {
    fn default() -> Self {
        Self {
            k_max: 4,
            requantize: true,
            mmm_mode: MmmMode::Parallel,
            fidelity: NeumannFidelity::Float,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub residual: f64,
    /// Largest entry of |Y[k] − Z⁻¹|; absent when Z is singular.
    pub max_abs_error: Option<f64>,
    pub cycles: u64,
    pub fidelity: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeumannRun {
    /// Y[1] ..= Y[k_max]; Y[0] is the zero matrix.
    pub iterates: Vec<DMatrix<f64>>,
    /// ‖I − Y[k]·Z‖_F / √M for each stored iterate.
    pub residuals: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub cycles: u64,
    /// Iteration at which the residual had grown three times in a row.
    pub diverged_at: Option<usize>,
}

impl NeumannRun {
    /// Y[k], with Y[0] = 0.
    pub fn iterate(&self, k: usize) -> DMatrix<f64> {
        match k {
            0 => {
                let m = self.iterates.first().map_or(0, |y| y.nrows());
                DMatrix::zeros(m, m)
            }
            _ => self.iterates[k - 1].clone(),
        }
    }

    pub fn last(&self) -> &DMatrix<f64> {
        self.iterates.last().expect("k_max >= 1")
    }
}

/// A = −D⁻¹E and B = D⁻¹ for a square Z with nonzero diagonal.
pub fn neumann_split(z: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), PipelineError> {
    if !z.is_square() || z.nrows() == 0 {
        return Err(PipelineError::DimensionMismatch(format!(
            "{}x{} is not a square matrix",
            z.nrows(),
            z.ncols()
        )));
    }
    if let Some(i) = (0..z.nrows()).find(|&i| z[(i, i)] == 0.0 || !z[(i, i)].is_finite()) {
        return Err(PipelineError::ZeroDiagonal { index: i });
    }
    let m = z.nrows();
    let b = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 / z[(i, i)] } else { 0.0 });
    let a = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { -z[(i, j)] / z[(i, i)] });
    Ok((a, b))
}

/// Σ_{n<k} (−D⁻¹E)ⁿ·D⁻¹ evaluated term by term.
pub fn neumann_series(z: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>, PipelineError> {
    let (a, b) = neumann_split(z)?;
    let mut term = b.clone();
    let mut sum = DMatrix::zeros(z.nrows(), z.ncols());
    for _ in 0..k {
        sum += &term;
        term = &a * term;
    }
    Ok(sum)
}

pub fn inversion_residual(y: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
    let m = z.nrows();
    (DMatrix::identity(m, m) - y * z).norm() / (m as f64).sqrt()
}

/// Real 2M×2M form [[X, −Y], [Y, X]] of X + iY. Products and inverses
/// commute with the embedding, so complex recurrences run on real engines.
pub fn real_embedding(z: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (r, c) = z.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let v = z[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

/// Inverse of [`real_embedding`], reading the left block column.
pub fn from_real_embedding(e: &DMatrix<f64>) -> DMatrix<Complex64> {
    let (r, c) = (e.nrows() / 2, e.ncols() / 2);
    DMatrix::from_fn(r, c, |i, j| Complex64::new(e[(i, j)], e[(i + r, j)]))
}

struct Tracker {
    exact: Option<DMatrix<f64>>,
    fidelity: String,
    rising: usize,
    run: NeumannRun,
}

impl Tracker {
    fn new(z: &DMatrix<f64>, fidelity: NeumannFidelity) -> Self {
        Self {
            exact: z.clone().try_inverse(),
            fidelity: fidelity.to_string(),
            rising: 0,
            run: NeumannRun {
                iterates: Vec::new(),
                residuals: Vec::new(),
                records: Vec::new(),
                cycles: 0,
                diverged_at: None,
            },
        }
    }

    fn push(&mut self, y: DMatrix<f64>, z: &DMatrix<f64>, cycles: u64) {
        let k = self.run.iterates.len() + 1;
        let residual = inversion_residual(&y, z);
        if let Some(&prev) = self.run.residuals.last() {
            self.rising = if residual > prev { self.rising + 1 } else { 0 };
            if self.rising >= DIVERGENCE_RUN && self.run.diverged_at.is_none() {
                self.run.diverged_at = Some(k);
            }
        }
        self.run.cycles += cycles;
        self.run.records.push(IterationRecord {
            k,
            residual,
            max_abs_error: self.exact.as_ref().map(|x| (&y - x).amax()),
            cycles: self.run.cycles,
            fidelity: self.fidelity.clone(),
        });
        self.run.residuals.push(residual);
        self.run.iterates.push(y);
    }
}

fn check(cfg: &NeumannConfig) -> Result<(), PipelineError> {
    if cfg.k_max == 0 {
        return Err(PipelineError::InvalidConfig("k_max must be at least 1".into()));
    }
    Ok(())
}

/// Runs the recurrence in exact floating point. Optical fidelities need
/// [`neumann_invert_optical`].
pub fn neumann_invert(cfg: &NeumannConfig, z: &DMatrix<f64>) -> Result<NeumannRun, PipelineError> {
    check(cfg)?;
    if let NeumannFidelity::Optical(_) = cfg.fidelity {
        return Err(PipelineError::EngineRequired);
    }
    let (a, b) = neumann_split(z)?;
    let mut t = Tracker::new(z, cfg.fidelity);
    let mut y = DMatrix::zeros(z.nrows(), z.ncols());
    for _ in 0..cfg.k_max {
        y = &b + &a * &y;
        t.push(y.clone(), z, 0);
    }
    Ok(t.run)
}

/// Runs the recurrence through `engine`. Each iteration is four signed
/// passes; the two passes carrying A⁺ also add B⁺ or B⁻ on the second comb,
/// so every pass ends in exactly one O/E conversion.
pub fn neumann_invert_optical(
    cfg: &NeumannConfig,
    z: &DMatrix<f64>,
    engine: &MvmEngine,
    mma: &MmaUnit,
) -> Result<NeumannRun, PipelineError> {
    check(cfg)?;
    let mode = match cfg.fidelity {
        NeumannFidelity::Float => return neumann_invert(cfg, z),
        NeumannFidelity::Optical(m) => m,
    };
    let m = engine.channels();
    if z.nrows() != m || z.ncols() != m {
        return Err(PipelineError::DimensionMismatch(format!(
            "engine is {m}x{m}, Z is {}x{}",
            z.nrows(),
            z.ncols()
        )));
    }
    let bits = engine.bits();
    let (a, b) = neumann_split(z)?;
    let a_enc = SignedMatrix::encode(&a, bits);
    let b_enc = SignedMatrix::encode(&b, bits);
    let pipe = Pipeline::new(engine, mode, cfg.mmm_mode).with_mma(mma);
    let pass_cycles = match cfg.mmm_mode {
        MmmMode::Parallel => 1,
        MmmMode::TimeMux => m as u64,
    };

    let mut t = Tracker::new(z, cfg.fidelity);
    let mut y = DMatrix::zeros(m, m);
    for k in 1..=cfg.k_max {
        if !cfg.requantize {
            y = b_enc.decode() + a_enc.decode() * &y;
            t.push(y.clone(), z, 4 * pass_cycles);
            continue;
        }
        let y_enc = SignedMatrix::encode(&y, bits);
        let op = sub_op(cfg.stream, k as u64);
        let p1 = pipe.run_mmm_mma(&a_enc.pos, &y_enc.pos, &b_enc.pos, sub_op(op, 1))?;
        let p2 = pipe.run_mmm(&a_enc.neg, &y_enc.neg, sub_op(op, 2))?;
        let p3 = pipe.run_mmm_mma(&a_enc.pos, &y_enc.neg, &b_enc.neg, sub_op(op, 3))?;
        let p4 = pipe.run_mmm(&a_enc.neg, &y_enc.pos, sub_op(op, 4))?;
        let decode = |q: &crate::mvm_engine::QuantizedMatrix| {
            DMatrix::from_fn(m, m, |i, j| q.value(i, j))
        };
        y = decode(&p1.value) + decode(&p2.value) - decode(&p3.value) - decode(&p4.value);
        t.push(y.clone(), z, p1.cycles + p2.cycles + p3.cycles + p4.cycles);
    }
    Ok(t.run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvm_engine::EngineConfig;
    use crate::wdm_planner::MaterialModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dominant(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut z = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        z = &z + z.transpose();
        for i in 0..m {
            z[(i, i)] = 2.0 * m as f64 + rng.gen_range(0.0..1.0);
        }
        z
    }

    #[test]
    fn two_by_two_by_hand() {
        let z = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]);
        let run = neumann_invert(&NeumannConfig { k_max: 2, ..Default::default() }, &z).unwrap();
        assert_eq!(run.iterates.len(), 2);
        assert_eq!(run.iterate(0), DMatrix::zeros(2, 2));
        assert_eq!(run.iterate(2), DMatrix::from_row_slice(2, 2, &[0.5, -0.125, -0.125, 0.5]));
        let exact = z.try_inverse().unwrap();
        assert!((exact[(0, 0)] - 0.5333).abs() < 1e-4 && (exact[(0, 1)] + 0.1333).abs() < 1e-4);
    }

    #[test]
    fn diagonal_z_is_exact_after_one_step() {
        let z = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 4.0, 0.5]));
        let run = neumann_invert(&NeumannConfig { k_max: 1, ..Default::default() }, &z).unwrap();
        assert_eq!(run.residuals[0], 0.0);
    }

    #[test]
    fn recurrence_matches_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let z = DMatrix::from_fn(8, 8, |i, j| if i == j { rng.gen_range(1.0..3.0) } else { rng.gen_range(-0.5..0.5) });
            let run = neumann_invert(&NeumannConfig { k_max: 6, ..Default::default() }, &z).unwrap();
            for k in 1..=6 {
                let series = neumann_series(&z, k).unwrap();
                assert!((run.iterate(k) - &series).norm() / series.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_falls_for_dominant_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = dominant(8, &mut rng);
        let run = neumann_invert(&NeumannConfig { k_max: 5, ..Default::default() }, &z).unwrap();
        assert!(run.residuals.windows(2).all(|w| w[1] < w[0]));
        assert!(run.diverged_at.is_none());
    }

    #[test]
    fn divergence_is_flagged_not_fatal() {
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let run = neumann_invert(&NeumannConfig { k_max: 6, ..Default::default() }, &z).unwrap();
        assert_eq!(run.iterates.len(), 6);
        assert_eq!(run.diverged_at, Some(4));
    }

    #[test]
    fn errors() {
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 0.0]);
        assert!(matches!(
            neumann_invert(&NeumannConfig::default(), &z),
            Err(PipelineError::ZeroDiagonal { index: 1 })
        ));
        let cfg = NeumannConfig { k_max: 0, ..Default::default() };
        assert!(neumann_invert(&cfg, &DMatrix::identity(2, 2)).is_err());
        let cfg = NeumannConfig {
            fidelity: NeumannFidelity::Optical(FidelityMode::Ideal),
            ..Default::default()
        };
        assert!(matches!(
            neumann_invert(&cfg, &DMatrix::identity(2, 2)),
            Err(PipelineError::EngineRequired)
        ));
    }

    #[test]
    fn embedding_round_trips_and_commutes_with_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = DMatrix::from_fn(3, 3, |i, j| {
            Complex64::new(rng.gen_range(-1.0..1.0) + if i == j { 4.0 } else { 0.0 }, rng.gen_range(-1.0..1.0))
        });
        let e = real_embedding(&z);
        assert_eq!(from_real_embedding(&e), z);
        let inv = from_real_embedding(&e.try_inverse().unwrap());
        let direct = z.try_inverse().unwrap();
        assert!((inv - direct).norm() < 1e-12);
    }

    #[test]
    fn optical_ideal_converges_roughly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = dominant(8, &mut rng);
        let engine = MvmEngine::new(EngineConfig::for_channels(8, 4).unwrap()).unwrap();
        let unit = MmaUnit::new(&engine, &MaterialModel::default()).unwrap();
        for mode in FidelityMode::ALL {
            for sched in [MmmMode::Parallel, MmmMode::TimeMux] {
                let cfg = NeumannConfig {
                    k_max: 3,
                    mmm_mode: sched,
                    fidelity: NeumannFidelity::Optical(mode),
                    ..Default::default()
                };
                let run = neumann_invert_optical(&cfg, &z, &engine, &unit).unwrap();
                assert!(run.residuals[2] < 0.2, "{mode} {sched}: {:?}", run.residuals);
                let per_pass = if sched == MmmMode::Parallel { 1 } else { 8 };
                assert_eq!(run.cycles, 3 * 4 * per_pass);
            }
        }
    }

    #[test]
    fn float_carry_only_sees_operand_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = dominant(8, &mut rng);
        let engine = MvmEngine::ideal(EngineConfig::for_channels(8, 4).unwrap()).unwrap();
        let cfg = NeumannConfig {
            k_max: 6,
            requantize: false,
            fidelity: NeumannFidelity::Optical(FidelityMode::Ideal),
            ..Default::default()
        };
        let unit = MmaUnit::new(&engine, &MaterialModel::default()).unwrap();
        let run = neumann_invert_optical(&cfg, &z, &engine, &unit).unwrap();
        let float = neumann_invert(&NeumannConfig { k_max: 6, ..Default::default() }, &z).unwrap();
        assert!(run.residuals[5] >= float.residuals[5]);
        assert!(run.residuals[5] < 0.1);
    }
}
