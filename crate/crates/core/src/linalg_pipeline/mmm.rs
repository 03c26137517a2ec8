//! Matrix products and sums built from column MVMs.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::encoding::{ComplexMatrix, SignedMatrix, SignedVector};
use super::PipelineError;
use crate::device_models::{calibrate_eo, EoCalibrationTable};
use crate::mvm_engine::{
    golden_mvm, max_code, stream_seed, FidelityMode, MvmEngine, QuantizedMatrix, QuantizedVector,
};
use crate::wdm_planner::{plan_mma_spectrum, MaterialModel, MmaSpectrum};

/// How the M column products of one MMM are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MmmMode {
    /// M engine instances, one cycle.
    Parallel,
    /// One instance reused for M cycles.
    TimeMux,
}

impl MmmMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Parallel => "parallel",
            Self::TimeMux => "time_mux",
        }
    }
}

impl fmt::Display for MmmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for MmmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "parallel" => Ok(Self::Parallel),
            "time_mux" | "timemux" => Ok(Self::TimeMux),
            other => Err(format!("unknown MMM mode '{other}'")),
        }
    }
}

/// A result plus what it cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scheduled<T> {
    pub value: T,
    pub cycles: u64,
    pub instances: usize,
}

/// Key of a sub-operation, so noise streams do not depend on scheduling.
pub fn sub_op(op: u64, tag: u64) -> u64 {
    stream_seed(op, tag, 0x6d6d_6d)
}

/// Second comb and its b-modulators. Present only when the plan admits an
/// interleaved spectrum.
#[derive(Debug, Clone)]
pub struct MmaUnit {
    pub spectrum: MmaSpectrum,
    tables: Option<Vec<EoCalibrationTable>>,
}

impl MmaUnit {
    pub fn new(engine: &MvmEngine, mat: &MaterialModel) -> Result<Self, PipelineError> {
        let cfg = engine.config();
        let spectrum = plan_mma_spectrum(&cfg.plan, mat)?;
        let tables = if engine.is_calibrated() {
            let levels = cfg.devices.drive_levels();
            Some(
                spectrum
                    .offset_lambdas_nm
                    .iter()
                    .map(|&l| calibrate_eo(&cfg.devices.mrm_for(l), &levels, l))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(crate::mvm_engine::EngineError::from)?,
            )
        } else {
            None
        };
        Ok(Self { spectrum, tables })
    }

    /// Normalized transmitted fraction of a b code on row `i`'s carrier.
    fn b_fraction(&self, i: usize, code: u32, bits: u32) -> Option<f64> {
        let t = &self.tables.as_ref()?[i];
        let lo = t.gain(0);
        Some((t.gain(code) - lo) / (t.gain(max_code(bits)) - lo))
    }
}

/// An engine bound to a fidelity mode and a schedule.
#[derive(Debug, Clone)]
pub struct Pipeline<'e> {
    pub engine: &'e MvmEngine,
    pub fidelity: FidelityMode,
    pub schedule: MmmMode,
    pub mma: Option<&'e MmaUnit>,
}

impl<'e> Pipeline<'e> {
    pub fn new(engine: &'e MvmEngine, fidelity: FidelityMode, schedule: MmmMode) -> Self {
        Self {
            engine,
            fidelity,
            schedule,
            mma: None,
        }
    }

    /// Adds a second comb built for this engine.
    pub fn with_mma(mut self, unit: &'e MmaUnit) -> Self {
        self.mma = Some(unit);
        self
    }

    pub fn channels(&self) -> usize {
        self.engine.channels()
    }

    pub fn bits(&self) -> u32 {
        self.engine.bits()
    }

    fn cost(&self, cols: usize) -> (u64, usize) {
        match self.schedule {
            MmmMode::Parallel => (1, cols),
            MmmMode::TimeMux => (cols as u64, 1),
        }
    }

    fn check_square(&self, rows: usize, cols: usize) -> Result<(), PipelineError> {
        let m = self.channels();
        if rows != m || cols != m {
            return Err(PipelineError::DimensionMismatch(format!(
                "engine is {m}x{m}, operand is {rows}x{cols}"
            )));
        }
        Ok(())
    }

    /// Column j of the result is the MVM of `a` with column j of `y`.
    pub fn run_mmm(
        &self,
        a: &QuantizedMatrix,
        y: &QuantizedMatrix,
        op: u64,
    ) -> Result<Scheduled<QuantizedMatrix>, PipelineError> {
        self.check_square(y.rows, y.cols)?;
        let dark = silent(&a.codes) || silent(&y.codes);
        let column = |j: usize| {
            let yj = y.column(j);
            if dark {
                return golden_mvm(a, &yj);
            }
            self.engine
                .run_mvm_op(self.fidelity, a, &yj, sub_op(op, j as u64))
                .map(|(v, _)| v)
        };
        let cols: Vec<QuantizedVector> = match self.schedule {
            MmmMode::Parallel => (0..y.cols).into_par_iter().map(column).collect::<Result<_, _>>()?,
            MmmMode::TimeMux => (0..y.cols).map(column).collect::<Result<_, _>>()?,
        };
        let (cycles, instances) = self.cost(y.cols);
        Ok(Scheduled {
            value: QuantizedMatrix::from_columns(&cols)?,
            cycles,
            instances,
        })
    }

    /// (a⁺ − a⁻)(y⁺ − y⁻) as four non-negative passes, subtracted digitally.
    pub fn signed_mvm(
        &self,
        a: &SignedMatrix,
        y: &SignedVector,
        op: u64,
    ) -> Result<SignedVector, PipelineError> {
        let pass = |m: &QuantizedMatrix, v: &QuantizedVector, tag: u64| {
            if silent(&m.codes) || silent(&v.codes) {
                return golden_mvm(m, v);
            }
            self.engine
                .run_mvm_op(self.fidelity, m, v, sub_op(op, tag))
                .map(|(out, _)| out)
        };
        let pp = pass(&a.pos, &y.pos, 0)?;
        let nn = pass(&a.neg, &y.neg, 1)?;
        let pn = pass(&a.pos, &y.neg, 2)?;
        let np = pass(&a.neg, &y.pos, 3)?;
        let codes: Vec<i64> = (0..pp.len())
            .map(|i| {
                pp.codes[i] as i64 + nn.codes[i] as i64 - pn.codes[i] as i64 - np.codes[i] as i64
            })
            .collect();
        SignedVector::from_codes(&codes, pp.scale, pp.bits)
    }

    /// Unclamped signed code differences of a signed MMM, row-major.
    fn signed_codes(
        &self,
        a: &SignedMatrix,
        y: &SignedMatrix,
        op: u64,
    ) -> Result<Scheduled<(Vec<i64>, f64)>, PipelineError> {
        let pp = self.run_mmm(&a.pos, &y.pos, sub_op(op, 0))?;
        let nn = self.run_mmm(&a.neg, &y.neg, sub_op(op, 1))?;
        let pn = self.run_mmm(&a.pos, &y.neg, sub_op(op, 2))?;
        let np = self.run_mmm(&a.neg, &y.pos, sub_op(op, 3))?;
        let codes = (0..pp.value.codes.len())
            .map(|k| {
                pp.value.codes[k] as i64 + nn.value.codes[k] as i64
                    - pn.value.codes[k] as i64
                    - np.value.codes[k] as i64
            })
            .collect();
        Ok(Scheduled {
            value: (codes, pp.value.scale),
            cycles: pp.cycles + nn.cycles + pn.cycles + np.cycles,
            instances: pp.instances,
        })
    }

    pub fn signed_mmm(
        &self,
        a: &SignedMatrix,
        y: &SignedMatrix,
        op: u64,
    ) -> Result<Scheduled<SignedMatrix>, PipelineError> {
        let s = self.signed_codes(a, y, op)?;
        let (codes, scale) = s.value;
        Ok(Scheduled {
            value: SignedMatrix::from_codes(a.rows(), y.cols(), &codes, scale, self.bits())?,
            cycles: s.cycles,
            instances: s.instances,
        })
    }

    /// Four real signed products. The real and imaginary sums can reach
    /// twice a single product's full scale, so the result word is one bit
    /// wider with the same LSB.
    pub fn complex_mmm(
        &self,
        a: &ComplexMatrix,
        y: &ComplexMatrix,
        op: u64,
    ) -> Result<Scheduled<ComplexMatrix>, PipelineError> {
        if a.re.scale() != a.im.scale() || y.re.scale() != y.im.scale() {
            return Err(PipelineError::DimensionMismatch(
                "real and imaginary parts must share a scale".into(),
            ));
        }
        let rr = self.signed_codes(&a.re, &y.re, sub_op(op, 10))?;
        let ii = self.signed_codes(&a.im, &y.im, sub_op(op, 11))?;
        let ri = self.signed_codes(&a.re, &y.im, sub_op(op, 12))?;
        let ir = self.signed_codes(&a.im, &y.re, sub_op(op, 13))?;
        let bits = self.bits();
        let wide = bits + 1;
        let scale = rr.value.1 * max_code(wide) as f64 / max_code(bits) as f64;
        let combine = |x: &[i64], y: &[i64], sign: i64| -> Vec<i64> {
            x.iter().zip(y).map(|(a, b)| a + sign * b).collect()
        };
        let (rows, cols) = (a.re.rows(), y.re.cols());
        let re = combine(&rr.value.0, &ii.value.0, -1);
        let im = combine(&ri.value.0, &ir.value.0, 1);
        Ok(Scheduled {
            value: ComplexMatrix {
                re: SignedMatrix::from_codes(rows, cols, &re, scale, wide)?,
                im: SignedMatrix::from_codes(rows, cols, &im, scale, wide)?,
            },
            cycles: rr.cycles + ii.cycles + ri.cycles + ir.cycles,
            instances: rr.instances,
        })
    }

    fn mma_unit(&self) -> Result<&MmaUnit, PipelineError> {
        self.mma.ok_or(PipelineError::PlanMissing)
    }

    /// Shared O/E of two addends, each given as a fraction of its own full
    /// scale and weighted onto the common one. Each addend gets half of the
    /// detector's range, so the sum never clips.
    fn sum_to_code(&self, frac_x: f64, frac_b: f64, w: (f64, f64), op: u64, lane: usize) -> Result<u32, PipelineError> {
        let fs = self.engine.config().devices.adc.full_scale_v;
        let v = 0.5 * (w.0 * frac_x + w.1 * frac_b) * fs;
        let noise = if self.fidelity == FidelityMode::Full && self.engine.config().noise_scale > 0.0 {
            let dev = &self.engine.config().devices;
            let current = (v / fs).max(0.0) * dev.dr_oe_w * dev.responsivity;
            let sigma = self.engine.noise_sigma(current)?;
            let z: f64 = StandardNormal.sample(&mut self.engine.row_rng(op, lane));
            sigma * z
        } else {
            0.0
        };
        Ok(self.engine.quantize(v + noise))
    }

    fn weights(sx: f64, sb: f64) -> (f64, f64, f64) {
        let s = sx.max(sb);
        if s > 0.0 {
            (sx / s, sb / s, 2.0 * s)
        } else {
            (0.0, 0.0, 2.0)
        }
    }

    /// Elementwise sum of two code matrices through the doubled-cavity
    /// detector. The result carries twice the larger input scale.
    pub fn run_mma(&self, x: &QuantizedMatrix, b: &QuantizedMatrix, op: u64) -> Result<QuantizedMatrix, PipelineError> {
        let unit = self.mma_unit()?;
        if x.rows != b.rows || x.cols != b.cols || x.bits != b.bits {
            return Err(PipelineError::DimensionMismatch(format!(
                "{}x{} plus {}x{}",
                x.rows, x.cols, b.rows, b.cols
            )));
        }
        self.check_square(x.rows, x.cols)?;
        let bits = x.bits;
        let max = max_code(bits);
        let (w1, w2, scale) = Self::weights(x.scale, b.scale);
        let mut out = QuantizedMatrix::zeros(x.rows, x.cols, scale, bits);
        for i in 0..x.rows {
            for j in 0..x.cols {
                let (cx, cb) = (x.get(i, j), b.get(i, j));
                let code = if self.fidelity == FidelityMode::Ideal {
                    ((cx as f64 * w1 + cb as f64 * w2) / 2.0 + 0.5).floor().min(max as f64) as u32
                } else {
                    let tables = self
                        .engine
                        .calibration_tables()
                        .ok_or(crate::mvm_engine::EngineError::UncalibratedDevice)?;
                    let t = &tables[i];
                    let fx = (t.gain(cx) - t.gain(0)) / (t.gain(max) - t.gain(0));
                    let fb = unit
                        .b_fraction(i, cb, bits)
                        .ok_or(crate::mvm_engine::EngineError::UncalibratedDevice)?;
                    self.sum_to_code(fx, fb, (w1, w2), sub_op(op, j as u64), i)?
                };
                out.set(i, j, code);
            }
        }
        Ok(out)
    }

    /// a·y + b with the sum formed optically ahead of a single O/E per
    /// element. The result carries scale 2·max(M·a.scale·y.scale, b.scale).
    pub fn run_mmm_mma(
        &self,
        a: &QuantizedMatrix,
        y: &QuantizedMatrix,
        b: &QuantizedMatrix,
        op: u64,
    ) -> Result<Scheduled<QuantizedMatrix>, PipelineError> {
        let unit = self.mma_unit()?;
        let m = self.channels();
        self.check_square(a.rows, a.cols)?;
        self.check_square(y.rows, y.cols)?;
        self.check_square(b.rows, b.cols)?;
        if a.bits != y.bits || a.bits != b.bits || a.bits != self.bits() {
            return Err(PipelineError::DimensionMismatch("operand widths differ".into()));
        }
        let bits = self.bits();
        let max = max_code(bits);
        let products = m as f64 * (max as f64).powi(2);
        // An all-zero addend carries no light, so it does not claim half the range.
        let sx = if silent(&a.codes) || silent(&y.codes) { 0.0 } else { m as f64 * a.scale * y.scale };
        let (w1, w2, scale) = Self::weights(sx, b.scale);
        let (cycles, instances) = self.cost(m);
        if sx == 0.0 && silent(&b.codes) {
            return Ok(Scheduled {
                value: QuantizedMatrix::zeros(m, m, scale, bits),
                cycles,
                instances,
            });
        }

        let column = |j: usize| -> Result<Vec<u32>, PipelineError> {
            let yj = y.column(j);
            let op_j = sub_op(op, j as u64);
            (0..m)
                .map(|i| {
                    if self.fidelity == FidelityMode::Ideal {
                        let sum: u64 = a.row(i).iter().zip(&yj.codes).map(|(&p, &q)| p as u64 * q as u64).sum();
                        let x = max as f64 * (w1 * sum as f64 / products + w2 * b.get(i, j) as f64 / max as f64);
                        Ok((x / 2.0 + 0.5).floor().min(max as f64) as u32)
                    } else {
                        let fs = self.engine.config().devices.adc.full_scale_v;
                        let (_, v) = self.engine.row_analog(i, a.row(i), &yj.codes)?;
                        let fb = unit
                            .b_fraction(i, b.get(i, j), bits)
                            .ok_or(crate::mvm_engine::EngineError::UncalibratedDevice)?;
                        self.sum_to_code(v / fs, fb, (w1, w2), op_j, i)
                    }
                })
                .collect()
        };
        let cols: Vec<Vec<u32>> = match self.schedule {
            MmmMode::Parallel => (0..m).into_par_iter().map(column).collect::<Result<_, _>>()?,
            MmmMode::TimeMux => (0..m).map(column).collect::<Result<_, _>>()?,
        };
        let mut out = QuantizedMatrix::zeros(m, m, scale, bits);
        for (j, col) in cols.iter().enumerate() {
            for (i, &c) in col.iter().enumerate() {
                out.set(i, j, c);
            }
        }
        Ok(Scheduled {
            value: out,
            cycles,
            instances,
        })
    }
}

/// No light reaches the detectors, so the pass is gated off and reads zero.
fn silent(codes: &[u32]) -> bool {
    codes.iter().all(|&c| c == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvm_engine::EngineConfig;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ideal(m: usize) -> MvmEngine {
        MvmEngine::ideal(EngineConfig::for_channels(m, 4).unwrap()).unwrap()
    }

    fn random_codes(m: usize, rng: &mut ChaCha8Rng) -> QuantizedMatrix {
        QuantizedMatrix::new(m, m, (0..m * m).map(|_| rng.gen_range(0..16)).collect(), 1.0, 4).unwrap()
    }

    fn random_real(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn diagonal_probe_returns_scaled_columns() {
        let e = ideal(4);
        let p = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::Parallel);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_codes(4, &mut rng);
        let mut eye = QuantizedMatrix::zeros(4, 4, 1.0, 4);
        for i in 0..4 {
            eye.set(i, i, 15);
        }
        let out = p.run_mmm(&a, &eye, 0).unwrap().value;
        for j in 0..4 {
            let expect = golden_mvm(&a, &eye.column(j)).unwrap();
            assert_eq!(out.column(j).codes, expect.codes);
        }
    }

    #[test]
    fn schedules_agree_and_charge_cycles() {
        let e = ideal(8);
        let par = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::Parallel);
        let mux = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::TimeMux);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let a = random_codes(8, &mut rng);
            let y = random_codes(8, &mut rng);
            let p = par.run_mmm(&a, &y, 3).unwrap();
            let t = mux.run_mmm(&a, &y, 3).unwrap();
            assert_eq!(p.value, t.value);
            assert_eq!((p.cycles, p.instances), (1, 8));
            assert_eq!((t.cycles, t.instances), (8, 1));
        }
    }

    #[test]
    fn signed_mvm_is_within_two_lsb() {
        let e = ideal(8);
        let p = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::Parallel);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let a = SignedMatrix::encode(&random_real(8, &mut rng), 4);
            let y = SignedMatrix::encode(&random_real(8, &mut rng).columns(0, 1).into_owned(), 4).column(0);
            let out = p.signed_mvm(&a, &y, 0).unwrap();
            assert!(out.is_canonical());
            let exact = a.decode() * y.decode();
            let lsb = out.scale() / 15.0;
            for (o, x) in out.decode().iter().zip(exact.iter()) {
                assert!((o - x).abs() <= 2.0 * lsb + 1e-12, "{o} vs {x}");
            }
            let flipped = p.signed_mvm(&a, &y.negated(), 0).unwrap();
            assert_eq!(flipped, out.negated());
        }
    }

    #[test]
    fn positive_operands_reduce_to_one_pass() {
        let e = ideal(4);
        let p = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::Parallel);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_codes(4, &mut rng);
        let y = a.column(1);
        let signed = SignedMatrix {
            neg: QuantizedMatrix::zeros(4, 4, 1.0, 4),
            pos: a.clone(),
        };
        let sy = SignedVector {
            neg: QuantizedVector::zeros(4, 1.0, 4),
            pos: y.clone(),
        };
        let out = p.signed_mvm(&signed, &sy, 0).unwrap();
        assert_eq!(out.pos.codes, golden_mvm(&a, &y).unwrap().codes);
    }

    #[test]
    fn complex_product_tracks_float() {
        let e = ideal(4);
        let p = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::TimeMux);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cplx = |rng: &mut ChaCha8Rng| {
            DMatrix::from_fn(4, 4, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        };
        for _ in 0..200 {
            let a = ComplexMatrix::encode(&cplx(&mut rng), 4);
            let y = ComplexMatrix::encode(&cplx(&mut rng), 4);
            let out = p.complex_mmm(&a, &y, 0).unwrap();
            assert_eq!(out.cycles, 16 * 4);
            let exact = a.decode() * y.decode();
            let lsb = 4.0 * a.scale() * y.scale() / 15.0;
            for (o, x) in out.value.decode().iter().zip(exact.iter()) {
                assert!((o - x).norm() <= 4.0 * lsb * 2f64.sqrt() + 1e-12);
                assert!((o.re - x.re).abs() <= 4.0 * lsb + 1e-12);
            }
        }
    }

    #[test]
    fn imaginary_unit_rotates() {
        let e = ideal(4);
        let p = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::Parallel);
        let eye_i = DMatrix::from_fn(4, 4, |i, j| if i == j { Complex64::new(0.0, 1.0) } else { Complex64::new(0.0, 0.0) });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = DMatrix::from_fn(4, 4, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), 0.0));
        let out = p
            .complex_mmm(&ComplexMatrix::encode(&eye_i, 4), &ComplexMatrix::encode(&y, 4), 0)
            .unwrap()
            .value;
        assert!(out.re.pos.codes.iter().chain(&out.re.neg.codes).all(|&c| c == 0));
        let yq = ComplexMatrix::encode(&y, 4).decode();
        // i·I times y has entries M times smaller than the MVM full scale.
        for (o, x) in out.decode().iter().zip(yq.iter()) {
            assert!((o.im - x.re).abs() <= 4.0 * 4.0 / 15.0 * y.iter().fold(0.0f64, |m, c| m.max(c.re.abs())));
        }
    }

    #[test]
    fn mma_needs_a_second_comb() {
        let e = ideal(4);
        let p = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::Parallel);
        let z = QuantizedMatrix::zeros(4, 4, 1.0, 4);
        assert!(matches!(p.run_mma(&z, &z, 0), Err(PipelineError::PlanMissing)));
    }

    #[test]
    fn ideal_mma_identities() {
        let e = ideal(4);
        let unit = MmaUnit::new(&e, &MaterialModel::default()).unwrap();
        let p = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::Parallel).with_mma(&unit);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_codes(4, &mut rng);
        let zero = QuantizedMatrix::zeros(4, 4, 1.0, 4);
        let full = QuantizedMatrix::new(4, 4, vec![15; 16], 1.0, 4).unwrap();
        assert!(p.run_mma(&full, &full, 0).unwrap().codes.iter().all(|&c| c == 15));
        let alone = p.run_mma(&x, &zero, 0).unwrap();
        for (o, c) in alone.codes.iter().zip(&x.codes) {
            assert_eq!(*o, (c + 1) / 2);
        }
        for _ in 0..50 {
            let a = random_codes(4, &mut rng);
            let mut b = random_codes(4, &mut rng);
            b.scale = 0.37;
            assert_eq!(p.run_mma(&a, &b, 0).unwrap(), p.run_mma(&b, &a, 0).unwrap());
        }
    }

    #[test]
    fn device_mma_tracks_ideal() {
        let e = MvmEngine::new(EngineConfig::for_channels(8, 4).unwrap()).unwrap();
        let unit = MmaUnit::new(&e, &MaterialModel::default()).unwrap();
        let dev = Pipeline::new(&e, FidelityMode::Device, MmmMode::Parallel).with_mma(&unit);
        let ide = Pipeline::new(&e, FidelityMode::Ideal, MmmMode::Parallel).with_mma(&unit);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let a = random_codes(8, &mut rng);
            let y = random_codes(8, &mut rng);
            let b = random_codes(8, &mut rng);
            let d = dev.run_mmm_mma(&a, &y, &b, 0).unwrap().value;
            let i = ide.run_mmm_mma(&a, &y, &b, 0).unwrap().value;
            assert_eq!(d.scale, i.scale);
            assert!(d.codes.iter().zip(&i.codes).all(|(p, q)| (*p as i64 - *q as i64).abs() <= 1));
            let d2 = dev.run_mma(&a, &b, 0).unwrap();
            let i2 = ide.run_mma(&a, &b, 0).unwrap();
            assert!(d2.codes.iter().zip(&i2.codes).all(|(p, q)| (*p as i64 - *q as i64).abs() <= 1));
        }
    }
}
