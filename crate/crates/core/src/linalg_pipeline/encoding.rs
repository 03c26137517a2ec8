//! Signed and complex operands carried as pairs of non-negative words.
//!
//! Optical power cannot go negative, so every signed entry is split into a
//! positive and a negative part, at most one of them nonzero, sharing one
//! scale. Complex operands are a pair of signed ones with a common scale.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::mvm_engine::{max_code, quantize_unit, QuantizedMatrix, QuantizedVector};

use super::PipelineError;

/// Per-matrix dynamic scale: the largest magnitude, or 1 for an all-zero operand.
pub fn dynamic_scale<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    let s = values.into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignedMatrix {
    pub pos: QuantizedMatrix,
    pub neg: QuantizedMatrix,
}

impl SignedMatrix {
    pub fn encode(m: &DMatrix<f64>, bits: u32) -> Self {
        Self::encode_with_scale(m, dynamic_scale(m.iter()), bits)
    }

    pub fn encode_with_scale(m: &DMatrix<f64>, scale: f64, bits: u32) -> Self {
        let (rows, cols) = m.shape();
        let mut pos = QuantizedMatrix::zeros(rows, cols, scale, bits);
        let mut neg = QuantizedMatrix::zeros(rows, cols, scale, bits);
        for i in 0..rows {
            for j in 0..cols {
                let v = m[(i, j)];
                let code = quantize_unit(v.abs(), scale, bits);
                if v >= 0.0 {
                    pos.set(i, j, code);
                } else {
                    neg.set(i, j, code);
                }
            }
        }
        Self { pos, neg }
    }

    /// Builds a canonical pair from signed code differences.
    pub fn from_codes(
        rows: usize,
        cols: usize,
        codes: &[i64],
        scale: f64,
        bits: u32,
    ) -> Result<Self, PipelineError> {
        if codes.len() != rows * cols {
            return Err(PipelineError::DimensionMismatch(format!(
                "{} codes for {rows}x{cols}",
                codes.len()
            )));
        }
        let max = max_code(bits) as i64;
        let pos = codes.iter().map(|&d| d.clamp(0, max) as u32).collect();
        let neg = codes.iter().map(|&d| (-d).clamp(0, max) as u32).collect();
        Ok(Self {
            pos: QuantizedMatrix::new(rows, cols, pos, scale, bits)?,
            neg: QuantizedMatrix::new(rows, cols, neg, scale, bits)?,
        })
    }

    pub fn rows(&self) -> usize {
        self.pos.rows
    }

    pub fn cols(&self) -> usize {
        self.pos.cols
    }

    pub fn scale(&self) -> f64 {
        self.pos.scale
    }

    pub fn bits(&self) -> u32 {
        self.pos.bits
    }

    pub fn signed_code(&self, i: usize, j: usize) -> i64 {
        self.pos.get(i, j) as i64 - self.neg.get(i, j) as i64
    }

    pub fn is_canonical(&self) -> bool {
        self.pos.codes.iter().zip(&self.neg.codes).all(|(p, n)| *p == 0 || *n == 0)
            && self.pos.scale == self.neg.scale
            && self.pos.bits == self.neg.bits
    }

    pub fn negated(&self) -> Self {
        Self {
            pos: self.neg.clone(),
            neg: self.pos.clone(),
        }
    }

    pub fn decode(&self) -> DMatrix<f64> {
        let max = max_code(self.bits()) as f64;
        DMatrix::from_fn(self.rows(), self.cols(), |i, j| {
            self.scale() * self.signed_code(i, j) as f64 / max
        })
    }

    pub fn column(&self, j: usize) -> SignedVector {
        SignedVector {
            pos: self.pos.column(j),
            neg: self.neg.column(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignedVector {
    pub pos: QuantizedVector,
    pub neg: QuantizedVector,
}

impl SignedVector {
    pub fn encode(v: &DVector<f64>, bits: u32) -> Self {
        Self::encode_with_scale(v, dynamic_scale(v.iter()), bits)
    }

    pub fn encode_with_scale(v: &DVector<f64>, scale: f64, bits: u32) -> Self {
        let mut pos = QuantizedVector::zeros(v.len(), scale, bits);
        let mut neg = QuantizedVector::zeros(v.len(), scale, bits);
        for (i, &x) in v.iter().enumerate() {
            let code = quantize_unit(x.abs(), scale, bits);
            if x >= 0.0 {
                pos.codes[i] = code;
            } else {
                neg.codes[i] = code;
            }
        }
        Self { pos, neg }
    }

    pub fn from_codes(codes: &[i64], scale: f64, bits: u32) -> Result<Self, PipelineError> {
        let max = max_code(bits) as i64;
        Ok(Self {
            pos: QuantizedVector::new(codes.iter().map(|&d| d.clamp(0, max) as u32).collect(), scale, bits)?,
            neg: QuantizedVector::new(codes.iter().map(|&d| (-d).clamp(0, max) as u32).collect(), scale, bits)?,
        })
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn scale(&self) -> f64 {
        self.pos.scale
    }

    pub fn bits(&self) -> u32 {
        self.pos.bits
    }

    pub fn signed_code(&self, i: usize) -> i64 {
        self.pos.codes[i] as i64 - self.neg.codes[i] as i64
    }

    pub fn is_canonical(&self) -> bool {
        self.pos.codes.iter().zip(&self.neg.codes).all(|(p, n)| *p == 0 || *n == 0)
    }

    pub fn negated(&self) -> Self {
        Self {
            pos: self.neg.clone(),
            neg: self.pos.clone(),
        }
    }

    pub fn decode(&self) -> DVector<f64> {
        let max = max_code(self.bits()) as f64;
        DVector::from_fn(self.len(), |i, _| self.scale() * self.signed_code(i) as f64 / max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexMatrix {
    pub re: SignedMatrix,
    pub im: SignedMatrix,
}

impl ComplexMatrix {
    /// Both parts share the largest component magnitude as scale.
    pub fn encode(m: &DMatrix<Complex64>, bits: u32) -> Self {
        let scale = dynamic_scale(m.iter().flat_map(|c| [&c.re, &c.im]));
        Self::encode_with_scale(m, scale, bits)
    }

    pub fn encode_with_scale(m: &DMatrix<Complex64>, scale: f64, bits: u32) -> Self {
        Self {
            re: SignedMatrix::encode_with_scale(&m.map(|c| c.re), scale, bits),
            im: SignedMatrix::encode_with_scale(&m.map(|c| c.im), scale, bits),
        }
    }

    pub fn scale(&self) -> f64 {
        self.re.scale()
    }

    pub fn decode(&self) -> DMatrix<Complex64> {
        let re = self.re.decode();
        let im = self.im.decode();
        DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
    }

    pub fn is_canonical(&self) -> bool {
        self.re.is_canonical()
            && self.im.is_canonical()
            && self.re.scale() == self.im.scale()
            && self.re.bits() == self.im.bits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_within_half_lsb(vals in prop::collection::vec(-5.0f64..5.0, 1..40), bits in 2u32..9) {
            let n = vals.len();
            let m = DMatrix::from_vec(n, 1, vals.clone());
            let enc = SignedMatrix::encode(&m, bits);
            prop_assert!(enc.is_canonical());
            let dec = enc.decode();
            let half = enc.scale() / max_code(bits) as f64 / 2.0;
            for (a, b) in m.iter().zip(dec.iter()) {
                prop_assert!((a - b).abs() <= half * (1.0 + 1e-12));
            }
        }

        #[test]
        fn from_codes_is_canonical(codes in prop::collection::vec(-20i64..20, 1..30)) {
            let v = SignedVector::from_codes(&codes, 1.0, 4).unwrap();
            prop_assert!(v.is_canonical());
            for (i, &c) in codes.iter().enumerate() {
                prop_assert_eq!(v.signed_code(i), c.clamp(-15, 15));
            }
        }
    }

    #[test]
    fn zero_matrix_gets_unit_scale() {
        let enc = SignedMatrix::encode(&DMatrix::zeros(3, 3), 4);
        assert_eq!(enc.scale(), 1.0);
        assert!(enc.decode().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn negation_swaps_parts() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.25, 0.0]);
        let enc = SignedMatrix::encode(&m, 4);
        assert_eq!(enc.negated().decode(), -enc.decode());
    }

    #[test]
    fn complex_parts_share_scale() {
        let m = DMatrix::from_row_slice(1, 2, &[Complex64::new(0.2, -2.0), Complex64::new(1.0, 0.5)]);
        let enc = ComplexMatrix::encode(&m, 4);
        assert!(enc.is_canonical());
        assert_eq!(enc.scale(), 2.0);
        assert!((enc.decode()[(0, 0)].im + 2.0).abs() < 1e-12);
    }
}
