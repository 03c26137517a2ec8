//! Unsigned L-bit operand words with their physical scale.

use serde::Serialize;

use super::EngineError;

pub fn max_code(bits: u32) -> u32 {
    (1u32 << bits) - 1
}

/// Round-half-up code for a value in [0, scale].
pub fn quantize_unit(value: f64, scale: f64, bits: u32) -> u32 {
    let max = max_code(bits);
    if !(scale > 0.0) {
        return 0;
    }
    let x = (value / scale * max as f64 + 0.5).floor();
    if x.is_nan() || x <= 0.0 {
        0
    } else {
        (x as u64).min(max as u64) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizedVector {
    pub codes: Vec<u32>,
    /// Value represented by the full-scale code.
    pub scale: f64,
    pub bits: u32,
}

impl QuantizedVector {
    pub fn new(codes: Vec<u32>, scale: f64, bits: u32) -> Result<Self, EngineError> {
        check_words(&codes, scale, bits)?;
        Ok(Self { codes, scale, bits })
    }

    pub fn zeros(len: usize, scale: f64, bits: u32) -> Self {
        Self {
            codes: vec![0; len],
            scale,
            bits,
        }
    }

    /// Quantizes non-negative values against `scale`; negatives clamp to 0.
    pub fn from_values(values: &[f64], scale: f64, bits: u32) -> Result<Self, EngineError> {
        let codes = values.iter().map(|&v| quantize_unit(v, scale, bits)).collect();
        Self::new(codes, scale, bits)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn max_code(&self) -> u32 {
        max_code(self.bits)
    }

    pub fn value(&self, i: usize) -> f64 {
        self.scale * self.codes[i] as f64 / self.max_code() as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }
}

/// Row-major matrix of codes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub codes: Vec<u32>,
    pub scale: f64,
    pub bits: u32,
}

impl QuantizedMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        codes: Vec<u32>,
        scale: f64,
        bits: u32,
    ) -> Result<Self, EngineError> {
        if codes.len() != rows * cols {
            return Err(EngineError::DimensionMismatch(format!(
                "{} codes for a {rows}x{cols} matrix",
                codes.len()
            )));
        }
        check_words(&codes, scale, bits)?;
        Ok(Self {
            rows,
            cols,
            codes,
            scale,
            bits,
        })
    }

    pub fn zeros(rows: usize, cols: usize, scale: f64, bits: u32) -> Self {
        Self {
            rows,
            cols,
            codes: vec![0; rows * cols],
            scale,
            bits,
        }
    }

    pub fn from_values(
        rows: usize,
        cols: usize,
        values: &[f64],
        scale: f64,
        bits: u32,
    ) -> Result<Self, EngineError> {
        let codes = values.iter().map(|&v| quantize_unit(v, scale, bits)).collect();
        Self::new(rows, cols, codes, scale, bits)
    }

    pub fn max_code(&self) -> u32 {
        max_code(self.bits)
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.codes[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, code: u32) {
        self.codes[i * self.cols + j] = code;
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.codes[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> QuantizedVector {
        QuantizedVector {
            codes: (0..self.rows).map(|i| self.get(i, j)).collect(),
            scale: self.scale,
            bits: self.bits,
        }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[QuantizedVector]) -> Result<Self, EngineError> {
        let first = cols
            .first()
            .ok_or_else(|| EngineError::DimensionMismatch("no columns".into()))?;
        let rows = first.len();
        if cols
            .iter()
            .any(|c| c.len() != rows || c.bits != first.bits || c.scale != first.scale)
        {
            return Err(EngineError::DimensionMismatch(
                "columns differ in length, width or scale".into(),
            ));
        }
        let mut m = Self::zeros(rows, cols.len(), first.scale, first.bits);
        for (j, c) in cols.iter().enumerate() {
            for (i, &code) in c.codes.iter().enumerate() {
                m.set(i, j, code);
            }
        }
        Ok(m)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.scale * self.get(i, j) as f64 / self.max_code() as f64
    }
}

fn check_words(codes: &[u32], scale: f64, bits: u32) -> Result<(), EngineError> {
    if bits == 0 || bits > 16 {
        return Err(EngineError::InvalidOperand(format!("{bits}-bit words")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(EngineError::InvalidOperand(format!("scale {scale}")));
    }
    let max = max_code(bits);
    if let Some(c) = codes.iter().find(|&&c| c > max) {
        return Err(EngineError::InvalidOperand(format!(
            "code {c} exceeds {max}"
        )));
    }
    Ok(())
}

/// Exact fixed-point contract every fidelity mode is measured against:
/// out_i = round-half-up(Σ_j a_ij·y_j / (M·(2^L−1))), saturated.
///
/// The output scale is M·a.scale·y.scale, so decoding the output yields the
/// dot product of the decoded operands.
pub fn golden_mvm(a: &QuantizedMatrix, y: &QuantizedVector) -> Result<QuantizedVector, EngineError> {
    if a.cols != y.len() || a.bits != y.bits {
        return Err(EngineError::DimensionMismatch(format!(
            "{}x{} {}-bit matrix against {}-element {}-bit vector",
            a.rows,
            a.cols,
            a.bits,
            y.len(),
            y.bits
        )));
    }
    let max = a.max_code() as u64;
    let d = a.cols as u64 * max;
    let codes = (0..a.rows)
        .map(|i| {
            let sum: u64 = a
                .row(i)
                .iter()
                .zip(&y.codes)
                .map(|(&a, &y)| a as u64 * y as u64)
                .sum();
            ((2 * sum + d) / (2 * d)).min(max) as u32
        })
        .collect();
    Ok(QuantizedVector {
        codes,
        scale: a.cols as f64 * a.scale * y.scale,
        bits: a.bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_maps_to_full_scale() {
        for m in [1usize, 2, 7, 32] {
            let a = QuantizedMatrix::new(m, m, vec![15; m * m], 1.0, 4).unwrap();
            let y = QuantizedVector::new(vec![15; m], 1.0, 4).unwrap();
            assert!(golden_mvm(&a, &y).unwrap().codes.iter().all(|&c| c == 15));
        }
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let a = QuantizedMatrix::zeros(4, 4, 1.0, 4);
        let y = QuantizedVector::new(vec![15, 3, 9, 1], 1.0, 4).unwrap();
        assert!(golden_mvm(&a, &y).unwrap().codes.iter().all(|&c| c == 0));
    }

    #[test]
    fn single_term_rounds() {
        let mut a = QuantizedMatrix::zeros(4, 4, 1.0, 4);
        a.set(0, 0, 15);
        let y = QuantizedVector::new(vec![15, 7, 7, 7], 1.0, 4).unwrap();
        // 225 / 60 = 3.75
        assert_eq!(golden_mvm(&a, &y).unwrap().codes[0], 4);
    }

    #[test]
    fn output_scale_decodes_the_dot_product() {
        let a = QuantizedMatrix::new(1, 2, vec![15, 15], 2.0, 4).unwrap();
        let y = QuantizedVector::new(vec![15, 15], 3.0, 4).unwrap();
        let out = golden_mvm(&a, &y).unwrap();
        assert!((out.value(0) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_and_range_errors() {
        let a = QuantizedMatrix::zeros(2, 3, 1.0, 4);
        let y = QuantizedVector::zeros(2, 1.0, 4);
        assert!(matches!(golden_mvm(&a, &y), Err(EngineError::DimensionMismatch(_))));
        assert!(QuantizedVector::new(vec![16], 1.0, 4).is_err());
        assert!(QuantizedVector::new(vec![1], 0.0, 4).is_err());
        assert!(QuantizedMatrix::new(2, 2, vec![0; 3], 1.0, 4).is_err());
    }

    #[test]
    fn quantize_round_trip() {
        assert_eq!(quantize_unit(0.5, 1.0, 4), 8);
        assert_eq!(quantize_unit(-0.2, 1.0, 4), 0);
        assert_eq!(quantize_unit(7.0, 1.0, 4), 15);
    }
}
