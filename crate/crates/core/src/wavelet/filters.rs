//! Biorthogonal filter banks.
//!
//! The default bank is the Cohen-Daubechies-Feauveau 17/11-tap biorthogonal
//! pair whose synthesis lowpass has a zero of order six at `pi` and whose
//! analysis lowpass has a zero of order eight (so the analysis wavelet has six
//! vanishing moments and the synthesis wavelet eight). The taps come from the
//! factorization of the degree-13 Daubechies half-band polynomial into a
//! `(1 + e^{iw})^6` factor and a `(1 + e^{iw})^8` factor with the remaining
//! roots split symmetrically, normalized to sum `sqrt(2)`. They are the values
//! distributed as `bior6.8` by common wavelet libraries, zero-padded to a
//! common length of 18 so that both branches share one indexing convention.

use crate::error::{Error, Result};

pub const DEFAULT_BANK: &str = "bior6.8";

const BIOR68_DEC_LO: [f64; 18] = [
    0.0,
    0.0019088317364812906,
    -0.0019142861290887667,
    -0.016990639867602342,
    0.01193456527972926,
    0.04973290349094079,
    -0.07726317316720414,
    -0.09405920349573646,
    0.4207962846098268,
    0.8259229974584023,
    0.4207962846098268,
    -0.09405920349573646,
    -0.07726317316720414,
    0.04973290349094079,
    0.01193456527972926,
    -0.016990639867602342,
    -0.0019142861290887667,
    0.0019088317364812906,
];

const BIOR68_REC_LO: [f64; 18] = [
    0.0,
    0.0,
    0.0,
    0.014426282505624435,
    0.014467504896790148,
    -0.07872200106262882,
    -0.04036797903033992,
    0.41784910915027457,
    0.7589077294536541,
    0.41784910915027457,
    -0.04036797903033992,
    -0.07872200106262882,
    0.014467504896790148,
    0.014426282505624435,
    0.0,
    0.0,
    0.0,
    0.0,
];

/// Analysis/synthesis lowpass and highpass filters of equal (padded) length.
///
/// Highpass filters are sign-alternated copies of the opposite lowpass:
/// `dec_hi[k] = (-1)^(k+1) rec_lo[k]` and `rec_hi[k] = (-1)^k dec_lo[k]`
/// (the symmetric lowpass filters make the usual time reversal a no-op).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    name: String,
    dec_lo: Vec<f64>,
    dec_hi: Vec<f64>,
    rec_lo: Vec<f64>,
    rec_hi: Vec<f64>,
}

impl FilterBank {
    /// Builds a bank from its two lowpass filters; highpass filters follow by
    /// the mirror relations.
    pub fn from_lowpass(name: &str, dec_lo: Vec<f64>, rec_lo: Vec<f64>) -> Result<Self> {
        let n = dec_lo.len();
        if n < 2 || n % 2 != 0 || rec_lo.len() != n {
            return Err(Error::InvalidArgument(
                "filter bank needs two lowpass filters of equal even length".into(),
            ));
        }
        let sign = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
        let dec_hi = (0..n).map(|k| -sign(k) * rec_lo[k]).collect();
        let rec_hi = (0..n).map(|k| sign(k) * dec_lo[k]).collect();
        Ok(Self {
            name: name.to_string(),
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        })
    }

    pub fn bior68() -> Self {
        Self::from_lowpass(DEFAULT_BANK, BIOR68_DEC_LO.to_vec(), BIOR68_REC_LO.to_vec()).unwrap()
    }

    pub fn haar() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_lowpass("haar", vec![h, h], vec![h, h]).unwrap()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            DEFAULT_BANK => Ok(Self::bior68()),
            "haar" => Ok(Self::haar()),
            other => Err(Error::InvalidArgument(format!("unknown filter bank '{other}'"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Padded filter length `L` used by the size recurrence.
    pub fn len(&self) -> usize {
        self.dec_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dec_lo.is_empty()
    }

    pub fn dec_lo(&self) -> &[f64] {
        &self.dec_lo
    }

    pub fn dec_hi(&self) -> &[f64] {
        &self.dec_hi
    }

    pub fn rec_lo(&self) -> &[f64] {
        &self.rec_lo
    }

    pub fn rec_hi(&self) -> &[f64] {
        &self.rec_hi
    }

    /// Output length of one analysis pass: `floor((n + L - 1) / 2)`.
    pub fn coeff_len(&self, n: usize) -> usize {
        (n + self.len() - 1) / 2
    }

    /// Smallest axis length accepted by an analysis pass.
    pub fn min_input_len(&self) -> usize {
        self.len().div_ceil(2).max(1)
    }

    /// Index range `[first, last]` of the nonzero taps of a filter.
    pub(crate) fn support(f: &[f64]) -> (usize, usize) {
        let first = f.iter().position(|&c| c != 0.0).unwrap_or(0);
        let last = f.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        (first, last)
    }
}

/// Order of the zero of a filter's frequency response at `pi`, found as the
/// number of leading alternating-sign moments `sum_k (-1)^k k^p f[k]` that
/// vanish (relative tolerance `tol`).
pub fn zeros_at_pi(f: &[f64], tol: f64) -> usize {
    let center = (f.len() as f64 - 1.0) / 2.0;
    let mut order = 0;
    for p in 0..f.len() {
        let mut m = 0.0;
        let mut scale = 0.0;
        for (k, &c) in f.iter().enumerate() {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            let x = (k as f64 - center).powi(p as i32);
            m += s * c * x;
            scale += (c * x).abs();
        }
        if m.abs() <= tol * scale.max(1.0) {
            order += 1;
        } else {
            break;
        }
    }
    order
}
