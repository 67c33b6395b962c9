//! Single-level separable 2D discrete wavelet transform.
//!
//! Coefficient indexing follows PyWavelets, so band values can be checked
//! against it directly. Two boundary modes are provided:
//!
//! * [`Boundary::Periodization`] (default): critically sampled, each band is
//!   `⌈h/2⌉ × ⌈w/2⌉`. Odd lengths are padded by repeating the last sample.
//!   For even sizes the transform is orthogonal, so `dwt2(idwt2(b)) == b`.
//! * [`Boundary::Symmetric`]: half-sample symmetric extension, bands of
//!   `⌊(n + F − 1)/2⌋` samples per axis for a filter of length `F`.
//!   Redundant for `F > 2`, so edited bands are projected on reconstruction.
//!
//! Filters are orthonormal (the Haar low-pass taps are `1/√2`).
//!
//! Band naming follows the usual image convention: `horizontal` is high-pass
//! along the height axis (horizontal edges), `vertical` is high-pass along the
//! width axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    #[default]
    Sym4,
    Haar,
}

impl std::str::FromStr for WaveletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym4" => Ok(WaveletKind::Sym4),
            "haar" => Ok(WaveletKind::Haar),
            other => Err(Error::InvalidArgument(format!(
                "unknown wavelet {other:?} (expected sym4 or haar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodization,
    Symmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    pub kind: WaveletKind,
    pub lo_dec: Vec<f64>,
    pub hi_dec: Vec<f64>,
    pub lo_rec: Vec<f64>,
    pub hi_rec: Vec<f64>,
}

const SYM4_LO_DEC: [f64; 8] = [
    -0.075_765_714_789_273_33,
    -0.029_635_527_645_998_51,
    0.497_618_667_632_015_45,
    0.803_738_751_805_916_1,
    0.297_857_795_605_277_36,
    -0.099_219_543_576_847_22,
    -0.012_603_967_262_037_833,
    0.032_223_100_604_042_7,
];

impl WaveletFilter {
    pub fn new(kind: WaveletKind) -> Self {
        let lo_dec = match kind {
            WaveletKind::Sym4 => SYM4_LO_DEC.to_vec(),
            WaveletKind::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
        };
        Self::from_lowpass(kind, lo_dec)
    }

    pub fn sym4() -> Self {
        Self::new(WaveletKind::Sym4)
    }

    pub fn haar() -> Self {
        Self::new(WaveletKind::Haar)
    }

    /// Completes an orthogonal filter bank from its analysis low-pass taps
    /// (quadrature mirror relations).
    fn from_lowpass(kind: WaveletKind, lo_dec: Vec<f64>) -> Self {
        let n = lo_dec.len();
        let lo_rec: Vec<f64> = lo_dec.iter().rev().copied().collect();
        let hi_rec: Vec<f64> = (0..n)
            .map(|k| if k % 2 == 0 { lo_dec[k] } else { -lo_dec[k] })
            .collect();
        let hi_dec = hi_rec.iter().rev().copied().collect();
        Self {
            kind,
            lo_dec,
            hi_dec,
            lo_rec,
            hi_rec,
        }
    }

    pub fn len(&self) -> usize {
        self.lo_dec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo_dec.is_empty()
    }
}

/// The four sub-bands of one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBands {
    pub low: Field,
    pub horizontal: Field,
    pub vertical: Field,
    pub diagonal: Field,
    /// `(height, width)` of the transformed field.
    pub source: (usize, usize),
    pub boundary: Boundary,
}

impl WaveletBands {
    pub fn bands(&self) -> [&Field; 4] {
        [&self.low, &self.horizontal, &self.vertical, &self.diagonal]
    }

    /// Applies `f` to every band, keeping source metadata.
    pub fn try_map(&self, mut f: impl FnMut(&Field) -> Result<Field>) -> Result<WaveletBands> {
        Ok(WaveletBands {
            low: f(&self.low)?,
            horizontal: f(&self.horizontal)?,
            vertical: f(&self.vertical)?,
            diagonal: f(&self.diagonal)?,
            source: self.source,
            boundary: self.boundary,
        })
    }

    pub fn energy(&self) -> f64 {
        self.bands().iter().map(|b| b.energy()).sum()
    }
}

/// Number of coefficients per band along an axis of length `n`.
pub fn band_len(n: usize, filter_len: usize, boundary: Boundary) -> usize {
    match boundary {
        Boundary::Periodization => n.div_ceil(2),
        Boundary::Symmetric => (n + filter_len - 1) / 2,
    }
}

fn symmetric_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = i.rem_euclid(period) as usize;
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

/// One-dimensional analysis into (low, high) halves.
fn analyze(x: &[f64], filter: &WaveletFilter, boundary: Boundary, lo: &mut [f64], hi: &mut [f64]) {
    let n = x.len();
    let taps = filter.len();
    match boundary {
        Boundary::Periodization => {
            let padded = n + n % 2;
            let shift = (taps / 2) as isize - 1;
            let at = |i: isize| x[(i.rem_euclid(padded as isize) as usize).min(n - 1)];
            for k in 0..lo.len() {
                let base = 2 * k as isize + 1 + shift;
                let (mut a, mut d) = (0.0, 0.0);
                for j in 0..taps {
                    let v = at(base - j as isize);
                    a += filter.lo_dec[j] * v;
                    d += filter.hi_dec[j] * v;
                }
                lo[k] = a;
                hi[k] = d;
            }
        }
        Boundary::Symmetric => {
            for k in 0..lo.len() {
                let base = 2 * k as isize + 1;
                let (mut a, mut d) = (0.0, 0.0);
                for j in 0..taps {
                    let v = x[symmetric_index(base - j as isize, n)];
                    a += filter.lo_dec[j] * v;
                    d += filter.hi_dec[j] * v;
                }
                lo[k] = a;
                hi[k] = d;
            }
        }
    }
}

/// One-dimensional synthesis of `out.len()` samples from (low, high).
fn synthesize(lo: &[f64], hi: &[f64], filter: &WaveletFilter, boundary: Boundary, out: &mut [f64]) {
    let n = out.len();
    let taps = filter.len();
    match boundary {
        Boundary::Periodization => {
            // Transpose of the (orthogonal) periodized analysis operator.
            let padded = 2 * lo.len();
            let shift = (taps / 2) as isize - 1;
            let mut full = vec![0.0; padded];
            for k in 0..lo.len() {
                let base = 2 * k as isize + 1 + shift;
                for j in 0..taps {
                    let idx = (base - j as isize).rem_euclid(padded as isize) as usize;
                    full[idx] += filter.lo_dec[j] * lo[k] + filter.hi_dec[j] * hi[k];
                }
            }
            out.copy_from_slice(&full[..n]);
        }
        Boundary::Symmetric => {
            let offset = taps - 2;
            for (i, o) in out.iter_mut().enumerate() {
                let m = i + offset;
                let mut acc = 0.0;
                // k ranges over coefficients whose upsampled tap covers m.
                let k_min = m.saturating_sub(taps - 1).div_ceil(2);
                let k_max = (m / 2).min(lo.len() - 1);
                for k in k_min..=k_max {
                    let t = m - 2 * k;
                    acc += filter.lo_rec[t] * lo[k] + filter.hi_rec[t] * hi[k];
                }
                *o = acc;
            }
        }
    }
}

fn check_min_size(shape: Shape) -> Result<()> {
    if shape.height < 2 || shape.width < 2 {
        return Err(Error::InvalidShape(format!(
            "wavelet transform needs height and width >= 2, got {shape}"
        )));
    }
    Ok(())
}

pub fn dwt2(x: &Field, filter: &WaveletFilter) -> Result<WaveletBands> {
    dwt2_with(x, filter, Boundary::default())
}

pub fn idwt2(bands: &WaveletBands, filter: &WaveletFilter) -> Result<Field> {
    let shape = bands.low.shape();
    let (h, w) = bands.source;
    for band in bands.bands() {
        if band.shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "idwt2",
                left: shape,
                right: band.shape(),
            });
        }
    }
    let bh = band_len(h, filter.len(), bands.boundary);
    let bw = band_len(w, filter.len(), bands.boundary);
    if h < 2 || w < 2 || shape.height != bh || shape.width != bw {
        return Err(Error::InvalidShape(format!(
            "bands {shape} inconsistent with source {h}x{w} ({:?} boundary)",
            bands.boundary
        )));
    }

    let boundary = bands.boundary;
    let mut planes = Vec::with_capacity(shape.channels);
    let mut col_lo = vec![0.0; bh];
    let mut col_hi = vec![0.0; bh];
    let mut col_out = vec![0.0; h];
    for c in 0..shape.channels {
        let [ll, hl, lh, hh] = [
            bands.low.channel(c),
            bands.horizontal.channel(c),
            bands.vertical.channel(c),
            bands.diagonal.channel(c),
        ];
        // Undo the column pass, giving row-filtered planes of h × bw.
        let mut row_lo = vec![0.0; h * bw];
        let mut row_hi = vec![0.0; h * bw];
        for (low_src, high_src, dst) in [(ll, hl, &mut row_lo), (lh, hh, &mut row_hi)] {
            for x in 0..bw {
                for y in 0..bh {
                    col_lo[y] = f64::from(low_src[y * bw + x]);
                    col_hi[y] = f64::from(high_src[y * bw + x]);
                }
                synthesize(&col_lo, &col_hi, filter, boundary, &mut col_out);
                for y in 0..h {
                    dst[y * bw + x] = col_out[y];
                }
            }
        }
        let mut plane = vec![0.0f32; h * w];
        let mut out_row = vec![0.0; w];
        for y in 0..h {
            synthesize(
                &row_lo[y * bw..(y + 1) * bw],
                &row_hi[y * bw..(y + 1) * bw],
                filter,
                boundary,
                &mut out_row,
            );
            for (p, v) in plane[y * w..(y + 1) * w].iter_mut().zip(&out_row) {
                *p = *v as f32;
            }
        }
        planes.push(plane);
    }
    Field::from_planes(h, w, planes)
}

pub fn dwt2_with(x: &Field, filter: &WaveletFilter, boundary: Boundary) -> Result<WaveletBands> {
    let shape = x.shape();
    check_min_size(shape)?;
    let (h, w) = (shape.height, shape.width);
    let bh = band_len(h, filter.len(), boundary);
    let bw = band_len(w, filter.len(), boundary);

    let mut outs: [Vec<Vec<f32>>; 4] = Default::default();
    let mut row = vec![0.0; w];
    let mut col = vec![0.0; h];
    let mut lo = vec![0.0; bw.max(bh)];
    let mut hi = vec![0.0; bw.max(bh)];
    for plane in x.channels() {
        let mut row_lo = vec![0.0; h * bw];
        let mut row_hi = vec![0.0; h * bw];
        for y in 0..h {
            for (r, v) in row.iter_mut().zip(&plane[y * w..(y + 1) * w]) {
                *r = f64::from(*v);
            }
            analyze(&row, filter, boundary, &mut lo[..bw], &mut hi[..bw]);
            row_lo[y * bw..(y + 1) * bw].copy_from_slice(&lo[..bw]);
            row_hi[y * bw..(y + 1) * bw].copy_from_slice(&hi[..bw]);
        }
        // (low-along-height, high-along-height) for each row-filtered plane.
        let mut bands = [
            vec![0.0f32; bh * bw],
            vec![0.0f32; bh * bw],
            vec![0.0f32; bh * bw],
            vec![0.0f32; bh * bw],
        ];
        for (src, (low_idx, high_idx)) in [(&row_lo, (0, 1)), (&row_hi, (2, 3))] {
            for xx in 0..bw {
                for y in 0..h {
                    col[y] = src[y * bw + xx];
                }
                analyze(&col, filter, boundary, &mut lo[..bh], &mut hi[..bh]);
                for y in 0..bh {
                    bands[low_idx][y * bw + xx] = lo[y] as f32;
                    bands[high_idx][y * bw + xx] = hi[y] as f32;
                }
            }
        }
        for (out, band) in outs.iter_mut().zip(bands) {
            out.push(band);
        }
    }
    let [low, horizontal, vertical, diagonal] = outs.map(|planes| Field::from_planes(bh, bw, planes));
    Ok(WaveletBands {
        low: low?,
        horizontal: horizontal?,
        vertical: vertical?,
        diagonal: diagonal?,
        source: (h, w),
        boundary,
    })
}

/// Recursive decomposition of the low band. Level `i + 1` transforms the
/// `low` field of level `i`; decomposition stops early once a band would
/// drop below 2×2.
pub fn wavedec2(x: &Field, filter: &WaveletFilter, levels: usize) -> Result<Vec<WaveletBands>> {
    let mut out: Vec<WaveletBands> = Vec::with_capacity(levels);
    let mut current = x.clone();
    for _ in 0..levels {
        let s = current.shape();
        if s.height < 2 || s.width < 2 {
            break;
        }
        let bands = dwt2(&current, filter)?;
        current = bands.low.clone();
        out.push(bands);
    }
    if out.is_empty() {
        check_min_size(x.shape())?;
    }
    Ok(out)
}

/// Inverse of [`wavedec2`]. Only the deepest level's `low` band is read;
/// shallower `low` fields are rebuilt from the level below.
pub fn waverec2(levels: &[WaveletBands], filter: &WaveletFilter) -> Result<Field> {
    let (deepest, rest) = levels
        .split_last()
        .ok_or_else(|| Error::InvalidArgument("waverec2 needs at least one level".into()))?;
    let mut current = idwt2(deepest, filter)?;
    for level in rest.iter().rev() {
        let rebuilt = WaveletBands {
            low: current,
            ..level.clone()
        };
        current = idwt2(&rebuilt, filter)?;
    }
    Ok(current)
}
