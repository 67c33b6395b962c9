use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::Field;
use crate::imaging::ImageBuffer;

pub const DEFAULT_TAPS: usize = 3;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// `sinc(x)·sinc(x/a)` on `|x| < a`, zero outside.
pub fn lanczos_kernel(x: f64, a: usize) -> f64 {
    let a = a as f64;
    if x.abs() >= a {
        0.0
    } else {
        sinc(x) * sinc(x / a)
    }
}

/// Normalized taps for one output sample: source indices and weights.
struct Taps {
    start: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl Taps {
    /// Pixel-centre alignment: output `j` samples source coordinate
    /// `(j + ½)·n/m − ½`. Downsampling stretches the kernel by `n/m`.
    fn new(src: usize, dst: usize, a: usize) -> Self {
        let scale = src as f64 / dst as f64;
        let stretch = scale.max(1.0);
        let support = a as f64 * stretch;
        let mut start = Vec::with_capacity(dst + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        for j in 0..dst {
            start.push(indices.len());
            let center = (j as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let first = weights.len();
            for i in lo..=hi {
                let w = lanczos_kernel((i as f64 - center) / stretch, a);
                if w != 0.0 {
                    indices.push(i.clamp(0, src as isize - 1) as usize);
                    weights.push(w);
                }
            }
            let total: f64 = weights[first..].iter().sum();
            for w in &mut weights[first..] {
                *w /= total;
            }
        }
        start.push(indices.len());
        Self {
            start,
            indices,
            weights,
        }
    }

    fn apply(&self, j: usize, sample: impl Fn(usize) -> f64) -> f64 {
        let range = self.start[j]..self.start[j + 1];
        self.indices[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&i, &w)| w * sample(i))
            .sum()
    }
}

/// Separable Lanczos-`a` resampling with edge clamping; output clamped to
/// `[0, 1]`.
pub fn lanczos_resize(img: &ImageBuffer, new_height: usize, new_width: usize, a: usize) -> Result<ImageBuffer> {
    if new_height == 0 || new_width == 0 || a == 0 {
        return Err(Error::InvalidArgument(format!(
            "lanczos_resize needs positive sizes and taps, got {new_height}x{new_width}, a={a}"
        )));
    }
    ImageBuffer::from_field(resize_field(img.as_field(), new_height, new_width, a)?)
}

pub(crate) fn resize_field(src: &Field, new_height: usize, new_width: usize, a: usize) -> Result<Field> {
    let shape = src.shape();
    let (h, w) = (shape.height, shape.width);
    let horizontal = Taps::new(w, new_width, a);
    let vertical = Taps::new(h, new_height, a);
    let exec = Execution::default();

    let planes = exec.map(shape.channels, |c| {
        let plane = src.channel(c);
        let rows: Vec<Vec<f64>> = (0..h)
            .map(|y| {
                let row = &plane[y * w..(y + 1) * w];
                (0..new_width)
                    .map(|x| horizontal.apply(x, |i| f64::from(row[i])))
                    .collect()
            })
            .collect();
        let mut out = vec![0.0f32; new_height * new_width];
        for y in 0..new_height {
            for x in 0..new_width {
                out[y * new_width + x] = vertical.apply(y, |i| rows[i][x]) as f32;
            }
        }
        out
    });
    Field::from_planes(new_height, new_width, planes)
}
