//! Half-overlapping patch layouts, Hann blend weights and recomposition.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Shape};

/// Patches of a fixed size placed at multiples of half the patch size, the
/// last row and column clamped to the canvas edge.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchLayout {
    canvas: (usize, usize),
    patch: (usize, usize),
    stride: (usize, usize),
    /// `(y, x)` origins in row-major order.
    origins: Vec<(usize, usize)>,
    /// Per-patch blend masks, `patch.0 × patch.1`, normalized so the masks
    /// of all patches covering a pixel sum to one.
    weights: Vec<Vec<f32>>,
}

/// JSON view of a layout, without the weight masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub canvas: (usize, usize),
    pub patch: (usize, usize),
    pub stride: (usize, usize),
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|&o| o + patch < extent)
        .collect();
    out.push(extent - patch);
    out.dedup();
    out
}

/// Unnormalized Hann taper, positive on every sample.
fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / len as f64).sin().powi(2))
        .collect()
}

pub fn plan_layout(canvas: (usize, usize), patch: (usize, usize)) -> Result<PatchLayout> {
    let (h, w) = canvas;
    let (ph, pw) = patch;
    if ph == 0 || pw == 0 || ph > h || pw > w {
        return Err(Error::InvalidArgument(format!(
            "patch {ph}x{pw} must be non-empty and fit the {h}x{w} canvas"
        )));
    }
    let stride = ((ph / 2).max(1), (pw / 2).max(1));
    let ys = axis_origins(h, ph, stride.0);
    let xs = axis_origins(w, pw, stride.1);
    let origins: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (y, x))).collect();

    let (wy, wx) = (hann(ph), hann(pw));
    let mut total = vec![0.0f64; h * w];
    for &(oy, ox) in &origins {
        for y in 0..ph {
            for x in 0..pw {
                total[(oy + y) * w + ox + x] += wy[y] * wx[x];
            }
        }
    }
    let weights = origins
        .iter()
        .map(|&(oy, ox)| {
            let mut mask = Vec::with_capacity(ph * pw);
            for y in 0..ph {
                for x in 0..pw {
                    mask.push((wy[y] * wx[x] / total[(oy + y) * w + ox + x]) as f32);
                }
            }
            mask
        })
        .collect();
    Ok(PatchLayout {
        canvas,
        patch,
        stride,
        origins,
        weights,
    })
}

/// Weighted canvas sum, accumulated in `f64`.
#[derive(Debug, Clone)]
pub struct Accumulator {
    shape: Shape,
    data: Vec<f64>,
}

impl Accumulator {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn finish(self) -> Result<Field> {
        Field::from_vec(self.shape, self.data.into_iter().map(|v| v as f32).collect())
    }
}

impl PatchLayout {
    pub fn canvas(&self) -> (usize, usize) {
        self.canvas
    }

    pub fn patch(&self) -> (usize, usize) {
        self.patch
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride
    }

    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn weight_mask(&self, index: usize) -> Option<&[f32]> {
        self.weights.get(index).map(Vec::as_slice)
    }

    pub fn summary(&self) -> LayoutSummary {
        LayoutSummary {
            canvas: self.canvas,
            patch: self.patch,
            stride: self.stride,
            origins: self.origins.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("layout serializes")
    }

    fn origin(&self, index: usize) -> Result<(usize, usize)> {
        self.origins.get(index).copied().ok_or_else(|| {
            Error::InvalidArgument(format!("patch index {index} out of range for {} patches", self.len()))
        })
    }

    fn check_canvas(&self, shape: Shape, op: &str) -> Result<()> {
        if (shape.height, shape.width) != self.canvas {
            return Err(Error::InvalidArgument(format!(
                "{op}: field {shape} does not match the {}x{} canvas",
                self.canvas.0, self.canvas.1
            )));
        }
        Ok(())
    }

    /// Copies patch `index` out of a canvas-sized field.
    pub fn extract(&self, z: &Field, index: usize) -> Result<Field> {
        let (oy, ox) = self.origin(index)?;
        let shape = z.shape();
        self.check_canvas(shape, "extract")?;
        let (ph, pw) = self.patch;
        let w = shape.width;
        let planes = z
            .channels()
            .map(|plane| {
                let mut out = Vec::with_capacity(ph * pw);
                for y in oy..oy + ph {
                    out.extend_from_slice(&plane[y * w + ox..y * w + ox + pw]);
                }
                out
            })
            .collect();
        Field::from_planes(ph, pw, planes)
    }

    /// Adds the weight-masked patch into the accumulator.
    pub fn accumulate(&self, acc: &mut Accumulator, index: usize, patch: &Field) -> Result<()> {
        let (oy, ox) = self.origin(index)?;
        self.check_canvas(acc.shape, "accumulate")?;
        let (ph, pw) = self.patch;
        let expected = Shape::new(acc.shape.channels, ph, pw);
        if patch.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "accumulate",
                left: expected,
                right: patch.shape(),
            });
        }
        let mask = &self.weights[index];
        let (plane, w) = (acc.shape.plane(), acc.shape.width);
        for (c, values) in patch.channels().enumerate() {
            let dst = &mut acc.data[c * plane..(c + 1) * plane];
            for y in 0..ph {
                for x in 0..pw {
                    let k = y * pw + x;
                    dst[(oy + y) * w + ox + x] += f64::from(mask[k]) * f64::from(values[k]);
                }
            }
        }
        Ok(())
    }

    /// Consecutive groups of at most `batch_size` patch indices.
    pub fn stream_batches(&self, batch_size: usize) -> Result<impl Iterator<Item = Range<usize>>> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        let n = self.len();
        Ok((0..n).step_by(batch_size).map(move |s| s..(s + batch_size).min(n)))
    }

    /// Positions `b` where a patch edge falls between rows (or columns)
    /// `b − 1` and `b`.
    fn edge_lines(origins: impl Iterator<Item = usize>, patch: usize, extent: usize) -> Vec<usize> {
        let mut lines: Vec<usize> = origins
            .flat_map(|o| [o, o + patch])
            .filter(|&b| b > 0 && b < extent)
            .collect();
        lines.sort_unstable();
        lines.dedup();
        lines
    }

    /// Compares gradients across patch edges with gradients elsewhere.
    pub fn seam_statistic(&self, field: &Field) -> Result<SeamReport> {
        let shape = field.shape();
        self.check_canvas(shape, "seam_statistic")?;
        let (h, w) = self.canvas;
        let mut ys: Vec<usize> = self.origins.iter().map(|o| o.0).collect();
        ys.dedup();
        let mut xs: Vec<usize> = self.origins.iter().map(|o| o.1).collect();
        xs.sort_unstable();
        xs.dedup();
        let row_edges = Self::edge_lines(ys.into_iter(), self.patch.0, h);
        let col_edges = Self::edge_lines(xs.into_iter(), self.patch.1, w);

        let mut boundary = Vec::new();
        let mut interior = Vec::new();
        for plane in field.channels() {
            for b in 1..h {
                let bucket = if row_edges.binary_search(&b).is_ok() { &mut boundary } else { &mut interior };
                bucket.extend((0..w).map(|x| (plane[b * w + x] - plane[(b - 1) * w + x]).abs()));
            }
            for b in 1..w {
                let bucket = if col_edges.binary_search(&b).is_ok() { &mut boundary } else { &mut interior };
                bucket.extend((0..h).map(|y| (plane[y * w + b] - plane[y * w + b - 1]).abs()));
            }
        }
        Ok(SeamReport {
            boundary_p98: percentile(&mut boundary, 0.98),
            interior_p98: percentile(&mut interior, 0.98),
        })
    }
}

/// 98th-percentile absolute finite differences across patch edge lines and
/// across all other lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    pub boundary_p98: f32,
    pub interior_p98: f32,
}

impl SeamReport {
    /// `boundary / interior`; 1 when there are no edges, infinite when the
    /// interior is flat but edges are not.
    pub fn ratio(&self) -> f64 {
        let (b, i) = (f64::from(self.boundary_p98), f64::from(self.interior_p98));
        if b == 0.0 {
            1.0
        } else if i == 0.0 {
            f64::INFINITY
        } else {
            b / i
        }
    }
}

/// Nearest-rank percentile; 0 for an empty sample.
fn percentile(values: &mut [f32], q: f64) -> f32 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f32::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_field, Rng};
    use proptest::prelude::*;

    fn coverage(layout: &PatchLayout) -> Vec<f64> {
        let (h, w) = layout.canvas();
        let (ph, pw) = layout.patch();
        let mut sum = vec![0.0f64; h * w];
        for (i, &(oy, ox)) in layout.origins().iter().enumerate() {
            let mask = layout.weight_mask(i).unwrap();
            for y in 0..ph {
                for x in 0..pw {
                    sum[(oy + y) * w + ox + x] += f64::from(mask[y * pw + x]);
                }
            }
        }
        sum
    }

    #[test]
    fn square_canvas_layout() {
        let layout = plan_layout((128, 128), (64, 64)).unwrap();
        assert_eq!(layout.len(), 9);
        assert_eq!(layout.stride(), (32, 32));
        let ys: Vec<usize> = layout.origins().iter().map(|o| o.0).collect();
        assert_eq!(ys, [0, 0, 0, 32, 32, 32, 64, 64, 64]);
        let xs: Vec<usize> = layout.origins().iter().map(|o| o.1).collect();
        assert_eq!(xs, [0, 32, 64, 0, 32, 64, 0, 32, 64]);
    }

    #[test]
    fn clamped_layout() {
        let layout = plan_layout((96, 64), (64, 64)).unwrap();
        assert_eq!(layout.origins(), &[(0, 0), (32, 0)]);
        let layout = plan_layout((100, 70), (64, 64)).unwrap();
        assert_eq!(layout.origins(), &[(0, 0), (0, 6), (32, 0), (32, 6), (36, 0), (36, 6)]);
    }

    #[test]
    fn single_patch_is_copy() {
        let layout = plan_layout((16, 12), (16, 12)).unwrap();
        assert_eq!(layout.len(), 1);
        assert!(layout.weight_mask(0).unwrap().iter().all(|&w| w == 1.0));
        let z = gaussian_field(&mut Rng::new(1), Shape::new(3, 16, 12)).unwrap();
        let mut acc = Accumulator::new(z.shape());
        layout.accumulate(&mut acc, 0, &layout.extract(&z, 0).unwrap()).unwrap();
        assert_eq!(acc.finish().unwrap(), z);
    }

    #[test]
    fn extract_accumulate_round_trip() {
        let z = gaussian_field(&mut Rng::new(2), Shape::new(2, 45, 37)).unwrap();
        let layout = plan_layout((45, 37), (16, 10)).unwrap();
        let mut acc = Accumulator::new(z.shape());
        for i in 0..layout.len() {
            layout.accumulate(&mut acc, i, &layout.extract(&z, i).unwrap()).unwrap();
        }
        assert!(acc.finish().unwrap().max_abs_diff(&z).unwrap() < 1e-6 * 5.0);
    }

    #[test]
    fn overlap_crosses_smoothly() {
        // Two patches side by side with constants a and b.
        let layout = plan_layout((8, 12), (8, 8)).unwrap();
        assert_eq!(layout.origins(), &[(0, 0), (0, 4)]);
        let (a, b) = (1.0f32, 3.0f32);
        let mut acc = Accumulator::new(Shape::new(1, 8, 12));
        layout.accumulate(&mut acc, 0, &Field::filled(Shape::new(1, 8, 8), a).unwrap()).unwrap();
        layout.accumulate(&mut acc, 1, &Field::filled(Shape::new(1, 8, 8), b).unwrap()).unwrap();
        let out = acc.finish().unwrap();
        let hann = |i: usize| (std::f64::consts::PI * (i as f64 + 0.5) / 8.0).sin().powi(2);
        let row: Vec<f32> = (0..12).map(|x| out.get(0, 3, x)).collect();
        for x in 0..12 {
            let expected = match x {
                0..=3 => f64::from(a),
                8..=11 => f64::from(b),
                _ => {
                    let (wa, wb) = (hann(x), hann(x - 4));
                    (wa * f64::from(a) + wb * f64::from(b)) / (wa + wb)
                }
            };
            assert!((f64::from(row[x]) - expected).abs() < 1e-6, "x={x}: {row:?}");
        }
        assert!(row.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn batches() {
        let layout = plan_layout((128, 128), (64, 64)).unwrap();
        let groups: Vec<_> = layout.stream_batches(4).unwrap().collect();
        assert_eq!(groups, vec![0..4, 4..8, 8..9]);
        assert_eq!(layout.stream_batches(20).unwrap().collect::<Vec<_>>(), vec![0..9]);
        assert!(layout.stream_batches(0).is_err());
    }

    #[test]
    fn errors() {
        assert!(plan_layout((32, 32), (64, 16)).is_err());
        assert!(plan_layout((32, 32), (0, 16)).is_err());
        let layout = plan_layout((32, 32), (16, 16)).unwrap();
        let z = Field::zeros(Shape::new(1, 32, 32)).unwrap();
        assert!(layout.extract(&z, 9).is_err());
        assert!(layout.extract(&Field::zeros(Shape::new(1, 31, 32)).unwrap(), 0).is_err());
        let mut acc = Accumulator::new(z.shape());
        assert!(layout.accumulate(&mut acc, 0, &Field::zeros(Shape::new(1, 8, 8)).unwrap()).is_err());
    }

    #[test]
    fn json_summary() {
        let layout = plan_layout((96, 64), (64, 64)).unwrap();
        let value: serde_json::Value = serde_json::from_str(&layout.to_json()).unwrap();
        assert_eq!(value["origins"], serde_json::json!([[0, 0], [32, 0]]));
        assert_eq!(value["stride"], serde_json::json!([32, 32]));
    }

    #[test]
    fn seam_statistic_sees_edges() {
        let layout = plan_layout((64, 64), (32, 32)).unwrap();
        let smooth = Field::from_fn(Shape::new(1, 64, 64), |_, y, x| (y as f32 * 0.1).sin() + x as f32 * 0.01).unwrap();
        assert!(layout.seam_statistic(&smooth).unwrap().ratio() < 1.5);
        // A step exactly on the x = 32 edge line.
        let step = Field::from_fn(Shape::new(1, 64, 64), |_, y, x| {
            (y as f32 * 0.1).sin() + if x >= 32 { 1.0 } else { 0.0 }
        })
        .unwrap();
        assert!(layout.seam_statistic(&step).unwrap().ratio() > 1.5);
    }

    #[test]
    fn percentile_rank() {
        let mut v: Vec<f32> = (1..=100).map(|i| i as f32).collect();
        assert_eq!(percentile(&mut v, 0.98), 98.0);
        assert_eq!(percentile(&mut [], 0.98), 0.0);
    }

    proptest! {
        #[test]
        fn partition_of_unity(h in 1usize..80, w in 1usize..80, ph in 1usize..80, pw in 1usize..80) {
            prop_assume!(ph <= h && pw <= w);
            let layout = plan_layout((h, w), (ph, pw)).unwrap();
            for s in coverage(&layout) {
                prop_assert!((s - 1.0).abs() <= 1e-6, "sum {s}");
            }
        }
    }
}
