//! Dense containers and the numeric primitives the rest of the crate builds on.
//!
//! All grids are row-major: the location index is `row * width + col` and the
//! channel index varies fastest, so location `i` occupies
//! `data[i * channels..(i + 1) * channels]`.

use crate::error::{Error, Result};

/// A dense `height x width x channels` grid of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension(format!(
                "grid dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature grid"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of spatial locations (`height * width`).
    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Channel vector at a flattened location index.
    pub fn location(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        self.location(row * self.width + col)
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// Concatenates grids along the location axis (stacked by rows).
    ///
    /// Every part must share width and channel count; the result has the sum
    /// of the heights, with the first part's locations first.
    pub fn stack_rows(parts: &[&FeatureGrid]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyMemory)?;
        let (width, channels) = (first.width, first.channels);
        let mut height = 0;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for part in parts {
            if part.width != width || part.channels != channels {
                return Err(Error::Dimension(format!(
                    "cannot stack {}x{} grid onto width {width} with {channels} channels",
                    part.width, part.channels
                )));
            }
            height += part.height;
            data.extend_from_slice(&part.data);
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Concatenates two grids of equal spatial size along the channel axis.
    pub fn concat_channels(&self, other: &FeatureGrid) -> Result<Self> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Dimension(format!(
                "channel concat needs equal spatial size, got {}x{} and {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let channels = self.channels + other.channels;
        let mut data = Vec::with_capacity(self.locations() * channels);
        for i in 0..self.locations() {
            data.extend_from_slice(self.location(i));
            data.extend_from_slice(other.location(i));
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            channels,
            data,
        })
    }
}

/// A dense row-major matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.data[index * self.cols..(index + 1) * self.cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// How a similarity row is turned into weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Divide by the plain row sum. Only defined for strictly positive sums.
    RawSum,
    /// Max-shifted exponentiation followed by division by the sum.
    #[default]
    Softmax,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inner products between every query location and every memory location.
pub fn dot_similarity(query_key: &FeatureGrid, memory_key: &FeatureGrid) -> Result<Matrix> {
    if query_key.channels != memory_key.channels {
        return Err(Error::Dimension(format!(
            "query key has {} channels, memory key has {}",
            query_key.channels, memory_key.channels
        )));
    }
    let (rows, cols) = (query_key.locations(), memory_key.locations());
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let q = query_key.location(i);
        data.extend((0..cols).map(|j| dot(q, memory_key.location(j))));
    }
    Matrix::new(rows, cols, data)
}

/// Normalizes one row in place. On a degenerate raw-sum row the row is left
/// untouched and its sum is returned as the error value.
pub(crate) fn normalize_row(row: &mut [f64], mode: NormMode) -> std::result::Result<(), f64> {
    match mode {
        NormMode::RawSum => {
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) || !sum.is_finite() {
                return Err(sum);
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        NormMode::Softmax => {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    Ok(())
}

/// Turns every row of a similarity matrix into weights summing to one.
pub fn row_normalize(similarity: &Matrix, mode: NormMode) -> Result<Matrix> {
    let mut data = similarity.data.clone();
    if similarity.cols > 0 {
        for (row, chunk) in data.chunks_mut(similarity.cols).enumerate() {
            normalize_row(chunk, mode).map_err(|sum| Error::DegenerateRow { row, sum })?;
        }
    }
    Matrix::new(similarity.rows, similarity.cols, data)
}

/// A per-object mask at frame resolution; values are occupancy probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ObjectMask {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::MaskRange { index, value });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    /// Builds a binary mask from a per-pixel predicate.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(if f(r, c) { 1.0 } else { 0.0 });
            }
        }
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Whether a pixel counts as foreground after binarization at 0.5.
    pub fn is_foreground(&self, index: usize) -> bool {
        self.values[index] >= 0.5
    }

    pub fn binarized(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: (0..self.values.len())
                .map(|i| if self.is_foreground(i) { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn foreground_count(&self) -> usize {
        (0..self.values.len())
            .filter(|&i| self.is_foreground(i))
            .count()
    }

    pub fn same_shape(&self, other: &ObjectMask) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Dimension(format!(
                "mask resolutions differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Ordered per-object masks of one frame; object `i + 1` is `masks[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMaskSet {
    masks: Vec<ObjectMask>,
}

impl LabeledMaskSet {
    pub fn new(masks: Vec<ObjectMask>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::Dimension("mask set needs at least one object".into()))?;
        for m in &masks[1..] {
            first.same_shape(m)?;
        }
        Ok(Self { masks })
    }

    /// Builds hard masks from a label map (0 = background, `i` = object `i`).
    pub fn from_label_map(
        height: usize,
        width: usize,
        labels: &[u8],
        object_count: usize,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Dimension(format!(
                "label map needs {} pixels, got {}",
                height * width,
                labels.len()
            )));
        }
        let masks = (1..=object_count)
            .map(|id| ObjectMask::from_fn(height, width, |r, c| labels[r * width + c] as usize == id))
            .collect();
        Self::new(masks)
    }

    pub fn object_count(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[ObjectMask] {
        &self.masks
    }

    pub fn height(&self) -> usize {
        self.masks[0].height
    }

    pub fn width(&self) -> usize {
        self.masks[0].width
    }

    /// Per-pixel label after hard assignment: the object with the largest
    /// value at or above 0.5 wins, lower ids first on ties; 0 if none.
    pub fn label_map(&self) -> Vec<u8> {
        let n = self.height() * self.width();
        (0..n)
            .map(|i| {
                let mut best = 0u8;
                let mut best_value = 0.5;
                for (k, m) in self.masks.iter().enumerate() {
                    let v = m.values[i];
                    if v >= best_value && (best == 0 || v > best_value) {
                        best = (k + 1) as u8;
                        best_value = v;
                    }
                }
                best
            })
            .collect()
    }

    /// Pairwise-disjoint binary masks derived from [`label_map`](Self::label_map).
    pub fn hard_assigned(&self) -> Self {
        let labels = self.label_map();
        Self::from_label_map(self.height(), self.width(), &labels, self.object_count())
            .expect("label map matches own resolution")
    }

    /// Foreground of any object.
    pub fn union(&self) -> ObjectMask {
        let labels = self.label_map();
        ObjectMask::from_fn(self.height(), self.width(), |r, c| {
            labels[r * self.width() + c] != 0
        })
    }

    pub fn check_aligned(&self, other: &LabeledMaskSet) -> Result<()> {
        if self.object_count() != other.object_count() {
            return Err(Error::Alignment {
                left: self.object_count(),
                right: other.object_count(),
            });
        }
        self.masks[0].same_shape(&other.masks[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, c: usize, data: &[f64]) -> FeatureGrid {
        FeatureGrid::new(h, w, c, data.to_vec()).unwrap()
    }

    #[test]
    fn grid_rejects_bad_length_and_nan() {
        assert!(FeatureGrid::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(matches!(
            FeatureGrid::new(1, 1, 1, vec![f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(FeatureGrid::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn unit_vectors_give_one() {
        let a = grid(1, 1, 2, &[1.0, 0.0]);
        let s = dot_similarity(&a, &a).unwrap();
        assert_eq!(s.data(), &[1.0]);
    }

    #[test]
    fn zero_memory_gives_zero_matrix() {
        let q = grid(1, 2, 3, &[1.0, -2.0, 3.0, 0.5, 4.0, -1.0]);
        let m = FeatureGrid::zeros(3, 1, 3).unwrap();
        let s = dot_similarity(&q, &m).unwrap();
        assert_eq!((s.rows(), s.cols()), (2, 3));
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_integer_similarity_matches_loop() {
        let q = grid(1, 2, 2, &[1.0, 2.0, -1.0, 3.0]);
        let m = grid(3, 1, 2, &[2.0, 0.0, 1.0, 1.0, -2.0, 4.0]);
        let s = dot_similarity(&q, &m).unwrap();
        // q0 = (1,2), q1 = (-1,3); m = (2,0), (1,1), (-2,4)
        let expected = [2.0, 3.0, 6.0, -2.0, 2.0, 14.0];
        assert_eq!(s.data(), &expected);
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let q = FeatureGrid::zeros(1, 1, 2).unwrap();
        let m = FeatureGrid::zeros(1, 1, 3).unwrap();
        assert!(matches!(dot_similarity(&q, &m), Err(Error::Dimension(_))));
    }

    #[test]
    fn single_column_normalizes_to_one() {
        let s = Matrix::new(3, 1, vec![-5.0, 0.3, 100.0]).unwrap();
        let w = row_normalize(&s, NormMode::Softmax).unwrap();
        assert_eq!(w.data(), &[1.0, 1.0, 1.0]);
        let s = Matrix::new(2, 1, vec![0.3, 100.0]).unwrap();
        let w = row_normalize(&s, NormMode::RawSum).unwrap();
        assert_eq!(w.data(), &[1.0, 1.0]);
    }

    #[test]
    fn softmax_symmetric_row() {
        let s = Matrix::new(1, 2, vec![7.5, 7.5]).unwrap();
        let w = row_normalize(&s, NormMode::Softmax).unwrap();
        assert_eq!(w.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_one_two_three() {
        let s = Matrix::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let w = row_normalize(&s, NormMode::Softmax).unwrap();
        let e = [(-2.0f64).exp(), (-1.0f64).exp(), 1.0];
        let z: f64 = e.iter().sum();
        for (got, want) in w.data().iter().zip(e.iter().map(|v| v / z)) {
            assert!((got - want).abs() < 1e-15);
        }
        // 0.09003057, 0.24472847, 0.66524096
        assert!((w.get(0, 2) - 0.665_240_955_774_821_6).abs() < 1e-12);
    }

    #[test]
    fn raw_sum_rejects_degenerate_rows() {
        let s = Matrix::new(2, 2, vec![1.0, 1.0, 1.0, -1.0]).unwrap();
        assert_eq!(
            row_normalize(&s, NormMode::RawSum),
            Err(Error::DegenerateRow { row: 1, sum: 0.0 })
        );
    }

    #[test]
    fn mask_range_and_binarization() {
        assert!(matches!(
            ObjectMask::new(1, 2, vec![0.2, 1.5]),
            Err(Error::MaskRange { index: 1, .. })
        ));
        let m = ObjectMask::new(1, 4, vec![0.0, 0.49, 0.5, 1.0]).unwrap();
        let b = m.binarized();
        assert_eq!(b.values(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(b.binarized(), b);
    }

    #[test]
    fn hard_assignment_is_disjoint() {
        let a = ObjectMask::new(1, 3, vec![0.9, 0.6, 0.0]).unwrap();
        let b = ObjectMask::new(1, 3, vec![0.7, 0.6, 0.8]).unwrap();
        let set = LabeledMaskSet::new(vec![a, b]).unwrap();
        assert_eq!(set.label_map(), vec![1, 1, 2]);
        let hard = set.hard_assigned();
        for i in 0..3 {
            let owners = hard.masks().iter().filter(|m| m.is_foreground(i)).count();
            assert!(owners <= 1);
        }
    }

    #[test]
    fn mask_set_requires_shared_resolution() {
        let a = ObjectMask::empty(2, 2);
        let b = ObjectMask::empty(2, 3);
        assert!(LabeledMaskSet::new(vec![a, b]).is_err());
    }

    #[test]
    fn stacking_keeps_order() {
        let a = grid(1, 2, 1, &[1.0, 2.0]);
        let b = grid(2, 2, 1, &[3.0, 4.0, 5.0, 6.0]);
        let s = FeatureGrid::stack_rows(&[&a, &b]).unwrap();
        assert_eq!((s.height(), s.width()), (3, 2));
        assert_eq!(s.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }
}
