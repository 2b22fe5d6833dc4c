//! Concrete indexing collections and their measures.
//!
//! Two kinds of sets are supported:
//!
//! * [`Rectangle`]: `[0, t]` in `R^N_+` with Lebesgue measure.
//! * [`GridLowerSet`]: a lower layer of a finite weighted grid. The cell
//!   weights define a finite measure.
//!
//! Both kinds are closed under intersection, which is all the inclusion–exclusion
//! arithmetic on the semi-algebra `C` needs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative tolerance under which negative measures are treated as rounding noise.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// Clamps tiny negative results of floating cancellation to zero.
pub(crate) fn clamp_measure(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -CLAMP_TOLERANCE * scale.abs().max(f64::MIN_POSITIVE) {
        Ok(0.0)
    } else {
        Err(Error::Consistency(format!(
            "negative measure {value:e} at scale {scale:e}"
        )))
    }
}

/// The rectangle `[0, corner]` in `R^N_+`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rectangle {
    corner: Vec<f64>,
}

impl Rectangle {
    pub fn new(corner: Vec<f64>) -> Result<Self> {
        if corner.is_empty() {
            return Err(Error::InvalidSet("rectangle needs dimension >= 1".into()));
        }
        if let Some(c) = corner.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidSet(format!(
                "rectangle coordinate {c} must be finite and nonnegative"
            )));
        }
        Ok(Self { corner })
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn corner(&self) -> &[f64] {
        &self.corner
    }

    /// Lebesgue volume of `[0, corner]`.
    pub fn measure(&self) -> f64 {
        self.corner.iter().product()
    }

    fn check_dim(&self, other: &Rectangle) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Context(format!(
                "rectangle dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    /// `[0, s] ∩ [0, t] = [0, s ∧ t]`.
    pub fn intersect(&self, other: &Rectangle) -> Result<Rectangle> {
        self.check_dim(other)?;
        Ok(Rectangle {
            corner: self
                .corner
                .iter()
                .zip(&other.corner)
                .map(|(a, b)| a.min(*b))
                .collect(),
        })
    }

    /// Whether `other ⊆ self`.
    pub fn contains(&self, other: &Rectangle) -> Result<bool> {
        self.check_dim(other)?;
        Ok(other.corner.iter().zip(&self.corner).all(|(o, s)| o <= s))
    }

    /// The action `g·[0,t] = [0, g·t]` of the multiplicative group.
    pub fn scaled(&self, factor: f64) -> Rectangle {
        Rectangle {
            corner: self.corner.iter().map(|c| c * factor).collect(),
        }
    }
}

/// A finite grid of cells with nonnegative weights (row-major, last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct GridGround {
    shape: Vec<usize>,
    weights: Vec<f64>,
}

impl GridGround {
    pub fn new(shape: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidSet(format!("grid shape {shape:?} has an empty axis")));
        }
        let cells: usize = shape.iter().product();
        if weights.len() != cells {
            return Err(Error::InvalidSet(format!(
                "grid of shape {shape:?} needs {cells} weights, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidSet(format!("cell weight {w} must be finite and >= 0")));
        }
        Ok(Self { shape, weights })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_count(&self) -> usize {
        self.weights.len()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for axis in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.shape[axis + 1];
        }
        strides
    }
}

/// A lower layer of a [`GridGround`]: closed under the componentwise order on cells.
#[derive(Clone, Debug)]
pub struct GridLowerSet {
    ground: Arc<GridGround>,
    mask: Vec<bool>,
}

impl PartialEq for GridLowerSet {
    fn eq(&self, other: &Self) -> bool {
        self.mask == other.mask && self.same_ground(other)
    }
}

impl GridLowerSet {
    pub fn new(ground: Arc<GridGround>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != ground.cell_count() {
            return Err(Error::InvalidSet(format!(
                "mask has {} cells, grid has {}",
                mask.len(),
                ground.cell_count()
            )));
        }
        let strides = ground.strides();
        for (cell, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            // Closure under immediate predecessors implies closure under the order.
            let mut rest = cell;
            for (axis, stride) in strides.iter().enumerate() {
                let index = rest / stride;
                rest %= stride;
                if index > 0 && !mask[cell - stride] {
                    return Err(Error::InvalidSet(format!(
                        "mask is not a lower layer: cell {cell} present but its predecessor on axis {axis} is not"
                    )));
                }
            }
        }
        Ok(Self { ground, mask })
    }

    pub fn ground(&self) -> &Arc<GridGround> {
        &self.ground
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn same_ground(&self, other: &GridLowerSet) -> bool {
        Arc::ptr_eq(&self.ground, &other.ground) || *self.ground == *other.ground
    }

    fn check_ground(&self, other: &GridLowerSet) -> Result<()> {
        if self.same_ground(other) {
            Ok(())
        } else {
            Err(Error::Context("grid sets live on different grounds".into()))
        }
    }

    pub fn measure(&self) -> f64 {
        self.mask
            .iter()
            .zip(&self.ground.weights)
            .filter(|(m, _)| **m)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn intersect(&self, other: &GridLowerSet) -> Result<GridLowerSet> {
        self.check_ground(other)?;
        Ok(GridLowerSet {
            ground: Arc::clone(&self.ground),
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect(),
        })
    }

    pub fn contains(&self, other: &GridLowerSet) -> Result<bool> {
        self.check_ground(other)?;
        Ok(other.mask.iter().zip(&self.mask).all(|(o, s)| !*o || *s))
    }
}

/// A member of the indexing collection.
#[derive(Clone, Debug, PartialEq)]
pub enum IndexedSet {
    Rect(Rectangle),
    Grid(GridLowerSet),
}

impl From<Rectangle> for IndexedSet {
    fn from(r: Rectangle) -> Self {
        IndexedSet::Rect(r)
    }
}

impl From<GridLowerSet> for IndexedSet {
    fn from(g: GridLowerSet) -> Self {
        IndexedSet::Grid(g)
    }
}

impl fmt::Display for IndexedSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexedSet::Rect(r) => write!(f, "[0, {:?}]", r.corner),
            IndexedSet::Grid(g) => {
                let cells: Vec<usize> = g
                    .mask
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| **m)
                    .map(|(i, _)| i)
                    .collect();
                write!(f, "grid{cells:?}")
            }
        }
    }
}

impl IndexedSet {
    pub fn rect(corner: Vec<f64>) -> Result<Self> {
        Rectangle::new(corner).map(IndexedSet::Rect)
    }

    pub fn measure(&self) -> f64 {
        match self {
            IndexedSet::Rect(r) => r.measure(),
            IndexedSet::Grid(g) => g.measure(),
        }
    }

    pub fn as_rect(&self) -> Option<&Rectangle> {
        match self {
            IndexedSet::Rect(r) => Some(r),
            IndexedSet::Grid(_) => None,
        }
    }

    pub fn intersect(&self, other: &IndexedSet) -> Result<IndexedSet> {
        match (self, other) {
            (IndexedSet::Rect(a), IndexedSet::Rect(b)) => a.intersect(b).map(IndexedSet::Rect),
            (IndexedSet::Grid(a), IndexedSet::Grid(b)) => a.intersect(b).map(IndexedSet::Grid),
            _ => Err(Error::Context("cannot mix rectangles and grid sets".into())),
        }
    }

    /// Whether `other ⊆ self`.
    pub fn contains(&self, other: &IndexedSet) -> Result<bool> {
        match (self, other) {
            (IndexedSet::Rect(a), IndexedSet::Rect(b)) => a.contains(b),
            (IndexedSet::Grid(a), IndexedSet::Grid(b)) => a.contains(b),
            _ => Err(Error::Context("cannot mix rectangles and grid sets".into())),
        }
    }

    pub fn same_context(&self, other: &IndexedSet) -> bool {
        match (self, other) {
            (IndexedSet::Rect(a), IndexedSet::Rect(b)) => a.dim() == b.dim(),
            (IndexedSet::Grid(a), IndexedSet::Grid(b)) => a.same_ground(b),
            _ => false,
        }
    }
}

/// `m(s)`.
pub fn measure(s: &IndexedSet) -> f64 {
    s.measure()
}

/// `m(a ∩ b)`.
pub fn intersection_measure(a: &IndexedSet, b: &IndexedSet) -> Result<f64> {
    Ok(a.intersect(b)?.measure())
}

/// `m(a △ b) = m(a) + m(b) − 2 m(a ∩ b)`.
pub fn symdiff_measure(a: &IndexedSet, b: &IndexedSet) -> Result<f64> {
    let (ma, mb) = (a.measure(), b.measure());
    let inter = intersection_measure(a, b)?;
    clamp_measure(ma + mb - 2.0 * inter, ma.max(mb))
}

/// `m(a \ b) = m(a) − m(a ∩ b)`.
pub fn difference_measure(a: &IndexedSet, b: &IndexedSet) -> Result<f64> {
    let ma = a.measure();
    clamp_measure(ma - intersection_measure(a, b)?, ma)
}

/// Maximum number of subtracted sets accepted by [`region_measure`].
pub const REGION_MEASURE_LIMIT: usize = 20;

/// An element `C = U \ (U₁ ∪ … ∪ Uₙ)` of the semi-algebra, kept in extremal form.
///
/// Construction clips every `Uᵢ` to `U` and drops any `Uᵢ` contained in another
/// `Uⱼ`. Neither the increment `ΔX_C` nor `m(C)` changes under this.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementSpec {
    outer: IndexedSet,
    subtracted: Vec<IndexedSet>,
}

impl IncrementSpec {
    pub fn new(outer: IndexedSet, subtracted: Vec<IndexedSet>) -> Result<Self> {
        let clipped = subtracted
            .iter()
            .map(|s| outer.intersect(s))
            .collect::<Result<Vec<_>>>()?;
        let mut kept: Vec<IndexedSet> = Vec::with_capacity(clipped.len());
        for (i, candidate) in clipped.iter().enumerate() {
            let mut redundant = false;
            for (j, other) in clipped.iter().enumerate() {
                if i == j || !other.contains(candidate)? {
                    continue;
                }
                // Equal sets: keep the first occurrence only.
                if !candidate.contains(other)? || j < i {
                    redundant = true;
                    break;
                }
            }
            if !redundant {
                kept.push(candidate.clone());
            }
        }
        Ok(Self {
            outer,
            subtracted: kept,
        })
    }

    /// `C = U`.
    pub fn whole(outer: IndexedSet) -> Self {
        Self {
            outer,
            subtracted: Vec::new(),
        }
    }

    pub fn outer(&self) -> &IndexedSet {
        &self.outer
    }

    pub fn subtracted(&self) -> &[IndexedSet] {
        &self.subtracted
    }

    pub fn n(&self) -> usize {
        self.subtracted.len()
    }

    /// The sets `U ∩ (∩_{i∈S} Uᵢ)` for every subset `S`, indexed by bitmask.
    pub fn intersections(&self) -> Result<Vec<IndexedSet>> {
        let n = self.n();
        let mut out: Vec<IndexedSet> = Vec::with_capacity(1 << n);
        out.push(self.outer.clone());
        for mask in 1usize..(1 << n) {
            let low = mask.trailing_zeros() as usize;
            let rest = mask & (mask - 1);
            out.push(out[rest].intersect(&self.subtracted[low])?);
        }
        Ok(out)
    }
}

/// Inclusion–exclusion sign of a subset bitmask.
pub(crate) fn subset_sign(mask: usize) -> f64 {
    if mask.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `m(C)` by inclusion–exclusion over all `2ⁿ` intersections.
pub fn region_measure(c: &IncrementSpec) -> Result<f64> {
    if c.n() > REGION_MEASURE_LIMIT {
        return Err(Error::Complexity {
            n: c.n(),
            limit: REGION_MEASURE_LIMIT,
        });
    }
    let sets = c.intersections()?;
    let total: f64 = sets
        .iter()
        .enumerate()
        .map(|(mask, s)| subset_sign(mask) * s.measure())
        .sum();
    clamp_measure(total, c.outer.measure())
}

/// Inner grid approximation of a rectangle inside `[0, bound]`.
///
/// Cells are half-open boxes of side `bound[i] / resolution[i]`; a cell belongs to
/// the result when it lies entirely in `[0, corner]`. The result is exact when every
/// corner coordinate is a multiple of the cell side.
pub fn discretize(r: &Rectangle, resolution: &[usize], bound: &[f64]) -> Result<GridLowerSet> {
    let dim = r.dim();
    if resolution.len() != dim || bound.len() != dim {
        return Err(Error::Context(format!(
            "rectangle of dim {dim} with resolution {resolution:?} and bound {bound:?}"
        )));
    }
    if resolution.contains(&0) {
        return Err(Error::Argument("resolution must be positive on every axis".into()));
    }
    for ((c, b), axis) in r.corner.iter().zip(bound).zip(0..) {
        if !(*b > 0.0) || *c > *b {
            return Err(Error::Argument(format!(
                "corner {c} on axis {axis} does not fit in bound {b}"
            )));
        }
    }
    // Number of whole cells below the corner on each axis.
    let counts: Vec<usize> = (0..dim)
        .map(|i| {
            let cells = r.corner[i] / bound[i] * resolution[i] as f64;
            let rounded = cells.round();
            let whole = if (cells - rounded).abs() <= 1e-9 * resolution[i] as f64 {
                rounded
            } else {
                cells.floor()
            };
            (whole.max(0.0) as usize).min(resolution[i])
        })
        .collect();
    let cell_volume: f64 = (0..dim).map(|i| bound[i] / resolution[i] as f64).product();
    let total: usize = resolution.iter().product();
    let ground = Arc::new(GridGround::new(resolution.to_vec(), vec![cell_volume; total])?);
    let strides = ground.strides();
    let mask = (0..total)
        .map(|cell| {
            let mut rest = cell;
            strides.iter().zip(&counts).all(|(stride, count)| {
                let index = rest / stride;
                rest %= stride;
                index < *count
            })
        })
        .collect();
    GridLowerSet::new(ground, mask)
}

/// An ordered, homogeneous list of indexed sets.
#[derive(Clone, Debug, PartialEq)]
pub struct SetFamily {
    sets: Vec<IndexedSet>,
    labels: Option<Vec<String>>,
}

impl SetFamily {
    /// Builds a family, rejecting duplicate sets.
    pub fn new(sets: Vec<IndexedSet>) -> Result<Self> {
        Self::build(sets, None, false)
    }

    /// Builds a family in which repeated sets are allowed.
    pub fn with_duplicates(sets: Vec<IndexedSet>) -> Result<Self> {
        Self::build(sets, None, true)
    }

    pub fn rectangles(corners: Vec<Vec<f64>>) -> Result<Self> {
        let sets = corners
            .into_iter()
            .map(IndexedSet::rect)
            .collect::<Result<Vec<_>>>()?;
        Self::new(sets)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.sets.len() {
            return Err(Error::InvalidFamily(format!(
                "{} labels for {} sets",
                labels.len(),
                self.sets.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    fn build(sets: Vec<IndexedSet>, labels: Option<Vec<String>>, allow_duplicates: bool) -> Result<Self> {
        if let Some(first) = sets.first() {
            if let Some(i) = sets.iter().position(|s| !first.same_context(s)) {
                return Err(Error::Context(format!(
                    "set {i} does not share the family's kind or measure context"
                )));
            }
        }
        if !allow_duplicates {
            for (i, a) in sets.iter().enumerate() {
                if let Some(j) = sets[..i].iter().position(|b| b == a) {
                    return Err(Error::InvalidFamily(format!("sets {j} and {i} are identical")));
                }
            }
        }
        Ok(Self { sets, labels })
    }

    pub fn sets(&self) -> &[IndexedSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn position(&self, set: &IndexedSet) -> Option<usize> {
        self.sets.iter().position(|s| s == set)
    }

    /// Column labels: the stored ones, or `X0, X1, …`.
    pub fn labels(&self) -> Vec<String> {
        match &self.labels {
            Some(l) => l.clone(),
            None => (0..self.sets.len()).map(|i| format!("X{i}")).collect(),
        }
    }

    /// Dimension of a rectangle family.
    pub fn rect_dim(&self) -> Option<usize> {
        self.sets.first().and_then(|s| s.as_rect()).map(Rectangle::dim)
    }

    /// Applies `g·[0,t] = [0, g·t]` to every rectangle.
    pub fn scaled(&self, factor: f64) -> Result<SetFamily> {
        let sets = self
            .sets
            .iter()
            .map(|s| match s {
                IndexedSet::Rect(r) => Ok(IndexedSet::Rect(r.scaled(factor))),
                IndexedSet::Grid(_) => Err(Error::InvalidFamily("scaling needs rectangles".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SetFamily {
            sets,
            labels: self.labels.clone(),
        })
    }

    pub fn to_doc(&self) -> FamilyDoc {
        match self.sets.first() {
            Some(IndexedSet::Grid(g)) => FamilyDoc::Grid {
                shape: g.ground.shape.clone(),
                weights: g.ground.weights.clone(),
                masks: self
                    .sets
                    .iter()
                    .map(|s| match s {
                        IndexedSet::Grid(g) => g.mask.iter().map(|m| u8::from(*m)).collect(),
                        IndexedSet::Rect(_) => unreachable!("homogeneous family"),
                    })
                    .collect(),
                labels: self.labels.clone(),
            },
            _ => FamilyDoc::Rectangles {
                dim: self.rect_dim().unwrap_or(0),
                sets: self
                    .sets
                    .iter()
                    .filter_map(|s| s.as_rect().map(|r| r.corner.clone()))
                    .collect(),
                labels: self.labels.clone(),
            },
        }
    }

    pub fn from_doc(doc: FamilyDoc) -> Result<Self> {
        match doc {
            FamilyDoc::Rectangles { dim, sets, labels } => {
                if dim == 0 {
                    return Err(Error::InvalidFamily("dim must be positive".into()));
                }
                if let Some(bad) = sets.iter().position(|s| s.len() != dim) {
                    return Err(Error::InvalidFamily(format!(
                        "set {bad} has {} coordinates, expected {dim}",
                        sets[bad].len()
                    )));
                }
                let sets = sets
                    .into_iter()
                    .map(IndexedSet::rect)
                    .collect::<Result<Vec<_>>>()?;
                Self::build(sets, None, false)?.maybe_labels(labels)
            }
            FamilyDoc::Grid {
                weights,
                shape,
                masks,
                labels,
            } => {
                let ground = Arc::new(GridGround::new(shape, weights)?);
                let sets = masks
                    .into_iter()
                    .map(|mask| {
                        if let Some(v) = mask.iter().find(|v| **v > 1) {
                            return Err(Error::InvalidFamily(format!("mask entry {v} is not 0 or 1")));
                        }
                        GridLowerSet::new(Arc::clone(&ground), mask.into_iter().map(|v| v == 1).collect())
                            .map(IndexedSet::Grid)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::build(sets, None, false)?.maybe_labels(labels)
            }
        }
    }

    fn maybe_labels(self, labels: Option<Vec<String>>) -> Result<Self> {
        match labels {
            Some(l) => self.with_labels(l),
            None => Ok(self),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("family serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(text)?)
    }

    /// SHA-256 of the compact JSON document, hex encoded.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_vec(&self.to_doc()).expect("family serializes");
        hex::encode(Sha256::digest(&compact))
    }
}

/// On-disk family schema.
///
/// ```json
/// { "kind": "rectangles", "dim": 2, "sets": [[1.0, 0.5], [0.5, 1.0]] }
/// { "kind": "grid", "shape": [2, 2], "weights": [0.25, 0.25, 0.25, 0.25],
///   "masks": [[1, 1, 0, 0], [1, 0, 1, 0]] }
/// ```
///
/// Grid weights and masks are row-major with the last axis fastest; mask entries
/// are 0 or 1. An optional `labels` array names the sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilyDoc {
    Rectangles {
        dim: usize,
        sets: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
    Grid {
        shape: Vec<usize>,
        weights: Vec<f64>,
        masks: Vec<Vec<u8>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(c: &[f64]) -> IndexedSet {
        IndexedSet::rect(c.to_vec()).unwrap()
    }

    fn ground3() -> Arc<GridGround> {
        Arc::new(GridGround::new(vec![3], vec![0.5, 0.25, 0.25]).unwrap())
    }

    #[test]
    fn rectangle_measures() {
        assert_eq!(measure(&r(&[1.0, 1.0])), 1.0);
        assert_eq!(measure(&r(&[0.0, 5.0])), 0.0);
        assert!(IndexedSet::rect(vec![-1.0, 1.0]).is_err());
        assert!(IndexedSet::rect(vec![]).is_err());
    }

    #[test]
    fn grid_measure_is_weight_sum() {
        let g = GridLowerSet::new(ground3(), vec![true; 3]).unwrap();
        assert_eq!(g.measure(), 1.0);
    }

    #[test]
    fn grid_rejects_non_lower_layer() {
        let ground = Arc::new(GridGround::new(vec![2, 2], vec![0.25; 4]).unwrap());
        assert!(GridLowerSet::new(Arc::clone(&ground), vec![true, true, true, false]).is_ok());
        assert!(GridLowerSet::new(Arc::clone(&ground), vec![true, false, false, true]).is_err());
        assert!(GridLowerSet::new(ground, vec![false, true, false, false]).is_err());
    }

    #[test]
    fn intersection_examples() {
        assert_eq!(intersection_measure(&r(&[1.0, 2.0]), &r(&[2.0, 1.0])).unwrap(), 1.0);
        let a = r(&[0.3, 0.7]);
        assert_eq!(intersection_measure(&a, &a).unwrap(), measure(&a));
        let m = intersection_measure(&r(&[0.6, 0.8]), &r(&[1.0, 1.0])).unwrap();
        assert!((m - 0.48).abs() < 1e-15);
    }

    #[test]
    fn context_mismatch() {
        let g = IndexedSet::Grid(GridLowerSet::new(ground3(), vec![true, false, false]).unwrap());
        assert!(matches!(intersection_measure(&r(&[1.0]), &g), Err(Error::Context(_))));
        assert!(matches!(
            intersection_measure(&r(&[1.0]), &r(&[1.0, 1.0])),
            Err(Error::Context(_))
        ));
        let other = Arc::new(GridGround::new(vec![3], vec![1.0, 1.0, 1.0]).unwrap());
        let h = IndexedSet::Grid(GridLowerSet::new(other, vec![true, false, false]).unwrap());
        assert!(symdiff_measure(&g, &h).is_err());
    }

    #[test]
    fn symdiff_examples() {
        let a = r(&[0.4, 0.9]);
        assert_eq!(symdiff_measure(&a, &a).unwrap(), 0.0);
        let v = symdiff_measure(&r(&[1.0, 1.0]), &r(&[0.6, 0.8])).unwrap();
        assert!((v - 0.52).abs() < 1e-15);

        // Two grid sets sharing no cells.
        let ground = Arc::new(GridGround::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap());
        let empty = IndexedSet::Grid(GridLowerSet::new(Arc::clone(&ground), vec![false; 4]).unwrap());
        let full = IndexedSet::Grid(GridLowerSet::new(ground, vec![true; 4]).unwrap());
        assert!((symdiff_measure(&empty, &full).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clamp_rejects_large_negatives() {
        assert_eq!(clamp_measure(-1e-14, 1.0).unwrap(), 0.0);
        assert!(clamp_measure(-1e-6, 1.0).is_err());
    }

    #[test]
    fn region_measure_examples() {
        let u = r(&[1.0, 1.0]);
        assert_eq!(region_measure(&IncrementSpec::whole(u.clone())).unwrap(), 1.0);
        let nested = IncrementSpec::new(u.clone(), vec![r(&[0.6, 0.8])]).unwrap();
        assert!((region_measure(&nested).unwrap() - 0.52).abs() < 1e-15);
        let two = IncrementSpec::new(u.clone(), vec![r(&[1.0, 0.5]), r(&[0.5, 1.0])]).unwrap();
        assert!((region_measure(&two).unwrap() - 0.25).abs() < 1e-15);
        let covered = IncrementSpec::new(u.clone(), vec![r(&[1.0, 1.0]), r(&[0.2, 0.3])]).unwrap();
        assert_eq!(region_measure(&covered).unwrap(), 0.0);
    }

    #[test]
    fn region_measure_complexity_guard() {
        let u = r(&[1.0, 1.0]);
        let subs: Vec<_> = (0..21)
            .map(|i| {
                let x = (i as f64 + 1.0) / 22.0;
                r(&[x, 1.0 - x])
            })
            .collect();
        let spec = IncrementSpec::new(u, subs).unwrap();
        assert_eq!(spec.n(), 21);
        assert!(matches!(region_measure(&spec), Err(Error::Complexity { .. })));
    }

    #[test]
    fn normalization_clips_and_drops() {
        let u = r(&[1.0, 1.0]);
        let spec = IncrementSpec::new(
            u,
            vec![r(&[2.0, 0.5]), r(&[0.5, 0.25]), r(&[0.5, 2.0]), r(&[0.5, 1.0])],
        )
        .unwrap();
        assert_eq!(spec.subtracted(), &[r(&[1.0, 0.5]), r(&[0.5, 1.0])]);
    }

    #[test]
    fn discretize_examples() {
        let bound = [1.0, 1.0];
        let g = discretize(&Rectangle::new(vec![0.5, 0.5]).unwrap(), &[2, 2], &bound).unwrap();
        assert_eq!(g.measure(), 0.25);
        for res in [1, 3, 7] {
            let g = discretize(&Rectangle::new(vec![1.0, 1.0]).unwrap(), &[res, res], &bound).unwrap();
            assert!(g.mask().iter().all(|m| *m));
            assert!((g.measure() - 1.0).abs() < 1e-12);
        }
        for k in 1..5 {
            let res = 3 * k;
            let g = discretize(&Rectangle::new(vec![1.0 / 3.0, 1.0]).unwrap(), &[res, res], &bound).unwrap();
            assert!((g.measure() - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(discretize(&Rectangle::new(vec![0.5, 0.5]).unwrap(), &[0, 2], &bound).is_err());
        assert!(discretize(&Rectangle::new(vec![1.5, 0.5]).unwrap(), &[2, 2], &bound).is_err());
    }

    #[test]
    fn family_json_roundtrip_and_rejection() {
        let fam = SetFamily::rectangles(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let back = SetFamily::from_json(&fam.to_json()).unwrap();
        assert_eq!(back, fam);
        assert_eq!(back.hash(), fam.hash());

        let grid = r#"{"kind":"grid","shape":[2,2],"weights":[0.25,0.25,0.25,0.25],"masks":[[1,1,0,0],[1,0,1,0]]}"#;
        let g = SetFamily::from_json(grid).unwrap();
        assert_eq!(g.len(), 2);
        assert!((g.sets()[0].measure() - 0.5).abs() < 1e-15);

        assert!(SetFamily::from_json(r#"{"kind":"rectangles","dim":1,"sets":[[1.0]],"extra":1}"#).is_err());
        assert!(SetFamily::from_json(r#"{"kind":"rectangles","dim":2,"sets":[[1.0]]}"#).is_err());
        assert!(SetFamily::from_json(r#"{"kind":"rectangles","dim":1,"sets":[[1.0],[1.0]]}"#).is_err());
        assert!(SetFamily::from_json(r#"{"kind":"circles"}"#).is_err());
    }

    #[test]
    fn duplicates_need_flag() {
        let a = r(&[0.5, 0.5]);
        assert!(SetFamily::new(vec![a.clone(), a.clone()]).is_err());
        assert_eq!(SetFamily::with_duplicates(vec![a.clone(), a]).unwrap().len(), 2);
    }
}
