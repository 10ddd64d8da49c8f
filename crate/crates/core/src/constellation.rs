//! Square QAM geometries, nearest-point projection, occurrence counting and
//! probability vectors over constellation points.
//!
//! Symbol indices are zero-based in the API (`0..M`); files written by the
//! experiment layer use one-based labels.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::{Point2, SymbolBatch};
use crate::{Error, Result};
use ndarray::Array2;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Point2>,
    /// Normalised per-axis amplitude levels for square QAM, ascending.
    levels: Option<Vec<f64>>,
}

impl Constellation {
    /// Square `order`-QAM on the odd-integer grid, scaled to unit average power.
    ///
    /// Points are ordered I-major, both axes ascending: index `k = a * L + b`
    /// holds `(level[a], level[b])` with `L = sqrt(order)`.
    pub fn qam(order: usize) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64 | 256) {
            return Err(Error::UnsupportedOrder(order));
        }
        let side = order.isqrt();
        // mean of k^2 over odd k in [-(L-1), L-1] is (L^2 - 1)/3, per axis
        let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
        let levels: Vec<f64> = (0..side).map(|k| (2.0 * k as f64 - (side as f64 - 1.0)) * scale).collect();
        let points = levels.iter().flat_map(|&i| levels.iter().map(move |&q| Point2::new(i, q))).collect();
        Ok(Self { points, levels: Some(levels) })
    }

    /// Arbitrary finite, distinct points. Projection falls back to exhaustive search.
    pub fn from_points(points: Vec<Point2>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("empty constellation".into()));
        }
        if points.iter().any(|p| !p.i.is_finite() || !p.q.is_finite()) {
            return Err(Error::NonFinite("constellation"));
        }
        for (k, p) in points.iter().enumerate() {
            if points[..k].contains(p) {
                return Err(Error::InvalidConfig(format!("duplicate constellation point {p:?}")));
            }
        }
        Ok(Self { points, levels: None })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, index: usize) -> Point2 {
        self.points[index]
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    /// Average power under the uniform distribution.
    pub fn average_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order() as f64
    }

    /// Indices of the points with the largest energy (the four corners for square QAM).
    pub fn corner_indices(&self) -> Vec<usize> {
        let max = self.points.iter().map(|p| p.norm_sqr()).fold(0.0, f64::max);
        (0..self.order()).filter(|&k| (self.points[k].norm_sqr() - max).abs() <= 1e-12 * max).collect()
    }

    /// Binary-reflected Gray label of a point (per-axis Gray codes, I in the high bits).
    ///
    /// Only meaningful for square QAM; other geometries return the index itself.
    pub fn gray_label(&self, index: usize) -> usize {
        let Some(levels) = &self.levels else { return index };
        let side = levels.len();
        let bits = side.trailing_zeros();
        let gray = |k: usize| k ^ (k >> 1);
        (gray(index / side) << bits) | gray(index % side)
    }

    fn nearest_level(levels: &[f64], v: f64) -> usize {
        let mut best = 0;
        let mut best_d = (v - levels[0]).abs();
        for (k, &l) in levels.iter().enumerate().skip(1) {
            let d = (v - l).abs();
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// Index of the Euclidean-nearest point; ties go to the lowest index.
    pub fn nearest(&self, p: Point2) -> usize {
        match &self.levels {
            // the nearest set of a product grid is the product of per-axis
            // nearest sets, and the index is increasing in both level indices
            Some(levels) => {
                Self::nearest_level(levels, p.i) * levels.len() + Self::nearest_level(levels, p.q)
            }
            None => {
                let mut best = 0;
                let mut best_d = p.dist_sqr(self.points[0]);
                for (k, c) in self.points.iter().enumerate().skip(1) {
                    let d = p.dist_sqr(*c);
                    if d < best_d {
                        best = k;
                        best_d = d;
                    }
                }
                best
            }
        }
    }

    /// Replaces every row by its nearest constellation point.
    pub fn project(&self, batch: &SymbolBatch) -> (SymbolBatch, Vec<usize>) {
        let indices: Vec<usize> = batch.points().map(|p| self.nearest(p)).collect();
        (self.map(&indices), indices)
    }

    /// Symbol indices to points. Indices must be in range.
    pub fn map(&self, indices: &[usize]) -> SymbolBatch {
        let mut out = Array2::zeros((indices.len(), 2));
        for (r, &k) in indices.iter().enumerate() {
            out[[r, 0]] = self.points[k].i;
            out[[r, 1]] = self.points[k].q;
        }
        SymbolBatch::from_array_unchecked(out)
    }

    /// Occurrences of every symbol index.
    pub fn count(&self, indices: &[usize]) -> Result<Vec<u64>> {
        let m = self.order();
        let mut counts = vec![0u64; m];
        for &k in indices {
            if k >= m {
                return Err(Error::IndexOutOfRange { index: k, order: m });
            }
            counts[k] += 1;
        }
        Ok(counts)
    }
}

/// A probability vector over the points of a constellation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingDistribution {
    probs: Vec<f64>,
}

impl ShapingDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidDistribution("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(order: usize) -> Self {
        Self { probs: vec![1.0 / order as f64; order] }
    }

    pub fn point_mass(order: usize, index: usize) -> Self {
        let mut probs = vec![0.0; order];
        probs[index] = 1.0;
        Self { probs }
    }

    /// Normalised histogram.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidDistribution("all counts are zero".into()));
        }
        Ok(Self { probs: counts.iter().map(|&c| c as f64 / total as f64).collect() })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn order(&self) -> usize {
        self.probs.len()
    }

    /// Draws `n` i.i.d. symbols and maps them onto `c`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        c: &Constellation,
        n: usize,
        rng: &mut R,
    ) -> Result<(SymbolBatch, Vec<usize>)> {
        if n == 0 {
            return Err(Error::InvalidConfig("sample size must be at least 1".into()));
        }
        if self.order() != c.order() {
            return Err(Error::InvalidDistribution(format!(
                "distribution over {} symbols used with a {}-point constellation",
                self.order(),
                c.order()
            )));
        }
        let dist = WeightedIndex::new(&self.probs).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        let indices: Vec<usize> = (0..n).map(|_| dist.sample(rng)).collect();
        Ok((c.map(&indices), indices))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qpsk_and_16qam_geometry() {
        let c = Constellation::qam(4).unwrap();
        let a = 0.5f64.sqrt();
        let expected = [(-a, -a), (-a, a), (a, -a), (a, a)];
        for (p, (i, q)) in c.points().iter().zip(expected) {
            assert_relative_eq!(p.i, i, epsilon = 1e-15);
            assert_relative_eq!(p.q, q, epsilon = 1e-15);
        }
        let c = Constellation::qam(16).unwrap();
        let corner = c.point(15);
        assert_relative_eq!(corner.i, 3.0 / 10f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(corner.i, 0.948_683_298_050_513_8, epsilon = 1e-15);
        assert_eq!(corner.i, corner.q);
        assert_eq!(c.corner_indices(), vec![0, 3, 12, 15]);
    }

    #[test]
    fn unit_average_power() {
        for m in [4, 16, 64, 256] {
            let c = Constellation::qam(m).unwrap();
            assert!((c.average_power() - 1.0).abs() < 1e-12);
            assert_eq!(c.order(), m);
        }
    }

    #[test]
    fn unsupported_orders() {
        for m in [0, 2, 8, 12, 32, 1024] {
            assert!(matches!(Constellation::qam(m), Err(Error::UnsupportedOrder(_))));
        }
    }

    #[test]
    fn projection_examples() {
        let c = Constellation::qam(16).unwrap();
        let pts = SymbolBatch::from_points(c.points()).unwrap();
        let (proj, idx) = c.project(&pts);
        assert_eq!(proj, pts);
        assert_eq!(idx, (0..16).collect::<Vec<_>>());

        let b = SymbolBatch::from_rows(&[[0.9, 1.1]]).unwrap();
        let (proj, idx) = c.project(&b);
        assert_eq!(idx, vec![15]);
        assert_relative_eq!(proj.point(0).i, 0.948_68, epsilon = 1e-5);

        let q = Constellation::qam(4).unwrap();
        let (_, idx) = q.project(&SymbolBatch::zeros(1).unwrap());
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn generic_geometry_projection_breaks_ties_low() {
        let c = Constellation::from_points(vec![
            Point2::new(1.0, 0.0),
            Point2::new(-1.0, 0.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        assert_eq!(c.nearest(Point2::new(0.0, 0.0)), 0);
        assert_eq!(c.nearest(Point2::new(0.1, 1.9)), 2);
        assert!(Constellation::from_points(vec![Point2::new(1.0, 0.0); 2]).is_err());
    }

    #[test]
    fn counting() {
        let c = Constellation::qam(4).unwrap();
        assert_eq!(c.count(&[0, 0, 1]).unwrap(), vec![2, 1, 0, 0]);
        assert_eq!(c.count(&[]).unwrap(), vec![0; 4]);
        assert!(matches!(c.count(&[4]), Err(Error::IndexOutOfRange { index: 4, order: 4 })));
    }

    #[test]
    fn uniform_counts_concentrate() {
        let c = Constellation::qam(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let idx: Vec<usize> = (0..1_000_000).map(|_| rng.random_range(0..16)).collect();
        let sigma = (1e6f64 * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        for k in c.count(&idx).unwrap() {
            assert!((k as f64 - 62_500.0).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn distributions() {
        let d = ShapingDistribution::from_counts(&[2, 1, 1, 0]).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.25, 0.25, 0.0]);
        let d = ShapingDistribution::from_counts(&[7, 0, 0]).unwrap();
        assert_eq!(d, ShapingDistribution::point_mass(3, 0));
        assert!(ShapingDistribution::from_counts(&[0, 0]).is_err());
        assert!(ShapingDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ShapingDistribution::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn sampling() {
        let c = Constellation::qam(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (pts, idx) = ShapingDistribution::point_mass(16, 5).sample(&c, 100, &mut rng).unwrap();
        assert!(idx.iter().all(|&k| k == 5));
        assert!(pts.points().all(|p| p == c.point(5)));

        let n = 1_000_000;
        let (_, idx) = ShapingDistribution::uniform(16).sample(&c, n, &mut rng).unwrap();
        let emp = ShapingDistribution::from_counts(&c.count(&idx).unwrap()).unwrap();
        let tv: f64 = emp.probs().iter().map(|p| (p - 1.0 / 16.0).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.01);

        assert!(ShapingDistribution::uniform(16).sample(&c, 0, &mut rng).is_err());
        assert!(ShapingDistribution::uniform(4).sample(&c, 10, &mut rng).is_err());
    }

    #[test]
    fn gray_labels_are_a_permutation_with_unit_neighbour_distance() {
        let c = Constellation::qam(16).unwrap();
        let mut labels: Vec<usize> = (0..16).map(|k| c.gray_label(k)).collect();
        for k in 0..16 {
            if k % 4 != 3 {
                assert_eq!((c.gray_label(k) ^ c.gray_label(k + 1)).count_ones(), 1);
            }
        }
        labels.sort();
        assert_eq!(labels, (0..16).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn projection_is_nearest_and_idempotent(
            pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..40),
            order_pow in 1u32..4,
        ) {
            let c = Constellation::qam(4usize.pow(order_pow)).unwrap();
            let rows: Vec<[f64; 2]> = pts.iter().map(|&(i, q)| [i, q]).collect();
            let b = SymbolBatch::from_rows(&rows).unwrap();
            let (proj, idx) = c.project(&b);
            for (r, &k) in idx.iter().enumerate() {
                let x = b.point(r);
                let d = x.dist_sqr(c.point(k));
                for p in c.points() {
                    prop_assert!(d <= x.dist_sqr(*p));
                }
            }
            let (again, idx2) = c.project(&proj);
            prop_assert_eq!(again, proj);
            prop_assert_eq!(idx2, idx);
        }

        #[test]
        fn counts_give_valid_distributions(
            idx in prop::collection::vec(0usize..16, 1..500),
        ) {
            let c = Constellation::qam(16).unwrap();
            let counts = c.count(&idx).unwrap();
            prop_assert_eq!(counts.iter().sum::<u64>() as usize, idx.len());
            let d = ShapingDistribution::from_counts(&counts).unwrap();
            prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
        }
    }
}
