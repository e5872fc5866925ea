use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::matrix::{dot, norm};
use crate::numerics::Matrix;

/// Default number of cells per axis.
pub const DEFAULT_KDE_STEPS: usize = 100;

/// Cells padded around the samples, in bandwidths.
pub const KDE_PAD: f64 = 3.0;

/// Evaluation lattice: `steps` cell centres per axis over
/// `[mag_lo, mag_hi] × [ang_lo, ang_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub mag_lo: f64,
    pub mag_hi: f64,
    pub ang_lo: f64,
    pub ang_hi: f64,
    pub steps: usize,
}

impl GridSpec {
    /// Bounding box of every point set, padded by `KDE_PAD · bandwidth`.
    pub fn covering(sets: &[&[(f64, f64)]], bandwidth: f64, steps: usize) -> Result<GridSpec> {
        let mut it = sets.iter().flat_map(|s| s.iter());
        let first = it
            .next()
            .ok_or_else(|| Error::InvalidRequest("kde needs a point".into()))?;
        let (mut m0, mut m1, mut a0, mut a1) = (first.0, first.0, first.1, first.1);
        for &(m, a) in it {
            m0 = m0.min(m);
            m1 = m1.max(m);
            a0 = a0.min(a);
            a1 = a1.max(a);
        }
        let pad = KDE_PAD * bandwidth;
        let spec = GridSpec {
            mag_lo: m0 - pad,
            mag_hi: m1 + pad,
            ang_lo: a0 - pad,
            ang_hi: a1 + pad,
            steps,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        let finite = [self.mag_lo, self.mag_hi, self.ang_lo, self.ang_hi]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.mag_hi <= self.mag_lo || self.ang_hi <= self.ang_lo || self.steps == 0 {
            return Err(Error::InvalidRequest(format!(
                "degenerate kde grid {self:?}"
            )));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
        let step = (hi - lo) / steps as f64;
        (0..steps).map(|k| lo + (k as f64 + 0.5) * step).collect()
    }
}

/// Density on a magnitude × angle lattice. `density[(a, m)]` is the value at
/// `(mag_axis[m], ang_axis[a])`.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid {
    pub mag_axis: Vec<f64>,
    pub ang_axis: Vec<f64>,
    pub density: Matrix,
    pub bandwidth: f64,
}

impl KdeGrid {
    pub fn cell_area(&self) -> f64 {
        let step = |ax: &[f64]| if ax.len() > 1 { ax[1] - ax[0] } else { 0.0 };
        step(&self.mag_axis) * step(&self.ang_axis)
    }

    /// Midpoint-rule integral of the density.
    pub fn mass(&self) -> f64 {
        self.density.data().iter().sum::<f64>() * self.cell_area()
    }

    /// Writes `mag,ang,density` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: csv::Error| Error::io(path, e.into());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["mag", "ang", "density"]).map_err(io)?;
        for (a, &ang) in self.ang_axis.iter().enumerate() {
            for (m, &mag) in self.mag_axis.iter().enumerate() {
                let d = self.density.get(a, m);
                w.write_record([mag.to_string(), ang.to_string(), d.to_string()])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Gaussian-kernel density at one location:
/// `(1/(n h²)) Σ (1/2π) exp(−((m−mᵢ)² + (a−aᵢ)²) / (2h²))`.
pub fn kde_at(points: &[(f64, f64)], bandwidth: f64, mag: f64, ang: f64) -> f64 {
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let s: f64 = points
        .iter()
        .map(|&(m, a)| (-((mag - m).powi(2) + (ang - a).powi(2)) * inv).exp())
        .sum();
    s / (2.0 * PI * points.len() as f64 * bandwidth * bandwidth)
}

/// Evaluates [`kde_at`] over every cell centre of `grid`.
pub fn kde_pdf(points: &[(f64, f64)], bandwidth: f64, grid: &GridSpec) -> Result<KdeGrid> {
    if points.is_empty() {
        return Err(Error::InvalidRequest("kde needs at least one point".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidRequest(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    grid.check()?;
    let mag_axis = GridSpec::axis(grid.mag_lo, grid.mag_hi, grid.steps);
    let ang_axis = GridSpec::axis(grid.ang_lo, grid.ang_hi, grid.steps);
    // The kernel separates, so each point contributes an outer product of
    // two 1-D Gaussians.
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut density = Matrix::zeros(grid.steps, grid.steps);
    let mut gm = vec![0.0; grid.steps];
    for &(pm, pa) in points {
        for (g, &m) in gm.iter_mut().zip(&mag_axis) {
            *g = (-(m - pm).powi(2) * inv).exp();
        }
        for (a, &ang) in ang_axis.iter().enumerate() {
            let ga = (-(ang - pa).powi(2) * inv).exp();
            if ga == 0.0 {
                continue;
            }
            for (d, &g) in density.row_mut(a).iter_mut().zip(&gm) {
                *d += ga * g;
            }
        }
    }
    let norm = 1.0 / (2.0 * PI * points.len() as f64 * bandwidth * bandwidth);
    Ok(KdeGrid {
        mag_axis,
        ang_axis,
        density: density.scale(norm),
        bandwidth,
    })
}

/// L1 distance between two densities on the same lattice, times cell area.
pub fn kde_distance(a: &KdeGrid, b: &KdeGrid) -> Result<f64> {
    if a.mag_axis != b.mag_axis || a.ang_axis != b.ang_axis {
        return Err(shape_err!("kde grids differ"));
    }
    let l1: f64 = a
        .density
        .data()
        .iter()
        .zip(b.density.data())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(l1 * a.cell_area())
}

/// Unit mean direction of the rows of `h`, the default polar reference.
pub fn mean_direction(h: &Matrix) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; h.cols()];
    for i in 0..h.rows() {
        for (m, &x) in mean.iter_mut().zip(h.row(i)) {
            *m += x;
        }
    }
    let len = norm(&mean);
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::Numerical(
            "mean embedding is zero; no reference axis".into(),
        ));
    }
    Ok(mean.into_iter().map(|m| m / len).collect())
}

/// `(‖hᵢ‖, angle between hᵢ and reference)` per row. Zero rows map to
/// `(0, 0)`.
pub fn embed_to_polar(h: &Matrix, reference: &[f64]) -> Result<Vec<(f64, f64)>> {
    if reference.len() != h.cols() {
        return Err(shape_err!(
            "reference has {} entries for {} columns",
            reference.len(),
            h.cols()
        ));
    }
    let ref_len = norm(reference);
    if ref_len == 0.0 {
        return Err(Error::InvalidRequest("reference vector is zero".into()));
    }
    Ok((0..h.rows())
        .map(|i| {
            let row = h.row(i);
            let mag = norm(row);
            if mag == 0.0 {
                return (0.0, 0.0);
            }
            let cos = (dot(row, reference) / (mag * ref_len)).clamp(-1.0, 1.0);
            (mag, cos.acos())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_peak_and_decay() {
        let p = [(0.0, 0.0)];
        assert_abs_diff_eq!(kde_at(&p, 1.0, 0.0, 0.0), 1.0 / (2.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(
            kde_at(&p, 1.0, 0.0, 0.0),
            0.159_154_943_091_895_35,
            epsilon = 1e-12
        );
        assert!(kde_at(&p, 1.0, 10.0, 0.0) < 1e-20);
    }

    #[test]
    fn symmetric_pair_gives_symmetric_density() {
        let p = [(-1.0, 0.5), (1.0, 0.5)];
        for &(dm, da) in &[(0.3, 0.0), (0.7, 0.2), (1.9, -0.4)] {
            let l = kde_at(&p, 0.8, -dm, 0.5 + da);
            let r = kde_at(&p, 0.8, dm, 0.5 + da);
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_matches_pointwise_and_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1usize, 17, 300, 1000] {
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(0.0..8.0), rng.random_range(0.0..PI)))
                .collect();
            let spec = GridSpec::covering(&[&pts], 1.0, DEFAULT_KDE_STEPS).unwrap();
            let grid = kde_pdf(&pts, 1.0, &spec).unwrap();
            let mass = grid.mass();
            assert!((0.9..=1.0).contains(&mass), "n={n}: mass {mass}");
            assert!(grid.density.data().iter().all(|&d| d >= 0.0));
            let (a, m) = (37, 61);
            let direct = kde_at(&pts, 1.0, grid.mag_axis[m], grid.ang_axis[a]);
            assert_abs_diff_eq!(grid.density.get(a, m), direct, epsilon = 1e-14);
        }
    }

    #[test]
    fn distance_is_a_metric_on_shared_grids() {
        let a = [(1.0, 0.2), (2.0, 0.4)];
        let b = [(1.5, 0.3), (4.0, 1.0)];
        let spec = GridSpec::covering(&[&a, &b], 0.5, 50).unwrap();
        let ga = kde_pdf(&a, 0.5, &spec).unwrap();
        let gb = kde_pdf(&b, 0.5, &spec).unwrap();
        assert_eq!(kde_distance(&ga, &ga).unwrap(), 0.0);
        let d = kde_distance(&ga, &gb).unwrap();
        assert!(d > 0.0 && d <= 2.0);
        assert_eq!(d, kde_distance(&gb, &ga).unwrap());
        let other = kde_pdf(&a, 0.5, &GridSpec::covering(&[&a], 0.5, 50).unwrap()).unwrap();
        assert!(matches!(kde_distance(&ga, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn bad_inputs() {
        let spec = GridSpec::covering(&[&[(0.0, 0.0)]], 1.0, 10).unwrap();
        assert!(kde_pdf(&[], 1.0, &spec).is_err());
        assert!(kde_pdf(&[(0.0, 0.0)], 0.0, &spec).is_err());
        assert!(GridSpec::covering(&[], 1.0, 10).is_err());
    }

    #[test]
    fn polar_examples() {
        let h = Matrix::from_rows(&[
            vec![2.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![3.0, 4.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0],
        ])
        .unwrap();
        let p = embed_to_polar(&h, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p[0], (2.0, 0.0));
        assert_abs_diff_eq!(p[1].1, PI / 2.0, epsilon = 1e-15);
        assert_eq!(p[2].0, 5.0);
        assert_eq!(p[3], (0.0, 0.0));
        assert_abs_diff_eq!(p[4].1, PI, epsilon = 1e-15);
        assert!(embed_to_polar(&h, &[0.0; 3]).is_err());
        assert!(embed_to_polar(&h, &[1.0]).is_err());
    }

    #[test]
    fn mean_direction_is_unit() {
        let h = Matrix::from_rows(&[vec![1.0, 1.0], vec![3.0, 1.0]]).unwrap();
        let u = mean_direction(&h).unwrap();
        assert_abs_diff_eq!(norm(&u), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u[0] / u[1], 2.0, epsilon = 1e-14);
        assert!(mean_direction(&Matrix::zeros(2, 2)).is_err());
    }
}
