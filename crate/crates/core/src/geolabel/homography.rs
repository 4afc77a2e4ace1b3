//! Plane-to-plane projective calibration between the road surface (Z = 0)
//! and the image.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub px: f64,
    pub py: f64,
}

/// Road-plane coordinates in metres; X across the lanes, Y along travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub fn new(px: f64, py: f64) -> Self {
        Self { px, py }
    }
}

impl WorldPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// World → pixel homography, scale-normalized so that `a[2][2] = 1` when that
/// entry is not vanishing, otherwise to unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomographyMatrix {
    pub a: [[f64; 3]; 3],
}

const INFINITY_EPS: f64 = 1e-12;

impl HomographyMatrix {
    pub fn identity() -> Self {
        Self::from_matrix(&Matrix3::identity()).expect("identity is regular")
    }

    /// Normalizes scale and rejects singular matrices.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        let scale = if m[(2, 2)].abs() > 1e-9 {
            m[(2, 2)]
        } else {
            m.norm()
        };
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::DegenerateConfiguration("zero homography".into()));
        }
        let n = m / scale;
        if n.determinant().abs() <= 1e-12 || n.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateConfiguration(format!(
                "homography is singular (det {:e})",
                n.determinant()
            )));
        }
        let mut a = [[0.0; 3]; 3];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = n[(i, j)];
            }
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.a[i][j])
    }

    pub fn inverse(&self) -> Matrix3<f64> {
        self.matrix()
            .try_inverse()
            .expect("validated homography is invertible")
    }
}

fn dehomogenize(v: Vector3<f64>) -> Result<(f64, f64)> {
    let k = v[2];
    if k.abs() < INFINITY_EPS {
        return Err(Error::PointAtInfinity(k));
    }
    Ok((v[0] / k, v[1] / k))
}

pub fn project_to_pixel(h: &HomographyMatrix, world: WorldPoint) -> Result<PixelPoint> {
    let (px, py) = dehomogenize(h.matrix() * Vector3::new(world.x, world.y, 1.0))?;
    Ok(PixelPoint { px, py })
}

pub fn project_to_world(h: &HomographyMatrix, pixel: PixelPoint) -> Result<WorldPoint> {
    let (x, y) = dehomogenize(h.inverse() * Vector3::new(pixel.px, pixel.py, 1.0))?;
    Ok(WorldPoint { x, y })
}

/// Similarity transform moving the centroid to the origin and the mean
/// distance from it to √2.
fn isotropic_normalizer(points: &[(f64, f64)]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let (cx, cy) = points
        .iter()
        .fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x / n, ay + y / n));
    let mean_dist = points
        .iter()
        .map(|(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return Err(Error::DegenerateConfiguration("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply(t: &Matrix3<f64>, (x, y): (f64, f64)) -> (f64, f64) {
    let v = t * Vector3::new(x, y, 1.0);
    (v[0] / v[2], v[1] / v[2])
}

/// Least-squares homography from world/pixel correspondences.
///
/// Solves the homogeneous DLT system on isotropically normalized points; the
/// solution is the right singular vector of the smallest singular value.
pub fn solve_homography(pairs: &[(PixelPoint, WorldPoint)]) -> Result<HomographyMatrix> {
    let n = pairs.len();
    if n < 4 {
        return Err(Error::TooFewPoints(n));
    }
    if pairs
        .iter()
        .any(|(p, w)| !(p.px.is_finite() && p.py.is_finite() && w.x.is_finite() && w.y.is_finite()))
    {
        return Err(Error::NonFinite("control points"));
    }
    let pix: Vec<(f64, f64)> = pairs.iter().map(|(p, _)| (p.px, p.py)).collect();
    let wld: Vec<(f64, f64)> = pairs.iter().map(|(_, w)| (w.x, w.y)).collect();
    let t_pix = isotropic_normalizer(&pix)?;
    let t_wld = isotropic_normalizer(&wld)?;

    // Pad to at least 9 rows so the SVD exposes the full right-singular basis.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&p, &w)) in pix.iter().zip(&wld).enumerate() {
        let (u, v) = apply(&t_pix, p);
        let (x, y) = apply(&t_wld, w);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (smallest, second) = (order[0], order[1]);
    if sv[second] <= 1e-10 * sv[order[sv.len() - 1]] {
        return Err(Error::DegenerateConfiguration(format!(
            "design matrix rank < 8 (second-smallest singular value {:e})",
            sv[second]
        )));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_pix_inv = t_pix
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("pixel normalizer".into()))?;
    HomographyMatrix::from_matrix(&(t_pix_inv * hn * t_wld))
}

/// RMS reprojection error in pixels.
pub fn reprojection_rms(h: &HomographyMatrix, pairs: &[(PixelPoint, WorldPoint)]) -> Result<f64> {
    let mut acc = 0.0;
    for (p, w) in pairs {
        let q = project_to_pixel(h, *w)?;
        acc += (q.px - p.px).powi(2) + (q.py - p.py).powi(2);
    }
    Ok((acc / pairs.len().max(1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A random but well-conditioned camera-like homography with a33 = 1.
    fn random_homography<R: Rng>(r: &mut R) -> HomographyMatrix {
        loop {
            let m = Matrix3::new(
                r.gen_range(20.0..60.0),
                r.gen_range(-10.0..10.0),
                r.gen_range(200.0..800.0),
                r.gen_range(-10.0..10.0),
                r.gen_range(-60.0..-20.0),
                r.gen_range(300.0..900.0),
                r.gen_range(-0.01..0.01),
                r.gen_range(-0.02..0.02),
                1.0,
            );
            if let Ok(h) = HomographyMatrix::from_matrix(&m) {
                return h;
            }
        }
    }

    #[test]
    fn unit_square_to_itself_is_identity() {
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let pairs: Vec<_> = corners
            .iter()
            .map(|&(x, y)| (PixelPoint::new(x, y), WorldPoint::new(x, y)))
            .collect();
        let h = solve_homography(&pairs).unwrap();
        let id = Matrix3::<f64>::identity();
        assert!((h.matrix() - id).abs().max() < 1e-12);
    }

    #[test]
    fn forward_synthesis_recovers_the_matrix() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let h = random_homography(&mut r);
            let pairs: Vec<_> = (0..8)
                .map(|_| {
                    let w = WorldPoint::new(r.gen_range(-4.0..4.0), r.gen_range(0.0..25.0));
                    (project_to_pixel(&h, w).unwrap(), w)
                })
                .collect();
            let got = solve_homography(&pairs).unwrap();
            let diff = (got.matrix() - h.matrix()).abs().max();
            assert!(diff < 1e-8, "max |Δ| = {diff:e}");
            assert!(reprojection_rms(&got, &pairs).unwrap() < 1e-8);
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pairs: Vec<_> = (0..4)
            .map(|i| {
                let t = i as f64;
                (PixelPoint::new(2.0 * t, 3.0 * t), WorldPoint::new(t, t))
            })
            .collect();
        assert!(matches!(
            solve_homography(&pairs),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn three_collinear_of_four_is_degenerate() {
        let w = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 1.0)];
        let pairs: Vec<_> = w
            .iter()
            .map(|&(x, y)| (PixelPoint::new(x + 0.1 * y, y), WorldPoint::new(x, y)))
            .collect();
        assert!(matches!(
            solve_homography(&pairs),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let pairs = vec![(PixelPoint::new(0.0, 0.0), WorldPoint::new(0.0, 0.0)); 3];
        assert!(matches!(solve_homography(&pairs), Err(Error::TooFewPoints(3))));
    }

    #[test]
    fn projection_examples() {
        let id = HomographyMatrix::identity();
        let p = project_to_pixel(&id, WorldPoint::new(3.0, 4.0)).unwrap();
        assert_eq!((p.px, p.py), (3.0, 4.0));
        let w = project_to_world(&id, PixelPoint::new(3.0, 4.0)).unwrap();
        assert_eq!((w.x, w.y), (3.0, 4.0));

        let shift = HomographyMatrix::from_matrix(&Matrix3::new(1.0, 0.0, 10.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        let p = project_to_pixel(&shift, WorldPoint::new(0.0, 0.0)).unwrap();
        assert_eq!((p.px, p.py), (10.0, 0.0));
        let w = project_to_world(&shift, PixelPoint::new(10.0, 0.0)).unwrap();
        assert!(w.x.abs() < 1e-15 && w.y.abs() < 1e-15);
    }

    #[test]
    fn round_trip_through_random_homographies() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let h = random_homography(&mut r);
            let w = WorldPoint::new(r.gen_range(-4.0..4.0), r.gen_range(0.0..25.0));
            let back = project_to_world(&h, project_to_pixel(&h, w).unwrap()).unwrap();
            assert!((back.x - w.x).abs() < 1e-10 && (back.y - w.y).abs() < 1e-10);
            let p = PixelPoint::new(r.gen_range(0.0..1920.0), r.gen_range(0.0..1080.0));
            if let Ok(wp) = project_to_world(&h, p) {
                let q = project_to_pixel(&h, wp).unwrap();
                assert!((q.px - p.px).abs() < 1e-8 && (q.py - p.py).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn horizon_points_are_at_infinity() {
        // Third row (0, 1, 0): k = y, so y = 0 lies on the horizon.
        let h = HomographyMatrix::from_matrix(&Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0)).unwrap();
        assert!(matches!(
            project_to_pixel(&h, WorldPoint::new(3.0, 0.0)),
            Err(Error::PointAtInfinity(_))
        ));
    }
}
