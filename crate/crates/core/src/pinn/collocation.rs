use crate::elasticity::Side;
use crate::scalar::Real;

use super::LossError;

/// Uniform collocation points for the residual, boundary, and data terms.
///
/// Interior points form the tensor grid `{i / (n + 1)}_{i=1..n}` squared,
/// ordered with `x` outer and `y` fastest. Each side carries `n_boundary`
/// equispaced points including both corners.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet<T> {
    pub n_interior: usize,
    pub n_boundary: usize,
    pub interior: Vec<[T; 2]>,
    pub boundary: Vec<(Side, Vec<[T; 2]>)>,
}

impl<T: Real> CollocationSet<T> {
    pub fn new(n_interior: usize, n_boundary: usize) -> Result<Self, LossError> {
        if n_interior < 2 || n_boundary < 2 {
            return Err(LossError::Config(format!(
                "collocation grids need at least 2 points per direction (got {n_interior}, {n_boundary})"
            )));
        }
        let h = T::one() / T::lit((n_interior + 1) as f64);
        let coords: Vec<T> = (1..=n_interior).map(|i| T::lit(i as f64) * h).collect();
        let interior = coords
            .iter()
            .flat_map(|&x| coords.iter().map(move |&y| [x, y]))
            .collect();
        let hb = T::one() / T::lit((n_boundary - 1) as f64);
        let boundary = Side::ALL
            .iter()
            .map(|&side| {
                let pts = (0..n_boundary)
                    .map(|j| {
                        // keep the far endpoint exact
                        let s = if j + 1 == n_boundary { T::one() } else { T::lit(j as f64) * hb };
                        let (x, y) = side.point(s);
                        [x, y]
                    })
                    .collect();
                (side, pts)
            })
            .collect();
        Ok(CollocationSet {
            n_interior,
            n_boundary,
            interior,
            boundary,
        })
    }

    pub fn side(&self, side: Side) -> &[[T; 2]] {
        self.boundary
            .iter()
            .find(|(s, _)| *s == side)
            .map(|(_, p)| p.as_slice())
            .unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_interior() {
        let c = CollocationSet::<f64>::new(3, 2).unwrap();
        let expect: Vec<[f64; 2]> = [0.25, 0.5, 0.75]
            .iter()
            .flat_map(|&x| [0.25, 0.5, 0.75].iter().map(move |&y| [x, y]))
            .collect();
        assert_eq!(c.interior, expect);
        assert_eq!(c.side(Side::YMinus), &[[0.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn counts_and_placement() {
        let c = CollocationSet::<f64>::new(100, 100).unwrap();
        assert_eq!(c.interior.len(), 10_000);
        assert!(c.interior.iter().all(|p| p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0));
        for (side, pts) in &c.boundary {
            assert_eq!(pts.len(), 100);
            for p in pts {
                match side {
                    Side::XMinus => assert_eq!(p[0], 0.0),
                    Side::XPlus => assert_eq!(p[0], 1.0),
                    Side::YMinus => assert_eq!(p[1], 0.0),
                    Side::YPlus => assert_eq!(p[1], 1.0),
                }
            }
        }
    }

    #[test]
    fn too_small_grid_rejected() {
        assert!(CollocationSet::<f64>::new(1, 5).is_err());
        assert!(CollocationSet::<f64>::new(5, 1).is_err());
    }
}
