//! Sufficient statistics for a drift that is linear in `ϑ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::guided::GuidedModel;
use crate::linalg::spd_inverse;
use crate::sde::Path;

/// `μ = Σ_j Φ_j'a_j⁻¹ΔX_j`, `Σ = Σ_j Φ_j'a_j⁻¹Φ_j Δt_j`, `W = Σ + diag(ξ⁻²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

/// Add the left-point sums of `path` (local times shifted by `t0`) to
/// `(mu, sigma)`.
pub fn accumulate(
    model: &dyn GuidedModel,
    theta: &[f64],
    t0: f64,
    path: &Path,
    mu: &mut DVector<f64>,
    sigma: &mut DMatrix<f64>,
) -> Result<()> {
    let ts = path.times();
    for j in 0..ts.len().saturating_sub(1) {
        let t = t0 + ts[j];
        let x = path.state(j);
        let phi = model
            .drift_basis(t, &x)
            .ok_or_else(|| Error::Unsupported("model drift is not linear in its parameters".into()))?;
        if phi.ncols() != mu.len() {
            return Err(Error::Dimension {
                what: "drift basis size",
                expected: mu.len(),
                got: phi.ncols(),
            });
        }
        let a = model.diffusion(t, &x, theta);
        let a_inv = spd_inverse(&a, "diffusion matrix a", Some(t))?;
        let pa = phi.transpose() * a_inv;
        let dx = path.state(j + 1) - &x;
        *mu += &pa * dx;
        *sigma += &pa * &phi * (ts[j + 1] - ts[j]);
    }
    Ok(())
}

/// Statistics on one (typically concatenated) path with prior precisions
/// `prec` (`ξ⁻²`, zero for a flat direction).
pub fn conjugate_stats(model: &dyn GuidedModel, theta: &[f64], path: &Path, prec: &[f64]) -> Result<ConjugateStats> {
    let n = prec.len();
    let mut mu = DVector::zeros(n);
    let mut sigma = DMatrix::zeros(n, n);
    accumulate(model, theta, 0.0, path, &mut mu, &mut sigma)?;
    Ok(finish(mu, sigma, prec))
}

pub(crate) fn finish(mu: DVector<f64>, sigma: DMatrix<f64>, prec: &[f64]) -> ConjugateStats {
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let w = &sigma + DMatrix::from_diagonal(&DVector::from_column_slice(prec));
    ConjugateStats { mu, sigma, w }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guided::{GuidedModel, Segment};
    use crate::linproc::LinearAuxiliary;
    use crate::models::Arctan;
    use crate::sde::{DiffusionModel, TimeGrid};

    struct Constant;
    impl DiffusionModel for Constant {
        fn state_dim(&self) -> usize {
            1
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn param_names(&self) -> Vec<String> {
            vec!["mu".into()]
        }
        fn drift(&self, _t: f64, _x: &DVector<f64>, th: &[f64]) -> DVector<f64> {
            DVector::from_element(1, th[0])
        }
        fn dispersion(&self, _t: f64, _x: &DVector<f64>, _th: &[f64]) -> DMatrix<f64> {
            DMatrix::identity(1, 1)
        }
    }
    impl GuidedModel for Constant {
        fn auxiliary(&self, _th: &[f64], _seg: &Segment) -> Result<LinearAuxiliary> {
            unreachable!()
        }
        fn drift_basis(&self, _t: f64, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(DMatrix::identity(1, 1))
        }
    }

    #[test]
    fn constant_basis_telescopes() {
        let grid = TimeGrid::new(vec![0.0, 0.3, 0.45, 1.1, 2.0]).unwrap();
        let states = DMatrix::from_row_slice(1, 5, &[0.2, -0.4, 1.0, 0.7, 1.9]);
        let path = Path::new(grid, states).unwrap();
        let st = conjugate_stats(&Constant, &[0.0], &path, &[0.0]).unwrap();
        assert!((st.mu[0] - 1.7).abs() < 1e-14);
        assert!((st.sigma[(0, 0)] - 2.0).abs() < 1e-14);
        assert_eq!(st.w, st.sigma);
        let st = conjugate_stats(&Constant, &[0.0], &path, &[0.25]).unwrap();
        assert!((st.w[(0, 0)] - 2.25).abs() < 1e-14);
    }

    #[test]
    fn arctan_matches_scalar_sums() {
        // independent evaluation with the arctan basis written out by hand
        let times: Vec<f64> = (0..50).map(|k| 0.01 * k as f64 * (1.0 + 0.003 * k as f64)).collect();
        let xs: Vec<f64> = (0..50).map(|k| (0.37 * k as f64).sin() * 2.0).collect();
        let path = Path::new(TimeGrid::new(times.clone()).unwrap(), DMatrix::from_row_slice(1, 50, &xs)).unwrap();
        let sig = 0.7;
        let st = conjugate_stats(&Arctan, &[-1.0, 0.5, sig], &path, &[0.1, 0.2]).unwrap();
        let mut mu = [0.0; 2];
        let mut s = [[0.0; 2]; 2];
        for j in 0..49 {
            let f = [xs[j].atan(), 1.0];
            let dt = times[j + 1] - times[j];
            for k in 0..2 {
                mu[k] += f[k] * (xs[j + 1] - xs[j]) / (sig * sig);
                for l in 0..2 {
                    s[k][l] += f[k] * f[l] * dt / (sig * sig);
                }
            }
        }
        for k in 0..2 {
            assert!((st.mu[k] - mu[k]).abs() < 1e-10);
            for l in 0..2 {
                assert!((st.sigma[(k, l)] - s[k][l]).abs() < 1e-10);
            }
        }
        assert!((st.w[(1, 1)] - s[1][1] - 0.2).abs() < 1e-10);
    }
}
