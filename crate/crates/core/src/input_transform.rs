//! Probability-preserving map from standard Gaussian space to physical
//! variables with correlated non-Gaussian marginals (a Nataf model).
//!
//! Independent standard normals are first coloured with the eigenpairs of
//! the underlying Gaussian correlation matrix, then each coordinate is
//! pushed through `F_v^{-1}(Phi(.))`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::gaussian_geometry::SpaceDim;
use crate::special::{norm_cdf, norm_sf};

/// Coloured coordinates beyond this magnitude saturate before the marginal map.
pub const TAIL_CLAMP: f64 = 8.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginalSpec {
    StandardNormal,
    GumbelMax { location: f64, scale: f64 },
    WeibullMin { shape: f64, scale: f64 },
}

impl MarginalSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MarginalSpec::StandardNormal => Ok(()),
            MarginalSpec::GumbelMax { scale, location } => {
                if !(scale > 0.0) || !location.is_finite() {
                    return Err(config("gumbel scale must be positive"));
                }
                Ok(())
            }
            MarginalSpec::WeibullMin { shape, scale } => {
                if !(shape > 0.0 && scale > 0.0) {
                    return Err(config("weibull shape and scale must be positive"));
                }
                Ok(())
            }
        }
    }

    /// `F^{-1}(Phi(x))`, using whichever tail keeps precision.
    pub fn from_gaussian(&self, x: f64) -> f64 {
        let x = x.clamp(-TAIL_CLAMP, TAIL_CLAMP);
        match *self {
            MarginalSpec::StandardNormal => x,
            MarginalSpec::GumbelMax { location, scale } => {
                // -ln p, with p = Phi(x).
                let neg_ln_p = if x > 0.0 {
                    -(-norm_sf(x)).ln_1p()
                } else {
                    -norm_cdf(x).ln()
                };
                location - scale * neg_ln_p.ln()
            }
            MarginalSpec::WeibullMin { shape, scale } => {
                // -ln(1 - p).
                let neg_ln_q = if x < 0.0 {
                    -(-norm_cdf(x)).ln_1p()
                } else {
                    -norm_sf(x).ln()
                };
                scale * neg_ln_q.powf(1.0 / shape)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NatafModel {
    dim: SpaceDim,
    marginals: Vec<MarginalSpec>,
    correlation: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    coloring: DMatrix<f64>,
}

impl NatafModel {
    /// Build from marginals and the underlying Gaussian correlation matrix.
    pub fn new(marginals: Vec<MarginalSpec>, correlation: &[Vec<f64>]) -> Result<Self> {
        let n = marginals.len();
        let dim = SpaceDim::new(n)?;
        for m in &marginals {
            m.validate()?;
        }
        if correlation.len() != n || correlation.iter().any(|r| r.len() != n) {
            return Err(config(
                "correlation matrix shape does not match the marginals",
            ));
        }
        let c = DMatrix::from_fn(n, n, |i, j| correlation[i][j]);
        for i in 0..n {
            if (c[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(config("correlation matrix needs a unit diagonal"));
            }
            for j in 0..n {
                if (c[(i, j)] - c[(j, i)]).abs() > 1e-12 || c[(i, j)].abs() > 1.0 {
                    return Err(config(
                        "correlation matrix must be symmetric with entries in [-1, 1]",
                    ));
                }
            }
        }
        let eig = SymmetricEigen::new(c.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let eigenvalues = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
        if eigenvalues.iter().any(|&l| !(l > 1e-12)) {
            return Err(config("correlation matrix is not positive definite"));
        }
        let mut eigenvectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
        for k in 0..n {
            let mut col = eigenvectors.column_mut(k);
            if let Some(first) = col.iter().copied().find(|v| v.abs() > 1e-14) {
                if first < 0.0 {
                    col.neg_mut();
                }
            }
        }
        let sqrt_l = DMatrix::from_diagonal(&eigenvalues.map(f64::sqrt));
        let coloring = &eigenvectors * sqrt_l;
        Ok(NatafModel {
            dim,
            marginals,
            correlation: c,
            eigenvalues,
            eigenvectors,
            coloring,
        })
    }

    pub fn dim(&self) -> SpaceDim {
        self.dim
    }

    pub fn marginals(&self) -> &[MarginalSpec] {
        &self.marginals
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns, first nonzero entry positive.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// `Phi Lambda^{1/2} u`.
    pub fn color(&self, u: &[f64]) -> Vec<f64> {
        let n = self.dim.get();
        (0..n)
            .map(|i| (0..n).map(|k| self.coloring[(i, k)] * u[k]).sum())
            .collect()
    }

    pub fn marginal_map(&self, xc: &[f64]) -> Vec<f64> {
        xc.iter()
            .zip(&self.marginals)
            .map(|(&x, m)| m.from_gaussian(x))
            .collect()
    }

    pub fn to_physical(&self, u: &[f64]) -> Vec<f64> {
        self.marginal_map(&self.color(u))
    }
}

/// Gauss-Hermite rule for expectations under the standard normal law:
/// `E[f(U)] ~= sum w_i f(x_i)`, with weights summing to one.
///
/// Nodes are the eigenvalues of the Jacobi matrix of the probabilists'
/// Hermite polynomials; weights are the squared first eigenvector entries.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1 / total).collect(),
    )
}

pub const GAUSS_HERMITE_ORDER: usize = 64;
const RHO_TOLERANCE: f64 = 1e-4;

/// Pearson correlation of the mapped pair for a given Gaussian correlation.
pub fn mapped_correlation(mi: &MarginalSpec, mj: &MarginalSpec, rho_g: f64) -> f64 {
    let (x, w) = gauss_hermite(GAUSS_HERMITE_ORDER);
    let moments = |m: &MarginalSpec| {
        let mean: f64 = x
            .iter()
            .zip(&w)
            .map(|(&xa, &wa)| wa * m.from_gaussian(xa))
            .sum();
        let var: f64 = x
            .iter()
            .zip(&w)
            .map(|(&xa, &wa)| wa * (m.from_gaussian(xa) - mean).powi(2))
            .sum();
        (mean, var.sqrt())
    };
    let (mu_i, sd_i) = moments(mi);
    let (mu_j, sd_j) = moments(mj);
    let s = (1.0 - rho_g * rho_g).max(0.0).sqrt();
    let mut acc = 0.0;
    for (&xa, &wa) in x.iter().zip(&w) {
        let zi = mi.from_gaussian(xa) - mu_i;
        for (&xb, &wb) in x.iter().zip(&w) {
            acc += wa * wb * zi * (mj.from_gaussian(rho_g * xa + s * xb) - mu_j);
        }
    }
    acc / (sd_i * sd_j)
}

/// Gaussian correlation whose image under the marginal maps has Pearson
/// correlation `target`, found by bisection.
pub fn underlying_gaussian_correlation(
    mi: &MarginalSpec,
    mj: &MarginalSpec,
    target: f64,
) -> Result<f64> {
    if !(target.abs() < 1.0) {
        return Err(domain(format!(
            "target correlation must lie in (-1, 1), got {target}"
        )));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let edge = 1.0 - 1e-9;
    let (mut lo, mut hi) = (-edge, edge);
    let (f_lo, f_hi) = (
        mapped_correlation(mi, mj, lo),
        mapped_correlation(mi, mj, hi),
    );
    if target < f_lo || target > f_hi {
        return Err(domain(format!(
            "target {target} outside the attainable range [{f_lo:.4}, {f_hi:.4}]"
        )));
    }
    while hi - lo > RHO_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mapped_correlation(mi, mj, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    const GUMBEL: MarginalSpec = MarginalSpec::GumbelMax {
        location: 0.0,
        scale: 1.0,
    };
    const WEIBULL: MarginalSpec = MarginalSpec::WeibullMin {
        shape: 1.5,
        scale: 1.0,
    };

    #[test]
    fn marginal_quantiles() {
        assert_eq!(MarginalSpec::StandardNormal.from_gaussian(1.3), 1.3);
        assert!((GUMBEL.from_gaussian(0.0) - (-(2f64.ln()).ln())).abs() < 1e-12);
        assert!((WEIBULL.from_gaussian(0.0) - 2f64.ln().powf(2.0 / 3.0)).abs() < 1e-12);
        let mut prev = f64::NEG_INFINITY;
        for k in -85..=85 {
            let z = GUMBEL.from_gaussian(k as f64 * 0.1);
            assert!(z > prev);
            prev = z;
        }
        assert_eq!(GUMBEL.from_gaussian(20.0), GUMBEL.from_gaussian(TAIL_CLAMP));
    }

    #[test]
    fn eigen_structure_for_negative_correlation() {
        let m =
            NatafModel::new(vec![GUMBEL, WEIBULL], &[vec![1.0, -0.8], vec![-0.8, 1.0]]).unwrap();
        assert!((m.eigenvalues()[0] - 1.8).abs() < 1e-12);
        assert!((m.eigenvalues()[1] - 0.2).abs() < 1e-12);
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let v = m.eigenvectors();
        assert!((v[(0, 0)] - c).abs() < 1e-12 && (v[(1, 0)] + c).abs() < 1e-12);
        assert!((v[(0, 1)] - c).abs() < 1e-12 && (v[(1, 1)] - c).abs() < 1e-12);
        let rebuilt = v * DMatrix::from_diagonal(m.eigenvalues()) * v.transpose();
        assert!((rebuilt - m.correlation()).abs().max() < 1e-10);
    }

    #[test]
    fn colored_samples_have_target_correlation() {
        let m =
            NatafModel::new(vec![GUMBEL, WEIBULL], &[vec![1.0, -0.8], vec![-0.8, 1.0]]).unwrap();
        let mut rng = RngStream::new(5);
        let n = 100_000;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let u: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x = m.color(&u);
            sxx += x[0] * x[0];
            syy += x[1] * x[1];
            sxy += x[0] * x[1];
        }
        assert!((sxx / n as f64 - 1.0).abs() < 0.02);
        assert!((syy / n as f64 - 1.0).abs() < 0.02);
        assert!((sxy / (sxx * syy).sqrt() + 0.8).abs() < 0.01);
    }

    #[test]
    fn identity_correlation_preserves_covariance() {
        let m = NatafModel::new(
            vec![MarginalSpec::StandardNormal; 3],
            &[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        let c = m.coloring.clone();
        assert!((&c * c.transpose() - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn invalid_models() {
        assert!(NatafModel::new(vec![GUMBEL, WEIBULL], &[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
        assert!(NatafModel::new(vec![GUMBEL], &[vec![2.0]]).is_err());
        let bad = MarginalSpec::WeibullMin {
            shape: -1.0,
            scale: 1.0,
        };
        assert!(NatafModel::new(vec![bad], &[vec![1.0]]).is_err());
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(64);
        let m = |k: i32| x.iter().zip(&w).map(|(a, b)| b * a.powi(k)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-12);
        assert!(m(1).abs() < 1e-12);
        assert!((m(2) - 1.0).abs() < 1e-10);
        assert!((m(4) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn correlation_solve_trivial_cases() {
        let n = MarginalSpec::StandardNormal;
        assert!((underlying_gaussian_correlation(&n, &n, 0.37).unwrap() - 0.37).abs() < 1e-4);
        assert_eq!(
            underlying_gaussian_correlation(&GUMBEL, &WEIBULL, 0.0).unwrap(),
            0.0
        );
        assert!(underlying_gaussian_correlation(&n, &n, 1.0).is_err());
        // Strongly skewed marginals cannot reach -0.999.
        assert!(underlying_gaussian_correlation(&GUMBEL, &GUMBEL, -0.999).is_err());
    }
}
