//! Radial geometry of the standard Gaussian space.
//!
//! The distance of a standard Gaussian vector from the origin follows the chi
//! law with `N` degrees of freedom. Balls centred at the origin and the
//! annuli between two of them are the sampling regions used everywhere else,
//! so their probability contents and inverse radii live here.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::special::{gamma_p, gamma_p_inv, gamma_q, gamma_q_inv, ln_gamma, ln_gamma_q};

/// Number of independent standard Gaussian input variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct SpaceDim(usize);

impl SpaceDim {
    pub fn new(n_var: usize) -> Result<Self> {
        if n_var == 0 {
            return Err(domain("dimension must be at least 1"));
        }
        Ok(SpaceDim(n_var))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// Shape parameter `N/2` of the gamma law of `rho^2 / 2`.
    fn half(self) -> f64 {
        0.5 * self.0 as f64
    }
}

impl TryFrom<usize> for SpaceDim {
    type Error = crate::Error;
    fn try_from(n: usize) -> Result<Self> {
        SpaceDim::new(n)
    }
}

impl From<SpaceDim> for usize {
    fn from(d: SpaceDim) -> usize {
        d.0
    }
}

/// A ball centred at the origin with its inner and outer probability content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub radius: f64,
    pub p_in: f64,
    pub p_out: f64,
}

impl BallSpec {
    pub fn new(radius: f64, dim: SpaceDim) -> Result<Self> {
        check_radius(radius)?;
        Ok(BallSpec {
            radius,
            p_in: chi_cdf(radius, dim)?,
            p_out: chi_sf(radius, dim)?,
        })
    }
}

/// The ring between radii `r < R`.
///
/// Both the lower (`p_r`, `p_big_r`) and upper (`q_r`, `q_big_r`) contents
/// are stored: the annulus content `p_ann = q_r - q_big_r` is formed from the
/// upper tails so it keeps relative precision when `r` is large.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub inner: f64,
    #[serde(with = "crate::float_serde")]
    pub outer: f64,
    pub p_r: f64,
    pub p_big_r: f64,
    pub q_r: f64,
    pub q_big_r: f64,
    pub p_ann: f64,
}

impl AnnulusSpec {
    pub fn new(inner: f64, outer: f64, dim: SpaceDim) -> Result<Self> {
        check_radius(inner)?;
        if !(outer > inner) {
            return Err(domain(format!(
                "annulus needs r < R, got r={inner}, R={outer}"
            )));
        }
        let q_r = chi_sf(inner, dim)?;
        let q_big_r = if outer.is_infinite() {
            0.0
        } else {
            chi_sf(outer, dim)?
        };
        let p_ann = q_r - q_big_r;
        if !(p_ann > 0.0) {
            return Err(domain(format!(
                "degenerate annulus r={inner}, R={outer}: probability content {p_ann}"
            )));
        }
        Ok(AnnulusSpec {
            inner,
            outer,
            p_r: 1.0 - q_r,
            p_big_r: 1.0 - q_big_r,
            q_r,
            q_big_r,
            p_ann,
        })
    }
}

/// Summary moments of the chi law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialMoments {
    pub mean: f64,
    pub mode: f64,
    pub median_approx: f64,
    pub variance: f64,
}

fn check_radius(rho: f64) -> Result<()> {
    if rho.is_nan() || rho < 0.0 {
        return Err(domain(format!("radius must be nonnegative, got {rho}")));
    }
    Ok(())
}

fn check_open_probability(p: f64, what: &str) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("{what} must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// Log of the chi density.
pub fn chi_log_pdf(rho: f64, dim: SpaceDim) -> Result<f64> {
    check_radius(rho)?;
    let n = dim.as_f64();
    if rho == 0.0 {
        return Ok(if dim.get() == 1 {
            (2.0 / PI).sqrt().ln()
        } else {
            f64::NEG_INFINITY
        });
    }
    Ok(
        (1.0 - dim.half()) * 2f64.ln() - ln_gamma(dim.half()) + (n - 1.0) * rho.ln()
            - 0.5 * rho * rho,
    )
}

/// Density of the distance from the origin.
pub fn chi_pdf(rho: f64, dim: SpaceDim) -> Result<f64> {
    Ok(chi_log_pdf(rho, dim)?.exp())
}

/// `P(rho' <= rho)`.
pub fn chi_cdf(rho: f64, dim: SpaceDim) -> Result<f64> {
    check_radius(rho)?;
    Ok(gamma_p(dim.half(), 0.5 * rho * rho))
}

/// `P(rho' > rho)`, the exterior content of the ball of radius `rho`.
pub fn chi_sf(rho: f64, dim: SpaceDim) -> Result<f64> {
    check_radius(rho)?;
    Ok(gamma_q(dim.half(), 0.5 * rho * rho))
}

/// `ln P(rho' > rho)`.
pub fn chi_log_sf(rho: f64, dim: SpaceDim) -> Result<f64> {
    check_radius(rho)?;
    Ok(ln_gamma_q(dim.half(), 0.5 * rho * rho))
}

/// Radius of the ball containing probability `p`.
pub fn chi_ppf(p: f64, dim: SpaceDim) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(domain(format!("probability must lie in [0, 1), got {p}")));
    }
    Ok((2.0 * gamma_p_inv(dim.half(), p)).sqrt())
}

/// Radius of the ball whose exterior holds probability `p_out`.
pub fn radius_for_pout(p_out: f64, dim: SpaceDim) -> Result<f64> {
    if !(p_out > 0.0 && p_out <= 1.0) {
        return Err(domain(format!(
            "exterior probability must lie in (0, 1], got {p_out}"
        )));
    }
    Ok((2.0 * gamma_q_inv(dim.half(), p_out)).sqrt())
}

pub fn ball_volume(r: f64, dim: SpaceDim) -> Result<f64> {
    check_radius(r)?;
    let h = dim.half();
    Ok((h * PI.ln() + dim.as_f64() * r.ln() - ln_gamma(h + 1.0)).exp())
}

pub fn ball_surface(r: f64, dim: SpaceDim) -> Result<f64> {
    check_radius(r)?;
    let h = dim.half();
    if dim.get() == 1 {
        // Two isolated points at +-r.
        return Ok(2.0);
    }
    Ok(2.0 * (h * PI.ln() + (dim.as_f64() - 1.0) * r.ln() - ln_gamma(h)).exp())
}

/// Log of the joint standard Gaussian density at any point of norm `rho`.
pub fn point_log_density(rho: f64, dim: SpaceDim) -> f64 {
    -dim.half() * (2.0 * PI).ln() - 0.5 * rho * rho
}

/// Same as [`point_log_density`] but taking the squared norm.
pub fn point_log_density_sq(rho_sq: f64, dim: SpaceDim) -> f64 {
    -dim.half() * (2.0 * PI).ln() - 0.5 * rho_sq
}

pub fn radial_moments(dim: SpaceDim) -> RadialMoments {
    let n = dim.as_f64();
    let mean = 2f64.sqrt() * (ln_gamma(0.5 * (n + 1.0)) - ln_gamma(0.5 * n)).exp();
    let mode = (n - 1.0).sqrt();
    let median_approx = n.sqrt() * (1.0 - 2.0 / (9.0 * n)).powf(1.5);
    RadialMoments {
        mean,
        mode,
        median_approx,
        variance: n - mean * mean,
    }
}

/// Inverse-transform distance for sampling the exterior of the ball `r`.
pub fn exterior_distance(p: f64, r: f64, dim: SpaceDim) -> Result<f64> {
    check_open_probability(p, "sampling probability")?;
    check_radius(r)?;
    // 1 - [p + (1-p) F(r)] = (1-p) Q(r), kept in the upper tail.
    let q = (1.0 - p) * chi_sf(r, dim)?;
    let d = radius_for_pout(q, dim)?;
    Ok(if d > r { d } else { r.next_up() })
}

/// Inverse-transform distance for sampling inside the annulus.
pub fn annulus_distance(p: f64, ann: &AnnulusSpec, dim: SpaceDim) -> Result<f64> {
    check_open_probability(p, "sampling probability")?;
    if !(ann.p_ann > 0.0) {
        return Err(domain("degenerate annulus"));
    }
    let q = ann.q_r - p * ann.p_ann;
    let d = if q < 0.5 {
        radius_for_pout(q, dim)?
    } else {
        chi_ppf(ann.p_r + p * ann.p_ann, dim)?
    };
    Ok(d.clamp(ann.inner.next_up(), ann.outer.next_down()))
}

/// Outer radius leaving only `p_prev * fraction` probability outside.
pub fn outer_radius_for_estimate(p_prev: f64, dim: SpaceDim, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(config(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if !(p_prev > 0.0 && p_prev <= 1.0) {
        return Err(domain(format!(
            "previous estimate must lie in (0, 1], got {p_prev}"
        )));
    }
    radius_for_pout(p_prev * fraction, dim)
}

/// Default share of the previous estimate left outside the outer radius.
pub const DEFAULT_FRACTION: f64 = 1e-4;

#[cfg(test)]
mod tests {
    use super::*;

    fn d(n: usize) -> SpaceDim {
        SpaceDim::new(n).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(SpaceDim::new(0).is_err());
    }

    #[test]
    fn pdf_examples() {
        assert_eq!(chi_pdf(0.0, d(2)).unwrap(), 0.0);
        assert!(close(chi_pdf(1.0, d(2)).unwrap(), (-0.5f64).exp(), 1e-14));
        let maxwell = (2.0 / PI).sqrt() * (-0.5f64).exp();
        assert!(close(chi_pdf(1.0, d(3)).unwrap(), maxwell, 1e-14));
        assert!(chi_pdf(-1.0, d(2)).is_err());
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(chi_cdf(0.0, d(7)).unwrap(), 0.0);
        assert!(close(
            chi_cdf(1.0, d(2)).unwrap(),
            1.0 - (-0.5f64).exp(),
            1e-15
        ));
        assert!(close(chi_cdf(2.15, d(2)).unwrap(), 0.901, 1e-3));
        assert!(chi_cdf(-0.1, d(2)).is_err());
    }

    #[test]
    fn ppf_examples() {
        assert_eq!(chi_ppf(0.0, d(4)).unwrap(), 0.0);
        let r = chi_ppf(0.9, d(2)).unwrap();
        assert!(close(r, (-2.0 * 0.1f64.ln()).sqrt(), 1e-12));
        assert!(close(chi_ppf(1.0 - 1e-6, d(3)).unwrap(), 5.54, 5e-3));
        assert!(chi_ppf(1.0, d(2)).is_err());
        assert!(chi_ppf(-0.2, d(2)).is_err());
    }

    #[test]
    fn radius_for_pout_examples() {
        assert_eq!(radius_for_pout(1.0, d(3)).unwrap(), 0.0);
        assert!(close(radius_for_pout(0.1, d(10)).unwrap(), 4.00, 5e-3));
        assert!(close(radius_for_pout(1e-15, d(20)).unwrap(), 10.82, 5e-3));
        assert!(radius_for_pout(0.0, d(3)).is_err());
        assert!(radius_for_pout(1.5, d(3)).is_err());
        let a = radius_for_pout(0.3, d(5)).unwrap();
        let b = chi_ppf(0.7, d(5)).unwrap();
        assert!(close(a, b, 1e-9));
    }

    #[test]
    fn ball_volume_and_surface() {
        assert!(close(ball_volume(1.0, d(2)).unwrap(), PI, 1e-13));
        assert!(close(
            ball_volume(1.0, d(3)).unwrap(),
            4.0 * PI / 3.0,
            1e-13
        ));
        assert!(close(ball_volume(2.0, d(4)).unwrap(), PI * PI * 8.0, 1e-11));
        assert!(close(ball_surface(1.0, d(3)).unwrap(), 4.0 * PI, 1e-13));
        assert!(close(ball_surface(1.0, d(2)).unwrap(), 2.0 * PI, 1e-13));
        assert!(close(
            ball_surface(3.0, d(5)).unwrap(),
            8.0 * PI * PI / 3.0 * 81.0,
            1e-9
        ));
    }

    #[test]
    fn density_times_surface_is_chi_pdf() {
        for n in 1..=20 {
            for &rho in &[0.3, 1.0, 2.5, 6.0, 10.5] {
                let lhs = chi_pdf(rho, d(n)).unwrap();
                let rhs = point_log_density(rho, d(n)).exp() * ball_surface(rho, d(n)).unwrap();
                assert!((lhs / rhs - 1.0).abs() < 1e-9, "n={n} rho={rho}");
            }
        }
    }

    #[test]
    fn point_density_examples() {
        let base = -(2.0 * PI).ln();
        assert!(close(point_log_density(0.0, d(2)), base, 1e-15));
        assert!(close(point_log_density(5.0, d(2)), base - 12.5, 1e-13));
        assert!(close(
            point_log_density(4.0, d(10)),
            -5.0 * (2.0 * PI).ln() - 8.0,
            1e-13
        ));
    }

    #[test]
    fn moments() {
        let m = radial_moments(d(1));
        assert!(close(m.mean, (2.0 / PI).sqrt(), 1e-13));
        assert_eq!(radial_moments(d(2)).mode, 1.0);
        assert!(close(radial_moments(d(400)).variance, 0.5, 1e-3));
        for n in 3..=30 {
            // Loose check of the median approximation against the exact quantile.
            let exact = chi_ppf(0.5, d(n)).unwrap();
            assert!((radial_moments(d(n)).median_approx / exact - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn exterior_distance_examples() {
        let near = exterior_distance(1e-12, 2.0, d(2)).unwrap();
        assert!(near > 2.0 && near < 2.0 + 1e-9);
        let ln2 = 2f64.ln();
        assert!(close(
            exterior_distance(0.5, 0.0, d(2)).unwrap(),
            (2.0 * ln2).sqrt(),
            1e-12
        ));
        assert!(close(
            exterior_distance(0.5, 3.0, d(2)).unwrap(),
            (2.0 * ln2 + 9.0).sqrt(),
            1e-12
        ));
        assert!(exterior_distance(0.0, 1.0, d(2)).is_err());
        assert!(exterior_distance(1.0, 1.0, d(2)).is_err());
    }

    #[test]
    fn annulus_distance_examples() {
        let ann = AnnulusSpec::new(3.0, 5.0, d(2)).unwrap();
        let lo = annulus_distance(1e-12, &ann, d(2)).unwrap();
        let hi = annulus_distance(1.0 - 1e-12, &ann, d(2)).unwrap();
        assert!(lo > 3.0 && lo < 3.0 + 1e-6);
        assert!(hi < 5.0 && hi > 5.0 - 1e-6);
        // Bisection on the Rayleigh cdf.
        let rayleigh = |x: f64| 1.0 - (-0.5 * x * x).exp();
        let target = 0.5 * (rayleigh(3.0) + rayleigh(5.0));
        let (mut a, mut b) = (3.0, 5.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if rayleigh(m) < target {
                a = m;
            } else {
                b = m;
            }
        }
        assert!(close(annulus_distance(0.5, &ann, d(2)).unwrap(), a, 1e-10));
        assert!(AnnulusSpec::new(3.0, 3.0, d(2)).is_err());
    }

    #[test]
    fn outer_radius_examples() {
        let r = outer_radius_for_estimate(1.0, d(2), DEFAULT_FRACTION).unwrap();
        assert!(close(r, 4.29, 5e-3));
        let r = outer_radius_for_estimate(2.582e-3, d(2), DEFAULT_FRACTION).unwrap();
        assert!(close(r, radius_for_pout(2.582e-7, d(2)).unwrap(), 1e-12));
        let r = outer_radius_for_estimate(1e-6, d(10), DEFAULT_FRACTION).unwrap();
        assert!(close(r, 8.26, 5e-3));
        assert!(outer_radius_for_estimate(0.1, d(2), 1.0).is_err());
        assert!(outer_radius_for_estimate(0.1, d(2), 0.0).is_err());
    }

    #[test]
    fn exterior_rule_reproduced_from_inner_content() {
        let r = 3.0;
        let q = chi_sf(r, d(2)).unwrap();
        let big_r = outer_radius_for_estimate(q, d(2), DEFAULT_FRACTION).unwrap();
        let q_big = chi_sf(big_r, d(2)).unwrap();
        assert!((q_big / (q * 1e-4) - 1.0).abs() < 1e-10);
    }
}
