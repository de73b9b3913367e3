//! Probability estimates from the nearest-neighbour surrogate.
//!
//! Screening clouds around the rare design points locate the most central
//! rare region, which fixes the inner radius of the ring. Importance
//! sampling over that ring then gives every label's probability with a
//! closed-form variance, because the likelihood ratio is the constant
//! ring content.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::candidate_engine::default_sigma;
use crate::classifier::{EventLabel, ExperimentalDesign};
use crate::direction_sampling::{low_discrepancy_directions, ScrambledHalton};
use crate::error::{config, domain, state, Result};
use crate::exploration_plan::level_p_out;
use crate::float_serde;
use crate::gaussian_geometry::{
    annulus_distance, chi_ppf, chi_sf, outer_radius_for_estimate, radius_for_pout, AnnulusSpec,
    SpaceDim,
};
use crate::points::{dist_sq, norm, norm_sq, PointSet};
use crate::rng::RngStream;

pub const DEFAULT_N_IS: usize = 10_000;
pub const DEFAULT_N_IS_FINAL: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    GlobalRing,
    /// Diagnostic only; biased when clouds overlap.
    Localized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub n_sim: usize,
    pub label: EventLabel,
    pub p_hat: f64,
    pub variance: f64,
    #[serde(with = "float_serde")]
    pub cov: f64,
    pub n_is: usize,
    pub n_is_hits: usize,
    pub annulus: Option<AnnulusSpec>,
    pub method: EstimateMethod,
}

/// Generic arithmetic-average variance of `(1/n) sum y_i`, given only the
/// nonzero terms `y_i`.
pub fn generic_variance(nonzero: &[f64], n: usize) -> f64 {
    let n = n as f64;
    let mean = nonzero.iter().sum::<f64>() / n;
    let second = nonzero.iter().map(|y| y * y).sum::<f64>() / n;
    ((second - mean * mean) / n).max(0.0)
}

fn cov_of(p_hat: f64, variance: f64) -> f64 {
    if p_hat > 0.0 {
        variance.sqrt() / p_hat
    } else {
        f64::INFINITY
    }
}

/// Classified clouds around rare design points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningResult {
    pub dots: PointSet,
    pub labels: Vec<EventLabel>,
    /// Design index of the cloud centre for every dot.
    pub seeds: Vec<usize>,
    pub sigma: f64,
    pub rare_labels: Vec<EventLabel>,
    pub min_rare_radius: f64,
}

/// Gaussian clouds around every design point labelled with one of
/// `rare_labels`, classified by the surrogate. The inner radius is the
/// smallest norm among rare-classified dots and the seeds themselves.
pub fn screen(
    rng: &mut RngStream,
    ed: &ExperimentalDesign,
    rare_labels: &[EventLabel],
    dots_per_seed: usize,
) -> Result<ScreeningResult> {
    let seeds: Vec<usize> = (0..ed.len())
        .filter(|&i| rare_labels.contains(&ed.labels()[i]))
        .collect();
    if seeds.is_empty() {
        return Err(state("screening needs at least one rare design point"));
    }
    let dim = ed.dim();
    let sigma = default_sigma(dim);
    let mut dots = PointSet::with_capacity(dim.get(), seeds.len() * dots_per_seed);
    let mut owners = Vec::with_capacity(seeds.len() * dots_per_seed);
    let mut x = vec![0.0; dim.get()];
    for &s in &seeds {
        let c = ed.point(s);
        for _ in 0..dots_per_seed {
            for (xi, ci) in x.iter_mut().zip(c) {
                let z: f64 = StandardNormal.sample(rng);
                *xi = ci + sigma * z;
            }
            dots.push(&x);
            owners.push(s);
        }
    }
    let labels = ed.classify_batch(&dots)?;
    let mut r_sq = seeds
        .iter()
        .map(|&s| norm_sq(ed.point(s)))
        .fold(f64::INFINITY, f64::min);
    for (x, l) in dots.iter().zip(&labels) {
        if rare_labels.contains(l) {
            r_sq = r_sq.min(norm_sq(x));
        }
    }
    Ok(ScreeningResult {
        dots,
        labels,
        seeds: owners,
        sigma,
        rare_labels: rare_labels.to_vec(),
        min_rare_radius: r_sq.sqrt(),
    })
}

/// Localized importance sampling with each dot weighted by its own cloud.
pub fn localized_is_estimate(
    screening: &ScreeningResult,
    ed: &ExperimentalDesign,
    rare_label: EventLabel,
) -> Result<EstimateRecord> {
    let n = screening.dots.len();
    if n == 0 {
        return Err(state("localized estimate needs screening dots"));
    }
    let dim = ed.dim().as_f64();
    let s2 = screening.sigma * screening.sigma;
    let ln_sigma_n = dim * screening.sigma.ln();
    let mut terms = Vec::new();
    for ((x, l), &k) in screening
        .dots
        .iter()
        .zip(&screening.labels)
        .zip(&screening.seeds)
    {
        if *l == rare_label {
            // ln f(x) - ln h_k(x); the (2 pi)^(N/2) factors cancel.
            let ln_w = -0.5 * norm_sq(x) + 0.5 * dist_sq(x, ed.point(k)) / s2 + ln_sigma_n;
            terms.push(ln_w.exp());
        }
    }
    let p_hat = terms.iter().sum::<f64>() / n as f64;
    let variance = generic_variance(&terms, n);
    Ok(EstimateRecord {
        n_sim: ed.len(),
        label: rare_label,
        p_hat,
        variance,
        cov: cov_of(p_hat, variance),
        n_is: n,
        n_is_hits: terms.len(),
        annulus: None,
        method: EstimateMethod::Localized,
    })
}

/// Radius of the first exploration level beyond `r`.
pub fn next_level_radius_above(r: f64, dim: SpaceDim) -> Result<f64> {
    for level in 1..=300 {
        let rho = radius_for_pout(level_p_out(level), dim)?;
        if rho > r {
            return Ok(rho);
        }
    }
    Err(domain(format!("no exploration level lies beyond r={r}")))
}

/// Ring from the screening radius out to where only `fraction` of the
/// previous estimate (or, without one, of the exterior of `r`) is left.
pub fn build_annulus(
    screening: &ScreeningResult,
    prev_estimate: Option<f64>,
    dim: SpaceDim,
    fraction: f64,
) -> Result<AnnulusSpec> {
    annulus_for_radius(screening.min_rare_radius, prev_estimate, dim, fraction)
}

pub fn annulus_for_radius(
    r: f64,
    prev_estimate: Option<f64>,
    dim: SpaceDim,
    fraction: f64,
) -> Result<AnnulusSpec> {
    let mut outer = match prev_estimate {
        Some(p) if p > 0.0 => outer_radius_for_estimate(p.min(1.0), dim, fraction)?,
        _ => {
            let q_r = chi_sf(r, dim)?;
            outer_radius_for_estimate(q_r, dim, fraction)?
        }
    };
    if r >= outer {
        let widened = next_level_radius_above(r, dim)?;
        log::warn!("inner radius {r:.4} reaches outer radius {outer:.4}; widening to {widened:.4}");
        outer = widened;
    }
    AnnulusSpec::new(r, outer, dim)
}

/// Nodes and labels behind a global ring estimate, kept for sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalIsOutput {
    pub records: Vec<EstimateRecord>,
    pub nodes: PointSet,
    pub node_labels: Vec<EventLabel>,
}

/// Low-discrepancy directions; on the circle the angle itself is stratified,
/// which is both cheaper and more even than normalising Gaussian pairs.
fn ring_directions(rng: &mut RngStream, n: usize, dim: SpaceDim) -> PointSet {
    if dim.get() != 2 {
        return low_discrepancy_directions(rng, n, dim);
    }
    let mut seq = ScrambledHalton::new(rng, 1);
    let mut u = [0.0];
    let mut out = PointSet::with_capacity(2, n);
    for i in 0..n {
        seq.point(i as u64, &mut u);
        let (s, c) = (2.0 * std::f64::consts::PI * u[0]).sin_cos();
        out.push(&[c, s]);
    }
    out
}

/// `n` ring nodes: fresh low-discrepancy directions with stratified radial
/// probabilities `(i - 0.5)/n` assigned in random order.
pub fn ring_nodes(
    rng: &mut RngStream,
    annulus: &AnnulusSpec,
    n: usize,
    dim: SpaceDim,
) -> Result<PointSet> {
    if n == 0 {
        return Err(config("n_is must be at least 1"));
    }
    let dirs = ring_directions(rng, n, dim);
    let mut strata: Vec<usize> = (0..n).collect();
    strata.shuffle(rng);
    let mut nodes = PointSet::with_capacity(dim.get(), n);
    let mut x = vec![0.0; dim.get()];
    for (u, &k) in dirs.iter().zip(&strata) {
        let p = (k as f64 + 0.5) / n as f64;
        let rho = annulus_distance(p, annulus, dim)?;
        for (xi, ui) in x.iter_mut().zip(u) {
            *xi = rho * ui;
        }
        nodes.push(&x);
    }
    Ok(nodes)
}

/// Ring estimate for every label in `labels` from already classified nodes.
pub fn ring_records(
    n_sim: usize,
    annulus: &AnnulusSpec,
    node_labels: &[EventLabel],
    labels: &[EventLabel],
) -> Vec<EstimateRecord> {
    let n = node_labels.len();
    let nf = n as f64;
    labels
        .iter()
        .map(|&label| {
            let hits = node_labels.iter().filter(|&&l| l == label).count();
            let p_hat = annulus.p_ann * hits as f64 / nf;
            let variance = (p_hat / nf) * (annulus.p_ann - p_hat);
            let cov = if hits == 0 {
                f64::INFINITY
            } else {
                (nf / hits as f64 - 1.0).sqrt() / nf.sqrt()
            };
            EstimateRecord {
                n_sim,
                label,
                p_hat,
                variance: variance.max(0.0),
                cov,
                n_is: n,
                n_is_hits: hits,
                annulus: Some(*annulus),
                method: EstimateMethod::GlobalRing,
            }
        })
        .collect()
}

/// Global ring importance sampling over the surrogate.
pub fn global_is_estimate(
    rng: &mut RngStream,
    ed: &ExperimentalDesign,
    labels: &[EventLabel],
    annulus: &AnnulusSpec,
    n_is: usize,
) -> Result<GlobalIsOutput> {
    let nodes = ring_nodes(rng, annulus, n_is, ed.dim())?;
    let node_labels = ed.classify_batch(&nodes)?;
    Ok(GlobalIsOutput {
        records: ring_records(ed.len(), annulus, &node_labels, labels),
        nodes,
        node_labels,
    })
}

/// Look for rare-classified points inside the ball of radius `r`, which is
/// assumed free of rare events. Returns the smallest offending norm.
pub fn probe_safe_ball(
    rng: &mut RngStream,
    ed: &ExperimentalDesign,
    r: f64,
    rare_labels: &[EventLabel],
    n: usize,
) -> Result<Option<f64>> {
    if n == 0 || r <= 0.0 {
        return Ok(None);
    }
    let dim = ed.dim();
    let p_r = 1.0 - chi_sf(r, dim)?;
    if !(p_r > 0.0) {
        return Ok(None);
    }
    let dirs = ring_directions(rng, n, dim);
    let mut probes = PointSet::with_capacity(dim.get(), n);
    let mut x = vec![0.0; dim.get()];
    for (i, u) in dirs.iter().enumerate() {
        let rho = chi_ppf(p_r * (i as f64 + 0.5) / n as f64, dim)?.min(r);
        for (xi, ui) in x.iter_mut().zip(u) {
            *xi = rho * ui;
        }
        probes.push(&x);
    }
    let labels = ed.classify_batch(&probes)?;
    let worst = probes
        .iter()
        .zip(&labels)
        .filter(|(_, l)| rare_labels.contains(l))
        .map(|(x, _)| norm(x))
        .fold(f64::INFINITY, f64::min);
    Ok(worst.is_finite().then_some(worst))
}

/// Settings of one estimation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationSettings {
    pub n_is: usize,
    pub dots_per_seed: usize,
    pub fraction: f64,
    /// Fraction of `n_is` spent probing the inner ball.
    pub probe_share: f64,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        EstimationSettings {
            n_is: DEFAULT_N_IS,
            dots_per_seed: crate::candidate_engine::DEFAULT_DOTS_PER_SEED,
            fraction: crate::gaussian_geometry::DEFAULT_FRACTION,
            probe_share: 0.1,
        }
    }
}

/// Everything one estimation pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimation {
    pub screening: ScreeningResult,
    pub annulus: AnnulusSpec,
    pub global: GlobalIsOutput,
    pub localized: Vec<EstimateRecord>,
}

impl Estimation {
    /// Summed global estimate over the rare labels.
    pub fn rare_total(&self) -> f64 {
        self.global
            .records
            .iter()
            .filter(|r| r.label.is_rare())
            .map(|r| r.p_hat)
            .sum()
    }
}

/// Screen, build the ring (shrinking it if the inner ball turns out to hold
/// rare-classified points), estimate every label globally and every rare
/// label locally.
pub fn estimate(
    rng: &RngStream,
    step: u64,
    ed: &ExperimentalDesign,
    prev_estimate: Option<f64>,
    settings: &EstimationSettings,
) -> Result<Estimation> {
    use crate::rng::purpose;
    if settings.n_is == 0 {
        return Err(config("n_is must be at least 1"));
    }
    let dim = ed.dim();
    let rare: Vec<EventLabel> = ed
        .distinct_labels()
        .into_iter()
        .filter(|l| l.is_rare())
        .collect();
    let screening = screen(
        &mut rng.derive2(purpose::SCREEN, step),
        ed,
        &rare,
        settings.dots_per_seed,
    )?;
    let mut r = screening.min_rare_radius;
    let n_probe = (settings.n_is as f64 * settings.probe_share).round() as usize;
    if let Some(found) = probe_safe_ball(
        &mut rng.derive2(purpose::PROBE, step),
        ed,
        r,
        &rare,
        n_probe,
    )? {
        log::warn!("rare-classified point at radius {found:.4} inside the assumed safe ball {r:.4}; shrinking");
        r = found * (1.0 - 1e-9);
    }
    let annulus = annulus_for_radius(r, prev_estimate, dim, settings.fraction)?;
    let labels = ed.distinct_labels();
    let global = global_is_estimate(
        &mut rng.derive2(purpose::GLOBAL_IS, step),
        ed,
        &labels,
        &annulus,
        settings.n_is,
    )?;
    let localized = rare
        .iter()
        .map(|&l| localized_is_estimate(&screening, ed, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimation {
        screening,
        annulus,
        global,
        localized,
    })
}

/// One row of the convergence history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub n_sim: usize,
    #[serde(with = "float_serde")]
    pub psi: f64,
    pub label: String,
    pub p_hat: f64,
    #[serde(with = "float_serde")]
    pub cov: f64,
    #[serde(with = "float_serde")]
    pub r_inner: f64,
    #[serde(with = "float_serde")]
    pub r_outer: f64,
    pub n_rare: usize,
}

/// Rows ordered by `n_sim`; rows sharing `n_sim` must carry distinct labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceHistory {
    rows: Vec<HistoryRow>,
}

impl ConvergenceHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[HistoryRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: HistoryRow) -> Result<()> {
        let mut same = self.rows.iter().rev().take_while(|r| r.n_sim >= row.n_sim);
        if let Some(last) = self.rows.last() {
            if last.n_sim > row.n_sim {
                return Err(state(format!(
                    "history n_sim went backwards: {} after {}",
                    row.n_sim, last.n_sim
                )));
            }
        }
        if same.any(|r| r.label == row.label) {
            return Err(state(format!(
                "duplicate history row for n_sim {} label {}",
                row.n_sim, row.label
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Rows of one label.
    pub fn label_rows<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a HistoryRow> + 'a {
        self.rows.iter().filter(move |r| r.label == label)
    }
}
