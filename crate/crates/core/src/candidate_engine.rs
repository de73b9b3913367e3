//! Candidate pool, the psi criterion and selection of the next point.
//!
//! The pool holds the unconsumed exploration points and, once a rare event
//! is known, Gaussian "exploitation" dots around every rare design point
//! that sit between two differently labelled neighbours. Each candidate is
//! scored by the probability it would carve out of the unexplored space,
//! and the best one is evaluated next.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::{BoundaryRule, EventLabel, ExperimentalDesign};
use crate::error::{config, state, Result};
use crate::exploration_plan::{ExplorationPlan, PlanSlot};
use crate::gaussian_geometry::{point_log_density_sq, SpaceDim};
use crate::points::{norm_sq, PointSet};
use crate::rng::RngStream;

pub const DEFAULT_DOTS_PER_SEED: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploitationConfig {
    pub dots_per_seed: usize,
    pub sigma: f64,
    pub rule: BoundaryRule,
}

/// Spread of the clouds around rare points: `sqrt(N - 1)`, or 1 in one dimension.
pub fn default_sigma(dim: SpaceDim) -> f64 {
    if dim.get() >= 2 {
        (dim.as_f64() - 1.0).sqrt()
    } else {
        1.0
    }
}

impl ExploitationConfig {
    pub fn new(dim: SpaceDim) -> Self {
        ExploitationConfig {
            dots_per_seed: DEFAULT_DOTS_PER_SEED,
            sigma: default_sigma(dim),
            rule: BoundaryRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dots_per_seed == 0 {
            return Err(config("dots_per_seed must be at least 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(config("exploitation sigma must be positive"));
        }
        Ok(())
    }
}

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Exploration { level: u32, slot: PlanSlot },
    Exploitation { seed: usize },
}

impl Origin {
    pub fn is_exploitation(&self) -> bool {
        matches!(self, Origin::Exploitation { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub origin: Origin,
    pub psi: f64,
}

/// Isotropic Gaussian dots around every design point with a label in
/// `rare_labels`, concatenated in design order.
pub fn generate_exploitation_dots(
    rng: &mut RngStream,
    ed: &ExperimentalDesign,
    cfg: &ExploitationConfig,
    rare_labels: &[EventLabel],
) -> (PointSet, Vec<usize>) {
    let dim = ed.dim().get();
    let seeds: Vec<usize> = (0..ed.len())
        .filter(|&i| rare_labels.contains(&ed.labels()[i]))
        .collect();
    let mut dots = PointSet::with_capacity(dim, seeds.len() * cfg.dots_per_seed);
    let mut owners = Vec::with_capacity(seeds.len() * cfg.dots_per_seed);
    let mut x = vec![0.0; dim];
    for &s in &seeds {
        let centre = ed.point(s);
        for _ in 0..cfg.dots_per_seed {
            for (xi, ci) in x.iter_mut().zip(centre) {
                let z: f64 = StandardNormal.sample(rng);
                *xi = ci + cfg.sigma * z;
            }
            dots.push(&x);
            owners.push(s);
        }
    }
    (dots, owners)
}

/// Which dots have two nearest design neighbours with different labels.
pub fn censor_mask(ed: &ExperimentalDesign, dots: &PointSet, rule: BoundaryRule) -> Vec<bool> {
    let tree = ed.index();
    let labels = ed.labels();
    dots.iter()
        .map(|x| match tree.nearest_two(x) {
            Some([a, b]) => rule.differs(labels[a.1], labels[b.1]),
            None => false,
        })
        .collect()
}

/// Dots that straddle a boundary of the current surrogate, order preserved.
pub fn censor_candidates(ed: &ExperimentalDesign, dots: &PointSet, rule: BoundaryRule) -> PointSet {
    dots.retain_by(&censor_mask(ed, dots, rule))
}

/// `psi = sqrt(f(c) f(s)) * l^N`, with `s` the nearest design point at
/// distance `l`. Zero for candidates on top of a design point.
pub fn psi_value(c: &[f64], s: &[f64], l_sq: f64, dim: SpaceDim) -> f64 {
    if l_sq <= 0.0 {
        return 0.0;
    }
    let ln_fc = point_log_density_sq(norm_sq(c), dim);
    let ln_fs = point_log_density_sq(norm_sq(s), dim);
    (0.5 * (ln_fc + ln_fs) + 0.5 * dim.as_f64() * l_sq.ln()).exp()
}

pub fn score_psi(ed: &ExperimentalDesign, candidates: &PointSet) -> Result<Vec<f64>> {
    if ed.is_empty() {
        return Err(state("scoring needs a nonempty design"));
    }
    let dim = ed.dim();
    Ok(candidates
        .iter()
        .map(|c| {
            let (l_sq, i) = ed.index().nearest(c).expect("nonempty design");
            psi_value(c, ed.point(i), l_sq, dim)
        })
        .collect())
}

/// The scored pool: exploration points first, then censored dots.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub points: PointSet,
    pub origins: Vec<Origin>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn exploration_count(&self) -> usize {
        self.origins.iter().filter(|o| !o.is_exploitation()).count()
    }
}

/// Unconsumed exploration points plus fresh censored exploitation dots.
pub fn assemble_pool(
    plan: &ExplorationPlan,
    ed: &ExperimentalDesign,
    rng: &mut RngStream,
    cfg: &ExploitationConfig,
) -> CandidatePool {
    let dim = ed.dim().get();
    let mut points = PointSet::new(dim);
    let mut origins = Vec::new();
    for (slot, x) in plan.unconsumed() {
        points.push(x);
        origins.push(Origin::Exploration {
            level: plan.layers[slot.layer].level,
            slot,
        });
    }
    let rare: Vec<EventLabel> = ed
        .distinct_labels()
        .into_iter()
        .filter(|l| l.is_rare())
        .collect();
    if !rare.is_empty() && ed.len() >= 2 {
        let (dots, owners) = generate_exploitation_dots(rng, ed, cfg, &rare);
        let keep = censor_mask(ed, &dots, cfg.rule);
        for (i, x) in dots.iter().enumerate() {
            if keep[i] {
                points.push(x);
                origins.push(Origin::Exploitation { seed: owners[i] });
            }
        }
    }
    CandidatePool { points, origins }
}

/// Largest psi; ties prefer exploitation, then the lowest index.
pub fn select_best(pool: &CandidatePool, psi: &[f64]) -> Result<(usize, Candidate)> {
    if pool.is_empty() || psi.len() != pool.len() {
        return Err(state("cannot select from an empty candidate pool"));
    }
    let mut best = 0;
    for i in 1..psi.len() {
        let better = psi[i] > psi[best]
            || (psi[i] == psi[best]
                && pool.origins[i].is_exploitation()
                && !pool.origins[best].is_exploitation());
        if better {
            best = i;
        }
    }
    Ok((
        best,
        Candidate {
            x: pool.points.point(best).to_vec(),
            origin: pool.origins[best],
            psi: psi[best],
        },
    ))
}

/// Per-step trace of the selection, for debug output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDebug {
    pub n_sim: usize,
    pub exploration: usize,
    pub exploitation: usize,
    pub chosen: Candidate,
}
