//! The sequential loop: select, evaluate, extend, estimate.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::benchmarks::LimitState;
use crate::candidate_engine::{
    assemble_pool, default_sigma, score_psi, select_best, Candidate, ExploitationConfig, Origin,
    StepDebug, DEFAULT_DOTS_PER_SEED,
};
use crate::classifier::{BoundaryRule, EventLabel, ExperimentalDesign};
use crate::error::{config, state, Error, Result};
use crate::estimator::{
    estimate, ConvergenceHistory, EstimateRecord, Estimation, EstimationSettings, HistoryRow,
    DEFAULT_N_IS, DEFAULT_N_IS_FINAL,
};
use crate::exploration_plan::{build_plan, ExplorationPlan, DEFAULT_MAX_LEVEL};
use crate::gaussian_geometry::{SpaceDim, DEFAULT_FRACTION};
use crate::rng::{purpose, RngStream};
use crate::sensitivity::{sensitivity_indices, SensitivityResult, DEFAULT_K};

type DebugHook = Box<dyn FnMut(&StepDebug)>;

/// Enrichment attempts per step before giving up on an empty pool.
const MAX_ENRICH_PER_STEP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub budget: usize,
    pub seed: u64,
    /// Ring nodes for estimates during the run.
    pub n_is: usize,
    /// Ring nodes for the closing estimate.
    pub n_is_final: usize,
    pub estimate_every: usize,
    pub stop_psi_ratio: f64,
    pub dots_per_seed: usize,
    pub k_neighbors: usize,
    pub max_level: u32,
    pub fraction: f64,
    pub boundary_rule: BoundaryRule,
    /// Consecutive evaluator errors tolerated before the run aborts.
    pub max_evaluator_failures: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget: 200,
            seed: 1,
            n_is: DEFAULT_N_IS,
            n_is_final: DEFAULT_N_IS_FINAL,
            estimate_every: 5,
            stop_psi_ratio: 0.01,
            dots_per_seed: DEFAULT_DOTS_PER_SEED,
            k_neighbors: DEFAULT_K,
            max_level: DEFAULT_MAX_LEVEL,
            fraction: DEFAULT_FRACTION,
            boundary_rule: BoundaryRule::default(),
            max_evaluator_failures: 3,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.budget, "budget"),
            (self.n_is, "n_is"),
            (self.n_is_final, "n_is_final"),
            (self.estimate_every, "estimate_every"),
            (self.dots_per_seed, "dots_per_seed"),
            (self.k_neighbors, "k_neighbors"),
            (self.max_level as usize, "max_level"),
            (self.max_evaluator_failures, "max_evaluator_failures"),
        ];
        for (v, name) in positive {
            if v == 0 {
                return Err(config(format!("{name} must be at least 1")));
            }
        }
        if !(self.stop_psi_ratio > 0.0) {
            return Err(config("stop_psi_ratio must be positive"));
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(config("fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    fn estimation(&self, n_is: usize) -> EstimationSettings {
        EstimationSettings {
            n_is,
            dots_per_seed: self.dots_per_seed,
            fraction: self.fraction,
            probe_share: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Budget,
    PsiStop,
    User,
}

/// Final state of a run.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub estimates: Vec<EstimateRecord>,
    pub localized: Vec<EstimateRecord>,
    pub sensitivities: Vec<SensitivityResult>,
    pub history: ConvergenceHistory,
    pub design: ExperimentalDesign,
    pub termination: Termination,
    pub selections: Vec<Candidate>,
}

impl AnalysisResult {
    /// Final estimate for `label`, if one was made.
    pub fn estimate_for(&self, label: EventLabel) -> Option<&EstimateRecord> {
        self.estimates.iter().find(|r| r.label == label)
    }

    /// Final failure probability, 0 if nothing rare was found.
    pub fn p_failure(&self) -> f64 {
        self.estimate_for(EventLabel::FAILURE)
            .map_or(0.0, |r| r.p_hat)
    }
}

/// A run in progress. Drive it with [`Driver::step`] or [`Driver::run`].
pub struct Driver<E: LimitState> {
    cfg: RunConfig,
    evaluator: E,
    rng: RngStream,
    ed: ExperimentalDesign,
    plan: ExplorationPlan,
    history: ConvergenceHistory,
    latest: Option<Estimation>,
    selections: Vec<Candidate>,
    step_count: u64,
    failures_in_row: usize,
    stop: Option<Arc<AtomicBool>>,
    debug: Option<DebugHook>,
}

impl<E: LimitState> Driver<E> {
    /// Evaluate the origin and build the exploration plan.
    pub fn new(cfg: RunConfig, evaluator: E) -> Result<Self> {
        cfg.validate()?;
        let dim = evaluator.dim();
        let rng = RngStream::new(cfg.seed);
        let plan = build_plan(&rng.derive(purpose::PLAN), dim, cfg.max_level)?;
        let mut ed = ExperimentalDesign::new(dim);
        *ed.names_mut() = evaluator.label_names();
        let mut d = Driver {
            cfg,
            evaluator,
            rng,
            ed,
            plan,
            history: ConvergenceHistory::new(),
            latest: None,
            selections: Vec::new(),
            step_count: 0,
            failures_in_row: 0,
            stop: None,
            debug: None,
        };
        let origin = vec![0.0; dim.get()];
        let label = d.evaluate_point(&origin)?;
        d.after_evaluation(label, f64::NAN)?;
        Ok(d)
    }

    /// Flag that ends the run at the next step boundary when set.
    pub fn with_stop_flag(mut self, flag: Arc<AtomicBool>) -> Self {
        self.stop = Some(flag);
        self
    }

    /// Callback receiving a trace of every selection.
    pub fn with_debug(mut self, f: impl FnMut(&StepDebug) + 'static) -> Self {
        self.debug = Some(Box::new(f));
        self
    }

    pub fn design(&self) -> &ExperimentalDesign {
        &self.ed
    }

    pub fn plan(&self) -> &ExplorationPlan {
        &self.plan
    }

    pub fn history(&self) -> &ConvergenceHistory {
        &self.history
    }

    pub fn latest(&self) -> Option<&Estimation> {
        self.latest.as_ref()
    }

    pub fn selections(&self) -> &[Candidate] {
        &self.selections
    }

    pub fn dim(&self) -> SpaceDim {
        self.ed.dim()
    }

    fn evaluate_point(&mut self, x: &[f64]) -> Result<EventLabel> {
        match self.evaluator.evaluate(x) {
            Ok(out) => {
                self.failures_in_row = 0;
                self.sync_names();
                self.ed.add_point(x, out.label, out.raw)?;
                Ok(out.label)
            }
            Err(Error::Evaluator(msg)) => {
                self.failures_in_row += 1;
                if self.failures_in_row >= self.cfg.max_evaluator_failures {
                    return Err(Error::Evaluator(format!(
                        "{} consecutive evaluator failures, last: {msg}",
                        self.failures_in_row
                    )));
                }
                log::warn!("evaluation failed ({msg}); recording no_result");
                self.ed.add_point(x, EventLabel::NO_RESULT, None)?;
                Ok(EventLabel::NO_RESULT)
            }
            Err(e) => Err(e),
        }
    }

    fn sync_names(&mut self) {
        let names = self.evaluator.label_names();
        for code in names.codes() {
            let label = EventLabel(code);
            if self.ed.names().name(label) != names.name(label) {
                // Names only ever grow, so registration cannot clash.
                let _ = self.ed.names_mut().register(label, &names.name(label));
            }
        }
    }

    fn rare_total(&self) -> Option<f64> {
        self.latest.as_ref().map(|e| e.rare_total())
    }

    fn refresh_estimate(&mut self, n_is: usize) -> Result<()> {
        let prev = self.rare_total().filter(|p| *p > 0.0);
        let est = estimate(
            &self.rng,
            self.step_count,
            &self.ed,
            prev,
            &self.cfg.estimation(n_is),
        )?;
        self.latest = Some(est);
        Ok(())
    }

    fn after_evaluation(&mut self, label: EventLabel, psi: f64) -> Result<()> {
        let has_rare = self.ed.labels().iter().any(|l| l.is_rare());
        let due = self.ed.len().is_multiple_of(self.cfg.estimate_every) || label.is_rare();
        if has_rare && due {
            self.refresh_estimate(self.cfg.n_is)?;
        }
        self.record(psi)
    }

    fn tracked_labels(&self) -> Vec<EventLabel> {
        let mut labels: Vec<EventLabel> = self
            .ed
            .distinct_labels()
            .into_iter()
            .filter(|l| l.is_rare())
            .collect();
        if !labels.contains(&EventLabel::FAILURE) {
            labels.push(EventLabel::FAILURE);
            labels.sort();
        }
        labels
    }

    fn record(&mut self, psi: f64) -> Result<()> {
        let n_sim = self.ed.len();
        for label in self.tracked_labels() {
            let rec = self
                .latest
                .as_ref()
                .and_then(|e| e.global.records.iter().find(|r| r.label == label));
            let ann = self.latest.as_ref().map(|e| e.annulus);
            self.history.push(HistoryRow {
                n_sim,
                psi,
                label: self.ed.names().name(label),
                p_hat: rec.map_or(0.0, |r| r.p_hat),
                cov: rec.map_or(f64::INFINITY, |r| r.cov),
                r_inner: ann.map_or(f64::NAN, |a| a.inner),
                r_outer: ann.map_or(f64::NAN, |a| a.outer),
                n_rare: self.ed.count_label(label),
            })?;
        }
        Ok(())
    }

    /// Best candidate of the current pool, enriching the plan when needed.
    fn choose(&mut self) -> Result<(Candidate, usize, usize)> {
        let dim = self.dim();
        let cfg = ExploitationConfig {
            dots_per_seed: self.cfg.dots_per_seed,
            sigma: default_sigma(dim),
            rule: self.cfg.boundary_rule,
        };
        let mut rng = self.rng.derive2(purpose::EXPLOIT, self.step_count);
        for _ in 0..=MAX_ENRICH_PER_STEP {
            let pool = assemble_pool(&self.plan, &self.ed, &mut rng, &cfg);
            if !pool.is_empty() {
                let psi = score_psi(&self.ed, &pool.points)?;
                let (_, best) = select_best(&pool, &psi)?;
                if best.psi > 0.0 {
                    let n_explore = pool.exploration_count();
                    return Ok((best, n_explore, pool.len() - n_explore));
                }
            }
            let level = self.plan.add_next_level()?.level;
            log::warn!("candidate pool exhausted; added exploration level {level}");
        }
        Err(state(
            "no candidate with positive psi after repeated enrichment",
        ))
    }

    /// One extension step. Returns the termination reason when the run
    /// should end instead.
    pub fn step(&mut self) -> Result<Option<Termination>> {
        if self
            .stop
            .as_ref()
            .is_some_and(|f| f.load(Ordering::Relaxed))
        {
            return Ok(Some(Termination::User));
        }
        if self.ed.len() >= self.cfg.budget {
            return Ok(Some(Termination::Budget));
        }
        self.step_count += 1;
        let (best, n_explore, n_exploit) = self.choose()?;
        if let Some(p) = self.rare_total() {
            if p > 0.0 && best.psi < self.cfg.stop_psi_ratio * p {
                return Ok(Some(Termination::PsiStop));
            }
        }
        if let Origin::Exploration { slot, .. } = best.origin {
            self.plan.consume(slot)?;
        }
        let label = self.evaluate_point(&best.x)?;
        if let Some(f) = self.debug.as_mut() {
            f(&StepDebug {
                n_sim: self.ed.len(),
                exploration: n_explore,
                exploitation: n_exploit,
                chosen: best.clone(),
            });
        }
        let psi = best.psi;
        self.selections.push(best);
        self.after_evaluation(label, psi)?;
        Ok(None)
    }

    /// Loop until a stopping rule fires, then make the closing estimate.
    pub fn run(mut self) -> Result<AnalysisResult> {
        let termination = loop {
            if let Some(t) = self.step()? {
                break t;
            }
        };
        self.finish(termination)
    }

    /// Closing estimate with `n_is_final` nodes plus sensitivities.
    pub fn finish(mut self, termination: Termination) -> Result<AnalysisResult> {
        let mut estimates = Vec::new();
        let mut localized = Vec::new();
        let mut sensitivities = Vec::new();
        if self.ed.labels().iter().any(|l| l.is_rare()) {
            self.step_count += 1;
            self.refresh_estimate(self.cfg.n_is_final)?;
            let est = self.latest.as_ref().expect("just estimated");
            estimates = est.global.records.clone();
            localized = est.localized.clone();
            let radius = 3.0 * default_sigma(self.dim());
            for label in est
                .global
                .records
                .iter()
                .map(|r| r.label)
                .filter(|l| l.is_rare())
            {
                match sensitivity_indices(
                    &est.global.nodes,
                    &est.global.node_labels,
                    None,
                    label,
                    self.cfg.k_neighbors,
                    Some(radius),
                ) {
                    Ok(s) => sensitivities.push(s),
                    Err(e) => log::warn!("no sensitivities for label {}: {e}", label.code()),
                }
            }
        }
        Ok(AnalysisResult {
            estimates,
            localized,
            sensitivities,
            history: self.history,
            design: self.ed,
            termination,
            selections: self.selections,
        })
    }
}

/// Convenience wrapper: build a driver and run it to the end.
pub fn run<E: LimitState>(cfg: RunConfig, evaluator: E) -> Result<AnalysisResult> {
    Driver::new(cfg, evaluator)?.run()
}

/// Estimate again from a saved design, without further evaluations.
pub fn estimate_only(
    ed: &ExperimentalDesign,
    seed: u64,
    n_is: usize,
    k: usize,
) -> Result<(Estimation, Vec<SensitivityResult>)> {
    if !ed.labels().iter().any(|l| l.is_rare()) {
        return Err(state("the design holds no rare event to estimate"));
    }
    let settings = EstimationSettings {
        n_is,
        ..EstimationSettings::default()
    };
    let rng = RngStream::new(seed);
    // Two passes: the first fixes the outer radius from its own estimate.
    let first = estimate(&rng, 0, ed, None, &settings)?;
    let prev = Some(first.rare_total()).filter(|p| *p > 0.0);
    let est = estimate(&rng, 1, ed, prev, &settings)?;
    let radius = 3.0 * default_sigma(ed.dim());
    let sens = est
        .global
        .records
        .iter()
        .filter(|r| r.label.is_rare() && r.n_is_hits > 0)
        .filter_map(|r| {
            sensitivity_indices(
                &est.global.nodes,
                &est.global.node_labels,
                None,
                r.label,
                k,
                Some(radius),
            )
            .ok()
        })
        .collect();
    Ok((est, sens))
}
