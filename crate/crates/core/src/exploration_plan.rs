//! Nested "onion" shells of exploration candidates.
//!
//! Level `i` sits on the sphere whose exterior holds probability `10^-i`
//! and carries `floor(-N ln(p_out / N))` well-spread points. Every level is
//! scrambled independently so consecutive shells do not share directions.

use serde::{Deserialize, Serialize};

use crate::direction_sampling::{spread_directions, DEFAULT_OVERSAMPLE};
use crate::error::{domain, state, Result};
use crate::gaussian_geometry::{radius_for_pout, SpaceDim};
use crate::points::PointSet;
use crate::rng::RngStream;

pub const DEFAULT_MAX_LEVEL: u32 = 15;

/// Number of points needed to cover the shell with exterior content `p_out`.
pub fn layer_count(p_out: f64, dim: SpaceDim) -> Result<usize> {
    if !(p_out > 0.0 && p_out < 1.0) {
        return Err(domain(format!(
            "exterior probability must lie in (0, 1), got {p_out}"
        )));
    }
    let n = dim.as_f64();
    let raw = (-n * (p_out / n).ln()).floor();
    if raw < 1.0 {
        log::warn!("layer count {raw} for p_out={p_out} clamped to 1");
        return Ok(1);
    }
    Ok(raw as usize)
}

/// Exterior probability of level `i`.
pub fn level_p_out(level: u32) -> f64 {
    10f64.powi(-(level as i32))
}

/// One row of the exploration table, without points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub level: u32,
    pub p_out: f64,
    pub count: usize,
    pub radius: f64,
}

pub fn layer_summary(level: u32, dim: SpaceDim) -> Result<LayerSummary> {
    if level == 0 {
        return Err(domain("levels start at 1"));
    }
    let p_out = level_p_out(level);
    Ok(LayerSummary {
        level,
        p_out,
        count: layer_count(p_out, dim)?,
        radius: radius_for_pout(p_out, dim)?,
    })
}

/// Counts and radii for levels `1..=max_level`; no points are generated.
pub fn plan_table(dim: SpaceDim, max_level: u32) -> Result<Vec<LayerSummary>> {
    (1..=max_level).map(|i| layer_summary(i, dim)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationLayer {
    pub level: u32,
    pub p_out: f64,
    pub radius: f64,
    pub points: PointSet,
    pub consumed: Vec<bool>,
}

impl ExplorationLayer {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    fn generate(rng: &RngStream, level: u32, dim: SpaceDim) -> Result<Self> {
        let s = layer_summary(level, dim)?;
        let mut stream = rng.derive(level as u64);
        let points = scaled_directions(&mut stream, s.count, dim, s.radius)?;
        let consumed = vec![false; points.len()];
        Ok(ExplorationLayer {
            level,
            p_out: s.p_out,
            radius: s.radius,
            points,
            consumed,
        })
    }
}

fn scaled_directions(
    rng: &mut RngStream,
    n: usize,
    dim: SpaceDim,
    radius: f64,
) -> Result<PointSet> {
    let dirs = spread_directions(rng, n, dim, DEFAULT_OVERSAMPLE)?;
    let scaled: Vec<f64> = dirs
        .directions
        .as_flat()
        .iter()
        .map(|v| v * radius)
        .collect();
    Ok(PointSet::from_flat(dim.get(), scaled))
}

/// Reference to one exploration point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanSlot {
    pub layer: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPlan {
    pub dim: SpaceDim,
    pub layers: Vec<ExplorationLayer>,
    #[serde(skip, default = "default_stream")]
    stream: RngStream,
    #[serde(skip)]
    enrichments: u64,
}

fn default_stream() -> RngStream {
    RngStream::new(0)
}

/// Pre-generate levels `1..=max_level`.
pub fn build_plan(rng: &RngStream, dim: SpaceDim, max_level: u32) -> Result<ExplorationPlan> {
    if max_level == 0 {
        return Err(domain("max_level must be at least 1"));
    }
    let layers = (1..=max_level)
        .map(|i| ExplorationLayer::generate(rng, i, dim))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExplorationPlan {
        dim,
        layers,
        stream: rng.clone(),
        enrichments: 0,
    })
}

impl ExplorationPlan {
    pub fn max_level(&self) -> u32 {
        self.layers.last().map_or(0, |l| l.level)
    }

    /// Append the next level.
    pub fn add_next_level(&mut self) -> Result<&ExplorationLayer> {
        let next = self.max_level() + 1;
        self.add_level(next)
    }

    /// Append level `level`, which must directly follow the last one.
    pub fn add_level(&mut self, level: u32) -> Result<&ExplorationLayer> {
        if self.layers.iter().any(|l| l.level == level) {
            return Err(domain(format!("level {level} already present")));
        }
        if level != self.max_level() + 1 {
            return Err(domain(format!(
                "levels must stay contiguous: next is {}, got {level}",
                self.max_level() + 1
            )));
        }
        let layer = ExplorationLayer::generate(&self.stream, level, self.dim)?;
        self.layers.push(layer);
        Ok(self.layers.last().expect("just pushed"))
    }

    /// Add `extra` fresh points on the shell of an existing level.
    pub fn add_points(&mut self, level: u32, extra: usize) -> Result<()> {
        if extra == 0 {
            return Ok(());
        }
        let dim = self.dim;
        self.enrichments += 1;
        let mut stream = self
            .stream
            .derive2(crate::rng::purpose::ENRICH, self.enrichments);
        let layer = self
            .layers
            .iter_mut()
            .find(|l| l.level == level)
            .ok_or_else(|| domain(format!("no level {level} in plan")))?;
        let pts = scaled_directions(&mut stream, extra, dim, layer.radius)?;
        layer.points.extend(&pts);
        layer.consumed.extend(std::iter::repeat_n(false, pts.len()));
        Ok(())
    }

    pub fn point(&self, slot: PlanSlot) -> &[f64] {
        self.layers[slot.layer].points.point(slot.index)
    }

    pub fn is_consumed(&self, slot: PlanSlot) -> bool {
        self.layers[slot.layer].consumed[slot.index]
    }

    pub fn consume(&mut self, slot: PlanSlot) -> Result<()> {
        let flag = self
            .layers
            .get_mut(slot.layer)
            .and_then(|l| l.consumed.get_mut(slot.index))
            .ok_or_else(|| domain("exploration slot out of range"))?;
        if *flag {
            return Err(state("exploration point already consumed"));
        }
        *flag = true;
        Ok(())
    }

    /// Unconsumed points in level order.
    pub fn unconsumed(&self) -> impl Iterator<Item = (PlanSlot, &[f64])> + '_ {
        self.layers.iter().enumerate().flat_map(|(li, layer)| {
            layer
                .points
                .iter()
                .enumerate()
                .filter(move |(pi, _)| !layer.consumed[*pi])
                .map(move |(pi, x)| {
                    (
                        PlanSlot {
                            layer: li,
                            index: pi,
                        },
                        x,
                    )
                })
        })
    }

    pub fn unconsumed_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.consumed.iter().filter(|c| !**c).count())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::{dist_sq, norm};

    fn d(n: usize) -> SpaceDim {
        SpaceDim::new(n).unwrap()
    }

    #[test]
    fn count_examples() {
        assert_eq!(layer_count(0.1, d(2)).unwrap(), 5);
        assert_eq!(layer_count(0.1, d(10)).unwrap(), 46);
        assert_eq!(layer_count(1e-15, d(20)).unwrap(), 750);
        assert!(layer_count(1.0, d(2)).is_err());
    }

    #[test]
    fn dim2_first_seven_levels() {
        let plan = build_plan(&RngStream::new(1), d(2), 7).unwrap();
        let counts: Vec<usize> = plan.layers.iter().map(|l| l.count()).collect();
        assert_eq!(counts, vec![5, 10, 15, 19, 24, 29, 33]);
        let r1 = (-2.0 * 0.1f64.ln()).sqrt();
        for x in plan.layers[0].points.iter() {
            assert!((norm(x) - r1).abs() < 1e-9);
        }
        let plan3 = build_plan(&RngStream::new(1), d(3), 1).unwrap();
        assert!((plan3.layers[0].radius - 2.50).abs() < 5e-3);
    }

    #[test]
    fn layers_distinct_and_increasing() {
        let plan = build_plan(&RngStream::new(4), d(3), 6).unwrap();
        for w in plan.layers.windows(2) {
            assert!(w[1].radius > w[0].radius);
        }
        for layer in &plan.layers {
            let p = &layer.points;
            for i in 0..p.len() {
                assert!((norm(p.point(i)) - layer.radius).abs() < 1e-9);
                for j in (i + 1)..p.len() {
                    assert!(dist_sq(p.point(i), p.point(j)) > 0.0);
                }
            }
        }
    }

    #[test]
    fn enrichment() {
        let mut plan = build_plan(&RngStream::new(2), d(2), 7).unwrap();
        plan.consume(PlanSlot { layer: 0, index: 1 }).unwrap();
        let layer = plan.add_next_level().unwrap();
        assert_eq!(layer.count(), 38);
        assert!((layer.radius - 6.07).abs() < 5e-3);
        assert!(plan.is_consumed(PlanSlot { layer: 0, index: 1 }));
        assert!(plan.add_level(3).is_err());
        let before = plan.clone();
        plan.add_points(1, 0).unwrap();
        assert_eq!(plan, before);
        plan.add_points(1, 5).unwrap();
        assert_eq!(plan.layers[0].count(), 10);
        for x in plan.layers[0].points.iter() {
            assert!((norm(x) - plan.layers[0].radius).abs() < 1e-9);
        }
    }

    #[test]
    fn consumption_is_single_use() {
        let mut plan = build_plan(&RngStream::new(3), d(2), 2).unwrap();
        let total = plan.unconsumed_count();
        let slot = plan.unconsumed().next().unwrap().0;
        plan.consume(slot).unwrap();
        assert!(plan.consume(slot).is_err());
        assert_eq!(plan.unconsumed_count(), total - 1);
        assert!(plan.unconsumed().all(|(s, _)| s != slot));
    }

    #[test]
    fn reproducible() {
        let a = build_plan(&RngStream::new(10), d(4), 5).unwrap();
        let b = build_plan(&RngStream::new(10), d(4), 5).unwrap();
        assert_eq!(a.layers, b.layers);
    }
}
