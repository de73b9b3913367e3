//! The experimental design and its nearest-neighbour surrogate.
//!
//! Every point of the space takes the label of its nearest evaluated point,
//! which partitions the space into Voronoi cells without ever fitting a
//! model to numeric outputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{config, state, Error, Result};
use crate::gaussian_geometry::SpaceDim;
use crate::points::PointSet;
use crate::spatial::KdTree;

/// A categorical outcome, identified by a small integer code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLabel(pub u16);

impl EventLabel {
    pub const SAFE: EventLabel = EventLabel(0);
    pub const FAILURE: EventLabel = EventLabel(1);
    pub const NO_RESULT: EventLabel = EventLabel(2);

    pub fn code(self) -> u16 {
        self.0
    }

    /// Everything except the safe label counts as a rare event.
    pub fn is_rare(self) -> bool {
        self != EventLabel::SAFE
    }

    pub fn default_name(self) -> String {
        match self.0 {
            0 => "safe".into(),
            1 => "failure".into(),
            2 => "no_result".into(),
            c => format!("event_{c}"),
        }
    }
}

/// Names attached to label codes; code 0 is always the safe label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelNames(BTreeMap<u16, String>);

impl Default for LabelNames {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        for l in [EventLabel::SAFE, EventLabel::FAILURE, EventLabel::NO_RESULT] {
            m.insert(l.0, l.default_name());
        }
        LabelNames(m)
    }
}

impl LabelNames {
    pub fn name(&self, label: EventLabel) -> String {
        self.0
            .get(&label.0)
            .cloned()
            .unwrap_or_else(|| label.default_name())
    }

    /// Resolve a token as either a numeric code or a registered name.
    pub fn parse(&self, token: &str) -> Option<EventLabel> {
        if let Ok(code) = token.parse::<u16>() {
            return Some(EventLabel(code));
        }
        self.0
            .iter()
            .find(|(_, n)| n.as_str() == token)
            .map(|(c, _)| EventLabel(*c))
    }

    /// Registered codes in ascending order.
    pub fn codes(&self) -> impl Iterator<Item = u16> + '_ {
        self.0.keys().copied()
    }

    /// Register a name for a code; names and codes must stay unique.
    pub fn register(&mut self, label: EventLabel, name: &str) -> Result<()> {
        if label == EventLabel::SAFE && name != "safe" {
            return Err(config("code 0 is reserved for the safe label"));
        }
        if let Some((c, _)) = self
            .0
            .iter()
            .find(|(c, n)| n.as_str() == name && **c != label.0)
        {
            return Err(config(format!(
                "label name {name} already used by code {c}"
            )));
        }
        self.0.insert(label.0, name.to_string());
        Ok(())
    }
}

/// Which pairs of nearest-neighbour labels count as "different".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// Any two distinct labels.
    #[default]
    AnyDifference,
    /// Only a rare label next to the safe label.
    RareVsSafe,
}

impl BoundaryRule {
    pub fn differs(self, a: EventLabel, b: EventLabel) -> bool {
        match self {
            BoundaryRule::AnyDifference => a != b,
            BoundaryRule::RareVsSafe => a.is_rare() != b.is_rare(),
        }
    }
}

/// Minimum separation between design points.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// The ordered set of evaluated points with their labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "DesignRecord", try_from = "DesignRecord")]
pub struct ExperimentalDesign {
    dim: SpaceDim,
    points: PointSet,
    labels: Vec<EventLabel>,
    raw: Vec<Option<f64>>,
    names: LabelNames,
    index: KdTree,
}

/// Serialized form of the design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignRecord {
    pub dim: usize,
    pub label_names: LabelNames,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<EventLabel>,
    pub raw: Vec<Option<f64>>,
}

impl From<ExperimentalDesign> for DesignRecord {
    fn from(ed: ExperimentalDesign) -> Self {
        DesignRecord {
            dim: ed.dim.get(),
            label_names: ed.names,
            points: ed.points.to_rows(),
            labels: ed.labels,
            raw: ed.raw,
        }
    }
}

impl TryFrom<DesignRecord> for ExperimentalDesign {
    type Error = Error;
    fn try_from(rec: DesignRecord) -> Result<Self> {
        if rec.points.len() != rec.labels.len() || rec.points.len() != rec.raw.len() {
            return Err(config(
                "design points, labels and raw outputs differ in length",
            ));
        }
        let mut ed = ExperimentalDesign::new(SpaceDim::new(rec.dim)?);
        ed.names = rec.label_names;
        for ((x, label), raw) in rec.points.iter().zip(rec.labels).zip(rec.raw) {
            if x.len() != rec.dim {
                return Err(config("design point has the wrong dimension"));
            }
            ed.add_point(x, label, raw)?;
        }
        Ok(ed)
    }
}

impl ExperimentalDesign {
    pub fn new(dim: SpaceDim) -> Self {
        let points = PointSet::new(dim.get());
        let index = KdTree::new(&points);
        ExperimentalDesign {
            dim,
            points,
            labels: Vec::new(),
            raw: Vec::new(),
            names: LabelNames::default(),
            index,
        }
    }

    pub fn dim(&self) -> SpaceDim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.point(i)
    }

    pub fn labels(&self) -> &[EventLabel] {
        &self.labels
    }

    pub fn raw(&self) -> &[Option<f64>] {
        &self.raw
    }

    pub fn names(&self) -> &LabelNames {
        &self.names
    }

    pub fn names_mut(&mut self) -> &mut LabelNames {
        &mut self.names
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    /// Labels present in the design, in code order.
    pub fn distinct_labels(&self) -> Vec<EventLabel> {
        let mut v = self.labels.clone();
        v.sort();
        v.dedup();
        v
    }

    /// Indices of points carrying a rare label.
    pub fn rare_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i].is_rare())
            .collect()
    }

    pub fn count_label(&self, label: EventLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Append an evaluated point and refresh the spatial index.
    pub fn add_point(&mut self, x: &[f64], label: EventLabel, raw: Option<f64>) -> Result<()> {
        if x.len() != self.dim.get() {
            return Err(config(format!(
                "point has {} coordinates, design has dimension {}",
                x.len(),
                self.dim.get()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(crate::error::domain("design points must be finite"));
        }
        if let Some((d2, existing)) = self.index.nearest(x) {
            if d2.sqrt() <= DUPLICATE_TOLERANCE {
                return Err(Error::DuplicatePoint {
                    index: self.len(),
                    existing,
                });
            }
        }
        self.points.push(x);
        self.labels.push(label);
        self.raw.push(raw);
        self.index = KdTree::new(&self.points);
        Ok(())
    }

    /// Label of the nearest design point; ties go to the lowest index.
    pub fn classify(&self, x: &[f64]) -> Result<EventLabel> {
        self.index
            .nearest(x)
            .map(|(_, i)| self.labels[i])
            .ok_or_else(|| state("cannot classify with an empty design"))
    }

    /// Labels of the two nearest design points, nearest first.
    pub fn two_nearest_labels(&self, x: &[f64]) -> Result<(EventLabel, EventLabel)> {
        self.index
            .nearest_two(x)
            .map(|[a, b]| (self.labels[a.1], self.labels[b.1]))
            .ok_or_else(|| state("two-neighbour query needs at least two design points"))
    }

    pub fn classify_batch(&self, xs: &PointSet) -> Result<Vec<EventLabel>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        if self.is_empty() {
            return Err(state("cannot classify with an empty design"));
        }
        Ok(xs
            .iter()
            .map(|x| self.labels[self.index.nearest(x).expect("nonempty").1])
            .collect())
    }
}
