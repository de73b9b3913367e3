//! Importance of each input variable for a rare event.
//!
//! For every node carrying the event, the vector towards the centroid of
//! its nearest safe nodes stands in for the gradient of the performance
//! function. Its squared direction cosines split the node's probability
//! among the coordinates, and averaging over the nodes gives the shares.

use serde::{Deserialize, Serialize};

use crate::classifier::EventLabel;
use crate::error::{domain, state, Result};
use crate::points::{norm_sq, PointSet};
use crate::spatial::KdTree;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub label: EventLabel,
    /// Squared importance measures, summing to one.
    pub s: Vec<f64>,
    pub n_used: usize,
    pub n_skipped: usize,
    pub k: usize,
}

/// Shares of each rare node, or `None` for nodes that were skipped because
/// the centroid coincides with the node or no safe node lies within
/// `max_distance`.
pub fn direction_shares(
    rare_nodes: &PointSet,
    safe_nodes: &PointSet,
    k: usize,
    max_distance: Option<f64>,
) -> Result<Vec<Option<Vec<f64>>>> {
    if k == 0 || safe_nodes.len() < k {
        return Err(domain(format!(
            "need at least K={k} safe nodes, have {}",
            safe_nodes.len()
        )));
    }
    let dim = rare_nodes.dim();
    let tree = KdTree::new(safe_nodes);
    let limit_sq = max_distance.map_or(f64::INFINITY, |d| d * d);
    let mut nn = Vec::with_capacity(k);
    let mut centroid = vec![0.0; dim];
    let mut skipped_zero = 0usize;
    let out = rare_nodes
        .iter()
        .map(|x| {
            tree.k_nearest(x, k, &mut nn);
            if nn[0].0 > limit_sq {
                return None;
            }
            centroid.iter_mut().for_each(|c| *c = 0.0);
            for &(_, j) in &nn {
                for (c, v) in centroid.iter_mut().zip(safe_nodes.point(j)) {
                    *c += v;
                }
            }
            let g: Vec<f64> = centroid
                .iter()
                .zip(x)
                .map(|(c, xi)| c / k as f64 - xi)
                .collect();
            let len_sq = norm_sq(&g);
            if !(len_sq > 0.0) {
                skipped_zero += 1;
                return None;
            }
            Some(g.iter().map(|v| v * v / len_sq).collect())
        })
        .collect();
    if skipped_zero > 0 {
        log::warn!("{skipped_zero} nodes skipped: safe centroid coincides with the node");
    }
    Ok(out)
}

/// Importance measures for `label` from classified nodes. Without weights
/// the nodes are taken as drawn from the input density; with weights each
/// node's shares are scaled by its likelihood ratio. Either way the result
/// is normalised over the nodes actually used.
pub fn sensitivity_indices(
    nodes: &PointSet,
    labels: &[EventLabel],
    weights: Option<&[f64]>,
    label: EventLabel,
    k: usize,
    max_distance: Option<f64>,
) -> Result<SensitivityResult> {
    let dim = nodes.dim();
    let mut rare = PointSet::new(dim);
    let mut rare_w = Vec::new();
    let mut safe = PointSet::new(dim);
    for (i, (x, l)) in nodes.iter().zip(labels).enumerate() {
        if *l == label {
            rare.push(x);
            rare_w.push(weights.map_or(1.0, |w| w[i]));
        } else if !l.is_rare() {
            safe.push(x);
        }
    }
    if rare.is_empty() {
        return Err(state(format!("no nodes carry label {}", label.code())));
    }
    let shares = direction_shares(&rare, &safe, k, max_distance)?;
    let mut s = vec![0.0; dim];
    let mut total = 0.0;
    let mut n_used = 0;
    for (share, w) in shares.iter().zip(&rare_w) {
        if let Some(a) = share {
            for (sv, av) in s.iter_mut().zip(a) {
                *sv += w * av;
            }
            total += w;
            n_used += 1;
        }
    }
    if n_used == 0 {
        return Err(state("every labelled node was skipped"));
    }
    s.iter_mut().for_each(|v| *v /= total);
    Ok(SensitivityResult {
        label,
        s,
        n_used,
        n_skipped: rare.len() - n_used,
        k,
    })
}

/// Classical squared direction cosines of a design point.
pub fn form_alpha_from_design_point(x_star: &[f64]) -> Result<Vec<f64>> {
    let b2 = norm_sq(x_star);
    if !(b2 > 0.0) {
        return Err(domain("design point must be away from the origin"));
    }
    Ok(x_star.iter().map(|v| v * v / b2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shares_simple_geometry() {
        let rare = PointSet::from_rows(2, &[vec![0.0, 0.0]]);
        let left = PointSet::from_rows(2, &[vec![-1.0, 0.1], vec![-1.0, -0.1], vec![-2.0, 0.0]]);
        let sh = direction_shares(&rare, &left, 2, None).unwrap();
        assert_eq!(sh[0].as_deref(), Some(&[1.0, 0.0][..]));
        let diag = PointSet::from_rows(2, &[vec![1.0, 1.0]]);
        let sh = direction_shares(&rare, &diag, 1, None).unwrap();
        assert_eq!(sh[0].as_deref(), Some(&[0.5, 0.5][..]));
        assert!(direction_shares(&rare, &diag, 2, None).is_err());
        assert!(direction_shares(&rare, &diag, 1, Some(1.0)).unwrap()[0].is_none());
    }

    #[test]
    fn zero_vector_is_skipped() {
        let rare = PointSet::from_rows(1, &[vec![0.0]]);
        let safe = PointSet::from_rows(1, &[vec![-1.0], vec![1.0]]);
        assert!(direction_shares(&rare, &safe, 2, None).unwrap()[0].is_none());
    }

    #[test]
    fn indices_normalised() {
        let nodes = PointSet::from_rows(
            2,
            &[
                vec![3.0, 0.0],
                vec![0.0, 3.0],
                vec![2.0, 0.0],
                vec![0.0, 2.0],
                vec![2.5, 2.5],
            ],
        );
        let f = EventLabel::FAILURE;
        let s = EventLabel::SAFE;
        let labels = [f, f, s, s, s];
        let r = sensitivity_indices(&nodes, &labels, None, f, 1, None).unwrap();
        assert!((r.s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.n_used, 2);
        assert!(sensitivity_indices(&nodes, &labels, None, EventLabel(5), 1, None).is_err());
        let w = [3.0, 1.0, 1.0, 1.0, 1.0];
        let rw = sensitivity_indices(&nodes, &labels, Some(&w), f, 1, None).unwrap();
        assert!((rw.s[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn form_alphas() {
        assert_eq!(
            form_alpha_from_design_point(&[0.0, 3.0]).unwrap(),
            vec![0.0, 1.0]
        );
        let a = form_alpha_from_design_point(&[2.0, 5.0]).unwrap();
        assert!((a[0] - 4.0 / 29.0).abs() < 1e-15 && (a[0] - 0.1379).abs() < 1e-4);
        assert!((a[1] - 0.862).abs() < 1e-3);
        assert_eq!(
            form_alpha_from_design_point(&[1.0, 1.0]).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(form_alpha_from_design_point(&[0.0, 0.0]).is_err());
    }
}
