//! Adequate-zone selection from canvas-space disparity statistics.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoneConfig {
    /// Class width is `canvas_width / range_divisor`.
    pub range_divisor: u32,
    /// Maximum jump between neighbouring class means inside one cluster.
    pub v: f64,
    /// Weight of the deviation from the global mean in the cluster score.
    pub lambda: f64,
    pub epsilon: f64,
    /// Keep only pairs whose source lies right of its target (`x_S > x_T`).
    pub frontal_filter: bool,
}

impl Default for ZoneConfig {
    fn default() -> Self {
        Self { range_divisor: 20, v: 2.0, lambda: 0.5, epsilon: 1e-6, frontal_filter: false }
    }
}

impl ZoneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.range_divisor == 0 {
            return Err(Error::InvalidConfig("zone.range_divisor must be positive".into()));
        }
        // v = 0 is admitted: it clusters runs of exactly equal means.
        if !(self.v >= 0.0) || !(self.lambda >= 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("zone.v, zone.lambda and zone.epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

/// Pairs whose source abscissa falls in `[x_lo, x_hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityClass {
    /// Tile index along the canvas width.
    pub index: u32,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Indices into the pair list.
    pub members: Vec<usize>,
    pub mean_disparity: f64,
}

/// Horizontal disparity `x_S − x_T` of a canvas pair.
pub fn disparity(pair: &(Point2, Point2)) -> f64 {
    pair.0.x - pair.1.x
}

/// Buckets pairs into tiles of width `canvas_width / range_divisor` by source
/// abscissa and averages their disparities. Empty tiles are omitted.
pub fn classify_disparities(pairs: &[(Point2, Point2)], canvas_width: u32, cfg: &ZoneConfig) -> Result<Vec<DisparityClass>> {
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let n = cfg.range_divisor.max(1) as usize;
    let width = canvas_width as f64;
    let r = width / n as f64;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, p) in pairs.iter().enumerate() {
        let x = p.0.x;
        if !(x >= 0.0 && x < width) || (cfg.frontal_filter && !(p.0.x > p.1.x)) {
            continue;
        }
        let k = ((x / r).floor() as usize).min(n - 1);
        buckets[k].push(i);
    }
    let classes: Vec<DisparityClass> = buckets
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(k, members)| {
            let mean_disparity = members.iter().map(|&i| disparity(&pairs[i])).sum::<f64>() / members.len() as f64;
            DisparityClass {
                index: k as u32,
                x_lo: k as f64 * r,
                x_hi: if k + 1 == n { width } else { (k + 1) as f64 * r },
                members,
                mean_disparity,
            }
        })
        .collect();
    if classes.is_empty() {
        return Err(Error::NoPairs);
    }
    Ok(classes)
}

/// Threshold clustering over ordered class means: a cluster grows while
/// consecutive means differ by at most `v`, and only clusters of two or more
/// classes are kept.
pub fn cluster_disparities(d: &[f64], v: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    if d.is_empty() {
        return out;
    }
    let mut start = 0;
    for i in 1..d.len() {
        if (d[i] - d[i - 1]).abs() > v {
            if i - start >= 2 {
                out.push(start..i);
            }
            start = i;
        }
    }
    if d.len() - start >= 2 {
        out.push(start..d.len());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityCluster {
    /// Positions in the class list.
    pub classes: Range<usize>,
    pub mu_c: f64,
    pub sigma_k: f64,
    pub cardinality: u32,
    pub delta_mu: f64,
    pub score: f64,
}

/// Cluster score `C / ((σ + λ·Δμ) + ε)`.
pub fn cluster_score(cardinality: f64, sigma: f64, delta_mu: f64, lambda: f64, epsilon: f64) -> f64 {
    cardinality / ((sigma + lambda * delta_mu) + epsilon)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Scores every cluster against the global mean of class means.
pub fn score_clusters(clusters: &[Range<usize>], classes: &[DisparityClass], cfg: &ZoneConfig) -> Vec<DisparityCluster> {
    let all: Vec<f64> = classes.iter().map(|c| c.mean_disparity).collect();
    let mu_g = mean(&all);
    clusters
        .iter()
        .map(|r| {
            let means = &all[r.clone()];
            let mu_c = mean(means);
            let sigma_k = std_dev(means);
            let cardinality = classes[r.clone()].iter().map(|c| c.members.len() as u32).sum();
            let delta_mu = (mu_c - mu_g).abs();
            DisparityCluster {
                classes: r.clone(),
                mu_c,
                sigma_k,
                cardinality,
                delta_mu,
                score: cluster_score(cardinality as f64, sigma_k, delta_mu, cfg.lambda, cfg.epsilon),
            }
        })
        .collect()
}

/// Index of the best-scoring cluster: highest score, then larger cardinality,
/// then the earlier class position.
pub fn best_cluster(scored: &[DisparityCluster]) -> Option<usize> {
    (0..scored.len()).min_by(|&a, &b| {
        let (x, y) = (&scored[a], &scored[b]);
        y.score
            .total_cmp(&x.score)
            .then(y.cardinality.cmp(&x.cardinality))
            .then(x.classes.start.cmp(&y.classes.start))
    })
}

/// Picks the winning cluster and returns it with its x-interval.
pub fn score_and_select(
    clusters: &[Range<usize>],
    classes: &[DisparityClass],
    cfg: &ZoneConfig,
) -> Result<(DisparityCluster, (f64, f64))> {
    let scored = score_clusters(clusters, classes, cfg);
    let best = best_cluster(&scored).ok_or(Error::NoClusters)?;
    let c = scored[best].clone();
    let zone = cluster_interval(&c, classes);
    Ok((c, zone))
}

pub fn cluster_interval(c: &DisparityCluster, classes: &[DisparityClass]) -> (f64, f64) {
    let members = &classes[c.classes.clone()];
    let lo = members.iter().map(|k| k.x_lo).fold(f64::INFINITY, f64::min);
    let hi = members.iter().map(|k| k.x_hi).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Zone used when no cluster survives: the most populated class widened by
/// one tile on each side, clipped to the canvas.
pub fn fallback_zone(classes: &[DisparityClass], canvas_width: u32) -> Result<(f64, f64)> {
    let best = classes
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.members.len().cmp(&b.members.len()).then(j.cmp(i)))
        .map(|(_, c)| c)
        .ok_or(Error::NoPairs)?;
    let r = best.x_hi - best.x_lo;
    Ok(((best.x_lo - r).max(0.0), (best.x_hi + r).min(canvas_width as f64)))
}

/// Full zone selection result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSelection {
    pub classes: Vec<DisparityClass>,
    pub clusters: Vec<DisparityCluster>,
    /// Position of the winner in `clusters`.
    pub best: Option<usize>,
    pub zone: (f64, f64),
    pub fallback: bool,
}

impl ZoneSelection {
    /// Indices of the pairs whose source lies inside the zone.
    pub fn zone_members(&self, pairs: &[(Point2, Point2)]) -> Vec<usize> {
        let (lo, hi) = self.zone;
        let mut idx: Vec<usize> = self
            .classes
            .iter()
            .flat_map(|c| c.members.iter().copied())
            .filter(|&i| pairs[i].0.x >= lo && pairs[i].0.x < hi)
            .collect();
        idx.sort_unstable();
        idx
    }
}

/// Classification, clustering and scoring in one pass, with the fallback zone
/// substituted when no cluster survives.
pub fn identify_zone(pairs: &[(Point2, Point2)], canvas_width: u32, cfg: &ZoneConfig) -> Result<ZoneSelection> {
    let classes = classify_disparities(pairs, canvas_width, cfg)?;
    let means: Vec<f64> = classes.iter().map(|c| c.mean_disparity).collect();
    let ranges = cluster_disparities(&means, cfg.v);
    let clusters = score_clusters(&ranges, &classes, cfg);
    match best_cluster(&clusters) {
        Some(b) => {
            let zone = cluster_interval(&clusters[b], &classes);
            Ok(ZoneSelection { classes, clusters, best: Some(b), zone, fallback: false })
        }
        None => {
            let zone = fallback_zone(&classes, canvas_width)?;
            Ok(ZoneSelection { classes, clusters, best: None, zone, fallback: true })
        }
    }
}
