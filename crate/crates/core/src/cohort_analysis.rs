//! Cohort-level analyses: paired comparisons, risk quadrants, clustering of
//! exposure-deviation curves, coverage curves, overlap maps and exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Datelike, NaiveDate};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::activity::{ActivityDistribution, ActivitySpace, Place, RankedShares, Timestamp};
use crate::error::{Error, Result};
use crate::exposure::{exposure_of_space, PlacePrevalence};
use crate::hiv_imputation::Sex;
use crate::seed;
use crate::spatial_grid::CellId;

pub const DEFAULT_LOW_PERCENTILE: f64 = 40.0;
pub const DEFAULT_HIGH_PERCENTILE: f64 = 60.0;
pub const DEFAULT_LOG_EPSILON: f64 = 1e-15;
pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 100;

/// Deviation levels 50, 51, ..., 95.
pub fn deviation_levels() -> Vec<f64> {
    (50..=95).map(f64::from).collect()
}

/// Percentile by linear interpolation between order statistics: with sorted
/// values `x[0..n]` and `h = (n − 1)·p/100`, the result is
/// `x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋])`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("percentile of no values".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&v, p))
}

fn percentile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub mean_difference: f64,
}

/// Two-sided paired t-test on `d = x − y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<TTest> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "paired t-test needs 2 pairs, got {n}"
        )));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::DegenerateVariance(format!(
            "differences have sd {sd}, mean {mean}"
        )));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let df = (n - 1) as f64;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        t,
        df,
        p_value,
        mean_difference: mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskGroup {
    Low,
    High,
    HighLocal,
    HighExternal,
    Unassigned,
}

impl RiskGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskGroup::Low => "low",
            RiskGroup::High => "high",
            RiskGroup::HighLocal => "high_local",
            RiskGroup::HighExternal => "high_external",
            RiskGroup::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for RiskGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssignment {
    pub person_id: String,
    pub group: RiskGroup,
    /// `e_in` above the high threshold.
    pub local_zone: bool,
    /// `fraction_out` above the high threshold.
    pub external_zone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskThresholds {
    pub e_in_low: f64,
    pub e_in_high: f64,
    pub out_low: f64,
    pub out_high: f64,
}

/// Stratify by `e_in` and `fraction_out` percentiles. Comparisons are strict,
/// so values equal to a threshold fall in the unassigned band.
///
/// Groups are exclusive: `high` is both above the high threshold,
/// `high_local` and `high_external` are above it on exactly one measure.
pub fn risk_stratify(
    profiles: &[(String, f64, f64)],
    p_low: f64,
    p_high: f64,
) -> Result<(Vec<RiskAssignment>, RiskThresholds)> {
    if profiles.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "risk stratification needs 5 participants, got {}",
            profiles.len()
        )));
    }
    if !(p_low < p_high) {
        return Err(Error::InvalidArgument(format!(
            "percentiles {p_low} and {p_high} out of order"
        )));
    }
    let e_in: Vec<f64> = profiles.iter().map(|p| p.1).collect();
    let out: Vec<f64> = profiles.iter().map(|p| p.2).collect();
    let th = RiskThresholds {
        e_in_low: percentile(&e_in, p_low)?,
        e_in_high: percentile(&e_in, p_high)?,
        out_low: percentile(&out, p_low)?,
        out_high: percentile(&out, p_high)?,
    };
    let assignments = profiles
        .iter()
        .map(|(id, e, o)| {
            let local_zone = *e > th.e_in_high;
            let external_zone = *o > th.out_high;
            let group = match (local_zone, external_zone) {
                (true, true) => RiskGroup::High,
                (true, false) => RiskGroup::HighLocal,
                (false, true) => RiskGroup::HighExternal,
                _ if *e < th.e_in_low && *o < th.out_low => RiskGroup::Low,
                _ => RiskGroup::Unassigned,
            };
            RiskAssignment {
                person_id: id.clone(),
                group,
                local_zone,
                external_zone,
            }
        })
        .collect();
    Ok((assignments, th))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCurve {
    pub person_id: String,
    /// Exposure over the level-γ space minus home exposure, one per level.
    pub values: Vec<f64>,
}

/// Deviation of space exposure from home exposure across `gammas`. `None` if
/// any level has no exposure value.
pub fn deviation_curve(
    dist: &ActivityDistribution<Place>,
    prev: PlacePrevalence<'_>,
    e_home: f64,
    gammas: &[f64],
) -> Result<Option<DeviationCurve>> {
    let ranked = RankedShares::new(dist)?;
    let mut values = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let space = ranked.space(g)?;
        match exposure_of_space(dist, &space, prev)? {
            Some(e) => values.push(e - e_home),
            None => return Ok(None),
        }
    }
    Ok(Some(DeviationCurve {
        person_id: dist.id.clone(),
        values,
    }))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Within-cluster sum of squares.
pub fn wcss(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    /// Objective after each assignment step.
    pub trace: Vec<f64>,
    pub restart: usize,
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    let mut v: Vec<&Vec<f64>> = points.iter().collect();
    let cmp = |a: &&Vec<f64>, b: &&Vec<f64>| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    v.sort_by(cmp);
    v.dedup_by(|a, b| cmp(&&**a, &&**b).is_eq());
    v.len()
}

/// D²-weighted seeding from a given first centroid.
fn seed_centroids(
    points: &[Vec<f64>],
    k: usize,
    first: usize,
    rng: &mut seed::Rng,
) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        let c = points[pick].clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, restart: usize) -> KMeansFit {
    let k = centroids.len();
    let dim = points[0].len();
    let assign =
        |cs: &[Vec<f64>]| -> Vec<usize> { points.iter().map(|p| nearest(p, cs).0).collect() };
    let mut assignments = assign(&centroids);
    let mut objective = wcss(points, &assignments, &centroids);
    let mut trace = vec![objective];
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut taken = BTreeSet::new();
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // re-seed at the point worst served by its current centroid
                let far = (0..points.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[assignments[a]]);
                        let db = sq_dist(&points[b], &centroids[assignments[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                taken.insert(far);
                centroids[j] = points[far].clone();
            }
        }
        let next = assign(&centroids);
        let next_obj = wcss(points, &next, &centroids);
        assert!(
            next_obj <= objective + 1e-9 * (1.0 + objective),
            "k-means objective increased from {objective} to {next_obj}"
        );
        trace.push(next_obj);
        objective = next_obj;
        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }
    }
    refine(
        points,
        &mut assignments,
        &mut centroids,
        &mut objective,
        &mut trace,
    );
    KMeansFit {
        assignments,
        centroids,
        objective,
        trace,
        restart,
    }
}

fn mean_of(points: &[Vec<f64>], assignments: &[usize], j: usize) -> Vec<f64> {
    let mut s = vec![0.0; points[0].len()];
    let mut n = 0usize;
    for (p, _) in points.iter().zip(assignments).filter(|(_, &a)| a == j) {
        n += 1;
        for (s, x) in s.iter_mut().zip(p) {
            *s += x;
        }
    }
    s.iter().map(|v| v / n as f64).collect()
}

/// Single-point transfers that lower the objective (Hartigan's rule), run
/// after Lloyd has converged.
fn refine(
    points: &[Vec<f64>],
    assignments: &mut [usize],
    centroids: &mut [Vec<f64>],
    objective: &mut f64,
    trace: &mut Vec<f64>,
) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for j in 0..k {
        centroids[j] = mean_of(points, assignments, j);
    }
    for _ in 0..MAX_ITERATIONS {
        let mut moved = false;
        for i in 0..points.len() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let loss = na / (na - 1.0) * sq_dist(&points[i], &centroids[a]);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let delta = nb / (nb + 1.0) * sq_dist(&points[i], &centroids[b]) - loss;
                if best.is_none_or(|(_, d)| delta < d) {
                    best = Some((b, delta));
                }
            }
            if let Some((b, delta)) = best {
                if delta < -1e-12 * (1.0 + *objective) {
                    assignments[i] = b;
                    counts[a] -= 1;
                    counts[b] += 1;
                    centroids[a] = mean_of(points, assignments, a);
                    centroids[b] = mean_of(points, assignments, b);
                    moved = true;
                }
            }
        }
        let next = wcss(points, assignments, centroids);
        assert!(
            next <= *objective + 1e-9 * (1.0 + *objective),
            "k-means objective increased from {objective} to {next}"
        );
        *objective = next;
        trace.push(next);
        if !moved {
            break;
        }
    }
}

/// Lloyd's algorithm with `restarts` seeded D² initializations; the fit with
/// the lowest objective wins, ties by restart index.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidArgument(
            "k-means needs k ≥ 1 and at least one restart".into(),
        ));
    }
    if points.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} points for {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points
        .iter()
        .any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::InvalidArgument(
            "points must be finite and of equal length".into(),
        ));
    }
    if count_distinct(points) < k {
        return Err(Error::DegenerateInput(format!(
            "fewer than {k} distinct points"
        )));
    }
    // restarts cycle through a seeded permutation of first centroids
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut seed::stream(seed, &[b"kmeans-order"]));
    let fits: Vec<KMeansFit> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::stream(seed, &[b"kmeans", &(r as u64).to_le_bytes()]);
            let first = order[r % order.len()];
            lloyd(points, seed_centroids(points, k, first, &mut rng), r)
        })
        .collect();
    let best = fits
        .into_iter()
        .min_by(|a, b| {
            a.objective
                .total_cmp(&b.objective)
                .then(a.restart.cmp(&b.restart))
        })
        .expect("at least one restart");
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterLabel {
    Decrease,
    Stable,
    Increase,
}

impl ClusterLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterLabel::Decrease => "decrease",
            ClusterLabel::Stable => "stable",
            ClusterLabel::Increase => "increase",
        }
    }
}

impl fmt::Display for ClusterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub assignments: BTreeMap<String, ClusterLabel>,
    /// Centroids in ascending order of mean deviation.
    pub centroids: Vec<(ClusterLabel, Vec<f64>)>,
    pub objective: f64,
    pub seed: u64,
}

/// Cluster deviation curves, labelling clusters by centroid mean: for k = 3
/// lowest → decrease, middle → stable, highest → increase. k = 1 is stable,
/// k = 2 is decrease/increase.
pub fn cluster_deviations(
    curves: &[DeviationCurve],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterResult> {
    let labels: &[ClusterLabel] = match k {
        1 => &[ClusterLabel::Stable],
        2 => &[ClusterLabel::Decrease, ClusterLabel::Increase],
        3 => &[
            ClusterLabel::Decrease,
            ClusterLabel::Stable,
            ClusterLabel::Increase,
        ],
        _ => {
            return Err(Error::InvalidArgument(format!(
                "deviation clustering supports k ≤ 3, got {k}"
            )))
        }
    };
    let points: Vec<Vec<f64>> = curves.iter().map(|c| c.values.clone()).collect();
    let fit = kmeans(&points, k, seed, restarts)?;
    let mean = |c: &Vec<f64>| c.iter().sum::<f64>() / c.len().max(1) as f64;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        mean(&fit.centroids[a])
            .total_cmp(&mean(&fit.centroids[b]))
            .then(a.cmp(&b))
    });
    let mut label_of = vec![ClusterLabel::Stable; k];
    for (rank, &j) in order.iter().enumerate() {
        label_of[j] = labels[rank];
    }
    Ok(ClusterResult {
        assignments: curves
            .iter()
            .zip(&fit.assignments)
            .map(|(c, &a)| (c.person_id.clone(), label_of[a]))
            .collect(),
        centroids: order
            .iter()
            .map(|&j| (label_of[j], fit.centroids[j].clone()))
            .collect(),
        objective: fit.objective,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resample {
    pub target_size: usize,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub group: String,
    pub gamma: f64,
    /// Size of the collective space (mean over repetitions).
    pub collective: f64,
    pub mean_individual: f64,
    /// Interquartile band of the collective size across repetitions.
    pub q1: f64,
    pub q3: f64,
}

/// Collective and mean individual space sizes per group and level.
///
/// The collective space is the union of member spaces. With `resample`,
/// groups larger than the target are subsampled without replacement
/// `repetitions` times and the curves averaged.
pub fn coverage_curves<K: Ord + Clone + Sync + Send>(
    dists: &[ActivityDistribution<K>],
    groups: &BTreeMap<String, String>,
    gammas: &[f64],
    resample: Option<&Resample>,
) -> Result<Vec<CoverageRow>> {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[a].id.cmp(&dists[b].id));
    for i in order {
        if let Some(g) = groups.get(&dists[i].id) {
            members.entry(g.as_str()).or_default().push(i);
        }
    }
    let ranked: Vec<RankedShares<K>> =
        dists.iter().map(RankedShares::new).collect::<Result<_>>()?;
    // sizes[i][g]: cells in person i's level-gammas[g] space
    let sizes: Vec<Vec<usize>> = ranked
        .iter()
        .map(|r| {
            gammas
                .iter()
                .map(|&g| r.level_size(g))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let ranked_keys: Vec<Vec<K>> = ranked
        .iter()
        .map(|r| r.space(100.0).map(|s| s.cells))
        .collect::<Result<_>>()?;

    let evaluate = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
        let mut collective = Vec::with_capacity(gammas.len());
        let mut mean_ind = Vec::with_capacity(gammas.len());
        for g in 0..gammas.len() {
            let mut union: BTreeSet<&K> = BTreeSet::new();
            let mut total = 0usize;
            for &i in idx {
                union.extend(ranked_keys[i][..sizes[i][g]].iter());
                total += sizes[i][g];
            }
            collective.push(union.len() as f64);
            mean_ind.push(total as f64 / idx.len() as f64);
        }
        (collective, mean_ind)
    };

    let mut rows = Vec::new();
    for (group, idx) in &members {
        let runs: Vec<(Vec<f64>, Vec<f64>)> = match resample {
            Some(rs) if idx.len() < rs.target_size => {
                return Err(Error::InvalidResample(format!(
                    "group {group} has {} members, fewer than target {}",
                    idx.len(),
                    rs.target_size
                )))
            }
            Some(rs) if idx.len() > rs.target_size => {
                if rs.repetitions == 0 || rs.target_size == 0 {
                    return Err(Error::InvalidResample(
                        "resampling needs positive size and repetitions".into(),
                    ));
                }
                (0..rs.repetitions)
                    .into_par_iter()
                    .map(|r| {
                        let mut rng = seed::stream(
                            rs.seed,
                            &[b"coverage", group.as_bytes(), &(r as u64).to_le_bytes()],
                        );
                        let mut pick: Vec<usize> = sample(&mut rng, idx.len(), rs.target_size)
                            .into_iter()
                            .map(|j| idx[j])
                            .collect();
                        pick.sort_unstable();
                        evaluate(&pick)
                    })
                    .collect()
            }
            _ => vec![evaluate(idx)],
        };
        for (g, &gamma) in gammas.iter().enumerate() {
            let mut coll: Vec<f64> = runs.iter().map(|r| r.0[g]).collect();
            coll.sort_by(f64::total_cmp);
            let n = runs.len() as f64;
            rows.push(CoverageRow {
                group: group.to_string(),
                gamma,
                collective: coll.iter().sum::<f64>() / n,
                mean_individual: runs.iter().map(|r| r.1[g]).sum::<f64>() / n,
                q1: percentile_sorted(&coll, 25.0),
                q3: percentile_sorted(&coll, 75.0),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapCategory {
    WomenOnly,
    MenOnly,
    Both,
}

impl OverlapCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            OverlapCategory::WomenOnly => "women_only",
            OverlapCategory::MenOnly => "men_only",
            OverlapCategory::Both => "both",
        }
    }
}

/// Classify every cell of either collective space by which sex visits it.
pub fn overlap_map<K: Ord + Clone>(
    space_f: &ActivitySpace<K>,
    space_m: &ActivitySpace<K>,
) -> Result<BTreeMap<K, OverlapCategory>> {
    if space_f.gamma != space_m.gamma {
        return Err(Error::LevelMismatch(space_f.gamma, space_m.gamma));
    }
    let f = space_f.cell_set();
    let m = space_m.cell_set();
    let mut out = BTreeMap::new();
    for c in f.union(&m) {
        let cat = match (f.contains(c), m.contains(c)) {
            (true, true) => OverlapCategory::Both,
            (true, false) => OverlapCategory::WomenOnly,
            _ => OverlapCategory::MenOnly,
        };
        out.insert(c.clone(), cat);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub person_id: String,
    pub sex: Sex,
    pub age: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub person_id: String,
    pub sex: Sex,
    pub age: i32,
    pub gamma: f64,
    pub n_cells: usize,
}

/// Completed years of age at a Unix timestamp.
pub fn age_at(birth: NaiveDate, t: Timestamp) -> Result<i32> {
    let date = DateTime::from_timestamp(t, 0)
        .ok_or_else(|| Error::InvalidArgument(format!("timestamp {t} out of range")))?
        .date_naive();
    let mut age = date.year() - birth.year();
    if (date.month(), date.day()) < (birth.month(), birth.day()) {
        age -= 1;
    }
    Ok(age)
}

/// Long-format table of space sizes, one row per person and level, in input
/// order.
pub fn export_design_table<K: Ord + Clone>(
    people: &[(Demographics, &ActivityDistribution<K>)],
    gammas: &[f64],
) -> Result<Vec<DesignRow>> {
    for &g in gammas {
        if !(50.0..=95.0).contains(&g) {
            return Err(Error::InvalidLevel(g));
        }
    }
    let mut rows = Vec::with_capacity(people.len() * gammas.len());
    for (demo, dist) in people {
        let ranked = RankedShares::new(dist)?;
        for &g in gammas {
            rows.push(DesignRow {
                person_id: demo.person_id.clone(),
                sex: demo.sex,
                age: demo.age,
                gamma: g,
                n_cells: ranked.level_size(g)?,
            });
        }
    }
    Ok(rows)
}

/// `log(π̂ⱼ + ε)` for every cell of a grid with `n_cells` cells.
pub fn log_activity_export(
    dist: &ActivityDistribution<CellId>,
    n_cells: usize,
    epsilon: f64,
) -> Vec<f64> {
    (0..n_cells)
        .map(|c| (dist.share(&c) + epsilon).ln())
        .collect()
}
