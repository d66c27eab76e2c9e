//! Gap-aware trajectory segmentation, CPT activity distributions and level-γ
//! activity spaces.
//!
//! A participant's GPS record is a time-ordered list of fixes. Intervals
//! between consecutive fixes longer than the gap threshold are discarded; no
//! fix is ever removed. The conservative proportional-time (CPT) estimator
//! then credits only retained intervals whose two endpoint fixes lie in the
//! same cell.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial_grid::{CellId, Grid, PlanarPoint, RegionIndex, RegionLookup};

pub const DEFAULT_GAP_SECONDS: f64 = 1800.0;
pub const HOME_LEVEL: f64 = 50.0;

/// Slack on the cumulative share when testing coverage of a level.
const COVERAGE_SLACK: f64 = 1e-12;

pub type Timestamp = i64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fix {
    /// Seconds since the Unix epoch, UTC.
    pub t: Timestamp,
    pub p: PlanarPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixSequence {
    pub person_id: String,
    fixes: Vec<Fix>,
}

impl FixSequence {
    /// Requires strictly increasing timestamps and finite coordinates.
    pub fn new(person_id: impl Into<String>, fixes: Vec<Fix>) -> Result<Self> {
        let person_id = person_id.into();
        if let Some(i) = fixes.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidFixes {
                person_id,
                reason: format!("timestamps not strictly increasing at fix {}", i + 1),
            });
        }
        if let Some(i) = fixes.iter().position(|f| !f.p.is_finite()) {
            return Err(Error::InvalidFixes {
                person_id,
                reason: format!("non-finite coordinate at fix {i}"),
            });
        }
        Ok(FixSequence { person_id, fixes })
    }

    /// Sorts by timestamp and drops exact duplicate timestamps (first wins).
    pub fn from_unsorted(
        person_id: impl Into<String>,
        mut fixes: Vec<Fix>,
    ) -> Result<(Self, usize)> {
        fixes.sort_by_key(|f| f.t);
        let before = fixes.len();
        fixes.dedup_by_key(|f| f.t);
        let dropped = before - fixes.len();
        Ok((Self::new(person_id, fixes)?, dropped))
    }

    pub fn fixes(&self) -> &[Fix] {
        &self.fixes
    }

    pub fn len(&self) -> usize {
        self.fixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixes.is_empty()
    }
}

/// An interval `[start, end]` between two consecutive fixes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetainedInterval {
    pub start: Timestamp,
    pub end: Timestamp,
    pub from: PlanarPoint,
    pub to: PlanarPoint,
    /// Index of the contiguous non-gap block this interval belongs to.
    pub block: usize,
}

impl RetainedInterval {
    pub fn duration(&self) -> f64 {
        (self.end - self.start) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub person_id: String,
    pub intervals: Vec<RetainedInterval>,
    pub gap_count: usize,
    pub gap_seconds: f64,
}

impl SegmentSet {
    pub fn empty(person_id: impl Into<String>) -> Self {
        SegmentSet {
            person_id: person_id.into(),
            intervals: Vec::new(),
            gap_count: 0,
            gap_seconds: 0.0,
        }
    }

    pub fn total_retained(&self) -> f64 {
        self.intervals.iter().map(RetainedInterval::duration).sum()
    }

    /// Number of contiguous non-gap blocks.
    pub fn n_blocks(&self) -> usize {
        self.intervals
            .iter()
            .map(|i| i.block)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// `(start, end)` of the longest contiguous block; earliest wins ties.
    pub fn longest_block(&self) -> Option<(Timestamp, Timestamp)> {
        let mut spans: BTreeMap<usize, (Timestamp, Timestamp)> = BTreeMap::new();
        for iv in &self.intervals {
            let e = spans.entry(iv.block).or_insert((iv.start, iv.end));
            e.0 = e.0.min(iv.start);
            e.1 = e.1.max(iv.end);
        }
        let mut best: Option<(Timestamp, Timestamp)> = None;
        for (_, span) in spans {
            if best.is_none_or(|b| span.1 - span.0 > b.1 - b.0) {
                best = Some(span);
            }
        }
        best
    }
}

/// Split consecutive-fix intervals into retained intervals and gaps.
///
/// An interval is retained when its length is at most `gap_threshold`
/// seconds (`f64::INFINITY` keeps everything).
pub fn segment(fixes: &FixSequence, gap_threshold: f64) -> SegmentSet {
    let mut out = SegmentSet::empty(fixes.person_id.clone());
    let mut block = 0usize;
    let mut block_open = false;
    for w in fixes.fixes().windows(2) {
        let len = (w[1].t - w[0].t) as f64;
        if len <= gap_threshold {
            out.intervals.push(RetainedInterval {
                start: w[0].t,
                end: w[1].t,
                from: w[0].p,
                to: w[1].p,
                block,
            });
            block_open = true;
        } else {
            out.gap_count += 1;
            out.gap_seconds += len;
            if block_open {
                block += 1;
                block_open = false;
            }
        }
    }
    out
}

/// Time-share distribution over cells, districts or other places.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityDistribution<K: Ord> {
    pub id: String,
    shares: BTreeMap<K, f64>,
    /// Seconds behind the shares (the CPT denominator for individuals).
    pub total_seconds: f64,
}

impl<K: Ord + Clone> ActivityDistribution<K> {
    /// Normalizes per-key durations. Zero-duration keys are dropped.
    pub fn from_durations(id: impl Into<String>, durations: BTreeMap<K, f64>) -> Result<Self> {
        let id = id.into();
        let durations: BTreeMap<K, f64> = durations.into_iter().filter(|(_, d)| *d > 0.0).collect();
        let total: f64 = durations.values().sum();
        if !(total > 0.0) {
            return Err(Error::EmptySupport(format!("{id}: no same-place time")));
        }
        let shares = durations.into_iter().map(|(k, d)| (k, d / total)).collect();
        Ok(ActivityDistribution {
            id,
            shares,
            total_seconds: total,
        })
    }

    /// Builds from shares that already sum to one.
    pub fn from_shares(
        id: impl Into<String>,
        shares: BTreeMap<K, f64>,
        total_seconds: f64,
    ) -> Result<Self> {
        let id = id.into();
        let shares: BTreeMap<K, f64> = shares.into_iter().filter(|(_, s)| *s > 0.0).collect();
        let sum: f64 = shares.values().sum();
        if shares.is_empty() {
            return Err(Error::EmptySupport(id));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("{id}: shares sum to {sum}")));
        }
        Ok(ActivityDistribution {
            id,
            shares,
            total_seconds,
        })
    }

    pub fn shares(&self) -> &BTreeMap<K, f64> {
        &self.shares
    }

    pub fn share(&self, key: &K) -> f64 {
        self.shares.get(key).copied().unwrap_or(0.0)
    }

    pub fn seconds(&self, key: &K) -> f64 {
        self.share(key) * self.total_seconds
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.shares.values().sum()
    }

    /// Per-key seconds.
    pub fn durations(&self) -> BTreeMap<K, f64> {
        self.shares
            .iter()
            .map(|(k, s)| (k.clone(), s * self.total_seconds))
            .collect()
    }

    /// Map keys, merging collisions.
    pub fn map_keys<J: Ord + Clone>(&self, f: impl Fn(&K) -> J) -> ActivityDistribution<J> {
        let mut shares = BTreeMap::new();
        for (k, s) in &self.shares {
            *shares.entry(f(k)).or_insert(0.0) += s;
        }
        ActivityDistribution {
            id: self.id.clone(),
            shares,
            total_seconds: self.total_seconds,
        }
    }
}

/// Conservative proportional-time estimate over grid cells.
///
/// Transition intervals (endpoints in different cells, or outside the
/// window) are excluded from numerator and denominator alike.
pub fn cpt_estimate(segs: &SegmentSet, grid: &Grid) -> Result<ActivityDistribution<CellId>> {
    let mut durations: BTreeMap<CellId, f64> = BTreeMap::new();
    for iv in &segs.intervals {
        if let (Some(a), Some(b)) = (grid.locate(iv.from), grid.locate(iv.to)) {
            if a == b {
                *durations.entry(a).or_insert(0.0) += iv.duration();
            }
        }
    }
    ActivityDistribution::from_durations(segs.person_id.clone(), durations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// Each member weighted by their total same-place time.
    #[default]
    DurationWeighted,
    /// Plain mean of member distributions.
    Unweighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pooled<K: Ord> {
    pub distribution: ActivityDistribution<K>,
    pub used: usize,
    pub skipped: usize,
}

/// Subgroup activity distribution over the members present in `dists`.
///
/// Members are processed in ascending id order; members with empty support
/// are skipped and counted.
pub fn pool<K: Ord + Clone>(
    group_id: &str,
    dists: &[ActivityDistribution<K>],
    members: &BTreeSet<String>,
    mode: PoolMode,
) -> Result<Pooled<K>> {
    if members.is_empty() {
        return Err(Error::InvalidArgument(
            "pooling needs at least one member".into(),
        ));
    }
    let mut chosen: Vec<&ActivityDistribution<K>> =
        dists.iter().filter(|d| members.contains(&d.id)).collect();
    chosen.sort_by(|a, b| a.id.cmp(&b.id));
    let mut acc: BTreeMap<K, f64> = BTreeMap::new();
    let (mut used, mut skipped) = (0usize, 0usize);
    let mut total_seconds = 0.0;
    let mut weight_sum = 0.0;
    for d in chosen {
        if d.is_empty() || (!(d.total_seconds > 0.0) && mode == PoolMode::DurationWeighted) {
            skipped += 1;
            continue;
        }
        let w = match mode {
            PoolMode::DurationWeighted => d.total_seconds,
            PoolMode::Unweighted => 1.0,
        };
        for (k, s) in &d.shares {
            *acc.entry(k.clone()).or_insert(0.0) += s * w;
        }
        weight_sum += w;
        total_seconds += d.total_seconds;
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptySupport(format!(
            "group {group_id} has no usable member"
        )));
    }
    let shares = acc
        .into_iter()
        .map(|(k, v)| (k, v / weight_sum))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    Ok(Pooled {
        distribution: ActivityDistribution {
            id: group_id.to_string(),
            shares,
            total_seconds,
        },
        used,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpace<K> {
    pub gamma: f64,
    /// Greedy order for level spaces; ascending for collective spaces.
    pub cells: Vec<K>,
    /// Share captured by the cells; not stored for collective spaces.
    pub captured: Option<f64>,
}

impl<K: Ord + Clone> ActivitySpace<K> {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_set(&self) -> BTreeSet<K> {
        self.cells.iter().cloned().collect()
    }
}

fn check_level(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 100.0) {
        return Err(Error::InvalidLevel(gamma));
    }
    Ok(())
}

/// Cells of one distribution ranked for level-γ queries.
///
/// Order is decreasing share, ties broken by ascending key.
#[derive(Debug, Clone)]
pub struct RankedShares<K> {
    ranked: Vec<(K, f64)>,
    cumulative: Vec<f64>,
}

impl<K: Ord + Clone> RankedShares<K> {
    pub fn new(dist: &ActivityDistribution<K>) -> Result<Self> {
        if dist.is_empty() {
            return Err(Error::EmptySupport(format!(
                "{}: empty distribution",
                dist.id
            )));
        }
        let mut ranked: Vec<(K, f64)> = dist.shares.iter().map(|(k, s)| (k.clone(), *s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut cumulative = Vec::with_capacity(ranked.len());
        let mut run = 0.0;
        for (_, s) in &ranked {
            run += s;
            cumulative.push(run);
        }
        Ok(RankedShares { ranked, cumulative })
    }

    /// Number of leading cells needed to reach level `gamma`.
    pub fn level_size(&self, gamma: f64) -> Result<usize> {
        check_level(gamma)?;
        if gamma >= 100.0 {
            return Ok(self.ranked.len());
        }
        let target = gamma / 100.0 - COVERAGE_SLACK;
        let k = self.cumulative.partition_point(|&c| c < target);
        Ok((k + 1).min(self.ranked.len()))
    }

    pub fn space(&self, gamma: f64) -> Result<ActivitySpace<K>> {
        let k = self.level_size(gamma)?;
        Ok(ActivitySpace {
            gamma,
            cells: self.ranked[..k].iter().map(|(c, _)| c.clone()).collect(),
            captured: Some(self.cumulative[k - 1]),
        })
    }
}

/// Smallest set of cells holding at least `gamma`% of the time; among sets of
/// that size, the one with the largest captured share.
pub fn activity_space<K: Ord + Clone>(
    dist: &ActivityDistribution<K>,
    gamma: f64,
) -> Result<ActivitySpace<K>> {
    RankedShares::new(dist)?.space(gamma)
}

/// Union of member spaces; all members must share one level.
pub fn collective_space<K: Ord + Clone>(spaces: &[ActivitySpace<K>]) -> Result<ActivitySpace<K>> {
    let Some(first) = spaces.first() else {
        return Err(Error::InvalidArgument(
            "collective space of no members".into(),
        ));
    };
    let mut union = BTreeSet::new();
    for s in spaces {
        if s.gamma != first.gamma {
            return Err(Error::LevelMismatch(first.gamma, s.gamma));
        }
        union.extend(s.cells.iter().cloned());
    }
    Ok(ActivitySpace {
        gamma: first.gamma,
        cells: union.into_iter().collect(),
        captured: None,
    })
}

/// Where a retained interval's time is accounted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InOutSplit {
    /// Intervals with both endpoints inside the study area.
    pub inside: SegmentSet,
    /// Seconds per district for intervals with both endpoints in that district.
    pub district_seconds: BTreeMap<String, f64>,
    pub inside_seconds: f64,
    /// Both endpoints in no known region.
    pub unmapped_seconds: f64,
    /// Endpoints in different regions; dropped from both sides.
    pub straddling_seconds: f64,
}

impl InOutSplit {
    pub fn outside_seconds(&self) -> f64 {
        self.district_seconds.values().sum()
    }

    pub fn classified_seconds(&self) -> f64 {
        self.inside_seconds + self.outside_seconds()
    }

    pub fn fraction_in(&self) -> Option<f64> {
        let c = self.classified_seconds();
        (c > 0.0).then(|| self.inside_seconds / c)
    }

    pub fn fraction_out(&self) -> Option<f64> {
        let c = self.classified_seconds();
        (c > 0.0).then(|| self.outside_seconds() / c)
    }
}

/// Route retained intervals to the study area or to districts.
pub fn split_in_out(segs: &SegmentSet, idx: &RegionIndex) -> InOutSplit {
    let mut inside = SegmentSet::empty(segs.person_id.clone());
    inside.gap_count = segs.gap_count;
    inside.gap_seconds = segs.gap_seconds;
    let mut split = InOutSplit {
        inside,
        district_seconds: BTreeMap::new(),
        inside_seconds: 0.0,
        unmapped_seconds: 0.0,
        straddling_seconds: 0.0,
    };
    // consecutive intervals share a fix; reuse its lookup
    let mut cache: Option<(PlanarPoint, RegionLookup)> = None;
    let mut lookup = |p: PlanarPoint| -> RegionLookup {
        if let Some((q, r)) = &cache {
            if *q == p {
                return r.clone();
            }
        }
        let r = idx.region_of(p);
        cache = Some((p, r.clone()));
        r
    };
    for iv in &segs.intervals {
        let a = lookup(iv.from);
        let b = lookup(iv.to);
        let d = iv.duration();
        match (a, b) {
            (RegionLookup::InsideStudyArea, RegionLookup::InsideStudyArea) => {
                split.inside.intervals.push(*iv);
                split.inside_seconds += d;
            }
            (RegionLookup::District(x), RegionLookup::District(y)) if x == y => {
                *split.district_seconds.entry(x).or_insert(0.0) += d;
            }
            (RegionLookup::Unmapped, RegionLookup::Unmapped) => split.unmapped_seconds += d,
            _ => split.straddling_seconds += d,
        }
    }
    split
}

/// A grid cell inside the study area or a district outside it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Place {
    Cell(CellId),
    District(String),
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Cell(c) => write!(f, "cell:{c}"),
            Place::District(d) => write!(f, "district:{d}"),
        }
    }
}

/// Combined distribution over study-area cells (same-cell seconds) and
/// districts (same-district seconds).
pub fn place_distribution(
    id: &str,
    cell_seconds: &BTreeMap<CellId, f64>,
    district_seconds: &BTreeMap<String, f64>,
) -> Result<ActivityDistribution<Place>> {
    let mut durations = BTreeMap::new();
    for (c, s) in cell_seconds {
        durations.insert(Place::Cell(*c), *s);
    }
    for (d, s) in district_seconds {
        durations.insert(Place::District(d.clone()), *s);
    }
    ActivityDistribution::from_durations(id, durations)
}

/// Parse level lists like `50:95:1,100` (inclusive ranges and single values).
pub fn parse_levels(spec: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let fields: Vec<&str> = part.split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad level `{s}` in `{spec}`")))
        };
        match fields.as_slice() {
            [v] => out.push(num(v)?),
            [a, b] | [a, b, _] => {
                let (a, b) = (num(a)?, num(b)?);
                let step = if fields.len() == 3 {
                    num(fields[2])?
                } else {
                    1.0
                };
                if !(step > 0.0) || b < a {
                    return Err(Error::InvalidArgument(format!("bad range `{part}`")));
                }
                let n = ((b - a) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| a + i as f64 * step));
            }
            _ => return Err(Error::InvalidArgument(format!("bad level range `{part}`"))),
        }
    }
    for &g in &out {
        check_level(g)?;
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty level list".into()));
    }
    Ok(out)
}
