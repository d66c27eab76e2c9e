//! Kernel-smoothed grid-cell prevalence.
//!
//! Each cell's value is a ratio of Gaussian-kernel weighted sums over nearby
//! homesteads: positives in the numerator, all residents in the denominator.
//! Homesteads further than the search radius from a cell centroid contribute
//! nothing.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hiv_imputation::{Period, StatusSequence};
use crate::spatial_grid::{Grid, PlanarPoint, PointIndex, RegionIndex, RegionLookup};

pub const DEFAULT_BANDWIDTH_KM: f64 = 1.165;
pub const DEFAULT_RADIUS_KM: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Gaussian standard deviation `s`, km.
    pub bandwidth_km: f64,
    /// Truncation radius, km.
    pub radius_km: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            bandwidth_km: DEFAULT_BANDWIDTH_KM,
            radius_km: DEFAULT_RADIUS_KM,
        }
    }
}

impl KernelParams {
    pub fn new(bandwidth_km: f64, radius_km: f64) -> Result<Self> {
        let p = KernelParams {
            bandwidth_km,
            radius_km,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_km.is_finite() && self.bandwidth_km > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "bandwidth {} km must be positive",
                self.bandwidth_km
            )));
        }
        if !(self.radius_km.is_finite() && self.radius_km >= self.bandwidth_km) {
            return Err(Error::InvalidKernel(format!(
                "radius {} km must be finite and at least the bandwidth {} km",
                self.radius_km, self.bandwidth_km
            )));
        }
        Ok(())
    }

    /// Truncated kernel weight at distance `d_km`.
    pub fn weight(&self, d_km: f64) -> f64 {
        if d_km > self.radius_km {
            0.0
        } else {
            kernel_weight(d_km, self.bandwidth_km)
        }
    }
}

/// `exp(−d² / (2 s²))`, untruncated.
pub fn kernel_weight(d_km: f64, s_km: f64) -> f64 {
    (-(d_km * d_km) / (2.0 * s_km * s_km)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomesteadYear {
    pub homestead_id: String,
    pub location: PlanarPoint,
    pub period: Period,
    pub n_total: u64,
    pub n_positive: u64,
}

impl HomesteadYear {
    pub fn prevalence(&self) -> Option<f64> {
        (self.n_total > 0).then(|| self.n_positive as f64 / self.n_total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceField {
    pub grid: Grid,
    pub period: Period,
    /// One entry per cell; `None` where no resident lies within the radius.
    pub values: Vec<Option<f64>>,
}

impl PrevalenceField {
    pub fn get(&self, cell: usize) -> Option<f64> {
        self.values.get(cell).copied().flatten()
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

fn validate_homesteads(homesteads: &[HomesteadYear]) -> Result<Option<Period>> {
    let period = homesteads.first().map(|h| h.period);
    for h in homesteads {
        if Some(h.period) != period {
            return Err(Error::InvalidArgument(format!(
                "homesteads span several periods ({:?} and {})",
                period, h.period
            )));
        }
        if !h.location.is_finite() {
            return Err(Error::InvalidCoordinate(format!(
                "homestead {} location",
                h.homestead_id
            )));
        }
        if h.n_positive > h.n_total {
            return Err(Error::InvalidArgument(format!(
                "homestead {}: {} positives among {} residents",
                h.homestead_id, h.n_positive, h.n_total
            )));
        }
    }
    Ok(period)
}

/// Homesteads in ascending id order; the fixed summation order per cell.
fn sorted_by_id(homesteads: &[HomesteadYear]) -> Vec<&HomesteadYear> {
    let mut v: Vec<&HomesteadYear> = homesteads.iter().collect();
    v.sort_by(|a, b| a.homestead_id.cmp(&b.homestead_id));
    v
}

/// Ratio for one cell over homesteads already restricted and ordered.
fn cell_ratio<'a>(
    centroid: PlanarPoint,
    params: &KernelParams,
    homesteads: impl Iterator<Item = &'a HomesteadYear>,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for h in homesteads {
        let d_km = centroid.distance(&h.location) / 1000.0;
        if d_km > params.radius_km {
            continue;
        }
        let w = params.weight(d_km);
        num += w * h.n_positive as f64;
        den += w * h.n_total as f64;
    }
    (den > 0.0).then(|| num / den)
}

/// Kernel-smoothed prevalence over every cell of `grid`, computed in
/// parallel with a bucket index over homesteads.
pub fn prevalence_field(
    grid: &Grid,
    homesteads: &[HomesteadYear],
    params: &KernelParams,
) -> Result<PrevalenceField> {
    params.validate()?;
    let period = validate_homesteads(homesteads)?.unwrap_or_default();
    let ordered = sorted_by_id(homesteads);
    let points: Vec<PlanarPoint> = ordered.iter().map(|h| h.location).collect();
    let radius_m = params.radius_km * 1000.0;
    let index = PointIndex::new(&points, radius_m)?;
    let values = (0..grid.n_cells())
        .into_par_iter()
        .map_init(Vec::new, |buf, cell| {
            let c = grid.centroid(cell);
            // slack so that the km-scale cutoff below decides membership
            index.within_into(c, radius_m * (1.0 + 1e-9) + 1e-6, buf);
            cell_ratio(c, params, buf.iter().map(|&i| ordered[i]))
        })
        .collect();
    Ok(PrevalenceField {
        grid: grid.clone(),
        period,
        values,
    })
}

/// O(cells × homesteads) reference implementation.
pub fn prevalence_field_brute_force(
    grid: &Grid,
    homesteads: &[HomesteadYear],
    params: &KernelParams,
) -> Result<PrevalenceField> {
    params.validate()?;
    let period = validate_homesteads(homesteads)?.unwrap_or_default();
    let ordered = sorted_by_id(homesteads);
    let values = (0..grid.n_cells())
        .map(|cell| cell_ratio(grid.centroid(cell), params, ordered.iter().copied()))
        .collect();
    Ok(PrevalenceField {
        grid: grid.clone(),
        period,
        values,
    })
}

/// One resident-period record: a person living in a homestead in a period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residence {
    pub person_id: String,
    pub homestead_id: String,
    pub period: Period,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggregationStats {
    pub residents: usize,
    pub outside_study_area: usize,
    pub without_status: usize,
    pub unknown_homestead: usize,
}

/// Build per-homestead counts for `period` from residences and one or more
/// imputed datasets.
///
/// Residents whose homestead lies outside the study area are excluded. With
/// `m` datasets, counts are summed across them; because the denominator is
/// identical for every dataset, the resulting field equals the mean of the
/// per-dataset fields.
pub fn aggregate_homesteads(
    locations: &BTreeMap<String, PlanarPoint>,
    residences: &[Residence],
    datasets: &[Vec<StatusSequence>],
    period: Period,
    regions: Option<&RegionIndex>,
) -> (Vec<HomesteadYear>, AggregationStats) {
    let lookups: Vec<HashMap<&str, &StatusSequence>> = datasets
        .iter()
        .map(|d| d.iter().map(|s| (s.person_id.as_str(), s)).collect())
        .collect();
    let mut stats = AggregationStats::default();
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in residences.iter().filter(|r| r.period == period) {
        stats.residents += 1;
        let Some(loc) = locations.get(&r.homestead_id) else {
            stats.unknown_homestead += 1;
            continue;
        };
        if let Some(idx) = regions {
            if idx.region_of(*loc) != RegionLookup::InsideStudyArea {
                stats.outside_study_area += 1;
                continue;
            }
        }
        let statuses: Option<Vec<u8>> = lookups
            .iter()
            .map(|l| {
                l.get(r.person_id.as_str())
                    .and_then(|s| s.status_at(period))
            })
            .collect();
        let Some(statuses) = statuses else {
            stats.without_status += 1;
            continue;
        };
        let entry = counts.entry(r.homestead_id.as_str()).or_default();
        entry.0 += statuses.len() as u64;
        entry.1 += statuses.iter().map(|&s| s as u64).sum::<u64>();
    }
    let out = counts
        .into_iter()
        .map(|(id, (n_total, n_positive))| HomesteadYear {
            homestead_id: id.to_string(),
            location: locations[id],
            period,
            n_total,
            n_positive,
        })
        .collect();
    (out, stats)
}
