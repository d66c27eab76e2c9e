//! Per-participant contextual exposure: time-weighted prevalence inside the
//! study area, outside it, overall, and over the home activity space.
//!
//! Prevalences are proportions in `[0, 1]` throughout. A measure is `None`
//! when nothing with a known prevalence was visited.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::activity::{
    activity_space, cpt_estimate, place_distribution, ActivityDistribution, ActivitySpace,
    InOutSplit, Place,
};
use crate::error::{Error, Result};
use crate::prevalence_field::PrevalenceField;
use crate::spatial_grid::{CellId, Grid};

/// District-level prevalence for places outside the study area.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistrictPrevalence {
    values: BTreeMap<String, f64>,
}

impl DistrictPrevalence {
    pub fn new(values: BTreeMap<String, f64>) -> Result<Self> {
        for (d, p) in &values {
            if !(p.is_finite() && (0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument(format!(
                    "district {d}: prevalence {p} outside [0, 1]"
                )));
            }
        }
        Ok(DistrictPrevalence { values })
    }

    pub fn get(&self, district: &str) -> Option<f64> {
        self.values.get(district).copied()
    }

    pub fn values(&self) -> &BTreeMap<String, f64> {
        &self.values
    }

    /// Multiply every value by `c`; used for unit conversion checks.
    pub fn scaled(&self, c: f64) -> DistrictPrevalence {
        DistrictPrevalence {
            values: self
                .values
                .iter()
                .map(|(k, v)| (k.clone(), v * c))
                .collect(),
        }
    }

    fn require(&self, district: &str) -> Result<f64> {
        self.get(district)
            .ok_or_else(|| Error::IncompleteTable(format!("no prevalence for district {district}")))
    }
}

/// Prevalence of a combined place: grid cells from the field, districts from
/// the district table.
#[derive(Debug, Clone, Copy)]
pub struct PlacePrevalence<'a> {
    pub field: &'a PrevalenceField,
    pub districts: &'a DistrictPrevalence,
}

impl PlacePrevalence<'_> {
    pub fn get(&self, place: &Place) -> Result<Option<f64>> {
        match place {
            Place::Cell(c) => Ok(self.field.get(*c)),
            Place::District(d) => self.districts.require(d).map(Some),
        }
    }
}

/// Weighted mean over `(weight, value)` pairs with known values.
fn weighted_mean(items: impl Iterator<Item = (f64, Option<f64>)>) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (w, v) in items {
        if let Some(v) = v {
            num += w * v;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Share-weighted cell prevalence, renormalized over cells with a value.
pub fn exposure_in(dist_in: &ActivityDistribution<CellId>, field: &PrevalenceField) -> Option<f64> {
    weighted_mean(dist_in.shares().iter().map(|(c, s)| (*s, field.get(*c))))
}

/// Duration-weighted district prevalence.
pub fn exposure_out(
    district_seconds: &BTreeMap<String, f64>,
    dp: &DistrictPrevalence,
) -> Result<Option<f64>> {
    let mut items = Vec::with_capacity(district_seconds.len());
    for (d, s) in district_seconds {
        if *s < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "negative duration {s} for district {d}"
            )));
        }
        if *s > 0.0 {
            items.push((*s, Some(dp.require(d)?)));
        }
    }
    Ok(weighted_mean(items.into_iter()))
}

/// Combine inside and outside exposure by the time fractions. A missing side
/// only matters if time was spent there.
pub fn exposure_overall(
    e_in: Option<f64>,
    e_out: Option<f64>,
    fraction_in: f64,
    fraction_out: f64,
) -> Option<f64> {
    let side = |e: Option<f64>, f: f64| -> Option<f64> {
        if f > 0.0 {
            e.map(|v| f * v)
        } else {
            Some(0.0)
        }
    };
    if !(fraction_in > 0.0 || fraction_out > 0.0) {
        return None;
    }
    Some(side(e_in, fraction_in)? + side(e_out, fraction_out)?)
}

/// Share-weighted prevalence over the places of `space`, renormalized over
/// places with a value.
pub fn exposure_of_space(
    dist: &ActivityDistribution<Place>,
    space: &ActivitySpace<Place>,
    prev: PlacePrevalence<'_>,
) -> Result<Option<f64>> {
    let mut items = Vec::with_capacity(space.len());
    for p in &space.cells {
        items.push((dist.share(p), prev.get(p)?));
    }
    Ok(weighted_mean(items.into_iter()))
}

/// Where a participant's home lies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HomeLocation {
    Inside,
    /// Home district: the district with the largest time share.
    Outside(String),
}

/// Inside iff the largest-share place of the home space is a study-area cell.
pub fn classify_home(
    dist: &ActivityDistribution<Place>,
    home: &ActivitySpace<Place>,
) -> Option<HomeLocation> {
    match home.cells.first()? {
        Place::Cell(_) => Some(HomeLocation::Inside),
        Place::District(_) => {
            // ties broken towards the smaller id, as in the greedy ranking
            let mut best: Option<(&str, f64)> = None;
            for (p, s) in dist.shares() {
                if let Place::District(d) = p {
                    if best.is_none_or(|(_, b)| *s > b) {
                        best = Some((d, *s));
                    }
                }
            }
            best.map(|(d, _)| HomeLocation::Outside(d.to_string()))
        }
    }
}

/// Exposure over the home space; district prevalence for outside homes.
pub fn exposure_home(
    dist: &ActivityDistribution<Place>,
    home: &ActivitySpace<Place>,
    prev: PlacePrevalence<'_>,
) -> Result<Option<f64>> {
    match classify_home(dist, home) {
        None => Ok(None),
        Some(HomeLocation::Inside) => exposure_of_space(dist, home, prev),
        Some(HomeLocation::Outside(d)) => prev.districts.require(&d).map(Some),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureProfile {
    pub person_id: String,
    pub e_in: Option<f64>,
    pub e_out: Option<f64>,
    pub e_overall: Option<f64>,
    pub e_home: Option<f64>,
    pub fraction_in: Option<f64>,
    pub fraction_out: Option<f64>,
    pub home: Option<HomeLocation>,
}

/// Everything the exposure measures are computed from, for one participant.
#[derive(Debug, Clone)]
pub struct ParticipantActivity {
    pub person_id: String,
    /// Same-cell time inside the study area; `None` if there is none.
    pub cells: Option<ActivityDistribution<CellId>>,
    pub district_seconds: BTreeMap<String, f64>,
    pub fraction_in: Option<f64>,
    pub fraction_out: Option<f64>,
    /// Cells and districts together; `None` if neither has time.
    pub places: Option<ActivityDistribution<Place>>,
}

impl ParticipantActivity {
    pub fn from_split(split: &InOutSplit, grid: &Grid) -> Result<Self> {
        let cell_seconds = match cpt_estimate(&split.inside, grid) {
            Ok(d) => d.durations(),
            Err(Error::EmptySupport(_)) => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Self::from_parts(
            &split.inside.person_id,
            &cell_seconds,
            &split.district_seconds,
            split.inside_seconds,
            split.outside_seconds(),
        )
    }

    /// From same-cell seconds, same-district seconds and the classified
    /// inside/outside totals.
    pub fn from_parts(
        person_id: &str,
        cell_seconds: &BTreeMap<CellId, f64>,
        district_seconds: &BTreeMap<String, f64>,
        inside_seconds: f64,
        outside_seconds: f64,
    ) -> Result<Self> {
        fn optional<T>(r: Result<T>) -> Result<Option<T>> {
            match r {
                Ok(d) => Ok(Some(d)),
                Err(Error::EmptySupport(_)) => Ok(None),
                Err(e) => Err(e),
            }
        }
        let cells = optional(ActivityDistribution::from_durations(
            person_id,
            cell_seconds.clone(),
        ))?;
        let places = optional(place_distribution(
            person_id,
            cell_seconds,
            district_seconds,
        ))?;
        let classified = inside_seconds + outside_seconds;
        Ok(ParticipantActivity {
            person_id: person_id.to_string(),
            cells,
            district_seconds: district_seconds.clone(),
            fraction_in: (classified > 0.0).then(|| inside_seconds / classified),
            fraction_out: (classified > 0.0).then(|| outside_seconds / classified),
            places,
        })
    }
}

/// The four measures plus time fractions.
pub fn exposure_profile(
    act: &ParticipantActivity,
    field: &PrevalenceField,
    dp: &DistrictPrevalence,
    home_level: f64,
) -> Result<ExposureProfile> {
    let prev = PlacePrevalence {
        field,
        districts: dp,
    };
    let e_in = act.cells.as_ref().and_then(|d| exposure_in(d, field));
    let e_out = exposure_out(&act.district_seconds, dp)?;
    let e_overall = match (act.fraction_in, act.fraction_out) {
        (Some(fi), Some(fo)) => exposure_overall(e_in, e_out, fi, fo),
        _ => None,
    };
    let (e_home, home) = match &act.places {
        Some(places) => {
            let home = activity_space(places, home_level)?;
            (
                exposure_home(places, &home, prev)?,
                classify_home(places, &home),
            )
        }
        None => (None, None),
    };
    Ok(ExposureProfile {
        person_id: act.person_id.clone(),
        e_in,
        e_out,
        e_overall,
        e_home,
        fraction_in: act.fraction_in,
        fraction_out: act.fraction_out,
        home,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::HOME_LEVEL;
    use crate::spatial_grid::PlanarPoint;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn field(values: Vec<Option<f64>>) -> PrevalenceField {
        let grid = Grid::new(PlanarPoint::new(0.0, 0.0), 100.0, values.len(), 1).unwrap();
        PrevalenceField {
            grid,
            period: 2015,
            values,
        }
    }

    fn cells(shares: &[(CellId, f64)]) -> ActivityDistribution<CellId> {
        ActivityDistribution::from_shares("p", shares.iter().cloned().collect(), 100.0).unwrap()
    }

    fn places(shares: &[(Place, f64)]) -> ActivityDistribution<Place> {
        ActivityDistribution::from_shares("p", shares.iter().cloned().collect(), 100.0).unwrap()
    }

    fn districts(v: &[(&str, f64)]) -> DistrictPrevalence {
        DistrictPrevalence::new(v.iter().map(|(k, p)| (k.to_string(), *p)).collect()).unwrap()
    }

    fn secs(v: &[(&str, f64)]) -> BTreeMap<String, f64> {
        v.iter().map(|(k, s)| (k.to_string(), *s)).collect()
    }

    #[test]
    fn exposure_in_examples() {
        let f = field(vec![Some(0.2), Some(0.4), None]);
        assert_abs_diff_eq!(
            exposure_in(&cells(&[(0, 0.5), (1, 0.5)]), &f).unwrap(),
            0.3,
            epsilon = 1e-15
        );
        assert_eq!(exposure_in(&cells(&[(1, 1.0)]), &f), Some(0.4));
        assert_eq!(exposure_in(&cells(&[(2, 1.0)]), &f), None);
        // missing cells are renormalized away
        assert_abs_diff_eq!(
            exposure_in(&cells(&[(0, 0.5), (2, 0.5)]), &f).unwrap(),
            0.2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn exposure_out_examples() {
        let dp = districts(&[("D1", 0.2), ("D2", 0.4)]);
        assert_eq!(
            exposure_out(&secs(&[("D1", 2400.0)]), &districts(&[("D1", 0.25)])).unwrap(),
            Some(0.25)
        );
        assert_abs_diff_eq!(
            exposure_out(&secs(&[("D1", 1.0), ("D2", 3.0)]), &dp)
                .unwrap()
                .unwrap(),
            0.35,
            epsilon = 1e-15
        );
        assert_eq!(exposure_out(&BTreeMap::new(), &dp).unwrap(), None);
        assert!(matches!(
            exposure_out(&secs(&[("D9", 1.0)]), &dp),
            Err(Error::IncompleteTable(_))
        ));
    }

    #[test]
    fn exposure_overall_examples() {
        assert_abs_diff_eq!(
            exposure_overall(Some(0.3), Some(0.2), 0.75, 0.25).unwrap(),
            0.275,
            epsilon = 1e-15
        );
        assert_eq!(exposure_overall(Some(0.3), None, 1.0, 0.0), Some(0.3));
        assert_eq!(exposure_overall(None, Some(0.2), 0.0, 1.0), Some(0.2));
        assert_eq!(exposure_overall(Some(0.3), None, 0.6, 0.4), None);
        assert_eq!(exposure_overall(None, None, 0.0, 0.0), None);
    }

    #[test]
    fn exposure_home_examples() {
        let f = field(vec![Some(0.3), Some(0.6), None, Some(0.9)]);
        let dp = districts(&[("D1", 0.1)]);
        let prev = PlacePrevalence {
            field: &f,
            districts: &dp,
        };

        let d = places(&[(Place::Cell(0), 0.7), (Place::Cell(1), 0.3)]);
        let home = activity_space(&d, 50.0).unwrap();
        assert_eq!(exposure_home(&d, &home, prev).unwrap(), Some(0.3));

        let d = places(&[
            (Place::Cell(0), 0.4),
            (Place::Cell(1), 0.2),
            (Place::Cell(3), 0.15),
            (Place::District("D1".into()), 0.25),
        ]);
        let home = activity_space(&d, 50.0).unwrap();
        assert_eq!(
            home.cells,
            vec![Place::Cell(0), Place::District("D1".into())]
        );
        let home = ActivitySpace {
            gamma: 50.0,
            cells: vec![Place::Cell(0), Place::Cell(1)],
            captured: Some(0.6),
        };
        assert_abs_diff_eq!(
            exposure_home(&d, &home, prev).unwrap().unwrap(),
            0.4,
            epsilon = 1e-15
        );

        let d = places(&[(Place::Cell(2), 0.8), (Place::Cell(0), 0.2)]);
        let home = activity_space(&d, 50.0).unwrap();
        assert_eq!(exposure_home(&d, &home, prev).unwrap(), None);
    }

    #[test]
    fn outside_home_uses_district_prevalence() {
        let f = field(vec![Some(0.3)]);
        let dp = districts(&[("D1", 0.1), ("D2", 0.2)]);
        let prev = PlacePrevalence {
            field: &f,
            districts: &dp,
        };
        let d = places(&[
            (Place::District("D2".into()), 0.6),
            (Place::District("D1".into()), 0.1),
            (Place::Cell(0), 0.3),
        ]);
        let home = activity_space(&d, 50.0).unwrap();
        assert_eq!(
            classify_home(&d, &home),
            Some(HomeLocation::Outside("D2".into()))
        );
        assert_eq!(exposure_home(&d, &home, prev).unwrap(), Some(0.2));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<Option<f64>>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..8, 1usize..4).prop_flat_map(|(n_cells, n_d)| {
            (
                prop::collection::vec(prop::option::weighted(0.8, 0.0..1.0f64), n_cells),
                prop::collection::vec(0.0..1.0f64, n_cells),
                prop::collection::vec(0.0..1.0f64, n_d),
                prop::collection::vec(0.0..1000.0f64, n_d),
            )
        })
    }

    fn build(
        values: &[Option<f64>],
        weights: &[f64],
        dprev: &[f64],
        dsecs: &[f64],
    ) -> Option<(PrevalenceField, DistrictPrevalence, ParticipantActivity)> {
        let f = field(values.to_vec());
        let dp = DistrictPrevalence::new(
            dprev
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("D{i}"), *p))
                .collect(),
        )
        .ok()?;
        let cell_secs: BTreeMap<CellId, f64> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| (i, w * 1000.0))
            .collect();
        let district_seconds: BTreeMap<String, f64> = dsecs
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("D{i}"), *s))
            .collect();
        let cells = ActivityDistribution::from_durations("p", cell_secs.clone()).ok();
        let inside: f64 = cell_secs.values().sum();
        let outside: f64 = district_seconds.values().sum();
        let total = inside + outside;
        let places = place_distribution("p", &cell_secs, &district_seconds).ok();
        let act = ParticipantActivity {
            person_id: "p".into(),
            cells,
            district_seconds,
            fraction_in: (total > 0.0).then(|| inside / total),
            fraction_out: (total > 0.0).then(|| outside / total),
            places,
        };
        Some((f, dp, act))
    }

    proptest! {
        #[test]
        fn measures_are_convex((values, weights, dprev, dsecs) in arb_case()) {
            let (f, dp, act) = build(&values, &weights, &dprev, &dsecs).unwrap();
            let prof = exposure_profile(&act, &f, &dp, HOME_LEVEL).unwrap();
            let all: Vec<f64> = values.iter().flatten().chain(dprev.iter()).copied().collect();
            let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for e in [prof.e_in, prof.e_out, prof.e_overall, prof.e_home].into_iter().flatten() {
                prop_assert!(e >= lo - 1e-12 && e <= hi + 1e-12);
            }
            if let (Some(a), Some(b)) = (prof.fraction_in, prof.fraction_out) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn uniform_prevalence_is_reproduced(p in 0.0..1.0f64, weights in prop::collection::vec(0.01..1.0f64, 1..6), dsecs in prop::collection::vec(1.0..100.0f64, 1..3)) {
            let values = vec![Some(p); weights.len()];
            let dprev = vec![p; dsecs.len()];
            let (f, dp, act) = build(&values, &weights, &dprev, &dsecs).unwrap();
            let prof = exposure_profile(&act, &f, &dp, HOME_LEVEL).unwrap();
            for e in [prof.e_in, prof.e_out, prof.e_overall, prof.e_home] {
                prop_assert!((e.unwrap() - p).abs() <= 1e-12);
            }
        }

        #[test]
        fn scale_equivariance((values, weights, dprev, dsecs) in arb_case(), c in 0.01..1.0f64) {
            let (f, dp, act) = build(&values, &weights, &dprev, &dsecs).unwrap();
            let base = exposure_profile(&act, &f, &dp, HOME_LEVEL).unwrap();
            let f2 = PrevalenceField { values: f.values.iter().map(|v| v.map(|x| x * c)).collect(), ..f.clone() };
            let scaled = exposure_profile(&act, &f2, &dp.scaled(c), HOME_LEVEL).unwrap();
            let pairs = [(base.e_in, scaled.e_in), (base.e_out, scaled.e_out), (base.e_overall, scaled.e_overall), (base.e_home, scaled.e_home)];
            for (a, b) in pairs {
                match (a, b) {
                    (Some(a), Some(b)) => prop_assert!((a * c - b).abs() <= 1e-12),
                    (None, None) => {}
                    _ => prop_assert!(false, "definedness changed under scaling"),
                }
            }
        }
    }
}
