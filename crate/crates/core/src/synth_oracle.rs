//! Synthetic cohorts and trajectories with known ground truth, and the exact
//! occupancy oracle used to check the activity estimators.
//!
//! All geometry is planar metres with the grid origin at `(0, 0)`. The study
//! area is an irregular polygon inside the grid window; districts are
//! rectangles east of the window.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::{ActivityDistribution, Fix, FixSequence, Timestamp};
use crate::error::{Error, Result};
use crate::hiv_imputation::{
    age_at_period_start, AgeGroup, Period, RateRow, RateTable, Rates, Sex, StatusSequence,
    SurveillanceRecord, TestResult,
};
use crate::prevalence_field::Residence;
use crate::seed;
use crate::spatial_grid::{CellId, Grid, PlanarPoint, Polygon, Region, RegionIndex};

/// Duration family for dwell and gap lengths, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DurationDist {
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

impl DurationDist {
    pub fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            DurationDist::Uniform { lo, hi } => {
                lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo && hi > 0.0
            }
            DurationDist::Exponential { mean } => mean.is_finite() && mean > 0.0,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{name}: invalid duration distribution {self:?}"
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DurationDist::Uniform { lo, hi } if lo == hi => lo,
            DurationDist::Uniform { lo, hi } => rng.gen_range(lo..hi),
            DurationDist::Exponential { mean } => {
                Exp::new(1.0 / mean).expect("validated mean").sample(rng)
            }
        }
    }
}

/// A disc in planar metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub center_x: f64,
    pub center_y: f64,
    pub radius_m: f64,
}

impl Zone {
    pub fn center(&self) -> PlanarPoint {
        PlanarPoint::new(self.center_x, self.center_y)
    }

    pub fn contains(&self, p: PlanarPoint) -> bool {
        self.center().distance(&p) <= self.radius_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Geographic position of the grid origin.
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub cell_size_m: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    pub n_districts: usize,
    /// District prevalences are drawn uniformly from this range.
    pub district_prevalence: (f64, f64),
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            origin_lon: 32.0,
            origin_lat: -28.5,
            cell_size_m: 500.0,
            n_cols: 60,
            n_rows: 60,
            n_districts: 4,
            district_prevalence: (0.15, 0.35),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_participants: usize,
    pub first_period: Period,
    pub last_period: Period,
    /// Probability of attending the test in any period under observation.
    pub attendance: f64,
    pub incidence_female: f64,
    pub incidence_male: f64,
    /// Prevalence at `min_age`.
    pub base_prevalence_female: f64,
    pub base_prevalence_male: f64,
    pub min_age: i32,
    pub max_age: i32,
    pub age_group_width: i32,
    pub entry_age: (i32, i32),
    pub n_homesteads: usize,
    /// Share of homesteads placed in districts.
    pub homestead_outside_share: f64,
    pub hotspot: Option<Zone>,
    /// Probability that a person positive at exit lives in a hotspot homestead.
    pub hotspot_share: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_participants: 5000,
            first_period: 2012,
            last_period: 2018,
            attendance: 0.6,
            incidence_female: 0.04,
            incidence_male: 0.02,
            base_prevalence_female: 0.08,
            base_prevalence_male: 0.04,
            min_age: 15,
            max_age: 64,
            age_group_width: 5,
            entry_age: (15, 35),
            n_homesteads: 1500,
            homestead_outside_share: 0.03,
            hotspot: Some(Zone {
                center_x: 21_000.0,
                center_y: 18_000.0,
                radius_m: 3_500.0,
            }),
            hotspot_share: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioGroup {
    pub name: String,
    /// Relative size.
    pub share: f64,
    /// Homes are drawn inside this zone when set.
    pub home_zone: Option<Zone>,
    /// Probability that a non-home anchor lies in a district.
    pub outside_probability: f64,
}

impl Default for ScenarioGroup {
    fn default() -> Self {
        ScenarioGroup {
            name: "all".into(),
            share: 1.0,
            home_zone: None,
            outside_probability: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub n_participants: usize,
    /// Unix seconds of the first fix.
    pub start: Timestamp,
    pub days: f64,
    pub fix_interval_s: f64,
    pub n_anchors: usize,
    /// Maximum distance of local anchors from home.
    pub anchor_radius_m: f64,
    pub dwell: DurationDist,
    pub speed_m_s: f64,
    pub return_home_probability: f64,
    /// Probability that a gap starts at any fix.
    pub gap_probability: f64,
    pub gap_length: DurationDist,
    pub age: (i32, i32),
    pub groups: Vec<ScenarioGroup>,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            n_participants: 200,
            start: 1_546_300_800,
            days: 7.0,
            fix_interval_s: 300.0,
            n_anchors: 4,
            anchor_radius_m: 3_000.0,
            dwell: DurationDist::Exponential { mean: 4.0 * 3600.0 },
            speed_m_s: 10.0,
            return_home_probability: 0.5,
            gap_probability: 0.002,
            gap_length: DurationDist::Uniform {
                lo: 3600.0,
                hi: 6.0 * 3600.0,
            },
            age: (18, 30),
            groups: vec![ScenarioGroup::default()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub cohort: CohortConfig,
    pub trajectories: TrajectoryConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            world: WorldConfig::default(),
            cohort: CohortConfig::default(),
            trajectories: TrajectoryConfig::default(),
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidArgument(format!(
            "{name} = {v} is not a probability"
        )));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.world;
        crate::spatial_grid::Projection::at_origin(w.origin_lon, w.origin_lat)?;
        Grid::new(
            PlanarPoint::new(0.0, 0.0),
            w.cell_size_m,
            w.n_cols,
            w.n_rows,
        )?;
        check_unit("world.district_prevalence.0", w.district_prevalence.0)?;
        check_unit("world.district_prevalence.1", w.district_prevalence.1)?;
        if w.district_prevalence.0 > w.district_prevalence.1 {
            return Err(Error::InvalidArgument(
                "world.district_prevalence range is reversed".into(),
            ));
        }
        let c = &self.cohort;
        for (n, v) in [
            ("cohort.attendance", c.attendance),
            ("cohort.incidence_female", c.incidence_female),
            ("cohort.incidence_male", c.incidence_male),
            ("cohort.base_prevalence_female", c.base_prevalence_female),
            ("cohort.base_prevalence_male", c.base_prevalence_male),
            ("cohort.homestead_outside_share", c.homestead_outside_share),
            ("cohort.hotspot_share", c.hotspot_share),
        ] {
            check_unit(n, v)?;
        }
        if c.last_period < c.first_period {
            return Err(Error::InvalidArgument(
                "cohort.last_period precedes cohort.first_period".into(),
            ));
        }
        if c.age_group_width < 1 || c.min_age > c.entry_age.0 || c.entry_age.0 > c.entry_age.1 {
            return Err(Error::InvalidArgument(
                "cohort age settings are inconsistent".into(),
            ));
        }
        if c.entry_age.1 + (c.last_period - c.first_period) + 1 > c.max_age {
            return Err(Error::InvalidArgument(
                "cohort.max_age does not cover ages reached during follow-up".into(),
            ));
        }
        if c.n_homesteads == 0 && c.n_participants > 0 {
            return Err(Error::InvalidArgument(
                "cohort.n_homesteads must be positive".into(),
            ));
        }
        let t = &self.trajectories;
        if !(t.days > 0.0
            && t.fix_interval_s > 0.0
            && t.speed_m_s > 0.0
            && t.anchor_radius_m >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "trajectory durations, interval and speed must be positive".into(),
            ));
        }
        if t.n_anchors == 0 || t.age.0 > t.age.1 {
            return Err(Error::InvalidArgument(
                "trajectories need at least one anchor and a valid age range".into(),
            ));
        }
        check_unit(
            "trajectories.return_home_probability",
            t.return_home_probability,
        )?;
        check_unit("trajectories.gap_probability", t.gap_probability)?;
        t.dwell.validate("trajectories.dwell")?;
        t.gap_length.validate("trajectories.gap_length")?;
        if t.groups.is_empty() || t.groups.iter().any(|g| !(g.share > 0.0)) {
            return Err(Error::InvalidArgument(
                "trajectory groups need positive shares".into(),
            ));
        }
        for g in &t.groups {
            check_unit(
                "trajectories.groups.outside_probability",
                g.outside_probability,
            )?;
        }
        Ok(())
    }
}

/// Grid, study area and districts.
#[derive(Debug, Clone)]
pub struct World {
    pub grid: Grid,
    pub regions: RegionIndex,
    pub district_prevalence: BTreeMap<String, f64>,
}

impl World {
    fn study_area(&self) -> &Region {
        self.regions.study_area()
    }

    fn uniform_in<R: Rng + ?Sized>(region: &Region, rng: &mut R) -> PlanarPoint {
        let (lo, hi) = region
            .polygons
            .iter()
            .map(Polygon::bbox)
            .reduce(|a, b| {
                (
                    PlanarPoint::new(a.0.x.min(b.0.x), a.0.y.min(b.0.y)),
                    PlanarPoint::new(a.1.x.max(b.1.x), a.1.y.max(b.1.y)),
                )
            })
            .expect("region has a polygon");
        loop {
            let p = PlanarPoint::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            if region.contains(p) {
                return p;
            }
        }
    }

    fn uniform_in_zone<R: Rng + ?Sized>(&self, zone: &Zone, rng: &mut R) -> PlanarPoint {
        for _ in 0..10_000 {
            let r = zone.radius_m * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..2.0 * PI);
            let p = zone.center().translate(r * a.cos(), r * a.sin());
            if self.study_area().contains(p) {
                return p;
            }
        }
        zone.center()
    }
}

/// Lay out the study area and districts for a grid window.
pub fn build_world(cfg: &WorldConfig, seed: u64) -> Result<World> {
    let grid = Grid::new(
        PlanarPoint::new(0.0, 0.0),
        cfg.cell_size_m,
        cfg.n_cols,
        cfg.n_rows,
    )?;
    let (w, h) = (grid.width(), grid.height());
    let c = PlanarPoint::new(w / 2.0, h / 2.0);
    // a lobed, non-convex outline inside the window
    let n = 36;
    let ring: Vec<PlanarPoint> = (0..n)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n as f64;
            let r = 0.42 * (1.0 + 0.12 * (3.0 * a).cos() + 0.05 * (5.0 * a + 1.0).sin());
            PlanarPoint::new(c.x + r * w * a.cos(), c.y + r * h * a.sin())
        })
        .collect();
    let study = Region::from(Polygon::new(ring)?);
    let mut districts = BTreeMap::new();
    let mut prevalence = BTreeMap::new();
    let mut rng = seed::stream(seed, &[b"world"]);
    let band = h / cfg.n_districts.max(1) as f64;
    for i in 0..cfg.n_districts {
        let x0 = w + 2_000.0;
        let x1 = x0 + w.max(10_000.0);
        let (y0, y1) = (i as f64 * band, (i + 1) as f64 * band);
        let rect = vec![
            PlanarPoint::new(x0, y0),
            PlanarPoint::new(x1, y0),
            PlanarPoint::new(x1, y1),
            PlanarPoint::new(x0, y1),
        ];
        let id = format!("D{:02}", i + 1);
        districts.insert(id.clone(), Region::from(Polygon::new(rect)?));
        let (lo, hi) = cfg.district_prevalence;
        prevalence.insert(id, if hi > lo { rng.gen_range(lo..hi) } else { lo });
    }
    Ok(World {
        grid,
        regions: RegionIndex::new(study, districts)?,
        district_prevalence: prevalence,
    })
}

/// Generating rates as a table: constant incidence per sex, prevalence by
/// age group from `1 − (1 − μ₀)(1 − λ)^(lo − min_age)`.
pub fn synth_rate_table(c: &CohortConfig) -> Result<RateTable> {
    let mut rows = Vec::new();
    for sex in [Sex::Female, Sex::Male] {
        let (lambda, mu0) = match sex {
            Sex::Female => (c.incidence_female, c.base_prevalence_female),
            Sex::Male => (c.incidence_male, c.base_prevalence_male),
        };
        let mut lo = c.min_age;
        while lo <= c.max_age {
            let hi = (lo + c.age_group_width - 1).min(c.max_age);
            let prevalence = 1.0 - (1.0 - mu0) * (1.0 - lambda).powi(lo - c.min_age);
            for period in c.first_period..=c.last_period {
                rows.push(RateRow {
                    sex,
                    age_group: AgeGroup::new(lo, hi)?,
                    period,
                    rates: Rates {
                        prevalence,
                        incidence: lambda,
                    },
                });
            }
            lo = hi + 1;
        }
    }
    RateTable::new(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueStatus {
    pub person_id: String,
    pub positive_at_entry: bool,
    /// First positive period after entry; `None` if never or already
    /// positive at entry.
    pub seroconversion: Option<Period>,
    pub statuses: StatusSequence,
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub records: Vec<SurveillanceRecord>,
    pub rates: RateTable,
    pub truth: Vec<TrueStatus>,
    pub homesteads: BTreeMap<String, PlanarPoint>,
    pub residences: Vec<Residence>,
    pub world: World,
}

fn person_rng(seed: u64, kind: &[u8], id: &str) -> seed::Rng {
    seed::stream(seed, &[kind, id.as_bytes()])
}

/// Simulate true status paths, test attendance, homesteads and residences.
pub fn gen_cohort(cfg: &SynthConfig) -> Result<SynthCohort> {
    cfg.validate()?;
    let c = &cfg.cohort;
    let world = build_world(&cfg.world, cfg.seed)?;
    let rates = synth_rate_table(c)?;

    let mut hrng = seed::stream(cfg.seed, &[b"homesteads"]);
    let mut homesteads = BTreeMap::new();
    let district_regions: Vec<&Region> = world.regions.districts().values().collect();
    for i in 0..c.n_homesteads {
        let p = if !district_regions.is_empty() && hrng.gen::<f64>() < c.homestead_outside_share {
            World::uniform_in(
                district_regions[hrng.gen_range(0..district_regions.len())],
                &mut hrng,
            )
        } else {
            World::uniform_in(world.study_area(), &mut hrng)
        };
        homesteads.insert(format!("H{:05}", i + 1), p);
    }
    let ids: Vec<&String> = homesteads.keys().collect();
    let hot: Vec<&String> = match &c.hotspot {
        Some(z) => homesteads
            .iter()
            .filter(|(_, p)| z.contains(**p))
            .map(|(id, _)| id)
            .collect(),
        None => Vec::new(),
    };

    let people: Vec<(SurveillanceRecord, TrueStatus, Vec<Residence>)> = (0..c.n_participants)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let id = format!("P{:05}", i + 1);
            let mut rng = person_rng(cfg.seed, b"cohort", &id);
            let sex = if rng.gen::<bool>() {
                Sex::Female
            } else {
                Sex::Male
            };
            let spread = c.last_period - c.first_period;
            let entry = c.first_period + rng.gen_range(0..=spread / 3);
            let exit = (c.last_period - rng.gen_range(0..=spread / 3)).max(entry);
            let age = rng.gen_range(c.entry_age.0..=c.entry_age.1);
            let birth = NaiveDate::from_ymd_opt(entry - age - 1, 1, 2).expect("valid year")
                + Duration::days(rng.gen_range(0..364));
            let mut statuses = Vec::with_capacity((exit - entry + 1) as usize);
            let mut positive = false;
            let mut positive_at_entry = false;
            let mut seroconversion = None;
            for t in entry..=exit {
                let r = rates.lookup(sex, age_at_period_start(birth, t), t)?;
                if t == entry {
                    positive = rng.gen::<f64>() < r.prevalence;
                    positive_at_entry = positive;
                } else if !positive && rng.gen::<f64>() < r.incidence {
                    positive = true;
                    seroconversion = Some(t);
                }
                statuses.push(positive as u8);
            }
            let tests: Vec<(Period, TestResult)> = (entry..=exit)
                .zip(&statuses)
                .filter(|_| rng.gen::<f64>() < c.attendance)
                .map(|(t, s)| {
                    (
                        t,
                        if *s == 1 {
                            TestResult::Positive
                        } else {
                            TestResult::Negative
                        },
                    )
                })
                .collect();
            let ever_positive = *statuses.last().unwrap_or(&0) == 1;
            let home = if ever_positive && !hot.is_empty() && rng.gen::<f64>() < c.hotspot_share {
                hot[rng.gen_range(0..hot.len())]
            } else {
                ids[rng.gen_range(0..ids.len())]
            };
            let residences = (entry..=exit)
                .map(|t| Residence {
                    person_id: id.clone(),
                    homestead_id: home.clone(),
                    period: t,
                })
                .collect();
            let record = SurveillanceRecord {
                person_id: id.clone(),
                sex,
                birth_date: birth,
                entry_period: entry,
                exit_period: exit,
                tests,
            }
            .validated()?;
            let truth = TrueStatus {
                person_id: id.clone(),
                positive_at_entry,
                seroconversion,
                statuses: StatusSequence {
                    person_id: id,
                    first_period: entry,
                    statuses,
                },
            };
            Ok((record, truth, residences))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(people.len());
    let mut truth = Vec::with_capacity(people.len());
    let mut residences = Vec::new();
    for (r, t, res) in people {
        records.push(r);
        truth.push(t);
        residences.extend(res);
    }
    Ok(SynthCohort {
        records,
        rates,
        truth,
        homesteads,
        residences,
        world,
    })
}

/// Piecewise-linear continuous path: `(time, position)` vertices with
/// non-decreasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePath {
    pub person_id: String,
    pub vertices: Vec<(f64, PlanarPoint)>,
}

impl TruePath {
    /// Position at time `t`, clamped to the path's time span.
    pub fn position(&self, t: f64) -> PlanarPoint {
        let v = &self.vertices;
        if t <= v[0].0 {
            return v[0].1;
        }
        let i = v.partition_point(|(s, _)| *s <= t);
        if i >= v.len() {
            return v[v.len() - 1].1;
        }
        let (t0, p0) = v[i - 1];
        let (t1, p1) = v[i];
        if t1 <= t0 {
            return p1;
        }
        let f = (t - t0) / (t1 - t0);
        PlanarPoint::new(p0.x + f * (p1.x - p0.x), p0.y + f * (p1.y - p0.y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParticipant {
    pub person_id: String,
    pub sex: Sex,
    pub birth_date: NaiveDate,
    pub group: String,
    pub home: PlanarPoint,
}

#[derive(Debug, Clone)]
pub struct SynthTrajectories {
    pub participants: Vec<TrajectoryParticipant>,
    pub fixes: Vec<FixSequence>,
    pub paths: Vec<TruePath>,
}

/// Group of participant `i` out of `n`, with sizes proportional to shares.
fn group_of(i: usize, n: usize, groups: &[ScenarioGroup]) -> usize {
    let total: f64 = groups.iter().map(|g| g.share).sum();
    let u = (i as f64 + 0.5) / n as f64 * total;
    let mut acc = 0.0;
    for (j, g) in groups.iter().enumerate() {
        acc += g.share;
        if u < acc {
            return j;
        }
    }
    groups.len() - 1
}

fn gen_path<R: Rng + ?Sized>(
    t: &TrajectoryConfig,
    world: &World,
    group: &ScenarioGroup,
    id: &str,
    rng: &mut R,
) -> (PlanarPoint, TruePath) {
    let home = match &group.home_zone {
        Some(z) => world.uniform_in_zone(z, rng),
        None => World::uniform_in(world.study_area(), rng),
    };
    let districts: Vec<&Region> = world.regions.districts().values().collect();
    let mut anchors = vec![home];
    for _ in 1..t.n_anchors {
        let a = if !districts.is_empty() && rng.gen::<f64>() < group.outside_probability {
            World::uniform_in(districts[rng.gen_range(0..districts.len())], rng)
        } else {
            let mut p = home;
            for _ in 0..1000 {
                let r = t.anchor_radius_m * rng.gen::<f64>().sqrt();
                let a = rng.gen_range(0.0..2.0 * PI);
                let q = home.translate(r * a.cos(), r * a.sin());
                if world.study_area().contains(q) {
                    p = q;
                    break;
                }
            }
            p
        };
        anchors.push(a);
    }

    let start = t.start as f64;
    let end = start + t.days * 86_400.0;
    let mut now = start;
    let mut at = 0usize;
    let mut vertices = vec![(now, home)];
    while now < end {
        let stay = (now + t.dwell.sample(rng)).min(end);
        if stay > now {
            vertices.push((stay, anchors[at]));
            now = stay;
        }
        if now >= end || anchors.len() == 1 {
            continue;
        }
        let next = if at == 0 {
            rng.gen_range(1..anchors.len())
        } else if rng.gen::<f64>() < t.return_home_probability || anchors.len() == 2 {
            0
        } else {
            let k = rng.gen_range(0..anchors.len() - 2);
            // skip home and the current anchor
            (1..anchors.len())
                .filter(|&j| j != at)
                .nth(k)
                .expect("enough anchors")
        };
        let from = anchors[at];
        let to = anchors[next];
        let dur = from.distance(&to) / t.speed_m_s;
        if now + dur > end {
            let f = (end - now) / dur;
            vertices.push((
                end,
                PlanarPoint::new(from.x + f * (to.x - from.x), from.y + f * (to.y - from.y)),
            ));
            now = end;
        } else {
            now += dur;
            vertices.push((now, to));
        }
        at = next;
    }
    (
        home,
        TruePath {
            person_id: id.to_string(),
            vertices,
        },
    )
}

/// Fixes on the path at every `fix_interval_s`, with gaps removing runs of
/// fixes.
fn sample_fixes<R: Rng + ?Sized>(
    t: &TrajectoryConfig,
    path: &TruePath,
    rng: &mut R,
) -> Result<FixSequence> {
    let start = t.start as f64;
    let end = start + t.days * 86_400.0;
    let mut fixes = Vec::new();
    let mut k = 0u64;
    let mut skip_until = f64::NEG_INFINITY;
    loop {
        let ts = start + k as f64 * t.fix_interval_s;
        if ts > end {
            break;
        }
        k += 1;
        let ts = ts.round();
        if ts < skip_until {
            continue;
        }
        fixes.push(Fix {
            t: ts as Timestamp,
            p: path.position(ts),
        });
        if t.gap_probability > 0.0 && rng.gen::<f64>() < t.gap_probability {
            skip_until = ts + t.gap_length.sample(rng);
        }
    }
    FixSequence::new(path.person_id.clone(), fixes)
}

/// Anchor-based movement sampled at a fixed interval, with the continuous
/// path kept as truth.
pub fn gen_trajectories(cfg: &SynthConfig, world: &World) -> Result<SynthTrajectories> {
    cfg.validate()?;
    let t = &cfg.trajectories;
    let n = t.n_participants;
    let out: Vec<(TrajectoryParticipant, FixSequence, TruePath)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let id = format!("G{:04}", i + 1);
            let mut rng = person_rng(cfg.seed, b"trajectory", &id);
            let group = &t.groups[group_of(i, n, &t.groups)];
            let sex = if rng.gen::<bool>() {
                Sex::Female
            } else {
                Sex::Male
            };
            let start_date = chrono::DateTime::from_timestamp(t.start, 0)
                .ok_or_else(|| Error::InvalidArgument(format!("start {} out of range", t.start)))?
                .date_naive();
            let age_days = rng.gen_range(t.age.0 as i64 * 365 + 1..(t.age.1 as i64 + 1) * 365);
            let birth_date = start_date - Duration::days(age_days);
            let (home, path) = gen_path(t, world, group, &id, &mut rng);
            let fixes = sample_fixes(t, &path, &mut rng)?;
            let p = TrajectoryParticipant {
                person_id: id,
                sex,
                birth_date,
                group: group.name.clone(),
                home,
            };
            Ok((p, fixes, path))
        })
        .collect::<Result<_>>()?;
    let mut res = SynthTrajectories {
        participants: Vec::new(),
        fixes: Vec::new(),
        paths: Vec::new(),
    };
    for (p, f, path) in out {
        res.participants.push(p);
        res.fixes.push(f);
        res.paths.push(path);
    }
    Ok(res)
}

/// Exact per-cell occupancy of a piecewise-linear path, normalized over the
/// time spent inside the grid window.
///
/// Each segment is cut at every grid line it crosses; each piece lies in one
/// cell, found by locating its midpoint (same half-open convention as
/// [`Grid::locate`]).
pub fn true_occupancy(path: &TruePath, grid: &Grid) -> Result<ActivityDistribution<CellId>> {
    let v = &path.vertices;
    if v.len() < 2 || !(v[v.len() - 1].0 > v[0].0) {
        return Err(Error::InvalidArgument(format!(
            "{}: path has zero duration",
            path.person_id
        )));
    }
    let o = grid.origin();
    let cs = grid.cell_size();
    let mut durations: BTreeMap<CellId, f64> = BTreeMap::new();
    let mut cuts: Vec<f64> = Vec::new();
    for w in v.windows(2) {
        let (t0, p0) = w[0];
        let (t1, p1) = w[1];
        let dt = t1 - t0;
        if dt < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{}: path times decrease",
                path.person_id
            )));
        }
        if dt == 0.0 {
            continue;
        }
        cuts.clear();
        cuts.extend([0.0, 1.0]);
        for (a, b, origin, n) in [
            (p0.x, p1.x, o.x, grid.n_cols()),
            (p0.y, p1.y, o.y, grid.n_rows()),
        ] {
            if a == b {
                continue;
            }
            for i in 0..=n {
                let s = (origin + i as f64 * cs - a) / (b - a);
                if s > 0.0 && s < 1.0 {
                    cuts.push(s);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for c in cuts.windows(2) {
            let m = 0.5 * (c[0] + c[1]);
            let mid = PlanarPoint::new(p0.x + m * (p1.x - p0.x), p0.y + m * (p1.y - p0.y));
            if let Some(cell) = grid.locate(mid) {
                *durations.entry(cell).or_insert(0.0) += (c[1] - c[0]) * dt;
            }
        }
    }
    ActivityDistribution::from_durations(path.person_id.clone(), durations)
}
