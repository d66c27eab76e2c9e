//! The pipeline stages on typed data, and their CSV renderings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ctxexp_core::activity::{
    activity_space, collective_space, cpt_estimate, pool, segment, split_in_out,
    ActivityDistribution, ActivitySpace, FixSequence, RankedShares, Timestamp,
};
use ctxexp_core::cohort_analysis::{
    age_at, cluster_deviations, coverage_curves, deviation_curve, deviation_levels,
    export_design_table, log_activity_export, overlap_map, paired_t_test, risk_stratify,
    Demographics, Resample,
};
use ctxexp_core::exposure::{
    classify_home, exposure_profile, DistrictPrevalence, ExposureProfile, HomeLocation,
    ParticipantActivity, PlacePrevalence,
};
use ctxexp_core::hiv_imputation::{
    impute_cohort, BridgeSampling, Period, RateTable, Sex, StatusSequence, SurveillanceRecord,
};
use ctxexp_core::prevalence_field::{
    aggregate_homesteads, prevalence_field, KernelParams, PrevalenceField, Residence,
};
use ctxexp_core::seed::derive_seed;
use ctxexp_core::spatial_grid::{CellId, Grid, PlanarPoint, RegionIndex};
use rayon::prelude::*;

use crate::config::{AnalysisConfig, Units};
use crate::error::{CliError, CliResult, StageContext};
use crate::io::{self, num, opt_num, CsvOut, ExposureRow, Participant, Source, TimeSplitRow};
use crate::output::{Outputs, StageTimer};

// ---- impute ---------------------------------------------------------------

pub fn impute(
    records: &[SurveillanceRecord],
    rates: &RateTable,
    seed: u64,
    replicates: usize,
    bridge: BridgeSampling,
    timer: &mut StageTimer,
) -> CliResult<Vec<Vec<StatusSequence>>> {
    let datasets = impute_cohort(records, rates, seed, replicates, bridge).stage("impute")?;
    timer.rows(datasets.iter().flatten().map(|s| s.statuses.len()).sum());
    Ok(datasets)
}

/// `status_<r>.csv` for r = 1..=M.
pub fn write_status(out: &mut Outputs, datasets: &[Vec<StatusSequence>]) {
    for (r, ds) in datasets.iter().enumerate() {
        let mut t = CsvOut::new(&["person_id", "period", "status"]);
        for seq in ds {
            for (p, s) in seq.periods() {
                t.push(vec![seq.person_id.clone(), p.to_string(), s.to_string()]);
            }
        }
        out.csv(format!("status_{}.csv", r + 1), &t);
    }
}

// ---- prevalence -----------------------------------------------------------

/// Latest period with any residence.
pub fn default_period(residents: &[Residence]) -> Option<Period> {
    residents.iter().map(|r| r.period).max()
}

#[allow(clippy::too_many_arguments)]
pub fn prevalence(
    grid: &Grid,
    kernel: &KernelParams,
    homesteads: &BTreeMap<String, PlanarPoint>,
    residents: &[Residence],
    datasets: &[Vec<StatusSequence>],
    period: Period,
    regions: Option<&RegionIndex>,
    timer: &mut StageTimer,
) -> CliResult<PrevalenceField> {
    let (years, stats) = aggregate_homesteads(homesteads, residents, datasets, period, regions);
    if stats.outside_study_area > 0 {
        timer.warn(format!(
            "{} residents outside the study area excluded",
            stats.outside_study_area
        ));
    }
    if stats.unknown_homestead > 0 {
        timer.warn(format!(
            "{} residents in unknown homesteads excluded",
            stats.unknown_homestead
        ));
    }
    if stats.without_status > 0 {
        timer.warn(format!(
            "{} residents without an imputed status in {period} excluded",
            stats.without_status
        ));
    }
    if years.is_empty() {
        return Err(CliError::Compute {
            stage: "prevalence".into(),
            message: format!("no residents with status in period {period}"),
        });
    }
    let mut field = prevalence_field(grid, &years, kernel).stage("prevalence")?;
    field.period = period;
    timer.rows(field.values.len());
    let missing = field.n_missing();
    if missing > 0 {
        timer.warn(format!(
            "{missing} cells have no resident within the kernel radius"
        ));
    }
    Ok(field)
}

pub fn prevalence_file_name(period: Period) -> String {
    format!("prevalence_{period}.csv")
}

pub fn write_prevalence(out: &mut Outputs, field: &PrevalenceField, units: Units) {
    let mut t = CsvOut::new(&["cell_id", "center_x", "center_y", "prevalence"]);
    for (cell, v) in field.values.iter().enumerate() {
        let c = field.grid.centroid(cell);
        t.push(vec![
            cell.to_string(),
            num(c.x),
            num(c.y),
            opt_num(v.map(|p| units.write(p))),
        ]);
    }
    out.csv(prevalence_file_name(field.period), &t);
}

// ---- activity -------------------------------------------------------------

/// Per-participant result of segmentation, region routing and CPT.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityRecord {
    pub split: TimeSplitRow,
    pub cell_seconds: BTreeMap<CellId, f64>,
    pub district_seconds: BTreeMap<String, f64>,
}

impl ActivityRecord {
    pub fn person_id(&self) -> &str {
        &self.split.person_id
    }

    pub fn participant(&self) -> CliResult<ParticipantActivity> {
        ParticipantActivity::from_parts(
            &self.split.person_id,
            &self.cell_seconds,
            &self.district_seconds,
            self.split.inside_seconds,
            self.split.outside_seconds,
        )
        .stage("activity")
    }

    pub fn cells(&self) -> Option<ActivityDistribution<CellId>> {
        ActivityDistribution::from_durations(
            self.split.person_id.clone(),
            self.cell_seconds.clone(),
        )
        .ok()
    }
}

fn activity_one(
    fixes: &FixSequence,
    grid: &Grid,
    regions: &RegionIndex,
    gap: f64,
) -> ActivityRecord {
    let segs = segment(fixes, gap);
    let split = split_in_out(&segs, regions);
    let cell_seconds = cpt_estimate(&split.inside, grid)
        .map(|d| d.durations())
        .unwrap_or_default();
    ActivityRecord {
        split: TimeSplitRow {
            person_id: fixes.person_id.clone(),
            inside_seconds: split.inside_seconds,
            outside_seconds: split.outside_seconds(),
            unmapped_seconds: split.unmapped_seconds,
            straddling_seconds: split.straddling_seconds,
            gap_count: segs.gap_count,
            gap_seconds: segs.gap_seconds,
            longest_block_start: segs.longest_block().map(|(s, _)| s),
        },
        cell_seconds,
        district_seconds: split.district_seconds,
    }
}

/// Participants without any classified same-place time are skipped.
pub fn activity(
    fixes: &[FixSequence],
    grid: &Grid,
    regions: &RegionIndex,
    gap_seconds: f64,
    timer: &mut StageTimer,
) -> Vec<ActivityRecord> {
    let all: Vec<ActivityRecord> = fixes
        .par_iter()
        .map(|f| activity_one(f, grid, regions, gap_seconds))
        .collect();
    let mut kept = Vec::with_capacity(all.len());
    for rec in all {
        if rec.cell_seconds.is_empty() && rec.district_seconds.is_empty() {
            timer.warn(format!(
                "participant {} skipped: no same-place time outside gaps",
                rec.person_id()
            ));
        } else {
            kept.push(rec);
        }
    }
    timer.rows(kept.len());
    kept
}

pub const TIME_SPLIT_FILE: &str = "time_split.csv";
pub const SPACES_FILE: &str = "spaces.csv";

pub fn write_activity(
    out: &mut Outputs,
    records: &[ActivityRecord],
    gammas: &[f64],
) -> CliResult<()> {
    let mut split = CsvOut::new(io::TIME_SPLIT.required);
    let mut spaces = CsvOut::new(&["person_id", "gamma", "n_cells", "captured"]);
    for rec in records {
        let id = rec.person_id();
        let s = &rec.split;
        split.push(vec![
            id.to_string(),
            num(s.inside_seconds),
            num(s.outside_seconds),
            num(s.unmapped_seconds),
            num(s.straddling_seconds),
            s.gap_count.to_string(),
            num(s.gap_seconds),
            s.longest_block_start
                .map(io::format_timestamp)
                .unwrap_or_default(),
        ]);
        let mut cells = CsvOut::new(io::ACTIVITY.required);
        if let Some(dist) = rec.cells() {
            for (c, secs) in &rec.cell_seconds {
                cells.push(vec![c.to_string(), num(dist.share(c)), num(*secs)]);
            }
            let ranked = RankedShares::new(&dist).stage("activity")?;
            for &g in gammas {
                let space = ranked.space(g).stage("activity")?;
                spaces.push(vec![
                    id.to_string(),
                    num(g),
                    space.len().to_string(),
                    opt_num(space.captured),
                ]);
            }
        }
        out.csv(format!("activity_{id}.csv"), &cells);
        let mut districts = CsvOut::new(io::DISTRICTS.required);
        for (d, secs) in &rec.district_seconds {
            districts.push(vec![d.clone(), num(*secs)]);
        }
        out.csv(format!("districts_{id}.csv"), &districts);
    }
    out.csv(TIME_SPLIT_FILE, &split);
    out.csv(SPACES_FILE, &spaces);
    Ok(())
}

/// Read an activity directory back, listing it through `time_split.csv`.
/// Every file read is returned for the manifest.
pub fn load_activity_dir(dir: &Path) -> CliResult<(Vec<ActivityRecord>, Vec<Source>)> {
    let split_src = Source::read(&dir.join(TIME_SPLIT_FILE))?;
    let splits = io::load_time_split(&split_src)?;
    let mut sources = vec![split_src];
    let mut out = Vec::with_capacity(splits.len());
    for split in splits {
        let id = &split.person_id;
        let cells_src = Source::read(&dir.join(format!("activity_{id}.csv")))?;
        let districts_src = Source::read(&dir.join(format!("districts_{id}.csv")))?;
        let cell_seconds = io::load_activity(&cells_src)?;
        let district_seconds = io::load_district_seconds(&districts_src)?;
        sources.push(cells_src);
        sources.push(districts_src);
        out.push(ActivityRecord {
            split,
            cell_seconds,
            district_seconds,
        });
    }
    Ok((out, sources))
}

// ---- exposure -------------------------------------------------------------

pub fn exposure(
    records: &[ActivityRecord],
    field: &PrevalenceField,
    dp: &DistrictPrevalence,
    home_level: f64,
    timer: &mut StageTimer,
) -> CliResult<Vec<ExposureProfile>> {
    let profiles: Vec<ExposureProfile> = records
        .par_iter()
        .map(|r| {
            exposure_profile(&r.participant()?, field, dp, home_level)
                .map_err(|e| CliError::from_core("exposure", e.for_person(r.person_id())))
        })
        .collect::<CliResult<_>>()?;
    let no_in = profiles.iter().filter(|p| p.e_in.is_none()).count();
    if no_in > 0 {
        timer.warn(format!(
            "{no_in} participants have no study-area exposure (no same-cell time or no prevalence in their cells)"
        ));
    }
    timer.rows(profiles.len());
    Ok(profiles)
}

pub const EXPOSURE_FILE: &str = "exposure.csv";

pub fn exposure_rows(profiles: &[ExposureProfile]) -> Vec<ExposureRow> {
    profiles
        .iter()
        .map(|p| ExposureRow {
            person_id: p.person_id.clone(),
            e_in: p.e_in,
            e_out: p.e_out,
            e_overall: p.e_overall,
            e_home: p.e_home,
            fraction_in: p.fraction_in,
            fraction_out: p.fraction_out,
        })
        .collect()
}

pub fn write_exposure(out: &mut Outputs, rows: &[ExposureRow], units: Units) {
    let mut t = CsvOut::new(io::EXPOSURE.required);
    let e = |v: Option<f64>| opt_num(v.map(|p| units.write(p)));
    for r in rows {
        t.push(vec![
            r.person_id.clone(),
            e(r.e_in),
            e(r.e_out),
            e(r.e_overall),
            e(r.e_home),
            opt_num(r.fraction_in),
            opt_num(r.fraction_out),
        ]);
    }
    out.csv(EXPOSURE_FILE, &t);
}

// ---- analyze --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Analysis {
    Risk,
    Cluster,
    Coverage,
    Overlap,
    Design,
    Ttest,
    All,
}

impl Analysis {
    pub fn expand(list: &[Analysis]) -> BTreeSet<Analysis> {
        if list.is_empty() || list.contains(&Analysis::All) {
            [
                Analysis::Risk,
                Analysis::Cluster,
                Analysis::Coverage,
                Analysis::Overlap,
                Analysis::Design,
                Analysis::Ttest,
            ]
            .into()
        } else {
            list.iter().copied().collect()
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Risk => "risk",
            Analysis::Cluster => "cluster",
            Analysis::Coverage => "coverage",
            Analysis::Overlap => "overlap",
            Analysis::Design => "design",
            Analysis::Ttest => "ttest",
            Analysis::All => "all",
        }
    }
}

pub struct AnalysisInputs<'a> {
    pub exposure: &'a [ExposureRow],
    pub activity: &'a [ActivityRecord],
    pub participants: Option<&'a [Participant]>,
    pub field: Option<&'a PrevalenceField>,
    pub districts: Option<&'a DistrictPrevalence>,
    pub grid: &'a Grid,
    pub home_level: f64,
    pub seed: u64,
    pub units: Units,
}

impl AnalysisInputs<'_> {
    fn sexes(&self) -> Option<BTreeMap<&str, Sex>> {
        self.participants
            .map(|ps| ps.iter().map(|p| (p.person_id.as_str(), p.sex)).collect())
    }

    fn cell_dists(&self) -> Vec<ActivityDistribution<CellId>> {
        self.activity.iter().filter_map(|r| r.cells()).collect()
    }
}

fn need<T>(v: Option<T>, what: &str, analysis: Analysis) -> CliResult<T> {
    v.ok_or_else(|| {
        CliError::Validation(format!("analyze {}: {what} is required", analysis.name()))
    })
}

pub fn analyze(
    which: &BTreeSet<Analysis>,
    inputs: &AnalysisInputs<'_>,
    cfg: &AnalysisConfig,
    out: &mut Outputs,
) -> CliResult<Vec<crate::output::StageReport>> {
    let mut reports = Vec::new();
    for &a in which {
        let mut timer = StageTimer::start(&format!("analyze_{}", a.name()));
        match a {
            Analysis::Risk => risk(inputs, cfg, out, &mut timer)?,
            Analysis::Cluster => cluster(inputs, cfg, out, &mut timer)?,
            Analysis::Coverage => coverage(inputs, cfg, out, &mut timer)?,
            Analysis::Overlap => overlap(inputs, cfg, out, &mut timer)?,
            Analysis::Design => design(inputs, cfg, out, &mut timer)?,
            Analysis::Ttest => ttest(inputs, out, &mut timer)?,
            Analysis::All => {}
        }
        reports.push(timer.finish());
    }
    Ok(reports)
}

fn risk(
    inputs: &AnalysisInputs<'_>,
    cfg: &AnalysisConfig,
    out: &mut Outputs,
    timer: &mut StageTimer,
) -> CliResult<()> {
    let mut profiles = Vec::new();
    for r in inputs.exposure {
        match (r.e_in, r.fraction_out) {
            (Some(e), Some(f)) => profiles.push((r.person_id.clone(), e, f)),
            _ => timer.warn(format!(
                "participant {} left out of risk groups: missing e_in or fraction_out",
                r.person_id
            )),
        }
    }
    let (groups, th) = risk_stratify(&profiles, cfg.p_low, cfg.p_high).stage("analyze risk")?;
    let mut t = CsvOut::new(&["person_id", "group"]);
    for g in &groups {
        t.push(vec![g.person_id.clone(), g.group.as_str().to_string()]);
    }
    timer.rows(t.len());
    out.csv("risk.csv", &t);
    let mut th_t = CsvOut::new(&["measure", "low", "high"]);
    th_t.push(vec![
        "e_in".into(),
        num(inputs.units.write(th.e_in_low)),
        num(inputs.units.write(th.e_in_high)),
    ]);
    th_t.push(vec![
        "fraction_out".into(),
        num(th.out_low),
        num(th.out_high),
    ]);
    out.csv("risk_thresholds.csv", &th_t);
    Ok(())
}

fn cluster(
    inputs: &AnalysisInputs<'_>,
    cfg: &AnalysisConfig,
    out: &mut Outputs,
    timer: &mut StageTimer,
) -> CliResult<()> {
    let a = Analysis::Cluster;
    let prev = PlacePrevalence {
        field: need(inputs.field, "a prevalence field", a)?,
        districts: need(inputs.districts, "district prevalence", a)?,
    };
    let e_home: BTreeMap<&str, Option<f64>> = inputs
        .exposure
        .iter()
        .map(|r| (r.person_id.as_str(), r.e_home))
        .collect();
    let levels = deviation_levels();
    let mut curves = Vec::new();
    for rec in inputs.activity {
        let id = rec.person_id();
        let Some(Some(home_e)) = e_home.get(id).copied() else {
            timer.warn(format!("participant {id} not clustered: no home exposure"));
            continue;
        };
        let Some(places) = rec.participant()?.places else {
            continue;
        };
        let home = activity_space(&places, inputs.home_level).stage("analyze cluster")?;
        if classify_home(&places, &home) != Some(HomeLocation::Inside) {
            timer.warn(format!(
                "participant {id} not clustered: home outside the study area"
            ));
            continue;
        }
        match deviation_curve(&places, prev, home_e, &levels).stage("analyze cluster")? {
            Some(c) => curves.push(c),
            None => timer.warn(format!(
                "participant {id} not clustered: a space has no prevalence value"
            )),
        }
    }
    let seed = derive_seed(inputs.seed, &[b"cluster"]);
    let res =
        cluster_deviations(&curves, cfg.clusters, seed, cfg.restarts).stage("analyze cluster")?;
    let mut t = CsvOut::new(&["person_id", "label"]);
    for (id, label) in &res.assignments {
        t.push(vec![id.clone(), label.as_str().to_string()]);
    }
    timer.rows(t.len());
    out.csv("clusters.csv", &t);
    let mut d = CsvOut::new(&["person_id", "gamma", "deviation"]);
    for c in &curves {
        for (g, v) in levels.iter().zip(&c.values) {
            d.push(vec![
                c.person_id.clone(),
                num(*g),
                num(inputs.units.write(*v)),
            ]);
        }
    }
    out.csv("deviations.csv", &d);
    Ok(())
}

/// Cell distributions and sex labels for participants listed in both.
fn by_sex(
    inputs: &AnalysisInputs<'_>,
    a: Analysis,
    timer: &mut StageTimer,
) -> CliResult<(Vec<ActivityDistribution<CellId>>, BTreeMap<String, String>)> {
    let sexes = need(inputs.sexes(), "a participants file", a)?;
    let mut dists = Vec::new();
    let mut groups = BTreeMap::new();
    for d in inputs.cell_dists() {
        match sexes.get(d.id.as_str()) {
            Some(s) => {
                groups.insert(d.id.clone(), s.code().to_string());
                dists.push(d);
            }
            None => timer.warn(format!(
                "participant {} missing from participants file",
                d.id
            )),
        }
    }
    Ok((dists, groups))
}

fn coverage(
    inputs: &AnalysisInputs<'_>,
    cfg: &AnalysisConfig,
    out: &mut Outputs,
    timer: &mut StageTimer,
) -> CliResult<()> {
    let (dists, groups) = by_sex(inputs, Analysis::Coverage, timer)?;
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups.values() {
        *sizes.entry(g).or_default() += 1;
    }
    // balance the groups by subsampling to the smaller one
    let resample = (cfg.coverage_repetitions > 0 && sizes.len() > 1).then(|| Resample {
        target_size: *sizes.values().min().expect("non-empty"),
        repetitions: cfg.coverage_repetitions,
        seed: derive_seed(inputs.seed, &[b"coverage"]),
    });
    let rows = coverage_curves(&dists, &groups, &cfg.coverage_levels()?, resample.as_ref())
        .stage("analyze coverage")?;
    let mut t = CsvOut::new(&[
        "group",
        "gamma",
        "collective",
        "mean_individual",
        "q1",
        "q3",
    ]);
    for r in &rows {
        t.push(vec![
            r.group.clone(),
            num(r.gamma),
            num(r.collective),
            num(r.mean_individual),
            num(r.q1),
            num(r.q3),
        ]);
    }
    timer.rows(t.len());
    out.csv("coverage.csv", &t);
    Ok(())
}

fn overlap(
    inputs: &AnalysisInputs<'_>,
    cfg: &AnalysisConfig,
    out: &mut Outputs,
    timer: &mut StageTimer,
) -> CliResult<()> {
    let (dists, groups) = by_sex(inputs, Analysis::Overlap, timer)?;
    for &g in &cfg.overlap_gammas {
        let mut spaces: BTreeMap<&str, Vec<ActivitySpace<CellId>>> = BTreeMap::new();
        for d in &dists {
            let s = activity_space(d, g).stage("analyze overlap")?;
            spaces.entry(groups[&d.id].as_str()).or_default().push(s);
        }
        let (Some(f), Some(m)) = (spaces.get("F"), spaces.get("M")) else {
            timer.warn(format!("overlap at {g}: needs both women and men"));
            continue;
        };
        let cf = collective_space(f).stage("analyze overlap")?;
        let cm = collective_space(m).stage("analyze overlap")?;
        let map = overlap_map(&cf, &cm).stage("analyze overlap")?;
        let mut t = CsvOut::new(&["cell_id", "category"]);
        for (c, cat) in &map {
            t.push(vec![c.to_string(), cat.as_str().to_string()]);
        }
        timer.rows(t.len());
        out.csv(format!("overlap_{}.csv", num(g)), &t);
    }
    Ok(())
}

fn design(
    inputs: &AnalysisInputs<'_>,
    cfg: &AnalysisConfig,
    out: &mut Outputs,
    timer: &mut StageTimer,
) -> CliResult<()> {
    let a = Analysis::Design;
    let participants = need(inputs.participants, "a participants file", a)?;
    let births: BTreeMap<&str, &Participant> = participants
        .iter()
        .map(|p| (p.person_id.as_str(), p))
        .collect();
    let dists = inputs.cell_dists();
    let starts: BTreeMap<&str, Option<Timestamp>> = inputs
        .activity
        .iter()
        .map(|r| (r.person_id(), r.split.longest_block_start))
        .collect();
    let mut people = Vec::new();
    for d in &dists {
        let Some(p) = births.get(d.id.as_str()) else {
            timer.warn(format!(
                "participant {} missing from participants file",
                d.id
            ));
            continue;
        };
        let Some(Some(start)) = starts.get(d.id.as_str()).copied() else {
            continue;
        };
        let age = age_at(p.birth_date, start).stage("analyze design")?;
        people.push((
            Demographics {
                person_id: d.id.clone(),
                sex: p.sex,
                age,
            },
            d,
        ));
    }
    let rows = export_design_table(&people, &deviation_levels()).stage("analyze design")?;
    let mut t = CsvOut::new(&["person_id", "sex", "age", "gamma", "n_cells"]);
    for r in &rows {
        t.push(vec![
            r.person_id.clone(),
            r.sex.code().to_string(),
            r.age.to_string(),
            num(r.gamma),
            r.n_cells.to_string(),
        ]);
    }
    timer.rows(t.len());
    out.csv("design_table.csv", &t);

    for sex in [Sex::Female, Sex::Male] {
        let members: BTreeSet<String> = people
            .iter()
            .filter(|(d, _)| d.sex == sex)
            .map(|(d, _)| d.person_id.clone())
            .collect();
        if members.is_empty() {
            continue;
        }
        let pooled = pool(sex.code(), &dists, &members, cfg.pool).stage("analyze design")?;
        if pooled.skipped > 0 {
            timer.warn(format!(
                "{} empty distributions skipped in pooling",
                pooled.skipped
            ));
        }
        let logs =
            log_activity_export(&pooled.distribution, inputs.grid.n_cells(), cfg.log_epsilon);
        let mut t = CsvOut::new(&["cell_id", "log_activity"]);
        for (c, v) in logs.iter().enumerate() {
            t.push(vec![c.to_string(), num(*v)]);
        }
        out.csv(format!("log_activity_{}.csv", sex.code()), &t);
    }
    Ok(())
}

fn ttest(inputs: &AnalysisInputs<'_>, out: &mut Outputs, timer: &mut StageTimer) -> CliResult<()> {
    let sexes = inputs.sexes();
    let mut groups: Vec<(&str, Option<Sex>)> = vec![("all", None)];
    if sexes.is_some() {
        groups.push(("F", Some(Sex::Female)));
        groups.push(("M", Some(Sex::Male)));
    }
    let mut t = CsvOut::new(&[
        "comparison",
        "group",
        "n",
        "t",
        "df",
        "p_value",
        "mean_difference",
    ]);
    for (name, sex) in groups {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for r in inputs.exposure {
            let keep = match (sex, &sexes) {
                (Some(s), Some(map)) => map.get(r.person_id.as_str()) == Some(&s),
                _ => true,
            };
            if let (true, Some(o), Some(h)) = (keep, r.e_overall, r.e_home) {
                x.push(inputs.units.write(o));
                y.push(inputs.units.write(h));
            }
        }
        let mut row = vec![
            "overall_vs_home".to_string(),
            name.to_string(),
            x.len().to_string(),
        ];
        match paired_t_test(&x, &y) {
            Ok(res) => row.extend([
                num(res.t),
                num(res.df),
                num(res.p_value),
                num(res.mean_difference),
            ]),
            Err(e) => {
                timer.warn(format!("t-test for {name}: {e}"));
                row.extend(std::iter::repeat_n(String::new(), 4));
            }
        }
        t.push(row);
    }
    timer.rows(t.len());
    out.csv("ttest.csv", &t);
    Ok(())
}

pub fn district_prevalence(values: BTreeMap<String, f64>) -> CliResult<DistrictPrevalence> {
    DistrictPrevalence::new(values)
        .map_err(|e| CliError::Validation(format!("district prevalence: {e}")))
}
