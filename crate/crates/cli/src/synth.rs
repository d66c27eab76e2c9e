//! Synthetic datasets written in the pipeline's input schemas.

use std::path::Path;

use ctxexp_core::spatial_grid::Projection;
use ctxexp_core::synth_oracle::{build_world, gen_cohort, gen_trajectories, SynthConfig, World};

use crate::config::Units;
use crate::error::{CliError, CliResult, StageContext};
use crate::io::{self, num, CsvOut};
use crate::output::{Outputs, StageTimer};

pub fn load_config(path: Option<&Path>) -> CliResult<SynthConfig> {
    let cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("config: {e}")))?
        }
        None => SynthConfig::default(),
    };
    Ok(cfg)
}

fn projection(cfg: &SynthConfig) -> CliResult<Projection> {
    Projection::at_origin(cfg.world.origin_lon, cfg.world.origin_lat).stage("synth")
}

fn lon_lat(proj: &Projection, p: ctxexp_core::spatial_grid::PlanarPoint) -> [String; 2] {
    let (lon, lat) = proj.unproject(p);
    [num(lon), num(lat)]
}

/// Files shared by both generators: regions, district prevalence and a
/// pipeline config pointing at every synthetic input.
fn write_world(
    out: &mut Outputs,
    cfg: &SynthConfig,
    world: &World,
    proj: &Projection,
    units: Units,
) {
    let geo = world.regions.to_geojson(proj);
    out.bytes(
        "regions.geojson",
        serde_json::to_vec_pretty(&geo).expect("geojson serializes"),
    );
    let mut dp = CsvOut::new(io::DISTRICT_PREVALENCE.required);
    for (d, p) in &world.district_prevalence {
        dp.push(vec![d.clone(), num(units.write(*p))]);
    }
    out.csv("district_prevalence.csv", &dp);
    let w = &cfg.world;
    let toml = format!(
        "seed = {seed}\nunits = \"{units}\"\n\n\
         [grid]\norigin_lon = {lon:?}\norigin_lat = {lat:?}\ncell_size_m = {cs:?}\nn_cols = {nc}\nn_rows = {nr}\n\n\
         [prevalence]\nperiod = {period}\n\n\
         [inputs]\ntests = \"tests.csv\"\nrates = \"rates.csv\"\nhomesteads = \"homesteads.csv\"\n\
         residents = \"residents.csv\"\nfixes = \"fixes.csv\"\nregions = \"regions.geojson\"\n\
         district_prevalence = \"district_prevalence.csv\"\nparticipants = \"participants.csv\"\n\n\
         [output]\ndir = \"out\"\n",
        seed = cfg.seed,
        lon = w.origin_lon,
        lat = w.origin_lat,
        cs = w.cell_size_m,
        nc = w.n_cols,
        nr = w.n_rows,
        period = cfg.cohort.last_period,
    );
    out.bytes("pipeline.toml", toml.into_bytes());
}

pub fn cohort(cfg: &SynthConfig, units: Units, timer: &mut StageTimer) -> CliResult<Outputs> {
    let c = gen_cohort(cfg).stage("synth")?;
    let proj = projection(cfg)?;
    let mut out = Outputs::new();

    let mut tests = CsvOut::new(io::TESTS.required);
    for r in &c.records {
        let base = [
            r.person_id.clone(),
            r.sex.code().to_string(),
            io::format_date(r.birth_date),
            format!("{}-01-01", r.entry_period),
            format!("{}-12-31", r.exit_period),
        ];
        if r.tests.is_empty() {
            let mut row = base.to_vec();
            row.extend([String::new(), String::new()]);
            tests.push(row);
        }
        for (p, res) in &r.tests {
            let mut row = base.to_vec();
            let code = match res {
                ctxexp_core::hiv_imputation::TestResult::Negative => "neg",
                ctxexp_core::hiv_imputation::TestResult::Positive => "pos",
            };
            row.extend([format!("{p}-07-01"), code.to_string()]);
            tests.push(row);
        }
    }
    timer.rows(tests.len());
    out.csv("tests.csv", &tests);

    let mut rates = CsvOut::new(io::RATES.required);
    for row in c.rates.rows() {
        rates.push(vec![
            row.sex.code().to_string(),
            row.age_group.to_string(),
            row.period.to_string(),
            num(row.rates.prevalence),
            num(row.rates.incidence),
        ]);
    }
    out.csv("rates.csv", &rates);

    let mut hs = CsvOut::new(io::HOMESTEADS.required);
    for (id, p) in &c.homesteads {
        let [lon, lat] = lon_lat(&proj, *p);
        hs.push(vec![id.clone(), lon, lat]);
    }
    out.csv("homesteads.csv", &hs);

    let mut res = CsvOut::new(io::RESIDENTS.required);
    for r in &c.residences {
        res.push(vec![
            r.person_id.clone(),
            r.homestead_id.clone(),
            r.period.to_string(),
        ]);
    }
    out.csv("residents.csv", &res);

    let mut truth = CsvOut::new(&["person_id", "period", "status", "seroconversion"]);
    for t in &c.truth {
        let sc = t.seroconversion.map(|p| p.to_string()).unwrap_or_default();
        for (p, s) in t.statuses.periods() {
            truth.push(vec![
                t.person_id.clone(),
                p.to_string(),
                s.to_string(),
                sc.clone(),
            ]);
        }
    }
    out.csv("truth_status.csv", &truth);

    write_world(&mut out, cfg, &c.world, &proj, units);
    Ok(out)
}

pub fn trajectories(cfg: &SynthConfig, units: Units, timer: &mut StageTimer) -> CliResult<Outputs> {
    cfg.validate().stage("synth")?;
    let world = build_world(&cfg.world, cfg.seed).stage("synth")?;
    let tr = gen_trajectories(cfg, &world).stage("synth")?;
    let proj = projection(cfg)?;
    let mut out = Outputs::new();

    let mut fixes = CsvOut::new(io::FIXES.required);
    for seq in &tr.fixes {
        for f in seq.fixes() {
            let [lon, lat] = lon_lat(&proj, f.p);
            fixes.push(vec![
                seq.person_id.clone(),
                io::format_timestamp(f.t),
                lon,
                lat,
            ]);
        }
    }
    timer.rows(fixes.len());
    out.csv("fixes.csv", &fixes);

    let mut ps = CsvOut::new(&["person_id", "sex", "birth_date", "group"]);
    for p in &tr.participants {
        ps.push(vec![
            p.person_id.clone(),
            p.sex.code().to_string(),
            io::format_date(p.birth_date),
            p.group.clone(),
        ]);
    }
    out.csv("participants.csv", &ps);

    let mut paths = CsvOut::new(&["person_id", "t", "x", "y"]);
    for path in &tr.paths {
        for (t, p) in &path.vertices {
            paths.push(vec![path.person_id.clone(), num(*t), num(p.x), num(p.y)]);
        }
    }
    out.csv("truth_paths.csv", &paths);

    write_world(&mut out, cfg, &world, &proj, units);
    Ok(out)
}
