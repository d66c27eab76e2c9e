//! Schema, type and range checks over input files, without computing.

use std::path::PathBuf;

use ctxexp_core::spatial_grid::{Grid, Projection, RegionIndex};
use serde::Serialize;

use crate::config::Units;
use crate::io::{self, Finding, Schema, Source, Table};

/// Which schema a file is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Tests,
    Rates,
    Homesteads,
    Residents,
    Status,
    Fixes,
    Regions,
    DistrictPrevalence,
    Participants,
    Prevalence,
    Exposure,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileReport {
    pub path: String,
    pub kind: InputKind,
    pub rows: usize,
    pub findings: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub files: Vec<FileReport>,
}

impl ValidationReport {
    pub fn finding_count(&self) -> usize {
        self.files.iter().map(|f| f.findings.len()).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.finding_count() == 0
    }
}

pub struct ValidateOptions<'a> {
    pub units: Units,
    pub projection: Projection,
    pub grid: Option<&'a Grid>,
}

fn rows_of<T>(
    src: &Source,
    schema: &Schema,
    parse: impl Fn(&io::Row<'_>) -> Result<T, Finding>,
) -> (usize, Vec<Finding>) {
    match Table::parse(src, schema) {
        Ok(t) => (t.len(), t.check_all(parse)),
        Err(f) => (0, vec![f]),
    }
}

fn whole_file(src: &Source, msg: String) -> Finding {
    Finding {
        file: src.name.clone(),
        row: None,
        column: None,
        message: msg,
    }
}

pub fn validate_file(src: &Source, kind: InputKind, opt: &ValidateOptions<'_>) -> FileReport {
    let units = opt.units;
    let proj = &opt.projection;
    let (rows, mut findings) = match kind {
        InputKind::Tests => rows_of(src, &io::TESTS, io::test_row),
        InputKind::Rates => rows_of(src, &io::RATES, io::rate_row),
        InputKind::Homesteads => rows_of(src, &io::HOMESTEADS, |r| io::homestead_row(r, proj)),
        InputKind::Residents => rows_of(src, &io::RESIDENTS, io::residence_row),
        InputKind::Status => rows_of(src, &io::STATUS, io::status_row),
        InputKind::Fixes => rows_of(src, &io::FIXES, |r| io::fix_row(r, proj)),
        InputKind::DistrictPrevalence => rows_of(src, &io::DISTRICT_PREVALENCE, |r| {
            io::district_row(r, units)
        }),
        InputKind::Participants => rows_of(src, &io::PARTICIPANTS, io::participant_row),
        InputKind::Prevalence => rows_of(src, &io::PREVALENCE, |r| {
            io::prevalence_row(r, opt.grid, units)
        }),
        InputKind::Exposure => rows_of(src, &io::EXPOSURE, |r| io::exposure_row(r, units)),
        InputKind::Regions => {
            let f = match std::str::from_utf8(&src.bytes) {
                Err(_) => vec![whole_file(src, "not UTF-8".into())],
                Ok(text) => match RegionIndex::from_geojson(text, proj) {
                    Ok(_) => vec![],
                    Err(e) => vec![whole_file(src, e.to_string())],
                },
            };
            (0, f)
        }
    };
    // cross-row checks once every row parses
    if findings.is_empty() {
        let whole = match kind {
            InputKind::Tests => io::load_tests(src).err(),
            InputKind::Rates => io::load_rates(src).err(),
            InputKind::Homesteads => io::load_homesteads(src, proj).err(),
            InputKind::Status => io::load_status(src).err(),
            InputKind::Fixes => io::load_fixes(src, proj).err(),
            InputKind::DistrictPrevalence => io::load_district_prevalence(src, units).err(),
            _ => None,
        };
        if let Some(e) = whole {
            findings.push(whole_file(src, e.to_string()));
        }
    }
    FileReport {
        path: src.name.clone(),
        kind,
        rows,
        findings: findings.iter().map(Finding::to_string).collect(),
    }
}

/// Check each `(path, kind)`; unreadable files become findings.
pub fn validate_inputs(
    files: &[(PathBuf, InputKind)],
    opt: &ValidateOptions<'_>,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (path, kind) in files {
        let r = match Source::read(path) {
            Ok(src) => validate_file(&src, *kind, opt),
            Err(e) => FileReport {
                path: path.display().to_string(),
                kind: *kind,
                rows: 0,
                findings: vec![e.to_string()],
            },
        };
        report.files.push(r);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> ValidateOptions<'static> {
        ValidateOptions {
            units: Units::Proportion,
            projection: Projection::at_origin(32.0, -28.5).unwrap(),
            grid: None,
        }
    }

    fn check(kind: InputKind, text: &str) -> FileReport {
        let src = Source::from_bytes("f.csv", text.as_bytes().to_vec());
        validate_file(&src, kind, &opts())
    }

    #[test]
    fn valid_files_have_no_findings() {
        let r = check(
            InputKind::Fixes,
            "person_id,timestamp,lon,lat\nA,2019-01-01T00:00:00Z,32.01,-28.49\nA,2019-01-01T00:05:00Z,32.01,-28.49\n",
        );
        assert!(r.findings.is_empty(), "{:?}", r.findings);
        assert_eq!(r.rows, 2);
    }

    #[test]
    fn bad_timestamp_reports_row() {
        let r = check(
            InputKind::Fixes,
            "person_id,timestamp,lon,lat\nA,2019-01-01T00:00:00Z,32,-28\nA,yesterday,32,-28\n",
        );
        assert_eq!(r.findings.len(), 1);
        assert!(r.findings[0].contains("row 2"), "{}", r.findings[0]);
        assert!(r.findings[0].contains("timestamp"));
    }

    #[test]
    fn prevalence_above_one_is_a_range_finding() {
        let r = check(
            InputKind::DistrictPrevalence,
            "district_id,prevalence\nD1,1.2\n",
        );
        assert_eq!(r.findings.len(), 1);
        assert!(r.findings[0].contains("out of range"));
    }

    #[test]
    fn all_bad_rows_are_reported() {
        let r = check(
            InputKind::Residents,
            "person_id,homestead_id,period\nA,H1,x\nB,H1,2012\nC,,2013\n",
        );
        assert_eq!(r.findings.len(), 2);
    }

    #[test]
    fn incoherent_rates_are_found() {
        // prevalence below incidence x (1 - previous prevalence)
        let r = check(
            InputKind::Rates,
            "sex,age_group,period,prevalence,incidence\nF,15-19,2012,0.1,0.01\nF,15-19,2013,0.05,0.5\n",
        );
        assert!(!r.findings.is_empty());
    }
}
