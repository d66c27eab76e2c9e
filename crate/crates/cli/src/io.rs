//! CSV schemas: row parsers shared by the loaders and `validate`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use csv::StringRecord;
use ctxexp_core::activity::{Fix, FixSequence, Timestamp};
use ctxexp_core::hiv_imputation::{
    AgeGroup, Period, RateRow, RateTable, Rates, Sex, StatusSequence, SurveillanceRecord,
    TestResult,
};
use ctxexp_core::prevalence_field::{PrevalenceField, Residence};
use ctxexp_core::spatial_grid::{CellId, Grid, PlanarPoint, Projection};

use crate::config::Units;
use crate::error::{CliError, CliResult};

/// Raw bytes of an input file, with the name used in messages.
#[derive(Debug, Clone)]
pub struct Source {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Source {
    pub fn read(path: &Path) -> CliResult<Source> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Source {
            name: path.display().to_string(),
            bytes,
        })
    }

    pub fn from_bytes(name: impl Into<String>, bytes: Vec<u8>) -> Source {
        Source {
            name: name.into(),
            bytes,
        }
    }
}

/// One problem in one input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub file: String,
    /// 1-based data row (the header is row 0).
    pub row: Option<usize>,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(r) = self.row {
            write!(f, ": row {r}")?;
        }
        if let Some(c) = &self.column {
            write!(f, ", column `{c}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl From<Finding> for CliError {
    fn from(f: Finding) -> Self {
        CliError::Validation(f.to_string())
    }
}

fn file_finding(file: &str, message: impl Into<String>) -> Finding {
    Finding {
        file: file.to_string(),
        row: None,
        column: None,
        message: message.into(),
    }
}

/// A column layout: required columns first, then optional ones.
pub struct Schema {
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
}

pub const TESTS: Schema = Schema {
    required: &[
        "person_id",
        "sex",
        "birth_date",
        "entry_date",
        "exit_date",
        "test_date",
        "result",
    ],
    optional: &[],
};
pub const RATES: Schema = Schema {
    required: &["sex", "age_group", "period", "prevalence", "incidence"],
    optional: &[],
};
pub const HOMESTEADS: Schema = Schema {
    required: &["homestead_id", "lon", "lat"],
    optional: &[],
};
pub const RESIDENTS: Schema = Schema {
    required: &["person_id", "homestead_id", "period"],
    optional: &[],
};
pub const STATUS: Schema = Schema {
    required: &["person_id", "period", "status"],
    optional: &[],
};
pub const FIXES: Schema = Schema {
    required: &["person_id", "timestamp", "lon", "lat"],
    optional: &[],
};
pub const DISTRICT_PREVALENCE: Schema = Schema {
    required: &["district_id", "prevalence"],
    optional: &[],
};
pub const PARTICIPANTS: Schema = Schema {
    required: &["person_id", "sex", "birth_date"],
    optional: &["group"],
};
pub const PREVALENCE: Schema = Schema {
    required: &["cell_id", "center_x", "center_y", "prevalence"],
    optional: &[],
};
pub const ACTIVITY: Schema = Schema {
    required: &["cell_id", "proportion", "seconds"],
    optional: &[],
};
pub const DISTRICTS: Schema = Schema {
    required: &["district_id", "seconds"],
    optional: &[],
};
pub const TIME_SPLIT: Schema = Schema {
    required: &[
        "person_id",
        "inside_seconds",
        "outside_seconds",
        "unmapped_seconds",
        "straddling_seconds",
        "gap_count",
        "gap_seconds",
        "longest_block_start",
    ],
    optional: &[],
};
pub const EXPOSURE: Schema = Schema {
    required: &[
        "person_id",
        "e_in",
        "e_out",
        "e_overall",
        "e_home",
        "fraction_in",
        "fraction_out",
    ],
    optional: &[],
};

/// A parsed CSV with its columns resolved against a schema.
pub struct Table<'a> {
    file: &'a str,
    cols: Vec<Option<usize>>,
    names: Vec<&'static str>,
    rows: Vec<StringRecord>,
}

impl<'a> Table<'a> {
    pub fn parse(src: &'a Source, schema: &Schema) -> Result<Table<'a>, Finding> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(src.bytes.as_slice());
        let headers = rdr
            .headers()
            .map_err(|e| file_finding(&src.name, format!("unreadable header: {e}")))?
            .clone();
        if headers.is_empty() || headers.iter().all(str::is_empty) {
            return Err(file_finding(&src.name, "missing header row"));
        }
        let find = |name: &str| headers.iter().position(|h| h == name);
        let mut cols = Vec::new();
        let mut names = Vec::new();
        for &name in schema.required {
            match find(name) {
                Some(i) => cols.push(Some(i)),
                None => {
                    return Err(Finding {
                        file: src.name.clone(),
                        row: None,
                        column: Some(name.to_string()),
                        message: "missing required column".into(),
                    })
                }
            }
            names.push(name);
        }
        for &name in schema.optional {
            cols.push(find(name));
            names.push(name);
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Finding {
                file: src.name.clone(),
                row: Some(i + 1),
                column: None,
                message: format!("malformed row: {e}"),
            })?;
            rows.push(rec);
        }
        Ok(Table {
            file: &src.name,
            cols,
            names,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().enumerate().map(move |(i, rec)| Row {
            table: self,
            index: i + 1,
            rec,
        })
    }

    /// Parse every row; fails on the first bad one.
    pub fn parse_all<T>(
        &self,
        f: impl Fn(&Row<'_>) -> Result<T, Finding>,
    ) -> Result<Vec<T>, Finding> {
        self.rows().map(|r| f(&r)).collect()
    }

    /// Parse every row, collecting all findings.
    pub fn check_all<T>(&self, f: impl Fn(&Row<'_>) -> Result<T, Finding>) -> Vec<Finding> {
        self.rows().filter_map(|r| f(&r).err()).collect()
    }
}

pub struct Row<'a> {
    table: &'a Table<'a>,
    pub index: usize,
    rec: &'a StringRecord,
}

impl Row<'_> {
    pub fn finding(&self, col: usize, message: impl Into<String>) -> Finding {
        Finding {
            file: self.table.file.to_string(),
            row: Some(self.index),
            column: Some(self.table.names[col].to_string()),
            message: message.into(),
        }
    }

    /// Raw value; empty for an absent optional column.
    pub fn raw(&self, col: usize) -> &str {
        self.table.cols[col]
            .and_then(|i| self.rec.get(i))
            .unwrap_or("")
    }

    pub fn text(&self, col: usize) -> Result<&str, Finding> {
        let v = self.raw(col);
        if v.is_empty() {
            Err(self.finding(col, "empty value"))
        } else {
            Ok(v)
        }
    }

    /// An identifier that is also safe to use in a file name.
    pub fn id(&self, col: usize) -> Result<&str, Finding> {
        let v = self.text(col)?;
        let ok = !v.starts_with('.')
            && v.chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
        if ok {
            Ok(v)
        } else {
            Err(self.finding(
                col,
                format!("identifier `{v}` must use only letters, digits, `_`, `-` and `.`"),
            ))
        }
    }

    pub fn f64(&self, col: usize) -> Result<f64, Finding> {
        let v = self.text(col)?;
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.finding(col, format!("`{v}` is not a finite number"))),
        }
    }

    pub fn opt_f64(&self, col: usize) -> Result<Option<f64>, Finding> {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.f64(col).map(Some)
        }
    }

    pub fn nonneg(&self, col: usize) -> Result<f64, Finding> {
        let x = self.f64(col)?;
        if x < 0.0 {
            return Err(self.finding(col, format!("{x} is negative")));
        }
        Ok(x)
    }

    pub fn int<T: std::str::FromStr>(&self, col: usize) -> Result<T, Finding> {
        let v = self.text(col)?;
        v.parse::<T>()
            .map_err(|_| self.finding(col, format!("`{v}` is not an integer")))
    }

    /// A proportion, or a percentage under percent units.
    pub fn prevalence(&self, col: usize, units: Units) -> Result<f64, Finding> {
        let x = self.f64(col)?;
        units
            .read(x)
            .ok_or_else(|| self.finding(col, format!("{x} is out of range for {units} units")))
    }

    pub fn opt_prevalence(&self, col: usize, units: Units) -> Result<Option<f64>, Finding> {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.prevalence(col, units).map(Some)
        }
    }

    pub fn probability(&self, col: usize) -> Result<f64, Finding> {
        let x = self.f64(col)?;
        if !(0.0..=1.0).contains(&x) {
            return Err(self.finding(col, format!("{x} is not in [0, 1]")));
        }
        Ok(x)
    }

    pub fn date(&self, col: usize) -> Result<NaiveDate, Finding> {
        let v = self.text(col)?;
        NaiveDate::parse_from_str(v, "%Y-%m-%d")
            .map_err(|_| self.finding(col, format!("`{v}` is not an ISO-8601 date")))
    }

    pub fn opt_date(&self, col: usize) -> Result<Option<NaiveDate>, Finding> {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.date(col).map(Some)
        }
    }

    pub fn timestamp(&self, col: usize) -> Result<Timestamp, Finding> {
        let v = self.text(col)?;
        parse_timestamp(v).ok_or_else(|| {
            self.finding(
                col,
                format!("`{v}` is not an ISO-8601 UTC timestamp with whole seconds"),
            )
        })
    }

    pub fn sex(&self, col: usize) -> Result<Sex, Finding> {
        let v = self.text(col)?;
        Sex::parse(v).ok_or_else(|| self.finding(col, format!("`{v}` is not F or M")))
    }

    fn point(&self, lon: usize, lat: usize, proj: &Projection) -> Result<PlanarPoint, Finding> {
        let (x, y) = (self.f64(lon)?, self.f64(lat)?);
        if !(-180.0..=180.0).contains(&x) {
            return Err(self.finding(lon, format!("{x} is not a longitude")));
        }
        if !(-90.0..=90.0).contains(&y) {
            return Err(self.finding(lat, format!("{y} is not a latitude")));
        }
        proj.project(x, y)
            .map_err(|e| self.finding(lon, e.to_string()))
    }
}

/// `2019-01-01T08:00:00Z`, an explicit offset, or no zone (read as UTC).
pub fn parse_timestamp(v: &str) -> Option<Timestamp> {
    let dt = match DateTime::parse_from_rfc3339(v) {
        Ok(dt) => dt.to_utc(),
        Err(_) => NaiveDateTime::parse_from_str(v, "%Y-%m-%dT%H:%M:%S%.f")
            .ok()?
            .and_utc(),
    };
    (dt.timestamp_subsec_nanos() == 0).then(|| dt.timestamp())
}

pub fn format_timestamp(t: Timestamp) -> String {
    DateTime::from_timestamp(t, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_default()
}

pub fn format_date(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

// ---- row parsers ----------------------------------------------------------

pub struct TestRow {
    pub person_id: String,
    pub sex: Sex,
    pub birth_date: NaiveDate,
    pub entry: NaiveDate,
    pub exit: NaiveDate,
    pub test: Option<(NaiveDate, TestResult)>,
}

pub fn test_row(r: &Row<'_>) -> Result<TestRow, Finding> {
    let entry = r.date(3)?;
    let exit = r.date(4)?;
    if exit < entry {
        return Err(r.finding(4, "exit date precedes entry date"));
    }
    let test = match (r.opt_date(5)?, r.raw(6)) {
        (None, "") => None,
        (Some(d), v) if !v.is_empty() => {
            let res = TestResult::parse(v)
                .ok_or_else(|| r.finding(6, format!("`{v}` is not neg or pos")))?;
            Some((d, res))
        }
        (None, _) => return Err(r.finding(5, "result given without a test date")),
        (Some(_), _) => return Err(r.finding(6, "test date given without a result")),
    };
    Ok(TestRow {
        person_id: r.id(0)?.to_string(),
        sex: r.sex(1)?,
        birth_date: r.date(2)?,
        entry,
        exit,
        test,
    })
}

pub fn rate_row(r: &Row<'_>) -> Result<RateRow, Finding> {
    let g = r.text(1)?;
    let age_group = AgeGroup::parse(g)
        .ok_or_else(|| r.finding(1, format!("`{g}` is not an age range lo-hi")))?;
    Ok(RateRow {
        sex: r.sex(0)?,
        age_group,
        period: r.int(2)?,
        rates: Rates {
            prevalence: r.probability(3)?,
            incidence: r.probability(4)?,
        },
    })
}

pub fn homestead_row(r: &Row<'_>, proj: &Projection) -> Result<(String, PlanarPoint), Finding> {
    Ok((r.text(0)?.to_string(), r.point(1, 2, proj)?))
}

pub fn residence_row(r: &Row<'_>) -> Result<Residence, Finding> {
    Ok(Residence {
        person_id: r.text(0)?.to_string(),
        homestead_id: r.text(1)?.to_string(),
        period: r.int(2)?,
    })
}

pub fn status_row(r: &Row<'_>) -> Result<(String, Period, u8), Finding> {
    let s: u8 = r.int(2)?;
    if s > 1 {
        return Err(r.finding(2, format!("status {s} is not 0 or 1")));
    }
    Ok((r.text(0)?.to_string(), r.int(1)?, s))
}

pub fn fix_row(r: &Row<'_>, proj: &Projection) -> Result<(String, Fix), Finding> {
    Ok((
        r.id(0)?.to_string(),
        Fix {
            t: r.timestamp(1)?,
            p: r.point(2, 3, proj)?,
        },
    ))
}

pub fn district_row(r: &Row<'_>, units: Units) -> Result<(String, f64), Finding> {
    Ok((r.text(0)?.to_string(), r.prevalence(1, units)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub person_id: String,
    pub sex: Sex,
    pub birth_date: NaiveDate,
    pub group: Option<String>,
}

pub fn participant_row(r: &Row<'_>) -> Result<Participant, Finding> {
    let g = r.raw(3);
    Ok(Participant {
        person_id: r.text(0)?.to_string(),
        sex: r.sex(1)?,
        birth_date: r.date(2)?,
        group: (!g.is_empty()).then(|| g.to_string()),
    })
}

pub fn prevalence_row(
    r: &Row<'_>,
    grid: Option<&Grid>,
    units: Units,
) -> Result<(CellId, Option<f64>), Finding> {
    let cell: CellId = r.int(0)?;
    if let Some(g) = grid {
        if cell >= g.n_cells() {
            return Err(r.finding(0, format!("cell {cell} is outside the grid")));
        }
    }
    r.f64(1)?;
    r.f64(2)?;
    Ok((cell, r.opt_prevalence(3, units)?))
}

pub fn activity_row(r: &Row<'_>) -> Result<(CellId, f64), Finding> {
    r.probability(1)?;
    Ok((r.int(0)?, r.nonneg(2)?))
}

pub fn district_seconds_row(r: &Row<'_>) -> Result<(String, f64), Finding> {
    Ok((r.text(0)?.to_string(), r.nonneg(1)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSplitRow {
    pub person_id: String,
    pub inside_seconds: f64,
    pub outside_seconds: f64,
    pub unmapped_seconds: f64,
    pub straddling_seconds: f64,
    pub gap_count: usize,
    pub gap_seconds: f64,
    pub longest_block_start: Option<Timestamp>,
}

pub fn time_split_row(r: &Row<'_>) -> Result<TimeSplitRow, Finding> {
    let start = if r.raw(7).is_empty() {
        None
    } else {
        Some(r.timestamp(7)?)
    };
    Ok(TimeSplitRow {
        person_id: r.id(0)?.to_string(),
        inside_seconds: r.nonneg(1)?,
        outside_seconds: r.nonneg(2)?,
        unmapped_seconds: r.nonneg(3)?,
        straddling_seconds: r.nonneg(4)?,
        gap_count: r.int(5)?,
        gap_seconds: r.nonneg(6)?,
        longest_block_start: start,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRow {
    pub person_id: String,
    pub e_in: Option<f64>,
    pub e_out: Option<f64>,
    pub e_overall: Option<f64>,
    pub e_home: Option<f64>,
    pub fraction_in: Option<f64>,
    pub fraction_out: Option<f64>,
}

pub fn exposure_row(r: &Row<'_>, units: Units) -> Result<ExposureRow, Finding> {
    let frac = |c: usize| -> Result<Option<f64>, Finding> {
        match r.opt_f64(c)? {
            Some(x) if !(0.0..=1.0).contains(&x) => {
                Err(r.finding(c, format!("{x} is not in [0, 1]")))
            }
            v => Ok(v),
        }
    };
    Ok(ExposureRow {
        person_id: r.text(0)?.to_string(),
        e_in: r.opt_prevalence(1, units)?,
        e_out: r.opt_prevalence(2, units)?,
        e_overall: r.opt_prevalence(3, units)?,
        e_home: r.opt_prevalence(4, units)?,
        fraction_in: frac(5)?,
        fraction_out: frac(6)?,
    })
}

// ---- loaders --------------------------------------------------------------

fn table<'a>(src: &'a Source, schema: &Schema) -> CliResult<Table<'a>> {
    Ok(Table::parse(src, schema)?)
}

/// Surveillance records in order of first appearance; a period is the year of
/// a date.
pub fn load_tests(src: &Source) -> CliResult<Vec<SurveillanceRecord>> {
    let t = table(src, &TESTS)?;
    let rows = t.parse_all(test_row)?;
    group_tests(&src.name, rows).map_err(CliError::Validation)
}

fn group_tests(file: &str, rows: Vec<TestRow>) -> Result<Vec<SurveillanceRecord>, String> {
    use chrono::Datelike;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, SurveillanceRecord> = BTreeMap::new();
    for (i, row) in rows.into_iter().enumerate() {
        let rec = by_id.entry(row.person_id.clone()).or_insert_with(|| {
            order.push(row.person_id.clone());
            SurveillanceRecord {
                person_id: row.person_id.clone(),
                sex: row.sex,
                birth_date: row.birth_date,
                entry_period: row.entry.year(),
                exit_period: row.exit.year(),
                tests: Vec::new(),
            }
        });
        if rec.sex != row.sex
            || rec.birth_date != row.birth_date
            || rec.entry_period != row.entry.year()
            || rec.exit_period != row.exit.year()
        {
            return Err(format!(
                "{file}: row {}: person {} has conflicting sex, birth or membership dates",
                i + 1,
                row.person_id
            ));
        }
        if let Some((d, res)) = row.test {
            rec.tests.push((d.year(), res));
        }
    }
    order
        .into_iter()
        .map(|id| {
            let rec = by_id.remove(&id).expect("grouped");
            rec.validated().map_err(|e| format!("{file}: {e}"))
        })
        .collect()
}

pub fn load_rates(src: &Source) -> CliResult<RateTable> {
    let rows = table(src, &RATES)?.parse_all(rate_row)?;
    RateTable::new(rows).map_err(|e| CliError::Validation(format!("{}: {e}", src.name)))
}

pub fn load_homesteads(
    src: &Source,
    proj: &Projection,
) -> CliResult<BTreeMap<String, PlanarPoint>> {
    let t = table(src, &HOMESTEADS)?;
    let mut out = BTreeMap::new();
    for r in t.rows() {
        let (id, p) = homestead_row(&r, proj)?;
        if out.insert(id.clone(), p).is_some() {
            return Err(r.finding(0, format!("duplicate homestead `{id}`")).into());
        }
    }
    Ok(out)
}

pub fn load_residents(src: &Source) -> CliResult<Vec<Residence>> {
    Ok(table(src, &RESIDENTS)?.parse_all(residence_row)?)
}

/// One imputed dataset; rows for a person must cover consecutive periods.
pub fn load_status(src: &Source) -> CliResult<Vec<StatusSequence>> {
    let t = table(src, &STATUS)?;
    let mut out: Vec<StatusSequence> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for r in t.rows() {
        let (id, period, s) = status_row(&r)?;
        match out.last_mut() {
            Some(seq) if seq.person_id == id => {
                if period != seq.last_period() + 1 {
                    return Err(r
                        .finding(
                            1,
                            format!("period {period} does not follow {}", seq.last_period()),
                        )
                        .into());
                }
                seq.statuses.push(s);
            }
            _ => {
                if !seen.insert(id.clone()) {
                    return Err(r
                        .finding(0, format!("rows for `{id}` are not contiguous"))
                        .into());
                }
                out.push(StatusSequence {
                    person_id: id,
                    first_period: period,
                    statuses: vec![s],
                });
            }
        }
    }
    Ok(out)
}

/// Fix sequences in order of first appearance, plus the number of dropped
/// duplicate timestamps.
pub fn load_fixes(src: &Source, proj: &Projection) -> CliResult<(Vec<FixSequence>, usize)> {
    let t = table(src, &FIXES)?;
    let rows = t.parse_all(|r| fix_row(r, proj))?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Vec<Fix>> = BTreeMap::new();
    for (id, fix) in rows {
        by_id
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(fix);
    }
    let mut dropped = 0;
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let fixes = by_id.remove(&id).expect("grouped");
        let (seq, d) = FixSequence::from_unsorted(id, fixes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", src.name)))?;
        dropped += d;
        out.push(seq);
    }
    Ok((out, dropped))
}

pub fn load_district_prevalence(src: &Source, units: Units) -> CliResult<BTreeMap<String, f64>> {
    let t = table(src, &DISTRICT_PREVALENCE)?;
    let mut out = BTreeMap::new();
    for r in t.rows() {
        let (id, p) = district_row(&r, units)?;
        if out.insert(id.clone(), p).is_some() {
            return Err(r.finding(0, format!("duplicate district `{id}`")).into());
        }
    }
    Ok(out)
}

pub fn load_participants(src: &Source) -> CliResult<Vec<Participant>> {
    Ok(table(src, &PARTICIPANTS)?.parse_all(participant_row)?)
}

/// A prevalence field; cells absent from the file are missing.
pub fn load_prevalence(
    src: &Source,
    grid: &Grid,
    period: Period,
    units: Units,
) -> CliResult<PrevalenceField> {
    let t = table(src, &PREVALENCE)?;
    let mut values = vec![None; grid.n_cells()];
    for r in t.rows() {
        let (cell, p) = prevalence_row(&r, Some(grid), units)?;
        values[cell] = p;
    }
    Ok(PrevalenceField {
        grid: grid.clone(),
        period,
        values,
    })
}

pub fn load_activity(src: &Source) -> CliResult<BTreeMap<CellId, f64>> {
    Ok(table(src, &ACTIVITY)?
        .parse_all(activity_row)?
        .into_iter()
        .collect())
}

pub fn load_district_seconds(src: &Source) -> CliResult<BTreeMap<String, f64>> {
    Ok(table(src, &DISTRICTS)?
        .parse_all(district_seconds_row)?
        .into_iter()
        .collect())
}

pub fn load_time_split(src: &Source) -> CliResult<Vec<TimeSplitRow>> {
    Ok(table(src, &TIME_SPLIT)?.parse_all(time_split_row)?)
}

pub fn load_exposure(src: &Source, units: Units) -> CliResult<Vec<ExposureRow>> {
    Ok(table(src, &EXPOSURE)?.parse_all(|r| exposure_row(r, units))?)
}

/// Period encoded in a `prevalence_<period>.csv` file name.
pub fn period_from_name(path: &Path) -> Option<Period> {
    path.file_stem()?
        .to_str()?
        .strip_prefix("prevalence_")?
        .parse()
        .ok()
}

/// `status_*.csv` files in a directory, ordered by replicate number.
pub fn status_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let rep = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("status_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(r) = rep {
            found.push((r, path));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no status_<replicate>.csv files",
            dir.display()
        )));
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

// ---- writing --------------------------------------------------------------

/// An output CSV held in memory until commit.
#[derive(Debug, Clone)]
pub struct CsvOut {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvOut {
    pub fn new(header: &[&str]) -> Self {
        CsvOut {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Shortest representation that parses back to the same value; `-0` is
/// written as `0`.
pub fn num(x: f64) -> String {
    format!("{}", x + 0.0)
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
