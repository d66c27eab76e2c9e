//! Per-period HIV status imputation for surveillance participants.
//!
//! A participant's status `A_t` is a monotone 0/1 sequence over the periods
//! (calendar years) they spend in the cohort. Observed tests pin some periods;
//! the rest are sampled sequentially from Bernoulli draws whose success
//! probabilities come from tabulated prevalence `μ_t` and incidence `λ_t`.
//!
//! Four kinds of record are handled:
//!
//! * only negative tests: forward from the last negative with `λ_t`;
//! * only positive tests: backward from the first positive with
//!   [`backward_negative_prob`];
//! * negative then positive: forward and backward steps alternate until the
//!   single remaining unknown period is bridged with [`bridge_positive_prob`];
//! * never tested: first period from `μ`, then forward with `λ_t`.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub type Period = i32;

/// Tolerance on computed probabilities exceeding 1 through rounding.
const PROB_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
}

impl Sex {
    pub fn code(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
        }
    }

    pub fn parse(s: &str) -> Option<Sex> {
        match s.trim() {
            "M" | "m" | "male" | "Male" => Some(Sex::Male),
            "F" | "f" | "female" | "Female" => Some(Sex::Female),
            _ => None,
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestResult {
    #[serde(rename = "neg")]
    Negative,
    #[serde(rename = "pos")]
    Positive,
}

impl TestResult {
    pub fn parse(s: &str) -> Option<TestResult> {
        match s.trim() {
            "neg" | "negative" | "0" => Some(TestResult::Negative),
            "pos" | "positive" | "1" => Some(TestResult::Positive),
            _ => None,
        }
    }
}

/// Which tests a record carries, in the four-way split used by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TesterCategory {
    OnlyNegative {
        last_negative: Period,
    },
    OnlyPositive {
        first_positive: Period,
    },
    NegativeThenPositive {
        last_negative: Period,
        first_positive: Period,
    },
    NeverTested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveillanceRecord {
    pub person_id: String,
    pub sex: Sex,
    pub birth_date: NaiveDate,
    pub entry_period: Period,
    pub exit_period: Period,
    pub tests: Vec<(Period, TestResult)>,
}

impl SurveillanceRecord {
    /// Checks the record invariants; tests are sorted by period on success.
    pub fn validated(mut self) -> Result<Self> {
        let fail = |reason: String| Error::InvalidRecord {
            person_id: self.person_id.clone(),
            reason,
        };
        if self.entry_period > self.exit_period {
            return Err(fail(format!(
                "entry {} after exit {}",
                self.entry_period, self.exit_period
            )));
        }
        if let Some((p, _)) = self
            .tests
            .iter()
            .find(|(p, _)| *p < self.entry_period || *p > self.exit_period)
        {
            return Err(fail(format!(
                "test at {p} outside [{}, {}]",
                self.entry_period, self.exit_period
            )));
        }
        let first_pos = self
            .tests
            .iter()
            .filter(|(_, r)| *r == TestResult::Positive)
            .map(|(p, _)| *p)
            .min();
        if let Some(fp) = first_pos {
            if let Some((p, _)) = self
                .tests
                .iter()
                .find(|(p, r)| *r == TestResult::Negative && *p >= fp)
            {
                return Err(fail(format!(
                    "negative test at {p} on or after first positive at {fp}"
                )));
            }
        }
        self.tests.sort();
        Ok(self)
    }

    pub fn category(&self) -> TesterCategory {
        let last_neg = self
            .tests
            .iter()
            .filter(|(_, r)| *r == TestResult::Negative)
            .map(|(p, _)| *p)
            .max();
        let first_pos = self
            .tests
            .iter()
            .filter(|(_, r)| *r == TestResult::Positive)
            .map(|(p, _)| *p)
            .min();
        match (last_neg, first_pos) {
            (Some(n), Some(p)) => TesterCategory::NegativeThenPositive {
                last_negative: n,
                first_positive: p,
            },
            (Some(n), None) => TesterCategory::OnlyNegative { last_negative: n },
            (None, Some(p)) => TesterCategory::OnlyPositive { first_positive: p },
            (None, None) => TesterCategory::NeverTested,
        }
    }

    pub fn n_periods(&self) -> usize {
        (self.exit_period - self.entry_period + 1) as usize
    }
}

/// Completed years of age on 1 January of `period`.
pub fn age_at_period_start(birth: NaiveDate, period: Period) -> i32 {
    let mut age = period - birth.year();
    if (birth.month(), birth.day()) > (1, 1) {
        age -= 1;
    }
    age
}

/// Inclusive integer age range, written `lo-hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgeGroup {
    pub lo: i32,
    pub hi: i32,
}

impl AgeGroup {
    pub fn new(lo: i32, hi: i32) -> Result<Self> {
        if lo > hi || lo < 0 {
            return Err(Error::InvalidArgument(format!("age group {lo}-{hi}")));
        }
        Ok(AgeGroup { lo, hi })
    }

    pub fn contains(&self, age: i32) -> bool {
        age >= self.lo && age <= self.hi
    }

    pub fn parse(s: &str) -> Option<AgeGroup> {
        let (lo, hi) = s.trim().split_once('-')?;
        AgeGroup::new(lo.trim().parse().ok()?, hi.trim().parse().ok()?).ok()
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub prevalence: f64,
    pub incidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub sex: Sex,
    pub age_group: AgeGroup,
    pub period: Period,
    pub rates: Rates,
}

/// Prevalence/incidence by sex, age group and period.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    entries: BTreeMap<(Sex, Period), Vec<(AgeGroup, Rates)>>,
}

impl RateTable {
    /// Builds the table and checks ranges, overlaps and coherence
    /// `μ_t ≥ λ_t·(1 − μ_{t−1})` along every single-year age trajectory.
    pub fn new(rows: impl IntoIterator<Item = RateRow>) -> Result<Self> {
        let mut entries: BTreeMap<(Sex, Period), Vec<(AgeGroup, Rates)>> = BTreeMap::new();
        for row in rows {
            let Rates {
                prevalence,
                incidence,
            } = row.rates;
            for (name, v) in [("prevalence", prevalence), ("incidence", incidence)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::IncoherentRates(format!(
                        "{name} {v} outside [0, 1] for {} {} {}",
                        row.sex, row.age_group, row.period
                    )));
                }
            }
            entries
                .entry((row.sex, row.period))
                .or_default()
                .push((row.age_group, row.rates));
        }
        for ((sex, period), groups) in entries.iter_mut() {
            groups.sort_by_key(|(g, _)| *g);
            for w in groups.windows(2) {
                if w[1].0.lo <= w[0].0.hi {
                    return Err(Error::IncoherentRates(format!(
                        "overlapping age groups {} and {} for {sex} {period}",
                        w[0].0, w[1].0
                    )));
                }
            }
        }
        let table = RateTable { entries };
        table.check_coherence()?;
        Ok(table)
    }

    fn check_coherence(&self) -> Result<()> {
        for ((sex, period), groups) in &self.entries {
            let Some(prev_groups) = self.entries.get(&(*sex, period - 1)) else {
                continue;
            };
            for (group, rates) in groups {
                for age in group.lo..=group.hi {
                    let Some(prev) = find_group(prev_groups, age - 1) else {
                        continue;
                    };
                    let required = rates.incidence * (1.0 - prev.prevalence);
                    if rates.prevalence + PROB_SLACK < required {
                        return Err(Error::IncoherentRates(format!(
                            "{sex} age {age} period {period}: prevalence {} < incidence {} x (1 - previous prevalence {})",
                            rates.prevalence, rates.incidence, prev.prevalence
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn lookup(&self, sex: Sex, age: i32, period: Period) -> Result<Rates> {
        self.entries
            .get(&(sex, period))
            .and_then(|groups| find_group(groups, age))
            .ok_or_else(|| {
                Error::IncompleteTable(format!(
                    "no rates for sex {sex}, age {age}, period {period}"
                ))
            })
    }

    pub fn rows(&self) -> impl Iterator<Item = RateRow> + '_ {
        self.entries.iter().flat_map(|((sex, period), groups)| {
            groups.iter().map(move |(g, r)| RateRow {
                sex: *sex,
                age_group: *g,
                period: *period,
                rates: *r,
            })
        })
    }
}

fn find_group(groups: &[(AgeGroup, Rates)], age: i32) -> Option<Rates> {
    groups
        .iter()
        .find(|(g, _)| g.contains(age))
        .map(|(_, r)| *r)
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidArgument(format!(
            "{name} = {v} is not a probability"
        )));
    }
    Ok(())
}

/// `Pr(A_{t−1} = 0 | A_t = 1) = (1 − μ_{t−1}) λ_t / μ_t`.
pub fn backward_negative_prob(mu_prev: f64, mu_cur: f64, lambda_cur: f64) -> Result<f64> {
    check_prob("mu_prev", mu_prev)?;
    check_prob("mu_cur", mu_cur)?;
    check_prob("lambda_cur", lambda_cur)?;
    if mu_cur == 0.0 {
        return Err(Error::DegenerateRate(
            "prevalence is 0 in a period with a positive status".into(),
        ));
    }
    let p = (1.0 - mu_prev) / mu_cur * lambda_cur;
    if p > 1.0 + PROB_SLACK {
        return Err(Error::IncoherentRates(format!(
            "backward probability {p} > 1 (mu_prev {mu_prev}, mu_cur {mu_cur}, lambda {lambda_cur})"
        )));
    }
    Ok(p.min(1.0))
}

/// `Pr(A_{t−1} = 1 | A_{t−2} = 0, A_t = 1) = λ_{t−1} / (λ_{t−1} + λ_t (1 − λ_{t−1}))`.
pub fn bridge_positive_prob(lambda_prev: f64, lambda_cur: f64) -> Result<f64> {
    check_prob("lambda_prev", lambda_prev)?;
    check_prob("lambda_cur", lambda_cur)?;
    let denom = lambda_prev + lambda_cur * (1.0 - lambda_prev);
    if denom == 0.0 {
        return Err(Error::ImpossibleObservation(
            "positive status unreachable from negative with zero incidence in both periods".into(),
        ));
    }
    Ok(lambda_prev / denom)
}

/// How the unknown stretch between a last negative and a first positive is
/// sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeSampling {
    /// Forward/backward steps use probabilities conditioned on both known
    /// endpoints, so the imputed path follows the exact conditional law of
    /// the incidence chain. The final single-period step is
    /// [`bridge_positive_prob`].
    #[default]
    Conditioned,
    /// Forward steps draw `Bernoulli(λ_t)` and backward steps use
    /// [`backward_negative_prob`], ignoring the far endpoint.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusSequence {
    pub person_id: String,
    pub first_period: Period,
    pub statuses: Vec<u8>,
}

impl StatusSequence {
    pub fn last_period(&self) -> Period {
        self.first_period + self.statuses.len() as Period - 1
    }

    pub fn status_at(&self, period: Period) -> Option<u8> {
        let offset = period.checked_sub(self.first_period)?;
        usize::try_from(offset)
            .ok()
            .and_then(|i| self.statuses.get(i).copied())
    }

    /// First period with status 1, if any.
    pub fn first_positive(&self) -> Option<Period> {
        self.statuses
            .iter()
            .position(|&s| s == 1)
            .map(|i| self.first_period + i as Period)
    }

    pub fn is_monotone(&self) -> bool {
        self.statuses.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn periods(&self) -> impl Iterator<Item = (Period, u8)> + '_ {
        self.statuses
            .iter()
            .enumerate()
            .map(move |(i, &s)| (self.first_period + i as Period, s))
    }
}

/// Per-period rates along one participant's life in the cohort.
struct Trajectory {
    entry: Period,
    rates: Vec<Rates>,
}

impl Trajectory {
    fn new(rec: &SurveillanceRecord, table: &RateTable) -> Result<Self> {
        let rates = (rec.entry_period..=rec.exit_period)
            .map(|p| table.lookup(rec.sex, age_at_period_start(rec.birth_date, p), p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            entry: rec.entry_period,
            rates,
        })
    }

    fn idx(&self, p: Period) -> usize {
        (p - self.entry) as usize
    }
    fn mu(&self, p: Period) -> f64 {
        self.rates[self.idx(p)].prevalence
    }
    fn lambda(&self, p: Period) -> f64 {
        self.rates[self.idx(p)].incidence
    }

    /// `1 − Π_{u=from}^{to} (1 − λ_u)`: probability of converting somewhere in
    /// `from..=to` when negative just before `from`.
    fn conversion_mass(&self, from: Period, to: Period) -> f64 {
        let log_stay: f64 = (from..=to).map(|u| (-self.lambda(u)).ln_1p()).sum();
        -log_stay.exp_m1()
    }
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.gen::<f64>() < p
}

/// Impute one participant's status sequence, consistent with all tests.
pub fn impute_participant<R: Rng + ?Sized>(
    rec: &SurveillanceRecord,
    table: &RateTable,
    bridge: BridgeSampling,
    rng: &mut R,
) -> Result<StatusSequence> {
    let traj = Trajectory::new(rec, table)?;
    let n = rec.n_periods();
    let entry = rec.entry_period;
    let exit = rec.exit_period;
    let mut status = vec![0u8; n];
    let fill = |status: &mut Vec<u8>, from: Period, to: Period, v: u8| {
        for p in from..=to {
            status[(p - entry) as usize] = v;
        }
    };

    match rec.category() {
        TesterCategory::NeverTested => {
            let mut positive = bernoulli(rng, traj.mu(entry));
            status[0] = positive as u8;
            for p in entry + 1..=exit {
                if !positive {
                    positive = bernoulli(rng, traj.lambda(p));
                }
                status[(p - entry) as usize] = positive as u8;
            }
        }
        TesterCategory::OnlyNegative { last_negative } => {
            let mut positive = false;
            for p in last_negative + 1..=exit {
                if !positive {
                    positive = bernoulli(rng, traj.lambda(p));
                }
                status[(p - entry) as usize] = positive as u8;
            }
        }
        TesterCategory::OnlyPositive { first_positive } => {
            fill(&mut status, first_positive, exit, 1);
            let mut t = first_positive;
            while t > entry {
                let p_neg = backward_negative_prob(traj.mu(t - 1), traj.mu(t), traj.lambda(t))?;
                if bernoulli(rng, p_neg) {
                    break;
                }
                status[(t - 1 - entry) as usize] = 1;
                t -= 1;
            }
        }
        TesterCategory::NegativeThenPositive {
            last_negative,
            first_positive,
        } => {
            fill(&mut status, first_positive, exit, 1);
            // unknown stretch is lo..=hi; lo-1 is known negative, hi+1 known positive
            let mut lo = last_negative + 1;
            let mut hi = first_positive - 1;
            let mut forward = true;
            while lo <= hi {
                if lo == hi {
                    let p = bridge_positive_prob(traj.lambda(lo), traj.lambda(lo + 1))?;
                    if bernoulli(rng, p) {
                        status[(lo - entry) as usize] = 1;
                    }
                    break;
                }
                if forward {
                    let p_pos = match bridge {
                        BridgeSampling::Sequential => traj.lambda(lo),
                        BridgeSampling::Conditioned => {
                            let mass = traj.conversion_mass(lo, hi + 1);
                            if mass == 0.0 {
                                return Err(Error::ImpossibleObservation(format!(
                                    "zero incidence between {} and {}",
                                    lo,
                                    hi + 1
                                )));
                            }
                            (traj.lambda(lo) / mass).min(1.0)
                        }
                    };
                    if bernoulli(rng, p_pos) {
                        fill(&mut status, lo, hi, 1);
                        break;
                    }
                    lo += 1;
                } else {
                    let p_neg = match bridge {
                        BridgeSampling::Sequential => backward_negative_prob(
                            traj.mu(hi),
                            traj.mu(hi + 1),
                            traj.lambda(hi + 1),
                        )?,
                        BridgeSampling::Conditioned => {
                            let mass = traj.conversion_mass(lo, hi + 1);
                            if mass == 0.0 {
                                return Err(Error::ImpossibleObservation(format!(
                                    "zero incidence between {} and {}",
                                    lo,
                                    hi + 1
                                )));
                            }
                            let stay: f64 = (lo..=hi)
                                .map(|u| (-traj.lambda(u)).ln_1p())
                                .sum::<f64>()
                                .exp();
                            (stay * traj.lambda(hi + 1) / mass).min(1.0)
                        }
                    };
                    if bernoulli(rng, p_neg) {
                        // negative at hi and therefore throughout lo..=hi
                        break;
                    }
                    status[(hi - entry) as usize] = 1;
                    hi -= 1;
                }
                forward = !forward;
            }
        }
    }

    let seq = StatusSequence {
        person_id: rec.person_id.clone(),
        first_period: entry,
        statuses: status,
    };
    debug_assert!(seq.is_monotone());
    for &(p, r) in &rec.tests {
        let expected = (r == TestResult::Positive) as u8;
        assert_eq!(
            seq.status_at(p),
            Some(expected),
            "imputed status disagrees with test of {}",
            rec.person_id
        );
    }
    Ok(seq)
}

/// RNG stream for one participant in one replicate.
pub fn participant_stream(seed: u64, replicate: usize, person_id: &str) -> seed::Rng {
    seed::stream(
        seed,
        &[
            b"impute",
            &(replicate as u64).to_le_bytes(),
            person_id.as_bytes(),
        ],
    )
}

/// `m` independent imputed datasets. Randomness depends only on
/// `(seed, replicate, person_id)`.
pub fn impute_cohort(
    records: &[SurveillanceRecord],
    table: &RateTable,
    seed: u64,
    m: usize,
    bridge: BridgeSampling,
) -> Result<Vec<Vec<StatusSequence>>> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "replicate count must be at least 1".into(),
        ));
    }
    (0..m)
        .map(|r| {
            records
                .par_iter()
                .map(|rec| {
                    let mut rng = participant_stream(seed, r, &rec.person_id);
                    impute_participant(rec, table, bridge, &mut rng)
                        .map_err(|e| e.for_person(&rec.person_id))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    /// Constant incidence, prevalence growing so every pair stays coherent.
    fn flat_table(lambda: f64, mu: f64, periods: std::ops::RangeInclusive<Period>) -> RateTable {
        let rows = periods.flat_map(|p| {
            [Sex::Male, Sex::Female]
                .into_iter()
                .map(move |sex| RateRow {
                    sex,
                    age_group: AgeGroup::new(0, 120).unwrap(),
                    period: p,
                    rates: Rates {
                        prevalence: mu,
                        incidence: lambda,
                    },
                })
        });
        RateTable::new(rows).unwrap()
    }

    fn record(tests: Vec<(Period, TestResult)>, entry: Period, exit: Period) -> SurveillanceRecord {
        SurveillanceRecord {
            person_id: "p1".into(),
            sex: Sex::Female,
            birth_date: date(1990, 6, 1),
            entry_period: entry,
            exit_period: exit,
            tests,
        }
        .validated()
        .unwrap()
    }

    #[test]
    fn backward_examples() {
        assert_abs_diff_eq!(
            backward_negative_prob(0.2, 0.24, 0.05).unwrap(),
            1.0 / 6.0,
            epsilon = 1e-12
        );
        assert_eq!(backward_negative_prob(0.3, 0.3, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            backward_negative_prob(0.0, 0.07, 0.07).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            backward_negative_prob(0.1, 0.0, 0.1),
            Err(Error::DegenerateRate(_))
        ));
        assert!(matches!(
            backward_negative_prob(0.0, 0.1, 0.5),
            Err(Error::IncoherentRates(_))
        ));
    }

    #[test]
    fn backward_matches_joint_table() {
        // two-period chain: P(A0=0, A1=1) = (1-mu0) * lambda, P(A1=1) = mu1
        let (mu0, mu1, lambda) = (0.2, 0.24, 0.05);
        let joint_neg_pos = (1.0 - mu0) * lambda;
        assert_abs_diff_eq!(
            backward_negative_prob(mu0, mu1, lambda).unwrap(),
            joint_neg_pos / mu1,
            epsilon = 1e-15
        );
    }

    #[test]
    fn bridge_examples() {
        assert_abs_diff_eq!(
            bridge_positive_prob(0.1, 0.1).unwrap(),
            10.0 / 19.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bridge_positive_prob(0.1, 0.1).unwrap(),
            0.526316,
            epsilon = 1e-6
        );
        assert_eq!(bridge_positive_prob(0.3, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            bridge_positive_prob(0.2, 0.2).unwrap(),
            0.555556,
            epsilon = 1e-6
        );
        assert!(matches!(
            bridge_positive_prob(0.0, 0.0),
            Err(Error::ImpossibleObservation(_))
        ));
        // literal form 1 / (1 + λ_t (1 − λ_{t−1}) / λ_{t−1}) agrees where defined
        for (a, b) in [(0.1, 0.3), (0.01, 0.9), (0.5, 0.5)] {
            let literal = 1.0 / (1.0 + b * (1.0 - a) / a);
            assert_abs_diff_eq!(
                bridge_positive_prob(a, b).unwrap(),
                literal,
                epsilon = 1e-12
            );
        }
        assert!(bridge_positive_prob(1e-300, 1e-300).unwrap().is_finite());
    }

    #[test]
    fn record_validation() {
        let bad = SurveillanceRecord {
            person_id: "x".into(),
            sex: Sex::Male,
            birth_date: date(1990, 1, 1),
            entry_period: 2010,
            exit_period: 2015,
            tests: vec![(2012, TestResult::Positive), (2013, TestResult::Negative)],
        };
        assert!(matches!(
            bad.clone().validated(),
            Err(Error::InvalidRecord { .. })
        ));
        let outside = SurveillanceRecord {
            tests: vec![(2020, TestResult::Negative)],
            ..bad.clone()
        };
        assert!(outside.validated().is_err());
        let reversed = SurveillanceRecord {
            entry_period: 2016,
            tests: vec![],
            ..bad
        };
        assert!(reversed.validated().is_err());
    }

    #[test]
    fn age_uses_period_start() {
        assert_eq!(age_at_period_start(date(1990, 1, 1), 2020), 30);
        assert_eq!(age_at_period_start(date(1990, 1, 2), 2020), 29);
        assert_eq!(age_at_period_start(date(1990, 12, 31), 2020), 29);
    }

    #[test]
    fn incoherent_table_rejected() {
        let rows = vec![
            RateRow {
                sex: Sex::Male,
                age_group: AgeGroup::new(0, 99).unwrap(),
                period: 2010,
                rates: Rates {
                    prevalence: 0.0,
                    incidence: 0.1,
                },
            },
            RateRow {
                sex: Sex::Male,
                age_group: AgeGroup::new(0, 99).unwrap(),
                period: 2011,
                rates: Rates {
                    prevalence: 0.05,
                    incidence: 0.1,
                },
            },
        ];
        assert!(matches!(
            RateTable::new(rows),
            Err(Error::IncoherentRates(_))
        ));
    }

    #[test]
    fn overlapping_groups_rejected() {
        let row = |lo, hi| RateRow {
            sex: Sex::Male,
            age_group: AgeGroup::new(lo, hi).unwrap(),
            period: 2010,
            rates: Rates {
                prevalence: 0.1,
                incidence: 0.01,
            },
        };
        assert!(RateTable::new(vec![row(15, 19), row(19, 24)]).is_err());
        assert!(RateTable::new(vec![row(15, 19), row(20, 24)]).is_ok());
    }

    #[test]
    fn missing_rate_is_incomplete_table() {
        let table = flat_table(0.1, 0.3, 2010..=2012);
        let rec = record(vec![], 2010, 2014);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let err =
            impute_participant(&rec, &table, BridgeSampling::Conditioned, &mut rng).unwrap_err();
        assert!(matches!(err, Error::IncompleteTable(_)));
    }

    #[test]
    fn all_negative_is_all_zero() {
        let table = flat_table(0.3, 0.5, 2000..=2010);
        let tests = (2000..=2010).map(|p| (p, TestResult::Negative)).collect();
        let rec = record(tests, 2000, 2010);
        for s in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            let seq =
                impute_participant(&rec, &table, BridgeSampling::Conditioned, &mut rng).unwrap();
            assert!(seq.statuses.iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn positive_at_entry_is_all_one() {
        let table = flat_table(0.3, 0.5, 2000..=2010);
        let rec = record(vec![(2000, TestResult::Positive)], 2000, 2010);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let seq = impute_participant(&rec, &table, BridgeSampling::Conditioned, &mut rng).unwrap();
        assert!(seq.statuses.iter().all(|&v| v == 1));
        assert_eq!(seq.first_positive(), Some(2000));
    }

    /// Exact law of the conversion period given negative at `last_neg` and
    /// positive at `first_pos`, by enumerating every monotone path.
    fn conditioned_law(lambdas: &[f64]) -> Vec<f64> {
        // lambdas[k] is the incidence of the k-th period after the last negative;
        // conversion at k has weight Π_{u<k}(1-λ_u) λ_k
        let weights: Vec<f64> = (0..lambdas.len())
            .map(|k| lambdas[..k].iter().map(|l| 1.0 - l).product::<f64>() * lambdas[k])
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter().map(|w| w / total).collect()
    }

    #[test]
    fn conditioned_bridge_matches_path_enumeration() {
        // ages cross group boundaries so incidence varies per period
        let rows = (2000..=2010).flat_map(|p| {
            [(0, 9, 0.05), (10, 12, 0.2), (13, 15, 0.02), (16, 120, 0.3)]
                .into_iter()
                .map(move |(lo, hi, l)| RateRow {
                    sex: Sex::Female,
                    age_group: AgeGroup::new(lo, hi).unwrap(),
                    period: p,
                    rates: Rates {
                        prevalence: 0.5,
                        incidence: l,
                    },
                })
        });
        let table = RateTable::new(rows).unwrap();
        let mut rec = record(
            vec![(2001, TestResult::Negative), (2008, TestResult::Positive)],
            2000,
            2010,
        );
        rec.birth_date = date(1990, 1, 1);
        let lambdas: Vec<f64> = (2002..=2008)
            .map(|p| {
                table
                    .lookup(Sex::Female, age_at_period_start(rec.birth_date, p), p)
                    .unwrap()
                    .incidence
            })
            .collect();
        let exact = conditioned_law(&lambdas);
        let n = 200_000;
        let mut counts = vec![0usize; exact.len()];
        for i in 0..n {
            let mut rng = participant_stream(99, i, "p1");
            let seq =
                impute_participant(&rec, &table, BridgeSampling::Conditioned, &mut rng).unwrap();
            counts[(seq.first_positive().unwrap() - 2002) as usize] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let emp = c as f64 / n as f64;
            assert!(
                (emp - exact[k]).abs() < 0.005,
                "period {k}: {emp} vs {}",
                exact[k]
            );
        }
    }

    #[test]
    fn sequential_bridge_follows_its_own_step_law() {
        // 4 unknown periods, constant λ = 0.1, constant μ = 0.3.
        // forward(2) → backward(5) → forward(3) → bridge(4)
        let (l, mu) = (0.1f64, 0.3f64);
        let table = flat_table(l, mu, 2000..=2005);
        let rec = record(
            vec![(2000, TestResult::Negative), (2005, TestResult::Positive)],
            2000,
            2005,
        );
        let back_neg = (1.0 - mu) / mu * l;
        let bridge = l / (l + l * (1.0 - l));
        let expected = [
            l,
            (1.0 - l) * (1.0 - back_neg) * l,
            (1.0 - l) * (1.0 - back_neg) * (1.0 - l) * bridge,
            (1.0 - l) * (1.0 - back_neg) * (1.0 - l) * (1.0 - bridge),
            (1.0 - l) * back_neg,
        ];
        let n = 200_000;
        let mut counts = [0usize; 5];
        for i in 0..n {
            let mut rng = participant_stream(5, i, "p1");
            let seq =
                impute_participant(&rec, &table, BridgeSampling::Sequential, &mut rng).unwrap();
            counts[(seq.first_positive().unwrap() - 2001) as usize] += 1;
        }
        for k in 0..5 {
            let emp = counts[k] as f64 / n as f64;
            assert!(
                (emp - expected[k]).abs() < 0.005,
                "slot {k}: {emp} vs {}",
                expected[k]
            );
        }
    }

    #[test]
    fn only_positive_backward_law() {
        // P(first positive = 2003 | positive at 2003) = 1 - back_neg
        let (l, mu) = (0.05, 0.25);
        let table = flat_table(l, mu, 2000..=2003);
        let rec = record(vec![(2003, TestResult::Positive)], 2000, 2003);
        let back_neg = backward_negative_prob(mu, mu, l).unwrap();
        let n = 100_000;
        let mut at_test = 0;
        for i in 0..n {
            let mut rng = participant_stream(8, i, "p1");
            let seq =
                impute_participant(&rec, &table, BridgeSampling::Conditioned, &mut rng).unwrap();
            assert!(seq.is_monotone());
            if seq.first_positive() == Some(2003) {
                at_test += 1;
            }
        }
        let emp = at_test as f64 / n as f64;
        let se = (back_neg * (1.0 - back_neg) / n as f64).sqrt();
        assert!((emp - back_neg).abs() < 4.0 * se, "{emp} vs {back_neg}");
    }

    #[test]
    fn cohort_is_deterministic_and_schedule_free() {
        let table = flat_table(0.05, 0.2, 2000..=2010);
        let records: Vec<_> = (0..300)
            .map(|i| SurveillanceRecord {
                person_id: format!("p{i}"),
                sex: if i % 2 == 0 { Sex::Male } else { Sex::Female },
                birth_date: date(1980 + i % 20, 3, 1),
                entry_period: 2000 + i % 4,
                exit_period: 2010 - i % 3,
                tests: if i % 3 == 0 {
                    vec![(2005, TestResult::Negative)]
                } else {
                    vec![]
                },
            })
            .collect();
        let a = impute_cohort(&records, &table, 7, 2, BridgeSampling::Conditioned).unwrap();
        let b = impute_cohort(&records, &table, 7, 2, BridgeSampling::Conditioned).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = single.install(|| {
            impute_cohort(&records, &table, 7, 2, BridgeSampling::Conditioned).unwrap()
        });
        assert_eq!(a, c);
        // reordering the input does not change any participant's draw
        let mut reversed = records.clone();
        reversed.reverse();
        let d = impute_cohort(&reversed, &table, 7, 2, BridgeSampling::Conditioned).unwrap();
        let mut d0 = d[0].clone();
        d0.reverse();
        assert_eq!(a[0], d0);
        assert_ne!(a[0], a[1]);
        assert!(impute_cohort(&records, &table, 7, 0, BridgeSampling::Conditioned).is_err());
    }

    #[test]
    fn cohort_errors_carry_person_id() {
        let table = flat_table(0.05, 0.2, 2000..=2005);
        let rec = SurveillanceRecord {
            person_id: "late".into(),
            sex: Sex::Male,
            birth_date: date(1980, 1, 1),
            entry_period: 2004,
            exit_period: 2008,
            tests: vec![],
        };
        match impute_cohort(&[rec], &table, 1, 1, BridgeSampling::Conditioned) {
            Err(Error::Person { person_id, .. }) => assert_eq!(person_id, "late"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn never_tested_with_full_prevalence_all_positive() {
        let table = flat_table(0.0, 1.0, 2000..=2003);
        let records: Vec<_> = (0..50)
            .map(|i| SurveillanceRecord {
                person_id: format!("n{i}"),
                ..record(vec![], 2000, 2003)
            })
            .collect();
        let out = impute_cohort(&records, &table, 3, 1, BridgeSampling::Conditioned).unwrap();
        assert!(out[0].iter().all(|s| s.statuses.iter().all(|&v| v == 1)));
    }

    #[test]
    fn never_tested_first_period_share_matches_prevalence() {
        let mu = 0.27;
        let table = flat_table(0.02, mu, 2000..=2001);
        let n = 50_000;
        let records: Vec<_> = (0..n)
            .map(|i| SurveillanceRecord {
                person_id: format!("n{i}"),
                ..record(vec![], 2000, 2001)
            })
            .collect();
        let out = impute_cohort(&records, &table, 11, 1, BridgeSampling::Conditioned).unwrap();
        let share = out[0].iter().filter(|s| s.statuses[0] == 1).count() as f64 / n as f64;
        let se = (mu * (1.0 - mu) / n as f64).sqrt();
        assert!((share - mu).abs() < 3.0 * se, "{share} vs {mu}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn imputation_is_monotone_and_test_consistent(
            entry in 2000i32..2004,
            len in 1i32..8,
            neg_off in proptest::option::of(0i32..8),
            pos_gap in proptest::option::of(1i32..8),
            seed in any::<u64>(),
            sequential in any::<bool>(),
        ) {
            let exit = entry + len - 1;
            let table = flat_table(0.08, 0.3, 1995..=2015);
            let mut tests = Vec::new();
            let neg = neg_off.map(|o| entry + o % len);
            if let Some(n) = neg { tests.push((n, TestResult::Negative)); }
            if let Some(g) = pos_gap {
                let p = neg.map_or(entry + g % len, |n| n + g);
                if p <= exit { tests.push((p, TestResult::Positive)); }
            }
            let rec = record(tests.clone(), entry, exit);
            let mode = if sequential { BridgeSampling::Sequential } else { BridgeSampling::Conditioned };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let seq = impute_participant(&rec, &table, mode, &mut rng).unwrap();
            prop_assert!(seq.is_monotone());
            prop_assert_eq!(seq.statuses.len(), rec.n_periods());
            for (p, r) in tests {
                prop_assert_eq!(seq.status_at(p), Some((r == TestResult::Positive) as u8));
            }
        }
    }
}
