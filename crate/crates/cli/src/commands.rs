use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ctxexp_core::hiv_imputation::{BridgeSampling, StatusSequence};
use ctxexp_core::spatial_grid::{Grid, Projection, RegionIndex};

use crate::config::{GridConfig, PipelineConfig, Units};
use crate::error::{CliError, CliResult};
use crate::io::{self, ExposureRow, Participant, Source};
use crate::output::{Outputs, RunManifest, StageTimer};
use crate::stages::{self, ActivityRecord, Analysis, AnalysisInputs};
use crate::synth;
use crate::validate::{validate_inputs, InputKind, ValidateOptions, ValidationReport};

#[derive(Debug, Parser)]
#[command(
    name = "ctxexp",
    version,
    about = "Contextual exposure estimation pipeline"
)]
pub struct Cli {
    /// Pipeline config (TOML); for `synth`, a synthetic-data config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Read and write prevalence values as percentages.
    #[arg(long, global = true)]
    pub percent: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Cohort,
    Trajectories,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bridge {
    Conditioned,
    Sequential,
}

impl From<Bridge> for BridgeSampling {
    fn from(b: Bridge) -> Self {
        match b {
            Bridge::Conditioned => BridgeSampling::Conditioned,
            Bridge::Sequential => BridgeSampling::Sequential,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort or trajectory set with ground truth.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Impute per-period status sequences.
    Impute {
        #[arg(long)]
        tests: PathBuf,
        #[arg(long)]
        rates: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, value_enum)]
        bridge: Option<Bridge>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Kernel-smoothed grid prevalence for one period.
    Prevalence {
        /// Config file holding the [grid] and [kernel] sections.
        #[arg(long)]
        grid_config: Option<PathBuf>,
        #[arg(long)]
        homesteads: PathBuf,
        #[arg(long)]
        residents: PathBuf,
        /// Status files, or a directory of `status_<r>.csv`.
        #[arg(long, num_args = 1.., required = true)]
        status: Vec<PathBuf>,
        /// Excludes residents outside the study area when given.
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long)]
        period: Option<i32>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Segment trajectories and estimate activity distributions.
    Activity {
        #[arg(long)]
        fixes: PathBuf,
        #[arg(long)]
        grid_config: Option<PathBuf>,
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        gap_min: Option<f64>,
        #[arg(long)]
        gammas: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Exposure measures from activity output and prevalence.
    Exposure {
        #[arg(long)]
        activity_dir: PathBuf,
        #[arg(long)]
        prevalence: PathBuf,
        #[arg(long)]
        district_prevalence: PathBuf,
        /// Checks that every visited district has a boundary.
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long)]
        grid_config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Cohort analyses on exposure and activity output.
    Analyze {
        #[arg(value_enum)]
        analyses: Vec<Analysis>,
        #[arg(long)]
        exposure: PathBuf,
        #[arg(long)]
        activity_dir: PathBuf,
        #[arg(long)]
        participants: Option<PathBuf>,
        #[arg(long)]
        prevalence: Option<PathBuf>,
        #[arg(long)]
        district_prevalence: Option<PathBuf>,
        #[arg(long)]
        grid_config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Every stage from the inputs named in the config.
    Run {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check input files without computing.
    Validate {
        #[arg(long)]
        tests: Option<PathBuf>,
        #[arg(long)]
        rates: Option<PathBuf>,
        #[arg(long)]
        homesteads: Option<PathBuf>,
        #[arg(long)]
        residents: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        status: Vec<PathBuf>,
        #[arg(long)]
        fixes: Option<PathBuf>,
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long)]
        district_prevalence: Option<PathBuf>,
        #[arg(long)]
        participants: Option<PathBuf>,
        #[arg(long)]
        prevalence: Option<PathBuf>,
        #[arg(long)]
        exposure: Option<PathBuf>,
    },
}

pub enum Outcome {
    Written { dir: PathBuf, manifest: RunManifest },
    Validated(ValidationReport),
}

impl Cli {
    /// Effective config: file (or `alt`), then flag overrides.
    fn pipeline_config(&self, alt: Option<&Path>) -> CliResult<PipelineConfig> {
        let mut cfg = match alt.or(self.config.as_deref()) {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.percent {
            cfg.units = Units::Percent;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn units(&self, cfg: &PipelineConfig) -> Units {
        if self.percent {
            Units::Percent
        } else {
            cfg.units
        }
    }
}

struct Spatial {
    proj: Projection,
    grid: Grid,
}

fn spatial(g: &GridConfig) -> CliResult<Spatial> {
    Ok(Spatial {
        proj: g.projection()?,
        grid: g.grid()?,
    })
}

fn read(manifest: &mut RunManifest, path: &Path) -> CliResult<Source> {
    let src = Source::read(path)?;
    manifest.input(&src);
    Ok(src)
}

fn load_regions(
    manifest: &mut RunManifest,
    path: &Path,
    proj: &Projection,
) -> CliResult<RegionIndex> {
    let src = read(manifest, path)?;
    let text = std::str::from_utf8(&src.bytes)
        .map_err(|_| CliError::Validation(format!("{}: not UTF-8", src.name)))?;
    RegionIndex::from_geojson(text, proj)
        .map_err(|e| CliError::Validation(format!("{}: {e}", src.name)))
}

fn load_datasets(
    manifest: &mut RunManifest,
    paths: &[PathBuf],
) -> CliResult<Vec<Vec<StatusSequence>>> {
    let files = if paths.len() == 1 && paths[0].is_dir() {
        io::status_files(&paths[0])?
    } else {
        paths.to_vec()
    };
    files
        .iter()
        .map(|p| io::load_status(&read(manifest, p)?))
        .collect()
}

fn new_manifest(command: &str, cfg: &PipelineConfig) -> RunManifest {
    let mut m = RunManifest::new(command, cfg.units);
    m.config_hash = Some(cfg.hash());
    m.seed = Some(cfg.seed);
    m
}

fn commit(out: Outputs, dir: &Path, manifest: RunManifest) -> CliResult<Outcome> {
    let manifest = out.commit(dir, manifest)?;
    Ok(Outcome::Written {
        dir: dir.to_path_buf(),
        manifest,
    })
}

pub fn execute(cli: &Cli) -> CliResult<Outcome> {
    match &cli.command {
        Command::Synth { kind, out_dir } => {
            let mut cfg = synth::load_config(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let units = if cli.percent {
                Units::Percent
            } else {
                Units::Proportion
            };
            let mut m = RunManifest::new(&format!("synth {kind:?}").to_lowercase(), units);
            m.seed = Some(cfg.seed);
            m.config_hash = Some(crate::output::sha256_hex(
                &serde_json::to_vec(&cfg).expect("config serializes"),
            ));
            let mut timer = StageTimer::start("synth");
            let out = match kind {
                SynthKind::Cohort => synth::cohort(&cfg, units, &mut timer)?,
                SynthKind::Trajectories => synth::trajectories(&cfg, units, &mut timer)?,
            };
            m.stages.push(timer.finish());
            commit(out, out_dir, m)
        }

        Command::Impute {
            tests,
            rates,
            replicates,
            bridge,
            out_dir,
        } => {
            let cfg = cli.pipeline_config(None)?;
            let mut m = new_manifest("impute", &cfg);
            let records = io::load_tests(&read(&mut m, tests)?)?;
            let table = io::load_rates(&read(&mut m, rates)?)?;
            let reps = replicates.unwrap_or(cfg.replicates);
            let bridge = bridge.map(Into::into).unwrap_or(cfg.imputation.bridge);
            let mut timer = StageTimer::start("impute");
            let datasets = stages::impute(&records, &table, cfg.seed, reps, bridge, &mut timer)?;
            let mut out = Outputs::new();
            stages::write_status(&mut out, &datasets);
            m.stages.push(timer.finish());
            commit(out, out_dir, m)
        }

        Command::Prevalence {
            grid_config,
            homesteads,
            residents,
            status,
            regions,
            period,
            out_dir,
        } => {
            let cfg = cli.pipeline_config(grid_config.as_deref())?;
            let sp = spatial(cfg.require_grid()?)?;
            let mut m = new_manifest("prevalence", &cfg);
            let hs = io::load_homesteads(&read(&mut m, homesteads)?, &sp.proj)?;
            let res = io::load_residents(&read(&mut m, residents)?)?;
            let datasets = load_datasets(&mut m, status)?;
            let regions = match regions {
                Some(p) => Some(load_regions(&mut m, p, &sp.proj)?),
                None => None,
            };
            let period = period
                .or(cfg.prevalence.period)
                .or_else(|| stages::default_period(&res))
                .ok_or_else(|| CliError::Validation("prevalence: no residence periods".into()))?;
            let mut timer = StageTimer::start("prevalence");
            let field = stages::prevalence(
                &sp.grid,
                &cfg.kernel.params()?,
                &hs,
                &res,
                &datasets,
                period,
                regions.as_ref(),
                &mut timer,
            )?;
            let mut out = Outputs::new();
            stages::write_prevalence(&mut out, &field, cli.units(&cfg));
            m.stages.push(timer.finish());
            commit(out, out_dir, m)
        }

        Command::Activity {
            fixes,
            grid_config,
            regions,
            gap_min,
            gammas,
            out_dir,
        } => {
            let mut cfg = cli.pipeline_config(grid_config.as_deref())?;
            if let Some(g) = gap_min {
                cfg.activity.gap_minutes = *g;
            }
            if let Some(g) = gammas {
                cfg.activity.gammas = g.clone();
            }
            cfg.validate()?;
            let sp = spatial(cfg.require_grid()?)?;
            let mut m = new_manifest("activity", &cfg);
            let (seqs, dropped) = io::load_fixes(&read(&mut m, fixes)?, &sp.proj)?;
            let idx = load_regions(&mut m, regions, &sp.proj)?;
            let mut timer = StageTimer::start("activity");
            if dropped > 0 {
                timer.warn(format!("{dropped} fixes with duplicate timestamps dropped"));
            }
            let recs = stages::activity(
                &seqs,
                &sp.grid,
                &idx,
                cfg.activity.gap_seconds(),
                &mut timer,
            );
            let mut out = Outputs::new();
            stages::write_activity(&mut out, &recs, &cfg.activity.levels()?)?;
            m.stages.push(timer.finish());
            commit(out, out_dir, m)
        }

        Command::Exposure {
            activity_dir,
            prevalence,
            district_prevalence,
            regions,
            grid_config,
            out_dir,
        } => {
            let cfg = cli.pipeline_config(grid_config.as_deref())?;
            let units = cli.units(&cfg);
            let sp = spatial(cfg.require_grid()?)?;
            let mut m = new_manifest("exposure", &cfg);
            let (recs, srcs) = stages::load_activity_dir(activity_dir)?;
            srcs.iter().for_each(|s| m.input(s));
            let period = io::period_from_name(prevalence).unwrap_or_default();
            let field = io::load_prevalence(&read(&mut m, prevalence)?, &sp.grid, period, units)?;
            let dp = stages::district_prevalence(io::load_district_prevalence(
                &read(&mut m, district_prevalence)?,
                units,
            )?)?;
            let mut timer = StageTimer::start("exposure");
            if let Some(p) = regions {
                let idx = load_regions(&mut m, p, &sp.proj)?;
                let known: BTreeSet<&String> = idx.districts().keys().collect();
                let unknown: BTreeSet<&String> = recs
                    .iter()
                    .flat_map(|r| r.district_seconds.keys())
                    .filter(|d| !known.contains(d))
                    .collect();
                for d in unknown {
                    timer.warn(format!(
                        "district {d} has time but no boundary in the regions file"
                    ));
                }
            }
            let profiles =
                stages::exposure(&recs, &field, &dp, cfg.activity.home_level, &mut timer)?;
            let mut out = Outputs::new();
            stages::write_exposure(&mut out, &stages::exposure_rows(&profiles), units);
            m.stages.push(timer.finish());
            commit(out, out_dir, m)
        }

        Command::Analyze {
            analyses,
            exposure,
            activity_dir,
            participants,
            prevalence,
            district_prevalence,
            grid_config,
            out_dir,
        } => {
            let cfg = cli.pipeline_config(grid_config.as_deref())?;
            let units = cli.units(&cfg);
            let sp = spatial(cfg.require_grid()?)?;
            let mut m = new_manifest("analyze", &cfg);
            let rows = io::load_exposure(&read(&mut m, exposure)?, units)?;
            let (recs, srcs) = stages::load_activity_dir(activity_dir)?;
            srcs.iter().for_each(|s| m.input(s));
            let parts = match participants {
                Some(p) => Some(io::load_participants(&read(&mut m, p)?)?),
                None => None,
            };
            let field = match prevalence {
                Some(p) => {
                    let period = io::period_from_name(p).unwrap_or_default();
                    Some(io::load_prevalence(
                        &read(&mut m, p)?,
                        &sp.grid,
                        period,
                        units,
                    )?)
                }
                None => None,
            };
            let dp = match district_prevalence {
                Some(p) => Some(stages::district_prevalence(io::load_district_prevalence(
                    &read(&mut m, p)?,
                    units,
                )?)?),
                None => None,
            };
            let inputs = AnalysisInputs {
                exposure: &rows,
                activity: &recs,
                participants: parts.as_deref(),
                field: field.as_ref(),
                districts: dp.as_ref(),
                grid: &sp.grid,
                home_level: cfg.activity.home_level,
                seed: cfg.seed,
                units,
            };
            let mut out = Outputs::new();
            let which = Analysis::expand(analyses);
            m.stages = stages::analyze(&which, &inputs, &cfg.analysis, &mut out)?;
            commit(out, out_dir, m)
        }

        Command::Run { out_dir } => {
            let cfg = cli.pipeline_config(None)?;
            let dir = out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
            run_pipeline(&cfg, &dir)
        }

        Command::Validate {
            tests,
            rates,
            homesteads,
            residents,
            status,
            fixes,
            regions,
            district_prevalence,
            participants,
            prevalence,
            exposure,
        } => {
            let cfg = cli.pipeline_config(None)?;
            let mut files: Vec<(PathBuf, InputKind)> = Vec::new();
            let explicit = [
                (tests, InputKind::Tests),
                (rates, InputKind::Rates),
                (homesteads, InputKind::Homesteads),
                (residents, InputKind::Residents),
                (fixes, InputKind::Fixes),
                (regions, InputKind::Regions),
                (district_prevalence, InputKind::DistrictPrevalence),
                (participants, InputKind::Participants),
                (prevalence, InputKind::Prevalence),
                (exposure, InputKind::Exposure),
            ];
            for (p, k) in explicit {
                if let Some(p) = p {
                    files.push((p.clone(), k));
                }
            }
            files.extend(status.iter().map(|p| (p.clone(), InputKind::Status)));
            if files.is_empty() {
                let i = &cfg.inputs;
                let from_cfg = [
                    (&i.tests, InputKind::Tests),
                    (&i.rates, InputKind::Rates),
                    (&i.homesteads, InputKind::Homesteads),
                    (&i.residents, InputKind::Residents),
                    (&i.fixes, InputKind::Fixes),
                    (&i.regions, InputKind::Regions),
                    (&i.district_prevalence, InputKind::DistrictPrevalence),
                    (&i.participants, InputKind::Participants),
                ];
                for (p, k) in from_cfg {
                    if let Some(p) = p {
                        files.push((p.clone(), k));
                    }
                }
            }
            if files.is_empty() {
                return Err(CliError::Validation(
                    "validate: no input files given on the command line or in the config".into(),
                ));
            }
            let sp = match &cfg.grid {
                Some(g) => Some(spatial(g)?),
                None => None,
            };
            let projection = match &sp {
                Some(s) => s.proj,
                None => Projection::at_origin(0.0, 0.0).expect("valid origin"),
            };
            let opt = ValidateOptions {
                units: cli.units(&cfg),
                projection,
                grid: sp.as_ref().map(|s| &s.grid),
            };
            Ok(Outcome::Validated(validate_inputs(&files, &opt)))
        }
    }
}

/// All stages in order, passing typed data between them; outputs are
/// committed only if every stage succeeds.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> CliResult<Outcome> {
    let sp = spatial(cfg.require_grid()?)?;
    let inp = &cfg.inputs;
    let units = cfg.units;
    let mut m = new_manifest("run", cfg);
    let mut out = Outputs::new();

    let records = io::load_tests(&read(&mut m, inp.require("tests")?)?)?;
    let table = io::load_rates(&read(&mut m, inp.require("rates")?)?)?;
    let homesteads = io::load_homesteads(&read(&mut m, inp.require("homesteads")?)?, &sp.proj)?;
    let residents = io::load_residents(&read(&mut m, inp.require("residents")?)?)?;
    let (seqs, dropped) = io::load_fixes(&read(&mut m, inp.require("fixes")?)?, &sp.proj)?;
    let regions = load_regions(&mut m, inp.require("regions")?, &sp.proj)?;
    let dp = stages::district_prevalence(io::load_district_prevalence(
        &read(&mut m, inp.require("district_prevalence")?)?,
        units,
    )?)?;
    let participants: Option<Vec<Participant>> = match &inp.participants {
        Some(p) => Some(io::load_participants(&read(&mut m, p)?)?),
        None => None,
    };

    let mut timer = StageTimer::start("impute");
    let datasets = stages::impute(
        &records,
        &table,
        cfg.seed,
        cfg.replicates,
        cfg.imputation.bridge,
        &mut timer,
    )?;
    stages::write_status(&mut out, &datasets);
    m.stages.push(timer.finish());

    let mut timer = StageTimer::start("prevalence");
    let period = cfg
        .prevalence
        .period
        .or_else(|| stages::default_period(&residents))
        .ok_or_else(|| CliError::Validation("prevalence: no residence periods".into()))?;
    let field = stages::prevalence(
        &sp.grid,
        &cfg.kernel.params()?,
        &homesteads,
        &residents,
        &datasets,
        period,
        Some(&regions),
        &mut timer,
    )?;
    stages::write_prevalence(&mut out, &field, units);
    m.stages.push(timer.finish());

    let mut timer = StageTimer::start("activity");
    if dropped > 0 {
        timer.warn(format!("{dropped} fixes with duplicate timestamps dropped"));
    }
    let recs: Vec<ActivityRecord> = stages::activity(
        &seqs,
        &sp.grid,
        &regions,
        cfg.activity.gap_seconds(),
        &mut timer,
    );
    stages::write_activity(&mut out, &recs, &cfg.activity.levels()?)?;
    m.stages.push(timer.finish());

    let mut timer = StageTimer::start("exposure");
    let profiles = stages::exposure(&recs, &field, &dp, cfg.activity.home_level, &mut timer)?;
    let rows: Vec<ExposureRow> = stages::exposure_rows(&profiles);
    stages::write_exposure(&mut out, &rows, units);
    m.stages.push(timer.finish());

    let mut which = Analysis::expand(&[]);
    if participants.is_none() {
        let mut timer = StageTimer::start("analyze");
        for a in [Analysis::Coverage, Analysis::Overlap, Analysis::Design] {
            which.remove(&a);
            timer.warn(format!("{} skipped: no participants file", a.name()));
        }
        m.stages.push(timer.finish());
    }
    let inputs = AnalysisInputs {
        exposure: &rows,
        activity: &recs,
        participants: participants.as_deref(),
        field: Some(&field),
        districts: Some(&dp),
        grid: &sp.grid,
        home_level: cfg.activity.home_level,
        seed: cfg.seed,
        units,
    };
    m.stages
        .extend(stages::analyze(&which, &inputs, &cfg.analysis, &mut out)?);

    commit(out, out_dir, m)
}
