use std::fmt;
use std::path::{Path, PathBuf};

use ctxexp_core::activity::{parse_levels, PoolMode, DEFAULT_GAP_SECONDS, HOME_LEVEL};
use ctxexp_core::cohort_analysis::{
    DEFAULT_HIGH_PERCENTILE, DEFAULT_LOG_EPSILON, DEFAULT_LOW_PERCENTILE, DEFAULT_RESTARTS,
};
use ctxexp_core::hiv_imputation::{BridgeSampling, Period};
use ctxexp_core::prevalence_field::{KernelParams, DEFAULT_BANDWIDTH_KM, DEFAULT_RADIUS_KM};
use ctxexp_core::spatial_grid::{Grid, PlanarPoint, Projection};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// How prevalence values are written and read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Proportion,
    Percent,
}

impl Units {
    fn scale(self) -> f64 {
        match self {
            Units::Proportion => 1.0,
            Units::Percent => 100.0,
        }
    }

    pub fn write(self, p: f64) -> f64 {
        p * self.scale()
    }

    /// Back to a proportion; `None` if out of range for these units.
    pub fn read(self, v: f64) -> Option<f64> {
        (0.0..=self.scale())
            .contains(&v)
            .then(|| (v / self.scale()).min(1.0))
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Units::Proportion => "proportion",
            Units::Percent => "percent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Lower-left corner of the grid.
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub cell_size_m: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl GridConfig {
    pub fn projection(&self) -> CliResult<Projection> {
        Projection::at_origin(self.origin_lon, self.origin_lat)
            .map_err(|e| CliError::Validation(format!("grid: {e}")))
    }

    pub fn grid(&self) -> CliResult<Grid> {
        Grid::new(
            PlanarPoint::new(0.0, 0.0),
            self.cell_size_m,
            self.n_cols,
            self.n_rows,
        )
        .map_err(|e| CliError::Validation(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub bandwidth_km: f64,
    pub radius_km: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth_km: DEFAULT_BANDWIDTH_KM,
            radius_km: DEFAULT_RADIUS_KM,
        }
    }
}

impl KernelConfig {
    pub fn params(&self) -> CliResult<KernelParams> {
        KernelParams::new(self.bandwidth_km, self.radius_km)
            .map_err(|e| CliError::Validation(format!("kernel: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputationConfig {
    pub bridge: BridgeSampling,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig {
            bridge: BridgeSampling::Conditioned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrevalenceConfig {
    /// Period of the field; defaults to the latest residence period.
    pub period: Option<Period>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityConfig {
    pub gap_minutes: f64,
    /// Levels for `spaces.csv`, e.g. `50:95:1,100`.
    pub gammas: String,
    pub home_level: f64,
}

impl Default for ActivityConfig {
    fn default() -> Self {
        ActivityConfig {
            gap_minutes: DEFAULT_GAP_SECONDS / 60.0,
            gammas: "50:95:1,100".into(),
            home_level: HOME_LEVEL,
        }
    }
}

impl ActivityConfig {
    pub fn gap_seconds(&self) -> f64 {
        self.gap_minutes * 60.0
    }

    pub fn levels(&self) -> CliResult<Vec<f64>> {
        parse_levels(&self.gammas)
            .map_err(|e| CliError::Validation(format!("activity.gammas: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub p_low: f64,
    pub p_high: f64,
    pub clusters: usize,
    pub restarts: usize,
    pub log_epsilon: f64,
    /// Resampling repetitions for balanced coverage curves; 0 disables.
    pub coverage_repetitions: usize,
    pub coverage_gammas: String,
    pub overlap_gammas: Vec<f64>,
    pub pool: PoolMode,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            p_low: DEFAULT_LOW_PERCENTILE,
            p_high: DEFAULT_HIGH_PERCENTILE,
            clusters: 3,
            restarts: DEFAULT_RESTARTS,
            log_epsilon: DEFAULT_LOG_EPSILON,
            coverage_repetitions: 100,
            coverage_gammas: "50:95:5,100".into(),
            overlap_gammas: vec![65.0, 95.0, 100.0],
            pool: PoolMode::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn coverage_levels(&self) -> CliResult<Vec<f64>> {
        parse_levels(&self.coverage_gammas)
            .map_err(|e| CliError::Validation(format!("analysis.coverage_gammas: {e}")))
    }
}

/// Input paths, relative to the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub tests: Option<PathBuf>,
    pub rates: Option<PathBuf>,
    pub homesteads: Option<PathBuf>,
    pub residents: Option<PathBuf>,
    pub fixes: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub district_prevalence: Option<PathBuf>,
    pub participants: Option<PathBuf>,
}

impl InputPaths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.tests,
            &mut self.rates,
            &mut self.homesteads,
            &mut self.residents,
            &mut self.fixes,
            &mut self.regions,
            &mut self.district_prevalence,
            &mut self.participants,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn require(&self, name: &str) -> CliResult<&Path> {
        let p = match name {
            "tests" => &self.tests,
            "rates" => &self.rates,
            "homesteads" => &self.homesteads,
            "residents" => &self.residents,
            "fixes" => &self.fixes,
            "regions" => &self.regions,
            "district_prevalence" => &self.district_prevalence,
            "participants" => &self.participants,
            _ => &None,
        };
        p.as_deref()
            .ok_or_else(|| CliError::Validation(format!("config: inputs.{name} is required")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub replicates: usize,
    pub units: Units,
    pub grid: Option<GridConfig>,
    pub kernel: KernelConfig,
    pub imputation: ImputationConfig,
    pub prevalence: PrevalenceConfig,
    pub activity: ActivityConfig,
    pub analysis: AnalysisConfig,
    pub inputs: InputPaths,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            replicates: 5,
            units: Units::Proportion,
            grid: None,
            kernel: KernelConfig::default(),
            imputation: ImputationConfig::default(),
            prevalence: PrevalenceConfig::default(),
            activity: ActivityConfig::default(),
            analysis: AnalysisConfig::default(),
            inputs: InputPaths::default(),
            output: OutputConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Read and validate; relative paths are resolved against the file's
    /// directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.inputs.resolve(base);
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Validation(format!("config: {m}")));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if let Some(g) = &self.grid {
            g.projection()?;
            g.grid()?;
        }
        self.kernel.params()?;
        let a = &self.activity;
        if !(a.gap_minutes.is_finite() && a.gap_minutes > 0.0) {
            return bad(format!(
                "activity.gap_minutes = {} must be positive",
                a.gap_minutes
            ));
        }
        if !(a.home_level > 0.0 && a.home_level <= 100.0) {
            return bad(format!(
                "activity.home_level = {} must lie in (0, 100]",
                a.home_level
            ));
        }
        a.levels()?;
        let n = &self.analysis;
        if !(0.0 <= n.p_low && n.p_low <= n.p_high && n.p_high <= 100.0) {
            return bad(format!(
                "analysis percentiles must satisfy 0 <= p_low ({}) <= p_high ({}) <= 100",
                n.p_low, n.p_high
            ));
        }
        if !(1..=3).contains(&n.clusters) {
            return bad(format!(
                "analysis.clusters = {} must be 1, 2 or 3",
                n.clusters
            ));
        }
        if n.restarts == 0 {
            return bad("analysis.restarts must be at least 1".into());
        }
        if !(n.log_epsilon.is_finite() && n.log_epsilon > 0.0) {
            return bad(format!(
                "analysis.log_epsilon = {} must be positive",
                n.log_epsilon
            ));
        }
        n.coverage_levels()?;
        if let Some(g) = n
            .overlap_gammas
            .iter()
            .find(|g| !(**g > 0.0 && **g <= 100.0))
        {
            return bad(format!("analysis.overlap_gammas: {g} must lie in (0, 100]"));
        }
        Ok(())
    }

    pub fn require_grid(&self) -> CliResult<&GridConfig> {
        self.grid
            .as_ref()
            .ok_or_else(|| CliError::Validation("config: [grid] section is required".into()))
    }

    /// Digest of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_constants() {
        let c = PipelineConfig::parse("").unwrap();
        assert_eq!(c.activity.gap_minutes, 30.0);
        assert_eq!(c.kernel.bandwidth_km, 1.165);
        assert_eq!(c.kernel.radius_km, 3.0);
        assert_eq!(c.activity.home_level, 50.0);
        assert_eq!((c.analysis.p_low, c.analysis.p_high), (40.0, 60.0));
        assert_eq!(c.analysis.log_epsilon, 1e-15);
        assert_eq!(c.imputation.bridge, BridgeSampling::Conditioned);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::parse("sede = 3").is_err());
        assert!(PipelineConfig::parse("[grid]\norigin_lon = 1\norigin_lat = 2\ncell_size_m = 500\nn_cols = 2\nn_rows = 2\nextra = 1").is_err());
        assert!(PipelineConfig::parse("[activity]\ngap_minutes = 15").is_ok());
    }

    #[test]
    fn validation_catches_ranges() {
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        c.analysis.p_low = 70.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.kernel.radius_km = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn units_round_trip() {
        assert_eq!(Units::Percent.write(0.25), 25.0);
        assert_eq!(Units::Percent.read(25.0), Some(0.25));
        assert_eq!(Units::Proportion.read(1.5), None);
        assert_eq!(Units::Percent.read(150.0), None);
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
