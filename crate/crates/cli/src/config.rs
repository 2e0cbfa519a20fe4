//! TOML run configuration.
//!
//! Every key is optional. Relative paths are resolved against the
//! directory of the config file. The top-level `seed` drives both the
//! synthetic generator and training.

use std::path::{Path, PathBuf};

use greenlight::forecast::{ForecastMode, IqrRule, ModelConfig, TrainConfig};
use greenlight::mpc::{MpcWeights, SolverSettings};
use greenlight::par::Execution;
use greenlight::pipeline::PipelineConfig;
use greenlight::recipe::PhysiologyBounds;
use greenlight::simulator::GreenhouseConfig;
use greenlight::synth::SynthConfig;
use greenlight::tariff::TariffConfig;
use greenlight::timeseries::{parse_timestamp, Timestamp};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: ForecastMode,
    /// Run independent days and batches on the rayon pool.
    pub parallel: bool,
    pub paths: Paths,
    pub period: Period,
    pub synthetic: SynthConfig,
    pub greenhouse: GreenhouseConfig,
    pub tariff: TariffConfig,
    pub bounds: PhysiologyBounds,
    pub weights: MpcWeights,
    pub solver: SolverSettings,
    pub forecaster: ForecasterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            mode: ForecastMode::Oracle,
            parallel: true,
            paths: Paths::default(),
            period: Period::default(),
            synthetic: SynthConfig::default(),
            greenhouse: GreenhouseConfig::default(),
            tariff: TariffConfig::default(),
            bounds: PhysiologyBounds::default(),
            weights: MpcWeights::default(),
            solver: SolverSettings::default(),
            forecaster: ForecasterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Hourly weather CSV. With `market`, replaces the synthetic data.
    pub weather: Option<PathBuf>,
    /// Hourly market CSV.
    pub market: Option<PathBuf>,
    /// Recipe CSV for `simulate`; the baseline recipe when absent.
    pub recipe: Option<PathBuf>,
    /// Checkpoints, `<out>/models/{price,solar}.glfc` when absent.
    pub price_model: Option<PathBuf>,
    pub solar_model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Period {
    /// First evaluated day, `YYYY-MM-DD`. Defaults to 1 January of the
    /// synthetic year, or the first midnight with 47 hours of history in
    /// file data.
    pub start: Option<String>,
    /// Number of evaluated days; all whole days available when absent.
    pub days: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    /// 3-layer solar and 4-layer price models, width 64.
    #[default]
    Full,
    /// 2 layers, width 32.
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    /// Ensemble decay per hour of forecast age.
    pub lambda: f64,
    pub iqr: IqrRule,
    pub size: ModelSize,
    pub training: TrainConfig,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            lambda: 0.15,
            iqr: IqrRule::default(),
            size: ModelSize::Full,
            training: TrainConfig::default(),
        }
    }
}

impl ForecasterConfig {
    pub fn model(&self, price: bool) -> ModelConfig {
        match (self.size, price) {
            (ModelSize::Reduced, _) => ModelConfig::reduced(1),
            (ModelSize::Full, true) => ModelConfig::price(1),
            (ModelSize::Full, false) => ModelConfig::solar(1),
        }
    }
}

/// A loaded configuration with its paths resolved.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<ForecastMode>,
    pub out: Option<PathBuf>,
}

impl Loaded {
    pub fn from_file(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let (mut config, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let config: RunConfig =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (config, dir)
            }
            None => (RunConfig::default(), PathBuf::from(".")),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(mode) = overrides.mode {
            config.mode = mode;
        }
        if let Some(out) = &overrides.out {
            // relative to the working directory, not the config file
            config.paths.out_dir = Some(std::path::absolute(out).map_err(|e| CliError::io(out, e))?);
        }
        config.synthetic.seed = config.seed;
        config.forecaster.training.seed = config.seed;
        let loaded = Self { config, base_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(self.config.paths.out_dir.as_deref().unwrap_or(Path::new("out")))
    }

    pub fn weather_path(&self) -> Option<PathBuf> {
        self.config.paths.weather.as_deref().map(|p| self.resolve(p))
    }

    pub fn market_path(&self) -> Option<PathBuf> {
        self.config.paths.market.as_deref().map(|p| self.resolve(p))
    }

    pub fn recipe_path(&self) -> Option<PathBuf> {
        self.config.paths.recipe.as_deref().map(|p| self.resolve(p))
    }

    pub fn price_model_path(&self) -> PathBuf {
        match &self.config.paths.price_model {
            Some(p) => self.resolve(p),
            None => self.out_dir().join("models").join("price.glfc"),
        }
    }

    pub fn solar_model_path(&self) -> PathBuf {
        match &self.config.paths.solar_model {
            Some(p) => self.resolve(p),
            None => self.out_dir().join("models").join("solar.glfc"),
        }
    }

    pub fn start(&self) -> Result<Option<Timestamp>, CliError> {
        self.config
            .period
            .start
            .as_deref()
            .map(|s| {
                parse_timestamp(&format!("{s} 00:00"))
                    .or_else(|_| parse_timestamp(s))
                    .map_err(|e| CliError::Config(format!("period.start {s:?}: {e}")))
            })
            .transpose()
    }

    pub fn execution(&self) -> Execution {
        if self.config.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let c = &self.config;
        PipelineConfig {
            greenhouse: c.greenhouse.clone(),
            tariff: c.tariff.clone(),
            bounds: c.bounds.clone(),
            weights: c.weights,
            solver: c.solver,
            lambda: c.forecaster.lambda,
            execution: self.execution(),
        }
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig {
            execution: self.execution(),
            ..self.config.forecaster.training
        }
    }

    /// SHA-256 of the effective configuration, overrides included.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.config).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }

    /// Checks values and that every referenced input file exists.
    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        let bad = |m: String| Err(CliError::Config(m));
        c.bounds.check().map_err(|e| CliError::Config(e.to_string()))?;
        c.greenhouse.check().map_err(|e| CliError::Config(e.to_string()))?;
        c.tariff.check().map_err(CliError::Config)?;
        c.synthetic.check().map_err(|e| CliError::Config(format!("synthetic: {e}")))?;
        c.forecaster.iqr.check().map_err(|e| CliError::Config(e.to_string()))?;
        c.forecaster.training.check().map_err(|e| CliError::Config(e.to_string()))?;
        let w = c.weights;
        if !(w.alpha >= 0.0 && w.beta >= 0.0 && w.gamma >= 0.0) {
            return bad("weights must be non-negative".into());
        }
        if !(c.forecaster.lambda >= 0.0) || !c.forecaster.lambda.is_finite() {
            return bad("forecaster.lambda must be a non-negative number".into());
        }
        if c.period.days == Some(0) {
            return bad("period.days must be positive".into());
        }
        self.start()?;
        match (&c.paths.weather, &c.paths.market) {
            (Some(_), None) | (None, Some(_)) => {
                return bad("paths.weather and paths.market must be given together".into());
            }
            _ => {}
        }
        for (key, path) in [
            ("paths.weather", self.weather_path()),
            ("paths.market", self.market_path()),
            ("paths.recipe", self.recipe_path()),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return bad(format!("{key}: file {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }

    /// Checkpoints must exist before forecasting with the transformer.
    pub fn require_models(&self) -> Result<(), CliError> {
        for p in [self.price_model_path(), self.solar_model_path()] {
            if !p.is_file() {
                return Err(CliError::Config(format!(
                    "transformer mode needs checkpoint {}; run `greenlight train` first",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn partial_tables_keep_other_defaults() {
        let c: RunConfig = toml::from_str(
            "seed = 3\nmode = \"persistence\"\n[bounds]\ndli_target = 10.0\n[forecaster]\nsize = \"reduced\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.mode, ForecastMode::Persistence);
        assert_eq!(c.bounds.dli_target, 10.0);
        assert_eq!(c.bounds.ppfd_min, PhysiologyBounds::default().ppfd_min);
        assert_eq!(c.forecaster.size, ModelSize::Reduced);
    }

    #[test]
    fn example_config_is_the_default() {
        let c: RunConfig = toml::from_str(include_str!("../../../config/example.toml")).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[paths]\nwether = \"w.csv\"").is_err());
    }

    #[test]
    fn overrides_reach_the_seeds_and_the_hash() {
        let a = Loaded::from_file(None, &Overrides::default()).unwrap();
        let b = Loaded::from_file(
            None,
            &Overrides {
                seed: Some(99),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(b.config.synthetic.seed, 99);
        assert_eq!(b.config.forecaster.training.seed, 99);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), Loaded::from_file(None, &Overrides::default()).unwrap().hash());
    }
}
