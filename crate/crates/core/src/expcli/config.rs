use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_file, ExpError, Result};
use crate::dynsys::{DynError, LactoseParams, SystemSpec};
use crate::tpddpg::{Hyperparams, TpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Linear,
    MaierStein,
    Lactose,
}

/// `[system]`. Endpoints are fixed by the system except for the linear
/// potential, which takes `x0` and `x1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// σ. Defaults to 1 for the linear potential; required otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    10.0
}

/// `[network]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: usize,
    pub action_scale: f64,
    pub time_input: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let h = Hyperparams::default();
        Self {
            hidden: h.hidden,
            action_scale: h.action_scale,
            time_input: h.time_input,
        }
    }
}

/// `[training]`. `window = [lo, hi]` selects episodes `lo..hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub exploration_std: f64,
    pub warmup_trajectories: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_capacity: usize,
    pub window: [usize; 2],
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let h = Hyperparams::default();
        Self {
            episodes: h.episodes,
            batch_size: h.batch_size,
            exploration_std: h.exploration_std,
            warmup_trajectories: h.warmup_trajectories,
            actor_lr: h.actor_lr,
            critic_lr: h.critic_lr,
            buffer_capacity: h.buffer_capacity,
            window: [h.average_window.0, h.average_window.1],
            seed: h.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Overlay the closed-form path on the path plot (linear system only).
    pub compare_analytic: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/out"),
            compare_analytic: false,
        }
    }
}

/// `[sweep]`, read by `sweep-n`. The converged terminal loss of an episode
/// is the mean ℒ_pred over timesteps `0..timesteps`, summarised over
/// episodes `window[0]..window[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub window: [usize; 2],
    pub timesteps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            window: [20, 100],
            timesteps: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Kinetic constants; only valid with `kind = "lactose"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lactose: Option<LactoseParams>,
}

const PRESETS: [(&str, &str); 5] = [
    ("linear_0to2", include_str!("../../presets/linear_0to2.toml")),
    ("linear_0to6", include_str!("../../presets/linear_0to6.toml")),
    ("maier_stein_b1", include_str!("../../presets/maier_stein_b1.toml")),
    ("maier_stein_b10", include_str!("../../presets/maier_stein_b10.toml")),
    ("lactose", include_str!("../../presets/lactose.toml")),
];

impl ExperimentConfig {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(name, _)| *name)
    }

    /// A shipped preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name)?;
        Some(parse_config(text, Path::new(name)).expect("shipped presets are valid"))
    }

    pub fn validate(&self) -> Result<()> {
        let sys = &self.system;
        let only_for = |field: &str, value: bool, kind: SystemKind| {
            if value && sys.kind != kind {
                Err(ExpError::config(
                    format!("system.{field}"),
                    format!("not used by the {:?} system", sys.kind),
                ))
            } else {
                Ok(())
            }
        };
        only_for("x0", sys.x0.is_some(), SystemKind::Linear)?;
        only_for("x1", sys.x1.is_some(), SystemKind::Linear)?;
        only_for("beta", sys.beta.is_some(), SystemKind::MaierStein)?;
        if self.lactose.is_some() && sys.kind != SystemKind::Lactose {
            return Err(ExpError::config("lactose", "section given for a non-lactose system"));
        }
        if sys.kind != SystemKind::Linear && sys.noise.is_none() {
            return Err(ExpError::config("system.noise", "required for this system"));
        }
        if sys.kind == SystemKind::MaierStein && sys.beta.is_none() {
            return Err(ExpError::config("system.beta", "required for the Maier-Stein system"));
        }
        let [lo, hi] = self.training.window;
        if lo >= hi || hi > self.training.episodes {
            return Err(ExpError::config(
                "training.window",
                format!("[{lo}, {hi}) must be non-empty and end by episode {}", self.training.episodes),
            ));
        }
        let [slo, shi] = self.sweep.window;
        if slo >= shi {
            return Err(ExpError::config("sweep.window", format!("[{slo}, {shi}) is empty")));
        }
        if self.sweep.timesteps == 0 {
            return Err(ExpError::config("sweep.timesteps", "must be at least 1"));
        }
        self.spec()?;
        self.hyper().validate().map_err(|e| match e {
            TpError::InvalidHyper { name, reason } => ExpError::config(format!("training.{name}"), reason),
            other => ExpError::Train(other),
        })
    }

    pub fn spec(&self) -> Result<SystemSpec> {
        let s = &self.system;
        let built = match s.kind {
            SystemKind::Linear => {
                let spec = SystemSpec::linear_potential(
                    s.x0.unwrap_or(0.0),
                    s.x1.unwrap_or(2.0),
                    s.horizon,
                    s.steps,
                    s.lambda,
                );
                spec.and_then(|mut spec| {
                    if let Some(noise) = s.noise {
                        spec = SystemSpec::new(
                            spec.dynamics,
                            noise,
                            spec.x_start,
                            spec.x_target,
                            spec.horizon,
                            spec.steps,
                            spec.lambda,
                        )?;
                    }
                    Ok(spec)
                })
            }
            SystemKind::MaierStein => SystemSpec::maier_stein(
                s.beta.unwrap_or(f64::NAN),
                s.noise.unwrap_or(f64::NAN),
                s.horizon,
                s.steps,
                s.lambda,
            ),
            SystemKind::Lactose => SystemSpec::lactose_operon(
                self.lactose.clone().unwrap_or_default(),
                s.noise.unwrap_or(f64::NAN),
                s.horizon,
                s.steps,
                s.lambda,
            ),
        };
        built.map_err(|e| match e {
            DynError::InvalidParam { name, value } => {
                ExpError::config(format!("system.{name}"), format!("invalid value {value}"))
            }
            other => ExpError::config("system", other.to_string()),
        })
    }

    pub fn hyper(&self) -> Hyperparams {
        let t = &self.training;
        Hyperparams {
            hidden: self.network.hidden,
            action_scale: self.network.action_scale,
            batch_size: t.batch_size,
            exploration_std: t.exploration_std,
            episodes: t.episodes,
            warmup_trajectories: t.warmup_trajectories,
            actor_lr: t.actor_lr,
            critic_lr: t.critic_lr,
            buffer_capacity: t.buffer_capacity,
            time_input: self.network.time_input,
            average_window: (t.window[0], t.window[1]),
            seed: t.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Parses and validates config text; `origin` only labels errors.
pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExpError::Parse {
        path: origin.to_path_buf(),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a config file. A bare preset name such as `linear_0to2` is accepted
/// when no file of that name exists.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if !path.exists() {
        if let Some(cfg) = path.to_str().and_then(ExperimentConfig::preset) {
            return Ok(cfg);
        }
    }
    parse_config(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[system]\nkind = \"linear\"\nhorizon = 1.0\nsteps = 20\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL, Path::new("t")).unwrap();
        assert_eq!(cfg.system.lambda, 10.0);
        let spec = cfg.spec().unwrap();
        assert_eq!(spec.x_target, vec![2.0]);
        assert_eq!(spec.noise, 1.0);
        assert_eq!(cfg.hyper(), Hyperparams::default());
    }

    #[test]
    fn negative_horizon_names_field() {
        let text = MINIMAL.replace("horizon = 1.0", "horizon = -1.0");
        let err = parse_config(&text, Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("horizon"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_and_missing_keys_rejected() {
        let typo = format!("{MINIMAL}lamda = 3.0\n");
        let err = parse_config(&typo, Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
        let missing = "[system]\nkind = \"linear\"\nsteps = 20\n";
        let err = parse_config(missing, Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("horizon"), "{err}");
    }

    #[test]
    fn kind_specific_fields() {
        let text = MINIMAL.replace("steps = 20", "steps = 20\nbeta = 1.0");
        assert!(parse_config(&text, Path::new("t")).unwrap_err().to_string().contains("beta"));
        let ms = "[system]\nkind = \"maier-stein\"\nbeta = 1.0\nhorizon = 5.0\nsteps = 50\n";
        assert!(parse_config(ms, Path::new("t")).unwrap_err().to_string().contains("noise"));
    }

    #[test]
    fn window_checked() {
        let text = format!("{MINIMAL}[training]\nepisodes = 50\nwindow = [10, 60]\n");
        let err = parse_config(&text, Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("window"), "{err}");
    }

    #[test]
    fn presets_parse_and_roundtrip() {
        for name in ExperimentConfig::preset_names() {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let again = parse_config(&cfg.to_toml(), Path::new(name)).unwrap();
            assert_eq!(cfg, again, "{name}");
        }
        let b10 = ExperimentConfig::preset("maier_stein_b10").unwrap();
        assert_eq!((b10.system.beta, b10.system.noise), (Some(10.0), Some(0.2)));
        assert_eq!((b10.system.horizon, b10.system.steps), (10.0, 200));
        let lin = ExperimentConfig::preset("linear_0to2").unwrap().spec().unwrap();
        assert_eq!((lin.x_start[0], lin.x_target[0], lin.horizon), (0.0, 2.0, 1.0));
    }
}
