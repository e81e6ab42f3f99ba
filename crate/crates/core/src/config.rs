//! Run configuration: a TOML file with `[scheme]`, `[noise]` and `[study]`
//! sections. Missing keys take their defaults, unknown keys are rejected.

use crate::error::{Error, Result};
use crate::experiments::{cells_for, steps_for, StudyOptions};
use crate::noise::{DiffusionOperator, NoiseSpec};
use crate::stepper::SchemeConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "STOCHNS_OUT";
/// Output root when neither the config nor the environment names one.
pub const DEFAULT_OUT: &str = "stochns-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub modes: usize,
    pub amplitude: f64,
    pub period: f64,
    pub vector: bool,
    pub diffusion: DiffusionOperator,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let s = NoiseSpec::default();
        NoiseSection {
            modes: s.modes,
            amplitude: s.amplitude,
            period: s.period,
            vector: s.vector,
            diffusion: DiffusionOperator::default(),
        }
    }
}

impl NoiseSection {
    pub fn spec(&self) -> NoiseSpec {
        NoiseSpec {
            modes: self.modes,
            amplitude: self.amplitude,
            period: self.period,
            vector: self.vector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    /// Time steps of the time study, coarsest first.
    pub time_levels: Vec<f64>,
    /// Mesh spacings `L / n_side` of the space study, coarsest first.
    pub space_levels: Vec<f64>,
    /// Time step of the space study.
    pub space_step: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Path index simulated by `run-path`.
    pub path_index: u64,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `0` uses every core, `1` is serial and bitwise reproducible.
    pub parallel: usize,
    pub svg: bool,
    /// Couple every diagnostics path with a run on the refined mesh.
    pub reference: bool,
    pub epsilon: Vec<f64>,
    pub kappa0: f64,
    pub kappa: f64,
    /// Meshes of the deterministic verification.
    pub verify_sides: Vec<usize>,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            time_levels: (3..=7).map(|i| 2f64.powi(-i)).collect(),
            space_levels: (2..=5).map(|i| 2f64.powi(-i)).collect(),
            space_step: 2f64.powi(-8),
            n_paths: 64,
            master_seed: 2024,
            path_index: 0,
            out_dir: None,
            parallel: 0,
            svg: true,
            reference: true,
            epsilon: vec![0.01, 0.05, 0.1, 0.2, 0.5, 1.0],
            kappa0: 1.0,
            kappa: 1.0,
            verify_sides: vec![8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scheme: SchemeConfig,
    pub noise: NoiseSection,
    pub study: StudySection,
}

impl RunConfig {
    /// Scheme parameters with the noise section applied.
    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            noise: self.noise.spec(),
            diffusion: self.noise.diffusion,
            ..self.scheme.clone()
        }
    }

    /// Scheme of the space study (time step `space_step`).
    pub fn space_scheme(&self) -> Result<SchemeConfig> {
        Ok(SchemeConfig {
            n_steps: steps_for(self.scheme.t_final, self.study.space_step)?,
            ..self.scheme()
        })
    }

    pub fn study_options(&self) -> StudyOptions {
        StudyOptions {
            n_paths: self.study.n_paths,
            master_seed: self.study.master_seed,
            threads: match self.study.parallel {
                0 => None,
                t => Some(t),
            },
        }
    }

    /// Output root: the config value, else `$STOCHNS_OUT`, else `stochns-out`.
    pub fn out_root(&self) -> PathBuf {
        self.study
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme().validate()?;
        let s = &self.study;
        if s.n_paths == 0 {
            return Err(Error::Config("study.n_paths must be at least 1".into()));
        }
        let steps: Vec<usize> = s
            .time_levels
            .iter()
            .map(|k| steps_for(self.scheme.t_final, *k))
            .collect::<Result<_>>()?;
        if let Some(&finest) = steps.iter().max() {
            for (k, n) in s.time_levels.iter().zip(&steps) {
                if finest % n != 0 {
                    return Err(Error::Config(format!(
                        "time level {k} does not divide the finest step {}",
                        self.scheme.t_final / finest as f64
                    )));
                }
            }
        }
        if steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("study.time_levels must decrease".into()));
        }
        let sides: Vec<usize> = s
            .space_levels
            .iter()
            .map(|h| cells_for(self.scheme.period, *h))
            .collect::<Result<_>>()?;
        for w in sides.windows(2) {
            if w[1] <= w[0] || w[1] % w[0] != 0 {
                return Err(Error::NotNested(format!(
                    "space levels {} and {} are not nested",
                    self.scheme.period / w[0] as f64,
                    self.scheme.period / w[1] as f64
                )));
            }
        }
        steps_for(self.scheme.t_final, s.space_step)?;
        if s.epsilon.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("study.epsilon values must be positive".into()));
        }
        if !(s.kappa0 > 0.0 && s.kappa > 0.0) {
            return Err(Error::Config("study.kappa0 and study.kappa must be positive".into()));
        }
        if s.verify_sides.len() < 3 || s.verify_sides.iter().any(|n| *n < 2) {
            return Err(Error::Config("study.verify_sides needs at least three meshes".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Writes the resolved configuration as `config.toml` into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.to_toml())?;
        Ok(())
    }
}

/// Parses and validates a configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    c.validate()?;
    Ok(c)
}

/// Reads a configuration file; `None` gives the defaults.
pub fn parse_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config_str(&text)
        }
        None => {
            let c = RunConfig::default();
            c.validate()?;
            Ok(c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let c = parse_config_str("").unwrap();
        let s = c.scheme();
        assert_eq!((s.nu, s.t_final, s.noise.modes), (1.0, 1.0, 10));
        assert_eq!(s.diffusion, DiffusionOperator::SqrtOnePlusSquare);
        assert_eq!(c.study.time_levels.len(), 5);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.noise.diffusion = DiffusionOperator::Constant([1.0, 0.5]);
        c.study.out_dir = Some("x".into());
        assert_eq!(parse_config_str(&c.to_toml()).unwrap(), c);
        c.noise.diffusion = DiffusionOperator::Zero;
        assert_eq!(parse_config_str(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn sections_parse() {
        let c = parse_config_str(
            "[scheme]\nn_side = 8\nnonlinear = \"picard\"\n[noise]\nmodes = 4\ndiffusion = { kind = \"constant\", value = [2.0, 3.0] }\n[study]\ntime_levels = [0.125, 0.0078125]\n",
        )
        .unwrap();
        assert_eq!(c.scheme().n_side, 8);
        assert_eq!(c.scheme().noise.modes, 4);
        assert_eq!(c.scheme().diffusion, DiffusionOperator::Constant([2.0, 3.0]));
    }

    #[test]
    fn rejections() {
        assert!(parse_config_str("[scheme]\nbogus = 1\n").is_err());
        assert!(parse_config_str("[extra]\n").is_err());
        assert!(parse_config_str("[study]\ntime_levels = [0.3, 0.1]\n").is_err());
        assert!(matches!(
            parse_config_str("[study]\nspace_levels = [0.25, 0.16666666666666666]\n"),
            Err(Error::NotNested(_))
        ));
        assert!(parse_config_str("[scheme]\nnu = -1.0\n").is_err());
    }
}
