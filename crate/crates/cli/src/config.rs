use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svm_clt::montecarlo::LambdaRule;
use svm_clt::{Atom, Error, KernelSpec, LossSpec, Point, Result, SolverOptions};

/// One run's configuration, read from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub kernel: Option<KernelSpec>,
    pub loss: Option<LossSpec>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub derivative: DerivativeSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub mollify: MollifySection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Measure CSV; relative paths resolve against the config file.
    pub measure: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DerivativeSection {
    pub lambda0: Option<f64>,
    /// Signed direction `G` for `fd-check`.
    pub direction: Option<PathBuf>,
    /// Optional drift for the Hadamard variant of `fd-check`.
    pub drift: Option<PathBuf>,
    pub ts: Vec<f64>,
    /// Contamination points for `influence`.
    pub points: Vec<Atom>,
    /// Evaluation grid; defaults to the support inputs plus midpoints.
    pub grid: Option<Vec<Point>>,
    pub also_risk: bool,
    pub basis_size: usize,
}

impl Default for DerivativeSection {
    fn default() -> Self {
        DerivativeSection {
            lambda0: None,
            direction: None,
            drift: None,
            ts: vec![1e-1, 1e-2, 1e-3],
            points: Vec::new(),
            grid: None,
            also_risk: true,
            basis_size: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub lambda0: Option<f64>,
    pub lambda_rule: LambdaRule,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub grid: Option<Vec<Point>>,
    pub alpha: f64,
    pub ci_z: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            lambda0: None,
            lambda_rule: LambdaRule::Fixed,
            n_values: vec![100, 400, 1600],
            replications: 500,
            grid: None,
            alpha: 0.01,
            ci_z: 1.96,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    Hinge,
    EpsInsensitive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MollifySection {
    pub base: BaseLoss,
    pub eps: f64,
    pub eps_ins: f64,
    pub nodes: usize,
    pub y: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for MollifySection {
    fn default() -> Self {
        MollifySection {
            base: BaseLoss::Hinge,
            eps: 0.1,
            eps_ins: 0.5,
            nodes: 64,
            y: 1.0,
            t_min: -2.0,
            t_max: 2.0,
            points: 81,
        }
    }
}

fn missing(key: &str) -> Error {
    Error::Input(format!("config is missing '{key}'"))
}

impl Config {
    /// Reads a config and makes its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Config = toml::from_str(&text)
            .map_err(|e| Error::Input(format!("config {}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data.measure,
            &mut cfg.derivative.direction,
            &mut cfg.derivative.drift,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        let k = self.kernel.ok_or_else(|| missing("[kernel]"))?;
        k.validate()?;
        Ok(k)
    }

    pub fn loss(&self) -> Result<&LossSpec> {
        self.loss.as_ref().ok_or_else(|| missing("[loss]"))
    }

    pub fn measure_path(&self) -> Result<&Path> {
        self.data
            .measure
            .as_deref()
            .ok_or_else(|| missing("data.measure"))
    }

    pub fn lambda(&self) -> Result<f64> {
        self.solve.lambda.ok_or_else(|| missing("solve.lambda"))
    }

    pub fn lambda0(&self) -> Result<f64> {
        self.derivative
            .lambda0
            .ok_or_else(|| missing("derivative.lambda0"))
    }

    pub fn experiment_lambda0(&self) -> Result<f64> {
        self.experiment
            .lambda0
            .ok_or_else(|| missing("experiment.lambda0"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> std::result::Result<Config, toml::de::Error> {
        toml::from_str(text)
    }

    #[test]
    fn empty_config_takes_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.solver, SolverOptions::default());
        assert_eq!(cfg.experiment.n_values, vec![100, 400, 1600]);
        assert_eq!(cfg.derivative.ts, vec![1e-1, 1e-2, 1e-3]);
        assert_eq!(cfg.mollify.base, BaseLoss::Hinge);
        assert!(matches!(cfg.kernel(), Err(Error::Input(m)) if m.contains("[kernel]")));
        assert!(cfg.lambda().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("sead = 1").is_err());
        assert!(parse("[solve]\nlamda = 1.0").is_err());
        assert!(parse("[mollify]\nbase = \"ramp\"").is_err());
    }

    #[test]
    fn nested_library_types_parse() {
        let cfg = parse(
            "[kernel]\nfamily = \"polynomial\"\ndegree = 2\noffset = 1.0\nscale = 0.5\ninput_dim = 3\n\
             [loss]\nkind = \"huber\"\ndelta = 0.5\n\
             [experiment]\nlambda_rule = { rule = \"random_shrinking\", c = 2.0 }\n",
        )
        .unwrap();
        assert_eq!(
            cfg.kernel().unwrap(),
            KernelSpec::polynomial(2, 1.0, 0.5, 3).unwrap()
        );
        assert_eq!(cfg.loss().unwrap(), &LossSpec::Huber { delta: 0.5 });
        assert_eq!(
            cfg.experiment.lambda_rule,
            LambdaRule::RandomShrinking { c: 2.0 }
        );
    }

    #[test]
    fn invalid_kernel_is_an_input_error() {
        let cfg =
            parse("[kernel]\nfamily = \"gaussian_rbf\"\nwidth = -1.0\ninput_dim = 1\n").unwrap();
        assert!(matches!(cfg.kernel(), Err(Error::Input(_))));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "[data]\nmeasure = \"p.csv\"\n[derivative]\ndirection = \"/abs/g.csv\"\n",
        )
        .unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.measure_path().unwrap(), dir.path().join("p.csv"));
        assert_eq!(
            cfg.derivative.direction.as_deref(),
            Some(Path::new("/abs/g.csv"))
        );
    }
}
