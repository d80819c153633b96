use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decomposition::{check_beta, FitThresholds, StoppingRule, DEFAULT_BETA};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::semigroup::{GridSpec, PotentialFamily, PotentialSpec};

/// Dyadic `t` grid with `per_octave` points per factor of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TGridSpec {
    pub per_octave: usize,
}

impl Default for TGridSpec {
    fn default() -> Self {
        Self { per_octave: 1 }
    }
}

/// `ε = 2^{-m}`, `m = 1..=levels`; the refined grid halves the exponent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonGridSpec {
    pub levels: usize,
}

impl Default for EpsilonGridSpec {
    fn default() -> Self {
        Self { levels: 10 }
    }
}

impl EpsilonGridSpec {
    pub fn values(&self) -> Vec<f64> {
        (1..=self.levels as i32).map(|m| 2f64.powi(-m)).collect()
    }

    pub fn refined(&self) -> Vec<f64> {
        (2..=2 * self.levels as i32).map(|m| 2f64.powf(-0.5 * m as f64)).collect()
    }
}

/// Acceptance budgets for the empirical constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Largest admissible relative change under `h → h/2` or grid refinement.
    pub refinement: f64,
    /// Largest admissible `r_max / r_min` of the equivalence ratio.
    pub ratio_spread: f64,
    /// Largest admissible max/median of `‖Ra‖₁` over atoms.
    pub atom_spread: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            refinement: 0.1,
            ratio_spread: 50.0,
            atom_spread: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    #[default]
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "both" => Ok(Self::Both),
            other => Err(Error::Config(format!("unknown format {other:?} (expected json, csv or both)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: Format::Both,
        }
    }
}

/// Everything a run depends on. Two runs with equal configs produce
/// byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    pub rule: StoppingRule,
    pub beta: f64,
    pub t_grid: TGridSpec,
    pub epsilon_grid: EpsilonGridSpec,
    pub thresholds: FitThresholds,
    pub budgets: Budgets,
    pub seed: u64,
    /// Exponential weight in the Lemma 2.1 functionals.
    pub alpha: f64,
    /// Largest `n` in the mass-decay sequence `m(n)`.
    pub condition_d_steps: usize,
    /// Cubes visited per lemma check.
    pub lemma_cubes: usize,
    pub n_atoms: usize,
    /// Time of the Duhamel residual and of the `heat-kernel` command.
    pub time: f64,
    pub duhamel_steps: usize,
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id: "experiment".into(),
            grid: GridSpec {
                half_width: 16.0,
                n_points: 2049,
                core_fraction: 0.5,
            },
            potential: PotentialSpec::constant(1.0),
            rule: StoppingRule::Cz,
            beta: DEFAULT_BETA,
            t_grid: TGridSpec::default(),
            epsilon_grid: EpsilonGridSpec::default(),
            thresholds: FitThresholds::default(),
            budgets: Budgets::default(),
            seed: 0,
            alpha: 1.0,
            condition_d_steps: 8,
            lemma_cubes: 8,
            n_atoms: 100,
            time: 0.5,
            duhamel_steps: 256,
            output: OutputSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    /// Sorted-key JSON value embedded in reports.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        // output location does not affect results
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        value
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.potential.build()?;
        check_beta(self.beta)?;
        let t = &self.thresholds;
        for (name, v) in [
            ("epsilon_min", t.epsilon_min),
            ("delta_min", t.delta_min),
            ("residual_max", t.residual_max),
            ("budgets.refinement", self.budgets.refinement),
            ("budgets.ratio_spread", self.budgets.ratio_spread),
            ("budgets.atom_spread", self.budgets.atom_spread),
            ("time", self.time),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if self.t_grid.per_octave == 0 {
            return Err(Error::Config("t_grid.per_octave must be at least 1".into()));
        }
        if !(1..=40).contains(&self.epsilon_grid.levels) {
            return Err(Error::Config(format!(
                "epsilon_grid.levels must lie in 1..=40, got {}",
                self.epsilon_grid.levels
            )));
        }
        for (name, v, min) in [
            ("condition_d_steps", self.condition_d_steps, 2),
            ("lemma_cubes", self.lemma_cubes, 1),
            ("n_atoms", self.n_atoms, 1),
            ("duhamel_steps", self.duhamel_steps, 8),
        ] {
            if v < min {
                return Err(Error::Config(format!("{name} must be at least {min}, got {v}")));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid> {
        self.grid.build()
    }
}

/// Parses `name[:args]` or inline JSON into a potential spec.
///
/// Short forms: `free`, `constant:c`, `harmonic[:k]`, `step:left,right[,at]`,
/// `spikes:seed`, `piecewise:seed`, `inverse_power:exponent,cap`.
pub fn parse_potential(text: &str) -> Result<PotentialSpec> {
    let text = text.trim();
    if text.starts_with('{') {
        return serde_json::from_str(text).map_err(|e| Error::Config(format!("potential: {e}")));
    }
    let (name, args) = text.split_once(':').unwrap_or((text, ""));
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("potential {text:?}: {a:?} is not a number")))
            })
            .collect::<Result<_>>()?
    };
    let arity = |lo: usize, hi: usize| -> Result<()> {
        if nums.len() < lo || nums.len() > hi {
            return Err(Error::Config(format!("potential {name:?} takes {lo}..={hi} arguments, got {}", nums.len())));
        }
        Ok(())
    };
    let seed = |v: f64| -> Result<u64> {
        if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
            Ok(v as u64)
        } else {
            Err(Error::Config(format!("seed {v} is not a nonnegative integer")))
        }
    };
    let spec = match name {
        "free" => {
            arity(0, 0)?;
            PotentialSpec::free()
        }
        "constant" => {
            arity(1, 1)?;
            PotentialSpec::constant(nums[0])
        }
        "harmonic" => {
            arity(0, 1)?;
            PotentialSpec::new(
                PotentialFamily::Harmonic {
                    coefficient: nums.first().copied().unwrap_or(1.0),
                },
                0,
            )
        }
        "step" => {
            arity(2, 3)?;
            PotentialSpec::new(
                PotentialFamily::Step {
                    left: nums[0],
                    right: nums[1],
                    at: nums.get(2).copied().unwrap_or(0.0),
                },
                0,
            )
        }
        "spikes" => {
            arity(1, 1)?;
            PotentialSpec::spikes(seed(nums[0])?)
        }
        "piecewise" => {
            arity(1, 1)?;
            PotentialSpec::piecewise(seed(nums[0])?)
        }
        "inverse_power" => {
            arity(2, 2)?;
            PotentialSpec::inverse_power(nums[0], nums[1])
        }
        other => return Err(Error::Config(format!("unknown potential {other:?}"))),
    };
    spec.build()?;
    Ok(spec)
}
