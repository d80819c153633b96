use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Interval};
use crate::special::composite_gauss;

/// Parametric potential families. Seeded families draw their random
/// layout from `PotentialSpec::seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum PotentialFamily {
    /// `V ≡ 0`; only admitted as an oracle.
    Free,
    Constant { c: f64 },
    /// `left` on `x < at`, `right` on `x ≥ at`.
    Step { left: f64, right: f64, at: f64 },
    /// Sum of smooth compactly supported bumps with random centres in
    /// `region`, random heights and half-widths, on top of a `floor`.
    Spikes {
        count: usize,
        region: (f64, f64),
        height: (f64, f64),
        half_width: (f64, f64),
        #[serde(default)]
        floor: f64,
    },
    /// `min(|x|^{-exponent}, cap)`, locally integrable for `exponent < 1`.
    InversePower { exponent: f64, cap: f64 },
    /// `coefficient · x²`.
    Harmonic { coefficient: f64 },
    /// Random piecewise-constant layout on `region`, `outside` elsewhere.
    PiecewiseConstant {
        region: (f64, f64),
        piece_length: (f64, f64),
        max_value: f64,
        zero_probability: f64,
        outside: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub family: PotentialFamily,
    #[serde(default)]
    pub seed: u64,
}

impl PotentialSpec {
    pub fn new(family: PotentialFamily, seed: u64) -> Self {
        Self { family, seed }
    }

    pub fn free() -> Self {
        Self::new(PotentialFamily::Free, 0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(PotentialFamily::Constant { c }, 0)
    }

    pub fn harmonic() -> Self {
        Self::new(PotentialFamily::Harmonic { coefficient: 1.0 }, 0)
    }

    pub fn step(left: f64, right: f64) -> Self {
        Self::new(PotentialFamily::Step { left, right, at: 0.0 }, 0)
    }

    /// Dense spikes over the whole standard domain.
    pub fn spikes(seed: u64) -> Self {
        Self::new(
            PotentialFamily::Spikes {
                count: 32,
                region: (-16.0, 16.0),
                height: (1.0, 8.0),
                half_width: (0.06, 0.25),
                floor: 0.0,
            },
            seed,
        )
    }

    pub fn inverse_power(exponent: f64, cap: f64) -> Self {
        Self::new(PotentialFamily::InversePower { exponent, cap }, 0)
    }

    pub fn piecewise(seed: u64) -> Self {
        Self::new(
            PotentialFamily::PiecewiseConstant {
                region: (-12.0, 12.0),
                piece_length: (0.3, 2.0),
                max_value: 6.0,
                zero_probability: 0.25,
                outside: 1.0,
            },
            seed,
        )
    }

    pub fn name(&self) -> String {
        match &self.family {
            PotentialFamily::Free => "free".into(),
            PotentialFamily::Constant { c } => format!("constant({c})"),
            PotentialFamily::Step { left, right, at } => format!("step({left},{right}@{at})"),
            PotentialFamily::Spikes { count, .. } => format!("spikes({count};seed={})", self.seed),
            PotentialFamily::InversePower { exponent, cap } => format!("inverse_power({exponent},cap={cap})"),
            PotentialFamily::Harmonic { coefficient } => format!("harmonic({coefficient})"),
            PotentialFamily::PiecewiseConstant { .. } => format!("piecewise(seed={})", self.seed),
        }
    }

    pub fn build(&self) -> Result<Potential> {
        Potential::new(self.clone())
    }
}

/// JSON file form: a potential spec together with the grid it is sampled on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialFile {
    #[serde(flatten)]
    pub spec: PotentialSpec,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n_points: usize,
    #[serde(default = "default_core_fraction")]
    pub core_fraction: f64,
}

fn default_core_fraction() -> f64 {
    0.5
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.half_width, self.n_points, self.core_fraction)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        Self {
            half_width: g.half_width(),
            n_points: g.len(),
            core_fraction: g.core_fraction(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Spike {
    center: f64,
    height: f64,
    half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    Constant(f64),
    Step { left: f64, right: f64, at: f64 },
    Spikes { spikes: Vec<Spike>, floor: f64 },
    InversePower { exponent: f64, cap: f64 },
    Harmonic(f64),
    /// Sorted breakpoints `b_0 < … < b_m` with values on `[b_i, b_{i+1})`.
    Pieces { breaks: Vec<f64>, values: Vec<f64>, outside: f64 },
    /// `x ↦ s·inner(√s·x)`.
    Rescaled { inner: Box<Profile>, s: f64 },
}

/// A nonnegative potential as a function on ℝ, realized from its spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    spec: PotentialSpec,
    profile: Profile,
}

/// `∫_{-1}^{1} exp(1 - 1/(1-u²)) du`
const BUMP_MASS: f64 = 0.443_993_816_168_079_4 * std::f64::consts::E;

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

impl Potential {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        let profile = match &spec.family {
            PotentialFamily::Free => Profile::Constant(0.0),
            PotentialFamily::Constant { c } => {
                nonneg("constant", *c)?;
                if *c == 0.0 {
                    return Err(Error::Domain(
                        "V ≡ 0 must be requested through the `free` family".into(),
                    ));
                }
                Profile::Constant(*c)
            }
            PotentialFamily::Step { left, right, at } => {
                nonneg("step left", *left)?;
                nonneg("step right", *right)?;
                if *left == 0.0 && *right == 0.0 {
                    return Err(Error::Domain("step potential is identically zero".into()));
                }
                Profile::Step {
                    left: *left,
                    right: *right,
                    at: *at,
                }
            }
            PotentialFamily::Spikes {
                count,
                region,
                height,
                half_width,
                floor,
            } => {
                nonneg("spike floor", *floor)?;
                if *count == 0 && *floor == 0.0 {
                    return Err(Error::Domain("spike potential with no spikes and zero floor".into()));
                }
                if height.0 <= 0.0 || height.1 < height.0 || half_width.0 <= 0.0 || half_width.1 < half_width.0 {
                    return Err(Error::Domain("spike height/width ranges must be positive and ordered".into()));
                }
                let mut spikes: Vec<Spike> = (0..*count)
                    .map(|_| Spike {
                        center: uniform(&mut rng, region.0, region.1),
                        height: uniform(&mut rng, height.0, height.1),
                        half_width: uniform(&mut rng, half_width.0, half_width.1),
                    })
                    .collect();
                spikes.sort_by(|a, b| a.center.total_cmp(&b.center));
                Profile::Spikes { spikes, floor: *floor }
            }
            PotentialFamily::InversePower { exponent, cap } => {
                if !(*exponent > 0.0 && *exponent < 1.0) || !(*cap > 0.0) {
                    return Err(Error::Domain(
                        "inverse power needs 0 < exponent < 1 and cap > 0".into(),
                    ));
                }
                Profile::InversePower {
                    exponent: *exponent,
                    cap: *cap,
                }
            }
            PotentialFamily::Harmonic { coefficient } => {
                if !(*coefficient > 0.0) {
                    return Err(Error::Domain("harmonic coefficient must be positive".into()));
                }
                Profile::Harmonic(*coefficient)
            }
            PotentialFamily::PiecewiseConstant {
                region,
                piece_length,
                max_value,
                zero_probability,
                outside,
            } => {
                nonneg("outside value", *outside)?;
                nonneg("max value", *max_value)?;
                if !(piece_length.0 > 0.0 && piece_length.1 >= piece_length.0) || region.1 <= region.0 {
                    return Err(Error::Domain("piecewise layout needs a positive piece length range".into()));
                }
                let mut breaks = vec![region.0];
                let mut values = Vec::new();
                let mut x = region.0;
                while x < region.1 {
                    let len = uniform(&mut rng, piece_length.0, piece_length.1);
                    x = (x + len).min(region.1);
                    breaks.push(x);
                    let zero = rng.random::<f64>() < *zero_probability;
                    let v = uniform(&mut rng, 0.0, *max_value);
                    values.push(if zero { 0.0 } else { v });
                }
                if *outside == 0.0 && values.iter().all(|&v| v == 0.0) {
                    return Err(Error::Domain("piecewise potential drew all zeros".into()));
                }
                Profile::Pieces {
                    breaks,
                    values,
                    outside: *outside,
                }
            }
        };
        Ok(Self { spec, profile })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn name(&self) -> String {
        match &self.profile {
            Profile::Rescaled { s, .. } => format!("{}|rescaled({s})", self.spec.name()),
            _ => self.spec.name(),
        }
    }

    /// Built by [`Potential::rescaled`], so `spec()` no longer describes it.
    pub fn is_rescaled(&self) -> bool {
        matches!(self.profile, Profile::Rescaled { .. })
    }

    pub fn is_free(&self) -> bool {
        matches!(self.spec.family, PotentialFamily::Free)
    }

    /// `x ↦ s·V(√s·x)`, the potential of the rescaled operator whose
    /// semigroup at time 1 matches this one's at time `s`.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Domain(format!("rescaling factor must be positive, got {s}")));
        }
        Ok(Self {
            spec: self.spec.clone(),
            profile: Profile::Rescaled {
                inner: Box::new(self.profile.clone()),
                s,
            },
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_profile(&self.profile, x)
    }

    pub fn sample(&self, grid: &Grid) -> GridFunction {
        grid.sample(|x| self.eval(x))
    }

    /// `∫_a^b V`, exact for the piecewise-polynomial families and by
    /// high-order Gauss–Legendre on each bump for spikes.
    pub fn integral(&self, window: &Interval) -> f64 {
        integral_profile(&self.profile, window.lo, window.hi)
    }

    /// Breakpoints where `V` is discontinuous or not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.profile {
            Profile::Step { at, .. } => vec![*at],
            Profile::Pieces { breaks, .. } => breaks.clone(),
            _ => Vec::new(),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn eval_profile(p: &Profile, x: f64) -> f64 {
    match p {
        Profile::Constant(c) => *c,
        Profile::Step { left, right, at } => {
            if x < *at {
                *left
            } else {
                *right
            }
        }
        Profile::Spikes { spikes, floor } => {
            floor
                + spikes
                    .iter()
                    .filter(|s| (x - s.center).abs() < s.half_width)
                    .map(|s| s.height * bump((x - s.center) / s.half_width))
                    .sum::<f64>()
        }
        Profile::InversePower { exponent, cap } => {
            if x == 0.0 {
                *cap
            } else {
                x.abs().powf(-exponent).min(*cap)
            }
        }
        Profile::Harmonic(k) => k * x * x,
        Profile::Pieces { breaks, values, outside } => {
            if x < breaks[0] || x >= *breaks.last().unwrap() {
                *outside
            } else {
                let i = breaks.partition_point(|&b| b <= x) - 1;
                values[i]
            }
        }
        Profile::Rescaled { inner, s } => s * eval_profile(inner, s.sqrt() * x),
    }
}

fn integral_profile(p: &Profile, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    match p {
        Profile::Constant(c) => c * (b - a),
        Profile::Step { left, right, at } => {
            left * (b.min(*at) - a).max(0.0) + right * (b - a.max(*at)).max(0.0)
        }
        Profile::Spikes { spikes, floor } => {
            let rule = composite_gauss(-1.0, 1.0, 8, 20);
            let mut total = floor * (b - a);
            for s in spikes {
                let lo = a.max(s.center - s.half_width);
                let hi = b.min(s.center + s.half_width);
                if hi <= lo {
                    continue;
                }
                if lo <= s.center - s.half_width && hi >= s.center + s.half_width {
                    total += s.height * s.half_width * BUMP_MASS;
                    continue;
                }
                let ua = (lo - s.center) / s.half_width;
                let ub = (hi - s.center) / s.half_width;
                let part: f64 = rule
                    .iter()
                    .map(|(u, w)| {
                        let v = ua + (u + 1.0) * 0.5 * (ub - ua);
                        w * bump(v)
                    })
                    .sum::<f64>()
                    * 0.5
                    * (ub - ua);
                total += s.height * s.half_width * part;
            }
            total
        }
        Profile::InversePower { exponent, cap } => {
            // |x|^{-a} ≥ cap  ⇔  |x| ≤ r
            let r = cap.powf(-1.0 / exponent);
            let antideriv = |x: f64| -> f64 {
                // ∫_0^x min(|s|^{-a}, cap) ds for x ≥ 0
                if x <= r {
                    cap * x
                } else {
                    cap * r + (x.powf(1.0 - exponent) - r.powf(1.0 - exponent)) / (1.0 - exponent)
                }
            };
            let signed = |x: f64| if x >= 0.0 { antideriv(x) } else { -antideriv(-x) };
            signed(b) - signed(a)
        }
        Profile::Harmonic(k) => k * (b.powi(3) - a.powi(3)) / 3.0,
        Profile::Pieces { breaks, values, outside } => {
            let first = breaks[0];
            let last = *breaks.last().unwrap();
            let mut total = outside * ((b.min(first) - a).max(0.0) + (b - a.max(last)).max(0.0));
            for (i, v) in values.iter().enumerate() {
                let overlap = (b.min(breaks[i + 1]) - a.max(breaks[i])).max(0.0);
                total += v * overlap;
            }
            total
        }
        Profile::Rescaled { inner, s } => {
            let r = s.sqrt();
            r * integral_profile(inner, r * a, r * b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_mass_constant() {
        let rule = composite_gauss(-1.0, 1.0, 64, 20);
        let q: f64 = rule.iter().map(|(u, w)| w * bump(*u)).sum();
        assert!((q - BUMP_MASS).abs() < 1e-13, "{q}");
    }

    #[test]
    fn zero_constant_is_rejected_but_free_is_allowed() {
        assert!(PotentialSpec::constant(0.0).build().is_err());
        assert!(PotentialSpec::constant(-1.0).build().is_err());
        let free = PotentialSpec::free().build().unwrap();
        assert!(free.is_free());
        assert_eq!(free.eval(3.0), 0.0);
    }

    #[test]
    fn seeded_families_are_reproducible() {
        let a = PotentialSpec::spikes(7).build().unwrap();
        let b = PotentialSpec::spikes(7).build().unwrap();
        let c = PotentialSpec::spikes(8).build().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let g = Grid::standard(257).unwrap();
        assert!(a.sample(&g).values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn integrals_match_fine_quadrature() {
        let specs = [
            PotentialSpec::constant(2.0),
            PotentialSpec::step(0.5, 3.0),
            PotentialSpec::spikes(3),
            PotentialSpec::inverse_power(0.5, 40.0),
            PotentialSpec::harmonic(),
            PotentialSpec::piecewise(11),
        ];
        for spec in specs {
            let v = spec.build().unwrap();
            for (a, b) in [(-3.3, 2.7), (0.0, 0.01), (-0.02, 0.0), (-15.0, 15.0)] {
                // midpoint rule on a very fine mesh
                let m = 400_000;
                let dx = (b - a) / m as f64;
                let q: f64 = (0..m).map(|i| v.eval(a + (i as f64 + 0.5) * dx)).sum::<f64>() * dx;
                let exact = v.integral(&Interval::new(a, b));
                assert!(
                    (q - exact).abs() <= 1e-4 * exact.abs().max(1e-3),
                    "{}: [{a},{b}] {q} vs {exact}",
                    spec.name()
                );
            }
        }
    }

    #[test]
    fn rescaled_potential_integral_scales() {
        let v = PotentialSpec::harmonic().build().unwrap();
        let r = v.rescaled(4.0).unwrap();
        assert!((r.eval(1.5) - 4.0 * v.eval(3.0)).abs() < 1e-12);
        // ∫_0^1 4·(2x)² dx = 16/3
        assert!((r.integral(&Interval::new(0.0, 1.0)) - 16.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn spec_json_shape() {
        let spec = PotentialSpec::constant(1.5);
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["family"], "constant");
        assert_eq!(json["params"]["c"], 1.5);
        let file: PotentialFile = serde_json::from_str(
            r#"{"family":"harmonic","params":{"coefficient":1.0},"seed":0,
                "grid":{"half_width":16.0,"n_points":129}}"#,
        )
        .unwrap();
        assert_eq!(file.spec, PotentialSpec::harmonic());
        assert_eq!(file.grid.core_fraction, 0.5);
    }
}
