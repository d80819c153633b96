use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{CubeFamily, DyadicInterval};
use crate::error::{Error, Result};
use crate::grid::{integrate, Grid, GridFunction, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomKind {
    Indicator,
    Cancellative,
}

/// Cancellative profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `+1` on the left half of `Q′`, `-1` on the right half.
    Haar,
    /// `u·exp(1 − 1/(1 − u²))` on `u ∈ (-1, 1)`.
    OddBump,
    /// Random sine series under a smooth window.
    RandomMeanZero,
}

const PROFILES: [Profile; 3] = [Profile::Haar, Profile::OddBump, Profile::RandomMeanZero];

/// Everything needed to regenerate an atom on any grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub cube: DyadicInterval,
    pub kind: AtomKind,
    /// Support `Q′` of a cancellative atom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub spec: AtomSpec,
    pub values: GridFunction,
}

impl Atom {
    pub fn cube(&self) -> DyadicInterval {
        self.spec.cube
    }

    pub fn kind(&self) -> AtomKind {
        self.spec.kind
    }

    /// `Q` for indicator atoms, `Q′` for cancellative ones.
    pub fn support(&self) -> Interval {
        match self.spec.support {
            Some((lo, hi)) => Interval::new(lo, hi),
            None => self.spec.cube.interval(),
        }
    }
}

/// Atom on cube `q` of `family`.
///
/// Cancellative atoms draw their profile and a sub-interval `Q′ ⊆ Q*` from
/// `seed`; `Q′` covers at least half of `Q*` and at least `4h`.
pub fn make_atom(family: &CubeFamily, q: usize, kind: AtomKind, seed: u64, grid: &Grid) -> Result<Atom> {
    let cube = *family
        .intervals()
        .get(q)
        .ok_or_else(|| Error::Precondition(format!("cube index {q} outside family of {}", family.len())))?;
    let spec = match kind {
        AtomKind::Indicator => AtomSpec {
            cube,
            kind,
            support: None,
            profile: None,
            seed,
        },
        AtomKind::Cancellative => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let star = family.dilate(q, 1);
            let min = 4.0 * grid.spacing() * (1.0 + 1e-9);
            if star.length() < min {
                return Err(Error::Resolution(format!(
                    "Q* of length {} is narrower than 4h = {}",
                    star.length(),
                    4.0 * grid.spacing()
                )));
            }
            let len = (star.length() * rng.random_range(0.5..=1.0)).max(min);
            let lo = star.lo + rng.random_range(0.0..=1.0) * (star.length() - len);
            AtomSpec {
                cube,
                kind,
                support: Some((lo, lo + len)),
                profile: Some(PROFILES[rng.random_range(0..PROFILES.len())]),
                seed,
            }
        }
    };
    build_atom(&spec, grid)
}

/// Samples the atom described by `spec`.
pub fn build_atom(spec: &AtomSpec, grid: &Grid) -> Result<Atom> {
    let domain = grid.domain();
    let values = match spec.kind {
        AtomKind::Indicator => indicator(grid, &spec.cube.interval())?,
        AtomKind::Cancellative => {
            let (lo, hi) = spec
                .support
                .ok_or_else(|| Error::Precondition("cancellative atom without support".into()))?;
            let profile = spec
                .profile
                .ok_or_else(|| Error::Precondition("cancellative atom without profile".into()))?;
            let sub = Interval::new(lo, hi);
            if !domain.contains_interval(&sub) {
                return Err(Error::Domain(format!("support {sub:?} leaves the grid")));
            }
            let h = grid.spacing();
            if sub.length() < 4.0 * h {
                return Err(Error::Resolution(format!(
                    "support of length {} is narrower than 4h = {}",
                    sub.length(),
                    4.0 * h
                )));
            }
            cancellative(grid, &sub, profile, spec.seed)
        }
    };
    Ok(Atom {
        spec: spec.clone(),
        values,
    })
}

/// `|Q|^{-1} 1_Q` with half values at end nodes, so its trapezoid integral
/// is exactly 1 when the ends are nodes.
fn indicator(grid: &Grid, q: &Interval) -> Result<GridFunction> {
    if !grid.domain().contains_interval(q) {
        return Err(Error::Domain(format!("cube {q:?} leaves the grid")));
    }
    if q.length() < 4.0 * grid.spacing() {
        return Err(Error::Resolution(format!(
            "cube of length {} is narrower than 4h = {}",
            q.length(),
            4.0 * grid.spacing()
        )));
    }
    let height = 1.0 / q.length();
    let tol = 1e-9 * grid.spacing();
    Ok(grid.sample(|x| {
        if (x - q.lo).abs() < tol || (x - q.hi).abs() < tol {
            0.5 * height
        } else if x > q.lo && x < q.hi {
            height
        } else {
            0.0
        }
    }))
}

fn cancellative(grid: &Grid, sub: &Interval, profile: Profile, seed: u64) -> GridFunction {
    let (c, r) = (sub.center(), 0.5 * sub.length());
    let window = |u: f64| if u.abs() < 1.0 { (1.0 - 1.0 / (1.0 - u * u)).exp() } else { 0.0 };
    let raw: GridFunction = match profile {
        Profile::Haar => grid.sample(|x| {
            let u = (x - c) / r;
            if u.abs() >= 1.0 || u == 0.0 {
                0.0
            } else {
                -u.signum()
            }
        }),
        Profile::OddBump => grid.sample(|x| {
            let u = (x - c) / r;
            u * window(u)
        }),
        Profile::RandomMeanZero => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a70d);
            let modes: Vec<(f64, f64)> = (1..=4)
                .map(|k| (rng.random_range(-1.0..1.0) / k as f64, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect();
            grid.sample(|x| {
                let u = (x - c) / r;
                let s: f64 = modes
                    .iter()
                    .enumerate()
                    .map(|(k, (a, phase))| a * ((k + 1) as f64 * std::f64::consts::PI * u + phase).sin())
                    .sum();
                s * window(u)
            })
        }
    };
    // remove the discrete mean with a profile supported where `raw` is
    let carrier = match profile {
        Profile::Haar => raw.map(|v| v.abs()),
        _ => grid.sample(|x| window((x - c) / r)),
    };
    let shift = integrate(&raw) / integrate(&carrier);
    let centred = raw.sub(&carrier.scale(shift));
    let sup = centred.sup_norm();
    let scaled = centred.scale(1.0 / (sub.length() * sup));
    // second pass clears the rounding left by the rescale
    let residual = integrate(&scaled) / integrate(&carrier);
    scaled.sub(&carrier.scale(residual))
}

/// Seeded atom collection, stored as specs only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtomLibrary {
    pub atoms: Vec<AtomSpec>,
}

impl AtomLibrary {
    /// `count` atoms on seeded cubes of `family`, alternating kinds.
    pub fn generate(family: &CubeFamily, grid: &Grid, count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut atoms = Vec::with_capacity(count);
        for i in 0..count {
            let q = rng.random_range(0..family.len());
            let kind = if i % 2 == 0 { AtomKind::Indicator } else { AtomKind::Cancellative };
            atoms.push(make_atom(family, q, kind, rng.random(), grid)?.spec);
        }
        Ok(Self { atoms })
    }

    pub fn build(&self, grid: &Grid) -> Result<Vec<Atom>> {
        self.atoms.iter().map(|s| build_atom(s, grid)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("atom specs serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("atom library: {e}")))
    }
}
