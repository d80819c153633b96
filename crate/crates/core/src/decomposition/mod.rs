//! Stopping-time dyadic families, their dilates and neighbour structure,
//! partitions of unity, and estimators for the decay conditions (D) and (K).

mod conditions;
mod partition;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use conditions::{
    check_condition_d, check_condition_d_cubes, check_condition_d_family, check_condition_k, check_condition_k_cubes,
    check_condition_k_family, condition_k_value, default_k_times, FitThresholds,
};
pub use partition::{partition_of_unity, smooth_step, PartitionOfUnity};

use crate::error::{Error, Result};
use crate::grid::{Grid, Interval};
use crate::semigroup::Potential;

/// `[k·2^{-j}, (k+1)·2^{-j}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    #[serde(rename = "j")]
    pub level: i32,
    #[serde(rename = "k")]
    pub index: i64,
}

impl DyadicInterval {
    pub fn new(level: i32, index: i64) -> Self {
        Self { level, index }
    }

    pub fn diameter(&self) -> f64 {
        2f64.powi(-self.level)
    }

    pub fn lo(&self) -> f64 {
        self.index as f64 * self.diameter()
    }

    pub fn hi(&self) -> f64 {
        (self.index + 1) as f64 * self.diameter()
    }

    pub fn center(&self) -> f64 {
        (self.index as f64 + 0.5) * self.diameter()
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.lo(), self.hi())
    }

    pub fn parent(&self) -> Self {
        Self::new(self.level - 1, self.index.div_euclid(2))
    }

    pub fn children(&self) -> [Self; 2] {
        [
            Self::new(self.level + 1, 2 * self.index),
            Self::new(self.level + 1, 2 * self.index + 1),
        ]
    }

    /// `other ⊆ self` as dyadic intervals.
    pub fn contains(&self, other: &Self) -> bool {
        other.level >= self.level && other.index >> (other.level - self.level) == self.index
    }

    pub fn dilate(&self, stars: u32, beta: f64) -> Interval {
        dilate(self, stars, beta)
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo(), self.hi())
    }
}

/// `Q^{*…*}`: same centre, diameter `(1+β)^stars · d(Q)`.
pub fn dilate(q: &DyadicInterval, stars: u32, beta: f64) -> Interval {
    Interval::centered(q.center(), q.diameter() * (1.0 + beta).powi(stars as i32))
}

/// Largest admissible β: in a uniform family `Q****` stays inside the
/// union of `Q` and its two neighbours.
pub fn beta_limit() -> f64 {
    3f64.powf(0.25) - 1.0
}

pub const DEFAULT_BETA: f64 = 0.125;

pub fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0 && beta < beta_limit()) {
        return Err(Error::Range {
            message: format!("beta must lie in (0, {:.6}), got {beta}", beta_limit()),
            suggestion: Some(DEFAULT_BETA),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoppingRule {
    /// `|Q| ∫_{16Q} V ≤ 1`
    Cz,
    /// `|Q| ∫_Q V ≤ 1`
    Rh,
}

impl StoppingRule {
    pub fn value(&self, potential: &Potential, q: &DyadicInterval) -> f64 {
        let d = q.diameter();
        match self {
            Self::Cz => d * potential.integral(&Interval::centered(q.center(), 16.0 * d)),
            Self::Rh => d * potential.integral(&q.interval()),
        }
    }

    pub fn holds(&self, potential: &Potential, q: &DyadicInterval) -> bool {
        self.value(potential, q) <= RULE_TOLERANCE
    }
}

/// Rule values within this of 1 count as satisfied.
pub const RULE_TOLERANCE: f64 = 1.0 + 1e-12;

impl fmt::Display for StoppingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cz => "cz",
            Self::Rh => "rh",
        })
    }
}

impl FromStr for StoppingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cz" => Ok(Self::Cz),
            "rh" => Ok(Self::Rh),
            other => Err(Error::Config(format!("unknown stopping rule {other:?} (expected cz or rh)"))),
        }
    }
}

/// Level range `[j_min, j_max]`; `coarse_hits` counts emitted intervals at
/// `j_min` whose parent also satisfies the rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clamps {
    pub j_min: i32,
    pub j_max: i32,
    #[serde(default)]
    pub coarse_hits: usize,
}

impl Clamps {
    pub fn new(j_min: i32, j_max: i32) -> Self {
        Self {
            j_min,
            j_max,
            coarse_hits: 0,
        }
    }

    /// `d(Q) ∈ [4h, L/2]`.
    pub fn for_grid(grid: &Grid) -> Self {
        let j_min = (-(grid.half_width() / 2.0).log2() - 1e-9).ceil() as i32;
        let j_max = (-(4.0 * grid.spacing()).log2() + 1e-9).floor() as i32;
        Self::new(j_min, j_max)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub rule: Option<StoppingRule>,
    #[serde(default)]
    pub potential: Option<String>,
}

/// On-disk form of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub beta: f64,
    pub domain: (f64, f64),
    pub intervals: Vec<DyadicInterval>,
    pub clamps: Clamps,
    #[serde(default)]
    pub provenance: Provenance,
}

/// Dyadic intervals with disjoint interiors covering a domain, with the
/// dilation parameter and the derived neighbour structure.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFamily {
    beta: f64,
    domain: Interval,
    intervals: Vec<DyadicInterval>,
    clamps: Clamps,
    provenance: Provenance,
    near: Vec<Vec<usize>>,
    comparability: f64,
    overlap: usize,
}

impl CubeFamily {
    pub fn new(
        intervals: Vec<DyadicInterval>,
        beta: f64,
        domain: Interval,
        clamps: Clamps,
        provenance: Provenance,
    ) -> Result<Self> {
        check_beta(beta)?;
        let mut intervals = intervals;
        intervals.sort_by(|a, b| a.lo().total_cmp(&b.lo()));
        if intervals.is_empty() {
            return Err(Error::FamilyInvalid("empty family".into()));
        }
        if intervals[0].lo() != domain.lo || intervals.last().unwrap().hi() != domain.hi {
            return Err(Error::FamilyInvalid(format!("family does not span the domain {domain:?}")));
        }
        for w in intervals.windows(2) {
            if w[0].hi() != w[1].lo() {
                return Err(Error::FamilyInvalid(format!("gap or overlap between {} and {}", w[0], w[1])));
            }
        }

        let stars3: Vec<Interval> = intervals.iter().map(|q| dilate(q, 3, beta)).collect();
        let stars4: Vec<Interval> = intervals.iter().map(|q| dilate(q, 4, beta)).collect();
        let near = (0..intervals.len())
            .map(|i| {
                (0..intervals.len())
                    .filter(|&j| stars3[i].intersects(&stars3[j]))
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut comparability = 1.0f64;
        for i in 0..intervals.len() {
            for j in 0..intervals.len() {
                if stars4[i].intersects(&stars4[j]) {
                    comparability = comparability.max(intervals[i].diameter() / intervals[j].diameter());
                }
            }
        }
        let overlap = max_overlap(&stars4);
        Ok(Self {
            beta,
            domain,
            intervals,
            clamps,
            provenance,
            near,
            comparability,
            overlap,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn intervals(&self) -> &[DyadicInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn clamps(&self) -> Clamps {
        self.clamps
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn dilate(&self, i: usize, stars: u32) -> Interval {
        dilate(&self.intervals[i], stars, self.beta)
    }

    /// Max of `d(Q_i)/d(Q_j)` over pairs whose `Q****` meet.
    pub fn comparability(&self) -> f64 {
        self.comparability
    }

    /// Max number of `Q****` containing a single point.
    pub fn overlap(&self) -> usize {
        self.overlap
    }

    /// `2 + ⌈4(1+β)⁴⌉`.
    pub fn overlap_bound(&self) -> usize {
        2 + (4.0 * (1.0 + self.beta).powi(4)).ceil() as usize
    }

    pub fn position(&self, q: &DyadicInterval) -> Option<usize> {
        self.intervals.iter().position(|p| p == q)
    }

    /// Index of the interval containing `x` (the left one on shared ends).
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !self.domain.contains(x) {
            return None;
        }
        let i = self.intervals.partition_point(|q| q.hi() < x);
        Some(i.min(self.intervals.len() - 1))
    }

    pub fn min_diameter(&self) -> f64 {
        self.intervals.iter().map(|q| q.diameter()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_diameter(&self) -> f64 {
        self.intervals.iter().map(|q| q.diameter()).fold(0.0, f64::max)
    }

    pub fn to_file(&self) -> FamilyFile {
        FamilyFile {
            beta: self.beta,
            domain: (self.domain.lo, self.domain.hi),
            intervals: self.intervals.clone(),
            clamps: self.clamps,
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_file(file: FamilyFile) -> Result<Self> {
        Self::new(
            file.intervals,
            file.beta,
            Interval::new(file.domain.0, file.domain.1),
            file.clamps,
            file.provenance,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("family serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

fn max_overlap(windows: &[Interval]) -> usize {
    // closed intervals: starts sort before ends at equal coordinates
    let mut events: Vec<(f64, i32)> = windows.iter().flat_map(|w| [(w.lo, -1), (w.hi, 1)]).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut open, mut best) = (0i64, 0i64);
    for (_, kind) in events {
        open -= kind as i64;
        best = best.max(open);
    }
    best as usize
}

/// `(Q′(Q), Q″(Q))`: family members whose `***` dilate meets `Q***`, and
/// the rest.
pub fn neighbors(family: &CubeFamily, q: usize) -> (Vec<usize>, Vec<usize>) {
    let near = family.near[q].clone();
    let far = (0..family.len()).filter(|j| !near.contains(j)).collect();
    (near, far)
}

/// Maximal dyadic intervals inside `domain` satisfying `rule`, found by
/// descending from level `clamps.j_min`.
///
/// The rules are monotone under passing to children, so every emitted
/// interval below `j_min` has a parent that violates the rule.
pub fn stopping_time_decomposition(
    potential: &Potential,
    rule: StoppingRule,
    domain: &Interval,
    clamps: Clamps,
    beta: f64,
) -> Result<CubeFamily> {
    check_beta(beta)?;
    if clamps.j_min > clamps.j_max {
        return Err(Error::Precondition(format!("empty level range {clamps:?}")));
    }
    let top = 2f64.powi(-clamps.j_min);
    let (a, b) = (domain.lo / top, domain.hi / top);
    if a.fract() != 0.0 || b.fract() != 0.0 || b <= a {
        return Err(Error::Domain(format!(
            "domain {domain:?} is not a union of level-{} dyadic intervals",
            clamps.j_min
        )));
    }
    let mut out = Vec::new();
    let mut coarse_hits = 0;
    for k in (a as i64)..(b as i64) {
        let root = DyadicInterval::new(clamps.j_min, k);
        descend(potential, rule, root, clamps.j_max, &mut out)?;
    }
    for q in out.iter().filter(|q| q.level == clamps.j_min) {
        if rule.holds(potential, &q.parent()) {
            coarse_hits += 1;
        }
    }
    let clamps = Clamps { coarse_hits, ..clamps };
    let provenance = Provenance {
        rule: Some(rule),
        potential: Some(potential.name()),
    };
    CubeFamily::new(out, beta, *domain, clamps, provenance)
}

fn descend(
    potential: &Potential,
    rule: StoppingRule,
    q: DyadicInterval,
    j_max: i32,
    out: &mut Vec<DyadicInterval>,
) -> Result<()> {
    if rule.holds(potential, &q) {
        out.push(q);
        return Ok(());
    }
    if q.level >= j_max {
        return Err(Error::RefinementNeeded(format!(
            "{rule} rule fails on {q} at the finest admissible level {j_max} (value {:.6e})",
            rule.value(potential, &q)
        )));
    }
    for child in q.children() {
        descend(potential, rule, child, j_max, out)?;
    }
    Ok(())
}

/// Family for `potential` on the core window of `grid` with grid-derived
/// clamps.
pub fn family_for_grid(potential: &Potential, rule: StoppingRule, grid: &Grid, beta: f64) -> Result<CubeFamily> {
    stopping_time_decomposition(potential, rule, &grid.core(), Clamps::for_grid(grid), beta)
}

#[cfg(test)]
mod tests;
