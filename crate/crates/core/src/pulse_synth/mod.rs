//! Pulse-sequence synthesis: target unitaries, the telescoping class cost,
//! verification, and the integer/continuous searches.
//!
//! A sequence realizes a diagonal target when every basis state's phase
//! differs from the target by the same constant modulo 2π. Writing
//! `Φ_s = φ_s + 2π n_s`, this becomes the continuous condition that
//! consecutive differences `(Φ_{k+1} − φ'_{k+1}) − (Φ_k − φ'_k)` vanish, with
//! one integer `n_k` per cyclic class and the first class as reference.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin_coupling::{
    coupling_matrix, cyclic_classes, is_up, rotate_ring, CyclicClass, ForceModel, PhaseVector,
    PulseSolution, SpinModeCoupling, N_STATES, RATIO_RANGE,
};
use crate::crystal_modes::ModeBasis;

mod evolution;
pub mod nelder_mead;
mod search;

pub use evolution::{evolutionary_search, EvolutionConfig};
pub use nelder_mead::{minimize, Bounds, Minimum, NelderMeadOptions};
pub use search::{integer_search, tree_size, Budget, SearchConfig};

pub const N_CLASSES: usize = 16;
pub const AREA_MAX: f64 = 25.0;
pub const PRUNE_THRESHOLD: f64 = 1e-6;
pub const ACCEPT_TOLERANCE: f64 = 1e-8;
pub const MAX_BOUND: i32 = 10;

const TWO_PI: f64 = 2.0 * PI;

/// Desired diagonal unitary as target phases in `[0, 2π)`.
///
/// With `hub_spectator` set, the unitary only needs to be matched up to an
/// independent phase in each hub sector, i.e. up to a Z rotation on the hub.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetUnitary {
    pub name: String,
    pub phases: Vec<f64>,
    #[serde(default)]
    pub hub_spectator: bool,
}

/// Number of adjacent pentagon pairs with both ions up.
pub fn ring_edges_up(state: usize) -> usize {
    (1..=5)
        .filter(|&j| is_up(state, j) && is_up(state, j % 5 + 1))
        .count()
}

fn reduce(phi: f64) -> f64 {
    let r = phi.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

impl TargetUnitary {
    /// Controlled-Z between the hub and each ring ion.
    pub fn spokes() -> Self {
        let phases = (0..N_STATES)
            .map(|s| {
                let weight = (1..=5).filter(|&j| is_up(s, j)).count();
                if is_up(s, 0) && weight % 2 == 1 {
                    PI
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            name: "spokes".into(),
            phases,
            hub_spectator: false,
        }
    }

    /// Controlled-Z on each pentagon edge. The hub is a spectator.
    pub fn ring() -> Self {
        let phases = (0..N_STATES)
            .map(|s| if ring_edges_up(s) % 2 == 1 { PI } else { 0.0 })
            .collect();
        Self {
            name: "ring".into(),
            phases,
            hub_spectator: true,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "spokes" => Ok(Self::spokes()),
            "ring" => Ok(Self::ring()),
            other => Err(Error::Argument(format!("unknown target {other:?}"))),
        }
    }

    /// Custom target; phases are reduced mod 2π and must be constant on
    /// cyclic classes.
    pub fn custom(name: impl Into<String>, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != N_STATES {
            return Err(Error::Argument(format!("target needs {N_STATES} phases, got {}", phases.len())));
        }
        if let Some(bad) = phases.iter().find(|p| !p.is_finite()) {
            return Err(Error::Argument(format!("non-finite target phase {bad}")));
        }
        let phases: Vec<f64> = phases.into_iter().map(reduce).collect();
        for s in 0..N_STATES {
            let d = wrap(phases[rotate_ring(s)] - phases[s]);
            if d.abs() > 1e-9 {
                return Err(Error::Structure(format!(
                    "target phase differs between state {s} and its ring rotation"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            phases,
            hub_spectator: false,
        })
    }

    /// Target induced by a realizable sequence.
    pub fn from_phases(name: impl Into<String>, phases: &PhaseVector) -> Result<Self> {
        Self::custom(name, phases.0.clone())
    }

    pub fn class_phases(&self, classes: &[CyclicClass]) -> Vec<f64> {
        classes.iter().map(|c| self.phases[c.representative]).collect()
    }

    pub fn phase_vector(&self) -> PhaseVector {
        PhaseVector(self.phases.clone())
    }
}

/// Signed distance to the nearest multiple of 2π, in `[−π, π]`.
pub fn wrap(x: f64) -> f64 {
    x - TWO_PI * (x / TWO_PI).round()
}

/// One integer per cyclic class; entry 0 is the reference and always 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntegerAssignment {
    pub n: Vec<i32>,
    pub bound: i32,
}

impl IntegerAssignment {
    pub fn zeros(len: usize, bound: i32) -> Self {
        Self { n: vec![0; len], bound }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.first().is_some_and(|&n0| n0 != 0) {
            return Err(Error::Argument("reference class integer must be 0".into()));
        }
        if let Some(v) = self.n.iter().find(|v| v.abs() > self.bound) {
            return Err(Error::Argument(format!("integer {v} outside bound {}", self.bound)));
        }
        Ok(())
    }
}

/// Class-reduced synthesis problem: per-class quadratic coefficients and
/// target phases, optionally truncated to the first `m` classes.
#[derive(Debug, Clone)]
pub struct ClassProblem {
    coeffs: Vec<[[f64; 3]; 4]>,
    target: Vec<f64>,
    /// `active[k]` = whether the term between class k−1 and k contributes.
    active: Vec<bool>,
    /// Classes whose integer is pinned to 0.
    fixed: Vec<bool>,
    norm: f64,
}

impl ClassProblem {
    pub fn new(coupling: &SpinModeCoupling, target: &TargetUnitary) -> Result<Self> {
        Self::truncated(coupling, target, N_CLASSES)
    }

    pub fn truncated(coupling: &SpinModeCoupling, target: &TargetUnitary, m: usize) -> Result<Self> {
        if coupling.n_groups() != 4 || coupling.n_states() != N_STATES {
            return Err(Error::Structure(format!(
                "expected 4 mode groups over {N_STATES} states, got {} over {}",
                coupling.n_groups(),
                coupling.n_states()
            )));
        }
        if !(2..=N_CLASSES).contains(&m) {
            return Err(Error::Argument(format!("class count {m} outside 2..={N_CLASSES}")));
        }
        let classes = cyclic_classes();
        let classes = &classes[..m];
        let coeffs = classes
            .iter()
            .map(|c| std::array::from_fn(|g| coupling.coefficients(g, c.representative)))
            .collect();
        let mut active = vec![true; m];
        active[0] = false;
        let mut fixed = vec![false; m];
        fixed[0] = true;
        if target.hub_spectator {
            for k in 1..m {
                if classes[k].hub != classes[k - 1].hub {
                    active[k] = false;
                    fixed[k] = true;
                }
            }
        }
        Ok(Self {
            coeffs,
            target: target.class_phases(classes),
            active,
            fixed,
            norm: coupling.norm(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.target.len()
    }

    pub fn is_fixed(&self, k: usize) -> bool {
        self.fixed[k]
    }

    #[inline]
    pub fn class_phase(&self, k: usize, areas: &[f64], ratio: f64) -> f64 {
        let mut phi = 0.0;
        for (g, q) in self.coeffs[k].iter().enumerate() {
            phi += areas[g] * (q[0] + ratio * (q[1] + ratio * q[2]));
        }
        self.norm * phi
    }

    /// Offsets `φ_k − φ'_k` for classes `0..=upto`.
    fn offsets(&self, areas: &[f64], ratio: f64, upto: usize, out: &mut [f64]) {
        for k in 0..=upto {
            out[k] = self.class_phase(k, areas, ratio) - self.target[k];
        }
    }

    /// Sum of the telescoping terms `1..=depth`; integers beyond `n.len()`
    /// are not needed.
    pub fn partial_cost(&self, areas: &[f64], ratio: f64, n: &[i32], depth: usize) -> f64 {
        let mut off = [0.0; N_CLASSES];
        self.offsets(areas, ratio, depth, &mut off);
        let mut c = 0.0;
        for k in 1..=depth {
            if self.active[k] {
                let d = off[k] + TWO_PI * n[k] as f64 - off[k - 1] - TWO_PI * n[k - 1] as f64;
                c += d * d;
            }
        }
        c
    }

    pub fn cost(&self, areas: &[f64], ratio: f64, n: &[i32]) -> f64 {
        self.partial_cost(areas, ratio, n, self.n_classes() - 1)
    }

    /// Best integers for a given continuous point: each term rounded to its
    /// nearest zero in turn.
    pub fn repair_integers(&self, areas: &[f64], ratio: f64, bound: i32) -> Vec<i32> {
        let m = self.n_classes();
        let mut off = [0.0; N_CLASSES];
        self.offsets(areas, ratio, m - 1, &mut off);
        let mut n = vec![0i32; m];
        for k in 1..m {
            if self.fixed[k] {
                continue;
            }
            let want = (off[k - 1] + TWO_PI * n[k - 1] as f64 - off[k]) / TWO_PI;
            n[k] = (want.round() as i32).clamp(-bound, bound);
        }
        n
    }

    /// Linear least-squares design for the first `depth` terms at fixed R:
    /// term_k = Σ_g P_g a_kg − b_k.
    fn linear_system(&self, ratio: f64, n: &[i32], depth: usize) -> (Vec<[f64; 4]>, Vec<f64>) {
        let mut rows = Vec::with_capacity(depth);
        let mut rhs = Vec::with_capacity(depth);
        let sq = |k: usize, g: usize| {
            let q = self.coeffs[k][g];
            self.norm * (q[0] + ratio * (q[1] + ratio * q[2]))
        };
        for k in 1..=depth {
            if !self.active[k] {
                continue;
            }
            rows.push(std::array::from_fn(|g| sq(k, g) - sq(k - 1, g)));
            rhs.push(
                self.target[k] - self.target[k - 1] - TWO_PI * (n[k] - n[k - 1]) as f64,
            );
        }
        (rows, rhs)
    }

    /// Non-negative least squares in P at fixed R over the first `depth`
    /// terms, by enumerating supports; entries above the area cap are
    /// clamped.
    pub fn areas_at_ratio(&self, ratio: f64, n: &[i32], depth: usize) -> [f64; 4] {
        let (rows, rhs) = self.linear_system(ratio, n, depth);
        let mut best = ([0.0; 4], f64::INFINITY);
        if rows.is_empty() {
            return best.0;
        }
        for mask in 0u8..16 {
            let support: Vec<usize> = (0..4).filter(|g| mask >> g & 1 == 1).collect();
            let mut p = [0.0; 4];
            if !support.is_empty() {
                let a = nalgebra::DMatrix::from_fn(rows.len(), support.len(), |i, j| rows[i][support[j]]);
                let b = nalgebra::DVector::from_column_slice(&rhs);
                let Ok(x) = a.svd(true, true).solve(&b, 1e-12) else {
                    continue;
                };
                if x.iter().any(|v| *v < 0.0) {
                    continue;
                }
                for (j, &g) in support.iter().enumerate() {
                    p[g] = x[j].min(AREA_MAX);
                }
            }
            let r: f64 = rows
                .iter()
                .zip(&rhs)
                .map(|(row, b)| {
                    let t: f64 = row.iter().zip(&p).map(|(a, x)| a * x).sum::<f64>() - b;
                    t * t
                })
                .sum();
            if r < best.1 {
                best = (p, r);
            }
        }
        best.0
    }
}

impl ClassProblem {
    /// Exact solutions of a fixed integer string usually form an interval in
    /// R (with P given by least squares). Moves an accepted point `x` to the
    /// smallest total area on that interval, keeping the cost below `tol`.
    pub fn slide_to_min_area(&self, n: &[i32], x: &[f64], tol: f64) -> Vec<f64> {
        let depth = self.n_classes() - 1;
        let at = |r: f64| -> Option<(f64, [f64; 4])> {
            let p = self.areas_at_ratio(r, n, depth);
            (self.cost(&p, r, n) < tol).then(|| (p.iter().sum(), p))
        };
        let r0 = x[4];
        let Some(mut best) = at(r0).map(|(a, p)| (a, p, r0)) else {
            return x.to_vec();
        };
        let consider = |best: &mut (f64, [f64; 4], f64), r: f64| {
            if let Some((a, p)) = at(r) {
                if a < best.0 || (a == best.0 && (r + 1.0).abs() < (best.2 + 1.0).abs()) {
                    *best = (a, p, r);
                }
            }
        };
        for dir in [-1.0, 1.0] {
            let limit = if dir < 0.0 { RATIO_RANGE.0 } else { RATIO_RANGE.1 };
            let (mut inside, mut step) = (r0, 0.01);
            let outside = loop {
                let r = (inside + dir * step).clamp(RATIO_RANGE.0, RATIO_RANGE.1);
                if at(r).is_none() {
                    break Some(r);
                }
                consider(&mut best, r);
                inside = r;
                if r == limit {
                    break None;
                }
                step *= 2.0;
            };
            if let Some(mut out) = outside {
                for _ in 0..60 {
                    let mid = 0.5 * (inside + out);
                    if at(mid).is_some() {
                        inside = mid;
                    } else {
                        out = mid;
                    }
                }
                consider(&mut best, inside);
            }
        }
        let (_, p, r) = best;
        p.iter().copied().chain([r]).collect()
    }
}

/// Bounds on `(P₁..P₄, R)` used by every search.
pub fn search_bounds() -> Bounds {
    Bounds::new(
        vec![0.0, 0.0, 0.0, 0.0, RATIO_RANGE.0],
        vec![AREA_MAX, AREA_MAX, AREA_MAX, AREA_MAX, RATIO_RANGE.1],
    )
}

/// Telescoping cost over the 16 cyclic classes.
pub fn cost(areas: &[f64], ratio: f64, n: &IntegerAssignment, target: &TargetUnitary, coupling: &SpinModeCoupling) -> Result<f64> {
    let problem = ClassProblem::new(coupling, target)?;
    if n.n.len() != N_CLASSES {
        return Err(Error::Argument(format!("need {N_CLASSES} integers, got {}", n.n.len())));
    }
    Ok(problem.cost(areas, ratio, &n.n))
}

/// Same cost evaluated state by state over all 64 basis states, with phases
/// built from the per-ion forces and mode vectors directly. States are
/// visited class by class; neighbours within a class contribute their own
/// (ideally zero) differences.
pub fn state_resolved_cost(
    areas: &[f64],
    ratio: f64,
    n: &[i32],
    target: &TargetUnitary,
    modes: &ModeBasis,
) -> Result<f64> {
    let coupling = coupling_matrix(modes, &ForceModel::new(ratio))?;
    let classes = cyclic_classes();
    let mut order = Vec::with_capacity(N_STATES);
    for (k, class) in classes.iter().enumerate().take(n.len()) {
        for &s in &class.members {
            order.push((k, s));
        }
    }
    let phase = |s: usize| -> f64 {
        areas
            .iter()
            .enumerate()
            .map(|(g, p)| coupling.norm * coupling.entries[g][s].powi(2) * p)
            .sum()
    };
    let mut c = 0.0;
    for w in order.windows(2) {
        let ((ka, sa), (kb, sb)) = (w[0], w[1]);
        if target.hub_spectator && is_up(sa, 0) != is_up(sb, 0) {
            continue;
        }
        let a = phase(sa) + TWO_PI * n[ka] as f64 - target.phases[sa];
        let b = phase(sb) + TWO_PI * n[kb] as f64 - target.phases[sb];
        c += (b - a).powi(2);
    }
    Ok(c)
}

/// Maximum distance (radians) of `φ_s − φ'_s − ref` to a multiple of 2π.
/// The reference is the deviation of the first class in the state's hub
/// sector for spectator targets, of the first class otherwise.
pub fn verify_solution(solution: &PulseSolution, target: &TargetUnitary, coupling: &SpinModeCoupling) -> Result<f64> {
    if solution.areas.len() != coupling.n_groups() {
        return Err(Error::Structure(format!(
            "{} pulse areas for {} mode groups",
            solution.areas.len(),
            coupling.n_groups()
        )));
    }
    let phases = coupling.solution_phases(solution);
    verify_phases(&phases, target)
}

pub fn verify_phases(phases: &PhaseVector, target: &TargetUnitary) -> Result<f64> {
    if phases.len() != target.phases.len() {
        return Err(Error::Argument("phase vector length differs from target".into()));
    }
    let dev = |s: usize| phases.0[s] - target.phases[s];
    let reference = |s: usize| if target.hub_spectator && is_up(s, 0) { dev(1) } else { dev(0) };
    Ok((0..phases.len())
        .map(|s| wrap(dev(s) - reference(s)).abs())
        .fold(0.0, f64::max))
}

/// A reported solution with its residual and integer string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub solution: PulseSolution,
    pub residual: f64,
    pub assignment: IntegerAssignment,
}

impl SearchHit {
    fn rank_key(&self) -> (f64, f64) {
        (self.solution.total_area(), (self.solution.ratio + 1.0).abs())
    }
}

/// Orders hits by total area, then `|R + 1|`, then integer string.
pub fn rank_hits(hits: &mut [SearchHit]) {
    hits.sort_by(|a, b| {
        let (ka, kb) = (a.rank_key(), b.rank_key());
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then_with(|| a.assignment.n.cmp(&b.assignment.n))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub solutions: Vec<SearchHit>,
    pub nodes_explored: u64,
    pub nodes_pruned: u64,
    pub wall_time: f64,
    /// Budget ran out before the tree was exhausted.
    pub exhausted: bool,
}

impl SearchReport {
    pub fn empty() -> Self {
        Self {
            solutions: Vec::new(),
            nodes_explored: 0,
            nodes_pruned: 0,
            wall_time: 0.0,
            exhausted: false,
        }
    }
}

/// On-disk solution format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub target: String,
    #[serde(rename = "P")]
    pub areas: Vec<f64>,
    #[serde(rename = "R")]
    pub ratio: f64,
    #[serde(default)]
    pub n: Vec<i32>,
    #[serde(default)]
    pub residual: f64,
}

impl SolutionFile {
    pub fn from_hit(target: &str, hit: &SearchHit) -> Self {
        Self {
            target: target.to_string(),
            areas: hit.solution.areas.clone(),
            ratio: hit.solution.ratio,
            n: hit.assignment.n.clone(),
            residual: hit.residual,
        }
    }

    pub fn solution(&self) -> PulseSolution {
        PulseSolution::new(self.areas.clone(), self.ratio, self.target.clone())
    }
}

/// Refines a solution (for example one printed to a few digits) by
/// recovering its integer string and minimizing the cost from it.
pub fn polish(solution: &PulseSolution, target: &TargetUnitary, coupling: &SpinModeCoupling) -> Result<SearchHit> {
    let problem = ClassProblem::new(coupling, target)?;
    let n = problem.repair_integers(&solution.areas, solution.ratio, MAX_BOUND);
    let x0: Vec<f64> = solution.areas.iter().copied().chain([solution.ratio]).collect();
    let m = minimize(
        |x| problem.cost(&x[..4], x[4], &n),
        &x0,
        &search_bounds(),
        &NelderMeadOptions {
            initial_step: 1e-3,
            ..Default::default()
        },
    )?;
    Ok(SearchHit {
        solution: PulseSolution::new(m.x[..4].to_vec(), m.x[4], solution.label.clone()),
        residual: m.value,
        assignment: IntegerAssignment { n, bound: MAX_BOUND },
    })
}
