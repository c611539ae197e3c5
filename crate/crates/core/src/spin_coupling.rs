//! Spin-dependent forces, the spin-mode coupling matrix and geometric phases.
//!
//! Register basis states are indexed by a 6-bit integer `s`; bit `i` is the
//! spin of ion `i` with 1 = ↑ and 0 = ↓. Ion 0 is the hub, ions 1–5 the ring
//! in clockwise order. A force `F↓ = 1` acts on spin-down ions and `F↑ = R` on
//! spin-up ions.
//!
//! A pulse of area `P_g` on degenerate mode group `g` imprints
//! `φ_s = c · Σ_g M_gs² P_g`, where `M_gs` is the quadrature sum of the
//! generalised forces on the modes of the group and `c` is fixed so that a
//! unit centre-of-mass pulse gives the all-down state a phase of π.

use std::f64::consts::PI;
use std::ops::{Add, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::crystal_modes::ModeBasis;
use crate::error::{Error, Result};

pub const N_QUBITS: usize = 6;
pub const N_STATES: usize = 1 << N_QUBITS;
pub const HUB: usize = 0;
pub const RING_SIZE: usize = 5;

/// Force ratios in this window are considered experimentally accessible.
pub const RATIO_RANGE: (f64, f64) = (-2.0, -0.5);

const RATIO_MATCH_TOLERANCE: f64 = 1e-12;

#[inline]
pub fn is_up(state: usize, ion: usize) -> bool {
    (state >> ion) & 1 == 1
}

/// Ratio `R = F↑ / F↓` of the optical dipole forces, with `F↓ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceModel {
    pub ratio: f64,
}

impl ForceModel {
    pub const F_DOWN: f64 = 1.0;

    pub fn new(ratio: f64) -> Self {
        Self { ratio }
    }

    /// `true` when R lies outside the accessible window; the model is still
    /// computable.
    pub fn out_of_range(&self) -> bool {
        !(RATIO_RANGE.0..=RATIO_RANGE.1).contains(&self.ratio)
    }

    #[inline]
    pub fn force(&self, up: bool) -> f64 {
        if up {
            self.ratio
        } else {
            Self::F_DOWN
        }
    }
}

/// Per-ion force vector for basis state `state`.
pub fn force_matrix(state: usize, model: &ForceModel) -> [f64; N_QUBITS] {
    std::array::from_fn(|i| model.force(is_up(state, i)))
}

/// Generalised forces per degenerate group and basis state, at a fixed R.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub ratio: f64,
    /// `entries[g][s]` = M_gs ≥ 0.
    pub entries: Vec<Vec<f64>>,
    /// Phase per unit pulse area per unit squared coupling.
    pub norm: f64,
}

impl CouplingMatrix {
    pub fn n_groups(&self) -> usize {
        self.entries.len()
    }

    pub fn n_states(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }
}

fn check_groups(modes: &ModeBasis) -> Result<()> {
    let n = modes.eigenvectors.ncols();
    if modes.degenerate_groups.is_empty() || modes.degenerate_groups.iter().any(Vec::is_empty) {
        return Err(Error::Structure("mode basis has no degenerate grouping".into()));
    }
    let mut seen = vec![false; modes.n_modes()];
    for &m in modes.degenerate_groups.iter().flatten() {
        if m >= seen.len() || seen[m] {
            return Err(Error::Structure(format!("mode {m} grouped twice or out of range")));
        }
        seen[m] = true;
    }
    if seen.iter().any(|s| !s) || n >= usize::BITS as usize {
        return Err(Error::Structure("degenerate groups do not partition the modes".into()));
    }
    Ok(())
}

/// Builds `M_gs = sqrt(Σ_{m∈g} (Σ_i A_mi F_is)²)` directly from the mode
/// vectors and the force on every ion.
pub fn coupling_matrix(modes: &ModeBasis, model: &ForceModel) -> Result<CouplingMatrix> {
    check_groups(modes)?;
    let n_ions = modes.eigenvectors.ncols();
    let n_states = 1usize << n_ions;
    let a = &modes.eigenvectors;
    let mut entries = vec![vec![0.0; n_states]; modes.degenerate_groups.len()];
    for s in 0..n_states {
        let forces: Vec<f64> = (0..n_ions).map(|i| model.force(is_up(s, i))).collect();
        for (g, group) in modes.degenerate_groups.iter().enumerate() {
            let sq: f64 = group
                .iter()
                .map(|&m| {
                    let q: f64 = (0..n_ions).map(|i| a[(m, i)] * forces[i]).sum();
                    q * q
                })
                .sum();
            entries[g][s] = sq.sqrt();
        }
    }
    let reference = entries[0][0];
    if !(reference > 0.0) {
        return Err(Error::Structure(
            "highest mode group does not couple to the all-down state".into(),
        ));
    }
    Ok(CouplingMatrix {
        ratio: model.ratio,
        norm: PI / (reference * reference),
        entries,
    })
}

/// Pulse areas per degenerate mode group and the force ratio used throughout
/// the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSolution {
    #[serde(rename = "P")]
    pub areas: Vec<f64>,
    #[serde(rename = "R")]
    pub ratio: f64,
    #[serde(default)]
    pub label: String,
}

impl PulseSolution {
    pub fn new(areas: Vec<f64>, ratio: f64, label: impl Into<String>) -> Self {
        Self {
            areas,
            ratio,
            label: label.into(),
        }
    }

    /// The published sequence for the hub-to-ring controlled-phase unitary.
    pub fn published_spokes() -> Self {
        Self::new(vec![3.125, 2.604, 2.604, 0.0], -1.400, "spokes")
    }

    /// The published sequence for the ring controlled-phase unitary.
    pub fn published_ring() -> Self {
        Self::new(vec![10.99, 7.677, 19.65, 10.99], -0.6737, "ring")
    }

    pub fn is_valid(&self) -> bool {
        self.ratio.is_finite() && self.areas.iter().all(|p| p.is_finite() && *p >= 0.0)
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Number of non-zero pulses in the sequence.
    pub fn pulse_count(&self) -> usize {
        self.areas.iter().filter(|p| **p > 0.0).count()
    }

    /// Copy with only the first `k` pulses applied.
    pub fn truncated(&self, k: usize) -> Self {
        let mut out = self.clone();
        for p in out.areas.iter_mut().skip(k) {
            *p = 0.0;
        }
        out
    }
}

/// Unreduced geometric phase per basis state, in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseVector(pub Vec<f64>);

impl PhaseVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Phases reduced to `[0, 2π)`.
    pub fn reduced(&self) -> Self {
        Self(self.0.iter().map(|p| p.rem_euclid(2.0 * PI)).collect())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.iter().map(|p| k * p).collect())
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    /// Diagonal of the unitary `exp(iφ_s)`.
    pub fn unitary_diagonal(&self) -> Vec<Complex64> {
        self.0.iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
    }
}

impl Add for &PhaseVector {
    type Output = PhaseVector;
    fn add(self, rhs: &PhaseVector) -> PhaseVector {
        PhaseVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &PhaseVector {
    type Output = PhaseVector;
    fn sub(self, rhs: &PhaseVector) -> PhaseVector {
        PhaseVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

/// `φ_s = c · Σ_g M_gs² P_g`, unreduced.
pub fn phases(coupling: &CouplingMatrix, solution: &PulseSolution) -> Result<PhaseVector> {
    let tol = RATIO_MATCH_TOLERANCE * coupling.ratio.abs().max(1.0);
    if (coupling.ratio - solution.ratio).abs() > tol {
        return Err(Error::RatioMismatch {
            coupling: coupling.ratio,
            solution: solution.ratio,
        });
    }
    if solution.areas.len() != coupling.n_groups() {
        return Err(Error::Structure(format!(
            "{} pulse areas for {} mode groups",
            solution.areas.len(),
            coupling.n_groups()
        )));
    }
    let mut out = vec![0.0; coupling.n_states()];
    for (g, &p) in solution.areas.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (phi, m) in out.iter_mut().zip(&coupling.entries[g]) {
            *phi += coupling.norm * m * m * p;
        }
    }
    Ok(PhaseVector(out))
}

/// Squared couplings as explicit quadratics in R: `M_gs² = q0 + q1 R + q2 R²`.
///
/// Used wherever R varies (pulse search, pulse-noise draws). Agrees with
/// [`coupling_matrix`] to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinModeCoupling {
    n_groups: usize,
    n_states: usize,
    /// `coeffs[g * n_states + s]`
    coeffs: Vec<[f64; 3]>,
    norm: f64,
}

impl SpinModeCoupling {
    pub fn new(modes: &ModeBasis) -> Result<Self> {
        check_groups(modes)?;
        let n_ions = modes.eigenvectors.ncols();
        let n_states = 1usize << n_ions;
        let n_groups = modes.degenerate_groups.len();
        let a = &modes.eigenvectors;
        let mut coeffs = vec![[0.0; 3]; n_groups * n_states];
        for (g, group) in modes.degenerate_groups.iter().enumerate() {
            for s in 0..n_states {
                let mut q = [0.0; 3];
                for &m in group {
                    let (mut down, mut up) = (0.0, 0.0);
                    for i in 0..n_ions {
                        if is_up(s, i) {
                            up += a[(m, i)];
                        } else {
                            down += a[(m, i)];
                        }
                    }
                    q[0] += down * down;
                    q[1] += 2.0 * down * up;
                    q[2] += up * up;
                }
                coeffs[g * n_states + s] = q;
            }
        }
        let reference = coeffs[0][0];
        if !(reference > 0.0) {
            return Err(Error::Structure(
                "highest mode group does not couple to the all-down state".into(),
            ));
        }
        Ok(Self {
            n_groups,
            n_states,
            coeffs,
            norm: PI / reference,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    #[inline]
    pub fn coefficients(&self, group: usize, state: usize) -> [f64; 3] {
        self.coeffs[group * self.n_states + state]
    }

    #[inline]
    pub fn squared(&self, group: usize, state: usize, ratio: f64) -> f64 {
        let q = self.coefficients(group, state);
        q[0] + ratio * (q[1] + ratio * q[2])
    }

    /// Phase of a single basis state.
    #[inline]
    pub fn phase(&self, state: usize, areas: &[f64], ratio: f64) -> f64 {
        let mut phi = 0.0;
        for (g, &p) in areas.iter().enumerate() {
            phi += p * self.squared(g, state, ratio);
        }
        self.norm * phi
    }

    pub fn phases(&self, areas: &[f64], ratio: f64) -> PhaseVector {
        PhaseVector((0..self.n_states).map(|s| self.phase(s, areas, ratio)).collect())
    }

    pub fn solution_phases(&self, solution: &PulseSolution) -> PhaseVector {
        self.phases(&solution.areas, solution.ratio)
    }

    pub fn at_ratio(&self, model: &ForceModel) -> CouplingMatrix {
        let entries = (0..self.n_groups)
            .map(|g| {
                (0..self.n_states)
                    .map(|s| self.squared(g, s, model.ratio).max(0.0).sqrt())
                    .collect()
            })
            .collect();
        CouplingMatrix {
            ratio: model.ratio,
            entries,
            norm: self.norm,
        }
    }
}

/// Orbit of basis states under rotation of the five ring labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclicClass {
    pub hub: u8,
    /// Ring bits `r1..r5` as printed, e.g. `"00011"`.
    pub ring: &'static str,
    pub representative: usize,
    pub members: Vec<usize>,
}

impl CyclicClass {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }

    pub fn label(&self) -> String {
        format!("|{}>|{}>", self.hub, self.ring)
    }
}

/// Ring patterns of the eight necklaces, in table order.
pub const RING_PATTERNS: [&str; 8] = [
    "00000", "00001", "00011", "00101", "00111", "01011", "01111", "11111",
];

/// Basis index of `|hub⟩|r1 r2 r3 r4 r5⟩`.
pub fn basis_index(hub: u8, ring: &str) -> usize {
    let mut s = (hub & 1) as usize;
    for (j, c) in ring.bytes().enumerate() {
        if c == b'1' {
            s |= 1 << (j + 1);
        }
    }
    s
}

/// Ring bits of a basis state as a 5-bit mask (bit j-1 = ring ion j).
#[inline]
pub fn ring_mask(state: usize) -> u8 {
    ((state >> 1) & 0x1f) as u8
}

/// Rotates ring ion j to j+1 (cyclically), leaving the hub alone.
pub fn rotate_ring(state: usize) -> usize {
    let ring = ring_mask(state);
    let rotated = ((ring << 1) | (ring >> 4)) & 0x1f;
    (state & 1) | ((rotated as usize) << 1)
}

/// Mirror of the pentagon: ring ion j ↔ ring ion 6−j.
pub fn reflect_ring(state: usize) -> usize {
    let mut out = state & 1;
    for j in 1..=RING_SIZE {
        if is_up(state, j) {
            out |= 1 << (RING_SIZE + 1 - j);
        }
    }
    out
}

/// The 16 cyclic classes, hub-down classes first, each in [`RING_PATTERNS`]
/// order.
pub fn cyclic_classes() -> Vec<CyclicClass> {
    let mut out = Vec::with_capacity(16);
    for hub in 0..2u8 {
        for ring in RING_PATTERNS {
            let representative = basis_index(hub, ring);
            let mut members = vec![representative];
            let mut s = rotate_ring(representative);
            while s != representative {
                members.push(s);
                s = rotate_ring(s);
            }
            members.sort_unstable();
            out.push(CyclicClass {
                hub,
                ring,
                representative,
                members,
            });
        }
    }
    out
}

/// Overlap magnitude `|(1/N) Σ_s exp(i(φ_s − φ'_s))|` between the uniform
/// superposition evolved under `phases` and under `target`.
pub fn intermediate_fidelity(phases: &PhaseVector, target: &PhaseVector) -> f64 {
    let n = phases.len() as f64;
    let sum: Complex64 = phases
        .0
        .iter()
        .zip(&target.0)
        .map(|(a, b)| Complex64::from_polar(1.0, a - b))
        .sum();
    sum.norm() / n
}
