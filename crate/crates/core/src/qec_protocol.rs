//! Teleportation-based encode / store / readout for the five-qubit
//! repetition code (5RC) and the five-qubit code (5QC).
//!
//! Encoding entangles the hub with the ring through the spokes unitary and
//! measures the hub in X, leaving the ring in `α|+⟩⁵ ± β|−⟩⁵`; the 5QC
//! additionally applies the ring unitary. Readout reverses this: ring
//! unitary (5QC), hub reset to |+⟩, spokes unitary, and an X measurement of
//! every ring ion whose fluorescence pattern selects a Pauli correction on
//! the hub.
//!
//! Measurement outcomes are enumerated exactly. The encode-step hub outcome
//! is tracked as a Pauli frame on each branch and applied at readout.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::crystal_modes::{solve_modes, CrystalConfig};
use crate::error::{Error, Result};
use crate::pulse_synth::{polish, verify_solution, TargetUnitary};
use crate::quantum_engine::{
    conjugate2, qubit_fidelity, Mat2, NoiseChannelSpec, NoiseKind, Pauli, PureTarget, RegisterState, XOutcome,
};
use crate::spin_coupling::{PhaseVector, PulseSolution, SpinModeCoupling, N_QUBITS, RING_SIZE};

/// Gate-noise duration per entangling unitary, in coherence times.
pub const DEFAULT_GATE_TIME: f64 = 5e-4;
/// Default verification tolerance for pulse solutions, radians.
pub const SOLUTION_TOLERANCE: f64 = 0.02 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodeKind {
    #[serde(rename = "5rc")]
    FiveRC,
    #[serde(rename = "5qc")]
    FiveQC,
}

impl CodeKind {
    /// Storage and gate noise paired with the code.
    pub fn noise_kind(self) -> NoiseKind {
        match self {
            CodeKind::FiveRC => NoiseKind::Dephasing,
            CodeKind::FiveQC => NoiseKind::Depolarizing,
        }
    }

    pub fn needs_ring(self) -> bool {
        self == CodeKind::FiveQC
    }

    pub fn label(self) -> &'static str {
        match self {
            CodeKind::FiveRC => "5rc",
            CodeKind::FiveQC => "5qc",
        }
    }
}

impl fmt::Display for CodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CodeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "5rc" => Ok(CodeKind::FiveRC),
            "5qc" => Ok(CodeKind::FiveQC),
            _ => Err(Error::Argument(format!("unknown code {s:?}, expected 5rc or 5qc"))),
        }
    }
}

/// Pending logical Pauli, applied to the hub at readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFrame {
    pub pending: Pauli,
}

impl Default for PauliFrame {
    fn default() -> Self {
        Self { pending: Pauli::I }
    }
}

impl PauliFrame {
    pub fn new(p: Pauli) -> Self {
        Self { pending: p }
    }

    pub fn compose(self, other: PauliFrame) -> PauliFrame {
        PauliFrame::new(self.pending.compose(other.pending))
    }
}

/// Bright (`true`) / dark ring ions in clockwise order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FluorescencePattern {
    pub bits: [bool; RING_SIZE],
}

impl FluorescencePattern {
    /// Bit `j` of `mask` is ring ion `j + 1`.
    pub fn from_mask(mask: u8) -> Self {
        Self {
            bits: std::array::from_fn(|j| mask >> j & 1 == 1),
        }
    }

    pub fn mask(&self) -> u8 {
        self.bits.iter().enumerate().map(|(j, &b)| (b as u8) << j).sum()
    }

    pub fn rotated(&self, k: usize) -> Self {
        Self {
            bits: std::array::from_fn(|j| self.bits[(j + k) % RING_SIZE]),
        }
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.map(|b| !b),
        }
    }

    /// Lexicographically smallest rotation, dark before bright.
    pub fn canonical(&self) -> Self {
        (0..RING_SIZE).map(|k| self.rotated(k)).min().expect("ring is non-empty")
    }

    pub fn count_bright(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

impl fmt::Display for FluorescencePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits {
            f.write_str(if b { "■" } else { "□" })?;
        }
        Ok(())
    }
}

impl FromStr for FluorescencePattern {
    type Err = Error;
    /// Accepts `■`/`□` or `1`/`0`.
    fn from_str(s: &str) -> Result<Self> {
        let bits: Vec<bool> = s
            .chars()
            .map(|c| match c {
                '■' | '1' => Ok(true),
                '□' | '0' => Ok(false),
                _ => Err(Error::Argument(format!("bad pattern character {c:?}"))),
            })
            .collect::<Result<_>>()?;
        let bits: [bool; RING_SIZE] = bits
            .try_into()
            .map_err(|_| Error::Argument(format!("pattern {s:?} needs {RING_SIZE} ions")))?;
        Ok(Self { bits })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyndromeTable {
    pub kind: CodeKind,
    /// Canonical pattern → hub correction.
    pub corrections: BTreeMap<FluorescencePattern, Pauli>,
}

const TABLE_5RC: [(&str, Pauli); 8] = [
    ("□□□□□", Pauli::I),
    ("■■■■■", Pauli::X),
    ("□□■□□", Pauli::I),
    ("■■□■■", Pauli::X),
    ("■□□□■", Pauli::I),
    ("□■■■□", Pauli::X),
    ("□■□■□", Pauli::I),
    ("■□■□■", Pauli::X),
];

const TABLE_5QC: [(&str, Pauli); 8] = [
    ("□□□□□", Pauli::I),
    ("■■■■■", Pauli::X),
    ("□□■□□", Pauli::I),
    ("■■□■■", Pauli::X),
    ("■□□□■", Pauli::Y),
    ("□■■■□", Pauli::Z),
    ("□■□■□", Pauli::Z),
    ("■□■□■", Pauli::Y),
];

/// Pattern → correction table, phases dropped.
pub fn build_syndrome_table(kind: CodeKind) -> SyndromeTable {
    let rows = match kind {
        CodeKind::FiveRC => TABLE_5RC,
        CodeKind::FiveQC => TABLE_5QC,
    };
    let corrections = rows
        .iter()
        .map(|(p, c)| (p.parse::<FluorescencePattern>().expect("table literal").canonical(), *c))
        .collect();
    SyndromeTable { kind, corrections }
}

impl SyndromeTable {
    pub fn correction(&self, pattern: &FluorescencePattern) -> Result<Pauli> {
        self.corrections
            .get(&pattern.canonical())
            .copied()
            .ok_or_else(|| Error::Consistency(format!("pattern {pattern} missing from {} table", self.kind)))
    }
}

/// Phases of every entangling unitary in one protocol run, in application
/// order. Ring entries are present for the 5QC only.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSet {
    pub encode_spokes: PhaseVector,
    pub encode_ring: Option<PhaseVector>,
    pub readout_ring: Option<PhaseVector>,
    pub readout_spokes: PhaseVector,
}

/// Outcome-conditioned share of the encoded register.
#[derive(Debug, Clone)]
pub struct EncodedBranch {
    pub outcome: XOutcome,
    pub probability: f64,
    pub state: RegisterState,
    pub frame: PauliFrame,
}

#[derive(Debug, Clone)]
pub struct EncodedRegister {
    pub kind: CodeKind,
    pub branches: Vec<EncodedBranch>,
}

/// Noiseless calibration of the encode fixups and the optical polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    /// Fixup for hub outcome "+" and "−".
    pub frames: [Pauli; 2],
    /// Whether a bright ion means X outcome "−".
    pub bright_is_minus: bool,
}

impl Calibration {
    fn frame(&self, outcome: XOutcome) -> PauliFrame {
        PauliFrame::new(match outcome {
            XOutcome::Plus => self.frames[0],
            XOutcome::Minus => self.frames[1],
        })
    }

    pub fn pattern(&self, minus_mask: u8) -> FluorescencePattern {
        let p = FluorescencePattern::from_mask(minus_mask);
        if self.bright_is_minus {
            p
        } else {
            p.complement()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub gate_time: f64,
    pub tolerance: f64,
    /// Accept solutions that fail verification.
    pub force: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            gate_time: DEFAULT_GATE_TIME,
            tolerance: SOLUTION_TOLERANCE,
            force: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Protocol {
    pub kind: CodeKind,
    pub spokes: PulseSolution,
    pub ring: Option<PulseSolution>,
    pub coupling: SpinModeCoupling,
    pub table: SyndromeTable,
    pub calibration: Calibration,
    pub gate_time: f64,
    spokes_target: TargetUnitary,
    ring_target: TargetUnitary,
}

fn check_solution(
    label: &str,
    solution: &PulseSolution,
    target: &TargetUnitary,
    coupling: &SpinModeCoupling,
    opts: &ProtocolOptions,
) -> Result<()> {
    if !solution.is_valid() {
        return Err(Error::Argument(format!("{label} solution has negative or non-finite entries")));
    }
    let deviation = verify_solution(solution, target, coupling)?;
    if deviation > opts.tolerance && !opts.force {
        return Err(Error::Unverified {
            label: label.to_string(),
            deviation,
            tolerance: opts.tolerance,
        });
    }
    Ok(())
}

impl Protocol {
    /// Builds and calibrates a protocol from explicit pulse solutions.
    pub fn new(
        kind: CodeKind,
        coupling: SpinModeCoupling,
        spokes: PulseSolution,
        ring: Option<PulseSolution>,
        opts: ProtocolOptions,
    ) -> Result<Self> {
        if !(opts.gate_time >= 0.0) {
            return Err(Error::Argument(format!("gate time {} must be ≥ 0", opts.gate_time)));
        }
        let spokes_target = TargetUnitary::spokes();
        let ring_target = TargetUnitary::ring();
        check_solution("spokes", &spokes, &spokes_target, &coupling, &opts)?;
        let ring = match (kind.needs_ring(), ring) {
            (true, None) => return Err(Error::Argument("the 5QC needs a ring solution".into())),
            (true, Some(r)) => {
                check_solution("ring", &r, &ring_target, &coupling, &opts)?;
                Some(r)
            }
            (false, _) => None,
        };
        let mut protocol = Self {
            kind,
            spokes,
            ring,
            coupling,
            table: build_syndrome_table(kind),
            calibration: Calibration {
                frames: [Pauli::I; 2],
                bright_is_minus: true,
            },
            gate_time: opts.gate_time,
            spokes_target,
            ring_target,
        };
        protocol.calibration = protocol.calibrate()?;
        Ok(protocol)
    }

    /// Default crystal and the published sequences, refined to full
    /// precision.
    pub fn standard(kind: CodeKind) -> Result<Self> {
        Self::standard_with(kind, ProtocolOptions::default())
    }

    pub fn standard_with(kind: CodeKind, opts: ProtocolOptions) -> Result<Self> {
        let (_, modes) = solve_modes(&CrystalConfig::default())?;
        let coupling = SpinModeCoupling::new(&modes)?;
        let spokes = polish(&PulseSolution::published_spokes(), &TargetUnitary::spokes(), &coupling)?.solution;
        let ring = if kind.needs_ring() {
            Some(polish(&PulseSolution::published_ring(), &TargetUnitary::ring(), &coupling)?.solution)
        } else {
            None
        };
        Self::new(kind, coupling, spokes, ring, opts)
    }

    pub fn with_gate_time(mut self, t: f64) -> Self {
        self.gate_time = t;
        self
    }

    /// Exact target unitaries.
    pub fn ideal_gates(&self) -> GateSet {
        let ring = self.kind.needs_ring().then(|| self.ring_target.phase_vector());
        GateSet {
            encode_spokes: self.spokes_target.phase_vector(),
            encode_ring: ring.clone(),
            readout_ring: ring,
            readout_spokes: self.spokes_target.phase_vector(),
        }
    }

    fn pulse_phases<R: Rng + ?Sized>(&self, solution: &PulseSolution, noise: Option<(&Normal<f64>, &mut R)>) -> PhaseVector {
        match noise {
            None => self.coupling.solution_phases(solution),
            Some((dist, rng)) => {
                let areas: Vec<f64> = solution.areas.iter().map(|p| p * dist.sample(rng)).collect();
                let ratio = solution.ratio * dist.sample(rng);
                self.coupling.phases(&areas, ratio)
            }
        }
    }

    /// Unperturbed pulse-realized unitaries.
    pub fn exact_pulse_gates(&self) -> GateSet {
        let spokes = self.coupling.solution_phases(&self.spokes);
        let ring = self.ring.as_ref().map(|r| self.coupling.solution_phases(r));
        GateSet {
            encode_spokes: spokes.clone(),
            encode_ring: ring.clone(),
            readout_ring: ring,
            readout_spokes: spokes,
        }
    }

    /// Pulse-realized unitaries with relative errors `ε ~ N(1, σ)` drawn
    /// independently for every pulse area and for R, per application.
    pub fn pulse_gates<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> Result<GateSet> {
        if !(sigma >= 0.0) {
            return Err(Error::Argument(format!("σ = {sigma} must be ≥ 0")));
        }
        if sigma == 0.0 {
            return Ok(self.exact_pulse_gates());
        }
        let dist = Normal::new(1.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
        let encode_spokes = self.pulse_phases(&self.spokes, Some((&dist, &mut *rng)));
        let encode_ring = self.ring.as_ref().map(|r| self.pulse_phases(r, Some((&dist, &mut *rng))));
        let readout_ring = self.ring.as_ref().map(|r| self.pulse_phases(r, Some((&dist, &mut *rng))));
        let readout_spokes = self.pulse_phases(&self.spokes, Some((&dist, &mut *rng)));
        Ok(GateSet {
            encode_spokes,
            encode_ring,
            readout_ring,
            readout_spokes,
        })
    }

    fn gate_noise(&self, state: &mut RegisterState) -> Result<()> {
        if self.gate_time > 0.0 {
            state.apply_noise_all(&NoiseChannelSpec::new(self.kind.noise_kind(), self.gate_time)?)?;
        }
        Ok(())
    }

    fn ring_phases<'a>(&self, phases: &'a Option<PhaseVector>) -> Result<Option<&'a PhaseVector>> {
        match (self.kind.needs_ring(), phases) {
            (false, _) => Ok(None),
            (true, Some(p)) => Ok(Some(p)),
            (true, None) => Err(Error::Consistency("gate set lacks the ring unitary".into())),
        }
    }

    pub fn encode(&self, psi: &PureTarget, gates: &GateSet) -> Result<EncodedRegister> {
        self.encode_state(RegisterState::prepare_initial(psi), gates)
    }

    /// Encodes from an already prepared register (hub ⊗ |+⟩⁵).
    pub fn encode_state(&self, mut state: RegisterState, gates: &GateSet) -> Result<EncodedRegister> {
        self.gate_noise(&mut state)?;
        state.apply_diagonal(&gates.encode_spokes);
        let ring = self.ring_phases(&gates.encode_ring)?;
        let mut branches = Vec::with_capacity(2);
        for b in state.measure_x(0) {
            let mut s = b.state;
            if let Some(phases) = ring {
                self.gate_noise(&mut s)?;
                s.apply_diagonal(phases);
            }
            branches.push(EncodedBranch {
                outcome: b.outcome,
                probability: b.probability,
                state: s,
                frame: self.calibration.frame(b.outcome),
            });
        }
        Ok(EncodedRegister {
            kind: self.kind,
            branches,
        })
    }

    /// Storage under the code's paired channel on all six qubits.
    pub fn store(&self, register: &mut EncodedRegister, t: f64) -> Result<()> {
        let spec = NoiseChannelSpec::new(self.kind.noise_kind(), t)?;
        for b in &mut register.branches {
            b.state.apply_noise_all(&spec)?;
        }
        Ok(())
    }

    /// Applies Pauli errors `(qubit, P)` to every branch.
    pub fn inject(&self, register: &mut EncodedRegister, errors: &[(usize, Pauli)]) -> Result<()> {
        for &(q, p) in errors {
            if q >= N_QUBITS {
                return Err(Error::Argument(format!("qubit {q} out of range")));
            }
            for b in &mut register.branches {
                b.state.apply_pauli(q, p);
            }
        }
        Ok(())
    }

    /// Teleports back to the hub and returns its corrected reduced state,
    /// mixed over encode branches and ring outcomes.
    pub fn readout(&self, register: &EncodedRegister, gates: &GateSet) -> Result<Mat2> {
        let ring = self.ring_phases(&gates.readout_ring)?;
        let mut out = [[Default::default(); 2]; 2];
        for b in &register.branches {
            let mut s = b.state.clone();
            if let Some(phases) = ring {
                self.gate_noise(&mut s)?;
                s.apply_diagonal(phases);
            }
            s.reset_qubit(0, &PureTarget::plus());
            self.gate_noise(&mut s)?;
            s.apply_diagonal(&gates.readout_spokes);
            for o in s.measure_ring_x() {
                let pattern = self.calibration.pattern(o.minus_mask);
                let correction = self.table.correction(&pattern)?.compose(b.frame.pending);
                let hub = conjugate2(&correction.matrix(), &o.hub);
                let w = b.probability * o.probability;
                for i in 0..2 {
                    for j in 0..2 {
                        out[i][j] += hub[i][j] * w;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Encode, inject, store and read out with fixed gates.
    pub fn run_with(&self, psi: &PureTarget, t: f64, errors: &[(usize, Pauli)], gates: &GateSet) -> Result<f64> {
        let mut reg = self.encode(psi, gates)?;
        self.inject(&mut reg, errors)?;
        self.store(&mut reg, t)?;
        Ok(qubit_fidelity(&self.readout(&reg, gates)?, psi))
    }

    /// One protocol run with fresh pulse-noise draws from `rng`.
    pub fn run<R: Rng + ?Sized>(&self, psi: &PureTarget, t: f64, sigma: f64, rng: &mut R) -> Result<f64> {
        let gates = self.pulse_gates(sigma, rng)?;
        self.run_with(psi, t, &[], &gates)
    }

    /// Noiseless pulse gates, errors injected after encoding.
    pub fn run_with_errors(&self, psi: &PureTarget, errors: &[(usize, Pauli)]) -> Result<f64> {
        let noiseless = self.clone().with_gate_time(0.0);
        noiseless.run_with(psi, 0.0, errors, &self.exact_pulse_gates())
    }

    /// Hub-to-hub map for an arbitrary (possibly non-physical) 2×2 input,
    /// obtained by linearity from four physical inputs.
    pub fn hub_channel(&self, input: &Mat2, t: f64, gates: &GateSet) -> Result<Mat2> {
        let basis = [
            PureTarget::down(),
            PureTarget::up(),
            PureTarget::plus(),
            PureTarget::from_bloch_angles(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
        ];
        let mut outs = Vec::with_capacity(4);
        for psi in &basis {
            let mut reg = self.encode(psi, gates)?;
            self.store(&mut reg, t)?;
            outs.push(self.readout(&reg, gates)?);
        }
        // |0⟩⟨1| = ρ₊ + iρ₊ᵢ − (1+i)/2 (ρ₀ + ρ₁), and its adjoint
        let i = num_complex::Complex64::new(0.0, 1.0);
        let one = num_complex::Complex64::new(1.0, 0.0);
        let e01: Mat2 = std::array::from_fn(|a| {
            std::array::from_fn(|b| outs[2][a][b] + i * outs[3][a][b] - (one + i) * 0.5 * (outs[0][a][b] + outs[1][a][b]))
        });
        let e10: Mat2 = std::array::from_fn(|a| {
            std::array::from_fn(|b| outs[2][a][b] - i * outs[3][a][b] - (one - i) * 0.5 * (outs[0][a][b] + outs[1][a][b]))
        });
        Ok(std::array::from_fn(|a| {
            std::array::from_fn(|b| {
                input[0][0] * outs[0][a][b] + input[1][1] * outs[1][a][b] + input[0][1] * e01[a][b] + input[1][0] * e10[a][b]
            })
        }))
    }

    /// Tries every polarity and fixup with ideal gates and keeps the first
    /// combination giving unit round-trip fidelity for both hub outcomes.
    fn calibrate(&self) -> Result<Calibration> {
        let gates = self.ideal_gates();
        let probes = [
            PureTarget::down(),
            PureTarget::up(),
            PureTarget::plus(),
            PureTarget::from_bloch_angles(1.1, 0.7),
        ];
        let probe_registers: Vec<EncodedRegister> = probes
            .iter()
            .map(|psi| self.clone().with_gate_time(0.0).encode(psi, &gates))
            .collect::<Result<_>>()?;
        for bright_is_minus in [true, false] {
            let mut frames = [None; 2];
            for (slot, outcome) in [XOutcome::Plus, XOutcome::Minus].into_iter().enumerate() {
                frames[slot] = Pauli::ALL.into_iter().find(|&frame| {
                    let trial = Self {
                        gate_time: 0.0,
                        calibration: Calibration {
                            frames: [frame; 2],
                            bright_is_minus,
                        },
                        ..self.clone()
                    };
                    probes.iter().zip(&probe_registers).all(|(psi, reg)| {
                        let branch = EncodedRegister {
                            kind: reg.kind,
                            branches: reg
                                .branches
                                .iter()
                                .filter(|b| b.outcome == outcome)
                                .map(|b| EncodedBranch {
                                    probability: 1.0,
                                    frame: PauliFrame::new(frame),
                                    ..b.clone()
                                })
                                .collect(),
                        };
                        branch.branches.is_empty()
                            || trial
                                .readout(&branch, &gates)
                                .is_ok_and(|hub| (qubit_fidelity(&hub, psi) - 1.0).abs() < 1e-9)
                    })
                });
            }
            if let [Some(plus), Some(minus)] = frames {
                return Ok(Calibration {
                    frames: [plus, minus],
                    bright_is_minus,
                });
            }
        }
        Err(Error::Consistency(format!("no fixup reproduces the {} round trip", self.kind)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let rc = build_syndrome_table(CodeKind::FiveRC);
        let qc = build_syndrome_table(CodeKind::FiveQC);
        assert_eq!(rc.corrections.len(), 8);
        assert_eq!(qc.corrections.len(), 8);
        assert_eq!(rc.correction(&"□□■□□".parse().unwrap()).unwrap(), Pauli::I);
        assert_eq!(qc.correction(&"■□□□■".parse().unwrap()).unwrap(), Pauli::Y);
        for mask in 0..32u8 {
            let p = FluorescencePattern::from_mask(mask);
            for k in 0..5 {
                assert_eq!(rc.correction(&p).unwrap(), rc.correction(&p.rotated(k)).unwrap());
                assert_eq!(qc.correction(&p).unwrap(), qc.correction(&p.rotated(k)).unwrap());
            }
        }
    }

    #[test]
    fn complementary_patterns_differ_by_logical_x() {
        for kind in [CodeKind::FiveRC, CodeKind::FiveQC] {
            let t = build_syndrome_table(kind);
            for mask in 0..32u8 {
                let p = FluorescencePattern::from_mask(mask);
                let a = t.correction(&p).unwrap();
                let b = t.correction(&p.complement()).unwrap();
                assert_eq!(a.compose(Pauli::X), b);
            }
        }
    }

    #[test]
    fn pattern_parsing_and_canonical_form() {
        let p: FluorescencePattern = "□■□□□".parse().unwrap();
        assert_eq!(p.canonical().to_string(), "□□□□■");
        assert_eq!("01000".parse::<FluorescencePattern>().unwrap(), p);
        assert!("□■□".parse::<FluorescencePattern>().is_err());
        let classes: std::collections::BTreeSet<_> =
            (0..32u8).map(|m| FluorescencePattern::from_mask(m).canonical()).collect();
        assert_eq!(classes.len(), 8);
    }

    #[test]
    fn frames_compose() {
        let f = PauliFrame::new(Pauli::X);
        assert_eq!(f.compose(PauliFrame::default()), f);
        assert_eq!(
            f.compose(PauliFrame::new(Pauli::Z)).compose(PauliFrame::new(Pauli::Y)),
            f.compose(PauliFrame::new(Pauli::Z).compose(PauliFrame::new(Pauli::Y)))
        );
    }

    #[test]
    fn code_kind_parsing() {
        assert_eq!("5RC".parse::<CodeKind>().unwrap(), CodeKind::FiveRC);
        assert!("7qc".parse::<CodeKind>().is_err());
        assert_eq!(serde_json::to_string(&CodeKind::FiveQC).unwrap(), "\"5qc\"");
    }

    #[test]
    fn calibration_matches_hand_derivation() {
        let p = Protocol::standard(CodeKind::FiveRC).unwrap();
        assert!(p.calibration.bright_is_minus);
        assert_eq!(p.calibration.frames, [Pauli::I, Pauli::Z]);
        let q = Protocol::standard(CodeKind::FiveQC).unwrap();
        assert_eq!(q.calibration, p.calibration);
    }

    #[test]
    fn missing_ring_solution_is_rejected() {
        let p = Protocol::standard(CodeKind::FiveRC).unwrap();
        let r = Protocol::new(CodeKind::FiveQC, p.coupling.clone(), p.spokes.clone(), None, Default::default());
        assert!(r.is_err());
    }

    #[test]
    fn unverified_solution_is_refused_unless_forced() {
        let p = Protocol::standard(CodeKind::FiveRC).unwrap();
        let bad = PulseSolution::new(vec![1.0, 2.0, 3.0, 0.0], -1.0, "bad");
        let r = Protocol::new(CodeKind::FiveRC, p.coupling.clone(), bad.clone(), None, Default::default());
        assert!(matches!(r, Err(Error::Unverified { .. })));
        let forced = ProtocolOptions {
            force: true,
            ..Default::default()
        };
        // forced construction still has to calibrate against ideal gates
        assert!(Protocol::new(CodeKind::FiveRC, p.coupling.clone(), bad, None, forced).is_ok());
    }
}
