//! Independent state-vector and channel oracles for the density-matrix engine.
//! Shared by the engine tests and the acceptance suite.

use num_complex::Complex64 as C;
use rand::Rng;

use ionqec::quantum_engine::{Mat2, NoiseChannelSpec, NoiseKind, Pauli, RegisterState, XOutcome};
use ionqec::rng::substream;

const N: usize = 64;

fn random_unitary<R: Rng>(rng: &mut R) -> Mat2 {
    // Euler angles plus a global phase
    let (a, b, c, d): (f64, f64, f64, f64) = (
        rng.random_range(0.0..6.3),
        rng.random_range(0.0..6.3),
        rng.random_range(0.0..6.3),
        rng.random_range(0.0..3.2),
    );
    let g = C::from_polar(1.0, a);
    let (cs, sn) = ((d / 2.0).cos(), (d / 2.0).sin());
    [
        [g * C::from_polar(cs, -(b + c) / 2.0), -g * C::from_polar(sn, (c - b) / 2.0)],
        [g * C::from_polar(sn, (b - c) / 2.0), g * C::from_polar(cs, (b + c) / 2.0)],
    ]
}

fn random_vector<R: Rng>(rng: &mut R) -> Vec<C> {
    let v: Vec<C> = (0..N).map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn apply1(psi: &mut [C], q: usize, m: &Mat2) {
    let bit = 1 << q;
    for i in (0..N).filter(|i| i & bit == 0) {
        let (a, b) = (psi[i], psi[i | bit]);
        psi[i] = m[0][0] * a + m[0][1] * b;
        psi[i | bit] = m[1][0] * a + m[1][1] * b;
    }
}

fn deviation(rho: &RegisterState, psi: &[C]) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..N {
        for c in 0..N {
            worst = worst.max((rho.entry(r, c) - psi[r] * psi[c].conj()).norm());
        }
    }
    worst
}

/// Runs `runs` random noiseless pipelines (diagonal unitaries, single-qubit
/// unitaries, Paulis, X measurements with a random branch) through both the
/// engine and a state vector. Returns the largest entry deviation.
pub fn pure_pipeline_deviation(seed: u64, runs: u64) -> f64 {
    let mut worst = 0.0f64;
    for run in 0..runs {
        let mut rng = substream(seed, &[run]);
        let mut psi = random_vector(&mut rng);
        let mut rho = RegisterState::from_pure(&psi).unwrap();
        for _ in 0..rng.random_range(3..12) {
            match rng.random_range(0..4) {
                0 => {
                    let d: Vec<C> = (0..N).map(|_| C::from_polar(1.0, rng.random_range(0.0..6.3))).collect();
                    rho.apply_diagonal_unitary(&d);
                    psi.iter_mut().zip(&d).for_each(|(a, b)| *a *= b);
                }
                1 => {
                    let q = rng.random_range(0..6);
                    let u = random_unitary(&mut rng);
                    rho.conjugate(q, &u);
                    apply1(&mut psi, q, &u);
                }
                2 => {
                    let q = rng.random_range(0..6);
                    let p = Pauli::ALL[rng.random_range(0..4)];
                    rho.apply_pauli(q, p);
                    apply1(&mut psi, q, &p.matrix());
                }
                _ => {
                    let q = rng.random_range(0..6);
                    let branches = rho.measure_x(q);
                    let total: f64 = branches.iter().map(|b| b.probability).sum();
                    worst = worst.max((total - 1.0).abs());
                    let pick = rng.random_range(0..branches.len());
                    let b = &branches[pick];
                    let sign = if b.outcome == XOutcome::Plus { 1.0 } else { -1.0 };
                    let h = C::new(0.5, 0.0);
                    let proj = [[h, h * sign], [h * sign, h]];
                    apply1(&mut psi, q, &proj);
                    let p: f64 = psi.iter().map(|x| x.norm_sqr()).sum();
                    worst = worst.max((p - b.probability).abs());
                    psi.iter_mut().for_each(|x| *x /= p.sqrt());
                    rho = b.state.clone();
                }
            }
            worst = worst.max(deviation(&rho, &psi));
        }
    }
    worst
}

/// Random noisy pipelines: largest violation of unit trace, Hermiticity or
/// positivity.
pub fn noisy_pipeline_violation(seed: u64, runs: u64) -> f64 {
    let mut worst = 0.0f64;
    for run in 0..runs {
        let mut rng = substream(seed, &[1, run]);
        let mut rho = RegisterState::from_pure(&random_vector(&mut rng)).unwrap();
        for _ in 0..6 {
            let q = rng.random_range(0..6);
            rho.conjugate(q, &random_unitary(&mut rng));
            let kind = if rng.random_bool(0.5) { NoiseKind::Dephasing } else { NoiseKind::Depolarizing };
            let spec = NoiseChannelSpec::new(kind, rng.random_range(0.0..2.0)).unwrap();
            rho.apply_noise(rng.random_range(0..6), &spec).unwrap();
        }
        worst = worst
            .max((rho.trace() - 1.0).norm())
            .max(rho.hermiticity_error())
            .max((-rho.min_eigenvalue()).max(0.0));
    }
    worst
}

/// Kraus completeness, closed form against Kraus sum, and the semigroup
/// property for both channels. Returns the largest deviation.
pub fn channel_deviation(seed: u64) -> f64 {
    let mut rng = substream(seed, &[2]);
    let mut worst = 0.0f64;
    for kind in [NoiseKind::Dephasing, NoiseKind::Depolarizing] {
        for _ in 0..4 {
            let (t1, t2) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
            let spec = NoiseChannelSpec::new(kind, t1).unwrap();
            let ks = spec.kraus();
            for i in 0..2 {
                for j in 0..2 {
                    let s: C = ks.iter().map(|k| k[0][i].conj() * k[0][j] + k[1][i].conj() * k[1][j]).sum();
                    let id = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((s - id).norm());
                }
            }
            let base = RegisterState::from_pure(&random_vector(&mut rng)).unwrap();
            let q = rng.random_range(0..6);
            let mut a = base.clone();
            a.apply_noise(q, &spec).unwrap();
            let mut b = base.clone();
            b.apply_kraus(q, &ks);
            let mut c = a.clone();
            c.apply_noise(q, &NoiseChannelSpec::new(kind, t2).unwrap()).unwrap();
            let mut d = base.clone();
            d.apply_noise(q, &NoiseChannelSpec::new(kind, t1 + t2).unwrap()).unwrap();
            for r in 0..N {
                for col in 0..N {
                    worst = worst
                        .max((a.entry(r, col) - b.entry(r, col)).norm())
                        .max((c.entry(r, col) - d.entry(r, col)).norm());
                }
            }
        }
    }
    worst
}
