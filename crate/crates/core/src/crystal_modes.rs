//! Planar Coulomb crystal equilibrium and transverse normal modes.
//!
//! Units are dimensionless throughout: the axial trap frequency, the ion mass
//! and the Coulomb constant are all 1. The in-plane confinement is `beta`
//! times the axial one, so the planar potential is
//! `U = Σ ½β|r_i|² + Σ_{i<j} 1/d_ij`.
//!
//! The transverse (out-of-plane) motion about a planar equilibrium is governed
//! by the axial stiffness matrix `K_ij = 1/d_ij³` (i ≠ j),
//! `K_ii = 1 − Σ_{j≠i} 1/d_ij³`, whose eigenvectors are the mode vectors and
//! whose eigenvalues are the squared mode frequencies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradient max-norm at which an equilibrium is accepted.
pub const GRADIENT_TOLERANCE: f64 = 1e-9;
/// Frequencies closer than this are grouped as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;
/// Maximum number of random restarts of the equilibrium search.
pub const MAX_RESTARTS: usize = 32;

const MIN_PAIR_DISTANCE: f64 = 1e-9;
const NEWTON_ITERATIONS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalConfig {
    pub n_ions: usize,
    /// Ratio of in-plane to axial confinement strength.
    pub beta: f64,
    /// Seed for the perturbation of the initial layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_layout: Option<Vec<[f64; 2]>>,
}

impl Default for CrystalConfig {
    /// Six ions with `beta = 0.1`. The planar layout does not depend on
    /// `beta`, but the out-of-plane stability of the 1+5 crystal requires
    /// `beta < 0.396`.
    fn default() -> Self {
        Self {
            n_ions: 6,
            beta: 0.1,
            seed: None,
            seed_layout: None,
        }
    }
}

impl CrystalConfig {
    pub fn new(n_ions: usize, beta: f64) -> Self {
        Self {
            n_ions,
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::Config("n_ions must be at least 1".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if let Some(layout) = &self.seed_layout {
            if layout.len() != self.n_ions {
                return Err(Error::Config(format!(
                    "seed layout has {} positions for {} ions",
                    layout.len(),
                    self.n_ions
                )));
            }
        }
        Ok(())
    }
}

/// Planar equilibrium positions of the crystal.
///
/// Ions are ordered by shell (distance from the trap centre) and clockwise
/// within a shell, with the first ion of the outermost non-central shell
/// rotated onto the +x axis. For six ions this puts the hub at index 0 and
/// the ring at indices 1–5 in clockwise order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub positions: Vec<[f64; 2]>,
    pub pair_distances: Vec<Vec<f64>>,
}

impl Geometry {
    pub fn from_positions(positions: Vec<[f64; 2]>) -> Self {
        let n = positions.len();
        let mut pair_distances = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = distance(positions[i], positions[j]);
                pair_distances[i][j] = d;
                pair_distances[j][i] = d;
            }
        }
        Self {
            positions,
            pair_distances,
        }
    }

    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.positions.len() as f64;
        let (sx, sy) = self
            .positions
            .iter()
            .fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [sx / n, sy / n]
    }
}

/// Transverse normal modes, highest frequency first.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    pub frequencies: Vec<f64>,
    /// Row `m` is the normalized mode vector ⟨a_m|; entry `(m, i)` is `A_mi`.
    pub eigenvectors: DMatrix<f64>,
    pub degenerate_groups: Vec<Vec<usize>>,
}

impl ModeBasis {
    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    /// Projector onto the eigenspace spanned by a degenerate group.
    pub fn group_projector(&self, group: usize) -> DMatrix<f64> {
        let n = self.eigenvectors.ncols();
        let mut p = DMatrix::zeros(n, n);
        for &m in &self.degenerate_groups[group] {
            let row = self.eigenvectors.row(m).transpose();
            p += &row * row.transpose();
        }
        p
    }

    /// Representative frequency of each degenerate group.
    pub fn group_frequencies(&self) -> Vec<f64> {
        self.degenerate_groups
            .iter()
            .map(|g| self.frequencies[g[0]])
            .collect()
    }

    pub fn to_report(&self) -> ModeReport {
        ModeReport {
            frequencies: self.frequencies.clone(),
            eigenvectors: self
                .eigenvectors
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            degenerate_groups: self.degenerate_groups.clone(),
        }
    }
}

/// JSON form of a [`ModeBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub frequencies: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub degenerate_groups: Vec<Vec<usize>>,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Total planar potential energy of a flattened `[x0, y0, x1, y1, ...]` layout.
pub fn planar_energy(beta: f64, coords: &[f64]) -> f64 {
    let n = coords.len() / 2;
    let mut u = 0.0;
    for i in 0..n {
        let (xi, yi) = (coords[2 * i], coords[2 * i + 1]);
        u += 0.5 * beta * (xi * xi + yi * yi);
        for j in (i + 1)..n {
            let dx = xi - coords[2 * j];
            let dy = yi - coords[2 * j + 1];
            u += 1.0 / (dx * dx + dy * dy).sqrt();
        }
    }
    u
}

pub fn planar_gradient(beta: f64, coords: &[f64]) -> Vec<f64> {
    let n = coords.len() / 2;
    let mut g = vec![0.0; coords.len()];
    for i in 0..n {
        g[2 * i] += beta * coords[2 * i];
        g[2 * i + 1] += beta * coords[2 * i + 1];
        for j in (i + 1)..n {
            let dx = coords[2 * i] - coords[2 * j];
            let dy = coords[2 * i + 1] - coords[2 * j + 1];
            let d3 = (dx * dx + dy * dy).powf(1.5);
            g[2 * i] -= dx / d3;
            g[2 * i + 1] -= dy / d3;
            g[2 * j] += dx / d3;
            g[2 * j + 1] += dy / d3;
        }
    }
    g
}

pub fn planar_hessian(beta: f64, coords: &[f64]) -> DMatrix<f64> {
    let n = coords.len() / 2;
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        h[(2 * i, 2 * i)] += beta;
        h[(2 * i + 1, 2 * i + 1)] += beta;
        for j in (i + 1)..n {
            let delta = [coords[2 * i] - coords[2 * j], coords[2 * i + 1] - coords[2 * j + 1]];
            let d2 = delta[0] * delta[0] + delta[1] * delta[1];
            let d = d2.sqrt();
            let d3 = d2 * d;
            let d5 = d3 * d2;
            for a in 0..2 {
                for b in 0..2 {
                    let identity = if a == b { 1.0 } else { 0.0 };
                    // second derivative of 1/d with respect to r_i (a) and r_i (b)
                    let block = 3.0 * delta[a] * delta[b] / d5 - identity / d3;
                    h[(2 * i + a, 2 * i + b)] += block;
                    h[(2 * j + a, 2 * j + b)] += block;
                    h[(2 * i + a, 2 * j + b)] -= block;
                    h[(2 * j + a, 2 * i + b)] -= block;
                }
            }
        }
    }
    h
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Points of a triangular lattice ordered by distance from the origin.
fn hexagonal_seed(n: usize, spacing: f64) -> Vec<[f64; 2]> {
    let reach = (n as f64).sqrt().ceil() as i64 + 2;
    let mut pts = Vec::new();
    for a in -reach..=reach {
        for b in -reach..=reach {
            let x = spacing * (a as f64 + 0.5 * b as f64);
            let y = spacing * (b as f64 * 3f64.sqrt() / 2.0);
            pts.push([x, y]);
        }
    }
    pts.sort_by(|p, q| {
        let rp = p[0].hypot(p[1]);
        let rq = q[0].hypot(q[1]);
        rp.partial_cmp(&rq)
            .unwrap()
            .then(p[1].atan2(p[0]).partial_cmp(&q[1].atan2(q[0])).unwrap())
    });
    pts.truncate(n);
    pts
}

/// Saddle-free Newton descent. Returns the final coordinates and gradient norm.
fn descend(beta: f64, mut x: Vec<f64>) -> (Vec<f64>, f64) {
    let mut energy = planar_energy(beta, &x);
    for _ in 0..NEWTON_ITERATIONS {
        let g = planar_gradient(beta, &x);
        let gnorm = max_norm(&g);
        if gnorm < GRADIENT_TOLERANCE {
            return (x, gnorm);
        }
        let h = planar_hessian(beta, &x);
        let eig = SymmetricEigen::new(h);
        let gv = DVector::from_column_slice(&g);
        let mut step = DVector::zeros(x.len());
        for k in 0..eig.eigenvalues.len() {
            let u = eig.eigenvectors.column(k);
            let lambda = eig.eigenvalues[k].abs().max(1e-6);
            step -= u * (u.dot(&gv) / lambda);
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            let e = planar_energy(beta, &trial);
            if e.is_finite() && e <= energy + 1e-4 * alpha * gv.dot(&step) {
                x = trial;
                energy = e;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Energy is flat to machine precision along the step; take it and
            // let the gradient test decide.
            for (a, s) in x.iter_mut().zip(step.iter()) {
                *a += s;
            }
            energy = planar_energy(beta, &x);
        }
    }
    let g = max_norm(&planar_gradient(beta, &x));
    (x, g)
}

fn canonical_order(positions: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let scale = positions
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let shell_tol = 1e-6 * scale;

    // Rotate the first ion of the innermost off-centre shell onto +x.
    let off_centre: Vec<&[f64; 2]> = positions
        .iter()
        .filter(|p| p[0].hypot(p[1]) > shell_tol)
        .collect();
    let rotation = off_centre
        .iter()
        .map(|p| (p[0].hypot(p[1]), p[1].atan2(p[0])))
        .fold(None::<(f64, f64)>, |best, (r, a)| match best {
            Some((br, _)) if br <= r + shell_tol => best,
            _ => Some((r, a)),
        })
        .map(|(_, a)| -a)
        .unwrap_or(0.0);
    let (s, c) = rotation.sin_cos();
    let mut rotated: Vec<[f64; 2]> = positions
        .iter()
        .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
        .collect();

    let clockwise_key = |p: &[f64; 2]| {
        if p[0].hypot(p[1]) <= shell_tol {
            return 0.0;
        }
        let a = p[1].atan2(p[0]);
        let k = (-a).rem_euclid(2.0 * std::f64::consts::PI);
        // ions sitting on the +x axis may land just below 2π
        if k > 2.0 * std::f64::consts::PI - 1e-9 {
            0.0
        } else {
            k
        }
    };
    rotated.sort_by(|p, q| {
        let rp = p[0].hypot(p[1]);
        let rq = q[0].hypot(q[1]);
        if (rp - rq).abs() > shell_tol {
            rp.partial_cmp(&rq).unwrap()
        } else {
            clockwise_key(p).partial_cmp(&clockwise_key(q)).unwrap()
        }
    });
    rotated
}

/// Minimum of the planar potential, found by Newton descent from a perturbed
/// hexagonal seed with random restarts.
pub fn equilibrium_positions(config: &CrystalConfig) -> Result<Geometry> {
    config.validate()?;
    let n = config.n_ions;
    if n == 1 {
        return Ok(Geometry::from_positions(vec![[0.0, 0.0]]));
    }
    let beta = config.beta;
    let spacing = (1.0 / beta).cbrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.unwrap_or(0x5eed_c0ff_ee15_0001));
    let mut best_gradient = f64::INFINITY;

    for restart in 0..MAX_RESTARTS {
        let base: Vec<[f64; 2]> = match (&config.seed_layout, restart) {
            (Some(layout), 0) => layout.clone(),
            _ => hexagonal_seed(n, spacing),
        };
        let jitter = if restart == 0 && config.seed_layout.is_some() {
            0.0
        } else {
            0.05 * spacing * (1.0 + restart as f64 / 4.0)
        };
        let x0: Vec<f64> = base
            .iter()
            .flat_map(|p| *p)
            .map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                v + jitter * z
            })
            .collect();
        let (x, gnorm) = descend(beta, x0);
        best_gradient = best_gradient.min(gnorm);
        if gnorm >= GRADIENT_TOLERANCE {
            continue;
        }
        let min_curvature = SymmetricEigen::new(planar_hessian(beta, &x))
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_curvature < -1e-8 {
            continue;
        }
        let positions: Vec<[f64; 2]> = x.chunks(2).map(|c| [c[0], c[1]]).collect();
        // The canonical rotation moves the layout by O(1e-16); re-polish so
        // the gradient bound holds for the returned coordinates.
        let ordered: Vec<f64> = canonical_order(positions).into_iter().flatten().collect();
        let (polished, g2) = descend(beta, ordered);
        if g2 >= GRADIENT_TOLERANCE {
            continue;
        }
        let positions = polished.chunks(2).map(|c| [c[0], c[1]]).collect();
        return Ok(Geometry::from_positions(positions));
    }
    Err(Error::OptimizationFailure {
        restarts: MAX_RESTARTS,
        gradient: best_gradient,
    })
}

/// Axial stiffness matrix in dimensionless units; every row sums to 1.
pub fn stiffness_matrix(geometry: &Geometry) -> Result<DMatrix<f64>> {
    let n = geometry.n_ions();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = geometry.pair_distances[i][j];
            if !(d >= MIN_PAIR_DISTANCE) {
                return Err(Error::Geometry(format!(
                    "ions {i} and {j} coincide (distance {d:e})"
                )));
            }
            let kij = d.powi(-3);
            k[(i, j)] = kij;
            off += kij;
        }
        k[(i, i)] = 1.0 - off;
    }
    Ok(k)
}

/// Full eigendecomposition of the stiffness matrix, sorted by decreasing
/// frequency, with degenerate frequencies grouped.
///
/// Inside a degenerate group the returned vectors are an arbitrary orthonormal
/// basis of the eigenspace.
pub fn transverse_modes(stiffness: &DMatrix<f64>) -> Result<ModeBasis> {
    let n = stiffness.nrows();
    if n == 0 || stiffness.ncols() != n {
        return Err(Error::Structure("stiffness matrix must be square and non-empty".into()));
    }
    let eig = SymmetricEigen::new(stiffness.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut frequencies = Vec::with_capacity(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (row, &k) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        if !(lambda > 0.0) {
            return Err(Error::UnstableCrystal(lambda));
        }
        frequencies.push(lambda.sqrt());
        let mut v = eig.eigenvectors.column(k).into_owned();
        // fix the sign so the largest component is positive
        let (imax, _) = v
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bi, bv), (i, x)| if x.abs() > bv + 1e-12 { (i, x.abs()) } else { (bi, bv) });
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_row(row, &v.transpose());
    }

    let mut degenerate_groups: Vec<Vec<usize>> = Vec::new();
    for m in 0..n {
        match degenerate_groups.last_mut() {
            Some(g) if (frequencies[g[0]] - frequencies[m]).abs() < DEGENERACY_TOLERANCE => g.push(m),
            _ => degenerate_groups.push(vec![m]),
        }
    }

    Ok(ModeBasis {
        frequencies,
        eigenvectors,
        degenerate_groups,
    })
}

/// Convenience: equilibrium, stiffness and modes for a configuration.
pub fn solve_modes(config: &CrystalConfig) -> Result<(Geometry, ModeBasis)> {
    let geometry = equilibrium_positions(config)?;
    let k = stiffness_matrix(&geometry)?;
    let modes = transverse_modes(&k)?;
    Ok((geometry, modes))
}
