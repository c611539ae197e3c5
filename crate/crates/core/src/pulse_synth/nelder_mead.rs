//! Bounded Nelder-Mead with restarts.
//!
//! Bounds are enforced by projecting every trial point onto the box before
//! evaluation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::new(vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn width(&self, i: usize) -> f64 {
        let w = self.upper[i] - self.lower[i];
        if w.is_finite() {
            w
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop when `max f − min f` over the simplex falls below this.
    pub spread_tolerance: f64,
    /// Evaluation budget per restart.
    pub max_evaluations: usize,
    pub restarts: usize,
    /// Initial simplex edge as a fraction of each bound width.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            spread_tolerance: 1e-12,
            max_evaluations: 20_000,
            restarts: 8,
            initial_step: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub restarts_used: usize,
}

struct Evaluator<'a, F> {
    f: &'a mut F,
    bounds: &'a Bounds,
    count: usize,
}

impl<F: FnMut(&[f64]) -> f64> Evaluator<'_, F> {
    fn eval(&mut self, x: &mut [f64]) -> Result<f64> {
        self.bounds.project(x);
        self.count += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(x.to_vec()))
        }
    }
}

fn run_simplex<F: FnMut(&[f64]) -> f64>(
    ev: &mut Evaluator<'_, F>,
    start: &[f64],
    step: &[f64],
    opts: &NelderMeadOptions,
) -> Result<(Vec<f64>, f64)> {
    let n = start.len();
    let budget = ev.count + opts.max_evaluations;
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut x0 = start.to_vec();
    values.push(ev.eval(&mut x0)?);
    simplex.push(x0);
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += step[i];
        ev.bounds.project(&mut x);
        if x[i] == start[i] {
            x[i] -= step[i];
        }
        values.push(ev.eval(&mut x)?);
        simplex.push(x);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    loop {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);
        if values[worst] - values[best] < opts.spread_tolerance || ev.count >= budget {
            return Ok((simplex[best].clone(), values[best]));
        }

        let mut centroid = vec![0.0; n];
        for &k in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[k]) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let mut xr = along(opts.reflection);
        let fr = ev.eval(&mut xr)?;
        if fr < values[best] {
            let mut xe = along(opts.reflection * opts.expansion);
            let fe = ev.eval(&mut xe)?;
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (mut xc, fc) = if fr < values[worst] {
            let mut xc = along(opts.reflection * opts.contraction);
            let fc = ev.eval(&mut xc)?;
            (xc, fc)
        } else {
            let mut xc = along(-opts.contraction);
            let fc = ev.eval(&mut xc)?;
            (xc, fc)
        };
        if fc < values[worst].min(fr) {
            std::mem::swap(&mut simplex[worst], &mut xc);
            values[worst] = fc;
            continue;
        }
        let anchor = simplex[best].clone();
        for k in 0..=n {
            if k == best {
                continue;
            }
            let mut x: Vec<f64> = anchor
                .iter()
                .zip(&simplex[k])
                .map(|(a, v)| a + opts.shrink * (v - a))
                .collect();
            values[k] = ev.eval(&mut x)?;
            simplex[k] = x;
        }
    }
}

/// Minimizes `f` inside `bounds` from `x0`.
///
/// After the first simplex collapses, up to `opts.restarts` fresh simplices
/// are built around the incumbent with jittered edges; restarting stops as
/// soon as one fails to improve the incumbent.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &NelderMeadOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    if x0.len() != bounds.dim() || x0.is_empty() {
        return Err(Error::Argument(format!(
            "start point has {} coordinates, bounds have {}",
            x0.len(),
            bounds.dim()
        )));
    }
    let mut rng = substream(opts.seed, &[0x4e4d]);
    let mut ev = Evaluator {
        f: &mut f,
        bounds,
        count: 0,
    };
    let base_step: Vec<f64> = (0..x0.len())
        .map(|i| opts.initial_step * bounds.width(i))
        .collect();
    let mut start = x0.to_vec();
    bounds.project(&mut start);
    let (mut best_x, mut best_f) = run_simplex(&mut ev, &start, &base_step, opts)?;
    let mut restarts_used = 0;
    for _ in 0..opts.restarts {
        if best_f == 0.0 {
            break;
        }
        restarts_used += 1;
        let step: Vec<f64> = base_step
            .iter()
            .map(|s| s * rng.random_range(0.2..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let (x, fx) = run_simplex(&mut ev, &best_x, &step, opts)?;
        if fx < best_f - opts.spread_tolerance.max(1e-15 * best_f.abs()) {
            best_x = x;
            best_f = fx;
        } else {
            if fx < best_f {
                best_x = x;
                best_f = fx;
            }
            break;
        }
    }
    Ok(Minimum {
        x: best_x,
        value: best_f,
        evaluations: ev.count,
        restarts_used,
    })
}
