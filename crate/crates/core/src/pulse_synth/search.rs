//! Depth-first branch and bound over class integer strings.
//!
//! Depth `d` fixes `n_1..n_d`, which determines the first `d` telescoping
//! terms. Every term is non-negative, so if the minimum of their sum over
//! `(P, R)` is already above the pruning threshold no completion can reach
//! zero cost and the subtree is skipped.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    minimize, rank_hits, search_bounds, ClassProblem, IntegerAssignment, NelderMeadOptions, SearchHit,
    SearchReport, TargetUnitary, ACCEPT_TOLERANCE, MAX_BOUND, N_CLASSES, PRUNE_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::spin_coupling::{PulseSolution, SpinModeCoupling, RATIO_RANGE};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_nodes: Option<u64>,
    pub max_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub bound: i32,
    pub tolerance: f64,
    pub prune_threshold: f64,
    pub budget: Budget,
    /// Only the first `classes` cyclic classes take part (16 = full problem).
    pub classes: usize,
    /// Disable to enumerate the whole tree.
    pub prune: bool,
    /// Stop once this many solutions are found.
    pub max_solutions: Option<usize>,
    /// R values at which non-negative least-squares areas seed each node.
    pub ratio_seeds: usize,
    /// Prefix depth at which subtrees are handed to worker threads.
    pub split_depth: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            bound: 3,
            tolerance: ACCEPT_TOLERANCE,
            prune_threshold: PRUNE_THRESHOLD,
            budget: Budget::default(),
            classes: N_CLASSES,
            prune: true,
            max_solutions: None,
            ratio_seeds: 16,
            split_depth: 3,
            seed: 0,
        }
    }
}

/// Branching factor at each depth.
fn branching(problem: &ClassProblem, bound: i32) -> Vec<u64> {
    (0..problem.n_classes())
        .map(|k| if problem.is_fixed(k) { 1 } else { 2 * bound as u64 + 1 })
        .collect()
}

/// Number of nodes of depth ≥ 1 in the full tree.
pub fn tree_size(coupling: &SpinModeCoupling, target: &TargetUnitary, bound: i32, classes: usize) -> Result<u64> {
    let problem = ClassProblem::truncated(coupling, target, classes)?;
    let b = branching(&problem, bound);
    let (mut total, mut level) = (0u64, 1u64);
    for &bk in &b[1..] {
        level *= bk;
        total += level;
    }
    Ok(total)
}

/// Descendants of a node at `depth` (excluding the node).
fn descendants(b: &[u64], depth: usize) -> u64 {
    let (mut total, mut level) = (0u64, 1u64);
    for &bk in &b[depth + 1..] {
        level *= bk;
        total += level;
    }
    total
}

fn children(bound: i32, fixed: bool) -> Vec<i32> {
    if fixed {
        return vec![0];
    }
    let mut out = vec![0];
    for v in 1..=bound {
        out.push(-v);
        out.push(v);
    }
    out
}

fn prefix_seed(master: u64, prefix: &[i32]) -> u64 {
    prefix.iter().fold(master ^ 0x9e37_79b9_7f4a_7c15, |h, &v| {
        (h ^ (v as u32 as u64)).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(13)
    })
}

struct Shared<'a> {
    problem: &'a ClassProblem,
    config: &'a SearchConfig,
    branching: Vec<u64>,
    label: &'a str,
    start: Instant,
    explored: AtomicU64,
    pruned: AtomicU64,
    exhausted: AtomicBool,
    stop: AtomicBool,
    hits: Mutex<Vec<SearchHit>>,
}

impl Shared<'_> {
    fn over_budget(&self) -> bool {
        let b = &self.config.budget;
        let nodes = b.max_nodes.is_some_and(|m| self.explored.load(Ordering::Relaxed) >= m);
        let secs = b.max_secs.is_some_and(|s| self.start.elapsed().as_secs_f64() >= s);
        if nodes || secs {
            self.exhausted.store(true, Ordering::Relaxed);
        }
        nodes || secs
    }

    /// Minimum of the partial cost for `prefix` (length depth + 1).
    fn minimize_node(&self, prefix: &[i32], warm: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
        let depth = prefix.len() - 1;
        let p = self.problem;
        let f = |x: &[f64]| p.partial_cost(&x[..4], x[4], prefix, depth);
        let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();
        if let Some(w) = warm {
            seeds.push((f(w), w.to_vec()));
        }
        let k = self.config.ratio_seeds.max(1);
        for i in 0..k {
            let r = RATIO_RANGE.0 + (RATIO_RANGE.1 - RATIO_RANGE.0) * (i as f64 + 0.5) / k as f64;
            let areas = p.areas_at_ratio(r, prefix, depth);
            let x: Vec<f64> = areas.iter().copied().chain([r]).collect();
            seeds.push((f(&x), x));
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0));

        let opts = NelderMeadOptions {
            seed: prefix_seed(self.config.seed, prefix),
            initial_step: 0.01,
            ..Default::default()
        };
        let target = self.config.tolerance * 1e-2;
        let mut best: Option<(Vec<f64>, f64)> = None;
        for (v, x) in seeds.into_iter().take(3) {
            if v <= target {
                return Ok((x, v));
            }
            let m = minimize(f, &x, &search_bounds(), &opts)?;
            if best.as_ref().is_none_or(|b| m.value < b.1) {
                best = Some((m.x, m.value));
            }
            if best.as_ref().is_some_and(|b| b.1 <= target) {
                break;
            }
        }
        Ok(best.expect("at least one seed"))
    }

    fn dfs(&self, prefix: &mut Vec<i32>, warm: Option<&[f64]>) -> Result<()> {
        let depth = prefix.len() - 1;
        let last = self.problem.n_classes() - 1;
        if self.stop.load(Ordering::Relaxed) || self.over_budget() {
            return Ok(());
        }
        self.explored.fetch_add(1, Ordering::Relaxed);
        let need_min = depth == last || self.config.prune;
        let node = if need_min {
            Some(self.minimize_node(prefix, warm)?)
        } else {
            None
        };
        if depth == last {
            let (x, c) = node.expect("leaf minimized");
            if c < self.config.tolerance {
                let x = self.problem.slide_to_min_area(prefix, &x, self.config.tolerance * 1e-3);
                let c = self.problem.cost(&x[..4], x[4], prefix);
                let hit = SearchHit {
                    solution: PulseSolution::new(x[..4].to_vec(), x[4], self.label),
                    residual: c,
                    assignment: IntegerAssignment {
                        n: prefix.clone(),
                        bound: self.config.bound,
                    },
                };
                let mut hits = self.hits.lock().expect("solution sink poisoned");
                hits.push(hit);
                if self.config.max_solutions.is_some_and(|m| hits.len() >= m) {
                    self.stop.store(true, Ordering::Relaxed);
                }
            }
            return Ok(());
        }
        if let Some((_, c)) = &node {
            if *c > self.config.prune_threshold {
                self.pruned.fetch_add(descendants(&self.branching, depth), Ordering::Relaxed);
                return Ok(());
            }
        }
        let warm_next = node.as_ref().map(|(x, _)| x.as_slice()).or(warm).map(<[f64]>::to_vec);
        for v in children(self.config.bound, self.problem.is_fixed(depth + 1)) {
            prefix.push(v);
            let r = self.dfs(prefix, warm_next.as_deref());
            prefix.pop();
            r?;
        }
        Ok(())
    }

    /// Sequential expansion down to the split depth; returns the surviving
    /// prefixes with their warm starts.
    fn frontier(&self, split: usize) -> Result<Vec<(Vec<i32>, Option<Vec<f64>>)>> {
        let mut out = Vec::new();
        let mut stack = vec![(vec![0i32], None::<Vec<f64>>)];
        while let Some((prefix, warm)) = stack.pop() {
            let depth = prefix.len() - 1;
            if depth == split {
                out.push((prefix, warm));
                continue;
            }
            let mut warm_next = warm.clone();
            if depth > 0 {
                if self.over_budget() {
                    continue;
                }
                self.explored.fetch_add(1, Ordering::Relaxed);
                if self.config.prune {
                    let (x, c) = self.minimize_node(&prefix, warm.as_deref())?;
                    if c > self.config.prune_threshold {
                        self.pruned.fetch_add(descendants(&self.branching, depth), Ordering::Relaxed);
                        continue;
                    }
                    warm_next = Some(x);
                }
            }
            let kids = children(self.config.bound, self.problem.is_fixed(depth + 1));
            for v in kids.into_iter().rev() {
                let mut p = prefix.clone();
                p.push(v);
                stack.push((p, warm_next.clone()));
            }
        }
        Ok(out)
    }
}

/// Exhaustive pruned search for integer strings and pulse parameters that
/// realize `target`.
///
/// Parallel over subtrees below `config.split_depth`; the solution set does
/// not depend on the number of workers unless the budget or
/// `max_solutions` cuts the search short.
pub fn integer_search(target: &TargetUnitary, coupling: &SpinModeCoupling, config: &SearchConfig) -> Result<SearchReport> {
    if !(0..=MAX_BOUND).contains(&config.bound) {
        return Err(Error::Argument(format!("bound {} outside 0..={MAX_BOUND}", config.bound)));
    }
    if !(config.tolerance > 0.0 && config.prune_threshold >= config.tolerance) {
        return Err(Error::Argument("need 0 < tolerance ≤ prune threshold".into()));
    }
    let problem = ClassProblem::truncated(coupling, target, config.classes)?;
    let last = problem.n_classes() - 1;
    let shared = Shared {
        branching: branching(&problem, config.bound),
        problem: &problem,
        config,
        label: &target.name,
        start: Instant::now(),
        explored: AtomicU64::new(0),
        pruned: AtomicU64::new(0),
        exhausted: AtomicBool::new(false),
        stop: AtomicBool::new(false),
        hits: Mutex::new(Vec::new()),
    };
    let split = config.split_depth.clamp(1, last);
    let frontier = shared.frontier(split)?;
    frontier.into_par_iter().try_for_each(|(mut prefix, warm)| shared.dfs(&mut prefix, warm.as_deref()))?;

    let mut solutions = shared.hits.into_inner().expect("solution sink poisoned");
    rank_hits(&mut solutions);
    Ok(SearchReport {
        solutions,
        nodes_explored: shared.explored.into_inner(),
        nodes_pruned: shared.pruned.into_inner(),
        wall_time: shared.start.elapsed().as_secs_f64(),
        exhausted: shared.exhausted.into_inner(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal_modes::{solve_modes, CrystalConfig};

    fn coupling() -> SpinModeCoupling {
        SpinModeCoupling::new(&solve_modes(&CrystalConfig::default()).unwrap().1).unwrap()
    }

    #[test]
    fn tree_sizes() {
        let q = coupling();
        assert_eq!(tree_size(&q, &TargetUnitary::spokes(), 1, 4).unwrap(), 3 + 9 + 27);
        // class 8 is pinned for the spectator target
        let full = tree_size(&q, &TargetUnitary::ring(), 1, 10).unwrap();
        let expect: u64 = [3u64, 9, 27, 81, 243, 729, 2187, 2187, 6561].iter().sum();
        assert_eq!(full, expect);
    }

    #[test]
    fn zero_target_finds_trivial_solution_first() {
        let q = coupling();
        let t = TargetUnitary::custom("zero", vec![0.0; 64]).unwrap();
        let cfg = SearchConfig {
            bound: 1,
            classes: 5,
            ..Default::default()
        };
        let r = integer_search(&t, &q, &cfg).unwrap();
        assert!(r.solutions[0].assignment.n.iter().all(|&v| v == 0));
        assert_eq!(r.solutions[0].solution.total_area(), 0.0);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let q = coupling();
        let cfg = SearchConfig {
            budget: Budget {
                max_nodes: Some(5),
                max_secs: None,
            },
            ..Default::default()
        };
        let r = integer_search(&TargetUnitary::spokes(), &q, &cfg).unwrap();
        assert!(r.exhausted);
        assert!(r.solutions.is_empty());
    }
}
