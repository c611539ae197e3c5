//! Shared fixtures for the benchmarks.

use ionqec::crystal_modes::{solve_modes, CrystalConfig};
use ionqec::spin_coupling::SpinModeCoupling;

/// Coupling for the default six-ion crystal.
pub fn default_coupling() -> SpinModeCoupling {
    let (_, modes) = solve_modes(&CrystalConfig::default()).expect("default crystal is stable");
    SpinModeCoupling::new(&modes).expect("default grouping")
}
