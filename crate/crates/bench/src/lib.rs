//! Fixtures shared by the benchmarks.

use youden_core::simulation::{generate, Simulated};
use youden_core::{ScenarioId, ScenarioSpec};

/// Three-class data from the first multi-class scenario.
pub fn multiclass(n_per_group: usize) -> Simulated {
    generate(&ScenarioSpec::new(ScenarioId::Mc1, n_per_group), 1).expect("valid scenario")
}

/// Two-group covariate data from the first covariate scenario.
pub fn covariate(n_per_group: usize) -> Simulated {
    generate(&ScenarioSpec::new(ScenarioId::Cov1, n_per_group), 2).expect("valid scenario")
}
