//! Fixtures shared by the benchmarks.

use std::collections::BTreeMap;

use nhext_core::extension::sample_states;
use nhext_core::systems::builtin;
use nhext_core::{QuasiState, System};

pub fn system(name: &str) -> System {
    System::new(builtin(name, &BTreeMap::new()).expect("builtin")).expect("valid builtin")
}

/// Sampled on-constraint states with a fixed seed.
pub fn states(sys: &System, count: usize) -> Vec<QuasiState> {
    sample_states(sys, count, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_load() {
        for name in ["disk", "carriage", "particle"] {
            let s = system(name);
            assert_eq!(states(&s, 3).len(), 3);
        }
    }
}
