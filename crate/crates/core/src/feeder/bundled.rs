use std::path::Path;

use super::{load_feeder, parse_feeder, synthetic_large_feeder, Feeder, SYNTHETIC_LARGE_NAME};
use crate::Result;

/// Location of the bundled feeder files relative to the workspace root.
pub const BUNDLED_DIR: &str = "data/feeders";

const CASE13: &str = include_str!("../../../../data/feeders/case13_balanced.toml");
const CASE123: &str = include_str!("../../../../data/feeders/case123_balanced.toml");

pub fn bundled_names() -> &'static [&'static str] {
    &["case13_balanced", "case123_balanced", SYNTHETIC_LARGE_NAME]
}

/// Resolves a bundled feeder name, or otherwise treats `name` as a file path.
pub fn resolve_feeder(name: &str) -> Result<Feeder> {
    match name {
        "case13_balanced" => parse_feeder(CASE13, "case13_balanced"),
        "case123_balanced" => parse_feeder(CASE123, "case123_balanced"),
        SYNTHETIC_LARGE_NAME => Ok(synthetic_large_feeder(8500)),
        path => load_feeder(Path::new(path)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case13_device_counts() {
        let f = resolve_feeder("case13_balanced").unwrap();
        assert_eq!(f.num_buses(), 13);
        assert_eq!(f.loads().len(), 9);
        assert_eq!(f.regulators().len(), 1);
        assert_eq!(f.capacitors().len(), 2);
        assert!(f.regulators()[0].is_substation_reg);
        for c in f.capacitors() {
            assert_eq!((c.v_on, c.v_off), (118.0, 122.0));
        }
    }

    #[test]
    fn case123_device_counts() {
        let f = resolve_feeder("case123_balanced").unwrap();
        assert_eq!(f.num_buses(), 123);
        assert_eq!(f.loads().len(), 85);
        assert_eq!(f.regulators().len(), 5);
        assert_eq!(f.capacitors().len(), 4);
        let r4 = &f.regulators()[3];
        assert_eq!((r4.ldc_r, r4.ldc_x), (0.6, 1.3));
        for c in f.capacitors() {
            assert_eq!((c.v_on, c.v_off), (122.0, 126.0));
        }
    }
}
