use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bus, Capacitor, Feeder, FeederData, FeederMeta, Line, LoadPoint, Regulator};
use crate::powerflow::{solve, DevicePositions, InjectionProfile, SolverConfig};

pub const SYNTHETIC_LARGE_NAME: &str = "case8500_synthetic";

const PRIMARY_NODES: usize = 320;
const LOADS: usize = 1177;
const FIELD_REGS: usize = 11;
const CAPS: usize = 10;
const METER_GROUP: usize = 10;
const TARGET_MIN_V: f64 = 0.93;

/// Seeded large radial feeder at the scale of the 8500-node test case:
/// 1177 single-customer loads, 12 regulators (one at the substation) and 10
/// capacitors. Capacitors 0 and 1 use a 120/124 V setting and capacitor 3 is
/// held open by local control. Impedances are rescaled so the uncontrolled
/// snapshot minimum voltage lands near 0.93 p.u.
pub fn synthetic_large_feeder(seed: u64) -> Feeder {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buses = vec![Bus { id: 1, base_kv: 7.2, is_substation: true }];
    let mut lines = Vec::new();

    // primary backbone: mostly extends recent nodes, giving long laterals
    for k in 1..PRIMARY_NODES {
        let id = k + 1;
        let parent = if k < 4 || rng.random_bool(0.75) {
            let lo = k.saturating_sub(6).max(1);
            rng.random_range(lo..=k)
        } else {
            rng.random_range(1..=k)
        };
        buses.push(Bus { id, base_kv: 7.2, is_substation: false });
        let r = rng.random_range(0.002..0.006);
        lines.push(Line { from_bus: parent, to_bus: id, r, x: r * rng.random_range(1.5..2.5) });
    }

    let mut loads = Vec::with_capacity(LOADS);
    for k in 0..LOADS {
        let id = PRIMARY_NODES + k + 1;
        let parent = rng.random_range(2..=PRIMARY_NODES);
        buses.push(Bus { id, base_kv: 0.12, is_substation: false });
        lines.push(Line { from_bus: parent, to_bus: id, r: 0.004, x: 0.003 });
        let p = 0.0008 * rng.random_range(0.4..1.6);
        let pf: f64 = 0.95;
        loads.push(LoadPoint {
            bus_ref: id,
            p_snapshot: p,
            q_snapshot: p * pf.acos().tan(),
            meter_group: k / METER_GROUP,
        });
    }

    // downstream load count per primary line, for regulator placement
    let mut downstream = vec![0usize; buses.len() + 1];
    for l in &loads {
        downstream[l.bus_ref] += 1;
    }
    for line in lines.iter().rev() {
        downstream[line.from_bus] += downstream[line.to_bus];
    }
    let mut candidates: Vec<usize> = (0..PRIMARY_NODES - 1)
        .filter(|&k| {
            let d = downstream[lines[k].to_bus];
            (LOADS / 40..=LOADS / 3).contains(&d)
        })
        .collect();
    let mut regulators = vec![Regulator { is_substation_reg: true, ldc_r: 1.0, ldc_x: 2.0, ..Regulator::default() }];
    for _ in 0..FIELD_REGS {
        if candidates.is_empty() {
            break;
        }
        let k = candidates.swap_remove(rng.random_range(0..candidates.len()));
        regulators.push(Regulator { line_ref: Some(k), ..Regulator::default() });
    }

    let mut capacitors = Vec::with_capacity(CAPS);
    for c in 0..CAPS {
        let bus = rng.random_range(PRIMARY_NODES / 4..=PRIMARY_NODES);
        let (v_on, v_off) = if c < 2 { (120.0, 124.0) } else { (118.0, 122.0) };
        capacitors.push(Capacitor {
            bus_ref: bus,
            m_cap: rng.random_range(0.02..0.04),
            v_on,
            v_off,
            controllable: c != 3,
        });
    }

    let mut data = FeederData {
        meta: FeederMeta { name: SYNTHETIC_LARGE_NAME.into(), mva_base: 10.0, kv_base: 12.47 },
        buses,
        lines,
        regulators,
        capacitors,
        loads,
    };
    for _ in 0..3 {
        let feeder = Feeder::new(data.clone()).expect("generator emits a valid feeder");
        let inj = InjectionProfile::snapshot(&feeder);
        let state = solve(&feeder, &inj, &DevicePositions::neutral(&feeder), &SolverConfig::default());
        let v_min = state.v.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = (1.0 - TARGET_MIN_V) / (1.0 - v_min).max(1e-6);
        for line in &mut data.lines {
            line.r *= scale;
            line.x *= scale;
        }
    }
    Feeder::new(data).expect("generator emits a valid feeder")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_large_case_scale() {
        let f = synthetic_large_feeder(8500);
        assert_eq!(f.loads().len(), 1177);
        assert_eq!(f.regulators().len(), 12);
        assert_eq!(f.capacitors().len(), 10);
        assert_eq!((f.capacitors()[0].v_on, f.capacitors()[0].v_off), (120.0, 124.0));
        assert_eq!((f.capacitors()[1].v_on, f.capacitors()[1].v_off), (120.0, 124.0));
        assert!(!f.capacitors()[3].controllable);
    }

    #[test]
    fn reproducible() {
        assert_eq!(synthetic_large_feeder(3), synthetic_large_feeder(3));
    }
}
