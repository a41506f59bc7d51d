//! Helpers shared by integration tests: an independent phasor power-flow
//! oracle and random small feeders.
#![allow(dead_code)]

use std::ops::{Add, Mul, Sub};

use rand::Rng;
use vvc_core::feeder::{Bus, Capacitor, Feeder, FeederData, FeederMeta, Line, LoadPoint, Regulator};
use vvc_core::powerflow::{DevicePositions, InjectionProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C(pub f64, pub f64);

impl Add for C {
    type Output = C;
    fn add(self, o: C) -> C {
        C(self.0 + o.0, self.1 + o.1)
    }
}
impl Sub for C {
    type Output = C;
    fn sub(self, o: C) -> C {
        C(self.0 - o.0, self.1 - o.1)
    }
}
impl Mul for C {
    type Output = C;
    fn mul(self, o: C) -> C {
        C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
}
impl C {
    fn conj(self) -> C {
        C(self.0, -self.1)
    }
    fn norm2(self) -> f64 {
        self.0 * self.0 + self.1 * self.1
    }
    fn abs(self) -> f64 {
        self.norm2().sqrt()
    }
    fn scale(self, k: f64) -> C {
        C(self.0 * k, self.1 * k)
    }
    fn div(self, o: C) -> C {
        (self * o.conj()).scale(1.0 / o.norm2())
    }
}

/// Bus voltage magnitudes from a damped fixed-point iteration on complex
/// phasors. Line k from i to j with regulator ratio u: the line-end voltage
/// is `V_i - z I` and `V_j = u (V_i - z I)`; the ideal transformer passes
/// power through unchanged.
pub fn oracle_voltages(f: &Feeder, inj: &InjectionProfile, pos: &DevicePositions) -> Vec<f64> {
    let n = f.num_buses();
    let lines = f.lines();
    let mut ratio = vec![1.0; lines.len()];
    let mut v0 = 1.0;
    for (k, reg) in f.regulators().iter().enumerate() {
        let u = 1.0 + pos.taps[k] as f64 * reg.step;
        if reg.is_substation_reg {
            v0 = u;
        } else {
            ratio[reg.line_ref.unwrap()] = u;
        }
    }
    let mut cap = vec![0.0; n];
    for (c, &on) in f.capacitors().iter().zip(&pos.cap_status) {
        if on {
            cap[c.bus_ref - 1] += c.m_cap;
        }
    }
    // children lists and a root-first order
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, l) in lines.iter().enumerate() {
        children[l.from_bus - 1].push(k);
    }
    let mut order = vec![0usize];
    let mut i = 0;
    while i < order.len() {
        for &k in &children[order[i]] {
            order.push(lines[k].to_bus - 1);
        }
        i += 1;
    }
    let parent: Vec<Option<usize>> = {
        let mut p = vec![None; n];
        for (k, l) in lines.iter().enumerate() {
            p[l.to_bus - 1] = Some(k);
        }
        p
    };

    let mut v = vec![C(v0, 0.0); n];
    let mut s = vec![C(0.0, 0.0); lines.len()];
    for _ in 0..100_000 {
        for &j in order.iter().skip(1).rev() {
            let k = parent[j].unwrap();
            let mut recv = C(inj.p[j], inj.q[j] - cap[j] * v[j].norm2());
            for &c in &children[j] {
                recv = recv + s[c];
            }
            let v_end = v[j].scale(1.0 / ratio[k]);
            let i_line = recv.div(v_end).conj();
            let z = C(lines[k].r, lines[k].x);
            s[k] = recv + z.scale(i_line.norm2());
        }
        let mut change: f64 = 0.0;
        for &j in order.iter().skip(1) {
            let k = parent[j].unwrap();
            let i_from = lines[k].from_bus - 1;
            let z = C(lines[k].r, lines[k].x);
            let i_line = s[k].div(v[i_from]).conj();
            let target = (v[i_from] - z * i_line).scale(ratio[k]);
            let next = v[j] + (target - v[j]).scale(0.5);
            change = change.max((next - v[j]).abs());
            v[j] = next;
        }
        if change < 1e-15 {
            break;
        }
    }
    v.iter().map(|x| x.abs()).collect()
}

/// Random radial feeder with `n` buses; optionally a substation regulator,
/// a field regulator and a capacitor.
pub fn random_feeder(rng: &mut impl Rng, n: usize) -> (Feeder, InjectionProfile, DevicePositions) {
    let buses: Vec<Bus> = (1..=n).map(|id| Bus { id, base_kv: 2.4, is_substation: id == 1 }).collect();
    let lines: Vec<Line> = (2..=n)
        .map(|id| Line {
            from_bus: rng.random_range(1..id),
            to_bus: id,
            r: rng.random_range(0.001..0.05),
            x: rng.random_range(0.001..0.05),
        })
        .collect();
    let loads: Vec<LoadPoint> = (2..=n)
        .map(|id| LoadPoint {
            bus_ref: id,
            p_snapshot: rng.random_range(0.0..0.3),
            q_snapshot: rng.random_range(0.0..0.3),
            meter_group: 0,
        })
        .collect();
    let mut regulators = Vec::new();
    let mut taps = Vec::new();
    if rng.random_bool(0.5) {
        regulators.push(Regulator { is_substation_reg: true, ..Regulator::default() });
        taps.push(rng.random_range(-8..=8));
    }
    if n > 2 && rng.random_bool(0.5) {
        regulators.push(Regulator { line_ref: Some(rng.random_range(0..n - 1)), ..Regulator::default() });
        taps.push(rng.random_range(-8..=8));
    }
    let mut capacitors = Vec::new();
    let mut cap_status = Vec::new();
    if rng.random_bool(0.5) {
        capacitors.push(Capacitor {
            bus_ref: rng.random_range(2..=n),
            m_cap: rng.random_range(0.01..0.2),
            v_on: 118.0,
            v_off: 122.0,
            controllable: true,
        });
        cap_status.push(rng.random_bool(0.5));
    }
    let f = Feeder::new(FeederData {
        meta: FeederMeta { name: "random".into(), mva_base: 1.0, kv_base: 4.16 },
        buses,
        lines,
        regulators,
        capacitors,
        loads,
    })
    .expect("random feeder is valid");
    let inj = InjectionProfile::snapshot(&f);
    (f, inj, DevicePositions { taps, cap_status })
}

/// The 2-bus case: r = 0.01, x = 0.02, load (0.1, 0.05) at bus 2 and an
/// optional capacitor of the given rating there.
pub fn two_bus(cap: Option<f64>) -> Feeder {
    Feeder::new(FeederData {
        meta: FeederMeta { name: "two_bus".into(), mva_base: 1.0, kv_base: 4.16 },
        buses: vec![
            Bus { id: 1, base_kv: 2.4, is_substation: true },
            Bus { id: 2, base_kv: 2.4, is_substation: false },
        ],
        lines: vec![Line { from_bus: 1, to_bus: 2, r: 0.01, x: 0.02 }],
        regulators: vec![],
        capacitors: cap
            .map(|m| vec![Capacitor { bus_ref: 2, m_cap: m, v_on: 118.0, v_off: 122.0, controllable: true }])
            .unwrap_or_default(),
        loads: vec![LoadPoint { bus_ref: 2, p_snapshot: 0.1, q_snapshot: 0.05, meter_group: 0 }],
    })
    .unwrap()
}
