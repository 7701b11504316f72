//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use num_complex::Complex32;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use vranslot::deployment::{CoreTopology, InstancePlan, RoleMap, Violation};
use vranslot::highphy::{CellConfig, ResourceGrid, WeightMatrix};
use vranslot::nr::{mcs_entry, Allocation, McsTable};

/// TBS procedure in exact integer arithmetic (code rates scaled by 2048 so
/// the half-step table entries stay integral).
pub fn tbs_oracle(prbs: u64, symbols: u64, layers: u64, qm: u64, rate_x2048: u64, overhead: u64) -> u64 {
    let n_re = (12 * symbols - overhead).min(156) * prbs;
    let num = n_re * rate_x2048 * qm * layers; // N_info * 2048
    let den = 2048u64;
    let log2_floor = |n: u64, d: u64| -> i64 {
        // floor(log2(n/d)) for n/d >= 1
        let mut k = 0i64;
        while (d << (k + 1)) <= n {
            k += 1;
        }
        k
    };
    if num <= 3824 * den {
        let n = (log2_floor(num, den) - 6).max(3) as u32;
        let step = 1u64 << n;
        let q = (step * (num / (den * step))).max(24);
        return SMALL[SMALL.iter().position(|&t| t >= q).unwrap()];
    }
    let minus = num - 24 * den;
    let n = log2_floor(minus, den) as u32 - 5;
    let step = 1u64 << n;
    // round(minus / (den * step)) with ties away from zero
    let q = (step * ((2 * minus + den * step) / (2 * den * step))).max(3840);
    let with_crc = q + 24;
    if rate_x2048 * 4 <= 2048 {
        let c = with_crc.div_ceil(3816);
        8 * c * with_crc.div_ceil(8 * c) - 24
    } else if q > 8424 {
        let c = with_crc.div_ceil(8424);
        8 * c * with_crc.div_ceil(8 * c) - 24
    } else {
        8 * with_crc.div_ceil(8) - 24
    }
}

const SMALL: [u64; 93] = [
    24, 32, 40, 48, 56, 64, 72, 80, 88, 96, 104, 112, 120, 128, 136, 144, 152, 160, 168, 176, 184, 192, 208, 224,
    240, 256, 272, 288, 304, 320, 336, 352, 368, 384, 408, 432, 456, 480, 504, 528, 552, 576, 608, 640, 672, 704,
    736, 768, 808, 848, 888, 928, 984, 1032, 1064, 1128, 1160, 1192, 1224, 1256, 1288, 1320, 1352, 1416, 1480,
    1544, 1608, 1672, 1736, 1800, 1864, 1928, 2024, 2088, 2152, 2216, 2280, 2408, 2472, 2536, 2600, 2664, 2728,
    2792, 2856, 2976, 3104, 3240, 3368, 3496, 3624, 3752, 3824,
];

pub fn oracle_for(alloc: Allocation, table: McsTable, mcs: u32) -> u64 {
    let e = mcs_entry(table, mcs).unwrap();
    tbs_oracle(
        alloc.prbs.into(),
        alloc.symbols.into(),
        alloc.layers.into(),
        e.qm.into(),
        (e.rate_x1024 * 2.0) as u64,
        alloc.overhead.into(),
    )
}

pub fn plan(instance: u32, roles: RoleMap) -> InstancePlan {
    InstancePlan { instance, roles, cell: CellConfig::default() }
}

/// Every way a plan can be wrong, computed core by core.
pub fn placement_oracle(topo: &CoreTopology, plans: &[InstancePlan]) -> Vec<Violation> {
    let mut out = Vec::new();
    let complex_of = |c: usize| topo.complexes.iter().position(|&(a, b)| a <= c && c < b);
    for p in plans {
        let r = &p.roles;
        let mut all: Vec<usize> = vec![r.io, r.worker, r.l1_tx, r.l1_rx, r.system, r.ru];
        all.extend(&r.pool);
        all.sort();
        all.dedup();
        let mut hit = BTreeSet::new();
        for &c in &all {
            match complex_of(c) {
                Some(x) if c < topo.total_cores => {
                    hit.insert(x);
                }
                _ if c >= topo.total_cores || !topo.flat => out.push(Violation::CoreOutOfRange { instance: p.instance, core: c }),
                _ => {}
            }
        }
        if !topo.flat && hit.len() > 1 {
            let dies: BTreeSet<usize> = hit.iter().map(|&x| topo.dies.iter().position(|d| d.contains(&x)).unwrap()).collect();
            let complexes: Vec<usize> = hit.into_iter().collect();
            out.push(if dies.len() > 1 {
                Violation::DieCrossing { instance: p.instance, complexes }
            } else {
                Violation::ComplexCrossing { instance: p.instance, complexes }
            });
        }
        let ex = [r.io, r.worker, r.l1_tx, r.l1_rx];
        let pool: BTreeSet<usize> = r.pool.iter().copied().collect();
        let mut bad = false;
        for i in 0..4 {
            for j in i + 1..4 {
                bad |= ex[i] == ex[j];
            }
        }
        bad |= ex.iter().any(|c| pool.contains(c));
        bad |= pool.len() < 4;
        bad |= !pool.contains(&r.system) || !pool.contains(&r.ru);
        bad |= all.len() != 8;
        if bad {
            out.push(Violation::RoleMap { instance: p.instance, reason: String::new() });
        }
    }
    for c in 0..topo.total_cores + 64 {
        let owners: Vec<u32> = plans.iter().filter(|p| p.roles.cores().contains(&c)).map(|p| p.instance).collect();
        if owners.len() > 1 {
            out.push(Violation::CoreOverlap { core: c, instances: owners });
        }
    }
    out
}

/// Role-map reasons are free text; compare them by kind only.
pub fn normalize(v: &[Violation]) -> BTreeSet<Violation> {
    v.iter()
        .map(|x| match x {
            Violation::RoleMap { instance, .. } => Violation::RoleMap { instance: *instance, reason: String::new() },
            other => other.clone(),
        })
        .collect()
}

pub fn random_case(rng: &mut ChaCha8Rng) -> (CoreTopology, Vec<InstancePlan>) {
    let topo = if rng.random_bool(0.2) {
        CoreTopology::flat("flat", 8 * rng.random_range(1..6))
    } else {
        let size = [4, 8, 8, 16][rng.random_range(0..4)];
        let n = rng.random_range(1..9);
        CoreTopology::uniform("t", size * n, size, rng.random_range(1..4))
    };
    let n_plans = rng.random_range(1..5);
    let plans = (0..n_plans)
        .map(|i| {
            let mut roles = RoleMap::on_block(rng.random_range(0..topo.total_cores + 4));
            if rng.random_bool(0.3) {
                let k = rng.random_range(0..4);
                let c = rng.random_range(0..topo.total_cores + 2);
                match k {
                    0 => roles.io = c,
                    1 => roles.l1_rx = c,
                    2 => roles.system = c,
                    _ => {
                        roles.pool.pop();
                    }
                }
            }
            plan(i, roles)
        })
        .collect();
    (topo, plans)
}

/// Triple loop over (port, symbol, subcarrier), summing layers in order.
pub fn naive_precode(x: &ResourceGrid, w: &WeightMatrix) -> Vec<Complex32> {
    let mut out = Vec::new();
    for sym in 0..x.symbols() {
        for port in 0..w.ports {
            for sc in 0..x.subcarriers() {
                let mut acc = Complex32::new(0.0, 0.0);
                for l in 0..w.layers {
                    acc += w.at(port, l) * x.get(sym, l, sc);
                }
                out.push(acc);
            }
        }
    }
    out
}
