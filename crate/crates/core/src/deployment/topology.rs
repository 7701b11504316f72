//! Server core layouts, role-based core plans and placement checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::highphy::CellConfig;

/// Cores per gNB instance (and per planning block on flat servers).
pub const CORES_PER_INSTANCE: usize = 8;
/// Minimum size of an instance's shared thread pool.
pub const MIN_POOL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Profile {
    /// 64 cores, eight 8-core complexes, one complex per die.
    Hpp,
    /// 64 cores, eight 8-core complexes, two complexes per die.
    EpRfsoc,
    /// 32 cores without complex boundaries.
    Vranp,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "hpp" => Some(Profile::Hpp),
            "ep-rfsoc" | "eprfsoc" => Some(Profile::EpRfsoc),
            "vranp" => Some(Profile::Vranp),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Hpp => "hpp",
            Profile::EpRfsoc => "ep-rfsoc",
            Profile::Vranp => "vranp",
        }
    }

    pub fn topology(self) -> CoreTopology {
        match self {
            Profile::Hpp => CoreTopology::uniform("hpp", 64, 8, 1),
            Profile::EpRfsoc => CoreTopology::uniform("ep-rfsoc", 64, 8, 2),
            Profile::Vranp => CoreTopology::flat("vranp", 32),
        }
    }
}

/// Cores grouped in complexes (shared L3) and complexes grouped in dies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreTopology {
    pub name: String,
    pub total_cores: usize,
    /// Half-open core ranges `[start, end)`.
    pub complexes: Vec<(usize, usize)>,
    /// Complex indices of each die.
    pub dies: Vec<Vec<usize>>,
    pub flat: bool,
}

impl CoreTopology {
    pub fn uniform(name: &str, total_cores: usize, complex_size: usize, complexes_per_die: usize) -> Self {
        let n = total_cores / complex_size;
        CoreTopology {
            name: name.into(),
            total_cores,
            complexes: (0..n).map(|i| (i * complex_size, (i + 1) * complex_size)).collect(),
            dies: (0..n).collect::<Vec<_>>().chunks(complexes_per_die).map(<[usize]>::to_vec).collect(),
            flat: false,
        }
    }

    pub fn flat(name: &str, total_cores: usize) -> Self {
        CoreTopology { name: name.into(), total_cores, complexes: vec![(0, total_cores)], dies: vec![vec![0]], flat: true }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let mut sizes = BTreeSet::new();
        for &(a, b) in &self.complexes {
            if a >= b || b > self.total_cores {
                return Err(Error::InvalidConfig(format!("complex [{a}, {b}) outside {} cores", self.total_cores)));
            }
            sizes.insert(b - a);
            for c in a..b {
                if !seen.insert(c) {
                    return Err(Error::InvalidConfig(format!("core {c} in two complexes")));
                }
            }
        }
        if sizes.len() > 1 {
            return Err(Error::InvalidConfig("complex sizes differ".into()));
        }
        let mut in_die = BTreeSet::new();
        for d in &self.dies {
            for &c in d {
                if c >= self.complexes.len() || !in_die.insert(c) {
                    return Err(Error::InvalidConfig(format!("bad complex index {c} in die list")));
                }
            }
        }
        Ok(())
    }

    pub fn complex_of(&self, core: usize) -> Option<usize> {
        self.complexes.iter().position(|&(a, b)| (a..b).contains(&core))
    }

    pub fn die_of_complex(&self, complex: usize) -> Option<usize> {
        self.dies.iter().position(|d| d.contains(&complex))
    }
}

/// Core roles of one instance. `system` and `ru` run on pool cores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMap {
    pub io: usize,
    pub worker: usize,
    pub l1_tx: usize,
    pub l1_rx: usize,
    pub system: usize,
    pub ru: usize,
    pub pool: Vec<usize>,
}

impl RoleMap {
    /// Roles laid out over eight consecutive cores starting at `base`.
    pub fn on_block(base: usize) -> Self {
        RoleMap {
            io: base,
            worker: base + 1,
            l1_tx: base + 2,
            l1_rx: base + 3,
            system: base + 4,
            ru: base + 5,
            pool: (base + 4..base + 8).collect(),
        }
    }

    pub fn exclusive(&self) -> [usize; 4] {
        [self.io, self.worker, self.l1_tx, self.l1_rx]
    }

    /// Every core the instance uses, sorted.
    pub fn cores(&self) -> Vec<usize> {
        let mut s: BTreeSet<usize> = self.exclusive().into_iter().collect();
        s.extend(self.pool.iter().copied());
        s.insert(self.system);
        s.insert(self.ru);
        s.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePlan {
    pub instance: u32,
    pub roles: RoleMap,
    pub cell: CellConfig,
}

/// One instance per complex (or per 8-core block on flat servers), the
/// first complex or block left to the operating system.
pub fn default_core_plan(topology: &CoreTopology, n_instances: usize) -> Result<Vec<InstancePlan>> {
    topology.validate()?;
    if n_instances == 0 {
        return Err(Error::InvalidConfig("at least one instance is needed".into()));
    }
    let blocks: Vec<usize> = if topology.flat {
        (0..topology.total_cores / CORES_PER_INSTANCE).map(|b| b * CORES_PER_INSTANCE).collect()
    } else {
        topology
            .complexes
            .iter()
            .filter(|&&(a, b)| b - a >= CORES_PER_INSTANCE)
            .map(|&(a, _)| a)
            .collect()
    };
    let available = blocks.len().saturating_sub(1);
    if n_instances > available {
        return Err(Error::Capacity(format!(
            "{} has room for {available} instances of {CORES_PER_INSTANCE} cores besides the host block, {n_instances} requested",
            topology.name
        )));
    }
    Ok(blocks[1..=n_instances]
        .iter()
        .enumerate()
        .map(|(i, &base)| InstancePlan { instance: i as u32, roles: RoleMap::on_block(base), cell: CellConfig::default() })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Instance cores span complexes on different dies.
    DieCrossing { instance: u32, complexes: Vec<usize> },
    /// Instance cores span complexes of one die.
    ComplexCrossing { instance: u32, complexes: Vec<usize> },
    CoreOutOfRange { instance: u32, core: usize },
    CoreOverlap { core: usize, instances: Vec<u32> },
    RoleMap { instance: u32, reason: String },
}

impl Violation {
    /// Higher is worse: die crossing ranks above complex crossing.
    pub fn severity(&self) -> u8 {
        match self {
            Violation::DieCrossing { .. } | Violation::CoreOverlap { .. } | Violation::CoreOutOfRange { .. } => 2,
            Violation::ComplexCrossing { .. } | Violation::RoleMap { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlacementReport {
    pub violations: Vec<Violation>,
}

impl PlacementReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn role_problems(r: &RoleMap) -> Vec<String> {
    let mut out = Vec::new();
    let ex = r.exclusive();
    let distinct: BTreeSet<usize> = ex.iter().copied().collect();
    if distinct.len() != ex.len() {
        out.push("exclusive roles share a core".to_string());
    }
    if ex.iter().any(|c| r.pool.contains(c)) {
        out.push("exclusive role core is in the pool".to_string());
    }
    let pool: BTreeSet<usize> = r.pool.iter().copied().collect();
    if pool.len() < MIN_POOL {
        out.push(format!("pool has {} cores, at least {MIN_POOL} needed", pool.len()));
    }
    if !pool.contains(&r.system) || !pool.contains(&r.ru) {
        out.push("system and ru cores must be pool cores".to_string());
    }
    if r.cores().len() != CORES_PER_INSTANCE {
        out.push(format!("{} distinct cores, {CORES_PER_INSTANCE} expected", r.cores().len()));
    }
    out
}

/// Lists complex and die crossings, overlapping instances and role-map
/// problems. Crossings are not reported on flat topologies.
pub fn validate_placement(topology: &CoreTopology, plans: &[InstancePlan]) -> PlacementReport {
    let mut violations = Vec::new();
    let mut owners: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for p in plans {
        let cores = p.roles.cores();
        for &c in &cores {
            owners.entry(c).or_default().push(p.instance);
        }
        let mut complexes = BTreeSet::new();
        for &c in &cores {
            if c >= topology.total_cores {
                violations.push(Violation::CoreOutOfRange { instance: p.instance, core: c });
            } else if let Some(x) = topology.complex_of(c) {
                complexes.insert(x);
            } else if !topology.flat {
                violations.push(Violation::CoreOutOfRange { instance: p.instance, core: c });
            }
        }
        if !topology.flat && complexes.len() > 1 {
            let dies: BTreeSet<Option<usize>> = complexes.iter().map(|&x| topology.die_of_complex(x)).collect();
            let complexes: Vec<usize> = complexes.into_iter().collect();
            violations.push(if dies.len() > 1 {
                Violation::DieCrossing { instance: p.instance, complexes }
            } else {
                Violation::ComplexCrossing { instance: p.instance, complexes }
            });
        }
        for reason in role_problems(&p.roles) {
            violations.push(Violation::RoleMap { instance: p.instance, reason });
        }
    }
    for (core, mut inst) in owners {
        inst.dedup();
        if inst.len() > 1 {
            violations.push(Violation::CoreOverlap { core, instances: inst });
        }
    }
    PlacementReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_consistent() {
        for p in [Profile::Hpp, Profile::EpRfsoc, Profile::Vranp] {
            p.topology().validate().unwrap();
            assert_eq!(Profile::parse(p.as_str()), Some(p));
        }
        assert_eq!(Profile::EpRfsoc.topology().dies.len(), 4);
    }

    #[test]
    fn block_roles_are_valid() {
        assert!(role_problems(&RoleMap::on_block(8)).is_empty());
    }
}
