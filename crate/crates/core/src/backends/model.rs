//! Per-call service-time models and their calibration from measured
//! slot-level coding times.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpu::{InterfaceGeneration, OpKind};

/// Tail added to operations served while the device is oversubscribed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Jitter {
    None,
    /// Lognormal with the given median (µs) and log-space deviation.
    Lognormal { median_us: f64, sigma: f64 },
}

/// Cost of one call: `fixed + per_cb·n_cb + per_tb·n_tb + per_kbit·kbits`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceTimeModel {
    pub fixed_per_call_us: f64,
    pub per_cb_us: f64,
    pub per_tb_us: f64,
    pub per_kbit_us: f64,
    pub parallel_servers: usize,
    pub jitter: Jitter,
    pub seed: u64,
}

impl ServiceTimeModel {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.fixed_per_call_us, self.per_cb_us, self.per_tb_us, self.per_kbit_us];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidConfig(format!("negative or non-finite coefficient in {coeffs:?}")));
        }
        if self.parallel_servers == 0 {
            return Err(Error::InvalidConfig("parallel_servers must be at least 1".into()));
        }
        if let Jitter::Lognormal { median_us, sigma } = self.jitter {
            if !(median_us >= 0.0 && sigma >= 0.0) {
                return Err(Error::InvalidConfig("jitter parameters must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Isolated duration of a call with the given content.
    pub fn call_us(&self, n_cb: usize, n_tb: usize, kbits: f64) -> f64 {
        self.fixed_per_call_us + self.per_cb_us * n_cb as f64 + self.per_tb_us * n_tb as f64 + self.per_kbit_us * kbits
    }

    /// Isolated duration of a whole slot's worth of calls.
    pub fn slot_us(&self, shape: &SlotShape) -> f64 {
        self.fixed_per_call_us * shape.calls as f64
            + self.per_cb_us * shape.n_cb as f64
            + self.per_tb_us * shape.n_tb as f64
            + self.per_kbit_us * shape.kbits
    }
}

/// Slot-level totals that drive the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotShape {
    pub calls: usize,
    pub n_cb: usize,
    pub n_tb: usize,
    /// Information bits over all code blocks, in thousands.
    pub kbits: f64,
}

impl SlotShape {
    fn features(&self) -> [f64; 4] {
        [self.calls as f64, self.n_cb as f64, self.n_tb as f64, self.kbits]
    }
}

/// Number of calls a slot of `n_tb` blocks and `n_cb` code blocks needs.
pub fn calls_for(kind: OpKind, generation: InterfaceGeneration, n_tb: usize, n_cb: usize) -> usize {
    match (generation, kind) {
        (_, _) if n_cb == 0 => 0,
        (InterfaceGeneration::PerSlot, _) => 1,
        (InterfaceGeneration::PerTb, _) => n_tb,
        (InterfaceGeneration::PerCb, OpKind::Decode) => n_cb,
        (InterfaceGeneration::PerCb, OpKind::Encode) => n_cb.div_ceil(crate::slot_api::ENCODE_CBS_PER_CALL),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationModels {
    pub per_cb: ServiceTimeModel,
    pub per_tb: ServiceTimeModel,
    pub per_slot: ServiceTimeModel,
}

impl GenerationModels {
    pub fn get(&self, g: InterfaceGeneration) -> &ServiceTimeModel {
        match g {
            InterfaceGeneration::PerCb => &self.per_cb,
            InterfaceGeneration::PerTb => &self.per_tb,
            InterfaceGeneration::PerSlot => &self.per_slot,
        }
    }

    fn get_mut(&mut self, g: InterfaceGeneration) -> &mut ServiceTimeModel {
        match g {
            InterfaceGeneration::PerCb => &mut self.per_cb,
            InterfaceGeneration::PerTb => &mut self.per_tb,
            InterfaceGeneration::PerSlot => &mut self.per_slot,
        }
    }

    fn uniform(m: ServiceTimeModel) -> Self {
        GenerationModels { per_cb: m, per_tb: m, per_slot: m }
    }
}

/// Encode and decode models of one device, per interface generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModels {
    pub encode: GenerationModels,
    pub decode: GenerationModels,
}

impl DeviceModels {
    pub fn uniform(encode: ServiceTimeModel, decode: ServiceTimeModel) -> Self {
        DeviceModels { encode: GenerationModels::uniform(encode), decode: GenerationModels::uniform(decode) }
    }

    pub fn get(&self, kind: OpKind, g: InterfaceGeneration) -> &ServiceTimeModel {
        match kind {
            OpKind::Encode => self.encode.get(g),
            OpKind::Decode => self.decode.get(g),
        }
    }

    pub fn get_mut(&mut self, kind: OpKind, g: InterfaceGeneration) -> &mut ServiceTimeModel {
        match kind {
            OpKind::Encode => self.encode.get_mut(g),
            OpKind::Decode => self.decode.get_mut(g),
        }
    }

    /// Applies `f` to all six models.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut ServiceTimeModel)) {
        for kind in [OpKind::Encode, OpKind::Decode] {
            for g in InterfaceGeneration::ALL {
                f(self.get_mut(kind, g));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut servers = None;
        for kind in [OpKind::Encode, OpKind::Decode] {
            for g in InterfaceGeneration::ALL {
                let m = self.get(kind, g);
                m.validate()?;
                if *servers.get_or_insert(m.parallel_servers) != m.parallel_servers {
                    return Err(Error::InvalidConfig("models disagree on parallel_servers".into()));
                }
            }
        }
        Ok(())
    }
}

/// One measured point: mean slot coding time for a direction, interface
/// generation and slot shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub kind: OpKind,
    pub generation: InterfaceGeneration,
    pub n_tb: usize,
    pub shape: SlotShape,
    pub mean_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub kind: OpKind,
    pub generation: InterfaceGeneration,
    pub model: ServiceTimeModel,
    /// Features that entered the fit (duplicates of earlier columns and
    /// all-zero columns are dropped and keep a zero coefficient).
    pub features: Vec<String>,
    pub max_rel_residual: f64,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub groups: Vec<GroupFit>,
    pub max_rel_residual: f64,
}

impl Calibration {
    /// Assembles a full device model set; every (direction, generation)
    /// pair must have been fitted.
    pub fn device_models(&self, parallel_servers: usize, jitter: Jitter, seed: u64) -> Result<DeviceModels> {
        let find = |kind, g| {
            self.groups
                .iter()
                .find(|f| f.kind == kind && f.generation == g)
                .map(|f| ServiceTimeModel { parallel_servers, jitter, seed, ..f.model })
                .ok_or_else(|| Error::CalibrationFailed(format!("no observations for {kind:?} {}", g.as_str())))
        };
        let mut out = DeviceModels::uniform(find(OpKind::Encode, InterfaceGeneration::PerSlot)?, find(OpKind::Decode, InterfaceGeneration::PerSlot)?);
        for kind in [OpKind::Encode, OpKind::Decode] {
            for g in InterfaceGeneration::ALL {
                *out.get_mut(kind, g) = find(kind, g)?;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, obs: &Observation) -> Option<f64> {
        self.groups
            .iter()
            .find(|f| f.kind == obs.kind && f.generation == obs.generation)
            .map(|f| f.model.slot_us(&obs.shape))
    }
}

const FEATURE_NAMES: [&str; 4] = ["calls", "n_cb", "n_tb", "kbits"];

/// Non-negative least squares, Lawson-Hanson active-set method.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.amax().max(1.0) * b.amax().max(1.0);
    let tol = 1e-12 * scale * (a.nrows() + n) as f64;

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub.svd(true, true).solve(b, 1e-14).expect("SVD with U and V^T");
        let mut z = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            z[j] = sol[k];
        }
        z
    };

    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let Some(j) = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&p, &q| w[p].total_cmp(&w[q])) else {
            break;
        };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive);
            if (0..n).filter(|&i| passive[i]).all(|i| z[i] > 0.0) {
                x = z;
                break;
            }
            let alpha = (0..n)
                .filter(|&i| passive[i] && z[i] <= 0.0)
                .map(|i| x[i] / (x[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

/// Fits one model per (direction, generation) group by relative-error
/// weighted non-negative least squares over the call/CB/TB/kbit features.
pub fn calibrate_model(observations: &[Observation]) -> Result<Calibration> {
    let generations: std::collections::BTreeSet<_> = observations.iter().map(|o| o.generation).collect();
    if observations.len() < 4 || generations.len() < 2 {
        return Err(Error::CalibrationFailed(format!(
            "need at least 4 observations over 2 generations, got {} over {}",
            observations.len(),
            generations.len()
        )));
    }
    if let Some(o) = observations.iter().find(|o| !(o.mean_us > 0.0 && o.mean_us.is_finite())) {
        return Err(Error::CalibrationFailed(format!("non-positive observation {}", o.mean_us)));
    }
    let mut keys: Vec<(OpKind, InterfaceGeneration)> = observations.iter().map(|o| (o.kind, o.generation)).collect();
    keys.sort();
    keys.dedup();

    let mut groups = Vec::new();
    for (kind, generation) in keys {
        let rows: Vec<&Observation> = observations.iter().filter(|o| o.kind == kind && o.generation == generation).collect();
        let feats: Vec<[f64; 4]> = rows.iter().map(|o| o.shape.features()).collect();
        let mut keep: Vec<usize> = Vec::new();
        for j in 0..4 {
            let col = |k: usize| feats.iter().map(move |f| f[k]);
            if col(j).all(|v| v == 0.0) {
                continue;
            }
            if keep.iter().any(|&k| col(k).zip(col(j)).all(|(a, b)| a == b)) {
                continue;
            }
            keep.push(j);
        }
        let label = format!("{kind:?} {}", generation.as_str());
        if rows.len() < keep.len() {
            return Err(Error::CalibrationFailed(format!(
                "{label}: {} observations for {} free coefficients",
                rows.len(),
                keep.len()
            )));
        }
        let a = DMatrix::from_fn(rows.len(), keep.len(), |i, j| feats[i][keep[j]] / rows[i].mean_us);
        let b = DVector::from_element(rows.len(), 1.0);
        let sv = a.clone().svd(false, false).singular_values;
        let smax = sv.max();
        if keep.is_empty() || sv.min() <= 1e-10 * smax {
            return Err(Error::CalibrationFailed(format!("{label}: degenerate design matrix")));
        }
        let coef = nnls(&a, &b);
        let mut c = [0.0; 4];
        for (k, &j) in keep.iter().enumerate() {
            c[j] = coef[k];
        }
        let model = ServiceTimeModel {
            fixed_per_call_us: c[0],
            per_cb_us: c[1],
            per_tb_us: c[2],
            per_kbit_us: c[3],
            parallel_servers: 1,
            jitter: Jitter::None,
            seed: 0,
        };
        let max_rel_residual = rows
            .iter()
            .map(|o| ((model.slot_us(&o.shape) - o.mean_us) / o.mean_us).abs())
            .fold(0.0, f64::max);
        groups.push(GroupFit {
            kind,
            generation,
            model,
            features: keep.iter().map(|&j| FEATURE_NAMES[j].to_string()).collect(),
            max_rel_residual,
            observations: rows.len(),
        });
    }
    let max_rel_residual = groups.iter().map(|g| g.max_rel_residual).fold(0.0, f64::max);
    Ok(Calibration { groups, max_rel_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nnls_matches_unconstrained_solution_when_positive() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let x = nnls(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 2.0).abs() < 1e-10, "{x}");
    }

    #[test]
    fn nnls_clamps_negative_direction() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -1.0, 1.0]);
        let x = nnls(&a, &b);
        assert!(x[1] == 0.0 && x[0] > 0.0, "{x}");
    }

    #[test]
    fn calls_per_generation() {
        assert_eq!(calls_for(OpKind::Decode, InterfaceGeneration::PerCb, 1, 26), 26);
        assert_eq!(calls_for(OpKind::Encode, InterfaceGeneration::PerCb, 1, 26), 4);
        assert_eq!(calls_for(OpKind::Encode, InterfaceGeneration::PerTb, 3, 27), 3);
        assert_eq!(calls_for(OpKind::Decode, InterfaceGeneration::PerSlot, 8, 32), 1);
        assert_eq!(calls_for(OpKind::Decode, InterfaceGeneration::PerSlot, 0, 0), 0);
    }
}
