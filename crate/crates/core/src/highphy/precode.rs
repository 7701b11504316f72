//! Precoding and resource mapping of layer grids onto antenna ports.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SYMBOLS_PER_SLOT: usize = 14;
pub const SUBCARRIERS_PER_PRB: usize = 12;
/// PRBs per work unit when there are more workers than symbols.
pub const PRB_CHUNK: usize = 24;
const LANES: usize = 8;

/// Complex resource elements indexed by (symbol, layer or port, subcarrier).
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    symbols: usize,
    streams: usize,
    subcarriers: usize,
    data: Vec<Complex32>,
}

impl ResourceGrid {
    pub fn zeros(symbols: usize, streams: usize, prbs: usize) -> Self {
        let subcarriers = prbs * SUBCARRIERS_PER_PRB;
        ResourceGrid { symbols, streams, subcarriers, data: vec![Complex32::new(0.0, 0.0); symbols * streams * subcarriers] }
    }

    /// Grid with seeded values uniformly drawn from [-1, 1) per component.
    pub fn random(symbols: usize, streams: usize, prbs: usize, seed: u64) -> Self {
        let mut g = Self::zeros(symbols, streams, prbs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut g.data {
            *v = Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        g
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    fn offset(&self, symbol: usize, stream: usize) -> usize {
        (symbol * self.streams + stream) * self.subcarriers
    }

    pub fn get(&self, symbol: usize, stream: usize, sc: usize) -> Complex32 {
        self.data[self.offset(symbol, stream) + sc]
    }

    pub fn set(&mut self, symbol: usize, stream: usize, sc: usize, v: Complex32) {
        let o = self.offset(symbol, stream);
        self.data[o + sc] = v;
    }

    /// Subcarriers of one (symbol, stream) row.
    pub fn row(&self, symbol: usize, stream: usize) -> &[Complex32] {
        let o = self.offset(symbol, stream);
        &self.data[o..o + self.subcarriers]
    }

    pub fn as_slice(&self) -> &[Complex32] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `a·self + b·other`, element-wise.
    pub fn combine(&self, a: Complex32, other: &ResourceGrid, b: Complex32) -> ResourceGrid {
        let mut out = self.clone();
        for (o, y) in out.data.iter_mut().zip(&other.data) {
            *o = a * *o + b * *y;
        }
        out
    }
}

/// Precoding weights, `ports x layers`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub ports: usize,
    pub layers: usize,
    pub w: Vec<Complex32>,
}

impl WeightMatrix {
    pub fn new(ports: usize, layers: usize, w: Vec<Complex32>) -> Result<Self> {
        if w.len() != ports * layers || ports == 0 || layers == 0 {
            return Err(Error::DimensionMismatch(format!("{} weights for {ports}x{layers}", w.len())));
        }
        Ok(WeightMatrix { ports, layers, w })
    }

    pub fn identity(n: usize) -> Self {
        let mut w = vec![Complex32::new(0.0, 0.0); n * n];
        for i in 0..n {
            w[i * n + i] = Complex32::new(1.0, 0.0);
        }
        WeightMatrix { ports: n, layers: n, w }
    }

    pub fn random(ports: usize, layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..ports * layers)
            .map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        WeightMatrix { ports, layers, w }
    }

    pub fn at(&self, port: usize, layer: usize) -> Complex32 {
        self.w[port * self.layers + layer]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrecodeMode {
    Scalar,
    /// Lane-parallel kernel over split real/imaginary arrays.
    Vector,
    /// Lane-parallel kernel on a pool of `n` threads.
    Workers(usize),
}

/// `w·x`, expanded in the same operation order as complex multiplication.
#[inline(always)]
fn cmul(wr: f32, wi: f32, xr: f32, xi: f32) -> (f32, f32) {
    (wr * xr - wi * xi, wr * xi + wi * xr)
}

fn scalar_row(input: &ResourceGrid, w: &WeightMatrix, sym: usize, port: usize, range: std::ops::Range<usize>, out: &mut [Complex32]) {
    for (k, sc) in range.enumerate() {
        let mut acc = Complex32::new(0.0, 0.0);
        for l in 0..w.layers {
            let x = input.get(sym, l, sc);
            let c = w.at(port, l);
            let (re, im) = cmul(c.re, c.im, x.re, x.im);
            acc = Complex32::new(acc.re + re, acc.im + im);
        }
        out[k] = acc;
    }
}

fn vector_row(input: &ResourceGrid, w: &WeightMatrix, sym: usize, port: usize, range: std::ops::Range<usize>, out: &mut [Complex32]) {
    let mut k = 0;
    let mut sc = range.start;
    while sc < range.end {
        let n = LANES.min(range.end - sc);
        let mut acc_re = [0.0f32; LANES];
        let mut acc_im = [0.0f32; LANES];
        for l in 0..w.layers {
            let c = w.at(port, l);
            let row = &input.row(sym, l)[sc..sc + n];
            let mut xr = [0.0f32; LANES];
            let mut xi = [0.0f32; LANES];
            for (i, x) in row.iter().enumerate() {
                xr[i] = x.re;
                xi[i] = x.im;
            }
            for i in 0..LANES {
                let (re, im) = cmul(c.re, c.im, xr[i], xi[i]);
                acc_re[i] += re;
                acc_im[i] += im;
            }
        }
        for i in 0..n {
            out[k + i] = Complex32::new(acc_re[i], acc_im[i]);
        }
        k += n;
        sc += n;
    }
}

fn pool(n: usize) -> Result<Arc<ThreadPool>> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS.get_or_init(Default::default).lock().expect("pool cache poisoned");
    if let Some(p) = pools.get(&n) {
        return Ok(Arc::clone(p));
    }
    let p = Arc::new(
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .thread_name(|i| format!("precode-{i}"))
            .build()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?,
    );
    pools.insert(n, Arc::clone(&p));
    Ok(p)
}

/// Work units: whole symbols, or 24-PRB chunks of each symbol when there
/// are more workers than symbols.
fn work_units(symbols: usize, subcarriers: usize, workers: usize) -> Vec<(usize, std::ops::Range<usize>)> {
    if workers <= symbols {
        return (0..symbols).map(|s| (s, 0..subcarriers)).collect();
    }
    let chunk = PRB_CHUNK * SUBCARRIERS_PER_PRB;
    (0..symbols)
        .flat_map(|s| (0..subcarriers).step_by(chunk).map(move |a| (s, a..(a + chunk).min(subcarriers))))
        .collect()
}

/// Applies the weights per resource element: `out[port] = Σ_layer
/// w[port, layer]·in[layer]`, accumulated over layers in index order so
/// that every mode yields the same bits.
pub fn precode_and_map(layers: &ResourceGrid, weights: &WeightMatrix, mode: PrecodeMode) -> Result<ResourceGrid> {
    if weights.layers != layers.streams {
        return Err(Error::DimensionMismatch(format!("weights take {} layers, grid has {}", weights.layers, layers.streams)));
    }
    let mut out = ResourceGrid {
        symbols: layers.symbols,
        streams: weights.ports,
        subcarriers: layers.subcarriers,
        data: vec![Complex32::new(0.0, 0.0); layers.symbols * weights.ports * layers.subcarriers],
    };
    let nsc = layers.subcarriers;
    match mode {
        PrecodeMode::Scalar | PrecodeMode::Vector => {
            let kernel = if mode == PrecodeMode::Scalar { scalar_row } else { vector_row };
            for sym in 0..layers.symbols {
                for port in 0..weights.ports {
                    let o = out.offset(sym, port);
                    kernel(layers, weights, sym, port, 0..nsc, &mut out.data[o..o + nsc]);
                }
            }
        }
        PrecodeMode::Workers(n) => {
            if n == 0 {
                return Err(Error::InvalidConfig("zero precoding workers".into()));
            }
            let units = work_units(layers.symbols, nsc, n);
            let pool = pool(n)?;
            let parts: Vec<Vec<Complex32>> = pool.install(|| {
                units
                    .par_iter()
                    .map(|(sym, range)| {
                        let len = range.len();
                        let mut buf = vec![Complex32::new(0.0, 0.0); len * weights.ports];
                        for port in 0..weights.ports {
                            vector_row(layers, weights, *sym, port, range.clone(), &mut buf[port * len..(port + 1) * len]);
                        }
                        buf
                    })
                    .collect()
            });
            for ((sym, range), buf) in units.iter().zip(parts) {
                let len = range.len();
                for port in 0..weights.ports {
                    let o = out.offset(*sym, port) + range.start;
                    out.data[o..o + len].copy_from_slice(&buf[port * len..(port + 1) * len]);
                }
            }
        }
    }
    Ok(out)
}
