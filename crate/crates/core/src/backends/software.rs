//! Coding on general-purpose cores.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use rayon::ThreadPool;

use super::exec::execute;
use crate::error::{Error, Result};
use crate::lpu::{discover, CodingOpDescriptor, Completion, LpuCapabilities, LpuDevice};

fn build_pool(workers: usize) -> Result<ThreadPool> {
    if workers == 0 {
        return Err(Error::InvalidConfig("worker_count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .thread_name(|i| format!("ldpc-worker-{i}"))
        .build()
        .map_err(|e| Error::BackendUnavailable(e.to_string()))
}

fn run_on(pool: &ThreadPool, epoch: Instant, ops: &[CodingOpDescriptor]) -> Vec<Completion> {
    pool.install(|| {
        ops.par_iter()
            .map(|op| {
                let t0 = Instant::now();
                let ex = execute(op, None);
                let service_us = t0.elapsed().as_secs_f64() * 1e6;
                Completion {
                    op_id: op.id,
                    status: ex.status,
                    output: ex.output,
                    service_us,
                    completed_at_us: epoch.elapsed().as_secs_f64() * 1e6,
                }
            })
            .collect()
    })
}

/// Runs `ops` on `worker_count` threads and returns one completion per op,
/// in submission order. Timestamps are wall-clock µs since the call began.
pub fn software_process(ops: &[CodingOpDescriptor], worker_count: usize) -> Result<Vec<Completion>> {
    let pool = build_pool(worker_count)?;
    Ok(run_on(&pool, Instant::now(), ops))
}

/// Software LPU: operations execute on a private thread pool as soon as
/// they are submitted, and time is the wall clock.
pub struct SoftwareBackend {
    caps: LpuCapabilities,
    pool: ThreadPool,
    epoch: Instant,
    queues: Mutex<Vec<VecDeque<Completion>>>,
}

impl std::fmt::Debug for SoftwareBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SoftwareBackend")
            .field("caps", &self.caps)
            .field("workers", &self.pool.current_num_threads())
            .finish()
    }
}

impl SoftwareBackend {
    pub fn new(workers: usize) -> Result<Self> {
        let caps = discover("software")?;
        let queues = Mutex::new(vec![VecDeque::new(); caps.num_queues]);
        Ok(SoftwareBackend { caps, pool: build_pool(workers)?, epoch: Instant::now(), queues })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl LpuDevice for SoftwareBackend {
    fn capabilities(&self) -> &LpuCapabilities {
        &self.caps
    }

    fn now_us(&self) -> Option<f64> {
        Some(self.epoch.elapsed().as_secs_f64() * 1e6)
    }

    fn submit(&self, queue: usize, _owner: u32, _now_us: f64, ops: Vec<CodingOpDescriptor>) -> Result<()> {
        if queue >= self.caps.num_queues {
            return Err(Error::InvalidConfig(format!("queue {queue} out of range")));
        }
        let done = run_on(&self.pool, self.epoch, &ops);
        self.queues.lock().expect("queue state poisoned")[queue].extend(done);
        Ok(())
    }

    fn poll(&self, queue: usize, max: usize) -> Vec<Completion> {
        let mut queues = self.queues.lock().expect("queue state poisoned");
        let Some(q) = queues.get_mut(queue) else { return Vec::new() };
        let n = max.min(q.len());
        q.drain(..n).collect()
    }

    fn release(&self, queue: usize) {
        if let Some(q) = self.queues.lock().expect("queue state poisoned").get_mut(queue) {
            q.clear();
        }
    }
}
