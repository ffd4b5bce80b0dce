//! Memory-efficient device-sharded sigmoid loss over simulated devices.
//!
//! The `2n` batch rows are split into `D` contiguous chunks. Each simulated
//! device keeps its own chunk and, over `D` lock-step ring rounds, receives
//! every other chunk once, computing the `b' x b'` block of pair terms
//! between its local rows and the incoming rows. Only one block is ever
//! materialized per device, so peak pairwise storage drops from `(2n)^2`
//! to `(2n/D)^2` per device. Pair labels come from global row indices, so
//! positives may span devices. The final reduction runs in ascending
//! device-id order, making the result independent of scheduling; with
//! `D = 1` it is bit-identical to the monolithic loss.

use crate::error::{Error, Result};
use crate::kernel::{dot, l2_normalize_rows, log_sigmoid, sigmoid, Matrix};
use crate::loss::{
    chain_through_normalization, validate_batch, EmbeddingBatch, LossOutput, LossParams,
    TemperatureParamSpace,
};

/// Ring orientation: which neighbor a device receives from at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingDirection {
    /// Receive the chunk of device `(d + s) mod D` at step `s` (default).
    Forward,
    /// Receive the chunk of device `(d - s) mod D` at step `s`.
    Backward,
}

/// Sharding layout for a `2n`-row batch over `D` devices.
#[derive(Debug, Clone)]
pub struct ShardPlan {
    devices: usize,
    chunk_size: usize,
    total_rows: usize,
    direction: RingDirection,
}

impl ShardPlan {
    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn total_rows(&self) -> usize {
        self.total_rows
    }

    pub fn direction(&self) -> RingDirection {
        self.direction
    }

    pub fn with_direction(mut self, direction: RingDirection) -> Self {
        self.direction = direction;
        self
    }

    /// Global row range owned by device `d`.
    pub fn device_rows(&self, d: usize) -> std::ops::Range<usize> {
        d * self.chunk_size..(d + 1) * self.chunk_size
    }

    /// Device whose chunk device `d` holds at ring step `s`.
    pub fn source_device(&self, d: usize, step: usize) -> usize {
        match self.direction {
            RingDirection::Forward => (d + step) % self.devices,
            RingDirection::Backward => (d + self.devices - step % self.devices) % self.devices,
        }
    }

    /// Number of ring steps (step 0 is the local block).
    pub fn steps(&self) -> usize {
        self.devices
    }
}

/// Build a shard plan for `n` pairs over `devices` simulated devices.
/// `devices` must divide `2n` exactly; padding would silently change the
/// loss normalization.
pub fn plan_shards(n: usize, devices: usize) -> Result<ShardPlan> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    if devices == 0 {
        return Err(Error::InvalidArgument("need at least one device".into()));
    }
    let total_rows = 2 * n;
    if total_rows % devices != 0 {
        return Err(Error::Shard(format!(
            "{devices} devices do not divide {total_rows} rows evenly"
        )));
    }
    Ok(ShardPlan {
        devices,
        chunk_size: total_rows / devices,
        total_rows,
        direction: RingDirection::Forward,
    })
}

/// Total chunk transfers in a full pass: each device receives `D - 1`
/// remote chunks (step 0 is local), so `D * (D - 1)`.
pub fn chunk_exchange_count(plan: &ShardPlan) -> usize {
    plan.devices * (plan.devices - 1)
}

/// Execution options for the simulator.
#[derive(Debug, Clone)]
pub struct ChunkOptions {
    /// Worker threads per round; 1 runs devices sequentially. The result
    /// is identical either way.
    pub threads: usize,
    /// Collect a per-index visitation count over the full `(2n)^2` grid.
    /// Test-mode only: the bitmap is exactly the quadratic object the
    /// chunked path avoids.
    pub record_coverage: bool,
}

impl Default for ChunkOptions {
    fn default() -> Self {
        ChunkOptions {
            threads: 1,
            record_coverage: false,
        }
    }
}

/// Per-device instrumentation.
#[derive(Debug, Clone)]
pub struct DeviceReport {
    pub device_id: usize,
    /// High-water mark of simultaneously materialized pairwise-block
    /// entries; bounded by `chunk_size^2`.
    pub peak_block_elems: usize,
    /// Remote chunks received over the ring.
    pub exchanges_received: usize,
}

/// Run-level instrumentation for one chunked evaluation.
#[derive(Debug, Clone)]
pub struct ChunkReport {
    pub devices: Vec<DeviceReport>,
    /// Total chunk transfers, `D * (D - 1)`.
    pub exchange_count: usize,
    /// Visitation counts over the `(2n)^2` index grid, row-major, when
    /// requested. Equivalence requires every count to be exactly 1.
    pub coverage: Option<Vec<u32>>,
}

struct DeviceState {
    device_id: usize,
    local_start: usize,
    local: Matrix,
    loss_raw: f64,
    bias_raw: f64,
    temp_raw: f64,
    ghat: Matrix,
    block: Vec<f64>,
    peak_block_elems: usize,
    exchanges_received: usize,
    coverage: Option<Vec<u32>>,
}

impl DeviceState {
    /// Compute the pair-term block between the local rows and the incoming
    /// chunk, accumulating loss and gradient partials. The block buffer is
    /// fully materialized to keep the memory instrumentation honest.
    fn compute_block(
        &mut self,
        incoming: &Matrix,
        incoming_start: usize,
        total: usize,
        t: f64,
        b: f64,
    ) {
        let bsize = self.local.rows();
        let n = total / 2;
        self.block.clear();
        self.block.resize(bsize * incoming.rows(), 0.0);
        for li in 0..bsize {
            let i = self.local_start + li;
            for rj in 0..incoming.rows() {
                let j = incoming_start + rj;
                if let Some(cov) = self.coverage.as_mut() {
                    cov[i * total + j] += 1;
                }
                if i == j {
                    continue;
                }
                let c = dot(self.local.row(li), incoming.row(rj));
                let z = if j == (i + n) % total { 1.0 } else { -1.0 };
                let a = t * c + b;
                let term = -log_sigmoid(z * a);
                self.block[li * incoming.rows() + rj] = term;
                self.loss_raw += term;
                let u = -z * sigmoid(-z * a);
                self.bias_raw += u;
                self.temp_raw += u * c;
                let tu = t * u;
                {
                    let (gi, xj) = (self.ghat.row_mut(i), incoming.row(rj));
                    for k in 0..xj.len() {
                        gi[k] += tu * xj[k];
                    }
                }
                {
                    let gj = self.ghat.row_mut(j);
                    let xi = self.local.row(li);
                    for k in 0..xi.len() {
                        gj[k] += tu * xi[k];
                    }
                }
            }
        }
        self.peak_block_elems = self.peak_block_elems.max(self.block.len());
    }
}

/// Chunked sigmoid loss with default options (sequential, no coverage).
pub fn chunked_sigclr_loss(
    batch: &EmbeddingBatch,
    params: &LossParams,
    plan: &ShardPlan,
) -> Result<LossOutput> {
    chunked_sigclr_loss_instrumented(batch, params, plan, &ChunkOptions::default())
        .map(|(out, _)| out)
}

/// Chunked sigmoid loss returning per-device instrumentation.
///
/// The per-pair loss matrix is never materialized (that is the point of
/// the chunked path), so `retain_pair_terms` is ignored here.
pub fn chunked_sigclr_loss_instrumented(
    batch: &EmbeddingBatch,
    params: &LossParams,
    plan: &ShardPlan,
    opts: &ChunkOptions,
) -> Result<(LossOutput, ChunkReport)> {
    params.validate()?;
    let total = batch.total_rows();
    if plan.total_rows != total {
        return Err(Error::Shard(format!(
            "plan covers {} rows but batch has {total}",
            plan.total_rows
        )));
    }
    let norms = validate_batch(batch, params.eps)?;
    let xhat = l2_normalize_rows(batch.rows(), params.eps);
    let d_count = plan.devices;
    let bsize = plan.chunk_size;
    let (t, b) = (params.temperature, params.bias);

    let chunk_of = |device: usize| -> Matrix {
        let range = plan.device_rows(device);
        Matrix::from_fn(bsize, batch.dim(), |r, c| xhat.get(range.start + r, c))
    };

    let mut states: Vec<DeviceState> = (0..d_count)
        .map(|d| DeviceState {
            device_id: d,
            local_start: plan.device_rows(d).start,
            local: chunk_of(d),
            loss_raw: 0.0,
            bias_raw: 0.0,
            temp_raw: 0.0,
            ghat: Matrix::zeros(total, batch.dim()),
            block: Vec::new(),
            peak_block_elems: 0,
            exchanges_received: 0,
            coverage: opts.record_coverage.then(|| vec![0u32; total * total]),
        })
        .collect();

    // Ring buffers: at step s, buffers[d] holds the chunk of
    // source_device(d, s) together with its global row offset.
    let mut buffers: Vec<(Matrix, usize)> = (0..d_count)
        .map(|d| (chunk_of(d), plan.device_rows(d).start))
        .collect();

    let threads = opts.threads.max(1).min(d_count);
    for step in 0..plan.steps() {
        // Lock-step round: every device computes its block, then all
        // synchronize before chunks advance.
        if threads <= 1 {
            for (state, (incoming, start)) in states.iter_mut().zip(buffers.iter()) {
                state.compute_block(incoming, *start, total, t, b);
            }
        } else {
            let per_thread = d_count.div_ceil(threads);
            std::thread::scope(|scope| {
                for (state_group, buffer_group) in states
                    .chunks_mut(per_thread)
                    .zip(buffers.chunks(per_thread))
                {
                    scope.spawn(move || {
                        for (state, (incoming, start)) in
                            state_group.iter_mut().zip(buffer_group.iter())
                        {
                            state.compute_block(incoming, *start, total, t, b);
                        }
                    });
                }
            });
        }
        if step + 1 < plan.steps() {
            match plan.direction {
                RingDirection::Forward => buffers.rotate_left(1),
                RingDirection::Backward => buffers.rotate_right(1),
            }
            for state in &mut states {
                state.exchanges_received += 1;
            }
        }
    }

    // Ordered reduction over ascending device ids.
    let mut loss_raw = 0.0;
    let mut bias_raw = 0.0;
    let mut temp_raw = 0.0;
    let mut ghat = Matrix::zeros(total, batch.dim());
    let mut coverage = opts.record_coverage.then(|| vec![0u32; total * total]);
    let mut reports = Vec::with_capacity(d_count);
    for state in &states {
        loss_raw += state.loss_raw;
        bias_raw += state.bias_raw;
        temp_raw += state.temp_raw;
        ghat.add_assign(&state.ghat)?;
        if let (Some(total_cov), Some(dev_cov)) = (coverage.as_mut(), state.coverage.as_ref()) {
            for (acc, v) in total_cov.iter_mut().zip(dev_cov.iter()) {
                *acc += v;
            }
        }
        reports.push(DeviceReport {
            device_id: state.device_id,
            peak_block_elems: state.peak_block_elems,
            exchanges_received: state.exchanges_received,
        });
    }

    let nf = params.normalization.factor(total);
    let grad_temperature = if params.learnable_temperature {
        match params.temperature_param_space {
            TemperatureParamSpace::Raw => temp_raw / nf,
            TemperatureParamSpace::Log => t * temp_raw / nf,
        }
    } else {
        0.0
    };
    let out = LossOutput {
        value: loss_raw / nf,
        grad_embeddings: chain_through_normalization(&ghat, &xhat, &norms, 1.0 / nf),
        grad_bias: bias_raw / nf,
        grad_temperature,
        pair_terms: None,
    };
    let report = ChunkReport {
        devices: reports,
        exchange_count: chunk_exchange_count(plan),
        coverage,
    };
    Ok((out, report))
}
