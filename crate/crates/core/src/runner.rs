//! Build an experiment from its configuration and run trajectory batches.
//!
//! Trajectory `i` always uses `RngStream(master_seed, i)` and belongs to batch
//! `i / batch_size`, so the batch sums do not depend on how many workers run
//! them or in which order batches are claimed.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::channel::{NoJumps, NoiseConfig, SnapshotPlan, Stepper, StochasticHamiltonian};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimator::{accumulate, BatchSums, EstimatorResult, TrajectorySample};
use crate::model::{Observable, SpinModel};
use crate::nonherm::{build_dilation_with_shift, Dilation};
use crate::numerics::{norm_sqr, RngStream, StateVector, C64};
use crate::qem::{solve_qpd_with, JumpSampler, Mode, QpdDecomposition, SqemHook};

/// Everything a trajectory needs, resolved and validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: SpinModel,
    pub dilation: Dilation,
    pub ham: StochasticHamiltonian,
    pub qpd: QpdDecomposition,
    pub sampler: Option<JumpSampler>,
    pub noise: NoiseConfig,
    pub plan: SnapshotPlan,
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub psi0: StateVector,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = config.spin_model()?;
        let gamma = config.gamma(&model)?;
        let dilation = build_dilation_with_shift(&model, &gamma, config.noise.extra_shift)?;
        let ham = StochasticHamiltonian::from_dilation(&model, &dilation)?;
        let qpd = solve_qpd_with(&dilation, config.sqem.prune_threshold)?;
        let sampler = config.sqem.enabled.then(|| JumpSampler::new(qpd.clone()));
        let noise = config.noise_config()?;
        let plan = config.snapshots()?;
        Ok(Self {
            times: plan.times(&noise),
            observables: config.observables(&model)?,
            psi0: config.initial_state(&model)?,
            config: config.clone(),
            model,
            dilation,
            ham,
            qpd,
            sampler,
            noise,
            plan,
        })
    }

    /// Row label for results: the sQEM mode, or `channel` without mitigation.
    pub fn mode_label(&self) -> &'static str {
        if self.sampler.is_some() {
            self.config.sqem.mode.name()
        } else {
            "channel"
        }
    }

    /// `Λ(T)`, equal to 1 when mitigation is off.
    pub fn overhead(&self) -> f64 {
        if self.sampler.is_some() {
            self.qpd.overhead(self.noise.horizon)
        } else {
            1.0
        }
    }

    pub fn worker(&self) -> Result<Worker<'_>> {
        Worker::new(self)
    }

    pub fn n_snapshots(&self) -> usize {
        self.plan.len()
    }
}

/// Per-thread scratch: a stepper and the state buffer.
pub struct Worker<'a> {
    exp: &'a Experiment,
    stepper: Stepper<'a>,
    psi: Vec<C64>,
    obs: Vec<f64>,
    weights: Vec<f64>,
}

/// Extra per-trajectory facts used by diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryInfo {
    pub jumps: usize,
    pub accepted: bool,
    pub parity: i8,
}

impl<'a> Worker<'a> {
    fn new(exp: &'a Experiment) -> Result<Self> {
        Ok(Self {
            exp,
            stepper: Stepper::new(&exp.ham, exp.noise)?,
            psi: Vec::with_capacity(exp.psi0.len()),
            obs: Vec::new(),
            weights: Vec::new(),
        })
    }

    /// Run trajectory `index`. Shot mode records `D ∈ {0, 1}` and observables
    /// on the normalized state; weighted mode records `⟨ψ|O|ψ⟩` and `⟨ψ|ψ⟩`.
    pub fn run(&mut self, index: u64) -> (TrajectorySample, TrajectoryInfo) {
        let exp = self.exp;
        let mut rng = RngStream::new(exp.config.run.master_seed, index);
        self.psi.clear();
        self.psi.extend(exp.psi0.iter().copied());
        let no = exp.observables.len();
        self.obs.clear();
        self.obs.resize(exp.n_snapshots() * no, 0.0);
        self.weights.clear();
        self.weights.resize(exp.n_snapshots(), 0.0);
        let (obs, weights) = (&mut self.obs, &mut self.weights);

        let mut record = |snap: usize, psi: &[C64], parity: i8, accepted: bool, shot: bool| {
            let w = norm_sqr(psi);
            let (scale, d) = match (shot, accepted) {
                (true, true) => (1.0 / w, 1.0),
                (true, false) => (0.0, 0.0),
                (false, _) => (1.0, w),
            };
            let a = f64::from(parity);
            for (k, o) in exp.observables.iter().enumerate() {
                obs[snap * no + k] = a * scale * o.expectation(psi);
            }
            weights[snap] = a * d;
        };

        let info = match &exp.sampler {
            Some(sampler) => {
                let mode = exp.config.sqem.mode;
                let mut hook = SqemHook::new(sampler, mode);
                self.stepper.evolve(&mut self.psi, &exp.plan, &mut rng, &mut hook, |s, psi, h| {
                    record(s, psi, h.parity(), h.accepted(), mode == Mode::Shot)
                });
                TrajectoryInfo { jumps: hook.jumps(), accepted: hook.accepted(), parity: hook.parity() }
            }
            None => {
                self.stepper
                    .evolve(&mut self.psi, &exp.plan, &mut rng, &mut NoJumps, |s, psi, _| record(s, psi, 1, true, false));
                TrajectoryInfo { jumps: 0, accepted: true, parity: 1 }
            }
        };
        // `record` has already folded the running parity into each snapshot.
        let sample = TrajectorySample { parity: info.parity, num: self.obs.clone(), den: self.weights.clone() };
        (sample, info)
    }

    pub fn run_batch(&mut self, batch: usize) -> BatchSums {
        let exp = self.exp;
        let m = exp.config.run.batch_size as u64;
        let mut sums = BatchSums::new(exp.n_snapshots(), exp.observables.len());
        for i in batch as u64 * m..(batch as u64 + 1) * m {
            sums.add(&self.run(i).0);
        }
        sums
    }
}

/// Worker count: explicit override, then the config, then `NHSIM_WORKERS`,
/// then the machine's parallelism.
pub fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> usize {
    flag.or(config)
        .or_else(|| std::env::var("NHSIM_WORKERS").ok().and_then(|v| v.parse().ok()))
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

/// Run every batch on `workers` threads and return the sums in batch order.
pub fn run_batches(exp: &Experiment, workers: usize) -> Result<Vec<BatchSums>> {
    let n_batches = exp.config.run.batches;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<BatchSums>>> = Mutex::new(vec![None; n_batches]);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, n_batches.max(1)) {
            scope.spawn(|| {
                let mut worker = match exp.worker() {
                    Ok(w) => w,
                    Err(e) => {
                        *failure.lock().expect("poisoned") = Some(e);
                        return;
                    }
                };
                loop {
                    let b = next.fetch_add(1, Ordering::Relaxed);
                    if b >= n_batches {
                        break;
                    }
                    let sums = worker.run_batch(b);
                    slots.lock().expect("poisoned")[b] = Some(sums);
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(slots.into_inner().expect("poisoned").into_iter().map(|s| s.expect("every batch ran")).collect())
}

/// Audit trail written next to every result file.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub workers: usize,
    pub n_traj: u64,
    pub mode: &'static str,
    pub q0: f64,
    pub gamma_tot: f64,
    pub kappa: f64,
    #[serde(rename = "Lambda_T")]
    pub lambda_t: f64,
    pub n_qpd_entries: usize,
    pub e_shift_total: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub times: Vec<f64>,
    pub observables: Vec<String>,
    pub mode: &'static str,
    pub result: EstimatorResult,
    pub manifest: Manifest,
}

pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let exp = Experiment::new(config)?;
    let batches = run_batches(&exp, workers)?;
    let result = accumulate(&batches)?;
    let qpd = &exp.qpd;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: config.clone(),
        master_seed: config.run.master_seed,
        workers,
        n_traj: result.n_traj,
        mode: exp.mode_label(),
        q0: qpd.q0,
        gamma_tot: qpd.gamma_tot,
        kappa: qpd.kappa,
        lambda_t: qpd.overhead(exp.noise.horizon),
        n_qpd_entries: qpd.entries.len(),
        e_shift_total: exp.dilation.e_shift_total,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        times: exp.times.clone(),
        observables: config.observables.clone(),
        mode: exp.mode_label(),
        result,
        manifest,
    })
}
