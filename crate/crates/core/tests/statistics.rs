//! Monte Carlo checks of the stochastic layers against exact oracles.

use nhsim::channel::{NoJumps, NoiseConfig, NoiseTerm, Scheme, SnapshotPlan, StochasticHamiltonian, Stepper};
use nhsim::config::ExperimentConfig;
use nhsim::model::LocalTerm;
use nhsim::numerics::{c, outer, pauli_x, pauli_z, trace_norm, ComplexMatrix, RngStream, C64};
use nhsim::qem::{Mode, SqemHook};
use nhsim::reference::{evolve_gksl, evolve_nh_generator, pure_density};
use nhsim::runner::{run_experiment, Experiment};

fn config(model: &str, t: f64, dt: f64, sqem: bool, mode: &str, batches: usize, batch_size: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
        "model": {model},
        "noise": {{"gamma": 1.0, "dt": {dt}, "scheme": "ST_EO"}},
        "sqem": {{"enabled": {sqem}, "mode": "{mode}"}},
        "run": {{"T": {t}, "batch_size": {batch_size}, "batches": {batches}, "master_seed": 21}},
        "observables": ["sz_1", "szsz_0_1"]
    }}"#
    ))
    .unwrap()
}

const FIG2: &str = r#"{"L": 2, "J": 1.0, "g": 0.1, "U": 2.0, "h": [-0.8071, 0.3890], "initial_state": "plus_all"}"#;
const OTHER: &str = r#"{"L": 2, "J": 0.7, "g": 0.4, "U": -0.5, "h": [0.3, 1.1], "initial_state": "+0"}"#;

#[test]
fn gaussian_absolute_moments() {
    let mut rng = RngStream::new(1, 0);
    let n = 1_000_000;
    let (mut m, mut a1, mut a3) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let x = rng.gaussian(1.0);
        m += x;
        a1 += x.abs();
        a3 += x.abs().powi(3);
    }
    let n = n as f64;
    assert!((m / n).abs() <= 5.0 / n.sqrt());
    let e1 = (2.0 / std::f64::consts::PI).sqrt();
    assert!((a1 / n / e1 - 1.0).abs() < 0.01);
    let e3 = 2.0 * 2f64.sqrt() / std::f64::consts::PI.sqrt();
    assert!((a3 / n / e3 - 1.0).abs() < 0.02);
}

#[test]
fn single_qubit_dephasing_decays_at_four_gamma() {
    let ham = StochasticHamiltonian::new(
        1,
        vec![LocalTerm::new(0, ComplexMatrix::zeros(2, 2))],
        vec![NoiseTerm { term: LocalTerm::new(0, pauli_x()), gamma: 1.0 }],
    )
    .unwrap();
    let cfg = NoiseConfig::new(1e-2, Scheme::StrangEvenOdd, 0.5).unwrap();
    let plan = SnapshotPlan::every(10, &cfg).unwrap();
    let times = plan.times(&cfg);
    let mut stepper = Stepper::new(&ham, cfg).unwrap();
    let z = pauli_z();
    let n = 100_000;
    let mut s1 = vec![0.0; times.len()];
    let mut s2 = vec![0.0; times.len()];
    let mut psi = Vec::new();
    for i in 0..n {
        let mut rng = RngStream::new(4, i);
        psi.clear();
        psi.extend([c(1.0, 0.0), c(0.0, 0.0)]);
        stepper.evolve(&mut psi, &plan, &mut rng, &mut NoJumps, |k, p, _| {
            let v = nhsim::numerics::expectation(&z, p);
            s1[k] += v;
            s2[k] += v * v;
        });
    }
    for (k, &t) in times.iter().enumerate() {
        let mean = s1[k] / n as f64;
        let se = ((s2[k] / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = (-4.0 * t).exp();
        assert!((mean - exact).abs() <= 3.0 * se.max(1e-15), "t={t}: {mean} vs {exact} (se {se})");
    }
}

/// Mean of `ψψ†` over `n` unmitigated trajectories and the summed entrywise
/// variance.
fn mean_density(exp: &Experiment, n: u64) -> (ComplexMatrix, f64) {
    let d = exp.psi0.len();
    let mut stepper = Stepper::new(&exp.ham, exp.noise).unwrap();
    let mut s1 = ComplexMatrix::zeros(d, d);
    let mut s2 = 0.0;
    let mut psi: Vec<C64> = Vec::new();
    for i in 0..n {
        let mut rng = RngStream::new(exp.config.run.master_seed, i);
        psi.clear();
        psi.extend(exp.psi0.iter().copied());
        let mut rho = ComplexMatrix::zeros(d, d);
        stepper.evolve(&mut psi, &exp.plan, &mut rng, &mut NoJumps, |_, p, _| rho = outer(p));
        s2 += rho.iter().map(|z| z.norm_sqr()).sum::<f64>();
        s1 += rho;
    }
    let mean = s1 / c(n as f64, 0.0);
    let var_sum = s2 / n as f64 - mean.iter().map(|z| z.norm_sqr()).sum::<f64>();
    (mean, var_sum)
}

#[test]
fn noise_averaged_state_solves_the_master_equation() {
    for model in [FIG2, OTHER] {
        let cfg = config(model, 0.5, 1e-3, false, "weighted", 1, 1);
        let exp = Experiment::new(&cfg).unwrap();
        let n = 100_000;
        let (mean, var_sum) = mean_density(&exp, n);
        let exact = evolve_gksl(&pure_density(&exp.psi0), &exp.dilation, 0.5).unwrap();
        let dist = trace_norm(&(mean - exact)).unwrap();
        // ‖A‖₁ ≤ √d ‖A‖_F turns the entrywise spread into a trace-norm SE.
        let se = (exp.psi0.len() as f64 * var_sum / n as f64).sqrt();
        assert!(dist <= (5e-3f64).max(4.0 * se), "{model}: {dist} (se {se})");
    }
}

#[test]
fn signed_jumps_reproduce_the_no_jump_generator() {
    let cfg = config(FIG2, 0.3, 1e-3, true, "weighted", 1, 1);
    let exp = Experiment::new(&cfg).unwrap();
    let d = exp.psi0.len();
    let n = 100_000u64;
    let mut stepper = Stepper::new(&exp.ham, exp.noise).unwrap();
    let sampler = exp.sampler.as_ref().unwrap();
    let lambda = exp.overhead();
    let (mut s1, mut s2) = (ComplexMatrix::zeros(d, d), ComplexMatrix::zeros(d, d));
    let mut psi: Vec<C64> = Vec::new();
    for i in 0..n {
        let mut rng = RngStream::new(5, i);
        psi.clear();
        psi.extend(exp.psi0.iter().copied());
        let mut hook = SqemHook::new(sampler, Mode::Weighted);
        let mut rho = ComplexMatrix::zeros(d, d);
        stepper.evolve(&mut psi, &exp.plan, &mut rng, &mut hook, |_, p, h| {
            rho = outer(p) * c(lambda * f64::from(h.parity()), 0.0)
        });
        s2 += rho.map(|z| c(z.re * z.re, z.im * z.im));
        s1 += rho;
    }
    let exact = evolve_nh_generator(&pure_density(&exp.psi0), &exp.dilation, 0.3).unwrap();
    let nf = n as f64;
    for (k, (s, q)) in s1.iter().zip(s2.iter()).enumerate() {
        let mean = s / nf;
        let se_re = ((q.re / nf - mean.re * mean.re) / nf).sqrt();
        let se_im = ((q.im / nf - mean.im * mean.im) / nf).sqrt();
        let want = exact.as_slice()[k];
        assert!((mean.re - want.re).abs() <= 4.0 * se_re + 1e-12, "entry {k} re: {} vs {}", mean.re, want.re);
        assert!((mean.im - want.im).abs() <= 4.0 * se_im + 1e-12, "entry {k} im: {} vs {}", mean.im, want.im);
    }
}

#[test]
fn parity_is_the_product_of_event_signs() {
    let cfg = config(FIG2, 1.5, 1e-2, true, "weighted", 1, 1);
    let exp = Experiment::new(&cfg).unwrap();
    let sampler = exp.sampler.as_ref().unwrap();
    let mut stepper = Stepper::new(&exp.ham, exp.noise).unwrap();
    let mut psi: Vec<C64> = Vec::new();
    let mut negative = 0;
    for i in 0..1000 {
        let mut rng = RngStream::new(6, i);
        psi.clear();
        psi.extend(exp.psi0.iter().copied());
        let mut hook = SqemHook::new(sampler, Mode::Weighted).recording();
        stepper.evolve(&mut psi, &exp.plan, &mut rng, &mut hook, |_, _, _| {});
        let product: i8 = hook.events().iter().map(|e| e.parity).product();
        assert_eq!(product, hook.parity());
        assert_eq!(hook.events().len(), hook.jumps());
        assert!(hook.events().windows(2).all(|w| w[0].time < w[1].time));
        negative += usize::from(hook.parity() < 0);
    }
    assert!(negative > 0);
}

#[test]
fn marks_follow_the_rate_table() {
    let cfg = config(FIG2, 1.5, 1e-3, true, "weighted", 1, 1);
    let exp = Experiment::new(&cfg).unwrap();
    let sampler = exp.sampler.as_ref().unwrap();
    let entries = &sampler.qpd().entries;
    let mut counts = vec![0u64; entries.len()];
    let mut rng = RngStream::new(7, 0);
    let n = 100_000;
    for _ in 0..n {
        let e = sampler.sample_jump(&mut rng, 0.0, f64::INFINITY).unwrap();
        counts[e.entry] += 1;
        assert_eq!(e.parity, entries[e.entry].parity());
    }
    for (e, &k) in entries.iter().zip(&counts) {
        let p = e.rate() / sampler.gamma_tot();
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((k as f64 - n as f64 * p).abs() <= 4.0 * sigma, "pair {}: {k} vs {}", e.pair, n as f64 * p);
    }
}

#[test]
fn shot_and_weighted_modes_agree() {
    let weighted = run_experiment(&config(FIG2, 0.5, 5e-3, true, "weighted", 40, 500), 1).unwrap();
    let shot = run_experiment(&config(FIG2, 0.5, 5e-3, true, "shot", 40, 500), 1).unwrap();
    for o in 0..2 {
        let (a, b) = (weighted.result.cell(0, o), shot.result.cell(0, o));
        let diff = a.estimate.unwrap() - b.estimate.unwrap();
        let se = a.jackknife_se.unwrap().hypot(b.jackknife_se.unwrap());
        assert!(diff.abs() <= 4.0 * se, "observable {o}: {diff} vs se {se}");
    }
}
