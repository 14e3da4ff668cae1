//! Signed ratio estimation `Σ α O / Σ α D` with a delete-one-batch jackknife.

use serde::Serialize;

use crate::error::EstimatorError;
use crate::numerics::RngStream;

/// One trajectory's contributions at every snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub parity: i8,
    /// `X = α O`, laid out `[snapshot][observable]`.
    pub num: Vec<f64>,
    /// `Y = α D`, one per snapshot.
    pub den: Vec<f64>,
}

impl TrajectorySample {
    /// From unsigned `O` values (`[snapshot][observable]`) and weights `D`.
    pub fn new(parity: i8, observables: &[f64], weights: &[f64]) -> Self {
        let a = f64::from(parity);
        Self {
            parity,
            num: observables.iter().map(|o| a * o).collect(),
            den: weights.iter().map(|d| a * d).collect(),
        }
    }
}

/// Per-batch sums `N_b`, `D_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSums {
    pub n_snapshots: usize,
    pub n_observables: usize,
    pub n_traj: u64,
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl BatchSums {
    pub fn new(n_snapshots: usize, n_observables: usize) -> Self {
        Self {
            n_snapshots,
            n_observables,
            n_traj: 0,
            num: vec![0.0; n_snapshots * n_observables],
            den: vec![0.0; n_snapshots],
        }
    }

    pub fn add(&mut self, s: &TrajectorySample) {
        debug_assert_eq!(s.num.len(), self.num.len());
        for (acc, x) in self.num.iter_mut().zip(&s.num) {
            *acc += x;
        }
        for (acc, y) in self.den.iter_mut().zip(&s.den) {
            *acc += y;
        }
        self.n_traj += 1;
    }

    /// Add `α O` and `α D` for one snapshot directly.
    pub fn add_snapshot(&mut self, snapshot: usize, parity: f64, observables: impl IntoIterator<Item = f64>, weight: f64) {
        let base = snapshot * self.n_observables;
        for (k, o) in observables.into_iter().enumerate() {
            self.num[base + k] += parity * o;
        }
        self.den[snapshot] += parity * weight;
    }

    pub fn finish_trajectory(&mut self) {
        self.n_traj += 1;
    }

    pub fn num_at(&self, snapshot: usize, observable: usize) -> f64 {
        self.num[snapshot * self.n_observables + observable]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioEstimate {
    /// `None` when the signed denominator vanishes.
    pub estimate: Option<f64>,
    /// `None` with fewer than two batches or when a leave-one-out ratio is
    /// undefined.
    pub jackknife_se: Option<f64>,
    pub sum_num: f64,
    pub sum_den: f64,
}

/// Ratio of totals and its delete-one jackknife standard error.
pub fn ratio_jackknife(xs: &[f64], ys: &[f64]) -> Result<RatioEstimate, EstimatorError> {
    if xs.is_empty() {
        return Err(EstimatorError::Empty);
    }
    if xs.len() != ys.len() {
        return Err(EstimatorError::ShapeMismatch);
    }
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    if sy == 0.0 || !sy.is_finite() {
        return Err(EstimatorError::ZeroDenominator);
    }
    let b = xs.len();
    let jackknife_se = if b < 2 {
        None
    } else {
        let loo: Option<Vec<f64>> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let d = sy - y;
                (d != 0.0).then(|| (sx - x) / d)
            })
            .collect();
        loo.map(|v| {
            let mean = v.iter().sum::<f64>() / b as f64;
            let ss: f64 = v.iter().map(|m| (m - mean).powi(2)).sum();
            ((b as f64 - 1.0) / b as f64 * ss).sqrt()
        })
    };
    Ok(RatioEstimate { estimate: Some(sx / sy), jackknife_se, sum_num: sx, sum_den: sy })
}

/// Estimates on the `[snapshot][observable]` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub n_snapshots: usize,
    pub n_observables: usize,
    pub batches: usize,
    pub n_traj: u64,
    pub cells: Vec<RatioEstimate>,
}

impl EstimatorResult {
    pub fn cell(&self, snapshot: usize, observable: usize) -> &RatioEstimate {
        &self.cells[snapshot * self.n_observables + observable]
    }

    pub fn all_zero_denominator(&self) -> bool {
        !self.cells.is_empty() && self.cells.iter().all(|c| c.estimate.is_none())
    }
}

/// Combine batches in the given order. Cells whose signed denominator is zero
/// carry `estimate: None` rather than failing the whole grid.
pub fn accumulate(batches: &[BatchSums]) -> Result<EstimatorResult, EstimatorError> {
    let first = batches.first().ok_or(EstimatorError::Empty)?;
    let (ns, no) = (first.n_snapshots, first.n_observables);
    if batches.iter().any(|b| b.n_snapshots != ns || b.n_observables != no) {
        return Err(EstimatorError::ShapeMismatch);
    }
    let mut cells = Vec::with_capacity(ns * no);
    let mut xs = vec![0.0; batches.len()];
    let mut ys = vec![0.0; batches.len()];
    for s in 0..ns {
        for (y, b) in ys.iter_mut().zip(batches) {
            *y = b.den[s];
        }
        for o in 0..no {
            for (x, b) in xs.iter_mut().zip(batches) {
                *x = b.num_at(s, o);
            }
            let cell = match ratio_jackknife(&xs, &ys) {
                Ok(c) => c,
                Err(EstimatorError::ZeroDenominator) => RatioEstimate {
                    estimate: None,
                    jackknife_se: None,
                    sum_num: xs.iter().sum(),
                    sum_den: ys.iter().sum(),
                },
                Err(e) => return Err(e),
            };
            cells.push(cell);
        }
    }
    Ok(EstimatorResult {
        n_snapshots: ns,
        n_observables: no,
        batches: batches.len(),
        n_traj: batches.iter().map(|b| b.n_traj).sum(),
        cells,
    })
}

/// Group samples into `b` consecutive batches and estimate.
pub fn accumulate_samples(samples: &[TrajectorySample], b: usize) -> Result<EstimatorResult, EstimatorError> {
    let first = samples.first().ok_or(EstimatorError::Empty)?;
    if b == 0 || samples.len() % b != 0 {
        return Err(EstimatorError::ShapeMismatch);
    }
    let ns = first.den.len();
    let no = if ns == 0 { 0 } else { first.num.len() / ns };
    let per = samples.len() / b;
    let batches: Vec<BatchSums> = samples
        .chunks(per)
        .map(|chunk| {
            let mut acc = BatchSums::new(ns, no);
            chunk.iter().for_each(|s| acc.add(s));
            acc
        })
        .collect();
    accumulate(&batches)
}

/// Leading-order bias `(μ Var(Y) − Cov(X, Y)) / (N μ_Y²)` of `ΣX/ΣY`.
pub fn ratio_bias(mu: f64, var_y: f64, cov_xy: f64, mu_y: f64, n: f64) -> f64 {
    (mu * var_y - cov_xy) / (n * mu_y * mu_y)
}

/// Source of i.i.d. `(X, Y)` pairs with known `μ = E X / E Y`.
pub trait PairSource {
    fn draw(&mut self, rng: &mut RngStream) -> (f64, f64);
    fn mu(&self) -> f64;
}

/// `Y ~ Bernoulli(p)`, `X ~ N(m, s²)` independent: `μ = m/p`, bias `m(1−p)/(N p²)`.
#[derive(Debug, Clone, Copy)]
pub struct BernoulliGaussian {
    pub p: f64,
    pub m: f64,
    pub s: f64,
}

impl BernoulliGaussian {
    pub fn predicted_bias(&self, n: f64) -> f64 {
        ratio_bias(self.mu(), self.p * (1.0 - self.p), 0.0, self.p, n)
    }
}

impl PairSource for BernoulliGaussian {
    fn draw(&mut self, rng: &mut RngStream) -> (f64, f64) {
        let y = if rng.bernoulli(self.p) { 1.0 } else { 0.0 };
        (self.m + rng.gaussian(self.s), y)
    }

    fn mu(&self) -> f64 {
        self.m / self.p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasPoint {
    pub n: usize,
    pub bias: f64,
    pub bias_se: f64,
    pub rmse: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasFit {
    pub points: Vec<BiasPoint>,
    pub bias_slope: f64,
    pub rmse_slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Measure the bias and RMSE of `ΣX/ΣY` at each `N` over `reps` repetitions.
/// Repetitions with `ΣY = 0` are skipped and counted.
pub fn ratio_bias_check<S: PairSource>(source: &mut S, ns: &[usize], reps: usize, seed: u64) -> BiasFit {
    let mu = source.mu();
    let mut points = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let mut rng = RngStream::new(seed, i as u64);
        let (mut sum, mut sum2, mut used, mut skipped) = (0.0, 0.0, 0usize, 0usize);
        for _ in 0..reps {
            let (mut sx, mut sy) = (0.0, 0.0);
            for _ in 0..n {
                let (x, y) = source.draw(&mut rng);
                sx += x;
                sy += y;
            }
            if sy == 0.0 {
                skipped += 1;
                continue;
            }
            let err = sx / sy - mu;
            sum += err;
            sum2 += err * err;
            used += 1;
        }
        let u = used as f64;
        let bias = sum / u;
        let var = (sum2 / u - bias * bias).max(0.0);
        points.push(BiasPoint { n, bias, bias_se: (var / u).sqrt(), rmse: (sum2 / u).sqrt(), skipped });
    }
    let nx: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let bias_slope = log_log_slope(&nx, &points.iter().map(|p| p.bias.abs()).collect::<Vec<_>>());
    let rmse_slope = log_log_slope(&nx, &points.iter().map(|p| p.rmse).collect::<Vec<_>>());
    BiasFit { points, bias_slope, rmse_slope }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_batches() {
        let s = [TrajectorySample::new(1, &[0.5], &[1.0]), TrajectorySample::new(1, &[0.5], &[1.0])];
        let r = accumulate_samples(&s, 2).unwrap();
        let c = r.cell(0, 0);
        assert_eq!(c.estimate, Some(0.5));
        assert_eq!(c.jackknife_se, Some(0.0));
    }

    #[test]
    fn signed_cancellation_is_zero_denominator() {
        let s = [TrajectorySample::new(1, &[0.5], &[1.0]), TrajectorySample::new(-1, &[0.2], &[1.0])];
        let r = accumulate_samples(&s, 2).unwrap();
        assert_eq!(r.cell(0, 0).estimate, None);
        assert!(r.all_zero_denominator());
        assert_eq!(ratio_jackknife(&[0.5, -0.2], &[1.0, -1.0]), Err(EstimatorError::ZeroDenominator));
    }

    #[test]
    fn single_batch_has_undefined_se() {
        let r = ratio_jackknife(&[3.0], &[2.0]).unwrap();
        assert_eq!(r.estimate, Some(1.5));
        assert_eq!(r.jackknife_se, None);
    }

    #[test]
    fn jackknife_tracks_true_sampling_spread() {
        let mut src = BernoulliGaussian { p: 0.6, m: 0.4, s: 0.3 };
        let (b, per, reps) = (100, 50, 100);
        let mut ests = Vec::new();
        let mut ses = Vec::new();
        for r in 0..reps {
            let mut rng = RngStream::new(123, r);
            let (mut xs, mut ys) = (vec![0.0; b], vec![0.0; b]);
            for k in 0..b {
                for _ in 0..per {
                    let (x, y) = src.draw(&mut rng);
                    xs[k] += x;
                    ys[k] += y;
                }
            }
            let est = ratio_jackknife(&xs, &ys).unwrap();
            ests.push(est.estimate.unwrap());
            ses.push(est.jackknife_se.unwrap());
        }
        let mean = ests.iter().sum::<f64>() / reps as f64;
        let truth = (ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        let avg_se = ses.iter().sum::<f64>() / reps as f64;
        assert!((avg_se / truth - 1.0).abs() < 0.3, "jackknife {avg_se} vs truth {truth}");
    }

    #[test]
    fn rescaling_is_invariant() {
        let xs = [0.3, -0.2, 0.5, 0.1];
        let ys = [1.0, 0.8, -0.1, 0.9];
        let a = ratio_jackknife(&xs, &ys).unwrap();
        let k = 537.25;
        let b = ratio_jackknife(&xs.map(|x| x * k), &ys.map(|y| y * k)).unwrap();
        assert!((a.estimate.unwrap() - b.estimate.unwrap()).abs() < 1e-12);
        assert!((a.jackknife_se.unwrap() - b.jackknife_se.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn merge_order_only_reassociates() {
        let mut rng = RngStream::new(4, 4);
        let batches: Vec<BatchSums> = (0..20)
            .map(|_| {
                let mut b = BatchSums::new(2, 1);
                for _ in 0..10 {
                    let a = if rng.bernoulli(0.7) { 1 } else { -1 };
                    b.add(&TrajectorySample::new(a, &[rng.uniform(), rng.uniform()], &[1.0, rng.uniform()]));
                }
                b
            })
            .collect();
        let fwd = accumulate(&batches).unwrap();
        let mut rev = batches.clone();
        rev.reverse();
        let bwd = accumulate(&rev).unwrap();
        for (a, b) in fwd.cells.iter().zip(&bwd.cells) {
            assert!((a.estimate.unwrap() - b.estimate.unwrap()).abs() < 1e-12);
            assert!((a.jackknife_se.unwrap() - b.jackknife_se.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_pairs_have_no_bias() {
        struct Same;
        impl PairSource for Same {
            fn draw(&mut self, rng: &mut RngStream) -> (f64, f64) {
                let v = 0.5 + rng.uniform();
                (v, v)
            }
            fn mu(&self) -> f64 {
                1.0
            }
        }
        let fit = ratio_bias_check(&mut Same, &[4, 16, 64], 200, 1);
        for p in &fit.points {
            assert!(p.bias.abs() < 1e-14);
        }
    }

    #[test]
    fn bias_formula_at_population_moments() {
        // Direct evaluation of the leading-order expression.
        let b = ratio_bias(2.0, 0.25, 0.1, 0.5, 10.0);
        assert!((b - (2.0 * 0.25 - 0.1) / (10.0 * 0.25)).abs() < 1e-15);
        let src = BernoulliGaussian { p: 0.5, m: 1.0, s: 0.5 };
        assert!((src.predicted_bias(100.0) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn log_log_slope_recovers_power() {
        let xs = [1.0, 10.0, 100.0];
        let ys = xs.map(|x: f64| 3.0 * x.powf(-0.7));
        assert!((log_log_slope(&xs, &ys) + 0.7).abs() < 1e-12);
    }

    #[test]
    fn se_shrinks_with_sample_size() {
        let mut src = BernoulliGaussian { p: 0.7, m: 0.2, s: 1.0 };
        let mut last = f64::INFINITY;
        for per in [10, 100, 1000] {
            let mut rng = RngStream::new(8, per as u64);
            let (mut xs, mut ys) = (vec![0.0; 20], vec![0.0; 20]);
            for k in 0..20 {
                for _ in 0..per {
                    let (x, y) = src.draw(&mut rng);
                    xs[k] += x;
                    ys[k] += y;
                }
            }
            let se = ratio_jackknife(&xs, &ys).unwrap().jackknife_se.unwrap();
            assert!(se < last);
            last = se;
        }
    }
}
