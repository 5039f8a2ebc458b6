use serde::{Deserialize, Serialize};

use super::tree::{sigmoid, ClassWeight};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default)]
    pub l2: f64,
    #[serde(default)]
    pub class_weight: ClassWeight,
}

fn default_lr() -> f64 {
    0.1
}

fn default_iters() -> usize {
    500
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { lr: default_lr(), iters: default_iters(), l2: 0.0, class_weight: ClassWeight::None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Penalized mean negative log-likelihood after each step.
    pub training_log: Vec<f64>,
}

impl LogisticModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.bias + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>())
    }

    pub fn predict_proba(&self, rows: &Matrix) -> Vec<f64> {
        rows.rows().map(|r| self.predict_row(r)).collect()
    }
}

/// `log(sigmoid(z))` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Penalized log-likelihood
/// `J = (1/n) sum_i w_i [y_i ln h + (1 - y_i) ln(1 - h)] - (l2/2) |theta|^2`
/// and its gradient `(d/dtheta, d/dbias)`. The bias is not penalized.
pub fn objective_and_gradient(
    x: &Matrix,
    y: &[u8],
    sample_weight: &[f64],
    theta: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut j = 0.0;
    let mut g = vec![0.0; theta.len()];
    let mut gb = 0.0;
    for (i, row) in x.rows().enumerate() {
        let z = bias + theta.iter().zip(row).map(|(t, v)| t * v).sum::<f64>();
        let yi = y[i] as f64;
        let w = sample_weight[i];
        j += w * (yi * log_sigmoid(z) + (1.0 - yi) * log_sigmoid(-z));
        let r = w * (yi - sigmoid(z));
        for (gk, v) in g.iter_mut().zip(row) {
            *gk += r * v;
        }
        gb += r;
    }
    j /= n;
    j -= 0.5 * l2 * theta.iter().map(|t| t * t).sum::<f64>();
    for (gk, t) in g.iter_mut().zip(theta) {
        *gk = *gk / n - l2 * t;
    }
    (j, g, gb / n)
}

/// Upper bound on the gradient's Lipschitz constant:
/// `max(w) * |[X 1]|_F^2 / (4n) + l2`.
pub fn lipschitz_bound(x: &Matrix, sample_weight: &[f64], l2: f64) -> f64 {
    let n = x.n_rows().max(1) as f64;
    let frob: f64 = x.as_slice().iter().map(|v| v * v).sum::<f64>() + x.n_rows() as f64;
    let w_max = sample_weight.iter().cloned().fold(0.0, f64::max);
    w_max * frob / (4.0 * n) + l2
}

/// Full-batch gradient ascent on the penalized log-likelihood.
pub fn fit_logistic(d: &Dataset, p: &LogisticParams) -> Result<LogisticModel> {
    if d.values().has_non_finite() {
        return Err(Error::Training("feature matrix contains missing or non-finite values".into()));
    }
    if d.n_rows() == 0 {
        return Err(Error::Training("cannot fit logistic regression on an empty dataset".into()));
    }
    if !(p.lr > 0.0) || !(p.l2 >= 0.0) {
        return Err(Error::Config("logistic lr must be positive and l2 non-negative".into()));
    }
    let w = p.class_weight.row_weights(d.target());
    let mut theta = vec![0.0; d.n_cols()];
    let mut bias = 0.0;
    let mut log = Vec::with_capacity(p.iters);
    for step in 0..=p.iters {
        let (j, g, gb) = objective_and_gradient(d.values(), d.target(), &w, &theta, bias, p.l2);
        if !j.is_finite() {
            return Err(Error::Training("logistic objective diverged".into()));
        }
        if step > 0 {
            log.push(-j);
        }
        if step == p.iters {
            break;
        }
        for (t, gk) in theta.iter_mut().zip(&g) {
            *t += p.lr * gk;
        }
        bias += p.lr * gb;
    }
    Ok(LogisticModel { weights: theta, bias, training_log: log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn zero_model_predicts_half() {
        let m = LogisticModel { weights: vec![0.0; 3], bias: 0.0, training_log: vec![] };
        assert_eq!(m.predict_row(&[1.0, -4.0, 9.0]), 0.5);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut r = crate::rng::stream(1, "test", 0);
        for case in 0..20 {
            let (n, p) = (15, 4);
            let data: Vec<f64> = (0..n * p).map(|_| r.gen_range(-2.0..2.0)).collect();
            let x = Matrix::new(n, p, data).unwrap();
            let y: Vec<u8> = (0..n).map(|_| u8::from(r.gen::<bool>())).collect();
            let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..2.0)).collect();
            let theta: Vec<f64> = (0..p).map(|_| r.gen_range(-1.0..1.0)).collect();
            let bias = r.gen_range(-1.0..1.0);
            let l2 = if case % 2 == 0 { 0.0 } else { 0.1 };
            let (_, g, gb) = objective_and_gradient(&x, &y, &w, &theta, bias, l2);
            let h = 1e-5;
            for k in 0..=p {
                let (mut tp, mut tm) = (theta.clone(), theta.clone());
                let (mut bp, mut bm) = (bias, bias);
                if k < p {
                    tp[k] += h;
                    tm[k] -= h;
                } else {
                    bp += h;
                    bm -= h;
                }
                let fd = (objective_and_gradient(&x, &y, &w, &tp, bp, l2).0
                    - objective_and_gradient(&x, &y, &w, &tm, bm, l2).0)
                    / (2.0 * h);
                let an = if k < p { g[k] } else { gb };
                assert!((fd - an).abs() / an.abs().max(1e-8) < 1e-5, "case {case} k {k}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn separable_line_is_learned() {
        let rows: Vec<Vec<f64>> = (-10..=10).filter(|&i| i != 0).map(|i| vec![i as f64 / 10.0]).collect();
        let target: Vec<u8> = (-10..=10).filter(|&i| i != 0).map(|i| u8::from(i > 0)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let m = fit_logistic(&d, &LogisticParams { lr: 0.1, iters: 500, ..LogisticParams::default() }).unwrap();
        let acc = d.values().rows().zip(d.target()).filter(|(r, &t)| u8::from(m.predict_row(r) >= 0.5) == t).count();
        assert_eq!(acc, d.n_rows());
    }

    #[test]
    fn objective_monotone_below_lipschitz_step() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let target: Vec<u8> = (0..50).map(|i| u8::from((i as f64 * 0.37).sin() + 0.3 * (i % 3) as f64 > 0.2)).collect();
        let d = Dataset::from_rows(&rows, &target).unwrap();
        let w = vec![1.0; 50];
        let lr = 1.0 / lipschitz_bound(d.values(), &w, 0.1);
        let m = fit_logistic(&d, &LogisticParams { lr, iters: 200, l2: 0.1, class_weight: ClassWeight::None }).unwrap();
        for pair in m.training_log.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }
    }

    #[test]
    fn non_finite_input_is_training_error() {
        let d = Dataset::from_rows(&[vec![f64::NAN], vec![1.0]], &[0, 1]).unwrap();
        assert!(matches!(fit_logistic(&d, &LogisticParams::default()), Err(Error::Training(_))));
    }
}
