//! Policy distributions with closed-form gradients.
//!
//! All arithmetic here is `f64`; networks hand over their outputs row by row.

use std::f64::consts::PI;

use crate::{Error, Result, Rng};

/// Clamp range applied to the squashed Gaussian's log standard deviation.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Softmax distribution over `A` actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidArgument("categorical over zero actions".into()));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("categorical logits".into()));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        Ok(Self {
            log_probs: logits.iter().map(|&l| l - lse).collect(),
        })
    }

    pub fn num_actions(&self) -> usize {
        self.log_probs.len()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> f64 {
        -self
            .log_probs
            .iter()
            .map(|&l| {
                let p = l.exp();
                if p == 0.0 {
                    0.0
                } else {
                    p * l
                }
            })
            .sum::<f64>()
    }

    /// Inverse-CDF sample from one uniform draw. Never returns a
    /// zero-probability action.
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u = rng.uniform();
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (a, &l) in self.log_probs.iter().enumerate() {
            let p = l.exp();
            if p > 0.0 {
                last_positive = a;
                cum += p;
                if u < cum {
                    return a;
                }
            }
        }
        last_positive
    }

    /// Lowest-index argmax.
    pub fn mode(&self) -> usize {
        argmax(&self.log_probs)
    }

    /// `∂ log p(action) / ∂ logits = onehot(action) − p`.
    pub fn grad_log_prob(&self, action: usize) -> Vec<f64> {
        let mut g: Vec<f64> = self.log_probs.iter().map(|l| -l.exp()).collect();
        g[action] += 1.0;
        g
    }

    /// `∂H / ∂ logit_i = −p_i (log p_i + H)`.
    pub fn grad_entropy(&self) -> Vec<f64> {
        let h = self.entropy();
        self.log_probs
            .iter()
            .map(|&l| {
                let p = l.exp();
                if p == 0.0 {
                    0.0
                } else {
                    -p * (l + h)
                }
            })
            .collect()
    }
}

/// Lowest index among exact ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Independent normal per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::shape("DiagGaussian", mean.len(), log_std.len()));
        }
        if mean.iter().chain(&log_std).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gaussian parameters".into()));
        }
        Ok(Self { mean, log_std })
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(&m, &s)| m + s.exp() * rng.normal())
            .collect()
    }

    pub fn log_prob(&self, action: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(action)
            .map(|((&m, &s), &a)| {
                let z = (a - m) / s.exp();
                -0.5 * z * z - s - HALF_LN_2PI
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|&s| 0.5 + HALF_LN_2PI + s).sum()
    }

    /// `(∂ log p / ∂ mean, ∂ log p / ∂ log_std)` at `action`.
    pub fn grad_log_prob(&self, action: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dm = Vec::with_capacity(self.mean.len());
        let mut ds = Vec::with_capacity(self.mean.len());
        for ((&m, &s), &a) in self.mean.iter().zip(&self.log_std).zip(action) {
            let var = (2.0 * s).exp();
            let d = a - m;
            dm.push(d / var);
            ds.push(d * d / var - 1.0);
        }
        (dm, ds)
    }
}

/// Reparameterized draw from a tanh-squashed Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct TanhGaussianSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// Standard-normal noise used for the draw.
    pub noise: Vec<f64>,
    /// Log-std after clamping.
    pub log_std: Vec<f64>,
    /// Per-dimension flag: the raw log-std lay inside the clamp range.
    pub log_std_active: Vec<bool>,
}

/// Samples `u ~ N(mean, exp(log_std))`, returns `tanh(u)` and
/// `Σ [log N(u) − ln(1 − tanh(u)² + 1e-6)]`. `log_std` is clamped to
/// `[LOG_STD_MIN, LOG_STD_MAX]` first.
pub fn tanh_gaussian_sample_logprob(mean: &[f64], log_std: &[f64], rng: &mut Rng) -> TanhGaussianSample {
    let noise: Vec<f64> = mean.iter().map(|_| rng.normal()).collect();
    tanh_gaussian_with_noise(mean, log_std, noise)
}

/// Same as [`tanh_gaussian_sample_logprob`] with the noise supplied.
pub fn tanh_gaussian_with_noise(mean: &[f64], log_std: &[f64], noise: Vec<f64>) -> TanhGaussianSample {
    assert_eq!(mean.len(), log_std.len());
    assert_eq!(mean.len(), noise.len());
    let mut action = Vec::with_capacity(mean.len());
    let mut clamped = Vec::with_capacity(mean.len());
    let mut active = Vec::with_capacity(mean.len());
    let mut log_prob = 0.0;
    for ((&m, &s_raw), &e) in mean.iter().zip(log_std).zip(&noise) {
        let s = s_raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
        let u = m + s.exp() * e;
        let a = u.tanh();
        log_prob += -0.5 * e * e - s - HALF_LN_2PI - (1.0 - a * a + 1e-6).ln();
        action.push(a);
        clamped.push(s);
        active.push((LOG_STD_MIN..=LOG_STD_MAX).contains(&s_raw));
    }
    TanhGaussianSample {
        action,
        log_prob,
        noise,
        log_std: clamped,
        log_std_active: active,
    }
}

impl TanhGaussianSample {
    /// Backpropagates upstream gradients `∂L/∂action` and `∂L/∂log_prob`
    /// through the reparameterized draw, returning `(∂L/∂mean, ∂L/∂log_std)`
    /// with respect to the *unclamped* log-std input.
    pub fn backward(&self, grad_action: &[f64], grad_log_prob: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.action.len();
        let mut dm = Vec::with_capacity(d);
        let mut ds = Vec::with_capacity(d);
        for i in 0..d {
            let a = self.action[i];
            let one_minus = 1.0 - a * a;
            let du = grad_action[i] * one_minus + grad_log_prob * 2.0 * a * one_minus / (one_minus + 1e-6);
            dm.push(du);
            if self.log_std_active[i] {
                ds.push(du * self.log_std[i].exp() * self.noise[i] - grad_log_prob);
            } else {
                ds.push(0.0);
            }
        }
        (dm, ds)
    }
}

/// Log-density of a standard normal, exposed for oracles.
pub fn std_normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let c = Categorical::from_logits(&[0.3; 5]).unwrap();
        assert!((c.entropy() - 5f64.ln()).abs() < 1e-12);
        for p in c.probs() {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let c = Categorical::from_logits(&[1000.0, 0.0]).unwrap();
        let p = c.probs();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-300);
        assert!(c.entropy().is_finite());
    }

    #[test]
    fn empirical_frequency_within_three_sigma() {
        let c = Categorical::from_logits(&[0.0, 3f64.ln()]).unwrap();
        let mut rng = Rng::new(17);
        let n = 100_000;
        let hits = (0..n).filter(|_| c.sample(&mut rng) == 1).count() as f64;
        let sigma = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((hits / n as f64 - 0.75).abs() < 3.0 * sigma);
    }

    #[test]
    fn categorical_grads_match_finite_differences() {
        let logits = [0.2, -1.0, 0.7, 1.5];
        let c = Categorical::from_logits(&logits).unwrap();
        let gl = c.grad_log_prob(2);
        let ge = c.grad_entropy();
        let h = 1e-6;
        for i in 0..4 {
            let mut up = logits;
            let mut dn = logits;
            up[i] += h;
            dn[i] -= h;
            let cu = Categorical::from_logits(&up).unwrap();
            let cd = Categorical::from_logits(&dn).unwrap();
            let fd_l = (cu.log_prob(2) - cd.log_prob(2)) / (2.0 * h);
            let fd_e = (cu.entropy() - cd.entropy()) / (2.0 * h);
            assert!((fd_l - gl[i]).abs() < 1e-8);
            assert!((fd_e - ge[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
    }

    #[test]
    fn gaussian_closed_forms() {
        let g = DiagGaussian::new(vec![0.5, -1.0, 2.0], vec![0.0; 3]).unwrap();
        let lp = g.log_prob(&[0.5, -1.0, 2.0]);
        assert!((lp + 1.5 * (2.0 * PI).ln()).abs() < 1e-12);
        let g1 = DiagGaussian::new(vec![0.0], vec![0.0]).unwrap();
        assert!((g1.entropy() - 0.5 * (1.0 + (2.0 * PI).ln())).abs() < 1e-12);
        assert!((g1.entropy() - 1.41894).abs() < 1e-5);
    }

    #[test]
    fn gaussian_sample_mean_clt() {
        let g = DiagGaussian::new(vec![1.5], vec![0.3]).unwrap();
        let mut rng = Rng::new(3);
        let n = 100_000;
        let mean = (0..n).map(|_| g.sample(&mut rng)[0]).sum::<f64>() / n as f64;
        let sigma = 0.3f64.exp();
        assert!((mean - 1.5).abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn gaussian_grads_match_finite_differences() {
        let mean = vec![0.1, -0.4];
        let log_std = vec![-0.3, 0.2];
        let a = [0.5, -1.2];
        let g = DiagGaussian::new(mean.clone(), log_std.clone()).unwrap();
        let (dm, ds) = g.grad_log_prob(&a);
        let h = 1e-6;
        for i in 0..2 {
            let mut mu = mean.clone();
            mu[i] += h;
            let mut md = mean.clone();
            md[i] -= h;
            let fd = (DiagGaussian::new(mu, log_std.clone()).unwrap().log_prob(&a)
                - DiagGaussian::new(md, log_std.clone()).unwrap().log_prob(&a))
                / (2.0 * h);
            assert!((fd - dm[i]).abs() < 1e-7);
            let mut su = log_std.clone();
            su[i] += h;
            let mut sd = log_std.clone();
            sd[i] -= h;
            let fd = (DiagGaussian::new(mean.clone(), su).unwrap().log_prob(&a)
                - DiagGaussian::new(mean.clone(), sd).unwrap().log_prob(&a))
                / (2.0 * h);
            assert!((fd - ds[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn squashed_action_in_open_box() {
        let mut rng = Rng::new(1);
        for _ in 0..100 {
            let s = tanh_gaussian_sample_logprob(&[3.0, -3.0], &[1.0, 1.0], &mut rng);
            assert!(s.action.iter().all(|a| a.abs() < 1.0));
        }
        assert!(3f64.tanh().abs() < 1.0);
    }

    #[test]
    fn tiny_std_limit() {
        let mut rng = Rng::new(2);
        let s = tanh_gaussian_sample_logprob(&[0.0], &[-9.0], &mut rng);
        assert!(s.action[0].abs() < 0.05);
        assert_eq!(s.log_std[0], -5.0);
        let correction = (1.0 - s.action[0] * s.action[0] + 1e-6).ln();
        assert!(correction.abs() < 1e-4);
    }

    /// Density of tanh(u) via a finite-difference CDF:
    /// P(tanh(u) <= a) = Φ((atanh(a) − μ)/σ).
    #[test]
    fn log_prob_matches_change_of_variables() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let phi = Normal::new(0.0, 1.0).unwrap();
        let mut rng = Rng::new(21);
        let mut checked = 0;
        for _ in 0..40 {
            let mu = rng.uniform_range(-1.0, 1.0);
            let ls = rng.uniform_range(-1.0, 0.5);
            let s = tanh_gaussian_sample_logprob(&[mu], &[ls], &mut rng);
            let a = s.action[0];
            if a.abs() > 0.99 {
                continue;
            }
            let sigma = ls.exp();
            let h = 1e-5;
            let f = |x: f64| phi.cdf((x.atanh() - mu) / sigma);
            let density = (f(a + h) - f(a - h)) / (2.0 * h);
            assert!(
                (density.ln() - s.log_prob).abs() < 1e-3,
                "{} vs {}",
                density.ln(),
                s.log_prob
            );
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn squashed_backward_matches_finite_differences() {
        let mean = [0.3, -0.6];
        let log_std = [-0.5, 0.1];
        let noise = vec![0.7, -1.1];
        let ga = [0.4, -1.3];
        let glp = 0.25;
        let loss = |m: &[f64], s: &[f64]| {
            let smp = tanh_gaussian_with_noise(m, s, noise.clone());
            smp.action.iter().zip(&ga).map(|(a, g)| a * g).sum::<f64>() + glp * smp.log_prob
        };
        let smp = tanh_gaussian_with_noise(&mean, &log_std, noise.clone());
        let (dm, ds) = smp.backward(&ga, glp);
        let h = 1e-6;
        for i in 0..2 {
            let mut up = mean;
            up[i] += h;
            let mut dn = mean;
            dn[i] -= h;
            let fd = (loss(&up, &log_std) - loss(&dn, &log_std)) / (2.0 * h);
            assert!((fd - dm[i]).abs() < 1e-6);
            let mut up = log_std;
            up[i] += h;
            let mut dn = log_std;
            dn[i] -= h;
            let fd = (loss(&mean, &up) - loss(&mean, &dn)) / (2.0 * h);
            assert!((fd - ds[i]).abs() < 1e-6);
        }
    }
}
