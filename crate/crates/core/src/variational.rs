//! Variational machinery: reparameterized sampling of per-frame Gaussian
//! posteriors, the closed-form KL divergence to the standard-normal prior,
//! and the temporal-smoothness penalty on latent mean tracks.
//!
//! Posterior scales are stored as log standard deviations, so the covariance
//! is diag(exp(log_std))^2 by construction and always positive.

use crate::error::{CoreError, Result};
use ndarray::Array2;

/// Clamp range for log standard deviations during optimization; prevents the
/// -log det term of the KL from blowing up.
pub const LOG_STD_CLAMP: (f64, f64) = (-6.0, 2.0);

/// Default initial log standard deviation (std ~ 0.135).
pub const LOG_STD_INIT: f64 = -2.0;

/// Default standard deviation of the latent mean initialization.
pub const MU_INIT_SD: f64 = 0.1;

/// Per-slice Gaussian posterior tracks: one (n_frames, latent_dim) mean track
/// and one log-std track per slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSchedule {
    pub mu: Vec<Array2<f64>>,
    pub log_std: Vec<Array2<f64>>,
    pub latent_dim: usize,
}

impl LatentSchedule {
    pub fn n_slices(&self) -> usize {
        self.mu.len()
    }

    pub fn n_frames(&self, slice: usize) -> usize {
        self.mu[slice].dim().0
    }

    /// Seeded initialization: mu ~ N(0, sd^2) per entry, log_std constant.
    pub fn init(
        n_slices: usize,
        n_frames: usize,
        latent_dim: usize,
        mu_sd: f64,
        log_std_init: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let mu = (0..n_slices)
            .map(|_| {
                Array2::from_shape_fn((n_frames, latent_dim), |_| {
                    let e: f64 = StandardNormal.sample(rng);
                    mu_sd * e
                })
            })
            .collect();
        let log_std = (0..n_slices)
            .map(|_| Array2::from_elem((n_frames, latent_dim), log_std_init))
            .collect();
        LatentSchedule { mu, log_std, latent_dim }
    }

    /// Linearly interpolate both tracks from their current frame count to
    /// `n_frames` rows (progressive-stage refinement). With an exact doubling,
    /// even rows copy the coarse rows and odd rows are neighbor means.
    pub fn refine_to(&self, n_frames: usize) -> Self {
        let interp = |track: &Array2<f64>| -> Array2<f64> {
            let (coarse, dim) = track.dim();
            Array2::from_shape_fn((n_frames, dim), |(t, j)| {
                let pos = t as f64 * coarse as f64 / n_frames as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(coarse - 1);
                let w = pos - lo as f64;
                track[[lo.min(coarse - 1), j]] * (1.0 - w) + track[[hi, j]] * w
            })
        };
        LatentSchedule {
            mu: self.mu.iter().map(interp).collect(),
            log_std: self.log_std.iter().map(interp).collect(),
            latent_dim: self.latent_dim,
        }
    }
}

/// Reparameterized sample: c = mu + exp(log_std) .* eps.
pub fn sample_latent(mu: &[f64], log_std: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != log_std.len() || mu.len() != eps.len() {
        return Err(CoreError::Shape {
            expected: format!("three vectors of length {}", mu.len()),
            got: format!("mu {}, log_std {}, eps {}", mu.len(), log_std.len(), eps.len()),
        });
    }
    Ok(mu
        .iter()
        .zip(log_std.iter())
        .zip(eps.iter())
        .map(|((&m, &l), &e)| m + l.exp() * e)
        .collect())
}

/// Closed-form KL divergence KL(N(mu, diag(exp(log_std))^2) || N(0, I)):
/// 0.5 * [ -sum 2*log_std - n + sum exp(2*log_std) + sum mu^2 ].
pub fn kl_gaussian(mu: &[f64], log_std: &[f64]) -> Result<f64> {
    if mu.len() != log_std.len() {
        return Err(CoreError::Shape {
            expected: format!("log_std of length {}", mu.len()),
            got: format!("{}", log_std.len()),
        });
    }
    if mu.iter().chain(log_std.iter()).any(|v| !v.is_finite()) {
        return Err(CoreError::Numeric("kl_gaussian: non-finite input".into()));
    }
    let n = mu.len() as f64;
    let mut acc = -n;
    for (&m, &l) in mu.iter().zip(log_std.iter()) {
        acc += -2.0 * l + (2.0 * l).exp() + m * m;
    }
    Ok(0.5 * acc)
}

/// Gradient of [`kl_gaussian`]: d/dmu = mu, d/dlog_std = exp(2*log_std) - 1.
pub fn kl_gaussian_grad(mu: &[f64], log_std: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gm = mu.to_vec();
    let gl = log_std.iter().map(|&l| (2.0 * l).exp() - 1.0).collect();
    (gm, gl)
}

/// Sum of squared first differences of a mean track along the frame axis,
/// over all latent dimensions. Returns 0 for tracks shorter than 2 frames.
pub fn temporal_penalty(mu_track: &Array2<f64>) -> f64 {
    let (t, n) = mu_track.dim();
    if t < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for f in 0..t - 1 {
        for j in 0..n {
            let d = mu_track[[f + 1, j]] - mu_track[[f, j]];
            acc += d * d;
        }
    }
    acc
}

/// Gradient of [`temporal_penalty`] with respect to the track.
pub fn temporal_penalty_grad(mu_track: &Array2<f64>) -> Array2<f64> {
    let (t, n) = mu_track.dim();
    let mut g = Array2::<f64>::zeros((t, n));
    if t < 2 {
        return g;
    }
    for f in 0..t - 1 {
        for j in 0..n {
            let d = 2.0 * (mu_track[[f + 1, j]] - mu_track[[f, j]]);
            g[[f + 1, j]] += d;
            g[[f, j]] -= d;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn sample_at_zero_eps_is_mu() {
        let c = sample_latent(&[0.3, -1.2], &[-2.0, 0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(c, vec![0.3, -1.2]);
    }

    #[test]
    fn sample_with_floored_log_std_collapses_to_mu() {
        let c = sample_latent(&[0.3, -1.2], &[-40.0, -40.0], &[3.0, -7.0]).unwrap();
        assert!((c[0] - 0.3).abs() < 1e-15 && (c[1] + 1.2).abs() < 1e-15);
    }

    #[test]
    fn sample_mean_converges_to_mu() {
        let mu = [0.7, -0.4];
        let log_std = [-0.5, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = 100_000;
        let mut acc = [0.0f64; 2];
        for _ in 0..m {
            let eps: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let c = sample_latent(&mu, &log_std, &eps).unwrap();
            acc[0] += c[0];
            acc[1] += c[1];
        }
        for j in 0..2 {
            let mean = acc[j] / m as f64;
            let tol = 4.0 * log_std[j].exp() / (m as f64).sqrt();
            assert!((mean - mu[j]).abs() < tol, "dim {j}: {mean} vs {}", mu[j]);
        }
    }

    #[test]
    fn kl_zero_at_prior() {
        assert_eq!(kl_gaussian(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn kl_unit_mean_shift() {
        assert!((kl_gaussian(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        // n=2, mu=0, log_std=0.5 (variance e): closed form is e - 2.
        let mu = [0.0, 0.0];
        let log_std = [0.5, 0.5];
        let exact = kl_gaussian(&mu, &log_std).unwrap();
        assert!((exact - (std::f64::consts::E - 2.0)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = 100_000;
        let mut acc = 0.0;
        for _ in 0..m {
            let eps: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let c = sample_latent(&mu, &log_std, &eps).unwrap();
            // log q(c) - log p(c) for diagonal Gaussians.
            let mut lq = 0.0;
            let mut lp = 0.0;
            for j in 0..2 {
                let s = log_std[j].exp();
                lq += -log_std[j] - 0.5 * ((c[j] - mu[j]) / s).powi(2);
                lp += -0.5 * c[j] * c[j];
            }
            acc += lq - lp;
        }
        let mc = acc / m as f64;
        assert!((mc - exact).abs() / exact < 0.02, "MC {mc} vs exact {exact}");
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mu = [0.3, -0.8, 1.1];
        let log_std = [-0.4, 0.1, -1.5];
        let (gm, gl) = kl_gaussian_grad(&mu, &log_std);
        let h = 1e-6;
        for j in 0..3 {
            let mut mp = mu;
            mp[j] += h;
            let mut mm = mu;
            mm[j] -= h;
            let fd = (kl_gaussian(&mp, &log_std).unwrap() - kl_gaussian(&mm, &log_std).unwrap())
                / (2.0 * h);
            assert!((fd - gm[j]).abs() / fd.abs().max(1.0) < 1e-6);
            let mut lp = log_std;
            lp[j] += h;
            let mut lm = log_std;
            lm[j] -= h;
            let fd = (kl_gaussian(&mu, &lp).unwrap() - kl_gaussian(&mu, &lm).unwrap()) / (2.0 * h);
            assert!((fd - gl[j]).abs() / fd.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn kl_rejects_non_finite() {
        assert!(kl_gaussian(&[f64::NAN], &[0.0]).is_err());
    }

    #[test]
    fn temporal_penalty_cases() {
        let constant = Array2::from_elem((5, 2), 1.3);
        assert_eq!(temporal_penalty(&constant), 0.0);

        let track = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(temporal_penalty(&track), 2.0);

        let n = 17;
        let ramp = Array2::from_shape_fn((n, 1), |(t, _)| t as f64);
        assert!((temporal_penalty(&ramp) - (n - 1) as f64).abs() < 1e-12);

        let single = Array2::from_elem((1, 2), 0.4);
        assert_eq!(temporal_penalty(&single), 0.0);
    }

    #[test]
    fn temporal_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let track = Array2::from_shape_fn((6, 2), |_| rng.gen::<f64>() - 0.5);
        let g = temporal_penalty_grad(&track);
        let h = 1e-6;
        for t in 0..6 {
            for j in 0..2 {
                let mut p = track.clone();
                p[[t, j]] += h;
                let mut m = track.clone();
                m[[t, j]] -= h;
                let fd = (temporal_penalty(&p) - temporal_penalty(&m)) / (2.0 * h);
                assert!((fd - g[[t, j]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reparameterization_gradient_identity() {
        // d<v, c>/dmu = v and d<v, c>/dlog_std_j = v_j * exp(l_j) * eps_j.
        let mu = [0.2, -0.7];
        let log_std = [-0.3, 0.4];
        let eps = [1.5, -0.6];
        let v = [2.0, 3.0];
        let h = 1e-7;
        for j in 0..2 {
            let mut lp = log_std;
            lp[j] += h;
            let mut lm = log_std;
            lm[j] -= h;
            let f = |l: &[f64; 2]| {
                let c = sample_latent(&mu, l, &eps).unwrap();
                v[0] * c[0] + v[1] * c[1]
            };
            let fd = (f(&lp) - f(&lm)) / (2.0 * h);
            let exact = v[j] * log_std[j].exp() * eps[j];
            assert!((fd - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn refine_doubles_with_neighbor_means() {
        let coarse = Array2::from_shape_vec((4, 1), vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let sched = LatentSchedule {
            mu: vec![coarse.clone()],
            log_std: vec![coarse],
            latent_dim: 1,
        };
        let fine = sched.refine_to(8);
        let expect = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 6.0];
        for (t, &e) in expect.iter().enumerate() {
            assert!((fine.mu[0][[t, 0]] - e).abs() < 1e-12, "row {t}");
        }
    }

    proptest! {
        #[test]
        fn kl_nonnegative(
            mu in proptest::collection::vec(-3.0f64..3.0, 1..6),
            log_std in proptest::collection::vec(-3.0f64..1.5, 1..6),
        ) {
            prop_assume!(mu.len() == log_std.len());
            let kl = kl_gaussian(&mu, &log_std).unwrap();
            prop_assert!(kl >= 0.0);
            let at_prior = mu.iter().all(|&m| m == 0.0) && log_std.iter().all(|&l| l == 0.0);
            if !at_prior {
                prop_assert!(kl > 0.0);
            }
        }
    }
}
