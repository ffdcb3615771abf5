//! Central finite-difference verification of analytic gradients.

use super::Rng;

/// Relative disagreement used by the checker:
/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Max relative error between `analytic` and central differences of
/// `loss_fn` over `probe_count` coordinates of `params` drawn without
/// replacement from `rng`.
pub fn grad_check<F>(loss_fn: F, params: &[f64], analytic: &[f64], probe_count: usize, epsilon: f64, rng: &mut Rng) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let coords = rng.sample_indices(params.len(), probe_count.min(params.len()));
    grad_check_at(loss_fn, params, analytic, &coords, epsilon)
}

/// Same as [`grad_check`] on an explicit coordinate list.
pub fn grad_check_at<F>(mut loss_fn: F, params: &[f64], analytic: &[f64], coords: &[usize], epsilon: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "analytic gradient length");
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = work[i];
        work[i] = orig + epsilon;
        let up = loss_fn(&work);
        work[i] = orig - epsilon;
        let down = loss_fn(&work);
        work[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_norm_sq(p: &[f64]) -> f64 {
        0.5 * p.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn quadratic_is_exact() {
        let mut rng = Rng::new(1);
        let p: Vec<f64> = (0..6).map(|_| rng.uniform(0.5, 2.0)).collect();
        let err = grad_check(half_norm_sq, &p, &p, 6, 1e-5, &mut rng);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sign_flip_is_detected() {
        let p = vec![0.5, -1.5, 2.0, 0.75];
        let mut bad = p.clone();
        bad[2] = -bad[2];
        let err = grad_check_at(half_norm_sq, &p, &bad, &[0, 1, 2, 3], 1e-5);
        assert!((err - 2.0).abs() < 1e-6, "{err}");
    }

    #[test]
    fn probe_count_clamped_to_len() {
        let p = vec![1.0, 2.0];
        let err = grad_check(half_norm_sq, &p, &p, 10, 1e-5, &mut Rng::new(0));
        assert!(err < 1e-9);
    }
}
