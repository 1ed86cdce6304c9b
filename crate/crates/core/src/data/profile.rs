/// Central differences inside, one-sided differences at both ends.
///
/// # Panics
/// If fewer than two points are given or the lengths differ.
pub fn finite_difference(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    assert!(n >= 2 && ys.len() == n, "need matching profiles of at least two points");
    let mut d = Vec::with_capacity(n);
    d.push((ys[1] - ys[0]) / (xs[1] - xs[0]));
    for j in 1..n - 1 {
        d.push((ys[j + 1] - ys[j - 1]) / (xs[j + 1] - xs[j - 1]));
    }
    d.push((ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]));
    d
}

/// Moving average over `j − radius ..= j + radius`; near the ends only the
/// points that exist are averaged.
pub fn box_filter(profile: &[f64], radius: usize) -> Vec<f64> {
    let n = profile.len();
    (0..n)
        .map(|j| {
            let lo = j.saturating_sub(radius);
            let hi = (j + radius).min(n - 1);
            profile[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

pub fn total_variation(profile: &[f64]) -> f64 {
    profile.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn affine_profile_exact_everywhere() {
        let xs = [0.0, 0.1, 0.35, 0.4, 0.9, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x| -2.5 * x + 0.7).collect();
        for d in finite_difference(&xs, &ys) {
            assert!((d + 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_exact_inside_on_uniform_points() {
        let xs: Vec<f64> = (0..7).map(|j| j as f64 * 0.125).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x - x).collect();
        let d = finite_difference(&xs, &ys);
        for j in 1..6 {
            assert!((d[j] - (6.0 * xs[j] - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_derivative() {
        let xs = [0.0, 0.5, 1.0];
        assert_eq!(finite_difference(&xs, &[0.4; 3]), vec![0.0; 3]);
    }

    #[test]
    fn box_filter_examples() {
        assert_eq!(box_filter(&[0.3; 5], 1), vec![0.3; 5]);
        let out = box_filter(&[1.0, 4.0, 1.0], 1);
        assert_eq!(out, vec![2.5, 2.0, 2.5]);
        assert_eq!(box_filter(&[1.0, 4.0], 0), vec![1.0, 4.0]);
    }

    proptest! {
        #[test]
        fn box_filter_does_not_increase_variation(v in prop::collection::vec(0.0f64..1.0, 2..60)) {
            let out = box_filter(&v, 1);
            prop_assert!(total_variation(&out) <= total_variation(&v) + 1e-12);
        }

        #[test]
        fn box_filter_fixes_constants(c in -5.0f64..5.0, n in 2usize..40) {
            let v = vec![c; n];
            for (a, b) in box_filter(&v, 1).iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-15 * c.abs().max(1.0));
            }
        }
    }
}
