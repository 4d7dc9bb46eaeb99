/// End-to-end speedup including inference time and the cost of restarting
/// failed warm solves: `t_mips / (t_mtl + t_warm + t_mips·(1 − sr))`.
pub fn metric_su(t_mips: f64, t_mtl: f64, t_mips_warm: f64, sr: f64) -> f64 {
    t_mips / (t_mtl + t_mips_warm + t_mips * (1.0 - sr))
}

/// `(100 / n) Σ |x − gt| / (gt + ε)`, with the signed denominator.
pub fn metric_mape(x: &[f64], gt: &[f64], eps: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let s: f64 = x.iter().zip(gt).map(|(x, g)| (x - g).abs() / (g + eps)).sum();
    100.0 * s / x.len() as f64
}

/// Mean of `solve / inference` time ratios.
pub fn speedup_factor(solve_times: &[f64], infer_times: &[f64]) -> f64 {
    mean(solve_times.iter().zip(infer_times).map(|(s, i)| s / i))
}

/// `(100 / n) Σ |1 − C′ / C|` over samples with a nonzero true cost.
pub fn l_cost(predicted: &[f64], truth: &[f64]) -> f64 {
    let terms: Vec<f64> = predicted
        .iter()
        .zip(truth)
        .filter(|(_, c)| **c != 0.0)
        .map(|(p, c)| (1.0 - p / c).abs())
        .collect();
    100.0 * mean(terms.into_iter())
}

pub fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

/// Elementwise `|x − gt| / (|gt| + ε)`.
pub fn relative_errors<'a>(x: &'a [f64], gt: &'a [f64], eps: f64) -> impl Iterator<Item = f64> + 'a {
    x.iter().zip(gt).map(move |(x, g)| (x - g).abs() / (g.abs() + eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speedup_examples() {
        assert!((metric_su(10.0, 0.1, 3.0, 1.0) - 10.0 / 3.1).abs() < 1e-12);
        assert!((metric_su(10.0, 0.1, 3.0, 0.9) - 10.0 / 4.1).abs() < 1e-12);
        assert!(metric_su(10.0, 0.1, 3.0, 0.0) < 1.0);
        assert_eq!(metric_su(7.0, 0.0, 7.0, 1.0), 1.0);
    }

    #[test]
    fn speedup_increases_with_success_rate() {
        let mut prev = 0.0;
        for k in 0..=10 {
            let v = metric_su(10.0, 0.5, 4.0, k as f64 / 10.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn mape_examples() {
        assert_eq!(metric_mape(&[1.0, 2.0], &[1.0, 2.0], 1e-9), 0.0);
        assert!((metric_mape(&[1.1], &[1.0], 1e-9) - 10.0).abs() < 1e-6);
        assert!((metric_mape(&[1e-9], &[0.0], 1e-9) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn sf_and_cost_examples() {
        assert!((speedup_factor(&[0.05; 4], &[0.001; 4]) - 50.0).abs() < 1e-9);
        assert_eq!(l_cost(&[3.0, 5.0], &[3.0, 5.0]), 0.0);
        assert!((l_cost(&[110.0, 90.0], &[100.0, 100.0]) - 10.0).abs() < 1e-12);
        assert_eq!(l_cost(&[1.0], &[0.0]), 0.0);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
