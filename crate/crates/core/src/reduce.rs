//! Deterministic reductions. Every sum in the crate goes through a fixed
//! pairwise tree so results do not depend on thread scheduling.

use num_complex::Complex64;

const LEAF: usize = 16;

pub fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    if values.len() <= LEAF {
        return values.iter().fold(Complex64::new(0.0, 0.0), |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn pairwise_sum_real(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum_real(&values[..mid]) + pairwise_sum_real(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_sum_on_integers() {
        let v: Vec<Complex64> = (0..1000).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let s = pairwise_sum(&v);
        assert_eq!(s, Complex64::new(499_500.0, -499_500.0));
        let r: Vec<f64> = (0..37).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum_real(&r), 666.0);
        assert_eq!(pairwise_sum(&[]), Complex64::new(0.0, 0.0));
    }
}
