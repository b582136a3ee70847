//! Integer mode vectors and lattice enumeration helpers.

use crate::real::Real;

/// Fourier mode in Z^r (or a joint (ν, μ) in Z^{r+s}).
pub type Mode = Vec<i32>;

pub fn zero(dim: usize) -> Mode {
    vec![0; dim]
}

pub fn is_zero(m: &[i32]) -> bool {
    m.iter().all(|&x| x == 0)
}

pub fn l1(m: &[i32]) -> u32 {
    m.iter().map(|x| x.unsigned_abs()).sum()
}

pub fn add(a: &[i32], b: &[i32]) -> Mode {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn add_assign(a: &mut [i32], b: &[i32]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += *y;
    }
}

pub fn neg(a: &[i32]) -> Mode {
    a.iter().map(|x| -x).collect()
}

pub fn dot<R: Real>(weights: &[R], m: &[i32]) -> R {
    weights.iter().zip(m).fold(R::zero(), |acc, (w, &k)| {
        acc + *w * R::from_i32(k).expect("small integer")
    })
}

pub fn dot_f64(weights: &[f64], m: &[i32]) -> f64 {
    weights.iter().zip(m).map(|(w, &k)| w * f64::from(k)).sum()
}

/// All nonzero modes of dimension `dim` with `|ν|₁ ≤ bound`, in lexicographic order.
pub fn ball(dim: usize, bound: u32) -> Vec<Mode> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(dim);
    fill_ball(dim, bound as i64, &mut current, &mut out);
    out.retain(|m| !is_zero(m));
    out
}

fn fill_ball(dim: usize, budget: i64, current: &mut Vec<i32>, out: &mut Vec<Mode>) {
    if current.len() == dim {
        out.push(current.clone());
        return;
    }
    for v in -budget..=budget {
        current.push(v as i32);
        fill_ball(dim, budget - v.abs(), current, out);
        current.pop();
    }
}

/// Representatives of `ball(dim, bound)` modulo `ν ~ -ν` (first nonzero entry positive).
pub fn half_ball(dim: usize, bound: u32) -> Vec<Mode> {
    ball(dim, bound)
        .into_iter()
        .filter(|m| m.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_sizes() {
        // |ν|₁ ≤ n in Z²: 2n² + 2n + 1 points, minus the origin
        assert_eq!(ball(2, 1).len(), 4);
        assert_eq!(ball(2, 3).len(), 24);
        assert_eq!(half_ball(2, 3).len(), 12);
        assert_eq!(ball(3, 1).len(), 6);
    }

    #[test]
    fn arithmetic() {
        assert_eq!(add(&[1, -2], &[3, 4]), vec![4, 2]);
        assert_eq!(neg(&[1, -2]), vec![-1, 2]);
        assert_eq!(l1(&[3, -4]), 7);
        assert!((dot_f64(&[1.0, 0.5], &[2, -2]) - 1.0).abs() < 1e-16);
    }
}
