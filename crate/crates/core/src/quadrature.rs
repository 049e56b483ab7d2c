//! Composite Simpson quadrature on uniform grids.

/// Composite Simpson rule over an odd number of equally spaced values.
///
/// Panics when `values.len()` is even or below 3.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd number (>= 3) of nodes, got {n}");
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (values[0] + values[n - 1] + 4.0 * odd + 2.0 * even)
}

/// Simpson weight of node `j` on a closed grid with `n` panels' worth of
/// nodes `0..=n` (`n` even).
#[inline]
pub fn simpson_weight(j: usize, n: usize, h: f64) -> f64 {
    debug_assert!(n.is_multiple_of(2) && j <= n);
    if j == 0 || j == n {
        h / 3.0
    } else if j % 2 == 1 {
        4.0 * h / 3.0
    } else {
        2.0 * h / 3.0
    }
}

/// Weights for an `n`-point half-open grid whose closing node repeats the
/// first one, as for a periodic sample set (`n` even). Node 0 carries both
/// end weights.
pub fn wrapped_simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2 && n.is_multiple_of(2), "wrapped Simpson needs an even sample count, got {n}");
    (0..n)
        .map(|j| {
            if j == 0 {
                2.0 * simpson_weight(0, n, h)
            } else {
                simpson_weight(j, n, h)
            }
        })
        .collect()
}

/// Simpson integral of `f(x_j)` over the closed box, closing the half-open
/// sample set with its first value.
pub fn wrapped_simpson<F: Fn(usize) -> f64>(n: usize, h: f64, f: F) -> f64 {
    let w = wrapped_simpson_weights(n, h);
    w.iter().enumerate().map(|(j, wj)| wj * f(j)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_cubics() {
        let h = 0.25;
        let xs: Vec<f64> = (0..9).map(|i| i as f64 * h).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x - 2.0 * x + 1.0).collect();
        // ∫_0^2 x^3 - 2x + 1 = 4 - 4 + 2
        assert!((simpson(&ys, h) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn wrapped_weights_sum_to_length() {
        let n = 64;
        let h = 0.1;
        let s: f64 = wrapped_simpson_weights(n, h).iter().sum();
        assert!((s - n as f64 * h).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn even_count_panics() {
        simpson(&[1.0, 2.0], 1.0);
    }
}
