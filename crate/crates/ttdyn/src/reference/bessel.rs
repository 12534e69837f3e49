/// Bessel function of the first kind `J_n(x)` by Miller's backward
/// recurrence, normalized with `J_0 + 2 Σ J_2k = 1`.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let v = bessel_j(-n, x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x < 0.0 {
        let v = bessel_j(n, -x);
        return if n % 2 == 0 { v } else { -v };
    }
    let n = n as usize;
    let big = n.max(x as usize);
    // Even start well beyond both the order and the argument.
    let mut start = big + 20 + (40.0 * big as f64).sqrt() as usize;
    start += start % 2;
    let mut jp1 = 0.0f64;
    let mut j = 1e-300f64;
    let mut norm = 0.0f64;
    let mut result = 0.0f64;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        // j now holds the unnormalized J_{k-1}.
        let order = k - 1;
        if order == n {
            result = j;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            jp1 *= 1e-250;
            j *= 1e-250;
            norm *= 1e-250;
            result *= 1e-250;
        }
    }
    norm += j;
    result / norm
}

/// `P_i(t) = J²_{i - i0}(2|β| t)` for 1-based sites `1..=sites`.
pub fn bessel_populations(i0: usize, beta: f64, t: f64, sites: usize) -> Vec<f64> {
    let x = 2.0 * beta.abs() * t;
    (1..=sites)
        .map(|i| {
            let v = bessel_j(i as i32 - i0 as i32, x);
            v * v
        })
        .collect()
}
