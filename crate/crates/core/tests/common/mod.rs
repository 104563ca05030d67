//! Independent oracles for the acceptance and property suites.
//!
//! Nothing here may call into the library's fitting or special-function
//! code: the whole point is a second, structurally different route to the
//! same numbers.

#![allow(dead_code)]

/// Normal-equations fit over raw power sums, the textbook closed form.
/// Returns (slope, intercept, r_squared).
pub fn ols_normal_equations(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let sum_x: f64 = points.iter().map(|p| p.0).sum();
    let sum_y: f64 = points.iter().map(|p| p.1).sum();
    let sum_xx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sum_yy: f64 = points.iter().map(|p| p.1 * p.1).sum();
    let sum_xy: f64 = points.iter().map(|p| p.0 * p.1).sum();

    let denom = n * sum_xx - sum_x * sum_x;
    let slope = (n * sum_xy - sum_x * sum_y) / denom;
    let intercept = (sum_y - slope * sum_x) / n;
    let r_num = n * sum_xy - sum_x * sum_y;
    let r_den = (denom * (n * sum_yy - sum_y * sum_y)).sqrt();
    let r = r_num / r_den;
    (slope, intercept, r * r)
}

/// Slope t statistic from the correlation form, `t = r sqrt(df / (1 - r²))`,
/// a different algebraic route than slope / stderr.
pub fn t_statistic_from_correlation(points: &[(f64, f64)]) -> f64 {
    let (_, _, r2) = ols_normal_equations(points);
    let df = (points.len() - 2) as f64;
    let r = r2.sqrt();
    let (slope, _, _) = ols_normal_equations(points);
    let signed_r = if slope < 0.0 { -r } else { r };
    signed_r * (df / (1.0 - r2)).sqrt()
}

/// Two-sided t-density tail probability by quadrature.
///
/// Substituting `u = sqrt(df) . tan(theta)` turns the unnormalized density
/// `(1 + u²/df)^{-(df+1)/2}` into `cos^{df-1}(theta)` on a finite interval,
/// so no gamma-function normalization is needed:
/// `p = integral(theta_t .. pi/2) / integral(0 .. pi/2)`.
pub fn t_p_value_by_quadrature(t: f64, df: usize) -> f64 {
    let nu = df as f64;
    let theta_t = (t.abs() / nu.sqrt()).atan();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let integrand = |theta: f64| theta.cos().powf(nu - 1.0);
    let tail = simpson(integrand, theta_t, half_pi, 20_001);
    let total = simpson(integrand, 0.0, half_pi, 20_001);
    tail / total
}

/// Composite Simpson rule with an odd number of nodes.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    assert!(nodes >= 3 && nodes % 2 == 1, "need an odd node count");
    let h = (b - a) / (nodes - 1) as f64;
    let mut sum = f(a) + f(b);
    for i in 1..nodes - 1 {
        let x = a + h * i as f64;
        sum += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Prediction-interval half width from the textbook formula, with the t
/// critical value found by bisecting the quadrature oracle.
pub fn interval_half_width_oracle(points: &[(f64, f64)], x: f64, level: f64) -> f64 {
    let n = points.len() as f64;
    let (slope, intercept, _) = ols_normal_equations(points);
    let mean_x: f64 = points.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let df = points.len() - 2;
    let se = (sse / df as f64).sqrt();
    let alpha = 1.0 - level;
    let t_star = bisect_t_quantile(alpha, df);
    t_star * se * (1.0 + 1.0 / n + (x - mean_x).powi(2) / sxx).sqrt()
}

/// Bisection on the quadrature CDF oracle.
pub fn bisect_t_quantile(alpha: f64, df: usize) -> f64 {
    let mut hi = 1.0_f64;
    while t_p_value_by_quadrature(hi, df) > alpha {
        hi *= 2.0;
    }
    let mut lo = 0.0_f64;
    for _ in 0..200 {
        if hi - lo <= 1e-10 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if t_p_value_by_quadrature(mid, df) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Deterministic uniform stream on [0, 1): a bare linear congruential
/// generator, also used to freeze the 15-point fixture in the unit tests.
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    pub fn next_unit(&mut self) -> f64 {
        self.state = self
            .state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.state >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }
}
