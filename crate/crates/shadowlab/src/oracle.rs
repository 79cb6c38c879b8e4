//! Independent reference implementations backing the verification
//! suites.
//!
//! Everything here deliberately avoids the algorithms used by the
//! production modules: the minimax value is recomputed by dense grid
//! search plus golden-section refinement, the pairwise bound formula is
//! evaluated literally in extended-range arithmetic (unbounded exponent,
//! f64 mantissa), and deviation tails for two-value tables are summed
//! exactly from binomial weights.

/// A float with an f64 mantissa and an unbounded binary exponent:
/// `m * 2^e` with `|m|` in `[1, 2)` (or exactly zero). Gives ordinary
/// double precision without overflow or underflow, which is what the
/// literal weighted-bound formula needs when Birkhoff sums reach
/// thousands.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtFloat {
    m: f64,
    e: i64,
}

pub const EXT_ZERO: ExtFloat = ExtFloat { m: 0.0, e: 0 };

impl ExtFloat {
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "ExtFloat::from_f64 needs a finite input");
        if x == 0.0 {
            return EXT_ZERO;
        }
        let bits = x.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        if raw_exp == 0 {
            // subnormal: renormalize through a scale factor
            let scaled = ExtFloat::from_f64(x * f64::powi(2.0, 200));
            return ExtFloat {
                m: scaled.m,
                e: scaled.e - 200,
            };
        }
        let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
        ExtFloat {
            m,
            e: raw_exp - 1023,
        }
    }

    /// `exp(a)` as an extended float, for any finite `a`.
    pub fn exp_of_log(a: f64) -> Self {
        assert!(a.is_finite());
        let t = a * std::f64::consts::LOG2_E;
        let k = t.floor();
        ExtFloat {
            m: (t - k).exp2(),
            e: k as i64,
        }
        .normalized()
    }

    fn normalized(mut self) -> Self {
        if self.m == 0.0 {
            return EXT_ZERO;
        }
        while self.m.abs() >= 2.0 {
            self.m /= 2.0;
            self.e += 1;
        }
        while self.m.abs() < 1.0 {
            self.m *= 2.0;
            self.e -= 1;
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.m == 0.0
    }

    /// Lossy conversion; saturates to 0 or +/-inf outside f64 range.
    pub fn to_f64(self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if self.e > 1030 {
            return f64::INFINITY * self.m.signum();
        }
        if self.e < -1080 {
            return 0.0;
        }
        // split the scale so intermediate powers stay representable
        let half = (self.e / 2) as i32;
        self.m * f64::powi(2.0, half) * f64::powi(2.0, (self.e - i64::from(half)) as i32)
    }

    pub fn abs(self) -> Self {
        ExtFloat {
            m: self.m.abs(),
            e: self.e,
        }
    }

    /// Magnitude ordering (ignores sign).
    pub fn abs_gt(self, other: Self) -> bool {
        if self.is_zero() {
            return false;
        }
        if other.is_zero() {
            return true;
        }
        if self.e != other.e {
            return self.e > other.e;
        }
        self.m.abs() > other.m.abs()
    }
}

impl std::ops::Neg for ExtFloat {
    type Output = ExtFloat;
    fn neg(self) -> ExtFloat {
        ExtFloat {
            m: -self.m,
            e: self.e,
        }
    }
}

impl std::ops::Mul for ExtFloat {
    type Output = ExtFloat;
    fn mul(self, other: ExtFloat) -> ExtFloat {
        if self.is_zero() || other.is_zero() {
            return EXT_ZERO;
        }
        ExtFloat {
            m: self.m * other.m,
            e: self.e + other.e,
        }
        .normalized()
    }
}

impl std::ops::Div for ExtFloat {
    type Output = ExtFloat;
    fn div(self, other: ExtFloat) -> ExtFloat {
        assert!(!other.is_zero(), "ExtFloat division by zero");
        if self.is_zero() {
            return EXT_ZERO;
        }
        ExtFloat {
            m: self.m / other.m,
            e: self.e - other.e,
        }
        .normalized()
    }
}

impl std::ops::Add for ExtFloat {
    type Output = ExtFloat;
    fn add(self, other: ExtFloat) -> ExtFloat {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (big, small) = if self.e >= other.e {
            (self, other)
        } else {
            (other, self)
        };
        let diff = big.e - small.e;
        if diff > 120 {
            return big;
        }
        ExtFloat {
            m: big.m + small.m * f64::powi(2.0, -(diff as i32)),
            e: big.e,
        }
        .normalized()
    }
}

impl std::ops::Sub for ExtFloat {
    type Output = ExtFloat;
    fn sub(self, other: ExtFloat) -> ExtFloat {
        self + (-other)
    }
}

/// The weighted pairwise bound evaluated literally in extended-range
/// arithmetic, maximized over all index pairs.
///
/// Inputs are the per-step log multipliers and the residuals; the
/// routine rebuilds the weighted points
/// `z_{j+1} = z_j + r_{j+1} / exp(A_{j+1})` and evaluates
/// `exp(A_p + A_q) / (exp(A_p) + exp(A_q)) * |z_p - z_q|` without any
/// rescaling. This is the route that overflows in plain f64 once the
/// sums reach a few hundred; here it serves as the reference for the
/// production module's scaled form.
pub fn literal_minimax_extended(log_lambdas: &[f64], residuals: &[f64]) -> (f64, (usize, usize)) {
    assert_eq!(log_lambdas.len(), residuals.len());
    let steps = residuals.len();
    let mut sums = Vec::with_capacity(steps + 1);
    let mut acc = 0.0f64;
    sums.push(acc);
    for &l in log_lambdas {
        acc += l;
        sums.push(acc);
    }
    let weights: Vec<ExtFloat> = sums.iter().map(|&a| ExtFloat::exp_of_log(a)).collect();
    let mut z = Vec::with_capacity(steps + 1);
    z.push(EXT_ZERO);
    for j in 0..steps {
        let inc = ExtFloat::from_f64(residuals[j]) / weights[j + 1];
        z.push(z[j] + inc);
    }
    let mut best = EXT_ZERO;
    let mut pair = (0, 0);
    for p in 0..steps {
        for q in (p + 1)..=steps {
            let num = weights[p] * weights[q];
            let den = weights[p] + weights[q];
            let b = num / den * (z[p] - z[q]).abs();
            if b.abs_gt(best) {
                best = b;
                pair = (p, q);
            }
        }
    }
    (best.to_f64(), pair)
}

/// Brute-force minimum of `g(y) = max_j |x_j - exp(A_j) y|` by dense
/// grid search followed by golden-section refinement around the best
/// cell. Convexity of `g` makes the refinement exact up to the stopping
/// width. Returns `(min value, argmin)`.
pub fn min_gap_grid_golden(sums: &[f64], x: &[f64]) -> (f64, f64) {
    assert_eq!(sums.len(), x.len());
    assert!(!x.is_empty());
    let weights: Vec<f64> = sums.iter().map(|&a| a.exp()).collect();
    let g = |y: f64| -> f64 {
        x.iter()
            .zip(&weights)
            .map(|(&xi, &wi)| (xi - wi * y).abs())
            .fold(0.0f64, f64::max)
    };
    let w_max = weights.iter().cloned().fold(0.0f64, f64::max);
    let x_max = x.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let bound = 2.0 * x_max / w_max + 1.0;
    let cells = 4096usize;
    let step = 2.0 * bound / cells as f64;
    let mut best_y = -bound;
    let mut best_g = g(-bound);
    for i in 1..=cells {
        let y = -bound + i as f64 * step;
        let v = g(y);
        if v < best_g {
            best_g = v;
            best_y = y;
        }
    }
    // golden-section on the bracket of one cell to each side
    let mut a = best_y - step;
    let mut b = best_y + step;
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    for _ in 0..400 {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d);
        }
        if (b - a).abs() < 1e-14 * (1.0 + best_y.abs()) {
            break;
        }
    }
    let y = 0.5 * (a + b);
    (g(y).min(best_g), if g(y) <= best_g { y } else { best_y })
}

/// Exact two-sided deviation tail for the Birkhoff mean of a two-value
/// depth-zero table: `P(|A_j/j - a| >= eps)` where each step picks
/// `l0` or `l1` with probability 1/2. Summed from binomial weights in
/// log space.
pub fn binomial_two_value_tail(j: usize, l0: f64, l1: f64, a: f64, eps: f64) -> f64 {
    assert!(j >= 1);
    let jf = j as f64;
    let mut log_terms = Vec::new();
    let mut log_binom = 0.0f64; // ln C(j, 0)
    for h in 0..=j {
        let mean = (h as f64 * l0 + (j - h) as f64 * l1) / jf;
        if (mean - a).abs() >= eps {
            log_terms.push(log_binom - jf * std::f64::consts::LN_2);
        }
        if h < j {
            log_binom += ((j - h) as f64).ln() - ((h + 1) as f64).ln();
        }
    }
    if log_terms.is_empty() {
        return 0.0;
    }
    let m = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|&t| (t - m).exp()).sum();
    (m + sum.ln()).exp().min(1.0)
}

/// Closed-form one-sided rate function of the equiprobable two-point
/// law on `{l0, l1}` at target mean `x`: the entropy form
/// `ln 2 + p ln p + (1-p) ln(1-p)` with `p` solving
/// `x = p l0 + (1-p) l1`. Infinite outside the support interval.
pub fn two_point_rate(l0: f64, l1: f64, x: f64) -> f64 {
    let (lo, hi) = if l0 <= l1 { (l0, l1) } else { (l1, l0) };
    if x < lo || x > hi {
        return f64::INFINITY;
    }
    if l0 == l1 {
        return if x == l0 { 0.0 } else { f64::INFINITY };
    }
    let p = (x - l1) / (l0 - l1);
    let ent = |p: f64| if p <= 0.0 { 0.0 } else { p * p.ln() };
    std::f64::consts::LN_2 + ent(p) + ent(1.0 - p)
}
