//! Exponential integral `Ei(x)` for `x > 0`.

use crate::error::{domain, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_MAX: f64 = 40.0;

/// `Σ_{k≥1} xᵏ / (k·k!)`, so that `Ei(x) = γ + ln x + ei_tail(x)`.
pub(crate) fn ei_tail(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        term *= x / k;
        let add = term / k;
        sum += add;
        if add <= 1e-17 * sum {
            return sum;
        }
        k += 1.0;
    }
}

/// `e^{-x} Ei(x)` from the asymptotic series, truncated at its smallest term.
fn ei_scaled_asymptotic(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        let next = term * k / x;
        if next >= term || next < 1e-17 {
            break;
        }
        term = next;
        sum += term;
        k += 1.0;
    }
    sum / x
}

/// `Ei(x) = −∫_{−x}^∞ e^{−t}/t dt`: power series up to 40, asymptotic
/// expansion beyond.
pub fn expint_ei(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("Ei is only implemented for x > 0, got {x}"));
    }
    Ok(if x <= SERIES_MAX { EULER_GAMMA + x.ln() + ei_tail(x) } else { x.exp() * ei_scaled_asymptotic(x) })
}

/// `e^{-x} Ei(x)`, finite for all large `x`.
pub fn expint_ei_scaled(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("Ei is only implemented for x > 0, got {x}"));
    }
    Ok(if x <= SERIES_MAX { (-x).exp() * (EULER_GAMMA + x.ln() + ei_tail(x)) } else { ei_scaled_asymptotic(x) })
}

/// Both branches at a crossover point, for checking their agreement.
pub fn expint_ei_branches(x: f64) -> (f64, f64) {
    (EULER_GAMMA + x.ln() + ei_tail(x), x.exp() * ei_scaled_asymptotic(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_gk1;

    // 40-digit reference values
    pub(crate) const REFERENCE: [(f64, f64); 20] = [
        (1e-06, -13.238293893062491289),
        (0.001, -6.3295393640250381967),
        (0.05, -2.3678845985793744659),
        (0.1, -1.6228128139692766136),
        (0.3, -0.30266853926582593442),
        (0.5, 0.45421990486317357992),
        (0.7, 1.0649071946242904128),
        (1.0, 1.8951178163559367555),
        (1.5, 3.301285449129797838),
        (2.0, 4.9542343560018901634),
        (3.0, 9.933832570625416558),
        (5.0, 40.185275355803177455),
        (7.5, 289.38839820014460792),
        (10.0, 2492.2289762418777591),
        (15.0, 234955.85249076830358),
        (20.0, 25615652.66405658882),
        (30.0, 368973209407.27419706),
        (39.5, 3710918879133970.6341),
        (45.0, 794391603570445377.15),
        (60.0, 1.9361822139292765388e+24),
    ];

    #[test]
    fn reference_values() {
        for (x, v) in REFERENCE {
            let e = expint_ei(x).unwrap();
            assert!(((e - v) / v).abs() < 1e-10, "Ei({x}) = {e}, want {v}");
        }
        assert!(expint_ei(0.0).is_err());
    }

    #[test]
    fn agrees_with_integral_form() {
        // Ei(x) = γ + ln x + ∫₀ˣ (eᵗ − 1)/t dt
        for x in [0.2, 1.0, 4.0, 12.0, 25.0] {
            let q = adaptive_gk1(0.0, x, 1e-15, |t| if t == 0.0 { 1.0 } else { t.exp_m1() / t });
            let e = expint_ei(x).unwrap();
            let want = EULER_GAMMA + x.ln() + q;
            assert!(((e - want) / want).abs() < 1e-11, "{x}");
        }
    }

    #[test]
    fn small_argument_and_crossover() {
        let x = 1e-8;
        assert!((expint_ei(x).unwrap() - EULER_GAMMA - x.ln()).abs() < 2e-8);
        // at 20 the asymptotic series cannot beat its smallest term, about 2e-8
        let (s, a) = expint_ei_branches(20.0);
        assert!(((s - 25615652.66405658882) / s).abs() < 1e-12);
        assert!(((s - a) / s).abs() < 3e-8);
        let (s, a) = expint_ei_branches(40.0);
        assert!(((s - a) / s).abs() < 1e-13);
        for x in [5.0, 39.0, 41.0, 300.0] {
            let sc = expint_ei_scaled(x).unwrap();
            let direct = expint_ei(x).unwrap() * (-x).exp();
            assert!(((sc - direct) / sc).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_is_exp_over_x() {
        let mut x = 0.1;
        while x <= 50.0 {
            let h = 1e-5;
            let d = (expint_ei(x + h).unwrap() - expint_ei(x - h).unwrap()) / (2.0 * h);
            let want = x.exp() / x;
            assert!(((d - want) / want).abs() < 1e-8, "{x}");
            x += 0.7;
        }
    }
}
