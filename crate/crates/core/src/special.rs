//! Complex digamma function, used for the Poisson-smoothed Fermi–Dirac function.

use num_complex::Complex64;

/// ψ(z) for Re z > 0: upward recurrence to Re z ≥ 10, then the Stirling series.
pub fn digamma(z: Complex64) -> Complex64 {
    assert!(z.re > 0.0, "digamma evaluated at Re z <= 0");
    let mut z = z;
    let mut acc = Complex64::new(0.0, 0.0);
    while z.re < 10.0 {
        acc -= z.inv();
        z += 1.0;
    }
    let w = z.inv();
    let w2 = w * w;
    // Bernoulli terms B_{2k} / (2k)
    const COEF: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ];
    let mut series = Complex64::new(0.0, 0.0);
    let mut p = w2;
    for c in COEF {
        series += p * c;
        p *= w2;
    }
    acc + z.ln() - w * 0.5 - series
}
