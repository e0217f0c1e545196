//! Phase-space and marginal distributions of Fock-basis states.
//!
//! Wigner convention: ∫∫ W dx dp = 1 and the vacuum is (1/π) e^{−x²−p²}.
//! For m ≥ n the contribution of |m⟩⟨n| is
//!
//! W_mn(x, p) = ((−1)ⁿ/π) √(n!/m!) (√2 (x − ip))^{m−n} e^{−r²} L_n^{(m−n)}(2r²),
//!
//! and W_nm = conj(W_mn).

use std::f64::consts::{FRAC_1_PI, SQRT_2};

use num_complex::Complex64;

use super::channel::ln_factorials;
use super::density::DensityMatrix;
use super::hermite::hermite_fns_into;

/// W(x, p) by the Laguerre expansion.
pub fn wigner(rho: &DensityMatrix, x: f64, p: f64) -> f64 {
    let dim = rho.dim();
    let r2 = x * x + p * p;
    let arg = 2.0 * r2;
    let gauss = (-r2).exp();
    let ln_fact = ln_factorials(dim);
    let z = Complex64::new(SQRT_2 * x, -SQRT_2 * p);

    let mut laguerre = vec![0.0; dim];
    let mut total = 0.0;
    let mut z_pow = Complex64::new(1.0, 0.0);
    for k in 0..dim {
        // L_n^{(k)}(arg) for n = 0..dim−k
        let len = dim - k;
        generalized_laguerre(k as f64, arg, &mut laguerre[..len]);
        for n in 0..len {
            let m = n + k;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let norm = (0.5 * (ln_fact[n] - ln_fact[m])).exp();
            let w = z_pow * (sign * norm * laguerre[n]);
            let contrib = (rho.get(m, n) * w).re;
            total += if k == 0 { contrib } else { 2.0 * contrib };
        }
        z_pow *= z;
    }
    FRAC_1_PI * gauss * total
}

/// W(0, 0) = (1/π) Σ (−1)ⁿ ρ_nn.
pub fn wigner_origin(rho: &DensityMatrix) -> f64 {
    let alternating: f64 = rho
        .diagonal()
        .iter()
        .enumerate()
        .map(|(n, p)| if n % 2 == 0 { *p } else { -*p })
        .sum();
    FRAC_1_PI * alternating
}

/// Homodyne density pr(q | θ) = tr(Π(q, θ) ρ) = Σ_mn ρ_mn e^{−i(m−n)θ} ψ_m(q) ψ_n(q).
///
/// The imaginary part vanishes identically for Hermitian ρ and is dropped.
pub fn marginal_pdf(rho: &DensityMatrix, theta: f64, q: f64) -> f64 {
    let dim = rho.dim();
    let mut psi = vec![0.0; dim];
    if hermite_fns_into(q, &mut psi).is_err() {
        return 0.0;
    }
    let mut acc = 0.0;
    for m in 0..dim {
        acc += rho.get(m, m).re * psi[m] * psi[m];
        for n in (m + 1)..dim {
            let phase = Complex64::from_polar(1.0, -((m as f64) - (n as f64)) * theta);
            acc += 2.0 * (rho.get(m, n) * phase).re * psi[m] * psi[n];
        }
    }
    acc.max(0.0)
}

fn generalized_laguerre(alpha: f64, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = 1.0 + alpha - x;
    }
    for j in 1..out.len().saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = ((2.0 * jf + 1.0 + alpha - x) * out[j] - (jf + alpha) * out[j - 1]) / (jf + 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn laguerre_known_values() {
        let mut l = vec![0.0; 4];
        generalized_laguerre(0.0, 2.0, &mut l);
        // L_2(x) = (x² − 4x + 2)/2, L_3 = (−x³ + 9x² − 18x + 6)/6
        assert!((l[2] - (4.0 - 8.0 + 2.0) / 2.0).abs() < 1e-15);
        assert!((l[3] - (-8.0 + 36.0 - 36.0 + 6.0) / 6.0).abs() < 1e-15);
        generalized_laguerre(2.0, 0.5, &mut l);
        // L_1^{(2)}(x) = 3 − x
        assert!((l[1] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn single_photon_at_origin() {
        let one = DensityMatrix::fock(1, 5).unwrap();
        assert!((wigner(&one, 0.0, 0.0) + 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn vacuum_is_gaussian() {
        let vac = DensityMatrix::vacuum(4);
        let got = wigner(&vac, 0.5, -0.3);
        assert!((got - (-0.34f64).exp() / PI).abs() < 1e-15);
    }

    #[test]
    fn reported_diagonal_origin_value() {
        let rho = DensityMatrix::from_diagonal(&[0.424, 0.488, 0.069, 0.019]).unwrap();
        let w = wigner_origin(&rho);
        assert!((w - (0.424 - 0.488 + 0.069 - 0.019) / PI).abs() < 1e-15);
        assert!((w + 0.00446).abs() < 1e-5);
    }

    #[test]
    fn fast_path_agrees_with_expansion() {
        let amps: Vec<Complex64> = (0..8)
            .map(|n| Complex64::from_polar(0.9f64.powi(n), 0.3 * n as f64))
            .collect();
        let rho = DensityMatrix::pure(&amps).unwrap();
        assert!((wigner(&rho, 0.0, 0.0) - wigner_origin(&rho)).abs() < 1e-12);
    }

    #[test]
    fn marginal_point_values() {
        let inv_sqrt_pi = 1.0 / PI.sqrt();
        assert!((marginal_pdf(&DensityMatrix::vacuum(3), 1.2, 0.0) - inv_sqrt_pi).abs() < 1e-15);
        assert_eq!(marginal_pdf(&DensityMatrix::fock(1, 3).unwrap(), 0.4, 0.0), 0.0);
        let half = DensityMatrix::from_diagonal(&[0.5, 0.5]).unwrap();
        assert!((marginal_pdf(&half, 2.2, 0.0) - 0.5 * inv_sqrt_pi).abs() < 1e-15);
    }

    /// The Radon transform of W along direction θ must reproduce pr(q | θ);
    /// this pins the relative sign between the Wigner and projector phases.
    #[test]
    fn wigner_projection_matches_marginal_with_coherences() {
        let amps = [
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.55),
            Complex64::new(0.35, 0.2),
            Complex64::new(-0.1, 0.3),
        ];
        let rho = DensityMatrix::pure(&amps).unwrap();
        for &theta in &[0.0, 0.9, 2.4] {
            for &q in &[-1.1, 0.3, 1.6] {
                let (c, s) = (f64::cos(theta), f64::sin(theta));
                let h = 0.01;
                let radon: f64 = (-800..=800)
                    .map(|i| {
                        let t = i as f64 * h;
                        wigner(&rho, q * c - t * s, q * s + t * c)
                    })
                    .sum::<f64>()
                    * h;
                let want = marginal_pdf(&rho, theta, q);
                assert!((radon - want).abs() < 1e-9, "θ={theta} q={q}: {radon} vs {want}");
            }
        }
    }
}
