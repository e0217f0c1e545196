//! Normalized Hermite–Gauss wavefunctions ⟨q|n⟩.
//!
//! Convention: vacuum variance 1/2, i.e. |ψ₀(q)|² = π^{-1/2} e^{-q²}. Values
//! come from the three-term recurrence on the normalized functions
//!
//! ψ_{n+1}(q) = √(2/(n+1)) q ψ_n(q) − √(n/(n+1)) ψ_{n−1}(q),
//!
//! so no factorial ever appears. Far outside the classically allowed region
//! the Gaussian prefactor is carried in log form to avoid underflow.

use crate::error::{Error, Result};

/// Highest supported Fock index.
pub const HERMITE_MAX_ORDER: usize = 1024;

/// π^{-1/4}
pub const PI_POW_NEG_QUARTER: f64 = 0.751_125_544_464_942_5;

// Below this exponent e^{-q²/2} stays comfortably above the subnormal range.
const LOG_SCALE_SWITCH: f64 = 300.0;
const RESCALE_ABOVE: f64 = 1e150;

/// ψ_n(q) for a single order.
pub fn hermite_fn(n: usize, q: f64) -> Result<f64> {
    let mut out = vec![0.0; n + 1];
    hermite_fns_into(q, &mut out)?;
    Ok(out[n])
}

/// [ψ_0(q), …, ψ_max_order(q)].
pub fn hermite_fns(max_order: usize, q: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; max_order + 1];
    hermite_fns_into(q, &mut out)?;
    Ok(out)
}

/// Fills `out[n] = ψ_n(q)` for every `n < out.len()`.
pub fn hermite_fns_into(q: f64, out: &mut [f64]) -> Result<()> {
    if out.is_empty() {
        return Ok(());
    }
    if out.len() - 1 > HERMITE_MAX_ORDER {
        return Err(Error::Capability(format!(
            "Hermite order {} exceeds limit {HERMITE_MAX_ORDER}",
            out.len() - 1
        )));
    }
    if !q.is_finite() {
        return Err(Error::input(format!("quadrature value {q} is not finite")));
    }
    let gauss_exp = 0.5 * q * q;
    if gauss_exp < LOG_SCALE_SWITCH {
        recurrence(q, PI_POW_NEG_QUARTER * (-gauss_exp).exp(), out);
    } else {
        scaled_recurrence(q, gauss_exp, out);
    }
    Ok(())
}

#[inline]
fn recurrence(q: f64, psi0: f64, out: &mut [f64]) {
    out[0] = psi0;
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * q * psi0;
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * q * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

fn scaled_recurrence(q: f64, gauss_exp: f64, out: &mut [f64]) {
    // Run with ψ₀ = π^{-1/4}, renormalizing by powers of RESCALE_ABOVE and
    // tracking ln(scale) so each term is restored as value · e^{ln_scale − q²/2}.
    let mut ln_scale = 0.0;
    let mut prev = 0.0;
    let mut cur = PI_POW_NEG_QUARTER;
    out[0] = PI_POW_NEG_QUARTER * (-gauss_exp).exp();
    for n in 0..out.len() - 1 {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * q * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_ABOVE {
            prev /= RESCALE_ABOVE;
            cur /= RESCALE_ABOVE;
            ln_scale += RESCALE_ABOVE.ln();
        }
        out[n + 1] = cur * (ln_scale - gauss_exp).exp();
    }
}
