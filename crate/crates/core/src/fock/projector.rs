use nalgebra::DMatrix;
use num_complex::Complex64;

use super::density::DensityMatrix;
use super::hermite::hermite_fns_into;
use crate::error::{Error, Result};

/// Gauss–Legendre order used inside each integration panel of a bin.
pub const BIN_GL_ORDER: usize = 16;
/// Number of equal panels a quadrature bin is split into.
pub const BIN_GL_PANELS: usize = 1;

/// Element of the homodyne POVM in the Fock basis.
///
/// Phase convention: Π(q, θ) = e^{iθn̂}|q⟩⟨q|e^{−iθn̂}, which measures
/// X cos θ + P sin θ and has elements Π_mn = e^{i(m−n)θ} ψ_m(q) ψ_n(q).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    cutoff: usize,
    elements: DMatrix<Complex64>,
}

impl MeasurementOperator {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.elements[(m, n)]
    }

    pub fn trace(&self) -> f64 {
        (0..=self.cutoff).map(|n| self.elements[(n, n)].re).sum()
    }

    /// Born probability tr(Π ρ).
    pub fn probability(&self, rho: &DensityMatrix) -> Result<f64> {
        if rho.cutoff() != self.cutoff {
            return Err(Error::input(format!(
                "operator cutoff {} does not match state cutoff {}",
                self.cutoff,
                rho.cutoff()
            )));
        }
        let dim = self.cutoff + 1;
        let mut acc = 0.0;
        for m in 0..dim {
            for n in 0..dim {
                acc += (self.elements[(m, n)] * rho.get(n, m)).re;
            }
        }
        Ok(acc)
    }

    /// Averages the operator over a uniform phase window of width `width`
    /// centred on its own phase: coherences |m⟩⟨n| pick up sinc((m−n)·width/2).
    pub fn phase_averaged(mut self, width: f64) -> Self {
        let dim = self.cutoff + 1;
        for m in 0..dim {
            for n in 0..dim {
                if m != n {
                    let x = (m as f64 - n as f64) * width * 0.5;
                    self.elements[(m, n)] *= x.sin() / x;
                }
            }
        }
        self
    }

    pub(crate) fn from_elements(elements: DMatrix<Complex64>) -> Self {
        MeasurementOperator {
            cutoff: elements.nrows() - 1,
            elements,
        }
    }
}

/// Vector v with Π(q, θ) = v v†, i.e. v_m = e^{imθ} ψ_m(q).
pub fn projector_vector(q: f64, theta: f64, cutoff: usize) -> Result<Vec<Complex64>> {
    let mut psi = vec![0.0; cutoff + 1];
    hermite_fns_into(q, &mut psi)?;
    Ok(psi
        .iter()
        .enumerate()
        .map(|(m, &p)| Complex64::from_polar(p, m as f64 * theta))
        .collect())
}

/// Homodyne POVM element at (q, θ), optionally integrated over a bin of width
/// `bin_width` centred on q.
pub fn quadrature_projector(q: f64, theta: f64, cutoff: usize, bin_width: Option<f64>) -> Result<MeasurementOperator> {
    if cutoff == 0 {
        return Err(Error::input("projector cutoff must be at least 1"));
    }
    if !theta.is_finite() {
        return Err(Error::input("phase must be finite"));
    }
    match bin_width {
        None => {
            let mut psi = vec![0.0; cutoff + 1];
            hermite_fns_into(q, &mut psi)?;
            Ok(rank_one(&psi, theta, 1.0, None))
        }
        Some(w) => {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::input(format!("bin width must be positive, got {w}")));
            }
            bin_integral(q - 0.5 * w, q + 0.5 * w, theta, cutoff)
        }
    }
}

/// ∫_{lo}^{hi} Π(q, θ) dq by composite Gauss–Legendre.
pub fn bin_integral(lo: f64, hi: f64, theta: f64, cutoff: usize) -> Result<MeasurementOperator> {
    if !(hi > lo) {
        return Err(Error::input(format!("empty bin [{lo}, {hi}]")));
    }
    let (nodes, weights) = gauss_legendre(BIN_GL_ORDER);
    let panel = (hi - lo) / BIN_GL_PANELS as f64;
    let mut psi = vec![0.0; cutoff + 1];
    let mut acc: Option<MeasurementOperator> = None;
    for p in 0..BIN_GL_PANELS {
        let a = lo + p as f64 * panel;
        for (x, w) in nodes.iter().zip(&weights) {
            let q = a + 0.5 * panel * (x + 1.0);
            hermite_fns_into(q, &mut psi)?;
            let term = rank_one(&psi, theta, 0.5 * panel * w, acc.take());
            acc = Some(term);
        }
    }
    Ok(acc.expect("at least one node"))
}

fn rank_one(psi: &[f64], theta: f64, weight: f64, acc: Option<MeasurementOperator>) -> MeasurementOperator {
    let dim = psi.len();
    let mut op = acc.unwrap_or_else(|| MeasurementOperator::from_elements(DMatrix::zeros(dim, dim)));
    for m in 0..dim {
        for n in 0..dim {
            let phase = Complex64::from_polar(1.0, (m as f64 - n as f64) * theta);
            op.elements[(m, n)] += phase * (weight * psi[m] * psi[n]);
        }
    }
    op
}

/// Nodes and weights of the `order`-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if order == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=order {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
