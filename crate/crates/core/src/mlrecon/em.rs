use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{Binning, DataKind, LikelihoodData};
use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, QuadratureSample};
use crate::reduce::{fold_indices, Reduction, CHUNK_LEN};

/// Probability floor ε: log-likelihoods use max(p, ε); an observed event
/// below it makes the R operator ill-defined.
pub const PROB_FLOOR: f64 = 1e-300;
/// Below this many samples a warning is attached to the result.
pub const MIN_SAMPLES_ADVISED: usize = 1000;
/// Halvings of the dilution parameter tried when a full step loses likelihood.
const MAX_DILUTIONS: usize = 40;
/// Relative likelihood losses this small are rounding, not a failed step.
const ROUNDING_SLACK: f64 = 1e-13;
/// Weight of the maximally mixed state in bootstrap warm starts.
const WARM_START_MIX: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionConfig {
    pub cutoff: usize,
    pub max_iters: usize,
    /// Stop when the relative log-likelihood gain of one iteration drops below this.
    pub tol: f64,
    pub binning: Option<Binning>,
    /// Seed for bootstrap resampling.
    pub rseed: u64,
    /// Number of bootstrap resamples; 0 disables error estimation.
    pub bootstrap: usize,
    pub reduction: Reduction,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            cutoff: 10,
            max_iters: 2000,
            tol: 1e-9,
            binning: None,
            rseed: 0,
            bootstrap: 0,
            reduction: Reduction::FixedOrder,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cutoff == 0 {
            return Err(Error::input("reconstruction cutoff must be at least 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::input(format!("tolerance must be positive, got {}", self.tol)));
        }
        if let Some(b) = &self.binning {
            b.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub rho: DensityMatrix,
    /// Log-likelihood of the starting state followed by one entry per iteration.
    pub loglik_trajectory: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// tr((R − I) ρ (R − I)) at the returned state; zero at an exact fixed point.
    pub stationarity: f64,
    /// Bootstrap standard deviations of ρ_nn.
    pub diag_errors: Option<Vec<f64>>,
    /// Bootstrap √(Var Re ρ_mn + Var Im ρ_mn), row-major (cutoff+1)².
    pub element_errors: Option<Vec<f64>>,
    pub bootstrap_resamples: usize,
    pub n_samples: usize,
    pub warnings: Vec<String>,
}

impl ReconstructionResult {
    pub fn element_error(&self, m: usize, n: usize) -> Option<f64> {
        self.element_errors.as_ref().map(|e| e[m * self.rho.dim() + n])
    }
}

/// Log-likelihood and R operator at one state.
pub(crate) struct Pass {
    pub loglik: f64,
    pub r: DMatrix<Complex64>,
    /// Smallest probability among events with non-zero frequency.
    pub min_p: f64,
}

struct Acc {
    loglik: f64,
    g: DMatrix<f64>,
    min_p: f64,
}

impl Acc {
    fn zero(rows: usize, cols: usize) -> Self {
        Acc {
            loglik: 0.0,
            g: DMatrix::zeros(rows, cols),
            min_p: f64::INFINITY,
        }
    }

    fn merge(mut self, other: Acc) -> Acc {
        self.loglik += other.loglik;
        self.g += other.g;
        self.min_p = self.min_p.min(other.min_p);
        self
    }
}

fn check_cutoff(rho: &DensityMatrix, data: &LikelihoodData) -> Result<()> {
    if rho.cutoff() != data.cutoff {
        return Err(Error::input(format!(
            "state cutoff {} does not match data cutoff {}",
            rho.cutoff(),
            data.cutoff
        )));
    }
    Ok(())
}

pub(crate) fn evaluate(rho: &DensityMatrix, data: &LikelihoodData, mode: Reduction) -> Result<Pass> {
    check_cutoff(rho, data)?;
    let d = rho.dim();
    let freqs = &data.freqs;
    match &data.kind {
        DataKind::Samples(blocks) => {
            let n2 = 2 * d;
            // real embedding of ρ = A + iB acting on x = [Re v; Im v]
            let emb = DMatrix::from_fn(n2, n2, |a, b| {
                let z = rho.get(a % d, b % d);
                match (a < d, b < d) {
                    (true, true) | (false, false) => z.re,
                    (true, false) => -z.im,
                    (false, true) => z.im,
                }
            });
            let acc = fold_indices(
                freqs.len(),
                mode,
                || Acc::zero(n2, n2),
                |mut acc, range| {
                    let x = &blocks[range.start / CHUNK_LEN];
                    let f = &freqs[range];
                    let mut y = &emb * x;
                    for (j, (mut ycol, xcol)) in y.column_iter_mut().zip(x.column_iter()).enumerate() {
                        let p = xcol.dot(&ycol);
                        let w = if f[j] > 0.0 {
                            acc.min_p = acc.min_p.min(p);
                            acc.loglik += f[j] * p.max(PROB_FLOOR).ln();
                            f[j] / p.max(PROB_FLOOR)
                        } else {
                            0.0
                        };
                        ycol.zip_apply(&xcol, |yk, xk| *yk = w * xk);
                    }
                    // G += (X W) Xᵀ = Σ_j w_j x_j x_jᵀ
                    acc.g.gemm(1.0, &y, &x.transpose(), 1.0);
                    acc
                },
                Acc::merge,
            );
            let g = &acc.g;
            let r = DMatrix::from_fn(d, d, |m, n| {
                Complex64::new(g[(m, n)] + g[(d + m, d + n)], g[(d + m, n)] - g[(m, d + n)])
            });
            Ok(Pass {
                loglik: acc.loglik,
                r,
                min_p: acc.min_p,
            })
        }
        DataKind::Operators(ops) => {
            let acc = fold_indices(
                freqs.len(),
                mode,
                || Acc::zero(d, 2 * d),
                |mut acc, range| {
                    for j in range {
                        if freqs[j] == 0.0 {
                            continue;
                        }
                        let op = &ops[j];
                        let mut p = 0.0;
                        for m in 0..d {
                            for n in 0..d {
                                p += (op[(m, n)] * rho.get(n, m)).re;
                            }
                        }
                        acc.min_p = acc.min_p.min(p);
                        acc.loglik += freqs[j] * p.max(PROB_FLOOR).ln();
                        let w = freqs[j] / p.max(PROB_FLOOR);
                        for m in 0..d {
                            for n in 0..d {
                                acc.g[(m, n)] += w * op[(m, n)].re;
                                acc.g[(m, d + n)] += w * op[(m, n)].im;
                            }
                        }
                    }
                    acc
                },
                Acc::merge,
            );
            let r = DMatrix::from_fn(d, d, |m, n| Complex64::new(acc.g[(m, n)], acc.g[(m, d + n)]));
            Ok(Pass {
                loglik: acc.loglik - data.ln_bin_width,
                r,
                min_p: acc.min_p,
            })
        }
    }
}

fn require_support(pass: &Pass) -> Result<()> {
    if pass.min_p < PROB_FLOOR {
        return Err(Error::Numerical(format!(
            "an observed event has probability {:.3e} under the current state; \
             the cutoff may be too small or the data contain an outlier",
            pass.min_p
        )));
    }
    Ok(())
}

fn apply(rho: &DensityMatrix, left: &DMatrix<Complex64>) -> Result<DensityMatrix> {
    let out = left * rho.matrix() * left.adjoint();
    DensityMatrix::from_positive_unnormalized(out)
}

fn diluted(r: &DMatrix<Complex64>, eps: f64) -> DMatrix<Complex64> {
    let d = r.nrows();
    DMatrix::<Complex64>::identity(d, d) + r.map(|z| z * eps)
}

/// Σ_j f_j ln max(tr(Π_j ρ), ε). Binned data subtract ln Δq so the value
/// approximates the unbinned (density) log-likelihood.
///
/// Each p_j is evaluated on its own and the terms are summed in sorted
/// order, so the value does not depend on the order of the events.
pub fn log_likelihood(rho: &DensityMatrix, data: &LikelihoodData) -> Result<f64> {
    check_cutoff(rho, data)?;
    let d = rho.dim();
    let mut terms: Vec<f64> = match &data.kind {
        DataKind::Samples(blocks) => blocks
            .iter()
            .flat_map(|b| b.column_iter())
            .zip(&data.freqs)
            .map(|(x, f)| {
                let v: Vec<Complex64> = (0..d).map(|m| Complex64::new(x[m], x[d + m])).collect();
                let mut p = 0.0;
                for m in 0..d {
                    for n in 0..d {
                        p += (v[m].conj() * rho.get(m, n) * v[n]).re;
                    }
                }
                term(*f, p)
            })
            .collect(),
        DataKind::Operators(ops) => ops
            .iter()
            .zip(&data.freqs)
            .map(|(op, f)| {
                let mut p = 0.0;
                for m in 0..d {
                    for n in 0..d {
                        p += (op[(m, n)] * rho.get(n, m)).re;
                    }
                }
                term(*f, p)
            })
            .collect(),
    };
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>() - data.ln_bin_width)
}

fn term(f: f64, p: f64) -> f64 {
    if f > 0.0 {
        f * p.max(PROB_FLOOR).ln()
    } else {
        0.0
    }
}

/// One RρR update: R = Σ_j (f_j / p_j) Π_j, ρ′ = RρR / tr(RρR).
pub fn iteration_step(rho: &DensityMatrix, data: &LikelihoodData) -> Result<DensityMatrix> {
    let pass = evaluate(rho, data, Reduction::FixedOrder)?;
    require_support(&pass)?;
    apply(rho, &pass.r)
}

/// tr((R − I) ρ (R − I)), which vanishes exactly at a likelihood maximum
/// with full-rank ρ and measures the remaining gradient otherwise.
pub fn stationarity(rho: &DensityMatrix, data: &LikelihoodData) -> Result<f64> {
    let pass = evaluate(rho, data, Reduction::FixedOrder)?;
    Ok(stationarity_of(rho, &pass.r))
}

fn stationarity_of(rho: &DensityMatrix, r: &DMatrix<Complex64>) -> f64 {
    let d = rho.dim();
    let dr = r - DMatrix::<Complex64>::identity(d, d);
    (&dr * rho.matrix() * &dr).trace().re
}

struct Fit {
    rho: DensityMatrix,
    trajectory: Vec<f64>,
    iterations: usize,
    converged: bool,
    stationarity: f64,
}

fn fit(data: &LikelihoodData, start: DensityMatrix, config: &ReconstructionConfig) -> Result<Fit> {
    let mode = config.reduction;
    let mut rho = start;
    let mut pass = evaluate(&rho, data, mode)?;
    require_support(&pass)?;
    let mut trajectory = vec![pass.loglik];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let mut cand = apply(&rho, &pass.r)?;
        let mut cand_pass = evaluate(&cand, data, mode)?;
        if cand_pass.loglik < pass.loglik {
            if pass.loglik - cand_pass.loglik <= ROUNDING_SLACK * pass.loglik.abs() {
                converged = true;
                break;
            }
            // the plain step overshot; (I + εR)ρ(I + εR) ascends for small ε
            let mut eps = 1.0;
            let mut improved = false;
            for _ in 0..MAX_DILUTIONS {
                cand = apply(&rho, &diluted(&pass.r, eps))?;
                cand_pass = evaluate(&cand, data, mode)?;
                if cand_pass.loglik >= pass.loglik {
                    improved = true;
                    break;
                }
                eps *= 0.5;
            }
            if !improved {
                converged = true;
                break;
            }
        }
        require_support(&cand_pass)?;
        let gain = (cand_pass.loglik - pass.loglik) / pass.loglik.abs().max(f64::MIN_POSITIVE);
        rho = cand;
        pass = cand_pass;
        trajectory.push(pass.loglik);
        iterations += 1;
        if gain < config.tol {
            converged = true;
            break;
        }
    }
    let stationarity = stationarity_of(&rho, &pass.r);
    Ok(Fit {
        rho,
        trajectory,
        iterations,
        converged,
        stationarity,
    })
}

/// Builds the likelihood data requested by `config` from raw samples.
pub fn likelihood_data(samples: &[QuadratureSample], config: &ReconstructionConfig) -> Result<LikelihoodData> {
    config.validate()?;
    match &config.binning {
        Some(b) => LikelihoodData::binned(samples, config.cutoff, b),
        None => LikelihoodData::from_samples(samples, config.cutoff),
    }
}

/// Maximum-likelihood density matrix from homodyne samples, starting from
/// the maximally mixed state. Non-convergence is reported, not raised.
pub fn reconstruct(samples: &[QuadratureSample], config: &ReconstructionConfig) -> Result<ReconstructionResult> {
    let data = likelihood_data(samples, config)?;
    let mut result = reconstruct_data(&data, config)?;
    result.n_samples = samples.len();
    if samples.len() < MIN_SAMPLES_ADVISED {
        result.warnings.insert(
            0,
            format!(
                "only {} samples; at least {MIN_SAMPLES_ADVISED} are advised",
                samples.len()
            ),
        );
    }
    Ok(result)
}

pub fn reconstruct_data(data: &LikelihoodData, config: &ReconstructionConfig) -> Result<ReconstructionResult> {
    config.validate()?;
    if data.cutoff != config.cutoff {
        return Err(Error::input("data cutoff differs from the configured cutoff"));
    }
    let main = fit(data, DensityMatrix::maximally_mixed(config.cutoff), config)?;
    let mut warnings = Vec::new();
    if data.dropped > 0 {
        warnings.push(format!(
            "{} samples fell outside the binning range and were dropped",
            data.dropped
        ));
    }
    if !main.converged {
        warnings.push(format!("not converged after {} iterations", main.iterations));
    }
    let n_kept = data.n_observations();
    let (diag_errors, element_errors) = if config.bootstrap > 0 {
        if n_kept == 0 {
            return Err(Error::input("bootstrap needs data built from samples"));
        }
        let (d, e, failures) = bootstrap(data, &main.rho, config, n_kept)?;
        if failures > 0 {
            warnings.push(format!("{failures} bootstrap resamples did not converge"));
        }
        (Some(d), Some(e))
    } else {
        (None, None)
    };
    Ok(ReconstructionResult {
        rho: main.rho,
        loglik_trajectory: main.trajectory,
        iterations: main.iterations,
        converged: main.converged,
        stationarity: main.stationarity,
        diag_errors,
        element_errors,
        bootstrap_resamples: config.bootstrap,
        n_samples: n_kept,
        warnings,
    })
}

fn bootstrap(
    data: &LikelihoodData,
    estimate: &DensityMatrix,
    config: &ReconstructionConfig,
    n_draws: usize,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let start = estimate.mix(&DensityMatrix::maximally_mixed(config.cutoff), WARM_START_MIX)?;
    let inner = ReconstructionConfig {
        bootstrap: 0,
        ..config.clone()
    };
    let fits: Vec<Fit> = (0..config.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rseed);
            rng.set_stream(b as u64);
            let replica = data.resampled(n_draws, &mut rng);
            fit(&replica, start.clone(), &inner)
        })
        .collect::<Result<_>>()?;
    let d = config.cutoff + 1;
    let k = fits.len() as f64;
    let mut mean = DMatrix::<Complex64>::zeros(d, d);
    for f in &fits {
        mean += f.rho.matrix();
    }
    mean /= Complex64::new(k, 0.0);
    let mut var_re = DMatrix::<f64>::zeros(d, d);
    let mut var_im = DMatrix::<f64>::zeros(d, d);
    for f in &fits {
        let dev = f.rho.matrix() - &mean;
        var_re += dev.map(|z| z.re * z.re);
        var_im += dev.map(|z| z.im * z.im);
    }
    let denom = (k - 1.0).max(1.0);
    let diag = (0..d).map(|n| (var_re[(n, n)] / denom).sqrt()).collect();
    let mut elements = Vec::with_capacity(d * d);
    for m in 0..d {
        for n in 0..d {
            elements.push(((var_re[(m, n)] + var_im[(m, n)]) / denom).sqrt());
        }
    }
    let failures = fits.iter().filter(|f| !f.converged).count();
    Ok((diag, elements, failures))
}
