//! Closed-form finite-time bounds and empirical error curves.
//!
//! The evaluators reproduce the printed expressions term by term, constants
//! included, with `n` standing for |S × A|.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::vec_inf_norm;
use crate::switching::LockstepTrace;
use crate::Scalar;

pub const BOUND_SCHEMA: &str = "sdq-bound/1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams<T> {
    pub alpha: T,
    pub gamma: T,
    pub d_min: T,
    pub d_max: T,
    pub n_sa: usize,
    pub k: u64,
}

impl<T: Scalar> BoundParams<T> {
    pub fn new(alpha: T, gamma: T, d_min: T, d_max: T, n_sa: usize, k: u64) -> Result<Self> {
        let p = Self {
            alpha,
            gamma,
            d_min,
            d_max,
            n_sa,
            k,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Precondition(what.to_string()));
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.d_min > T::zero() && self.d_min <= self.d_max && self.d_max <= T::one()) {
            return bad("need 0 < d_min <= d_max <= 1");
        }
        if self.n_sa == 0 {
            return bad("n_sa must be positive");
        }
        Ok(())
    }

    pub fn at(self, k: u64) -> Self {
        Self { k, ..self }
    }

    /// ρ = 1 − α·d_min·(1 − γ).
    pub fn rho(&self) -> T {
        T::one() - self.alpha * self.d_min * (T::one() - self.gamma)
    }

    fn n(&self) -> T {
        T::of(self.n_sa as f64)
    }

    fn kf(&self) -> T {
        T::of(self.k as f64)
    }

    /// ρ^{k−j} kʲ; zero at k = 0.
    fn poly_geo(&self, j: i32) -> T {
        if self.k == 0 {
            return T::zero();
        }
        self.rho().powf(self.kf() - T::of(j as f64)) * self.kf().powi(j)
    }

    fn steady_term(&self) -> T {
        T::of(120.0) * self.alpha.sqrt() * self.n()
            / (self.d_min.powf(T::of(4.5)) * (T::one() - self.gamma).powf(T::of(5.5)))
    }
}

/// 120α^{1/2}n/(d_min^{9/2}(1−γ)^{11/2}) + 48ρ^{k−4}k⁴n^{3/2}/(1−γ).
pub fn theorem1_bound<T: Scalar>(p: &BoundParams<T>) -> T {
    let n32 = p.n().powf(T::of(1.5));
    p.steady_term() + T::of(48.0) * p.poly_geo(4) * n32 / (T::one() - p.gamma)
}

/// The geometric envelope 48n^{3/2}/(1−γ) · ρ^{−4}(−8)⁴/(ln ρ)⁴ · ρ^{−4/ln ρ} · ρ^{k/2}.
pub fn corollary1_envelope<T: Scalar>(p: &BoundParams<T>) -> Result<T> {
    let rho = p.rho();
    if !(rho > T::zero() && rho < T::one()) {
        return Err(Error::Precondition(format!("rho = {rho} must lie in (0, 1)")));
    }
    let ln = rho.ln();
    let n32 = p.n().powf(T::of(1.5));
    let eight4 = T::of(4096.0);
    Ok(T::of(48.0) * n32 / (T::one() - p.gamma)
        * rho.powi(-4)
        * eight4
        / ln.powi(4)
        * rho.powf(-T::of(4.0) / ln)
        * rho.powf(p.kf() / T::of(2.0)))
}

/// Steady term of [`theorem1_bound`] plus [`corollary1_envelope`].
pub fn corollary1_bound<T: Scalar>(p: &BoundParams<T>) -> Result<T> {
    Ok(p.steady_term() + corollary1_envelope(p)?)
}

/// k⁴ρ^{k−4}, the transient factor of [`theorem1_bound`].
pub fn theorem1_transient<T: Scalar>(rho: T, k: u64) -> T {
    if k == 0 {
        return T::zero();
    }
    let kf = T::of(k as f64);
    kf.powi(4) * rho.powf(kf - T::of(4.0))
}

/// ρ^{−4}(−8)⁴/(ln ρ)⁴ · ρ^{−4/ln ρ} · ρ^{k/2}.
pub fn envelope_factor<T: Scalar>(rho: T, k: u64) -> T {
    let ln = rho.ln();
    rho.powi(-4) * T::of(4096.0) / ln.powi(4) * rho.powf(-T::of(4.0) / ln) * rho.powf(T::of(k as f64) / T::of(2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntermediateBounds<T> {
    /// Bound on E‖Q_k^err‖_∞.
    pub err_bound: T,
    /// Bound on E‖Q_k^{A_L} − Q*‖_∞.
    pub lcs_bound: T,
    /// Bound on E‖Q_k^{A_U} − Q_k^{A_L}‖_∞.
    pub subtraction_bound: T,
}

pub fn intermediate_bounds<T: Scalar>(p: &BoundParams<T>) -> IntermediateBounds<T> {
    let (a, g, dmin, dmax) = (p.alpha, p.gamma, p.d_min, p.d_max);
    let n = p.n();
    let n32 = n.powf(T::of(1.5));
    let sa = a.sqrt();
    let om = T::one() - g;
    let c = |x: f64| T::of(x);
    let err_bound = c(8.0) * g * dmax * n * sa / (dmin.powf(c(2.5)) * om.powf(c(3.5)))
        + c(8.0) * sa * n / (dmin.powf(c(1.5)) * om.powf(c(2.5)))
        + c(4.0) * p.poly_geo(2) * a * g * dmax * n32 / om
        + c(4.0) * p.poly_geo(1) * n32 / om;
    let lcs_bound = c(16.0) * g * dmax * n * sa / (dmin.powf(c(3.5)) * om.powf(c(4.5)))
        + c(24.0) * p.poly_geo(3) * n32 / om
        + c(4.0) * sa * n / (dmin.sqrt() * om.powf(c(1.5)));
    let subtraction_bound = c(40.0) * g * dmax * n * sa / (dmin.powf(c(4.5)) * om.powf(c(5.5)))
        + c(20.0) * p.poly_geo(4) * a * g * dmax * n32 / om;
    IntermediateBounds {
        err_bound,
        lcs_bound,
        subtraction_bound,
    }
}

/// E‖x_k‖₂ ≤ 3α^{1/2}n/(d_min^{1/2}(1−γ)^{3/2}) + n‖x₀‖₂ρ^k for
/// x_{k+1} = Ax_k + αv_k with ‖A‖_∞ ≤ ρ = 1 − α·d_min·(1−γ).
pub fn linear_system_bound<T: Scalar>(k: u64, alpha: T, n: usize, d_min: T, gamma: T, x0_norm: T) -> T {
    let nf = T::of(n as f64);
    let rho = T::one() - alpha * d_min * (T::one() - gamma);
    T::of(3.0) * alpha.sqrt() * nf / (d_min.sqrt() * (T::one() - gamma).powf(T::of(1.5)))
        + nf * x0_norm * rho.powf(T::of(k as f64))
}

/// W_max = 16/(1−γ)².
pub fn noise_energy_limit<T: Scalar>(gamma: T) -> T {
    T::of(16.0) / (T::one() - gamma).powi(2)
}

/// Per-k mean and standard error across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve<T> {
    pub mean: Vec<T>,
    pub se: Vec<T>,
    pub runs: usize,
}

impl<T: Scalar> ErrorCurve<T> {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Mean and SE (unbiased variance) per index. SE is exactly zero when every
/// run holds the same value there.
pub fn empirical_error_curve<T: Scalar>(series: &[Vec<T>]) -> Result<ErrorCurve<T>> {
    let first = series
        .first()
        .ok_or_else(|| Error::Precondition("need at least one run".into()))?;
    let len = first.len();
    if let Some(bad) = series.iter().find(|s| s.len() != len) {
        return Err(Error::Length {
            what: "error series",
            expected: len,
            got: bad.len(),
        });
    }
    let m = series.len();
    let mf = T::of(m as f64);
    let mut mean = Vec::with_capacity(len);
    let mut se = Vec::with_capacity(len);
    for k in 0..len {
        // identical runs give exactly that value and SE 0; summing and
        // dividing would not round-trip in general
        let x0 = first[k];
        if series.iter().all(|s| s[k] == x0) {
            mean.push(x0);
            se.push(T::zero());
            continue;
        }
        let mu = series.iter().map(|s| s[k]).sum::<T>() / mf;
        let var = if m > 1 {
            series.iter().map(|s| (s[k] - mu).powi(2)).sum::<T>() / T::of((m - 1) as f64)
        } else {
            T::zero()
        };
        mean.push(mu);
        se.push((var / mf).sqrt());
    }
    Ok(ErrorCurve { mean, se, runs: m })
}

/// ‖Q_k − Q*‖_∞ for a sequence of stacked vectors.
pub fn error_series<'a, T: Scalar + 'a>(qs: impl IntoIterator<Item = &'a [T]>, q_star: &[T]) -> Vec<T> {
    qs.into_iter()
        .map(|q| {
            let d: Vec<T> = q.iter().zip(q_star).map(|(&a, &b)| a - b).collect();
            vec_inf_norm(&d)
        })
        .collect()
}

/// ‖Qᴬ_k − Q*‖_∞ (or Qᴮ) along a lockstep trace.
pub fn trace_error_series<T: Scalar>(trace: &LockstepTrace<T>, estimator_b: bool) -> Vec<T> {
    error_series(
        trace
            .states
            .iter()
            .map(|s| if estimator_b { s.qb.as_slice() } else { s.qa.as_slice() }),
        &trace.q_star,
    )
}

/// `k, empirical_mean, empirical_se, theorem1, corollary1` for k = 0..len.
pub fn write_bound_csv<T: Scalar, W: Write>(curve: &ErrorCurve<T>, params: &BoundParams<T>, mut out: W) -> Result<()> {
    writeln!(out, "# schema={BOUND_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "empirical_mean", "empirical_se", "theorem1", "corollary1"])?;
    for k in 0..curve.len() {
        let p = params.at(k as u64);
        w.write_record([
            k.to_string(),
            format!("{:e}", curve.mean[k].as_f64()),
            format!("{:e}", curve.se[k].as_f64()),
            format!("{:e}", theorem1_bound(&p).as_f64()),
            format!("{:e}", corollary1_bound(&p)?.as_f64()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(k: u64) -> BoundParams<f64> {
        BoundParams::new(0.1, 0.5, 0.25, 0.25, 4, k).unwrap()
    }

    #[test]
    fn k_zero_leaves_only_constant_terms() {
        let p = params(0);
        let steady = 120.0 * 0.1f64.sqrt() * 4.0 / (0.25f64.powf(4.5) * 0.5f64.powf(5.5));
        assert_relative_eq!(theorem1_bound(&p), steady, max_relative = 1e-14);
        let ib = intermediate_bounds(&p);
        assert!(ib.err_bound > 0.0 && ib.lcs_bound > 0.0 && ib.subtraction_bound > 0.0);
        let sub_const = 40.0 * 0.5 * 0.25 * 4.0 * 0.1f64.sqrt() / (0.25f64.powf(4.5) * 0.5f64.powf(5.5));
        assert_relative_eq!(ib.subtraction_bound, sub_const, max_relative = 1e-14);
    }

    #[test]
    fn small_alpha_shrinks_the_steady_term() {
        let small = |alpha: f64| theorem1_bound(&BoundParams::new(alpha, 0.5, 0.25, 0.25, 4, 0).unwrap());
        assert!(small(1e-20) < 1e-2);
        assert_relative_eq!(small(1e-6) / small(1e-8), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn corollary_tends_to_the_steady_term() {
        let p = params(100_000_000);
        assert_relative_eq!(corollary1_bound(&p).unwrap(), p.steady_term(), max_relative = 1e-12);
    }

    #[test]
    fn noise_energy_examples() {
        assert_eq!(noise_energy_limit(0.5), 64.0);
        assert_eq!(noise_energy_limit(0.0), 16.0);
    }

    #[test]
    fn linear_bound_examples() {
        assert_eq!(linear_system_bound(5, 0.0, 4, 0.25, 0.5, 0.0), 0.0);
        let first = 3.0 * 0.05f64.sqrt() * 4.0 / (0.5 * 0.5f64.powf(1.5));
        assert_relative_eq!(linear_system_bound(0, 0.05, 4, 0.25, 0.5, 1.5), first + 4.0 * 1.5, max_relative = 1e-14);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(BoundParams::new(1.0, 0.5, 0.25, 0.25, 4, 0).is_err());
        assert!(BoundParams::new(0.1, 1.0, 0.25, 0.25, 4, 0).is_err());
        assert!(BoundParams::new(0.1, 0.5, 0.5, 0.25, 4, 0).is_err());
        assert!(BoundParams::new(0.1, 0.5, 0.25, 0.25, 0, 0).is_err());
        // ρ rounds to one
        let flat = BoundParams::new(1e-300, 0.5, 0.25, 0.25, 4, 0).unwrap();
        assert!(corollary1_bound(&flat).is_err());
    }

    #[test]
    fn curve_examples() {
        let c = empirical_error_curve(&[vec![0.0; 5]]).unwrap();
        assert_eq!(c.mean, vec![0.0; 5]);
        assert_eq!(c.se, vec![0.0; 5]);
        let c = empirical_error_curve(&[vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(c.mean, vec![2.0, 2.0]);
        assert_eq!(c.se, vec![1.0, 1.0]);
        let c = empirical_error_curve(&[vec![0.1], vec![0.1], vec![0.1]]).unwrap();
        assert_eq!((c.mean[0], c.se[0]), (0.1, 0.0));
        assert!(empirical_error_curve::<f64>(&[]).is_err());
        assert!(empirical_error_curve(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn bound_csv_layout() {
        let c = empirical_error_curve(&[vec![1.0, 0.5]]).unwrap();
        let mut buf = Vec::new();
        write_bound_csv(&c, &params(0), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema=sdq-bound/1");
        assert_eq!(lines[1], "k,empirical_mean,empirical_se,theorem1,corollary1");
        assert_eq!(lines.len(), 4);
    }

    proptest! {
        #[test]
        fn theorem_dominates_its_components(
            alpha in 0.001f64..0.99, gamma in 0.0f64..0.99,
            d_min in 0.01f64..1.0, ratio in 0.0f64..1.0, n_sa in 1usize..50, k in 0u64..100_000,
        ) {
            let d_max = d_min + ratio * (1.0 - d_min);
            let p = BoundParams::new(alpha, gamma, d_min, d_max, n_sa, k).unwrap();
            let ib = intermediate_bounds(&p);
            let t1 = theorem1_bound(&p);
            prop_assert!(t1 >= (ib.lcs_bound + ib.subtraction_bound) * (1.0 - 1e-12));
            let c1 = corollary1_bound(&p).unwrap();
            prop_assert!(c1 >= t1 * (1.0 - 1e-12));
        }
    }
}
