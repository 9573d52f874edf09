//! The original SDQ iteration advanced together with its upper/lower
//! comparison systems and the error systems, all driven by one shared sample
//! (hence identical noise) per step.
//!
//! Comparison systems are stored as deviations from Q*; error systems are
//! stored as they are (they track Qᴬ − Qᴮ).

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::vec_inf_norm;
use crate::switching::{sdq_vector_step, DynamicsContext, Sample};
use crate::Scalar;

/// Elementwise ordering tolerance.
pub const SANDWICH_TOL: f64 = 1e-9;
/// Tolerance of the `err = qa − qb` identity.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Agreement between direct differences and the noise-free recursions.
pub const SUBTRACTION_TOL: f64 = 1e-10;
pub const TRACE_SCHEMA: &str = "sdq-trace/1";

/// Initial estimators; every comparison system starts at the equality case.
#[derive(Debug, Clone, PartialEq)]
pub struct LockstepInit<T> {
    pub qa0: Vec<T>,
    pub qb0: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockstepState<T> {
    pub qa: Vec<T>,
    pub qb: Vec<T>,
    /// Qᴬᵁ − Q*, with Qᴮᵁ, Qᴬᴸ, Qᴮᴸ below in the same form.
    pub xa_u: Vec<T>,
    pub xb_u: Vec<T>,
    pub xa_l: Vec<T>,
    pub xb_l: Vec<T>,
    pub err: Vec<T>,
    pub err_u: Vec<T>,
    pub err_l: Vec<T>,
    pub err_ul: Vec<T>,
    /// Noise of the step that produced this state (zero at k = 0).
    pub w_a: Vec<T>,
    pub w_b: Vec<T>,
    pub sample: Option<Sample<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockstepTrace<T> {
    pub q_star: Vec<T>,
    pub states: Vec<LockstepState<T>>,
}

impl<T: Scalar> LockstepTrace<T> {
    /// Number of steps taken (states − 1).
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dev_a(&self, k: usize) -> Vec<T> {
        sub(&self.states[k].qa, &self.q_star)
    }

    pub fn dev_b(&self, k: usize) -> Vec<T> {
        sub(&self.states[k].qb, &self.q_star)
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|st| {
            [
                &st.qa, &st.qb, &st.xa_u, &st.xb_u, &st.xa_l, &st.xb_l, &st.err, &st.err_u, &st.err_l, &st.err_ul,
                &st.w_a, &st.w_b,
            ]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
        })
    }
}

fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

fn add_in<T: Scalar>(acc: &mut [T], v: &[T], c: T) {
    acc.iter_mut().zip(v).for_each(|(a, &x)| *a = *a + c * x);
}

/// αγ DP (Π_σ1 x − Π_σ2 y).
fn cross<T: Scalar>(ctx: &DynamicsContext<T>, s1: &[usize], x: &[T], s2: &[usize], y: &[T]) -> Vec<T> {
    let diff = sub(&ctx.select(x, s1), &ctx.select(y, s2));
    let c = ctx.alpha() * ctx.gamma();
    ctx.dp(&diff).into_iter().map(|v| c * v).collect()
}

pub fn lockstep_simulate<T: Scalar, R: Rng + ?Sized>(
    ctx: &DynamicsContext<T>,
    init: &LockstepInit<T>,
    steps: usize,
    rng: &mut R,
) -> Result<LockstepTrace<T>> {
    let n = ctx.n_sa();
    for v in [&init.qa0, &init.qb0] {
        if v.len() != n {
            return Err(Error::Length {
                what: "initial estimator",
                expected: n,
                got: v.len(),
            });
        }
    }
    let q_star = ctx.q_star().values().to_vec();
    let sigma_star = ctx.pi_star().actions().to_vec();
    let alpha = ctx.alpha();
    let xa0 = sub(&init.qa0, &q_star);
    let xb0 = sub(&init.qb0, &q_star);
    let err0 = sub(&init.qa0, &init.qb0);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(LockstepState {
        qa: init.qa0.clone(),
        qb: init.qb0.clone(),
        xa_u: xa0.clone(),
        xb_u: xb0.clone(),
        xa_l: xa0,
        xb_l: xb0,
        err: err0.clone(),
        err_u: err0.clone(),
        err_l: err0.clone(),
        err_ul: err0,
        w_a: vec![T::zero(); n],
        w_b: vec![T::zero(); n],
        sample: None,
    });
    for _ in 0..steps {
        let cur = states.last().expect("initial state present");
        let sample = ctx.sample(rng);
        let step = sdq_vector_step(ctx, &cur.qa, &cur.qb, &sample);
        let sa = ctx.greedy(&cur.qa);
        let sb = ctx.greedy(&cur.qb);
        let s_err_u = ctx.greedy(&cur.err_u);
        let dw = sub(&step.w_a, &step.w_b);

        let mut xa_u = ctx.apply_system(&cur.xa_u, &sb);
        add_in(&mut xa_u, &step.w_a, alpha);
        let mut xb_u = ctx.apply_system(&cur.xb_u, &sa);
        add_in(&mut xb_u, &step.w_b, alpha);

        let mut xa_l = ctx.apply_system(&cur.xa_l, &sigma_star);
        add_in(&mut xa_l, &cross(ctx, &sb, &cur.err, &sigma_star, &cur.err), T::one());
        add_in(&mut xa_l, &step.w_a, alpha);
        let mut xb_l = ctx.apply_system(&cur.xb_l, &sigma_star);
        add_in(&mut xb_l, &cross(ctx, &sigma_star, &cur.err, &sa, &cur.err), T::one());
        add_in(&mut xb_l, &step.w_b, alpha);

        let mut err = ctx.apply_diag_decay(&cur.err);
        add_in(&mut err, &cross(ctx, &sb, &cur.qa, &sa, &cur.qb), T::one());
        add_in(&mut err, &dw, alpha);
        let mut err_u = ctx.apply_system(&cur.err_u, &s_err_u);
        add_in(&mut err_u, &dw, alpha);
        let mut err_l = ctx.apply_system(&cur.err_l, &sb);
        add_in(&mut err_l, &dw, alpha);
        let mut err_ul = ctx.apply_system(&cur.err_ul, &sigma_star);
        add_in(&mut err_ul, &dw, alpha);

        states.push(LockstepState {
            qa: step.qa,
            qb: step.qb,
            xa_u,
            xb_u,
            xa_l,
            xb_l,
            err,
            err_u,
            err_l,
            err_ul,
            w_a: step.w_a,
            w_b: step.w_b,
            sample: Some(sample),
        });
    }
    Ok(LockstepTrace { q_star, states })
}

/// The checked orderings, each read as `larger − smaller ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    UpperA,
    LowerA,
    UpperB,
    LowerB,
    ErrUpper,
    ErrLower,
    ErrUpperOverUpperLower,
    /// |err − (qa − qb)|, checked against [`IDENTITY_TOL`].
    ErrIdentity,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::UpperA,
        Relation::LowerA,
        Relation::UpperB,
        Relation::LowerB,
        Relation::ErrUpper,
        Relation::ErrLower,
        Relation::ErrUpperOverUpperLower,
        Relation::ErrIdentity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::UpperA => "qa_U - qa",
            Relation::LowerA => "qa - qa_L",
            Relation::UpperB => "qb_U - qb",
            Relation::LowerB => "qb - qb_L",
            Relation::ErrUpper => "err_U - err",
            Relation::ErrLower => "err - err_L",
            Relation::ErrUpperOverUpperLower => "err_U - err_UL",
            Relation::ErrIdentity => "|err - (qa - qb)|",
        }
    }

    fn is_upper(self) -> bool {
        matches!(
            self,
            Relation::UpperA | Relation::UpperB | Relation::ErrUpper | Relation::ErrUpperOverUpperLower
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub relation: Relation,
    pub coordinate: usize,
    /// Signed slack (negative for an ordering, the gap for the identity).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub steps: usize,
    pub tol: f64,
    /// Smallest slack per ordering over all steps and coordinates.
    pub min_slack: Vec<(Relation, f64)>,
    pub max_identity_gap: f64,
    pub violation_count: usize,
    /// The first violations found (capped).
    pub violations: Vec<Violation>,
}

impl SandwichReport {
    pub const MAX_LISTED: usize = 64;

    pub fn ok(&self) -> bool {
        self.violation_count == 0
    }

    pub fn slack(&self, rel: Relation) -> f64 {
        self.min_slack
            .iter()
            .find(|(r, _)| *r == rel)
            .map_or(f64::INFINITY, |&(_, v)| v)
    }
}

/// Slack vectors of every ordering at step `k`.
fn slacks<T: Scalar>(trace: &LockstepTrace<T>, k: usize) -> Vec<(Relation, Vec<T>)> {
    let st = &trace.states[k];
    let xa = trace.dev_a(k);
    let xb = trace.dev_b(k);
    let id: Vec<T> = st
        .err
        .iter()
        .zip(&st.qa)
        .zip(&st.qb)
        .map(|((&e, &a), &b)| (e - (a - b)).abs())
        .collect();
    vec![
        (Relation::UpperA, sub(&st.xa_u, &xa)),
        (Relation::LowerA, sub(&xa, &st.xa_l)),
        (Relation::UpperB, sub(&st.xb_u, &xb)),
        (Relation::LowerB, sub(&xb, &st.xb_l)),
        (Relation::ErrUpper, sub(&st.err_u, &st.err)),
        (Relation::ErrLower, sub(&st.err, &st.err_l)),
        (Relation::ErrUpperOverUpperLower, sub(&st.err_u, &st.err_ul)),
        (Relation::ErrIdentity, id),
    ]
}

/// Checks every ordering elementwise at every step with tolerance `tol`,
/// and the error identity with [`IDENTITY_TOL`].
pub fn verify_sandwich<T: Scalar>(trace: &LockstepTrace<T>, tol: f64) -> SandwichReport {
    let mut report = SandwichReport {
        steps: trace.steps(),
        tol,
        min_slack: Relation::ALL[..7].iter().map(|&r| (r, f64::INFINITY)).collect(),
        max_identity_gap: 0.0,
        violation_count: 0,
        violations: Vec::new(),
    };
    for k in 0..trace.states.len() {
        for (rel, v) in slacks(trace, k) {
            for (i, x) in v.iter().map(|x| x.as_f64()).enumerate() {
                let bad = if rel == Relation::ErrIdentity {
                    report.max_identity_gap = report.max_identity_gap.max(x);
                    !(x <= IDENTITY_TOL)
                } else {
                    let slot = report.min_slack.iter_mut().find(|(r, _)| *r == rel).expect("listed");
                    slot.1 = slot.1.min(x);
                    !(x >= -tol)
                };
                if bad {
                    report.violation_count += 1;
                    if report.violations.len() < SandwichReport::MAX_LISTED {
                        report.violations.push(Violation {
                            step: k,
                            relation: rel,
                            coordinate: i,
                            value: x,
                        });
                    }
                }
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubtractionReport {
    /// Max |direct − recursion| over steps, per difference sequence:
    /// err_U − err_UL, err_U − err_L, qa_U − qa_L, qb_U − qb_L.
    pub max_gap: [f64; 4],
    pub steps: usize,
}

impl SubtractionReport {
    pub const NAMES: [&'static str; 4] = ["err_U - err_UL", "err_U - err_L", "qa_U - qa_L", "qb_U - qb_L"];

    pub fn worst(&self) -> f64 {
        self.max_gap.iter().copied().fold(0.0, f64::max)
    }

    pub fn ok(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

/// Propagates the four difference sequences through their noise-free
/// recursions, starting from the stored step-0 differences, and compares
/// them with the differences of the stored states.
pub fn subtraction_recursions<T: Scalar>(trace: &LockstepTrace<T>, ctx: &DynamicsContext<T>) -> SubtractionReport {
    let star = ctx.pi_star().actions().to_vec();
    let s0 = &trace.states[0];
    let mut rec = [
        sub(&s0.err_u, &s0.err_ul),
        sub(&s0.err_u, &s0.err_l),
        sub(&s0.xa_u, &s0.xa_l),
        sub(&s0.xb_u, &s0.xb_l),
    ];
    let mut max_gap = [0.0f64; 4];
    for k in 0..trace.steps() {
        let st = &trace.states[k];
        let sa = ctx.greedy(&st.qa);
        let sb = ctx.greedy(&st.qb);
        let se = ctx.greedy(&st.err_u);

        let mut d0 = ctx.apply_system(&rec[0], &se);
        add_in(&mut d0, &cross(ctx, &se, &st.err_ul, &star, &st.err_ul), T::one());

        let mut d1 = ctx.apply_system(&rec[1], &sb);
        add_in(&mut d1, &cross(ctx, &se, &st.err_u, &sb, &st.err_u), T::one());

        let mut d2 = ctx.apply_diag_decay(&rec[2]);
        add_in(&mut d2, &cross(ctx, &sb, &st.xa_u, &star, &st.xa_l), T::one());
        add_in(&mut d2, &cross(ctx, &sb, &st.err, &star, &st.err), -T::one());

        let mut d3 = ctx.apply_diag_decay(&rec[3]);
        add_in(&mut d3, &cross(ctx, &sa, &st.xb_u, &star, &st.xb_l), T::one());
        add_in(&mut d3, &cross(ctx, &star, &st.err, &sa, &st.err), -T::one());

        rec = [d0, d1, d2, d3];
        let nx = &trace.states[k + 1];
        let direct = [
            sub(&nx.err_u, &nx.err_ul),
            sub(&nx.err_u, &nx.err_l),
            sub(&nx.xa_u, &nx.xa_l),
            sub(&nx.xb_u, &nx.xb_l),
        ];
        for j in 0..4 {
            let gap = vec_inf_norm(&sub(&direct[j], &rec[j])).as_f64();
            max_gap[j] = max_gap[j].max(gap);
        }
    }
    SubtractionReport {
        max_gap,
        steps: trace.steps(),
    }
}

/// Per-step summary CSV, preceded by a `# schema=` comment line.
pub fn write_trace_csv<T: Scalar, W: Write>(trace: &LockstepTrace<T>, mut out: W) -> Result<()> {
    writeln!(out, "# schema={TRACE_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "k",
        "qa_err_inf",
        "qb_err_inf",
        "q_err_inf",
        "qa_upper_err_inf",
        "qa_lower_err_inf",
        "min_slack_upper",
        "min_slack_lower",
    ])?;
    for k in 0..trace.states.len() {
        let st = &trace.states[k];
        let (mut up, mut lo) = (f64::INFINITY, f64::INFINITY);
        for (rel, v) in slacks(trace, k) {
            if rel == Relation::ErrIdentity {
                continue;
            }
            let m = v.iter().map(|x| x.as_f64()).fold(f64::INFINITY, f64::min);
            if rel.is_upper() {
                up = up.min(m);
            } else {
                lo = lo.min(m);
            }
        }
        let f = |v: &[T]| format!("{:e}", vec_inf_norm(v).as_f64());
        w.write_record([
            k.to_string(),
            f(&trace.dev_a(k)),
            f(&trace.dev_b(k)),
            f(&st.err),
            f(&st.xa_u),
            f(&st.xa_l),
            format!("{up:e}"),
            format!("{lo:e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
