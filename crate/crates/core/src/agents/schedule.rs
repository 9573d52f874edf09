use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration<T> {
    Constant(T),
    /// ε(s) = 1/√n(s), n(s) counting the current visit.
    InverseSqrtStateVisits,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize<T> {
    Constant(T),
    /// α = 1/n(s,a) with the updated estimator's own counter.
    InverseSaVisits,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule<T> {
    pub epsilon: Exploration<T>,
    pub alpha: StepSize<T>,
}

impl<T: Scalar> Schedule<T> {
    pub fn new(epsilon: Exploration<T>, alpha: StepSize<T>) -> Result<Self> {
        if let Exploration::Constant(e) = epsilon {
            if !(e >= T::zero() && e <= T::one()) {
                return Err(Error::Precondition(format!("epsilon = {e} not in [0, 1]")));
            }
        }
        if let StepSize::Constant(a) = alpha {
            if !(a > T::zero() && a < T::one()) {
                return Err(Error::Precondition(format!("alpha = {a} not in (0, 1)")));
            }
        }
        Ok(Self { epsilon, alpha })
    }

    pub fn constant(epsilon: T, alpha: T) -> Result<Self> {
        Self::new(Exploration::Constant(epsilon), StepSize::Constant(alpha))
    }

    /// `visits` includes the current visit, so it is at least one.
    pub fn epsilon_at(&self, visits: u64) -> T {
        match self.epsilon {
            Exploration::Constant(e) => e,
            Exploration::InverseSqrtStateVisits => T::one() / T::of(visits.max(1) as f64).sqrt(),
        }
    }

    /// `count` is the estimator's counter after incrementing for this update.
    pub fn alpha_at(&self, count: u64) -> T {
        match self.alpha {
            StepSize::Constant(a) => a,
            StepSize::InverseSaVisits => {
                debug_assert!(count >= 1, "counts are incremented before the step size is read");
                T::one() / T::of(count.max(1) as f64)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let c = Schedule::constant(0.1, 0.01).unwrap();
        assert_eq!(c.alpha_at(1), 0.01);
        assert_eq!(c.alpha_at(1000), 0.01);
        assert_eq!(c.epsilon_at(7), 0.1);
        let inv = Schedule::<f64>::new(Exploration::InverseSqrtStateVisits, StepSize::InverseSaVisits).unwrap();
        assert_eq!(inv.alpha_at(1), 1.0);
        assert_eq!(inv.alpha_at(4), 0.25);
        assert_eq!(inv.epsilon_at(4), 0.5);
        assert_eq!(inv.epsilon_at(1), 1.0);
    }

    #[test]
    fn out_of_range_constants_are_rejected() {
        assert!(Schedule::constant(1.5, 0.1).is_err());
        assert!(Schedule::constant(0.1, 1.0).is_err());
        assert!(Schedule::constant(0.1, 0.0).is_err());
        assert!(Schedule::constant(0.0, 0.5).is_ok());
    }
}
