use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::Scalar;

/// Shape of a tabular problem plus the per-state action availability.
///
/// Q-vectors use the stacked, action-major layout: index `a * n_states + s`,
/// i.e. one block of all states per action. Availability is a prefix count:
/// actions `0..available(s)` are legal in state `s`. Greedy selection only
/// ranges over legal actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    n_states: usize,
    n_actions: usize,
    available: Option<Vec<usize>>,
}

impl Layout {
    pub fn new(n_states: usize, n_actions: usize) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::EmptySpace);
        }
        Ok(Self {
            n_states,
            n_actions,
            available: None,
        })
    }

    pub fn with_available(n_states: usize, n_actions: usize, available: Vec<usize>) -> Result<Self> {
        let mut layout = Self::new(n_states, n_actions)?;
        if available.len() != n_states {
            return Err(Error::Length {
                what: "available actions",
                expected: n_states,
                got: available.len(),
            });
        }
        if let Some((s, &k)) = available
            .iter()
            .enumerate()
            .find(|(_, &k)| k == 0 || k > n_actions)
        {
            return Err(Error::Precondition(format!(
                "state {s} has {k} available actions (n_actions = {n_actions})"
            )));
        }
        if available.iter().any(|&k| k != n_actions) {
            layout.available = Some(available);
        }
        Ok(layout)
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// |S × A|.
    #[inline]
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize) -> usize {
        debug_assert!(s < self.n_states && a < self.n_actions);
        a * self.n_states + s
    }

    /// Inverse of [`Layout::index`].
    #[inline]
    pub fn pair(&self, index: usize) -> (usize, usize) {
        (index % self.n_states, index / self.n_states)
    }

    #[inline]
    pub fn actions(&self, s: usize) -> Range<usize> {
        0..self.available_at(s)
    }

    #[inline]
    pub fn available_at(&self, s: usize) -> usize {
        match &self.available {
            Some(v) => v[s],
            None => self.n_actions,
        }
    }

    pub fn is_restricted(&self) -> bool {
        self.available.is_some()
    }
}

/// A Q-function stored as one stacked vector over state–action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    layout: Arc<Layout>,
    values: Vec<T>,
}

impl<T: Scalar> QTable<T> {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        Self::filled(layout, T::zero())
    }

    pub fn filled(layout: Arc<Layout>, v: T) -> Self {
        let values = vec![v; layout.n_pairs()];
        Self { layout, values }
    }

    /// Wraps a stacked vector; entries must be finite.
    pub fn from_values(layout: Arc<Layout>, values: Vec<T>) -> Result<Self> {
        if values.len() != layout.n_pairs() {
            return Err(Error::Length {
                what: "Q-table",
                expected: layout.n_pairs(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Q-table"));
        }
        Ok(Self { layout, values })
    }

    pub fn from_fn(layout: Arc<Layout>, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let values = (0..layout.n_pairs())
            .map(|i| {
                let (s, a) = layout.pair(i);
                f(s, a)
            })
            .collect();
        Self { layout, values }
    }

    #[inline]
    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.layout.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.layout.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[self.layout.index(s, a)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: T) {
        let i = self.layout.index(s, a);
        self.values[i] = v;
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Greedy action at `s`: the lowest legal index attaining the maximum.
    #[inline]
    pub fn argmax_at(&self, s: usize) -> usize {
        let mut best = 0;
        let mut best_v = self.get(s, 0);
        for a in self.layout.actions(s).skip(1) {
            let v = self.get(s, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    #[inline]
    pub fn max_at(&self, s: usize) -> T {
        self.get(s, self.argmax_at(s))
    }

    pub fn inf_norm(&self) -> T {
        crate::linalg::vec_inf_norm(&self.values)
    }

    /// ∞-distance to another table of the same shape.
    pub fn inf_dist(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Elementwise `(self + other) / 2`, the acting table of two-estimator agents.
    pub fn mean_with(&self, other: &Self) -> Self {
        let two = T::one() + T::one();
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a + b) / two)
            .collect();
        Self {
            layout: self.layout.clone(),
            values,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(s: usize, a: usize) -> Arc<Layout> {
        Arc::new(Layout::new(s, a).unwrap())
    }

    #[test]
    fn stacked_index_is_action_major() {
        let l = layout(3, 2);
        assert_eq!(l.index(0, 0), 0);
        assert_eq!(l.index(2, 0), 2);
        assert_eq!(l.index(0, 1), 3);
        assert_eq!(l.pair(4), (1, 1));
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        let mut q = QTable::<f64>::zeros(layout(1, 2));
        assert_eq!(q.argmax_at(0), 0);
        q = QTable::from_values(layout(1, 3), vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(q.argmax_at(0), 1);
        assert_eq!(q.max_at(0), 3.0);
    }

    #[test]
    fn restricted_layout_ignores_illegal_actions() {
        let l = Arc::new(Layout::with_available(2, 3, vec![2, 3]).unwrap());
        let q = QTable::from_fn(l, |s, a| if a == 2 { 10.0 } else { (s + a) as f64 });
        assert_eq!(q.argmax_at(0), 1);
        assert_eq!(q.argmax_at(1), 2);
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(QTable::from_values(layout(1, 2), vec![0.0, f64::NAN]).is_err());
        assert!(QTable::from_values(layout(1, 2), vec![0.0]).is_err());
    }

    #[test]
    fn mean_of_equal_tables_is_exact() {
        let q = QTable::from_values(layout(1, 3), vec![0.1, -0.7, 1e-300]).unwrap();
        assert_eq!(q.mean_with(&q), q);
    }
}
