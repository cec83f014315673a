use std::collections::BTreeMap;

use ordered_float::OrderedFloat;

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RollingMetrics {
    pub mean: Vec<f64>,
    pub cvar: Vec<f64>,
}

/// Number of samples in the lower `tau` tail of `n` samples.
pub fn tail_count(n: usize, tau: f64) -> usize {
    ((tau * n as f64).ceil() as usize).clamp(1, n.max(1))
}

/// Mean of the lowest `ceil(tau * n)` values.
pub fn empirical_cvar(values: &[f64], tau: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    let k = tail_count(v.len(), tau);
    let (low, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    (low.iter().sum::<f64>() + *kth) / k as f64
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// The trailing `window` entries (or all of them if fewer).
pub fn final_window<T>(values: &[T], window: usize) -> &[T] {
    &values[values.len().saturating_sub(window)..]
}

/// Sorted multiset split into the `k` smallest values and the rest.
#[derive(Default)]
struct TailSplit {
    low: BTreeMap<OrderedFloat<f64>, usize>,
    high: BTreeMap<OrderedFloat<f64>, usize>,
    low_len: usize,
    low_sum: f64,
}

fn add(map: &mut BTreeMap<OrderedFloat<f64>, usize>, x: OrderedFloat<f64>) {
    *map.entry(x).or_insert(0) += 1;
}

fn take(map: &mut BTreeMap<OrderedFloat<f64>, usize>, x: OrderedFloat<f64>) -> bool {
    match map.get_mut(&x) {
        Some(c) if *c > 1 => {
            *c -= 1;
            true
        }
        Some(_) => {
            map.remove(&x);
            true
        }
        None => false,
    }
}

impl TailSplit {
    fn insert(&mut self, x: f64) {
        let key = OrderedFloat(x);
        match self.low.last_key_value() {
            Some((max, _)) if key <= *max => {
                add(&mut self.low, key);
                self.low_len += 1;
                self.low_sum += x;
            }
            _ => add(&mut self.high, key),
        }
    }

    fn remove(&mut self, x: f64) {
        let key = OrderedFloat(x);
        if take(&mut self.low, key) {
            self.low_len -= 1;
            self.low_sum -= x;
        } else {
            let found = take(&mut self.high, key);
            debug_assert!(found, "removed value was never inserted");
        }
    }

    fn rebalance(&mut self, k: usize) {
        while self.low_len > k {
            let (&max, _) = self.low.last_key_value().expect("non-empty");
            take(&mut self.low, max);
            self.low_len -= 1;
            self.low_sum -= max.0;
            add(&mut self.high, max);
        }
        while self.low_len < k {
            let Some((&min, _)) = self.high.first_key_value() else { break };
            take(&mut self.high, min);
            add(&mut self.low, min);
            self.low_len += 1;
            self.low_sum += min.0;
        }
    }

    fn resum(&mut self) {
        self.low_sum = self.low.iter().map(|(x, c)| x.0 * *c as f64).sum();
    }
}

/// Trailing-window mean and empirical CVaR at every step.
///
/// Before `window` steps have elapsed the available prefix is used. Running
/// sums are recomputed once per window to keep rounding error bounded.
pub fn rolling_metrics(rewards: &[f64], window: usize, tau: f64) -> Result<RollingMetrics> {
    if window == 0 {
        return Err(invalid("window must be at least 1"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(invalid(format!("tau must lie in (0, 1], got {tau}")));
    }
    let n = rewards.len();
    let mut out = RollingMetrics {
        mean: Vec::with_capacity(n),
        cvar: Vec::with_capacity(n),
    };
    let mut split = TailSplit::default();
    let mut sum = 0.0;
    for (t, &r) in rewards.iter().enumerate() {
        sum += r;
        split.insert(r);
        if t >= window {
            let old = rewards[t - window];
            sum -= old;
            split.remove(old);
        }
        let len = (t + 1).min(window);
        split.rebalance(tail_count(len, tau));
        if (t + 1) % window == 0 {
            sum = rewards[t + 1 - len..=t].iter().sum();
            split.resum();
        }
        out.mean.push(sum / len as f64);
        out.cvar.push(split.low_sum / split.low_len as f64);
    }
    Ok(out)
}

/// Trailing-window fraction of entries equal to `target`.
pub fn rolling_fraction<T: PartialEq>(values: &[T], target: &T, window: usize) -> Vec<f64> {
    let mut count = 0usize;
    values
        .iter()
        .enumerate()
        .map(|(t, v)| {
            if v == target {
                count += 1;
            }
            if t >= window && values[t - window] == *target {
                count -= 1;
            }
            count as f64 / (t + 1).min(window) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_series() {
        let m = rolling_metrics(&[0.5; 50], 7, 0.25).unwrap();
        assert!(m.mean.iter().chain(&m.cvar).all(|x| (*x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn unit_window_is_identity() {
        let r = [0.3, -1.0, 2.5, 0.0];
        let m = rolling_metrics(&r, 1, 0.5).unwrap();
        assert_eq!(m.mean, r);
        assert_eq!(m.cvar, r);
        assert!(rolling_metrics(&r, 0, 0.5).is_err());
    }

    #[test]
    fn fraction_window() {
        let f = rolling_fraction(&[1, 0, 1, 1], &1, 2);
        assert_eq!(f, vec![1.0, 0.5, 0.5, 1.0]);
    }

    proptest! {
        #[test]
        fn matches_direct_computation(
            r in prop::collection::vec(-5.0f64..5.0, 1..200),
            window in 1usize..40,
            tau in 0.05f64..1.0,
        ) {
            let m = rolling_metrics(&r, window, tau).unwrap();
            for t in 0..r.len() {
                let w = &r[(t + 1).saturating_sub(window)..=t];
                prop_assert!((m.mean[t] - mean(w)).abs() < 1e-9);
                prop_assert!((m.cvar[t] - empirical_cvar(w, tau)).abs() < 1e-9);
            }
        }
    }
}
