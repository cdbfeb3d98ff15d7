use crate::error::{config, Result};
use crate::num::Real;

/// A scalar diagnostic sampled on a strictly increasing time grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries<T> {
    times: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new() -> Self {
        Self { times: Vec::new(), values: Vec::new() }
    }

    pub fn from_parts(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return config("time series: times and values differ in length");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return config("time series: times must be strictly increasing");
        }
        Ok(Self { times, values })
    }

    /// Appends a sample. Samples at a time not after the last one replace it.
    pub fn push(&mut self, t: T, value: T) {
        if let Some(&last) = self.times.last() {
            if t <= last {
                let n = self.values.len();
                self.values[n - 1] = value;
                return;
            }
        }
        self.times.push(t);
        self.values.push(value);
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(T, T)> {
        Some((*self.times.last()?, *self.values.last()?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    /// Linear interpolation; `None` outside the sampled window.
    pub fn interpolate(&self, t: T) -> Option<T> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Some(self.values[0]);
        }
        if k == n {
            return Some(self.values[n - 1]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Some(self.values[k - 1] + w * (self.values[k] - self.values[k - 1]))
    }

    /// Sup-distance to `other` over the overlap of both windows, evaluated on
    /// the union of sample times with linear interpolation.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        let (Some(&a0), Some(&b0)) = (self.times.first(), other.times.first()) else {
            return config("sup distance of an empty series");
        };
        let lo = a0.max(b0);
        let hi = self.times[self.len() - 1].min(other.times[other.len() - 1]);
        if hi < lo {
            return config("time series windows are disjoint");
        }
        let mut sup = T::zero();
        let probe = self.times.iter().chain(other.times.iter()).filter(|&&t| t >= lo && t <= hi);
        for &t in probe {
            if let (Some(a), Some(b)) = (self.interpolate(t), other.interpolate(t)) {
                sup = sup.max((a - b).abs());
            }
        }
        Ok(sup)
    }

    /// Least-squares line `(intercept, slope)` through the samples.
    pub fn linear_fit(&self) -> Option<(T, T)> {
        let n = self.len();
        if n < 2 {
            return None;
        }
        let nf = T::from_usize_lossy(n);
        let mean_t = self.times.iter().copied().sum::<T>() / nf;
        let mean_v = self.values.iter().copied().sum::<T>() / nf;
        let (mut stt, mut stv) = (T::zero(), T::zero());
        for (t, v) in self.iter() {
            stt = stt + (t - mean_t) * (t - mean_t);
            stv = stv + (t - mean_t) * (v - mean_v);
        }
        if stt == T::zero() {
            return None;
        }
        let slope = stv / stt;
        Some((mean_v - slope * mean_t, slope))
    }

    pub fn max_value(&self) -> Option<T> {
        self.values.iter().copied().reduce(T::max)
    }

    pub fn min_value(&self) -> Option<T> {
        self.values.iter().copied().reduce(T::min)
    }

    /// Samples with `lo <= t <= hi`.
    pub fn window(&self, lo: T, hi: T) -> Self {
        let (times, values) = self.iter().filter(|&(t, _)| t >= lo && t <= hi).unzip();
        Self { times, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_distance() {
        let a = TimeSeries::from_parts(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(a.interpolate(0.5), Some(0.5));
        assert_eq!(a.interpolate(2.5), None);
        assert_eq!(a.sup_distance(&a).unwrap(), 0.0);
        let b = TimeSeries::from_parts(vec![3.0, 4.0], vec![0.0, 0.0]).unwrap();
        assert!(a.sup_distance(&b).is_err());
    }

    #[test]
    fn rejects_unordered_times() {
        assert!(TimeSeries::from_parts(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::<f64>::from_parts(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn fit_recovers_a_line() {
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let values = times.iter().map(|t| 3.0 - 0.25 * t).collect();
        let s = TimeSeries::from_parts(times, values).unwrap();
        let (a, b) = s.linear_fit().unwrap();
        assert!((a - 3.0).abs() < 1e-12 && (b + 0.25).abs() < 1e-12);
    }
}
