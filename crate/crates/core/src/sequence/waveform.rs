//! Piecewise-linear envelopes of time.
//!
//! A [`Waveform`] is an ordered list of `(time, value)` knots. Between knots
//! the value is interpolated linearly; before the first knot it holds the
//! first value and after the last knot it holds the last value. Integrals
//! are evaluated in closed form, so phases computed from a magnetic-field
//! waveform carry no quadrature error.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WaveformError {
    #[error("waveform has no knots")]
    Empty,
    #[error("knot times must be strictly increasing (knot {index}: {prev} then {next})")]
    NonMonotone { index: usize, prev: f64, next: f64 },
    #[error("knot {index} is not finite")]
    NonFinite { index: usize },
    #[error("interval [{t0}, {t1}] is reversed")]
    ReversedInterval { t0: f64, t1: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Waveform {
    knots: Vec<(f64, f64)>,
}

impl Waveform {
    /// Builds a waveform, checking that knot times strictly increase and
    /// that every entry is finite. An empty knot list is accepted here and
    /// rejected at evaluation time.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, WaveformError> {
        for (index, &(t, v)) in knots.iter().enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(WaveformError::NonFinite { index });
            }
        }
        for (index, pair) in knots.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 {
                return Err(WaveformError::NonMonotone {
                    index: index + 1,
                    prev: pair[0].0,
                    next: pair[1].0,
                });
            }
        }
        Ok(Self { knots })
    }

    /// A waveform holding `value` at all times.
    pub fn constant(value: f64) -> Self {
        Self {
            knots: vec![(0.0, value)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Every value multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            knots: self.knots.iter().map(|&(t, v)| (t, v * alpha)).collect(),
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<f64, WaveformError> {
        if self.knots.is_empty() {
            return Err(WaveformError::Empty);
        }
        Ok(self.value_at(t))
    }

    /// Same as [`evaluate`](Self::evaluate) but returns 0 for an empty
    /// waveform. Used in integration loops after validation.
    pub fn value_at(&self, t: f64) -> f64 {
        let knots = &self.knots;
        let Some(&(t_first, v_first)) = knots.first() else {
            return 0.0;
        };
        if t <= t_first {
            return v_first;
        }
        let (t_last, v_last) = knots[knots.len() - 1];
        if t >= t_last {
            return v_last;
        }
        // first knot strictly after t; guaranteed in 1..len
        let hi = knots.partition_point(|&(tk, _)| tk <= t);
        let (t0, v0) = knots[hi - 1];
        let (t1, v1) = knots[hi];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Largest absolute value over all time.
    pub fn max_abs(&self) -> f64 {
        self.knots.iter().fold(0.0, |m, &(_, v)| m.max(v.abs()))
    }

    pub fn max_value(&self) -> Option<f64> {
        self.knots.iter().map(|&(_, v)| v).reduce(f64::max)
    }

    /// Exact integral over `[t0, t1]`.
    pub fn integral(&self, t0: f64, t1: f64) -> Result<f64, WaveformError> {
        if self.knots.is_empty() {
            return Err(WaveformError::Empty);
        }
        if t0 > t1 {
            return Err(WaveformError::ReversedInterval { t0, t1 });
        }
        Ok(self.antiderivative(t1) - self.antiderivative(t0))
    }

    /// Antiderivative anchored at the first knot.
    fn antiderivative(&self, t: f64) -> f64 {
        let knots = &self.knots;
        let (t_first, v_first) = knots[0];
        if t <= t_first {
            return v_first * (t - t_first);
        }
        let mut area = 0.0;
        for pair in knots.windows(2) {
            let (ta, va) = pair[0];
            let (tb, vb) = pair[1];
            if t >= tb {
                area += 0.5 * (va + vb) * (tb - ta);
            } else {
                let vt = va + (vb - va) * (t - ta) / (tb - ta);
                return area + 0.5 * (va + vt) * (t - ta);
            }
        }
        let (t_last, v_last) = knots[knots.len() - 1];
        area + v_last * (t - t_last)
    }
}
