//! Rolling per-track windows of recognizer outputs and the averaged values
//! shown on screen.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AttributeMeasurement, Expression, ExpressionDist, Gender, Timestamp, NUM_EXPRESSIONS,
};

pub const DEFAULT_WINDOW: usize = 8;

#[derive(Debug, Clone)]
struct Window<T> {
    entries: VecDeque<(T, Timestamp)>,
}

impl<T> Window<T> {
    fn new() -> Self {
        Window {
            entries: VecDeque::new(),
        }
    }

    /// Insert keeping measurement-time order; equal times keep arrival order.
    fn insert(&mut self, value: T, at: Timestamp, capacity: usize) {
        let pos = self.entries.partition_point(|(_, t)| *t <= at);
        self.entries.insert(pos, (value, at));
        while self.entries.len() > capacity {
            self.entries.pop_front();
        }
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn newest(&self) -> Option<Timestamp> {
        self.entries.back().map(|(_, t)| *t)
    }

    fn values(&self) -> impl Iterator<Item = &T> {
        self.entries.iter().map(|(v, _)| v)
    }
}

/// Bounded FIFO windows, one per attribute, all with the same capacity.
#[derive(Debug, Clone)]
pub struct AttributeWindows {
    capacity: usize,
    age: Window<f64>,
    gender: Window<f64>,
    expression: Window<ExpressionDist>,
}

impl Default for AttributeWindows {
    fn default() -> Self {
        AttributeWindows::new(DEFAULT_WINDOW).expect("default window is positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleCounts {
    pub age: usize,
    pub gender: usize,
    pub expression: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenderEstimate {
    pub label: Gender,
    pub p_female: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpressionEstimate {
    pub label: Expression,
    pub probabilities: ExpressionDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedAttributes {
    pub age: Option<f64>,
    pub gender: Option<GenderEstimate>,
    pub expression: Option<ExpressionEstimate>,
    pub sample_counts: SampleCounts,
    /// Time of the newest measurement that went into any attribute.
    pub newest_measurement: Timestamp,
}

impl AttributeWindows {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "aggregation window must hold at least one sample".into(),
            ));
        }
        Ok(AttributeWindows {
            capacity,
            age: Window::new(),
            gender: Window::new(),
            expression: Window::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn counts(&self) -> SampleCounts {
        SampleCounts {
            age: self.age.len(),
            gender: self.gender.len(),
            expression: self.expression.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.age.len() + self.gender.len() + self.expression.len() == 0
    }

    pub fn ages(&self) -> Vec<f64> {
        self.age.values().copied().collect()
    }

    pub fn update(&mut self, m: &AttributeMeasurement) -> Result<()> {
        m.validate()?;
        let at = m.measured_at;
        if let Some(age) = m.age {
            self.age.insert(age, at, self.capacity);
        }
        if let Some(p) = m.gender_p_female {
            self.gender.insert(p, at, self.capacity);
        }
        if let Some(dist) = m.expression {
            self.expression.insert(dist, at, self.capacity);
        }
        Ok(())
    }

    pub fn smoothed(&self) -> Option<SmoothedAttributes> {
        if self.is_empty() {
            return None;
        }
        let age = mean(self.age.values().copied());
        let gender = mean(self.gender.values().copied()).map(|p| GenderEstimate {
            label: Gender::from_p_female(p),
            p_female: p,
        });
        let expression = (self.expression.len() > 0).then(|| {
            let mut acc = [0.0; NUM_EXPRESSIONS];
            for dist in self.expression.values() {
                for (a, p) in acc.iter_mut().zip(dist.probabilities()) {
                    *a += p;
                }
            }
            let n = self.expression.len() as f64;
            let probabilities = ExpressionDist::normalized(acc.map(|a| a / n))
                .expect("mean of distributions is a distribution");
            ExpressionEstimate {
                label: probabilities.argmax(),
                probabilities,
            }
        });
        let newest_measurement = [
            self.age.newest(),
            self.gender.newest(),
            self.expression.newest(),
        ]
        .into_iter()
        .flatten()
        .max()
        .expect("at least one window is non-empty");
        Some(SmoothedAttributes {
            age,
            gender,
            expression,
            sample_counts: self.counts(),
            newest_measurement,
        })
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
