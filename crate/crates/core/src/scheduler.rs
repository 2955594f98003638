//! Per-track cadence of the three attribute recognizers.
//!
//! Expression runs every cycle by default while age and gender run every
//! fourth, which takes three 200 ms networks from 600 ms per face down to a
//! long-run mean of 300 ms.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Age,
    Gender,
    Expression,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Age, Task::Gender, Task::Expression];
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Age => "age",
            Task::Gender => "gender",
            Task::Expression => "expression",
        })
    }
}

/// Subset of the three recognizer tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TaskSet {
    pub age: bool,
    pub gender: bool,
    pub expression: bool,
}

impl TaskSet {
    pub const ALL: TaskSet = TaskSet {
        age: true,
        gender: true,
        expression: true,
    };

    pub fn contains(&self, task: Task) -> bool {
        match task {
            Task::Age => self.age,
            Task::Gender => self.gender,
            Task::Expression => self.expression,
        }
    }

    pub fn insert(&mut self, task: Task) {
        match task {
            Task::Age => self.age = true,
            Task::Gender => self.gender = true,
            Task::Expression => self.expression = true,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.age || self.gender || self.expression)
    }

    pub fn iter(&self) -> impl Iterator<Item = Task> + '_ {
        Task::ALL.into_iter().filter(|t| self.contains(*t))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }
}

impl FromIterator<Task> for TaskSet {
    fn from_iter<I: IntoIterator<Item = Task>>(iter: I) -> Self {
        let mut set = TaskSet::default();
        for t in iter {
            set.insert(t);
        }
        set
    }
}

impl Serialize for TaskSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for TaskSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Vec::<Task>::deserialize(d)?.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CadencePolicy {
    pub expression_every: u32,
    pub age_every: u32,
    pub gender_every: u32,
}

impl Default for CadencePolicy {
    fn default() -> Self {
        CadencePolicy {
            expression_every: 1,
            age_every: 4,
            gender_every: 4,
        }
    }
}

/// Per-task forward-pass latency in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskLatencies {
    pub age: f64,
    pub gender: f64,
    pub expression: f64,
}

impl TaskLatencies {
    pub fn uniform(ms: f64) -> Self {
        TaskLatencies {
            age: ms,
            gender: ms,
            expression: ms,
        }
    }

    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Age => self.age,
            Task::Gender => self.gender,
            Task::Expression => self.expression,
        }
    }
}

impl CadencePolicy {
    /// Every task on every cycle.
    pub const EVERY_CYCLE: CadencePolicy = CadencePolicy {
        expression_every: 1,
        age_every: 1,
        gender_every: 1,
    };

    pub fn validate(&self) -> Result<()> {
        if self.expression_every == 0 || self.age_every == 0 || self.gender_every == 0 {
            return Err(Error::Config(format!(
                "cadence periods must be at least 1: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn every(&self, task: Task) -> u32 {
        match task {
            Task::Age => self.age_every,
            Task::Gender => self.gender_every,
            Task::Expression => self.expression_every,
        }
    }

    /// Tasks due on a track's `cycle_index`-th recognition pass.
    pub fn tasks_for(&self, cycle_index: u64) -> TaskSet {
        Task::ALL
            .into_iter()
            .filter(|t| cycle_index.is_multiple_of(self.every(*t).max(1) as u64))
            .collect()
    }

    /// Long-run mean cost per face per cycle, `Σ latency / every`.
    pub fn expected_cost(&self, latency: &TaskLatencies) -> Result<f64> {
        self.validate()?;
        let mut total = 0.0;
        for t in Task::ALL {
            let ms = latency.get(t);
            if ms.is_nan() || ms < 0.0 {
                return Err(Error::invalid(format!("negative latency for {t}: {ms}")));
            }
            total += ms / self.every(t) as f64;
        }
        Ok(total)
    }

    /// Period of `tasks_for`.
    pub fn period(&self) -> u64 {
        Task::ALL
            .into_iter()
            .map(|t| self.every(t).max(1) as u64)
            .fold(1, lcm)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}
