//! Learning-rate schedule: linear warmup into cosine annealing.

use std::f64::consts::PI;

/// Step-indexed schedule. Steps 0..warmup_steps ramp linearly from 0 to
/// `lr_init`; the remainder decays as lr_init·(1+cos(π·progress))/2,
/// reaching 0 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub lr_init: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl Schedule {
    pub fn new(lr_init: f64, warmup_steps: usize, total_steps: usize) -> Self {
        assert!(warmup_steps < total_steps, "warmup must end before the final step");
        Self { lr_init, warmup_steps, total_steps }
    }
}

/// Learning rate at a global step.
pub fn lr_at(step: usize, sched: &Schedule) -> f64 {
    if sched.warmup_steps > 0 && step < sched.warmup_steps {
        return sched.lr_init * step as f64 / sched.warmup_steps as f64;
    }
    let span = (sched.total_steps - sched.warmup_steps) as f64;
    let progress = ((step - sched.warmup_steps) as f64 / span).min(1.0);
    sched.lr_init * 0.5 * (1.0 + (PI * progress).cos())
}
