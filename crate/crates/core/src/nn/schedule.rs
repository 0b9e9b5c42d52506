//! Learning-rate schedule.

/// Exponential decay between two endpoint rates: at epoch `0` the rate is
/// `lr_start`, at `total_epochs` it is `lr_end`, geometric in between.
pub fn lr_between(lr_start: f64, lr_end: f64, epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs == 0 {
        return lr_start;
    }
    let frac = epoch as f64 / total_epochs as f64;
    lr_start * (lr_end / lr_start).powf(frac)
}

/// Default training schedule: `1e-4` decaying to `1e-6` over the run.
pub fn lr_schedule(epoch: usize, total_epochs: usize) -> f64 {
    lr_between(1e-4, 1e-6, epoch, total_epochs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn endpoints_and_midpoint() {
        assert_relative_eq!(lr_schedule(0, 1000), 1e-4, max_relative = 1e-12);
        assert_relative_eq!(lr_schedule(1000, 1000), 1e-6, max_relative = 1e-12);
        assert_relative_eq!(lr_schedule(500, 1000), 1e-5, max_relative = 1e-12);
    }

    #[test]
    fn monotone_decay() {
        let mut prev = f64::INFINITY;
        for e in 0..=20 {
            let lr = lr_schedule(e, 20);
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn zero_total_epochs_holds_start_rate() {
        assert_eq!(lr_schedule(0, 0), 1e-4);
    }
}
