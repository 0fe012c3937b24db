use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution stages and their epoch budgets. The first stage only
/// stabilizes; every later stage fades its new block in, then stabilizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolutionSchedule {
    pub start_res: u32,
    pub target_res: u32,
    pub fade_epochs: u64,
    pub stable_epochs: u64,
    pub initial_stable_epochs: u64,
}

impl Default for ResolutionSchedule {
    fn default() -> Self {
        Self {
            start_res: 4,
            target_res: 256,
            fade_epochs: 30,
            stable_epochs: 30,
            initial_stable_epochs: 30,
        }
    }
}

/// Where a global epoch falls in the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadeState {
    pub stage: usize,
    pub resolution: u32,
    pub epoch_in_stage: u64,
    /// Blend weight of the newest block; 1 outside fades.
    pub alpha: f64,
}

impl ResolutionSchedule {
    pub fn validate(&self) -> Result<()> {
        if !self.start_res.is_power_of_two() || !self.target_res.is_power_of_two() {
            return Err(Error::invalid("resolutions must be powers of two"));
        }
        if self.start_res < 4 {
            return Err(Error::invalid("start resolution must be at least 4"));
        }
        if self.target_res < self.start_res {
            return Err(Error::invalid(
                "target resolution is below the start resolution",
            ));
        }
        if self.target_res > 1024 {
            return Err(Error::invalid(
                "target resolution above 1024 is not supported",
            ));
        }
        if self.initial_stable_epochs == 0 {
            return Err(Error::invalid("initial stage needs at least one epoch"));
        }
        if self.target_res > self.start_res && self.fade_epochs + self.stable_epochs == 0 {
            return Err(Error::invalid("growth stages need at least one epoch"));
        }
        Ok(())
    }

    /// `start_res, 2·start_res, …, target_res`.
    pub fn stages(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut r = self.start_res;
        while r <= self.target_res {
            out.push(r);
            r *= 2;
        }
        out
    }

    /// `(fade, stable)` epochs of stage `stage`.
    pub fn stage_epochs(&self, stage: usize) -> (u64, u64) {
        if stage == 0 {
            (0, self.initial_stable_epochs)
        } else {
            (self.fade_epochs, self.stable_epochs)
        }
    }

    pub fn total_epochs(&self) -> u64 {
        (0..self.stages().len())
            .map(|s| {
                let (f, st) = self.stage_epochs(s);
                f + st
            })
            .sum()
    }

    /// Stage, resolution and blend weight for 0-based global `epoch`.
    pub fn locate(&self, epoch: u64) -> Result<FadeState> {
        let mut remaining = epoch;
        for (stage, &resolution) in self.stages().iter().enumerate() {
            let (fade, stable) = self.stage_epochs(stage);
            if remaining < fade + stable {
                let alpha = if stage == 0 {
                    1.0
                } else {
                    fade_alpha(remaining, self)?
                };
                return Ok(FadeState {
                    stage,
                    resolution,
                    epoch_in_stage: remaining,
                    alpha,
                });
            }
            remaining -= fade + stable;
        }
        Err(Error::invalid(format!(
            "epoch {epoch} is past the end of the schedule ({} epochs)",
            self.total_epochs()
        )))
    }
}

/// Blend weight `min(1, (e+1)/fade)` of a growth stage; 1 throughout the
/// stabilization epochs.
pub fn fade_alpha(epoch_in_stage: u64, schedule: &ResolutionSchedule) -> Result<f64> {
    let (fade, stable) = (schedule.fade_epochs, schedule.stable_epochs);
    if epoch_in_stage >= fade + stable {
        return Err(Error::invalid(format!(
            "epoch {epoch_in_stage} is outside a stage of {} epochs",
            fade + stable
        )));
    }
    if epoch_in_stage + 1 >= fade {
        return Ok(1.0);
    }
    Ok((epoch_in_stage + 1) as f64 / fade as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(target: u32, fade: u64, stable: u64) -> ResolutionSchedule {
        ResolutionSchedule {
            target_res: target,
            fade_epochs: fade,
            stable_epochs: stable,
            initial_stable_epochs: stable,
            ..Default::default()
        }
    }

    #[test]
    fn alpha_table() {
        let s = sched(256, 30, 30);
        assert_eq!(fade_alpha(0, &s).unwrap(), 1.0 / 30.0);
        assert_eq!(fade_alpha(29, &s).unwrap(), 1.0);
        assert_eq!(fade_alpha(45, &s).unwrap(), 1.0);
        assert!(matches!(fade_alpha(60, &s), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn stage_list_and_totals() {
        let s = sched(16, 1, 1);
        assert_eq!(s.stages(), vec![4, 8, 16]);
        assert_eq!(s.total_epochs(), 1 + 2 + 2);
        let res: Vec<u32> = (0..5).map(|e| s.locate(e).unwrap().resolution).collect();
        assert_eq!(res, vec![4, 8, 8, 16, 16]);
        assert!(s.locate(5).is_err());
        assert_eq!(ResolutionSchedule::default().total_epochs(), 30 + 6 * 60);
    }

    #[test]
    fn rejects_bad_resolutions() {
        assert!(sched(24, 1, 1).validate().is_err());
        let mut s = sched(16, 1, 1);
        s.start_res = 32;
        assert!(s.validate().is_err());
    }
}
