use crate::error::{Error, Result};

/// Progressive channel activation: from iteration `starts[i]` on, the first
/// `counts[i]` channels receive gradient updates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgressiveSchedule {
    starts: Vec<u64>,
    counts: Vec<usize>,
}

impl ProgressiveSchedule {
    pub fn new(starts: Vec<u64>, counts: Vec<usize>) -> Result<Self> {
        if starts.is_empty() || starts.len() != counts.len() {
            return Err(Error::invalid("schedule needs matching, non-empty stage lists"));
        }
        if starts[0] != 0 {
            return Err(Error::invalid("first schedule stage must start at iteration 0"));
        }
        if starts.windows(2).any(|w| w[1] < w[0]) || counts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("schedule stages must be non-decreasing"));
        }
        if counts[0] == 0 {
            return Err(Error::invalid("schedule must activate at least one channel"));
        }
        Ok(Self { starts, counts })
    }

    /// `T = {0, 5000, 10000, 15000}`, `L = {2, 4, 6, 8}`.
    pub fn standard() -> Self {
        Self {
            starts: vec![0, 5000, 10000, 15000],
            counts: vec![2, 4, 6, 8],
        }
    }

    /// Every channel active from the first iteration.
    pub fn all_active(channels: usize) -> Self {
        Self {
            starts: vec![0],
            counts: vec![channels],
        }
    }

    pub fn starts(&self) -> &[u64] {
        &self.starts
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Rescales stage boundaries by `total / reference` and channel counts by
    /// `channels / max count`, rounding counts up.
    pub fn rescaled(&self, reference: u64, total: u64, channels: usize) -> Result<Self> {
        let top = *self.counts.last().expect("non-empty");
        let starts = self
            .starts
            .iter()
            .map(|&t| ((t as u128 * total as u128) / reference.max(1) as u128) as u64)
            .collect();
        let counts = self
            .counts
            .iter()
            .map(|&l| (l * channels).div_ceil(top).max(1))
            .collect();
        Self::new(starts, counts)
    }

    pub fn validate_for(&self, channels: usize) -> Result<()> {
        if *self.counts.last().expect("non-empty") > channels {
            return Err(Error::invalid(format!(
                "schedule activates {} channels but planes have {channels}",
                self.counts.last().unwrap()
            )));
        }
        Ok(())
    }

    /// Channel count of the latest stage whose start is `<= iteration`.
    pub fn active_channels(&self, iteration: u64) -> usize {
        let stage = self.starts.partition_point(|&t| t <= iteration);
        self.counts[stage.saturating_sub(1)]
    }
}
