use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bitstream::{MAX_MODE, SUPER_FRAME_LEN};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("empty schedule")]
    Empty,
    #[error("entry {0:?}: expected MODE or MODE@SUPERFRAME")]
    Syntax(String),
    #[error("mode {0} outside 1..={MAX_MODE}")]
    Mode(u8),
    #[error("first entry starts at super-frame {0}, expected 0")]
    FirstEntry(usize),
    #[error("super-frame {current} does not follow {previous}")]
    NotIncreasing { previous: usize, current: usize },
}

/// Active-layer count per super-frame as a step function.
///
/// Text form is `MODE` for a constant schedule or
/// `MODE@SUPERFRAME[,MODE@SUPERFRAME…]`, e.g. `1@0,6@5` runs mode 1 for
/// super-frames 0–4 and mode 6 from super-frame 5 on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSchedule {
    entries: Vec<(usize, u8)>,
}

impl ModeSchedule {
    pub fn new(entries: Vec<(usize, u8)>) -> Result<Self, ScheduleError> {
        let first = entries.first().ok_or(ScheduleError::Empty)?;
        if first.0 != 0 {
            return Err(ScheduleError::FirstEntry(first.0));
        }
        for &(_, mode) in &entries {
            if mode == 0 || mode > MAX_MODE {
                return Err(ScheduleError::Mode(mode));
            }
        }
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ScheduleError::NotIncreasing {
                    previous: w[0].0,
                    current: w[1].0,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn constant(mode: u8) -> Result<Self, ScheduleError> {
        Self::new(vec![(0, mode)])
    }

    pub fn entries(&self) -> &[(usize, u8)] {
        &self.entries
    }

    pub fn mode_at_super_frame(&self, super_frame: usize) -> u8 {
        let i = self.entries.partition_point(|&(start, _)| start <= super_frame);
        self.entries[i - 1].1
    }

    pub fn mode_at_frame(&self, frame: usize) -> u8 {
        self.mode_at_super_frame(frame / SUPER_FRAME_LEN)
    }

    pub fn max_mode(&self) -> u8 {
        self.entries.iter().map(|e| e.1).max().unwrap_or(1)
    }
}

impl FromStr for ModeSchedule {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ScheduleError::Empty);
        }
        let syntax = |part: &str| ScheduleError::Syntax(part.to_string());
        let mut entries = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            let (mode, at) = match part.split_once('@') {
                Some((m, a)) => (m.trim(), Some(a.trim())),
                None => (part, None),
            };
            let mode: u8 = mode.parse().map_err(|_| syntax(part))?;
            let at = match at {
                Some(a) => a.parse().map_err(|_| syntax(part))?,
                None if s.contains(',') => return Err(syntax(part)),
                None => 0,
            };
            entries.push((at, mode));
        }
        Self::new(entries)
    }
}

impl fmt::Display for ModeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let [(0, mode)] = self.entries[..] {
            return write!(f, "{mode}");
        }
        for (i, (at, mode)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{mode}@{at}")?;
        }
        Ok(())
    }
}
