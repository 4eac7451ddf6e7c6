use serde::{Deserialize, Serialize};

use super::model::MultiCapacityModel;
use crate::error::{Error, Result};

/// Bytes moved in or out of memory when switching between two levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchDelta {
    pub from: usize,
    pub to: usize,
    pub page_in: u64,
    pub page_out: u64,
}

/// Delta from cumulative level sizes (`sizes[L - 1]` is the resident size of
/// level `L`). Upgrades only page in; downgrades only page out.
pub fn switch_delta_from_sizes(sizes: &[u64], from: usize, to: usize) -> Result<SwitchDelta> {
    for level in [from, to] {
        if level == 0 || level > sizes.len() {
            return Err(Error::LevelOutOfRange {
                level,
                levels: sizes.len(),
            });
        }
    }
    let (a, b) = (sizes[from - 1], sizes[to - 1]);
    if sizes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "level sizes must be non-decreasing".into(),
        ));
    }
    Ok(SwitchDelta {
        from,
        to,
        page_in: b.saturating_sub(a),
        page_out: a.saturating_sub(b),
    })
}

impl MultiCapacityModel {
    pub fn switch_delta(&self, from: usize, to: usize) -> Result<SwitchDelta> {
        switch_delta_from_sizes(&self.level_sizes()?, from, to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_level_is_free() {
        let d = switch_delta_from_sizes(&[10, 20, 40], 2, 2).unwrap();
        assert_eq!((d.page_in, d.page_out), (0, 0));
    }

    #[test]
    fn constructed_two_level_model() {
        let sizes = [4096, 4096 + 1024];
        let up = switch_delta_from_sizes(&sizes, 1, 2).unwrap();
        let down = switch_delta_from_sizes(&sizes, 2, 1).unwrap();
        assert_eq!((up.page_in, up.page_out), (1024, 0));
        assert_eq!((down.page_in, down.page_out), (0, 1024));
    }

    #[test]
    fn upgrades_never_page_out() {
        let sizes = [1, 5, 9, 30, 31];
        for a in 1..=5 {
            for b in a..=5 {
                assert_eq!(switch_delta_from_sizes(&sizes, a, b).unwrap().page_out, 0);
            }
        }
    }

    #[test]
    fn out_of_range_levels() {
        assert!(matches!(
            switch_delta_from_sizes(&[1, 2], 0, 1),
            Err(Error::LevelOutOfRange {
                level: 0,
                levels: 2
            })
        ));
        assert!(switch_delta_from_sizes(&[1, 2], 1, 3).is_err());
    }
}
