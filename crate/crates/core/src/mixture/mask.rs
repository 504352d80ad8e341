use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Per mega-block selection of active towers.
///
/// Text form: `mb1=11011,mb2=111111,mb3=1111111`, one bit per tower in
/// ascending index, mega-blocks numbered from 1. Mega-blocks left out of
/// the string keep all their towers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TowerMask {
    blocks: Vec<Vec<bool>>,
}

impl TowerMask {
    pub fn new(blocks: Vec<Vec<bool>>) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            if !b.iter().any(|&on| on) {
                return Err(Error::Mask(format!(
                    "mb{}: at least one tower required",
                    i + 1
                )));
            }
        }
        Ok(TowerMask { blocks })
    }

    pub fn full(towers: &[usize]) -> Self {
        TowerMask {
            blocks: towers.iter().map(|&n| vec![true; n]).collect(),
        }
    }

    /// Keeps the listed towers (0-based) of every mega-block.
    pub fn from_active(towers: &[usize], active: &[Vec<usize>]) -> Result<Self> {
        let blocks = towers
            .iter()
            .zip(active)
            .map(|(&n, act)| {
                let mut bits = vec![false; n];
                act.iter().filter(|&&i| i < n).for_each(|&i| bits[i] = true);
                bits
            })
            .collect();
        Self::new(blocks)
    }

    pub fn parse(text: &str, towers: &[usize]) -> Result<Self> {
        let mut blocks: Vec<Option<Vec<bool>>> = vec![None; towers.len()];
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, bits) = part
                .split_once('=')
                .ok_or_else(|| Error::Mask(format!("`{part}`: expected mb<idx>=<bits>")))?;
            let idx: usize = key
                .strip_prefix("mb")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::Mask(format!("`{key}`: expected mb<idx>")))?;
            if idx == 0 || idx > towers.len() {
                return Err(Error::Mask(format!(
                    "mb{idx}: model has {} mega-blocks",
                    towers.len()
                )));
            }
            let slot = &mut blocks[idx - 1];
            if slot.is_some() {
                return Err(Error::Mask(format!("mb{idx} given twice")));
            }
            let parsed = bits
                .chars()
                .map(|ch| match ch {
                    '1' => Ok(true),
                    '0' => Ok(false),
                    _ => Err(Error::Mask(format!("mb{idx}: `{ch}` is not a bit"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if parsed.len() != towers[idx - 1] {
                return Err(Error::Mask(format!(
                    "mb{idx}: {} bits for {} towers",
                    parsed.len(),
                    towers[idx - 1]
                )));
            }
            *slot = Some(parsed);
        }
        let blocks = blocks
            .into_iter()
            .zip(towers)
            .map(|(b, &n)| b.unwrap_or_else(|| vec![true; n]))
            .collect();
        Self::new(blocks)
    }

    pub fn blocks(&self) -> &[Vec<bool>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[bool] {
        &self.blocks[i]
    }

    /// Kept towers per mega-block.
    pub fn kept(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|b| b.iter().filter(|&&on| on).count())
            .collect()
    }

    pub fn is_full(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|&on| on))
    }

    pub fn matches(&self, towers: &[usize]) -> bool {
        self.blocks.len() == towers.len()
            && self.blocks.iter().zip(towers).all(|(b, &n)| b.len() == n)
    }
}

impl fmt::Display for TowerMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            let bits: String = b.iter().map(|&on| if on { '1' } else { '0' }).collect();
            write!(f, "mb{}={bits}", i + 1)?;
        }
        Ok(())
    }
}

/// Parses without a tower layout; bit counts are taken as given.
impl FromStr for TowerMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lens = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, bits) = part
                .split_once('=')
                .ok_or_else(|| Error::Mask(format!("`{part}`: expected mb<idx>=<bits>")))?;
            let idx: usize = key
                .strip_prefix("mb")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::Mask(format!("`{key}`: expected mb<idx>")))?;
            if idx == 0 {
                return Err(Error::Mask(String::from("mega-blocks are numbered from 1")));
            }
            if lens.len() < idx {
                lens.resize(idx, 0);
            }
            lens[idx - 1] = bits.len();
        }
        if lens.contains(&0) {
            return Err(Error::Mask(String::from("every mega-block must be listed")));
        }
        Self::parse(s, &lens)
    }
}
