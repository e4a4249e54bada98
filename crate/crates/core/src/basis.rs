//! Classical basis states and their integer indexing.
//!
//! Site 0 is the most significant digit. Two-level digits are occupations
//! (↓ = 0, ↑ = 1). Three-level digits follow the (↑, ←, ↓) matrix ordering:
//! ↑ = 0, ← = 1, ↓ = 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of internal levels per atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Levels {
    Two,
    Three,
}

impl Levels {
    pub fn base(self) -> usize {
        match self {
            Levels::Two => 2,
            Levels::Three => 3,
        }
    }
}

/// Atomic level of one site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SiteState {
    Down,
    Intermediate,
    Up,
}

/// Digit of the three-level ordering (↑, ←, ↓).
pub const TL_UP: usize = 0;
pub const TL_MID: usize = 1;
pub const TL_DOWN: usize = 2;

/// A per-site product state of the lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    levels: Levels,
    digits: Vec<u8>,
}

impl Configuration {
    pub fn all_down(n_sites: usize, levels: Levels) -> Self {
        let down = match levels {
            Levels::Two => 0,
            Levels::Three => TL_DOWN as u8,
        };
        Self {
            levels,
            digits: vec![down; n_sites],
        }
    }

    pub fn from_states(states: &[SiteState], levels: Levels) -> Result<Self> {
        let digits = states
            .iter()
            .map(|s| match (levels, s) {
                (Levels::Two, SiteState::Down) => Ok(0),
                (Levels::Two, SiteState::Up) => Ok(1),
                (Levels::Two, SiteState::Intermediate) => Err(Error::InvalidSpec(
                    "two-level configuration cannot hold the intermediate level".into(),
                )),
                (Levels::Three, SiteState::Up) => Ok(TL_UP as u8),
                (Levels::Three, SiteState::Intermediate) => Ok(TL_MID as u8),
                (Levels::Three, SiteState::Down) => Ok(TL_DOWN as u8),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self { levels, digits })
    }

    /// Two-level configuration from a list of occupations.
    pub fn from_occupations(occ: &[bool]) -> Self {
        Self {
            levels: Levels::Two,
            digits: occ.iter().map(|&b| b as u8).collect(),
        }
    }

    pub fn from_index(index: usize, n_sites: usize, levels: Levels) -> Result<Self> {
        let b = levels.base();
        let dim = checked_dim(b, n_sites)?;
        if index >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: index,
            });
        }
        let mut digits = vec![0u8; n_sites];
        let mut rest = index;
        for d in digits.iter_mut().rev() {
            *d = (rest % b) as u8;
            rest /= b;
        }
        Ok(Self { levels, digits })
    }

    pub fn index(&self) -> usize {
        let b = self.levels.base();
        self.digits.iter().fold(0, |acc, &d| acc * b + d as usize)
    }

    pub fn n_sites(&self) -> usize {
        self.digits.len()
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn state(&self, k: usize) -> SiteState {
        match (self.levels, self.digits[k] as usize) {
            (Levels::Two, 0) => SiteState::Down,
            (Levels::Two, _) => SiteState::Up,
            (Levels::Three, TL_UP) => SiteState::Up,
            (Levels::Three, TL_MID) => SiteState::Intermediate,
            (Levels::Three, _) => SiteState::Down,
        }
    }

    /// Rydberg occupation `n_k`.
    pub fn occupied(&self, k: usize) -> bool {
        self.state(k) == SiteState::Up
    }

    pub fn check_site(&self, k: usize) -> Result<()> {
        if k < self.digits.len() {
            Ok(())
        } else {
            Err(Error::SiteOutOfRange {
                site: k,
                n_sites: self.digits.len(),
            })
        }
    }

    /// Two-level configuration with the occupation of site `k` toggled.
    pub fn flipped(&self, k: usize) -> Self {
        assert_eq!(
            self.levels,
            Levels::Two,
            "flip is defined for two-level words"
        );
        let mut out = self.clone();
        out.digits[k] ^= 1;
        out
    }

    /// Two-level word packed into bits, site 0 most significant.
    pub fn bits(&self) -> usize {
        assert_eq!(self.levels, Levels::Two);
        self.index()
    }
}

/// `b^n`, guarded against overflow.
pub fn checked_dim(b: usize, n: usize) -> Result<usize> {
    b.checked_pow(n as u32).ok_or(Error::DimensionGuard {
        what: "basis dimension",
        n_sites: n,
        max: 40,
    })
}

/// Bit mask of site `k` in a two-level index of `n` sites.
#[inline]
pub fn site_bit(n: usize, k: usize) -> usize {
    1 << (n - 1 - k)
}

/// Occupation of site `k` in a two-level index.
#[inline]
pub fn occ(index: usize, n: usize, k: usize) -> bool {
    index & site_bit(n, k) != 0
}

/// Powers `3^(n-1-k)` giving the place value of site `k` in a three-level index.
pub fn ternary_places(n: usize) -> Vec<usize> {
    (0..n).map(|k| 3usize.pow((n - 1 - k) as u32)).collect()
}

/// Digit of site `k` in a three-level index.
#[inline]
pub fn ternary_digit(index: usize, place: usize) -> usize {
    (index / place) % 3
}

/// Two-level index of the ↑/↓ pattern of a ←-free three-level index.
pub fn ternary_to_binary(index: usize, n: usize) -> Option<usize> {
    let mut rest = index;
    let mut out = 0usize;
    for k in (0..n).rev() {
        match rest % 3 {
            TL_UP => out |= site_bit(n, k),
            TL_DOWN => {}
            _ => return None,
        }
        rest /= 3;
    }
    Some(out)
}

/// Three-level index of a two-level word (no site in ←).
pub fn binary_to_ternary(index: usize, n: usize) -> usize {
    (0..n).fold(0, |acc, k| {
        acc * 3 + if occ(index, n, k) { TL_UP } else { TL_DOWN }
    })
}
