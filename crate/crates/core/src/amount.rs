//! Token amounts and percentage shares.

use core::fmt;
use core::ops::{Add, AddAssign, Sub};
use core::str::FromStr;

/// 1 Wit = 10^9 nanoWit.
pub const NANOWIT_PER_WIT: u64 = 1_000_000_000;

/// Amount of tokens in nanoWit. Arithmetic is exact and never goes negative.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct TokenAmount(u64);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub const fn from_nanowits(n: u64) -> Self {
        TokenAmount(n)
    }

    pub const fn from_wits(w: u64) -> Self {
        TokenAmount(w * NANOWIT_PER_WIT)
    }

    pub const fn nanowits(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, o: Self) -> Option<Self> {
        self.0.checked_add(o.0).map(TokenAmount)
    }

    pub fn checked_sub(self, o: Self) -> Option<Self> {
        self.0.checked_sub(o.0).map(TokenAmount)
    }

    pub fn saturating_sub(self, o: Self) -> Self {
        TokenAmount(self.0.saturating_sub(o.0))
    }

    pub fn checked_mul(self, k: u64) -> Option<Self> {
        self.0.checked_mul(k).map(TokenAmount)
    }

    /// Splits into `parts` equal floors plus the remainder.
    pub fn split(self, parts: u64) -> (TokenAmount, TokenAmount) {
        assert!(parts > 0, "split into zero parts");
        (TokenAmount(self.0 / parts), TokenAmount(self.0 % parts))
    }
}

impl Add for TokenAmount {
    type Output = TokenAmount;
    fn add(self, o: Self) -> Self {
        self.checked_add(o).expect("token amount overflow")
    }
}

impl AddAssign for TokenAmount {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for TokenAmount {
    type Output = TokenAmount;
    fn sub(self, o: Self) -> Self {
        self.checked_sub(o).expect("token amount underflow")
    }
}

impl core::iter::Sum for TokenAmount {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(TokenAmount::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for TokenAmount {
    type Err = core::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(TokenAmount)
    }
}

#[cfg(feature = "serde")]
crate::serde_util::string_serde!(TokenAmount);

/// Fraction of a transaction's summed input value, in `(0, 1]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Share {
    num: u64,
    den: u64,
}

impl Share {
    pub const ONE: Share = Share { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Option<Self> {
        if num == 0 || den == 0 || num > den {
            return None;
        }
        Some(Share { num, den })
    }

    /// The share that resolves `total` to exactly `part`.
    pub fn of(part: TokenAmount, total: TokenAmount) -> Option<Self> {
        Self::new(part.nanowits(), total.nanowits())
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }
}

impl PartialOrd for Share {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Share {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid share {0:?}")]
pub struct ParseShareError(alloc::string::String);

impl FromStr for Share {
    type Err = ParseShareError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseShareError(s.into());
        let (n, d) = s.split_once('/').ok_or_else(err)?;
        let n = n.parse().map_err(|_| err())?;
        let d = d.parse().map_err(|_| err())?;
        Share::new(n, d).ok_or_else(err)
    }
}

#[cfg(feature = "serde")]
crate::serde_util::string_serde!(Share);
