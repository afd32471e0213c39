use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Bit permutation: `interleave(x)[i] = x[perm[i]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Interleaver {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut inverse = vec![usize::MAX; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            if p >= perm.len() || inverse[p] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "not a permutation: index {p} at position {i}"
                )));
            }
            inverse[p] = i;
        }
        Ok(Self { perm, inverse })
    }

    pub fn identity(len: usize) -> Self {
        Self::new((0..len).collect()).expect("identity is a permutation")
    }

    /// Uniformly random permutation.
    pub fn random(len: usize, rng: &mut impl Rng) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(rng);
        Self::new(perm).expect("shuffle yields a permutation")
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn interleave<T: Copy>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        Ok(self.perm.iter().map(|&p| x[p]).collect())
    }

    pub fn deinterleave<T: Copy>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        Ok(self.inverse.iter().map(|&i| x[i]).collect())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.perm.len() {
            return Err(Error::InvalidArgument(format!(
                "interleaver of length {} applied to {len} values",
                self.perm.len()
            )));
        }
        Ok(())
    }
}
