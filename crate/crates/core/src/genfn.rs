//! Real-argument generating functions with an explicit domain.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::Scalar;

/// Interval of admissible arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain<T> {
    pub lo: T,
    pub lo_open: bool,
    pub hi: T,
    pub hi_open: bool,
}

impl<T: Scalar> Domain<T> {
    pub fn real_line() -> Self {
        Self {
            lo: T::neg_infinity(),
            lo_open: true,
            hi: T::infinity(),
            hi_open: true,
        }
    }

    pub fn positive() -> Self {
        Self {
            lo: T::zero(),
            lo_open: true,
            hi: T::infinity(),
            hi_open: true,
        }
    }

    /// The open interval `(lo, hi)`.
    pub fn open(lo: T, hi: T) -> Self {
        Self {
            lo,
            lo_open: true,
            hi,
            hi_open: true,
        }
    }

    pub fn contains(&self, u: T) -> bool {
        let above = if self.lo_open {
            u > self.lo
        } else {
            u >= self.lo
        };
        let below = if self.hi_open {
            u < self.hi
        } else {
            u <= self.hi
        };
        above && below
    }
}

impl<T: Scalar> fmt::Display for Domain<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_open { '(' } else { '[' },
            self.lo,
            self.hi,
            if self.hi_open { ')' } else { ']' }
        )
    }
}

type Eval<T> = dyn Fn(T) -> T + Send + Sync;

/// A generating function `u ↦ G(u)` evaluated on real arguments.
#[derive(Clone)]
pub struct GenFn<T: Scalar> {
    eval: Arc<Eval<T>>,
    domain: Domain<T>,
}

impl<T: Scalar> fmt::Debug for GenFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenFn")
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> GenFn<T> {
    pub fn new(domain: Domain<T>, eval: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            domain,
        }
    }

    pub fn domain(&self) -> Domain<T> {
        self.domain
    }

    /// Evaluates at `u`, rejecting arguments outside the domain.
    pub fn eval(&self, u: T) -> Result<T> {
        if !self.domain.contains(u) {
            return Err(Error::Domain(format!(
                "argument {u} outside {}",
                self.domain
            )));
        }
        Ok((self.eval)(u))
    }
}
