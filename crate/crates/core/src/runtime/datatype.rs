use std::fmt;

use crate::error::{Error, Result};

/// Size in bytes of the integer slots used for counts and displacements.
pub const INT_EXTENT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Datatype {
    Byte,
    Int32,
    Float64,
}

impl Datatype {
    pub const ALL: [Datatype; 3] = [Datatype::Byte, Datatype::Int32, Datatype::Float64];

    pub fn extent(self) -> usize {
        match self {
            Datatype::Byte => 1,
            Datatype::Int32 => INT_EXTENT,
            Datatype::Float64 => 8,
        }
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Datatype::Byte => "BYTE",
            Datatype::Int32 => "INT32",
            Datatype::Float64 => "FLOAT64",
        })
    }
}

/// Reduction operators. All of them are associative and commutative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReduceOp {
    Sum,
    Max,
    /// Bit-wise or, applied byte by byte regardless of datatype.
    Bor,
}

impl ReduceOp {
    pub const ALL: [ReduceOp; 3] = [ReduceOp::Sum, ReduceOp::Max, ReduceOp::Bor];

    pub fn is_commutative(self) -> bool {
        true
    }

    pub fn is_associative(self) -> bool {
        true
    }

    pub fn supports(self, dt: Datatype) -> bool {
        match self {
            ReduceOp::Bor => true,
            ReduceOp::Sum | ReduceOp::Max => dt != Datatype::Byte,
        }
    }

    pub fn check(self, dt: Datatype) -> Result<()> {
        if self.supports(dt) {
            Ok(())
        } else {
            Err(Error::OpDatatypeMismatch {
                op: self,
                datatype: dt,
            })
        }
    }

    /// `inout[i] = op(input[i], inout[i])` over whole elements of `dt`.
    ///
    /// Integer sums wrap on overflow.
    pub fn apply(self, dt: Datatype, input: &[u8], inout: &mut [u8]) -> Result<()> {
        self.check(dt)?;
        if input.len() != inout.len() {
            return Err(Error::SizeMismatch {
                what: "reduction operands",
                expected: inout.len(),
                actual: input.len(),
            });
        }
        if !inout.len().is_multiple_of(dt.extent()) {
            return Err(Error::SizeMismatch {
                what: "reduction buffer (not a whole number of elements)",
                expected: inout.len() - inout.len() % dt.extent(),
                actual: inout.len(),
            });
        }
        match (self, dt) {
            (ReduceOp::Bor, _) => {
                for (acc, x) in inout.iter_mut().zip(input) {
                    *acc |= *x;
                }
            }
            (ReduceOp::Sum, Datatype::Int32) => {
                zip_elements::<4>(input, inout, |a, b| {
                    i32::from_le_bytes(a)
                        .wrapping_add(i32::from_le_bytes(b))
                        .to_le_bytes()
                });
            }
            (ReduceOp::Max, Datatype::Int32) => {
                zip_elements::<4>(input, inout, |a, b| {
                    i32::from_le_bytes(a)
                        .max(i32::from_le_bytes(b))
                        .to_le_bytes()
                });
            }
            (ReduceOp::Sum, Datatype::Float64) => {
                zip_elements::<8>(input, inout, |a, b| {
                    (f64::from_le_bytes(a) + f64::from_le_bytes(b)).to_le_bytes()
                });
            }
            (ReduceOp::Max, Datatype::Float64) => {
                zip_elements::<8>(input, inout, |a, b| {
                    f64::from_le_bytes(a)
                        .max(f64::from_le_bytes(b))
                        .to_le_bytes()
                });
            }
            (ReduceOp::Sum | ReduceOp::Max, Datatype::Byte) => unreachable!("rejected by check"),
        }
        Ok(())
    }
}

fn zip_elements<const W: usize>(
    input: &[u8],
    inout: &mut [u8],
    f: impl Fn([u8; W], [u8; W]) -> [u8; W],
) {
    for (acc, x) in inout.chunks_exact_mut(W).zip(input.chunks_exact(W)) {
        let a: [u8; W] = x.try_into().unwrap();
        let b: [u8; W] = (*acc).try_into().unwrap();
        acc.copy_from_slice(&f(a, b));
    }
}

impl fmt::Display for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReduceOp::Sum => "SUM",
            ReduceOp::Max => "MAX",
            ReduceOp::Bor => "BOR",
        })
    }
}
