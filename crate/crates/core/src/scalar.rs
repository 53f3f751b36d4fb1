//! Scalar abstraction: the whole numeric core is generic over `f32`/`f64`.
//!
//! Training normally runs in `f32` (see the [`crate::Elem`] alias); gradient
//! checks run the same code in `f64` where central differences are reliable.

use std::fmt::{Debug, Display};
use std::io::{Read, Write};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

pub trait Scalar:
    Float
    + ScalarOperand
    + LinalgScalar
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Little-endian binary round-trip, bit exact. Used by checkpoints.
    fn write_le<W: Write>(self, w: &mut W) -> std::io::Result<()>;
    fn read_le<R: Read>(r: &mut R) -> std::io::Result<Self>;

    /// Tag stored in checkpoint headers so a file written as one width is
    /// never silently reinterpreted as another.
    const WIDTH_TAG: u8;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        w.write_f32::<LittleEndian>(self)
    }
    fn read_le<R: Read>(r: &mut R) -> std::io::Result<Self> {
        r.read_f32::<LittleEndian>()
    }
    const WIDTH_TAG: u8 = 4;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        w.write_f64::<LittleEndian>(self)
    }
    fn read_le<R: Read>(r: &mut R) -> std::io::Result<Self> {
        r.read_f64::<LittleEndian>()
    }
    const WIDTH_TAG: u8 = 8;
}
