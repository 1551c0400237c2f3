use crate::error::{Error, Result};
use crate::runtime::INT_EXTENT;

/// Preallocated per-rank scratch space for mock-ups: a byte arena for
/// message data and an arena of `i32` slots for counts and displacements.
#[derive(Debug, Clone)]
pub struct ScratchBuffers {
    msg: Vec<u8>,
    ints: Vec<i32>,
    msg_high_water: usize,
    int_high_water: usize,
}

impl ScratchBuffers {
    /// Arenas of `msg_bytes` bytes and `int_bytes / 4` integer slots.
    pub fn new(msg_bytes: usize, int_bytes: usize) -> Self {
        ScratchBuffers {
            msg: vec![0; msg_bytes],
            ints: vec![0; int_bytes / INT_EXTENT],
            msg_high_water: 0,
            int_high_water: 0,
        }
    }

    pub fn msg_capacity(&self) -> usize {
        self.msg.len()
    }

    pub fn int_capacity(&self) -> usize {
        self.ints.len()
    }

    /// Peak message-arena use of the most recent mock-up call, in bytes.
    pub fn msg_high_water(&self) -> usize {
        self.msg_high_water
    }

    /// Peak integer-arena use of the most recent mock-up call, in slots.
    pub fn int_high_water(&self) -> usize {
        self.int_high_water
    }

    /// Fresh bump allocators over both arenas; high-water marks restart at zero.
    pub(crate) fn arenas(&mut self) -> (Arena<'_, u8>, Arena<'_, i32>) {
        let ScratchBuffers {
            msg,
            ints,
            msg_high_water,
            int_high_water,
        } = self;
        *msg_high_water = 0;
        *int_high_water = 0;
        (
            Arena::new("message", msg, msg_high_water),
            Arena::new("integer", ints, int_high_water),
        )
    }
}

/// Bump allocator over a borrowed arena. Allocations are zero-filled and
/// live until the arena itself is dropped.
pub(crate) struct Arena<'a, T> {
    name: &'static str,
    rest: &'a mut [T],
    used: usize,
    high_water: &'a mut usize,
}

impl<'a, T: Copy + Default> Arena<'a, T> {
    fn new(name: &'static str, buf: &'a mut [T], high_water: &'a mut usize) -> Self {
        Arena {
            name,
            rest: buf,
            used: 0,
            high_water,
        }
    }

    pub(crate) fn used(&self) -> usize {
        self.used
    }

    pub(crate) fn alloc(&mut self, len: usize) -> Result<&'a mut [T]> {
        if len > self.rest.len() {
            return Err(Error::InsufficientScratch {
                arena: self.name,
                needed: (self.used + len) * std::mem::size_of::<T>(),
                capacity: (self.used + self.rest.len()) * std::mem::size_of::<T>(),
            });
        }
        let (head, tail) = std::mem::take(&mut self.rest).split_at_mut(len);
        self.rest = tail;
        head.fill(T::default());
        self.used += len;
        *self.high_water = (*self.high_water).max(self.used);
        Ok(head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_allocation_and_high_water() {
        let mut scratch = ScratchBuffers::new(10, 16);
        assert_eq!((scratch.msg_capacity(), scratch.int_capacity()), (10, 4));
        {
            let (mut msg, mut ints) = scratch.arenas();
            let a = msg.alloc(4).unwrap();
            let b = msg.alloc(6).unwrap();
            a.fill(1);
            b.fill(2);
            assert!(matches!(
                msg.alloc(1),
                Err(Error::InsufficientScratch { .. })
            ));
            ints.alloc(3).unwrap();
        }
        assert_eq!(
            (scratch.msg_high_water(), scratch.int_high_water()),
            (10, 3)
        );
        let (mut msg, _) = scratch.arenas();
        assert_eq!(msg.alloc(10).unwrap(), &[0; 10], "allocations are zeroed");
    }

    #[test]
    fn marks_reset_per_call() {
        let mut scratch = ScratchBuffers::new(8, 0);
        scratch.arenas().0.alloc(8).unwrap();
        scratch.arenas().0.alloc(2).unwrap();
        assert_eq!(scratch.msg_high_water(), 2);
        assert!(scratch.arenas().1.alloc(1).is_err());
    }
}
