/// Fixed-length occupancy bit-vector with lowest-free-slot search.
#[derive(Debug, Clone)]
pub struct Occupancy {
    words: Vec<u64>,
    len: usize,
    ones: usize,
}

impl Occupancy {
    pub fn new(len: usize) -> Self {
        let mut words = vec![0u64; len.div_ceil(64)];
        // Bits past `len` in the last word read as occupied so the free
        // search never returns them.
        if len % 64 != 0 {
            *words.last_mut().unwrap() = !0u64 << (len % 64);
        }
        Occupancy { words, len, ones: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_ones(&self) -> usize {
        self.ones
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        debug_assert!(!self.get(i));
        self.words[i / 64] |= 1 << (i % 64);
        self.ones += 1;
    }

    #[inline]
    pub fn clear(&mut self, i: usize) {
        debug_assert!(self.get(i));
        self.words[i / 64] &= !(1 << (i % 64));
        self.ones -= 1;
    }

    /// Index of the lowest clear bit.
    #[inline]
    pub fn first_free(&self) -> Option<usize> {
        self.words.iter().position(|&w| w != u64::MAX).map(|wi| wi * 64 + self.words[wi].trailing_ones() as usize)
    }
}
