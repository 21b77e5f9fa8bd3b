use std::marker::PhantomData;
use std::sync::Mutex;

/// Cache line size assumed when converting a distance in lines to elements.
pub const CACHE_LINE_BYTES: usize = 64;

/// Distance in elements for `lines` cache lines of `element_bytes`-sized
/// elements: `floor(lines * 64 / element_bytes)`, at least 1.
pub fn distance_in_elements(lines: usize, element_bytes: usize) -> usize {
    assert!(element_bytes > 0, "element_bytes must be positive");
    (lines.saturating_mul(CACHE_LINE_BYTES) / element_bytes).max(1)
}

/// A data container the loop body reads, registered for prefetch hints.
///
/// Holds only an address and a length; hints never dereference it, so a
/// container may be registered while the body writes to it.
#[derive(Clone, Copy, Debug)]
pub struct ContainerRef<'a> {
    base: *const u8,
    len: usize,
    stride: usize,
    _borrow: PhantomData<&'a [u8]>,
}

// SAFETY: the pointer is used only to compute hint addresses.
unsafe impl Send for ContainerRef<'_> {}
unsafe impl Sync for ContainerRef<'_> {}

impl<'a> ContainerRef<'a> {
    pub fn from_slice<T>(s: &'a [T]) -> Self {
        Self::from_raw(s.as_ptr(), s.len())
    }

    /// Registers `len` elements starting at `ptr`.
    pub fn from_raw<T>(ptr: *const T, len: usize) -> Self {
        ContainerRef {
            base: ptr.cast(),
            len,
            stride: std::mem::size_of::<T>(),
            _borrow: PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Address of element `index`; only meaningful for `index < len`.
    pub fn address(&self, index: usize) -> *const u8 {
        self.base.wrapping_add(index.wrapping_mul(self.stride))
    }
}

/// Receiver of prefetch hints.
pub trait PrefetchSink: Sync {
    /// Hint that element `index` of container number `container` (at `addr`)
    /// is about to be read.
    fn hint(&self, container: usize, index: usize, addr: *const u8);
}

/// Issues the CPU's non-binding prefetch instruction, or nothing on targets
/// without one.
#[derive(Clone, Copy, Debug, Default)]
pub struct HardwarePrefetch;

impl PrefetchSink for HardwarePrefetch {
    #[inline]
    fn hint(&self, _container: usize, _index: usize, addr: *const u8) {
        prefetch_read(addr);
    }
}

#[inline(always)]
fn prefetch_read(addr: *const u8) {
    #[cfg(target_arch = "x86_64")]
    // SAFETY: prefetch never faults and has no architectural side effects.
    unsafe {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        _mm_prefetch::<_MM_HINT_T0>(addr.cast());
    }
    #[cfg(target_arch = "aarch64")]
    // SAFETY: as above.
    unsafe {
        std::arch::asm!(
            "prfm pldl1keep, [{0}]",
            in(reg) addr,
            options(nostack, readonly, preserves_flags)
        );
    }
    #[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
    let _ = addr;
}

/// Records `(container, index)` for every hint; for tests.
#[derive(Debug, Default)]
pub struct RecordingSink {
    hints: Mutex<Vec<(usize, usize)>>,
}

impl RecordingSink {
    pub fn new() -> Self {
        Self::default()
    }

    /// Hints received so far, sorted.
    pub fn hints(&self) -> Vec<(usize, usize)> {
        let mut h = self.hints.lock().unwrap().clone();
        h.sort_unstable();
        h
    }
}

impl PrefetchSink for RecordingSink {
    fn hint(&self, container: usize, index: usize, _addr: *const u8) {
        self.hints.lock().unwrap().push((container, index));
    }
}
