/// Flushes subnormal floats to zero on the current thread while alive.
///
/// Adam moments and small ReLU activations drift into the subnormal range
/// during long off-policy runs, where x86 arithmetic is slower by two orders
/// of magnitude. The previous floating-point control state is restored on
/// drop. A no-op on other architectures.
pub struct FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

#[cfg(target_arch = "x86_64")]
const FTZ_DAZ: u32 = 0x8040;

impl FlushDenormals {
    #[allow(deprecated)]
    pub fn new() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            use std::arch::x86_64::{_mm_getcsr, _mm_setcsr};
            // SAFETY: SSE is part of the x86_64 baseline; only the FTZ and
            // DAZ bits are changed.
            let saved = unsafe { _mm_getcsr() };
            unsafe { _mm_setcsr(saved | FTZ_DAZ) };
            Self { saved }
        }
        #[cfg(not(target_arch = "x86_64"))]
        Self {}
    }
}

impl Default for FlushDenormals {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for FlushDenormals {
    #[allow(deprecated)]
    fn drop(&mut self) {
        #[cfg(target_arch = "x86_64")]
        // SAFETY: restores the value read in `new`.
        unsafe {
            std::arch::x86_64::_mm_setcsr(self.saved)
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[inline(never)]
    fn halve(x: f32) -> f32 {
        std::hint::black_box(x) * std::hint::black_box(0.5f32)
    }

    #[test]
    fn subnormals_flush_inside_scope_only() {
        assert!(halve(f32::MIN_POSITIVE) > 0.0);
        {
            let _guard = FlushDenormals::new();
            if cfg!(target_arch = "x86_64") {
                assert_eq!(halve(f32::MIN_POSITIVE), 0.0);
            }
        }
        assert!(halve(f32::MIN_POSITIVE) > 0.0);
    }
}
