//! Spatial shape arithmetic shared by decoding, inference and the layers.

/// Output side of a square convolution.
///
/// With same-padding (`pad = kernel / 2`, odd kernels) this equals
/// `ceil(side / stride)`.
pub fn conv_out_side(side: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    debug_assert!(stride >= 1);
    if side + 2 * pad < kernel {
        return 0;
    }
    (side + 2 * pad - kernel) / stride + 1
}

/// Same-style padding: half the kernel on each side.
pub fn same_pad(kernel: usize) -> usize {
    kernel / 2
}

/// Output side of a 2x2/stride-2 max-pool; the odd trailing row/column is dropped.
pub fn pool_out_side(side: usize) -> usize {
    side / 2
}
