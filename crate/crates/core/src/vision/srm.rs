use crate::error::{Result, VgaError};
use crate::tensorcore::{conv2d_valid_forward, Tensor};

/// Integer stencils of the three high-pass residual filters with their normalisers.
///
/// Order: 3×3 square residual embedded in 5×5 (`/4`), the 5×5 "KV" residual (`/12`) and the
/// horizontal second-order derivative (`/2`).
pub const SRM_STENCILS: [([[i32; 5]; 5], i32); 3] = [
    (
        [
            [0, 0, 0, 0, 0],
            [0, -1, 2, -1, 0],
            [0, 2, -4, 2, 0],
            [0, -1, 2, -1, 0],
            [0, 0, 0, 0, 0],
        ],
        4,
    ),
    (
        [
            [-1, 2, -2, 2, -1],
            [2, -6, 8, -6, 2],
            [-2, 8, -12, 8, -2],
            [2, -6, 8, -6, 2],
            [-1, 2, -2, 2, -1],
        ],
        12,
    ),
    (
        [
            [0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0],
            [0, 1, -2, 1, 0],
            [0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0],
        ],
        2,
    ),
];

/// The fixed filter bank as a `3×5×5×3` tensor, each stencil replicated over the color channels.
#[derive(Debug, Clone)]
pub struct SrmBank {
    kernels: Tensor,
}

impl Default for SrmBank {
    fn default() -> Self {
        Self::new()
    }
}

impl SrmBank {
    pub fn new() -> Self {
        let mut data = Vec::with_capacity(3 * 25 * 3);
        for (stencil, norm) in &SRM_STENCILS {
            for row in stencil {
                for &v in row {
                    let w = v as f64 / *norm as f64;
                    data.extend([w, w, w]);
                }
            }
        }
        SrmBank {
            kernels: Tensor::new(vec![3, 5, 5, 3], data).unwrap(),
        }
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    /// Residual image `(H−4)×(W−4)×3`, one channel per filter.
    pub fn residual(&self, image: &Tensor) -> Result<Tensor> {
        match image.shape() {
            [h, w, 3] if *h >= 5 && *w >= 5 => conv2d_valid_forward(image, &self.kernels),
            s => Err(VgaError::dim(format!(
                "SRM needs an H×W×3 image with H, W ≥ 5, got {s:?}"
            ))),
        }
    }
}

pub fn srm_residual(image: &Tensor) -> Result<Tensor> {
    SrmBank::new().residual(image)
}
