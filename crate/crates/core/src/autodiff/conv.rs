//! 4×4 convolution geometry and im2col kernels.
//!
//! Convolutions are cross-correlations with "same" zero padding: the output
//! has `⌈H/s⌉` rows, and when the total padding is odd the extra row/column
//! goes at the bottom/right (stride 1 pads 1 before and 2 after). Transposed
//! convolutions are the exact adjoints of these maps.

pub const KSIZE: usize = 4;
pub const KAREA: usize = KSIZE * KSIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    /// Geometry of a same-padded convolution reading a `channels × h × w` image.
    pub fn new(channels: usize, h: usize, w: usize, stride: usize) -> Self {
        let out_h = h.div_ceil(stride);
        let out_w = w.div_ceil(stride);
        let pad_h = ((out_h - 1) * stride + KSIZE).saturating_sub(h);
        let pad_w = ((out_w - 1) * stride + KSIZE).saturating_sub(w);
        Self { channels, h, w, stride, out_h, out_w, pad_top: pad_h / 2, pad_left: pad_w / 2 }
    }

    pub fn cols_rows(&self) -> usize {
        self.channels * KAREA
    }

    pub fn cols_width(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky) as isize - self.pad_top as isize;
        let x = (ox * self.stride + kx) as isize - self.pad_left as isize;
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            None
        } else {
            Some((y as usize, x as usize))
        }
    }

    /// `cols[(c·16 + ky·4 + kx), (oy·out_w + ox)] = img[c, y, x]` (zero outside).
    pub fn im2col(&self, img: &[f64], cols: &mut [f64]) {
        let width = self.cols_width();
        for c in 0..self.channels {
            let plane = &img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..KSIZE {
                for kx in 0..KSIZE {
                    let row = &mut cols[(c * KAREA + ky * KSIZE + kx) * width..][..width];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            row[oy * self.out_w + ox] = match self.source(oy, ox, ky, kx) {
                                Some((y, x)) => plane[y * self.w + x],
                                None => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatters and accumulates into `img`.
    pub fn col2im(&self, cols: &[f64], img: &mut [f64]) {
        let width = self.cols_width();
        for c in 0..self.channels {
            let plane = &mut img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..KSIZE {
                for kx in 0..KSIZE {
                    let row = &cols[(c * KAREA + ky * KSIZE + kx) * width..][..width];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some((y, x)) = self.source(oy, ox, ky, kx) {
                                plane[y * self.w + x] += row[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}
