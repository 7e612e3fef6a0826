//! Majority-masked inputs: a masking background computed once per image, and
//! compositing of one preserved part over it.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::image::{Image, PartMask};
use crate::math;

/// How hidden regions are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskVariant {
    /// Gaussian-blurred copy of the original.
    Blurred,
    /// All zeros.
    Black,
    /// All ones.
    White,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskStyle {
    pub variant: MaskVariant,
    /// Odd tap count of the 1-D Gaussian.
    pub kernel_size: usize,
    pub sigma: f64,
}

impl MaskStyle {
    pub const DEFAULT_KERNEL_SIZE: usize = 49;
    pub const DEFAULT_SIGMA: f64 = 100.0;

    pub fn blurred(kernel_size: usize, sigma: f64) -> Result<Self, Error> {
        let style = MaskStyle {
            variant: MaskVariant::Blurred,
            kernel_size,
            sigma,
        };
        style.validate()?;
        Ok(style)
    }

    pub fn black() -> Self {
        MaskStyle {
            variant: MaskVariant::Black,
            ..MaskStyle::default()
        }
    }

    pub fn white() -> Self {
        MaskStyle {
            variant: MaskVariant::White,
            ..MaskStyle::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.kernel_size % 2 == 0 {
            return Err(Error::InvalidParameter {
                name: "kernel_size",
                reason: alloc::format!("must be odd, got {}", self.kernel_size),
            });
        }
        if self.variant == MaskVariant::Blurred && !(self.sigma > 0.0) {
            return Err(Error::OutOfRange {
                what: "sigma",
                value: self.sigma,
            });
        }
        Ok(())
    }
}

impl Default for MaskStyle {
    /// Blurred, 49 taps, sigma 100.
    fn default() -> Self {
        MaskStyle {
            variant: MaskVariant::Blurred,
            kernel_size: Self::DEFAULT_KERNEL_SIZE,
            sigma: Self::DEFAULT_SIGMA,
        }
    }
}

/// Normalized 1-D Gaussian weights `w_i ∝ exp(-d_i² / 2σ²)`, `d_i` the offset from the center tap.
pub fn gaussian_kernel_1d(size: usize, sigma: f64) -> Result<Vec<f64>, Error> {
    if size % 2 == 0 {
        return Err(Error::InvalidParameter {
            name: "size",
            reason: alloc::format!("must be odd, got {size}"),
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::OutOfRange {
            what: "sigma",
            value: sigma,
        });
    }
    let half = (size / 2) as f64;
    let two_var = 2.0 * sigma * sigma;
    let mut w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            math::exp(-(d * d) / two_var)
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    Ok(w)
}

/// Symmetric reflection (`d c b a | a b c d | d c b a`), valid for any offset.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with symmetric-reflect borders, each channel independently.
pub fn blur(img: &Image, style: &MaskStyle) -> Result<Image, Error> {
    if style.variant != MaskVariant::Blurred {
        return Err(Error::InvalidParameter {
            name: "variant",
            reason: "blur requires the blurred mask style".into(),
        });
    }
    style.validate()?;
    let kernel = gaussian_kernel_1d(style.kernel_size, style.sigma)?;
    Ok(convolve_separable(img, &kernel))
}

pub(crate) fn convolve_separable(img: &Image, kernel: &[f64]) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let half = (kernel.len() / 2) as isize;
    let src = img.data();

    let x_taps: Vec<usize> = (0..w as isize)
        .flat_map(|x| (-half..=half).map(move |k| reflect(x + k, w)))
        .collect();
    let y_taps: Vec<usize> = (0..h as isize)
        .flat_map(|y| (-half..=half).map(move |k| reflect(y + k, h)))
        .collect();
    let k = kernel.len();

    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        let row = &src[y * w * c..(y + 1) * w * c];
        for x in 0..w {
            let taps = &x_taps[x * k..(x + 1) * k];
            for ch in 0..c {
                let mut acc = 0.0;
                for (&wt, &sx) in kernel.iter().zip(taps) {
                    acc += wt * row[sx * c + ch];
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }

    let mut out = vec![0.0; src.len()];
    let stride = w * c;
    for y in 0..h {
        let taps = &y_taps[y * k..(y + 1) * k];
        let dst = &mut out[y * stride..(y + 1) * stride];
        for (&wt, &sy) in kernel.iter().zip(taps) {
            let row = &tmp[sy * stride..(sy + 1) * stride];
            for (d, &s) in dst.iter_mut().zip(row) {
                *d += wt * s;
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Image::from_raw_unchecked(w, h, c, out)
}

/// Fill image for hidden regions.
pub fn make_background(img: &Image, style: &MaskStyle) -> Result<Image, Error> {
    match style.variant {
        MaskVariant::Blurred => blur(img, style),
        MaskVariant::Black => Image::filled(img.width(), img.height(), img.channels(), 0.0),
        MaskVariant::White => Image::filled(img.width(), img.height(), img.channels(), 1.0),
    }
}

/// Copies `original` where `keep` is set and `background` elsewhere.
pub fn compose_masked(original: &Image, background: &Image, keep: &PartMask) -> Result<Image, Error> {
    if !original.same_shape(background) {
        return Err(Error::ShapeMismatch("original and background"));
    }
    if keep.width() != original.width() || keep.height() != original.height() {
        return Err(Error::ShapeMismatch("mask and image"));
    }
    Ok(compose_bits(original, background, keep.bits()))
}

pub(crate) fn compose_bits(original: &Image, background: &Image, keep: &[bool]) -> Image {
    let c = original.channels();
    let mut out = background.data().to_vec();
    let src = original.data();
    for (p, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
        out[p * c..(p + 1) * c].copy_from_slice(&src[p * c..(p + 1) * c]);
    }
    Image::from_raw_unchecked(original.width(), original.height(), c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img_from(w: usize, h: usize, c: usize, seed: u64) -> Image {
        let mut s = seed;
        let data = (0..w * h * c)
            .map(|_| (crate::hash::splitmix64(&mut s) >> 11) as f64 / (1u64 << 53) as f64)
            .collect();
        Image::new(w, h, c, data).unwrap()
    }

    #[test]
    fn single_tap_kernel() {
        assert_eq!(gaussian_kernel_1d(1, 0.3).unwrap(), vec![1.0]);
    }

    #[test]
    fn wide_sigma_approaches_box() {
        let k = gaussian_kernel_1d(3, 1e9).unwrap();
        for w in k {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn center_edge_ratio() {
        let k = gaussian_kernel_1d(3, 1.0).unwrap();
        let expected = 1.0 / (-0.5f64).exp();
        assert!((k[1] / k[0] - expected).abs() < 1e-12);
        assert_eq!(k[0], k[2]);
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(gaussian_kernel_1d(4, 1.0).is_err());
        assert!(gaussian_kernel_1d(3, 0.0).is_err());
        assert!(MaskStyle::blurred(48, 100.0).is_err());
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 3)).collect();
        assert_eq!(got, vec![2, 2, 1, 0, 0, 1, 2, 2, 1, 0, 0, 1]);
    }

    #[test]
    fn constant_image_unchanged() {
        let img = Image::filled(7, 5, 3, 0.37).unwrap();
        let out = blur(&img, &MaskStyle::default()).unwrap();
        for v in out.data() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_center_is_product_of_center_weights() {
        let mut data = vec![0.0; 25];
        data[12] = 1.0;
        let img = Image::new(5, 5, 1, data).unwrap();
        let style = MaskStyle::blurred(3, 1.0).unwrap();
        let out = blur(&img, &style).unwrap();
        let k = gaussian_kernel_1d(3, 1.0).unwrap();
        assert!((out.data()[12] - k[1] * k[1]).abs() < 1e-15);
        assert!((out.data()[11] - k[0] * k[1]).abs() < 1e-15);
    }

    #[test]
    fn blur_requires_blurred_variant() {
        let img = Image::filled(2, 2, 1, 0.5).unwrap();
        assert!(blur(&img, &MaskStyle::black()).is_err());
    }

    #[test]
    fn black_and_white_backgrounds() {
        let img = img_from(4, 3, 3, 1);
        let b = make_background(&img, &MaskStyle::black()).unwrap();
        assert!(b.data().iter().all(|&v| v == 0.0));
        let w = make_background(&img, &MaskStyle::white()).unwrap();
        assert!(w.data().iter().all(|&v| v == 1.0));
        let c = Image::filled(4, 3, 3, 0.6).unwrap();
        let bl = make_background(&c, &MaskStyle::default()).unwrap();
        assert!(bl.data().iter().all(|&v| (v - 0.6).abs() < 1e-12));
    }

    #[test]
    fn compose_full_mask_is_original() {
        let img = img_from(3, 3, 3, 2);
        let bg = Image::filled(3, 3, 3, 0.0).unwrap();
        let out = compose_masked(&img, &bg, &PartMask::full(3, 3).unwrap()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn compose_single_pixel() {
        let img = Image::filled(2, 2, 1, 0.9).unwrap();
        let bg = Image::filled(2, 2, 1, 0.1).unwrap();
        let keep = PartMask::new(2, 2, vec![true, false, false, false]).unwrap();
        let out = compose_masked(&img, &bg, &keep).unwrap();
        assert_eq!(out.data(), &[0.9, 0.1, 0.1, 0.1]);
    }

    #[test]
    fn compose_rejects_shape_mismatch() {
        let img = Image::filled(2, 2, 1, 0.9).unwrap();
        let bg = Image::filled(2, 2, 3, 0.1).unwrap();
        let keep = PartMask::full(2, 2).unwrap();
        assert!(compose_masked(&img, &bg, &keep).is_err());
        let bg = Image::filled(2, 2, 1, 0.1).unwrap();
        assert!(compose_masked(&img, &bg, &PartMask::full(2, 1).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn kernel_sums_to_one(half in 0usize..40, sigma in 0.05f64..500.0) {
            let k = gaussian_kernel_1d(2 * half + 1, sigma).unwrap();
            prop_assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn blur_preserves_mean(seed in any::<u64>(), half in 0usize..12, sigma in 0.3f64..50.0) {
            let img = img_from(16, 16, 1, seed);
            let out = blur(&img, &MaskStyle::blurred(2 * half + 1, sigma).unwrap()).unwrap();
            let m0 = img.data().iter().sum::<f64>() / 256.0;
            let m1 = out.data().iter().sum::<f64>() / 256.0;
            prop_assert!((m0 - m1).abs() < 1e-4);
        }

        #[test]
        fn compose_idempotent_and_partitions(seed in any::<u64>(), bits in proptest::collection::vec(any::<bool>(), 12)) {
            prop_assume!(bits.iter().any(|&b| b) && bits.iter().any(|&b| !b));
            let img = img_from(4, 3, 3, seed);
            let bg = img_from(4, 3, 3, seed ^ 0xabcdef);
            let keep = PartMask::new(4, 3, bits).unwrap();
            let once = compose_masked(&img, &bg, &keep).unwrap();
            let twice = compose_masked(&once, &bg, &keep).unwrap();
            prop_assert_eq!(&once, &twice);
            let other = compose_masked(&img, &bg, &keep.complement().unwrap()).unwrap();
            for p in 0..12 {
                let (a, b) = (&once.data()[p * 3..p * 3 + 3], &other.data()[p * 3..p * 3 + 3]);
                let (o, g) = (&img.data()[p * 3..p * 3 + 3], &bg.data()[p * 3..p * 3 + 3]);
                if keep.bits()[p] {
                    prop_assert!(a == o && b == g);
                } else {
                    prop_assert!(a == g && b == o);
                }
            }
        }
    }
}
