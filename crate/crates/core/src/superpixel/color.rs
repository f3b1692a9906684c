use crate::linalg::FeatureMap;

use super::RgbImage;

// sRGB (D65) to XYZ, as tabulated for the sRGB primaries.
const XYZ_FROM_RGB: [[f64; 3]; 3] = [
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
];
const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];
const EPSILON: f64 = 0.008856;
const KAPPA_SLOPE: f64 = 7.787;

fn srgb_to_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        KAPPA_SLOPE * t + 16.0 / 116.0
    }
}

/// CIE-Lab of one sRGB triple.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let xyz: Vec<f64> = XYZ_FROM_RGB
        .iter()
        .zip(WHITE_D65)
        .map(|(row, white)| (row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]) / white)
        .collect();
    let (fx, fy, fz) = (lab_f(xyz[0]), lab_f(xyz[1]), lab_f(xyz[2]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Three-channel `[L, a, b]` map of an sRGB image.
pub fn rgb_to_lab(img: &RgbImage) -> FeatureMap {
    FeatureMap::from_fn(img.height(), img.width(), 3, |y, x, c| srgb_to_lab(img.pixel(y, x))[c])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn white_and_black() {
        let w = srgb_to_lab([255, 255, 255]);
        assert!((w[0] - 100.0).abs() < 1e-6);
        assert!(w[1].abs() < 0.01 && w[2].abs() < 0.01);
        assert_eq!(srgb_to_lab([0, 0, 0]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn reference_values() {
        // frozen from an independent colour-science implementation
        assert!(close(
            srgb_to_lab([119, 119, 119]),
            [50.034438792538225, -0.0013975038274938179, 0.002649017710121271],
            1e-9
        ));
        assert!(close(
            srgb_to_lab([200, 30, 90]),
            [44.160887008818015, 65.80664257292712, 10.61500192571333],
            1e-9
        ));
    }

    #[test]
    fn map_layout() {
        let img = RgbImage::from_fn(2, 3, |y, x| [(y * 100) as u8, (x * 80) as u8, 50]).unwrap();
        let lab = rgb_to_lab(&img);
        assert_eq!(lab.dim(), 3);
        assert_eq!(lab.pixel(1, 2), &srgb_to_lab([100, 160, 50]));
    }
}
