use crate::error::{Error, Result};

use super::FeatureMap;

const FREQUENCY_BASE: f64 = 10000.0;

/// Sinusoidal code of one coordinate spread over `channels` values.
///
/// Channel `j` uses frequency `BASE^(-2⌊j/2⌋/channels)`; even channels hold
/// the sine, odd channels the cosine.
fn encode_axis(pos: f64, channels: usize, out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate().take(channels) {
        let pair = (j / 2) as f64;
        let freq = FREQUENCY_BASE.powf(-2.0 * pair / channels as f64);
        let angle = pos * freq;
        *o = if j % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}

/// The 2-D sinusoidal table alone: first half of the channels encodes the
/// column, second half the row.
pub fn position_table(height: usize, width: usize, dim: usize) -> Result<FeatureMap> {
    if dim % 2 != 0 {
        return Err(Error::Config(format!(
            "position embedding needs an even channel count, got {dim}"
        )));
    }
    let half = dim / 2;
    let mut table = FeatureMap::zeros(height, width, dim);
    let mut x_code = vec![0.0; half];
    let mut y_code = vec![0.0; half];
    for y in 0..height {
        encode_axis(y as f64, half, &mut y_code);
        for x in 0..width {
            encode_axis(x as f64, half, &mut x_code);
            let px = table.pixel_mut(y, x);
            px[..half].copy_from_slice(&x_code);
            px[half..].copy_from_slice(&y_code);
        }
    }
    Ok(table)
}

/// Adds the 2-D sinusoidal position table to `fm`.
pub fn position_embed(fm: &FeatureMap) -> Result<FeatureMap> {
    let table = position_table(fm.height(), fm.width(), fm.dim())?;
    let sum = fm.as_matrix().add(table.as_matrix())?;
    FeatureMap::from_matrix(fm.height(), fm.width(), sum)
}
