use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::LabelMap;

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if data.len() != 3 * height * width {
            return Err(Error::Shape {
                op: "RgbImage::new",
                left: (height, width),
                right: (data.len(), 3),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(3 * height * width);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Netpbm header reader that tracks the byte offset for error messages.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Parse {
                offset: start,
                message: format!("{what} is too large"),
            })
    }

    fn magic(&mut self) -> Result<[u8; 2]> {
        if self.bytes.len() < 2 {
            return Err(self.err("file too short for a magic number"));
        }
        self.pos = 2;
        Ok([self.bytes[0], self.bytes[1]])
    }

    /// Dimensions and maxval, then the single whitespace byte before binary data.
    fn dims(&mut self, binary: bool) -> Result<(usize, usize, usize)> {
        let width = self.number("width")?;
        let height = self.number("height")?;
        let maxval_at = self.pos;
        let maxval = self.number("maxval")?;
        if width == 0 || height == 0 {
            return Err(Error::Parse {
                offset: maxval_at,
                message: "zero image dimension".into(),
            });
        }
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Parse {
                offset: maxval_at,
                message: format!("maxval {maxval} outside 1..=65535"),
            });
        }
        if binary {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                _ => return Err(self.err("expected whitespace before raster data")),
            }
        }
        Ok((width, height, maxval))
    }

    fn samples(&mut self, count: usize, maxval: usize) -> Result<Vec<usize>> {
        let wide = maxval > 255;
        let per = if wide { 2 } else { 1 };
        let need = count * per;
        let have = self.bytes.len() - self.pos;
        if have < need {
            return Err(Error::Parse {
                offset: self.bytes.len(),
                message: format!("raster needs {need} bytes, found {have}"),
            });
        }
        let raw = &self.bytes[self.pos..self.pos + need];
        let out: Vec<usize> = if wide {
            raw.chunks_exact(2).map(|c| ((c[0] as usize) << 8) | c[1] as usize).collect()
        } else {
            raw.iter().map(|&b| b as usize).collect()
        };
        if let Some(i) = out.iter().position(|&v| v > maxval) {
            return Err(Error::Parse {
                offset: self.pos + i * per,
                message: format!("sample {} exceeds maxval {maxval}", out[i]),
            });
        }
        self.pos += need;
        Ok(out)
    }
}

fn rescale(v: usize, maxval: usize) -> u8 {
    if maxval == 255 {
        v as u8
    } else {
        ((v * 255 + maxval / 2) / maxval) as u8
    }
}

/// Binary PPM (`P6`).
pub fn parse_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let mut hdr = Header { bytes, pos: 0 };
    if hdr.magic()? != *b"P6" {
        return Err(Error::Parse {
            offset: 0,
            message: "not a binary PPM (expected P6)".into(),
        });
    }
    let (width, height, maxval) = hdr.dims(true)?;
    let samples = hdr.samples(3 * width * height, maxval)?;
    RgbImage::new(height, width, samples.into_iter().map(|v| rescale(v, maxval)).collect())
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    RgbImage::new(h as usize, w as usize, decoded.into_raw())
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .ok_or_else(|| Error::Image("buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(out.into_inner())
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decodes a PPM or PNG image, chosen by the file's leading bytes.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") {
        parse_ppm(bytes)
    } else {
        Err(Error::Parse {
            offset: 0,
            message: "unrecognised image format (expected P6 PPM or PNG)".into(),
        })
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    decode_image(&fs::read(path)?)
}

enum Format {
    Ppm,
    Png,
}

fn format_for(path: &Path) -> Result<Format> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ppm") => Ok(Format::Ppm),
        Some("png") => Ok(Format::Png),
        _ => Err(Error::Config(format!(
            "cannot infer image format from {}; use .ppm or .png",
            path.display()
        ))),
    }
}

/// Writes PPM or PNG according to the extension.
pub fn save_image(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format_for(path)? {
        Format::Ppm => encode_ppm(img),
        Format::Png => encode_png(img)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub const BOUNDARY_COLOR: [u8; 3] = [255, 0, 0];

/// Copy of `img` with every pixel whose right or lower neighbour carries a
/// different label painted [`BOUNDARY_COLOR`].
pub fn overlay(img: &RgbImage, labels: &LabelMap) -> Result<RgbImage> {
    if (img.height, img.width) != (labels.height(), labels.width()) {
        return Err(Error::Shape {
            op: "overlay",
            left: (img.height, img.width),
            right: (labels.height(), labels.width()),
        });
    }
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let l = labels.get(y, x);
            let edge = (x + 1 < img.width && labels.get(y, x + 1) != l) || (y + 1 < img.height && labels.get(y + 1, x) != l);
            if edge {
                out.set_pixel(y, x, BOUNDARY_COLOR);
            }
        }
    }
    Ok(out)
}

pub fn save_overlay(img: &RgbImage, labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    save_image(&overlay(img, labels)?, path)
}

/// ASCII PGM (`P2`) with `maxval = max(label_bound - 1, 1)`; PGM forbids a
/// zero maxval, so a single-label map is written with maxval 1.
pub fn encode_label_pgm(labels: &LabelMap) -> Result<Vec<u8>> {
    let maxval = labels.label_bound().saturating_sub(1).max(1);
    if maxval > 65535 {
        return Err(Error::Range {
            what: "label count",
            value: maxval + 1,
            min: 1,
            max: 65536,
        });
    }
    let mut out = format!("P2\n{} {}\n{}\n", labels.width(), labels.height(), maxval);
    for row in labels.labels().chunks(labels.width()) {
        let line: Vec<String> = row.iter().map(|l| l.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out.into_bytes())
}

pub fn save_label_pgm(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_label_pgm(labels)?)?;
    Ok(())
}

/// Reads a `P2` or `P5` greymap as raw label values.
pub fn parse_label_pgm(bytes: &[u8]) -> Result<LabelMap> {
    let mut hdr = Header { bytes, pos: 0 };
    let magic = hdr.magic()?;
    let labels = match &magic {
        b"P5" => {
            let (w, h, maxval) = hdr.dims(true)?;
            (w, h, hdr.samples(w * h, maxval)?)
        }
        b"P2" => {
            let (w, h, maxval) = hdr.dims(false)?;
            let mut v = Vec::with_capacity(w * h);
            for _ in 0..w * h {
                let at = hdr.pos;
                let s = hdr.number("sample")?;
                if s > maxval {
                    return Err(Error::Parse {
                        offset: at,
                        message: format!("sample {s} exceeds maxval {maxval}"),
                    });
                }
                v.push(s);
            }
            (w, h, v)
        }
        _ => {
            return Err(Error::Parse {
                offset: 0,
                message: "not a PGM (expected P2 or P5)".into(),
            })
        }
    };
    let (w, h, v) = labels;
    LabelMap::new(h, w, v)
}

pub fn load_label_pgm(path: impl AsRef<Path>) -> Result<LabelMap> {
    parse_label_pgm(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RgbImage {
        RgbImage::new(2, 2, vec![255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30]).unwrap()
    }

    #[test]
    fn hand_written_ppm() {
        let mut bytes = b"P6\n# a comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30]);
        let img = parse_ppm(&bytes).unwrap();
        assert_eq!(img, tiny());
        assert_eq!(img.pixel(1, 1), [10, 20, 30]);
    }

    #[test]
    fn ppm_round_trip() {
        let img = RgbImage::from_fn(5, 7, |y, x| [(y * 40) as u8, (x * 30) as u8, 77]).unwrap();
        assert_eq!(parse_ppm(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn png_matches_ppm() {
        let img = tiny();
        let dir = tempfile::tempdir().unwrap();
        let (ppm, png) = (dir.path().join("a.ppm"), dir.path().join("a.png"));
        save_image(&img, &ppm).unwrap();
        save_image(&img, &png).unwrap();
        assert_eq!(load_image(&png).unwrap(), load_image(&ppm).unwrap());
    }

    #[test]
    fn malformed_files_report_offsets() {
        match parse_ppm(b"P6\n2 x\n255\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        match parse_ppm(b"P6\n2 2\n255\n\x01\x02") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 13),
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(parse_ppm(b"P6\n1 1\n300\n\x01\x2d\x00\x00\x00\x00"), Err(Error::Parse { offset: 11, .. })));
    }

    #[test]
    fn low_maxval_rescaled() {
        let img = parse_ppm(b"P6 1 1 15 \x0f\x00\x07").unwrap();
        assert_eq!(img.pixel(0, 0), [255, 0, 119]);
    }

    #[test]
    fn label_pgm_round_trip() {
        let m = LabelMap::from_fn(3, 4, |y, x| y * 4 + x).unwrap();
        let bytes = encode_label_pgm(&m).unwrap();
        assert!(bytes.starts_with(b"P2\n4 3\n11\n"));
        assert_eq!(parse_label_pgm(&bytes).unwrap(), m);
        let one = LabelMap::new(1, 2, vec![0, 0]).unwrap();
        assert_eq!(encode_label_pgm(&one).unwrap(), b"P2\n2 1\n1\n0 0\n");
        let p5 = parse_label_pgm(b"P5\n2 1\n255\n\x03\x07").unwrap();
        assert_eq!(p5.labels(), &[3, 7]);
    }

    #[test]
    fn overlay_marks_boundaries() {
        let img = RgbImage::from_fn(2, 3, |_, _| [9, 9, 9]).unwrap();
        let labels = LabelMap::from_fn(2, 3, |_, x| usize::from(x == 2)).unwrap();
        let out = overlay(&img, &labels).unwrap();
        assert_eq!(out.pixel(0, 1), BOUNDARY_COLOR);
        assert_eq!(out.pixel(1, 1), BOUNDARY_COLOR);
        assert_eq!(out.pixel(0, 0), [9, 9, 9]);
        assert_eq!(out.pixel(0, 2), [9, 9, 9]);
        assert!(save_overlay(&img, &labels, "x.bmp").is_err());
    }
}
