use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::PointCloud;
use crate::error::{Error, Result};

const KITTI_STRIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanFormat {
    /// Packed little-endian `f32` quadruples `(x, y, z, intensity)`.
    KittiBin,
    /// UTF-8 text, one `x y z r g b` point per line.
    AsciiXyzrgb,
}

impl ScanFormat {
    /// Guesses the format from a `.bin` or `.xyzrgb` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "bin" => Some(ScanFormat::KittiBin),
            "xyzrgb" => Some(ScanFormat::AsciiXyzrgb),
            _ => None,
        }
    }
}

impl FromStr for ScanFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kitti_bin" | "bin" => Ok(ScanFormat::KittiBin),
            "ascii_xyzrgb" | "xyzrgb" => Ok(ScanFormat::AsciiXyzrgb),
            other => Err(Error::validation(format!(
                "unknown scan format {other:?} (expected kitti_bin or ascii_xyzrgb)"
            ))),
        }
    }
}

fn scan_id_of(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .map(|s| s.replace(char::is_whitespace, "_"))
        .unwrap_or_else(|| "scan".to_string())
}

/// Reads a scan; the scan id is the file stem.
pub fn load_scan(path: impl AsRef<Path>, format: ScanFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let scan_id = scan_id_of(path);
    match format {
        ScanFormat::KittiBin => decode_kitti(&scan_id, &bytes),
        ScanFormat::AsciiXyzrgb => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| Error::format(format!("{}: not UTF-8: {e}", path.display())))?;
            parse_xyzrgb(&scan_id, text)
        }
    }
}

pub(crate) fn decode_kitti(scan_id: &str, bytes: &[u8]) -> Result<PointCloud> {
    if bytes.is_empty() {
        return Err(Error::format("empty scan file"));
    }
    if !bytes.len().is_multiple_of(KITTI_STRIDE) {
        return Err(Error::format(format!(
            "truncated kitti scan: {} bytes is not a multiple of {KITTI_STRIDE}",
            bytes.len()
        )));
    }
    let n = bytes.len() / KITTI_STRIDE;
    let mut positions = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(KITTI_STRIDE) {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4 bytes"));
        positions.push([f(0), f(1), f(2)]);
        intensity.push(f(3));
    }
    PointCloud::new(scan_id, positions, None, Some(intensity))
}

pub(crate) fn parse_xyzrgb(scan_id: &str, text: &str) -> Result<PointCloud> {
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 6 {
            return Err(Error::format(format!(
                "line {}: expected 6 values, found {}",
                lineno + 1,
                tokens.len()
            )));
        }
        let mut p = [0f32; 3];
        for (k, tok) in tokens[..3].iter().enumerate() {
            p[k] = tok.parse::<f32>().map_err(|_| {
                Error::format(format!("line {}: non-numeric token {tok:?}", lineno + 1))
            })?;
        }
        let mut c = [0u8; 3];
        for (k, tok) in tokens[3..].iter().enumerate() {
            let v = tok.parse::<f64>().map_err(|_| {
                Error::format(format!("line {}: non-numeric token {tok:?}", lineno + 1))
            })?;
            if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                return Err(Error::format(format!(
                    "line {}: color value {tok} outside 0-255",
                    lineno + 1
                )));
            }
            c[k] = v as u8;
        }
        positions.push(p);
        colors.push(c);
    }
    if positions.is_empty() {
        return Err(Error::format("empty scan file"));
    }
    PointCloud::new(scan_id, positions, Some(colors), None)
        .map_err(|e| Error::format(e.to_string()))
}

pub(crate) fn encode_kitti(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * KITTI_STRIDE);
    for (i, p) in cloud.positions().iter().enumerate() {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let intensity = cloud.intensity().map_or(0.0, |v| v[i]);
        out.extend_from_slice(&intensity.to_le_bytes());
    }
    out
}

pub(crate) fn format_xyzrgb(cloud: &PointCloud) -> Result<String> {
    let colors = cloud
        .colors()
        .ok_or_else(|| Error::validation("ascii_xyzrgb output needs per-point colors"))?;
    let mut out = String::with_capacity(cloud.len() * 32);
    for (p, c) in cloud.positions().iter().zip(colors) {
        // `{}` on f32 prints the shortest string that parses back to the same bits
        writeln!(out, "{} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2])
            .expect("string write");
    }
    Ok(out)
}

pub fn write_scan(path: impl AsRef<Path>, cloud: &PointCloud, format: ScanFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        ScanFormat::KittiBin => encode_kitti(cloud),
        ScanFormat::AsciiXyzrgb => format_xyzrgb(cloud)?.into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_kitti_record_decodes_to_origin() {
        let cloud = decode_kitti("z", &[0u8; 32]).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.positions(), &[[0.0; 3]; 2]);
        assert_eq!(cloud.intensity().unwrap(), &[0.0, 0.0]);
        assert!(!cloud.has_colors());
    }

    #[test]
    fn kitti_errors() {
        assert!(decode_kitti("z", &[]).is_err());
        let err = decode_kitti("z", &[0u8; 20]).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn xyzrgb_line_decodes_with_unit_color() {
        let cloud = parse_xyzrgb("a", "1.0 2.0 3.0 255 0 0\n").unwrap();
        assert_eq!(cloud.positions(), &[[1.0, 2.0, 3.0]]);
        assert_eq!(cloud.color_unit(0).unwrap(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn xyzrgb_errors() {
        assert!(parse_xyzrgb("a", "").is_err());
        assert!(parse_xyzrgb("a", "1 2 x 0 0 0")
            .unwrap_err()
            .to_string()
            .contains("non-numeric"));
        assert!(parse_xyzrgb("a", "1 2 3 256 0 0")
            .unwrap_err()
            .to_string()
            .contains("0-255"));
        assert!(parse_xyzrgb("a", "1 2 3 -1 0 0").is_err());
        assert!(parse_xyzrgb("a", "1 2 3 0 0").is_err());
    }

    #[test]
    fn random_scans_round_trip_bitwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let positions: Vec<[f32; 3]> = (0..1000)
            .map(|_| {
                [
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-3.0..3.0),
                ]
            })
            .collect();
        let colors: Vec<[u8; 3]> = (0..1000)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let intensity: Vec<f32> = (0..1000).map(|_| rng.random_range(0.0..1.0)).collect();

        let dir = tempfile::tempdir().unwrap();
        let bin = PointCloud::new("r", positions.clone(), None, Some(intensity)).unwrap();
        let p = dir.path().join("r.bin");
        write_scan(&p, &bin, ScanFormat::KittiBin).unwrap();
        assert_eq!(load_scan(&p, ScanFormat::KittiBin).unwrap(), bin);

        let txt = PointCloud::new("r", positions, Some(colors), None).unwrap();
        let p = dir.path().join("r.xyzrgb");
        write_scan(&p, &txt, ScanFormat::AsciiXyzrgb).unwrap();
        let back = load_scan(&p, ScanFormat::AsciiXyzrgb).unwrap();
        let same = back
            .positions()
            .iter()
            .flatten()
            .zip(txt.positions().iter().flatten())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);
        assert_eq!(back.colors(), txt.colors());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(
            ScanFormat::from_path(Path::new("a/b.bin")),
            Some(ScanFormat::KittiBin)
        );
        assert_eq!(
            ScanFormat::from_path(Path::new("b.xyzrgb")),
            Some(ScanFormat::AsciiXyzrgb)
        );
        assert_eq!(ScanFormat::from_path(Path::new("b.ply")), None);
    }
}
