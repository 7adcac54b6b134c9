//! `FRST v1` raster files and CSV manifests.
//!
//! Layout of an FRST file: the magic `FRST0001`, little-endian `u32` height,
//! width and band count, a `u8` mask flag, `bands * height * width` `f32`
//! values (band-sequential, row-major), then the same number of `u8` validity
//! flags when the mask flag is set.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{FusionError, Result};
use crate::raster::{Day, RasterImage};
use crate::scalar::Scalar;

pub const FRST_MAGIC: &[u8; 8] = b"FRST0001";
const HEADER_LEN: usize = 8 + 4 * 3 + 1;

pub fn encode_frst<T: Scalar>(image: &RasterImage<T>) -> Vec<u8> {
    let n = image.values().len();
    let has_mask = image.valid_mask().is_some();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n + if has_mask { n } else { 0 });
    out.extend_from_slice(FRST_MAGIC);
    for dim in [image.height(), image.width(), image.bands()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.push(has_mask as u8);
    for v in image.values() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    if let Some(mask) = image.valid_mask() {
        out.extend(mask.iter().map(|&ok| ok as u8));
    }
    out
}

pub fn decode_frst<T: Scalar>(bytes: &[u8], date: Day, modality: &str) -> Result<RasterImage<T>> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != FRST_MAGIC {
        return Err(FusionError::Data("not an FRST v1 raster".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (height, width, bands) = (dim(0), dim(1), dim(2));
    let has_mask = match bytes[20] {
        0 => false,
        1 => true,
        other => return Err(FusionError::Data(format!("bad FRST mask flag {other}"))),
    };
    let n = height * width * bands;
    let expected = HEADER_LEN + 4 * n + if has_mask { n } else { 0 };
    if bytes.len() != expected {
        return Err(FusionError::Dimension { what: "FRST byte length vs header", a: bytes.len(), b: expected });
    }
    let body = &bytes[HEADER_LEN..HEADER_LEN + 4 * n];
    let values: Vec<T> = body
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    let image = RasterImage::new(height, width, bands, values, date, modality)?;
    if has_mask {
        let mask = bytes[HEADER_LEN + 4 * n..].iter().map(|&b| b != 0).collect();
        image.with_mask(mask)
    } else {
        Ok(image)
    }
}

pub fn write_frst<T: Scalar>(path: &Path, image: &RasterImage<T>) -> Result<()> {
    fs::write(path, encode_frst(image)).map_err(|e| FusionError::io(path, e))
}

pub fn read_frst<T: Scalar>(path: &Path, date: Day, modality: &str) -> Result<RasterImage<T>> {
    let bytes = fs::read(path).map_err(|e| FusionError::io(path, e))?;
    decode_frst(&bytes, date, modality).map_err(|e| FusionError::Data(format!("{}: {e}", path.display())))
}

/// Reads a single-band FRST raster of integer quality codes (0 = ideal).
pub fn read_qa_codes(path: &Path) -> Result<Vec<u32>> {
    let img: RasterImage<f64> = read_frst(path, Day(0), "qa")?;
    Ok(img.values().iter().map(|&v| v.round().max(0.0) as u32).collect())
}

pub fn write_qa_codes(path: &Path, height: usize, width: usize, codes: &[u32]) -> Result<()> {
    let values = codes.iter().map(|&c| c as f64).collect();
    write_frst(path, &RasterImage::new(height, width, 1, values, Day(0), "qa")?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub date: Day,
    pub modality: String,
    pub path: PathBuf,
    pub mask_path: Option<PathBuf>,
}

pub const MANIFEST_HEADER: [&str; 4] = ["date", "modality", "path", "mask_path"];

/// Reads a manifest; relative paths are resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let csv_err = |source| FusionError::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => FusionError::Config(format!("cannot open manifest {}: {e}", path.display())),
            _ => csv_err(e),
        })?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(FusionError::Data(format!("{}: manifest header must be {}", path.display(), MANIFEST_HEADER.join(","))));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let resolve = |p: &str| -> PathBuf {
            let p = Path::new(p);
            if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
        };
        let mask = record.get(3).unwrap_or("");
        rows.push(ManifestRow {
            date: record[0].parse()?,
            modality: record[1].to_string(),
            path: resolve(&record[2]),
            mask_path: if mask.is_empty() { None } else { Some(resolve(mask)) },
        });
    }
    Ok(rows)
}

/// Writes a manifest. Paths are written as given, so callers pass paths
/// relative to the manifest's directory.
pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let csv_err = |source| FusionError::Csv { path: path.to_path_buf(), source };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(MANIFEST_HEADER).map_err(csv_err)?;
    for row in rows {
        let mask = row.mask_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        writer
            .write_record([row.date.to_string(), row.modality.clone(), row.path.display().to_string(), mask])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| FusionError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let img = RasterImage::new(1, 2, 1, vec![0.5f64, 1.0], Day(0), "m").unwrap();
        let bytes = encode_frst(&img);
        let mut expected = b"FRST0001".to_vec();
        expected.extend([1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 0]);
        expected.extend(0.5f32.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn mask_flags_follow_values() {
        let img = RasterImage::new(1, 2, 1, vec![0.5f64, 1.0], Day(0), "m").unwrap().with_mask(vec![true, false]).unwrap();
        let bytes = encode_frst(&img);
        assert_eq!(bytes[20], 1);
        assert_eq!(&bytes[bytes.len() - 2..], &[1, 0]);
        let back: RasterImage<f64> = decode_frst(&bytes, Day(0), "m").unwrap();
        assert_eq!(back.valid_mask(), Some(&[true, false][..]));
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        let img = RasterImage::new(2, 2, 1, vec![0.1f64; 4], Day(0), "m").unwrap();
        let bytes = encode_frst(&img);
        assert!(decode_frst::<f64>(&bytes[..bytes.len() - 1], Day(0), "m").is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_frst::<f64>(&bad, Day(0), "m").is_err());
    }

    #[test]
    fn manifest_round_trip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            ManifestRow { date: "2018-07-03".parse().unwrap(), modality: "landsat".into(), path: "a.frst".into(), mask_path: None },
            ManifestRow { date: "2018-07-09".parse().unwrap(), modality: "modis".into(), path: "b.frst".into(), mask_path: Some("b_qa.frst".into()) },
        ];
        let path = dir.path().join("m.csv");
        write_manifest(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("date,modality,path,mask_path\n2018-07-03,landsat,a.frst,\n"));
        let back = read_manifest(&path).unwrap();
        assert_eq!(back[0].path, dir.path().join("a.frst"));
        assert_eq!(back[1].mask_path, Some(dir.path().join("b_qa.frst")));
        assert_eq!(back[1].date.to_string(), "2018-07-09");
    }

    proptest! {
        #[test]
        fn f32_values_survive_encoding(values in proptest::collection::vec(0.0f32..1.0, 12)) {
            let img = RasterImage::new(2, 3, 2, values.iter().map(|&v| v as f64).collect(), Day(0), "m").unwrap();
            let back: RasterImage<f64> = decode_frst(&encode_frst(&img), Day(0), "m").unwrap();
            prop_assert_eq!(back, img);
        }
    }
}
