//! On-disk dataset layout.
//!
//! ```text
//! <root>/train/manifest.csv   filename,label,seed
//! <root>/train/00000.pgm      binary PGM (P5, maxval 255, pixels 0 or 255)
//! <root>/test/...
//! ```

use std::path::Path;

use super::{BinaryImage, CurveSample, Label};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.csv";
pub const SPLITS: [&str; 2] = ["train", "test"];

pub fn encode_pgm(image: &BinaryImage) -> Vec<u8> {
    let n = image.size();
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(image.pixels().iter().map(|&p| p * 255));
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::Format("non-ASCII PGM header".into()))
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse().map_err(|_| Error::Format(format!("bad PGM header field `{t}`")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<BinaryImage> {
    let mut h = Header { bytes, pos: 0 };
    if h.token()? != "P5" {
        return Err(Error::Format("not a binary PGM (expected P5)".into()));
    }
    let (width, height, maxval) = (h.number()?, h.number()?, h.number()?);
    if width != height || width == 0 {
        return Err(Error::Format(format!("expected a square image, got {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::Format(format!("expected maxval 255, got {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = bytes
        .get(h.pos + 1..)
        .ok_or_else(|| Error::Format("PGM has no raster".into()))?;
    if data.len() != width * height {
        return Err(Error::Format(format!(
            "PGM raster has {} bytes, expected {}",
            data.len(),
            width * height
        )));
    }
    let pixels = data
        .iter()
        .map(|&v| match v {
            0 => Ok(0),
            255 => Ok(1),
            _ => Err(Error::Format(format!("non-binary pixel value {v}"))),
        })
        .collect::<Result<Vec<u8>>>()?;
    BinaryImage::from_pixels(width, pixels)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `samples` as numbered PGM files plus a manifest into `dir`.
pub fn write_split(dir: &Path, samples: &[CurveSample]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(MANIFEST);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&manifest)
        .map_err(|e| csv_error(&manifest, e))?;
    w.write_record(["filename", "label", "seed"]).map_err(|e| csv_error(&manifest, e))?;
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:05}.pgm");
        let path = dir.join(&name);
        std::fs::write(&path, encode_pgm(&s.image)).map_err(|e| Error::io(&path, e))?;
        w.write_record([name, s.label.index().to_string(), s.seed.to_string()])
            .map_err(|e| csv_error(&manifest, e))?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))
}

/// Reads a split written by [`write_split`]. Accepts LF and CRLF manifests.
pub fn read_split(dir: &Path) -> Result<Vec<CurveSample>> {
    let manifest = dir.join(MANIFEST);
    let file = std::fs::File::open(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers().map_err(|e| csv_error(&manifest, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["filename", "label", "seed"] {
        return Err(Error::Format(format!(
            "{}: expected header filename,label,seed",
            manifest.display()
        )));
    }
    let mut samples = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(&manifest, e))?;
        let bad = |what: &str| Error::Format(format!("{} row {}: bad {what}", manifest.display(), line + 2));
        let name = &record[0];
        if name.is_empty() || name.contains(['/', '\\']) || name == ".." {
            return Err(bad("filename"));
        }
        let label = record[1]
            .parse::<usize>()
            .ok()
            .and_then(|l| Label::from_index(l).ok())
            .ok_or_else(|| bad("label"))?;
        let seed = record[2].parse::<u64>().map_err(|_| bad("seed"))?;
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let image = decode_pgm(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        samples.push(CurveSample { image, label, seed });
    }
    if let Some(first) = samples.first() {
        if samples.iter().any(|s| s.image.size() != first.image.size()) {
            return Err(Error::Format(format!("{}: mixed image sizes", dir.display())));
        }
    }
    Ok(samples)
}

pub fn write_dataset(root: &Path, train: &[CurveSample], test: &[CurveSample]) -> Result<()> {
    write_split(&root.join(SPLITS[0]), train)?;
    write_split(&root.join(SPLITS[1]), test)
}

pub fn read_dataset(root: &Path) -> Result<(Vec<CurveSample>, Vec<CurveSample>)> {
    Ok((read_split(&root.join(SPLITS[0]))?, read_split(&root.join(SPLITS[1]))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvegen::{generate_samples, AugmentParams};

    #[test]
    fn pgm_roundtrip_and_header_parsing() {
        let mut img = BinaryImage::zeros(3);
        img.set(0, 2);
        img.set(2, 1);
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n3 3\n255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), img);

        let mut commented = b"P5 # made by hand\n3\t3\n# comment\n255\n".to_vec();
        commented.extend_from_slice(&bytes[bytes.len() - 9..]);
        assert_eq!(decode_pgm(&commented).unwrap(), img);
    }

    #[test]
    fn pgm_rejections() {
        let img = BinaryImage::zeros(2);
        let good = encode_pgm(&img);
        assert!(decode_pgm(&good[..good.len() - 1]).is_err());
        assert!(decode_pgm(b"P2\n2 2\n255\n0 0 0 0").is_err());
        assert!(decode_pgm(b"P5\n2 3\n255\n\0\0\0\0\0\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n1\n\0\0\0\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0\x80\0\0").is_err());
    }

    #[test]
    fn split_roundtrip_and_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let (train, test) = generate_samples(4, 2, 24, &AugmentParams::default(), 1).unwrap();
        write_dataset(dir.path(), &train, &test).unwrap();
        let (rt, rs) = read_dataset(dir.path()).unwrap();
        assert_eq!((rt, rs), (train.clone(), test));

        let manifest = dir.path().join("train").join(MANIFEST);
        let text = std::fs::read_to_string(&manifest).unwrap();
        assert!(text.starts_with("filename,label,seed\n00000.pgm,0,"));
        assert!(!text.contains('\r'));
        std::fs::write(&manifest, text.replace('\n', "\r\n")).unwrap();
        assert_eq!(read_split(&dir.path().join("train")).unwrap(), train);
    }

    #[test]
    fn corrupt_manifest_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MANIFEST), "filename,label,seed\n00000.pgm,7,1\n").unwrap();
        assert!(matches!(read_split(dir.path()), Err(Error::Format(_))));
        std::fs::write(dir.path().join(MANIFEST), "name,label\n").unwrap();
        assert!(matches!(read_split(dir.path()), Err(Error::Format(_))));
        std::fs::write(dir.path().join(MANIFEST), "filename,label,seed\n../x.pgm,0,1\n").unwrap();
        assert!(matches!(read_split(dir.path()), Err(Error::Format(_))));
        assert!(matches!(read_split(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
