//! Binary PGM (P5) images and the word-image corpus manifest.
//!
//! A corpus is a directory holding grayscale PGM files and a UTF-8 manifest
//! with one `word<TAB>writer_id<TAB>filename` record per line. Filenames are
//! relative to the manifest's directory; blank lines and `#` lines are skipped.

use std::path::{Path, PathBuf};

use super::{Charset, DataError, GlyphImage};

/// Encodes as P5 with maxval 255. PGM stores ink as dark, so values are inverted.
pub fn encode_pgm(image: &GlyphImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.to_bytes().into_iter().map(|b| 255 - b));
    out
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String, DataError> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(DataError::Pgm("header ends early".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GlyphImage, DataError> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    if magic != "P5" {
        return Err(DataError::Pgm(format!("expected P5, found {magic:?}")));
    }
    let mut number = |what: &str| -> Result<usize, DataError> {
        let tok = header_token(bytes, &mut pos)?;
        tok.parse().map_err(|_| DataError::Pgm(format!("bad {what}: {tok:?}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(DataError::Pgm(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..pos + width * height).ok_or(DataError::TruncatedFile {
        expected: pos + width * height,
        got: bytes.len(),
    })?;
    let scale = maxval as f32;
    let px = raster
        .iter()
        .map(|&b| (maxval as f32 - (b as f32).min(scale)) / scale)
        .collect();
    GlyphImage::new(height, width, px)
}

pub fn read_pgm(path: &Path) -> Result<GlyphImage, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: &Path, image: &GlyphImage) -> Result<(), DataError> {
    std::fs::write(path, encode_pgm(image)).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub word: String,
    pub writer_id: String,
    pub file: PathBuf,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, DataError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(DataError::Manifest {
                line: n + 1,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(DataError::Manifest {
                line: n + 1,
                reason: "empty word".into(),
            });
        }
        out.push(ManifestEntry {
            word: fields[0].to_string(),
            writer_id: fields[1].to_string(),
            file: PathBuf::from(fields[2]),
        });
    }
    Ok(out)
}

/// A word image from the handwriting corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusRecord {
    pub word: String,
    pub image: GlyphImage,
    pub writer_id: String,
}

/// Reads the manifest and every referenced image; words must be non-empty and
/// drawn from `charset`.
pub fn load_corpus(manifest: &Path, charset: &Charset) -> Result<Vec<CorpusRecord>, DataError> {
    let text = std::fs::read_to_string(manifest).map_err(|e| DataError::Io(format!("{}: {e}", manifest.display())))?;
    let root = manifest.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text)?
        .into_iter()
        .enumerate()
        .map(|(i, entry)| {
            charset.encode(&entry.word).map_err(|_| DataError::Manifest {
                line: i + 1,
                reason: format!(
                    "word {:?} has characters outside the {} charset",
                    entry.word,
                    charset.kind()
                ),
            })?;
            Ok(CorpusRecord {
                image: read_pgm(&root.join(&entry.file))?,
                word: entry.word,
                writer_id: entry.writer_id,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let img = GlyphImage::from_bytes(2, 3, &[0, 10, 255, 128, 1, 2]).unwrap();
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn pgm_header_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_rejects_p2_and_truncation() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(matches!(
            decode_pgm(b"P5\n4 4\n255\n\x00"),
            Err(DataError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn manifest_lines() {
        let m = parse_manifest("# corpus\nthe\tw1\tthe_0.pgm\n\nfox\tw2\tsub/fox.pgm\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].file, PathBuf::from("sub/fox.pgm"));
        assert!(parse_manifest("the w1 the.pgm\n").is_err());
        assert!(parse_manifest("\tw1\tx.pgm\n").is_err());
    }
}
