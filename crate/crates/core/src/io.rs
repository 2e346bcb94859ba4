//! Reading and writing frame sequences.
//!
//! Three on-disk layouts are supported:
//!
//! * `pgm`: a directory of binary (P5) PGM files with zero-padded numeric names.
//! * `png`: the same with 8- or 16-bit grayscale PNG files.
//! * `raw`: one file of concatenated row-major frames. 16-bit samples are
//!   little-endian. A TOML sidecar named `<file>.toml` carries
//!   `width`, `height`, `fps`, `bit_depth` and `frame_count`.
//!
//! Image directories may carry an optional `sequence.toml` sidecar with the
//! same keys; without it the frame rate defaults to [`DEFAULT_FPS`].

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{RawFrame, StreamHeader};

/// Frame rate assumed for image directories without a sidecar.
pub const DEFAULT_FPS: f64 = 30.0;

/// Sidecar file name inside image-sequence directories.
pub const SEQUENCE_SIDECAR: &str = "sequence.toml";

/// Prefix for frames written by [`SequenceWriter`].
pub const FRAME_PREFIX: &str = "frame";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceFormat {
    Pgm,
    Png,
    Raw,
}

impl SequenceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SequenceFormat::Pgm => "pgm",
            SequenceFormat::Png => "png",
            SequenceFormat::Raw => "raw",
        }
    }

    /// Guesses the layout of an existing path: files are raw-planar,
    /// directories are PGM unless they only hold PNG files.
    pub fn detect(path: &Path) -> Result<Self> {
        let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
        if meta.is_file() {
            return Ok(SequenceFormat::Raw);
        }
        let files = list_with_extension(path, "pgm")?;
        if !files.is_empty() {
            return Ok(SequenceFormat::Pgm);
        }
        let files = list_with_extension(path, "png")?;
        if !files.is_empty() {
            return Ok(SequenceFormat::Png);
        }
        Err(Error::Format {
            path: path.to_path_buf(),
            reason: "directory holds no .pgm or .png frames".into(),
        })
    }
}

impl FromStr for SequenceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" | "pgm-sequence" => Ok(SequenceFormat::Pgm),
            "png" | "png-sequence" => Ok(SequenceFormat::Png),
            "raw" | "raw-planar" => Ok(SequenceFormat::Raw),
            other => Err(Error::Parameter(format!(
                "unknown sequence format `{other}` (expected pgm, png or raw)"
            ))),
        }
    }
}

/// Path of the sidecar header for a raw-planar file.
pub fn raw_sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".toml");
    PathBuf::from(name)
}

fn sidecar_path(path: &Path, format: SequenceFormat) -> PathBuf {
    match format {
        SequenceFormat::Raw => raw_sidecar_path(path),
        _ => path.join(SEQUENCE_SIDECAR),
    }
}

pub fn read_header(path: &Path) -> Result<StreamHeader> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == ErrorKind::NotFound {
            Error::MissingHeader(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let header: StreamHeader = toml::from_str(&text).map_err(|e| Error::BadHeader {
        path: path.to_path_buf(),
        reason: e.to_string().trim().replace('\n', " "),
    })?;
    header.validate().map_err(|e| Error::BadHeader {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(header)
}

pub fn write_header(path: &Path, header: &StreamHeader) -> Result<()> {
    let text = toml::to_string(header).map_err(|e| Error::Parameter(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn list_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(ext));
        if matches && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by_cached_key(|p| (trailing_number(p), p.clone()));
    Ok(files)
}

/// The numeric suffix of a file stem (`frame_000042` -> 42).
pub fn trailing_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Lazily reads a frame sequence in index order.
///
/// Frames are produced one at a time; the whole sequence is never held in
/// memory.
pub struct FrameReader {
    header: StreamHeader,
    source: Source,
    next_index: u64,
    failed: bool,
}

enum Source {
    Images {
        files: std::vec::IntoIter<PathBuf>,
        format: SequenceFormat,
    },
    Raw {
        path: PathBuf,
        reader: BufReader<File>,
        offset: u64,
        remaining: Option<u64>,
        buf: Vec<u8>,
    },
}

impl FrameReader {
    pub fn open(path: impl AsRef<Path>, format: SequenceFormat) -> Result<Self> {
        let path = path.as_ref();
        match format {
            SequenceFormat::Raw => Self::open_raw(path),
            _ => Self::open_images(path, format),
        }
    }

    /// Opens `path` with a format guessed by [`SequenceFormat::detect`].
    pub fn open_auto(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::open(path, SequenceFormat::detect(path)?)
    }

    fn open_raw(path: &Path) -> Result<Self> {
        let header = read_header(&raw_sidecar_path(path))?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let frame_bytes = header.pixels() * bytes_per_sample(header.bit_depth);
        Ok(FrameReader {
            source: Source::Raw {
                path: path.to_path_buf(),
                reader: BufReader::with_capacity(frame_bytes.clamp(8192, 1 << 22), file),
                offset: 0,
                remaining: header.frame_count,
                buf: vec![0; frame_bytes],
            },
            header,
            next_index: 0,
            failed: false,
        })
    }

    fn open_images(dir: &Path, format: SequenceFormat) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(ErrorKind::NotFound, "not a directory"),
            ));
        }
        let files = list_with_extension(dir, format.extension())?;
        let sidecar = sidecar_path(dir, format);
        let header = if sidecar.exists() {
            let header = read_header(&sidecar)?;
            if let Some(count) = header.frame_count {
                if count != files.len() as u64 {
                    return Err(Error::BadHeader {
                        path: sidecar,
                        reason: format!(
                            "frame_count is {count} but {} .{} files are present",
                            files.len(),
                            format.extension()
                        ),
                    });
                }
            }
            header
        } else {
            let first = files.first().ok_or_else(|| Error::Format {
                path: dir.to_path_buf(),
                reason: format!("no .{} frames found", format.extension()),
            })?;
            let (frame, bit_depth) = read_image(first, format)?;
            StreamHeader {
                width: frame.width(),
                height: frame.height(),
                fps: DEFAULT_FPS,
                frame_count: Some(files.len() as u64),
                bit_depth,
            }
        };
        Ok(FrameReader {
            header,
            source: Source::Images {
                files: files.into_iter(),
                format,
            },
            next_index: 0,
            failed: false,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    fn read_next(&mut self) -> Option<Result<RawFrame>> {
        let header = &self.header;
        let index = self.next_index;
        let data = match &mut self.source {
            Source::Images { files, format } => {
                let path = files.next()?;
                let (frame, depth) = match read_image(&path, *format) {
                    Ok(v) => v,
                    Err(e) => return Some(Err(e)),
                };
                if let Err(e) = frame.check_shape(header.width, header.height) {
                    return Some(Err(match e {
                        Error::DimensionMismatch {
                            width,
                            height,
                            got_width,
                            got_height,
                            ..
                        } => Error::DimensionMismatch {
                            index,
                            width,
                            height,
                            got_width,
                            got_height,
                        },
                        other => other,
                    }));
                }
                if depth > header.bit_depth {
                    return Some(Err(Error::Format {
                        path,
                        reason: format!("{depth}-bit frame in a {}-bit stream", header.bit_depth),
                    }));
                }
                frame.into_data()
            }
            Source::Raw {
                path,
                reader,
                offset,
                remaining,
                buf,
            } => {
                if *remaining == Some(0) {
                    return trailing_bytes(path, reader, *offset).map(Err);
                }
                let got = match read_full(reader, buf) {
                    Ok(n) => n,
                    Err(e) => return Some(Err(Error::io(path.as_path(), e))),
                };
                if got == 0 {
                    if let Some(missing) = remaining.filter(|&r| r > 0) {
                        return Some(Err(Error::Format {
                            path: path.clone(),
                            reason: format!(
                                "header announces {missing} more frame(s) after byte offset {offset}"
                            ),
                        }));
                    }
                    return None;
                }
                if got < buf.len() {
                    return Some(Err(Error::Truncated {
                        path: path.clone(),
                        offset: *offset,
                        available: got,
                        expected: buf.len(),
                    }));
                }
                *offset += got as u64;
                if let Some(r) = remaining.as_mut() {
                    *r -= 1;
                }
                decode_raw(buf, header.bit_depth)
            }
        };
        self.next_index += 1;
        Some(header.frame(index, data))
    }
}

impl Iterator for FrameReader {
    type Item = Result<RawFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.read_next();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

fn trailing_bytes(path: &Path, reader: &mut BufReader<File>, offset: u64) -> Option<Error> {
    match reader.fill_buf() {
        Ok([]) => None,
        Ok(_) => Some(Error::Format {
            path: path.to_path_buf(),
            reason: format!("unexpected data after the announced frames at byte offset {offset}"),
        }),
        Err(e) => Some(Error::io(path, e)),
    }
}

fn read_full(reader: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn bytes_per_sample(bit_depth: u8) -> usize {
    if bit_depth > 8 {
        2
    } else {
        1
    }
}

fn decode_raw(buf: &[u8], bit_depth: u8) -> Vec<u16> {
    if bit_depth > 8 {
        buf.chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect()
    } else {
        buf.iter().map(|&b| u16::from(b)).collect()
    }
}

/// Reads one PGM or PNG image, returning the frame and its bit depth.
pub fn read_image(path: &Path, format: SequenceFormat) -> Result<(RawFrame, u8)> {
    match format {
        SequenceFormat::Pgm => read_pgm(path),
        SequenceFormat::Png => read_png(path),
        SequenceFormat::Raw => Err(Error::Parameter(
            "raw-planar files hold whole sequences, not single images".into(),
        )),
    }
}

fn read_png(path: &Path) -> Result<(RawFrame, u8)> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (data, depth) = match img {
        DynamicImage::ImageLuma8(buf) => (buf.into_raw().into_iter().map(u16::from).collect(), 8),
        DynamicImage::ImageLuma16(buf) => (buf.into_raw(), 16),
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected a grayscale PNG, found {:?}", other.color()),
            })
        }
    };
    Ok((RawFrame::new(w, h, data)?, depth))
}

fn read_pgm(path: &Path) -> Result<(RawFrame, u8)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("not a binary (P5) PGM"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed PGM header"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("malformed PGM header"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("PGM maxval must be in 1..=65535"));
    }
    let wide = maxval > 255;
    let need = width * height * if wide { 2 } else { 1 };
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: pos as u64,
            available: body.len(),
            expected: need,
        });
    }
    let data = if wide {
        body[..need]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        body[..need].iter().map(|&b| u16::from(b)).collect()
    };
    Ok((
        RawFrame::new(width, height, data)?,
        if wide { 16 } else { 8 },
    ))
}

/// Writes one frame as a PGM or PNG image at the given bit depth.
pub fn write_image(
    path: &Path,
    frame: &RawFrame,
    bit_depth: u8,
    format: SequenceFormat,
) -> Result<()> {
    check_range(frame, bit_depth)?;
    match format {
        SequenceFormat::Pgm => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            let maxval = if bit_depth > 8 { 65535 } else { 255 };
            let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
                write!(w, "P5\n{} {}\n{}\n", frame.width(), frame.height(), maxval)?;
                if bit_depth > 8 {
                    for &v in frame.data() {
                        w.write_all(&v.to_be_bytes())?;
                    }
                } else {
                    let bytes: Vec<u8> = frame.data().iter().map(|&v| v as u8).collect();
                    w.write_all(&bytes)?;
                }
                w.flush()
            };
            write(&mut w).map_err(|e| Error::io(path, e))
        }
        SequenceFormat::Png => {
            let (w, h) = (frame.width() as u32, frame.height() as u32);
            let img = if bit_depth > 8 {
                DynamicImage::ImageLuma16(
                    ImageBuffer::<Luma<u16>, _>::from_raw(w, h, frame.data().to_vec())
                        .expect("dimensions checked at construction"),
                )
            } else {
                DynamicImage::ImageLuma8(
                    ImageBuffer::<Luma<u8>, _>::from_raw(
                        w,
                        h,
                        frame.data().iter().map(|&v| v as u8).collect(),
                    )
                    .expect("dimensions checked at construction"),
                )
            };
            save_png(path, &img)
        }
        SequenceFormat::Raw => Err(Error::Parameter(
            "raw-planar files hold whole sequences, not single images".into(),
        )),
    }
}

pub(crate) fn save_png(path: &Path, img: &DynamicImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })
}

fn check_range(frame: &RawFrame, bit_depth: u8) -> Result<()> {
    let max = crate::frame::max_value(bit_depth)?;
    if let Some(i) = frame.data().iter().position(|&v| v > max) {
        return Err(Error::OutOfRange {
            index: frame.index,
            x: i % frame.width(),
            y: i / frame.width(),
            value: f64::from(frame.data()[i]),
            bit_depth,
        });
    }
    Ok(())
}

/// Incrementally writes a frame sequence; [`SequenceWriter::finish`] writes the
/// sidecar header with the final frame count.
pub struct SequenceWriter {
    path: PathBuf,
    format: SequenceFormat,
    header: StreamHeader,
    raw: Option<BufWriter<File>>,
    written: u64,
}

impl SequenceWriter {
    pub fn create(
        path: impl AsRef<Path>,
        format: SequenceFormat,
        header: &StreamHeader,
    ) -> Result<Self> {
        header.validate()?;
        let path = path.as_ref().to_path_buf();
        let raw = match format {
            SequenceFormat::Raw => {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
                Some(BufWriter::new(file))
            }
            _ => {
                fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
                None
            }
        };
        let mut header = header.clone();
        header.frame_count = None;
        Ok(SequenceWriter {
            path,
            format,
            header,
            raw,
            written: 0,
        })
    }

    pub fn write(&mut self, frame: &RawFrame) -> Result<()> {
        frame.check_shape(self.header.width, self.header.height)?;
        check_range(frame, self.header.bit_depth)?;
        match self.raw.as_mut() {
            Some(w) => {
                let res = if self.header.bit_depth > 8 {
                    let bytes: Vec<u8> =
                        frame.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                    w.write_all(&bytes)
                } else {
                    let bytes: Vec<u8> = frame.data().iter().map(|&v| v as u8).collect();
                    w.write_all(&bytes)
                };
                res.map_err(|e| Error::io(&self.path, e))?;
            }
            None => {
                let name = format!(
                    "{FRAME_PREFIX}_{:06}.{}",
                    self.written,
                    self.format.extension()
                );
                write_image(
                    &self.path.join(name),
                    frame,
                    self.header.bit_depth,
                    self.format,
                )?;
            }
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<StreamHeader> {
        if let Some(w) = self.raw.as_mut() {
            w.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        self.header.frame_count = Some(self.written);
        write_header(&sidecar_path(&self.path, self.format), &self.header)?;
        Ok(self.header)
    }
}

/// Opens a sequence for lazy, in-order reading.
pub fn read_frame_sequence(path: impl AsRef<Path>, format: SequenceFormat) -> Result<FrameReader> {
    FrameReader::open(path, format)
}

/// Writes a whole sequence and its sidecar header.
pub fn write_frame_sequence<I>(
    header: &StreamHeader,
    frames: I,
    path: impl AsRef<Path>,
    format: SequenceFormat,
) -> Result<StreamHeader>
where
    I: IntoIterator<Item = RawFrame>,
{
    let mut writer = SequenceWriter::create(path, format, header)?;
    for frame in frames {
        writer.write(&frame)?;
    }
    writer.finish()
}
